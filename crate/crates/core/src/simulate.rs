//! Monte Carlo from a fitted model: forward simulation from a threshold
//! exceedance, and the union-mixture importance sampler for events of the
//! form "some value in the block exceeds v".

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::dists::{CopulaFactor, DeltaLaplace, ResidualCopula};
use crate::error::{Error, Result};
use crate::fit::{FittedConditionalModel, ResidualModel, ResidualStore, Side};
use crate::norming::{norm_scale, Model};
use crate::rng::{derive_seed, par_map, substream, StreamRng};

/// Point estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bar: Option<f64>,
    /// `s_histogram[s]` counts samples with `S = s` exceedances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_histogram: Option<Vec<usize>>,
}

impl EstimateReport {
    pub fn new(estimate: f64, std_error: f64, n: usize, seed: u64) -> Self {
        Self {
            estimate,
            std_error,
            n,
            seed,
            p_bar: None,
            s_histogram: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSource {
    EmpiricalJoint,
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Target threshold on the Laplace scale.
    pub v: f64,
    /// Block length.
    pub d: usize,
    /// `None` uses whatever the fit provides.
    #[serde(default)]
    pub residual_source: Option<ResidualSource>,
    #[serde(default = "one")]
    pub threads: usize,
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn new(n_samples: usize, seed: u64, v: f64, d: usize) -> Self {
        Self {
            n_samples,
            seed,
            v,
            d,
            residual_source: None,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::input("n_samples must be positive"));
        }
        if self.d == 0 {
            return Err(Error::input("block length d must be positive"));
        }
        if !self.v.is_finite() {
            return Err(Error::input("threshold v must be finite"));
        }
        Ok(())
    }

    /// Checks against a fit: `v ≥ u` and a matching residual source.
    pub fn validate_for(&self, fit: &FittedConditionalModel) -> Result<()> {
        self.validate()?;
        if self.v < fit.u {
            return Err(Error::input(format!(
                "target threshold v = {} lies below the fit threshold u = {}",
                self.v, fit.u
            )));
        }
        let source = if fit.is_parametric() {
            ResidualSource::Parametric
        } else {
            ResidualSource::EmpiricalJoint
        };
        match self.residual_source {
            Some(s) if s != source => Err(Error::input(format!(
                "fit provides {source:?} residuals, config asks for {s:?}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Conditional law of the neighbours of one value `x`. Implemented by
/// fitted models and by exact samplers of known chains.
pub trait ConditionalSampler: Sync {
    /// Fills `backward` with `X_{j-1}, …, X_{j-before}` and `forward` with
    /// `X_{j+1}, …, X_{j+after}` given `X_j = x`.
    fn sample_given(
        &self,
        x: f64,
        before: usize,
        after: usize,
        rng: &mut StreamRng,
        backward: &mut Vec<f64>,
        forward: &mut Vec<f64>,
    );
}

enum Source<'a> {
    Empirical {
        store: &'a ResidualStore,
        fwd_avail: Vec<usize>,
        bwd_avail: Vec<usize>,
    },
    Parametric {
        factor: CopulaFactor,
        margins: Vec<DeltaLaplace>,
    },
}

struct SideNorming {
    model: Model,
    beta: f64,
    alphas: Vec<f64>,
}

/// Sampler backed by a fitted model, prepared for up to `max_before`
/// backward and `max_after` forward lags.
pub struct FitSampler<'a> {
    forward: SideNorming,
    backward: Option<SideNorming>,
    source: Source<'a>,
}

impl<'a> FitSampler<'a> {
    pub fn new(fit: &'a FittedConditionalModel, max_before: usize, max_after: usize) -> Result<Self> {
        let side = |s: Side, len: usize| -> Result<SideNorming> {
            let spec = fit.norming.side(s);
            Ok(SideNorming {
                model: spec.model,
                beta: spec.beta,
                alphas: spec.alphas(len).map_err(|e| {
                    Error::input(format!("cannot extend norming to {len} lags: {e}"))
                })?,
            })
        };
        let forward = side(Side::Forward, max_after)?;
        let backward = if max_before > 0 {
            if fit.direction() != crate::fit::Direction::BackwardForward {
                return Err(Error::input("backward lags need a backward-forward fit"));
            }
            Some(side(Side::Backward, max_before)?)
        } else {
            None
        };
        let source = match &fit.residuals {
            ResidualModel::Empirical { residual_store, .. } => {
                if max_after > fit.k || max_before > fit.k {
                    return Err(Error::input(format!(
                        "empirical residuals cover {} lags; {} requested",
                        fit.k,
                        max_after.max(max_before)
                    )));
                }
                let avail = |rows: &[Vec<Option<f64>>]| -> Vec<usize> {
                    rows.iter()
                        .map(|r| r.iter().take_while(|v| v.is_some()).count())
                        .collect()
                };
                let fwd_avail = avail(&residual_store.forward);
                let bwd_avail = avail(&residual_store.backward);
                Source::Empirical {
                    store: residual_store,
                    fwd_avail,
                    bwd_avail,
                }
            }
            ResidualModel::Parametric { curves, copula } => {
                if max_before > 0 {
                    return Err(Error::input("parametric fits are forward only"));
                }
                let dim = max_after.max(1);
                let factor = match copula.rho {
                    Some(rho) => ResidualCopula::gaussian(rho, dim)?.factor()?,
                    None => ResidualCopula::independence(dim).factor()?,
                };
                let beta = fit.norming.forward().beta;
                let margins = (1..=dim)
                    .map(|j| curves.at(j, beta))
                    .collect::<Result<Vec<_>>>()?;
                Source::Parametric { factor, margins }
            }
        };
        Ok(Self {
            forward,
            backward,
            source,
        })
    }

    /// Rows usable for a draw needing `before` and `after` lags.
    pub fn eligible_rows(&self, before: usize, after: usize) -> usize {
        match &self.source {
            Source::Empirical {
                fwd_avail,
                bwd_avail,
                ..
            } => fwd_avail
                .iter()
                .zip(bwd_avail)
                .filter(|(&f, &b)| f >= after && b >= before)
                .count(),
            Source::Parametric { .. } => usize::MAX,
        }
    }

    fn require_rows(&self, before: usize, after: usize) -> Result<()> {
        if self.eligible_rows(before, after) == 0 {
            return Err(Error::input(format!(
                "no stored residual row covers {before} backward and {after} forward lags"
            )));
        }
        Ok(())
    }

    /// Joint residual draw: `(backward, forward)`.
    pub fn draw_residuals<R: Rng + ?Sized>(
        &self,
        before: usize,
        after: usize,
        rng: &mut R,
    ) -> (Vec<f64>, Vec<f64>) {
        match &self.source {
            Source::Empirical {
                store,
                fwd_avail,
                bwd_avail,
            } => {
                // uniform over eligible rows by rejection
                let n = store.len();
                loop {
                    let r = rng.random_range(0..n);
                    if fwd_avail[r] >= after && bwd_avail[r] >= before {
                        let f = store.forward[r][..after].iter().map(|v| v.unwrap()).collect();
                        let b = if before > 0 {
                            store.backward[r][..before].iter().map(|v| v.unwrap()).collect()
                        } else {
                            Vec::new()
                        };
                        return (b, f);
                    }
                }
            }
            Source::Parametric { factor, margins } => {
                let w = factor.sample_normals(rng);
                let f = w[..after]
                    .iter()
                    .zip(margins)
                    .map(|(&wi, m)| {
                        let tail = crate::stats::norm_cdf(-wi.abs());
                        m.tail_quantile(tail, wi > 0.0)
                    })
                    .collect();
                (Vec::new(), f)
            }
        }
    }
}

impl ConditionalSampler for FitSampler<'_> {
    fn sample_given(
        &self,
        x: f64,
        before: usize,
        after: usize,
        rng: &mut StreamRng,
        backward: &mut Vec<f64>,
        forward: &mut Vec<f64>,
    ) {
        let (zb, zf) = self.draw_residuals(before, after, rng);
        let apply = |n: &SideNorming, z: &[f64], out: &mut Vec<f64>| {
            out.clear();
            for (i, &zi) in z.iter().enumerate() {
                let a = n.alphas[i];
                out.push(a * x + norm_scale(n.model, a, n.beta, x) * zi);
            }
        };
        apply(&self.forward, &zf, forward);
        match &self.backward {
            Some(n) => apply(n, &zb, backward),
            None => backward.clear(),
        }
    }
}

/// One joint residual draw for `before` backward and `after` forward lags.
pub fn draw_residual_vector<R: Rng + ?Sized>(
    fit: &FittedConditionalModel,
    before: usize,
    after: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = FitSampler::new(fit, before, after)?;
    s.require_rows(before, after)?;
    Ok(s.draw_residuals(before, after, rng))
}

/// Forward blocks `X_{1:d}` with `X_1 = v + E`, `E ~ Exp(1)`.
pub fn forward_blocks<S: ConditionalSampler>(sampler: &S, config: &SimConfig) -> Vec<Vec<f64>> {
    par_map(config.n_samples, config.threads, |i| {
        let mut rng = substream(config.seed, i as u64);
        let e: f64 = Exp1.sample(&mut rng);
        let x1 = config.v + e;
        let (mut b, mut f) = (Vec::new(), Vec::with_capacity(config.d - 1));
        sampler.sample_given(x1, 0, config.d - 1, &mut rng, &mut b, &mut f);
        let mut block = Vec::with_capacity(config.d);
        block.push(x1);
        block.extend_from_slice(&f);
        block
    })
}

pub fn forward_simulate(fit: &FittedConditionalModel, config: &SimConfig) -> Result<Vec<Vec<f64>>> {
    config.validate_for(fit)?;
    let sampler = FitSampler::new(fit, 0, config.d - 1)?;
    sampler.require_rows(0, config.d - 1)?;
    Ok(forward_blocks(&sampler, config))
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let se = if values.len() > 1 {
        (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    (m, se)
}

/// `E[g(X_{1:d}) | X_1 > v]` by forward simulation with any sampler.
pub fn estimate_conditional_with<S: ConditionalSampler>(
    sampler: &S,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> EstimateReport {
    let values: Vec<f64> = forward_blocks(sampler, config).iter().map(|b| g(b)).collect();
    let (m, se) = mean_and_se(&values);
    EstimateReport::new(m, se, config.n_samples, config.seed)
}

pub fn estimate_conditional(
    fit: &FittedConditionalModel,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<EstimateReport> {
    config.validate_for(fit)?;
    let sampler = FitSampler::new(fit, 0, config.d - 1)?;
    sampler.require_rows(0, config.d - 1)?;
    Ok(estimate_conditional_with(&sampler, config, g))
}

/// Per-sample output of the union-mixture sampler.
#[derive(Debug, Clone)]
pub struct AloeSample {
    pub block: Vec<f64>,
    /// Number of exceedances of `v` in the block (at least 1).
    pub s: usize,
}

/// Draws from the mixture: position `j` uniform, `X_j = v + E`, neighbours
/// from the conditional sampler on both sides.
pub fn aloe_samples<S: ConditionalSampler>(sampler: &S, config: &SimConfig) -> Vec<AloeSample> {
    let d = config.d;
    let v = config.v;
    par_map(config.n_samples, config.threads, |i| {
        let mut rng = substream(config.seed, i as u64);
        let j = rng.random_range(0..d);
        let e: f64 = Exp1.sample(&mut rng);
        let xj = v + e;
        let (mut b, mut f) = (Vec::with_capacity(j), Vec::with_capacity(d - 1 - j));
        sampler.sample_given(xj, j, d - 1 - j, &mut rng, &mut b, &mut f);
        let mut block = Vec::with_capacity(d);
        block.extend(b.iter().rev());
        block.push(xj);
        block.extend_from_slice(&f);
        let s = block.iter().filter(|&&x| x > v).count();
        AloeSample { block, s }
    })
}

/// Union bound `p̄ = d e^{-v} / 2` for standard Laplace margins.
pub fn union_bound(v: f64, d: usize) -> f64 {
    d as f64 * 0.5 * (-v).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AloeResult {
    pub p_hat: f64,
    pub std_error: f64,
    pub p_bar: f64,
    pub n: usize,
    pub seed: u64,
    /// `s_histogram[s]` counts samples with `S = s`.
    pub s_histogram: Vec<usize>,
}

impl AloeResult {
    pub fn report(&self) -> EstimateReport {
        EstimateReport {
            estimate: self.p_hat,
            std_error: self.std_error,
            n: self.n,
            seed: self.seed,
            p_bar: Some(self.p_bar),
            s_histogram: Some(self.s_histogram.clone()),
        }
    }
}

fn histogram(samples: &[AloeSample], d: usize) -> Vec<usize> {
    let mut h = vec![0; d + 1];
    for s in samples {
        h[s.s] += 1;
    }
    h
}

/// `P(max X_{1:d} > v)` with any conditional sampler.
pub fn aloe_estimate_with<S: ConditionalSampler>(sampler: &S, config: &SimConfig) -> AloeResult {
    let samples = aloe_samples(sampler, config);
    let p_bar = union_bound(config.v, config.d);
    let inv: Vec<f64> = samples.iter().map(|s| 1.0 / s.s as f64).collect();
    let (m, se) = mean_and_se(&inv);
    AloeResult {
        p_hat: p_bar * m,
        std_error: p_bar * se,
        p_bar,
        n: config.n_samples,
        seed: config.seed,
        s_histogram: histogram(&samples, config.d),
    }
}

fn bf_sampler<'a>(fit: &'a FittedConditionalModel, config: &SimConfig) -> Result<FitSampler<'a>> {
    config.validate_for(fit)?;
    let d = config.d;
    let sampler = FitSampler::new(fit, d - 1, d - 1)?;
    for j in 0..d {
        sampler.require_rows(j, d - 1 - j)?;
    }
    Ok(sampler)
}

pub fn aloe_estimate(bf_fit: &FittedConditionalModel, config: &SimConfig) -> Result<AloeResult> {
    Ok(aloe_estimate_with(&bf_sampler(bf_fit, config)?, config))
}

/// `E[g(X_{1:d})]` for `g` vanishing off the union `{max X > v}`.
pub fn aloe_expectation_with<S: ConditionalSampler>(
    sampler: &S,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> EstimateReport {
    let samples = aloe_samples(sampler, config);
    let p_bar = union_bound(config.v, config.d);
    let w: Vec<f64> = samples.iter().map(|s| g(&s.block) / s.s as f64).collect();
    let (m, se) = mean_and_se(&w);
    EstimateReport {
        estimate: p_bar * m,
        std_error: p_bar * se,
        n: config.n_samples,
        seed: config.seed,
        p_bar: Some(p_bar),
        s_histogram: Some(histogram(&samples, config.d)),
    }
}

pub fn aloe_expectation(
    bf_fit: &FittedConditionalModel,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<EstimateReport> {
    Ok(aloe_expectation_with(&bf_sampler(bf_fit, config)?, config, g))
}

/// Ratio estimator of `E[g | max X_{1:d} > v]` from per-sample `(g, S)`.
pub fn ratio_from_samples(samples: &[AloeSample], g: &dyn Fn(&[f64]) -> f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    let a: Vec<f64> = samples.iter().map(|s| g(&s.block) / s.s as f64).collect();
    let b: Vec<f64> = samples.iter().map(|s| 1.0 / s.s as f64).collect();
    for (ai, bi) in a.iter().zip(&b) {
        num += ai;
        den += bi;
    }
    let r = num / den;
    // delta method for a ratio of means
    let mb = den / n;
    let var = a
        .iter()
        .zip(&b)
        .map(|(ai, bi)| (ai - r * bi).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    (r, (var / n).sqrt() / mb)
}

pub fn aloe_conditional_expectation_with<S: ConditionalSampler>(
    sampler: &S,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> EstimateReport {
    let samples = aloe_samples(sampler, config);
    let (r, se) = ratio_from_samples(&samples, g);
    EstimateReport {
        estimate: r,
        std_error: se,
        n: config.n_samples,
        seed: config.seed,
        p_bar: Some(union_bound(config.v, config.d)),
        s_histogram: Some(histogram(&samples, config.d)),
    }
}

pub fn aloe_conditional_expectation(
    bf_fit: &FittedConditionalModel,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<EstimateReport> {
    Ok(aloe_conditional_expectation_with(&bf_sampler(bf_fit, config)?, config, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundReport {
    pub replicates: Vec<f64>,
    pub mean: f64,
    pub sample_variance: f64,
    /// `p̂_g (p̄ - p̂_g) / n` at the replicate mean.
    pub bound: f64,
    /// Sample variance exceeds the bound by more than twice the relative
    /// sampling error of a variance estimate.
    pub violated: bool,
}

/// Independent replicates of [`aloe_expectation_with`] against the variance
/// bound for indicator `g`.
pub fn variance_bound_check_with<S: ConditionalSampler>(
    sampler: &S,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    replications: usize,
) -> Result<VarianceBoundReport> {
    if replications < 2 {
        return Err(Error::input("at least two replications are needed"));
    }
    let replicates: Vec<f64> = (0..replications)
        .map(|r| {
            let cfg = SimConfig {
                seed: derive_seed(config.seed, r as u64),
                ..config.clone()
            };
            aloe_expectation_with(sampler, &cfg, g).estimate
        })
        .collect();
    let mean = crate::stats::mean(&replicates);
    let sample_variance = crate::stats::variance(&replicates);
    let p_bar = union_bound(config.v, config.d);
    let bound = mean * (p_bar - mean) / config.n_samples as f64;
    let slack = 2.0 * (2.0 / (replications as f64 - 1.0)).sqrt();
    Ok(VarianceBoundReport {
        violated: sample_variance > bound.max(0.0) * (1.0 + slack) + 1e-300,
        replicates,
        mean,
        sample_variance,
        bound,
    })
}

pub fn variance_bound_check(
    bf_fit: &FittedConditionalModel,
    config: &SimConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    replications: usize,
) -> Result<VarianceBoundReport> {
    variance_bound_check_with(&bf_sampler(bf_fit, config)?, config, g, replications)
}

/// Raw blocks as CSV, one block per row.
pub fn write_blocks_csv<W: std::io::Write>(blocks: &[Vec<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = blocks.first().map_or(0, |b| b.len());
    w.write_record((1..=d).map(|i| format!("x{i}")))?;
    for b in blocks {
        w.write_record(b.iter().map(|&v| crate::margins::format_float(v)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{FitMetadata, Norming, Parameterization, ResidualCurves, WorkingMargin};
    use crate::norming::{AlphaStructure, BackwardForwardSpec, NormingSpec};
    use crate::stats::{ks_p_value, ks_statistic};

    fn empirical_fit(rows: Vec<Vec<Option<f64>>>, back: Vec<Vec<Option<f64>>>, alpha: f64, beta: f64) -> FittedConditionalModel {
        let k = rows[0].len();
        let spec = NormingSpec::new(Model::Model1, AlphaStructure::Geometric { alpha }, beta, k).unwrap();
        let n = rows.len();
        let has_back = back.iter().any(|r| !r.is_empty());
        FittedConditionalModel {
            marginal_model_ref: None,
            u: 1.0,
            k,
            norming: if has_back {
                Norming::BackwardForward(BackwardForwardSpec::symmetric(spec))
            } else {
                Norming::Forward(spec)
            },
            residuals: ResidualModel::Empirical {
                working_margin: WorkingMargin::Gaussian,
                forward_nuisance: vec![],
                backward_nuisance: vec![],
                residual_store: ResidualStore {
                    k,
                    t: (0..n).collect(),
                    x: vec![2.0; n],
                    forward: rows,
                    backward: back,
                },
            },
            fit_metadata: FitMetadata {
                nll: 0.0,
                iterations: 0,
                seed: 0,
                n_blocks: n,
                warnings: vec![],
            },
        }
    }

    #[test]
    fn degenerate_model_gives_zero_tail() {
        let fit = empirical_fit(vec![vec![Some(0.0); 4]; 3], vec![vec![]; 3], 0.0, 0.0);
        let cfg = SimConfig::new(1000, 1, 2.0, 5);
        for b in forward_simulate(&fit, &cfg).unwrap() {
            assert!(b[0] > 2.0);
            assert_eq!(&b[1..], &[0.0; 4]);
        }
    }

    #[test]
    fn first_value_minus_v_is_unit_exponential() {
        let fit = empirical_fit(vec![vec![Some(0.3)]; 2], vec![vec![]; 2], 0.5, 0.2);
        let cfg = SimConfig::new(1_000_000, 9, 3.0, 2);
        let blocks = forward_simulate(&fit, &cfg).unwrap();
        let e: Vec<f64> = blocks.iter().map(|b| b[0] - 3.0).collect();
        let m = crate::stats::mean(&e);
        assert!((m - 1.0).abs() < 0.003, "{m}");
        let d = ks_statistic(&e, |x| 1.0 - (-x).exp());
        assert!(ks_p_value(d, e.len()) > 0.01);
    }

    #[test]
    fn simulation_is_deterministic_and_thread_independent() {
        let fit = empirical_fit(
            vec![vec![Some(0.1), Some(-0.2)], vec![Some(0.5), Some(0.4)]],
            vec![vec![]; 2],
            0.5,
            0.3,
        );
        let mut cfg = SimConfig::new(500, 4, 2.0, 3);
        let a = forward_simulate(&fit, &cfg).unwrap();
        let b = forward_simulate(&fit, &cfg).unwrap();
        cfg.threads = 3;
        let c = forward_simulate(&fit, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn empirical_draws_are_uniform_over_eligible_rows() {
        let rows = vec![
            vec![Some(0.0), Some(0.0)],
            vec![Some(1.0), Some(1.0)],
            vec![Some(2.0), None],
            vec![Some(3.0), Some(3.0)],
        ];
        let fit = empirical_fit(rows, vec![vec![]; 4], 0.0, 0.0);
        let s = FitSampler::new(&fit, 0, 2).unwrap();
        let mut rng = substream(1, 0);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (_, f) = s.draw_residuals(0, 2, &mut rng);
            counts[f[0] as usize] += 1;
        }
        assert_eq!(counts[2], 0);
        let e = n as f64 / 3.0;
        let chi2: f64 = [0, 1, 3].iter().map(|&i| (counts[i] as f64 - e).powi(2) / e).sum();
        // 2 degrees of freedom, 0.999 quantile 13.8
        assert!(chi2 < 13.8, "{counts:?}");

        let single = empirical_fit(vec![vec![Some(0.7)]], vec![vec![]], 0.0, 0.0);
        let (_, f) = draw_residual_vector(&single, 0, 1, &mut rng).unwrap();
        assert_eq!(f, vec![0.7]);
        let none = empirical_fit(vec![vec![Some(0.1), None]], vec![vec![]], 0.0, 0.0);
        assert!(draw_residual_vector(&none, 0, 2, &mut rng).unwrap_err().is_input());
    }

    #[test]
    fn parametric_draws_match_curve_means() {
        let curves = ResidualCurves {
            parameterization: Parameterization::Unscaled,
            u: 1.0,
            a: 0.5,
            b: 1.0,
            c: -0.4,
            d: 1.0,
            e: 0.5,
            f: 1.0,
        };
        let spec = NormingSpec::new(Model::Model2, AlphaStructure::Geometric { alpha: 0.5 }, 0.3, 2).unwrap();
        let fit = FittedConditionalModel {
            marginal_model_ref: None,
            u: 1.0,
            k: 2,
            norming: Norming::Forward(spec),
            residuals: ResidualModel::Parametric {
                curves,
                copula: ResidualCopula::gaussian(0.0, 2).unwrap(),
            },
            fit_metadata: FitMetadata {
                nll: 0.0,
                iterations: 0,
                seed: 0,
                n_blocks: 0,
                warnings: vec![],
            },
        };
        let s = FitSampler::new(&fit, 0, 2).unwrap();
        let mut rng = substream(2, 0);
        let n = 200_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let (_, f) = s.draw_residuals(0, 2, &mut rng);
            sums[0] += f[0];
            sums[1] += f[1];
        }
        for lag in 1..=2 {
            let m = curves.at(lag, 0.3).unwrap();
            let g = |a: f64| statrs::function::gamma::gamma(a);
            let sd = m.sigma * (g(3.0 / m.delta) / g(1.0 / m.delta)).sqrt();
            let got = sums[lag - 1] / n as f64;
            assert!((got - m.mu).abs() < 3.0 * sd / (n as f64).sqrt(), "lag {lag}: {got}");
        }
    }

    #[test]
    fn aloe_single_position_is_exact() {
        let fit = empirical_fit(vec![vec![Some(0.1)]], vec![vec![Some(0.2)]], 0.5, 0.2);
        let cfg = SimConfig::new(1000, 3, 2.5, 1);
        let r = aloe_estimate(&fit, &cfg).unwrap();
        assert_eq!(r.p_hat, 0.5 * (-2.5f64).exp());
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.s_histogram, vec![0, 1000]);
        let c = aloe_conditional_expectation(&fit, &cfg, &|b: &[f64]| {
            (b.iter().filter(|&&x| x > 2.5).count() == 1) as u8 as f64
        })
        .unwrap();
        assert_eq!(c.estimate, 1.0);
        let vb = variance_bound_check(&fit, &cfg, &|_: &[f64]| 1.0, 5).unwrap();
        assert_eq!(vb.sample_variance, 0.0);
        assert!(vb.bound >= 0.0 && !vb.violated);
    }

    #[test]
    fn aloe_respects_bounds_and_partitions_sum_to_one() {
        let rows: Vec<Vec<Option<f64>>> = (0..50)
            .map(|i| (0..4).map(|j| Some(((i * 7 + j * 3) % 11) as f64 * 0.4 - 2.0)).collect())
            .collect();
        let fit = empirical_fit(rows.clone(), rows, 0.7, 0.1);
        let v = 3.0;
        let d = 5;
        let cfg = SimConfig::new(20_000, 5, v, d);
        let r = aloe_estimate(&fit, &cfg).unwrap();
        assert!(r.p_hat >= r.p_bar / d as f64 && r.p_hat <= r.p_bar, "{r:?}");

        let union = aloe_expectation(&fit, &cfg, &|b: &[f64]| {
            b.iter().any(|&x| x > v) as u8 as f64
        })
        .unwrap();
        assert!((union.estimate - r.p_hat).abs() < 1e-15);
        let zero = aloe_expectation(&fit, &cfg, &|_: &[f64]| 0.0).unwrap();
        assert_eq!(zero.estimate, 0.0);

        let total: f64 = (1..=d)
            .map(|rr| {
                aloe_conditional_expectation(&fit, &cfg, &move |b: &[f64]| {
                    (b.iter().filter(|&&x| x > v).count() == rr) as u8 as f64
                })
                .unwrap()
                .estimate
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn config_checks() {
        let fit = empirical_fit(vec![vec![Some(0.1)]], vec![vec![]], 0.5, 0.2);
        assert!(forward_simulate(&fit, &SimConfig::new(10, 1, 0.5, 2)).is_err());
        assert!(forward_simulate(&fit, &SimConfig::new(10, 1, 2.0, 3)).is_err());
        let mut cfg = SimConfig::new(10, 1, 2.0, 2);
        cfg.residual_source = Some(ResidualSource::Parametric);
        assert!(forward_simulate(&fit, &cfg).is_err());
        assert!(aloe_estimate(&fit, &SimConfig::new(10, 1, 2.0, 2)).is_err());
    }
}
