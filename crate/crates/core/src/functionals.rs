//! Cluster functionals: kernels evaluated on blocks, model-based estimates
//! through the simulate module, empirical window averages and runs clusters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{Direction, FittedConditionalModel};
use crate::margins::{LaplaceSeries, MarginalModel};
use crate::resample::{bootstrap_estimate, BootstrapScheme};
use crate::simulate::{
    aloe_conditional_expectation_with, aloe_expectation_with, estimate_conditional_with,
    ConditionalSampler, EstimateReport, FitSampler, SimConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `P(X_2 ≤ v, …, X_d ≤ v | X_1 > v)`.
    Theta,
    /// `P(X_{d+1} > v | X_1 > v)`.
    Chi,
    /// Mean block maximum given `X_1 > v`.
    E1,
    /// Mean block average given `X_1 > v`.
    E2,
    /// Mean exceedance count given `X_1 > v`.
    E3,
    /// `P(S = r | X_1 > v)` with `S` the exceedance count.
    P { r: usize },
    /// `P(S = r | max X > v)`.
    PStar { r: usize },
    /// `P(max X > level)`, unconditional.
    MaxExceed { level: f64 },
    /// `P(S ≥ s)`, unconditional.
    TotalExceed { s: usize },
    /// `P(longest run above v ≥ s)`, unconditional.
    ConsecExceed { s: usize },
}

impl FunctionalKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Theta => "theta",
            Self::Chi => "chi",
            Self::E1 => "e1",
            Self::E2 => "e2",
            Self::E3 => "e3",
            Self::P { .. } => "p",
            Self::PStar { .. } => "pstar",
            Self::MaxExceed { .. } => "max_exceed",
            Self::TotalExceed { .. } => "total_exceed",
            Self::ConsecExceed { .. } => "consec_exceed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Laplace,
    Data,
}

/// Event a functional conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// `X_1 > v`.
    First,
    /// `max X_{1:d} > v`.
    Union,
    /// Plain expectation; the kernel vanishes off the union.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    #[serde(flatten)]
    pub kind: FunctionalKind,
    /// Threshold on the Laplace scale.
    pub v: f64,
    pub d: usize,
    /// Scale the kernel is evaluated on. `MaxExceed::level` is read on
    /// this scale; `v` is always Laplace.
    #[serde(default)]
    pub scale: Scale,
}

impl FunctionalSpec {
    pub fn new(kind: FunctionalKind, v: f64, d: usize) -> Result<Self> {
        let s = Self {
            kind,
            v,
            d,
            scale: Scale::Laplace,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v.is_finite() {
            return Err(Error::input("threshold v must be finite"));
        }
        if self.d == 0 {
            return Err(Error::input("block length d must be positive"));
        }
        let d = self.d;
        match self.kind {
            FunctionalKind::Theta if d < 2 => Err(Error::input("theta needs d ≥ 2")),
            FunctionalKind::P { r } | FunctionalKind::PStar { r } if r == 0 || r > d => {
                Err(Error::input(format!("r = {r} outside 1..={d}")))
            }
            FunctionalKind::TotalExceed { s } | FunctionalKind::ConsecExceed { s } if s == 0 || s > d => {
                Err(Error::input(format!("s = {s} outside 1..={d}")))
            }
            FunctionalKind::MaxExceed { level } if !level.is_finite() => {
                Err(Error::input("level must be finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn needs_marginal(&self) -> bool {
        self.scale == Scale::Data
    }

    /// Length of the block the kernel reads.
    pub fn block_len(&self) -> usize {
        match self.kind {
            FunctionalKind::Chi => self.d + 1,
            _ => self.d,
        }
    }

    pub fn conditioning(&self) -> Conditioning {
        match self.kind {
            FunctionalKind::PStar { .. } => Conditioning::Union,
            FunctionalKind::MaxExceed { .. }
            | FunctionalKind::TotalExceed { .. }
            | FunctionalKind::ConsecExceed { .. } => Conditioning::None,
            _ => Conditioning::First,
        }
    }

    /// Kernel with threshold `t` on the block's scale.
    fn kernel_at(&self, w: &[f64], t: f64) -> f64 {
        let count = || w.iter().filter(|&&x| x > t).count();
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match self.kind {
            FunctionalKind::Theta => ind(w[1..].iter().all(|&x| x <= t)),
            FunctionalKind::Chi => ind(w[self.d] > t),
            FunctionalKind::E1 => w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            FunctionalKind::E2 => w.iter().sum::<f64>() / w.len() as f64,
            FunctionalKind::E3 => count() as f64,
            FunctionalKind::P { r } | FunctionalKind::PStar { r } => ind(count() == r),
            FunctionalKind::MaxExceed { level } => ind(w.iter().any(|&x| x > level)),
            FunctionalKind::TotalExceed { s } => ind(count() >= s),
            FunctionalKind::ConsecExceed { s } => ind(longest_run_above(w, t) >= s),
        }
    }

    /// Kernel on a Laplace-scale block.
    pub fn kernel(&self, w: &[f64]) -> f64 {
        self.kernel_at(w, self.v)
    }
}

fn longest_run_above(w: &[f64], t: f64) -> usize {
    let (mut best, mut cur) = (0, 0);
    for &x in w {
        if x > t {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

/// Evaluates the kernel on a Laplace-scale block, back-transforming first
/// for data-scale specs.
pub fn evaluate_functional(block: &[f64], spec: &FunctionalSpec, marginal: Option<&MarginalModel>) -> Result<f64> {
    spec.validate()?;
    if block.len() != spec.block_len() {
        return Err(Error::input(format!(
            "block has length {}, functional needs {}",
            block.len(),
            spec.block_len()
        )));
    }
    match spec.scale {
        Scale::Laplace => Ok(spec.kernel(block)),
        Scale::Data => {
            let m = marginal.ok_or_else(|| Error::input("data-scale functional needs a marginal model"))?;
            let y: Vec<f64> = block.iter().map(|&x| m.from_laplace_value(x)).collect();
            Ok(spec.kernel_at(&y, m.from_laplace_value(spec.v)))
        }
    }
}

/// Kernel as a closure over Laplace blocks, with the marginal captured.
fn kernel_fn<'a>(
    spec: &'a FunctionalSpec,
    marginal: Option<&'a MarginalModel>,
) -> Result<impl Fn(&[f64]) -> f64 + Sync + 'a> {
    if spec.needs_marginal() && marginal.is_none() {
        return Err(Error::input("data-scale functional needs a marginal model"));
    }
    let t_data = marginal.map(|m| m.from_laplace_value(spec.v));
    Ok(move |w: &[f64]| match (spec.scale, marginal) {
        (Scale::Data, Some(m)) => {
            let y: Vec<f64> = w.iter().map(|&x| m.from_laplace_value(x)).collect();
            spec.kernel_at(&y, t_data.unwrap())
        }
        _ => spec.kernel(w),
    })
}

/// Monte Carlo settings for [`estimate_functional`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub threads: usize,
}

impl McOptions {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            threads: 1,
        }
    }

    fn config(&self, spec: &FunctionalSpec) -> SimConfig {
        SimConfig {
            threads: self.threads,
            ..SimConfig::new(self.n_samples, self.seed, spec.v, spec.block_len())
        }
    }
}

fn check_union_kernel(spec: &FunctionalSpec, marginal: Option<&MarginalModel>) -> Result<()> {
    if let FunctionalKind::MaxExceed { level } = spec.kind {
        let v = match (spec.scale, marginal) {
            (Scale::Data, Some(m)) => m.from_laplace_value(spec.v),
            _ => spec.v,
        };
        if level < v {
            return Err(Error::input(format!(
                "max_exceed level {level} lies below the union threshold {v}"
            )));
        }
    }
    Ok(())
}

/// Model-based estimate with any conditional sampler. Conditional-on-`X_1`
/// kinds use forward simulation; the rest use the union-mixture sampler.
pub fn estimate_functional_with<S: ConditionalSampler>(
    sampler: &S,
    spec: &FunctionalSpec,
    marginal: Option<&MarginalModel>,
    opts: &McOptions,
) -> Result<EstimateReport> {
    spec.validate()?;
    let g = kernel_fn(spec, marginal)?;
    let cfg = opts.config(spec);
    cfg.validate()?;
    Ok(match spec.conditioning() {
        Conditioning::First => estimate_conditional_with(sampler, &cfg, &g),
        Conditioning::Union => aloe_conditional_expectation_with(sampler, &cfg, &g),
        Conditioning::None => {
            check_union_kernel(spec, marginal)?;
            aloe_expectation_with(sampler, &cfg, &g)
        }
    })
}

pub fn estimate_functional(
    fit: &FittedConditionalModel,
    spec: &FunctionalSpec,
    marginal: Option<&MarginalModel>,
    opts: &McOptions,
) -> Result<EstimateReport> {
    spec.validate()?;
    let cfg = opts.config(spec);
    cfg.validate_for(fit)?;
    let m = cfg.d - 1;
    let sampler = match spec.conditioning() {
        Conditioning::First => FitSampler::new(fit, 0, m)?,
        _ => {
            if fit.direction() != Direction::BackwardForward {
                return Err(Error::input(format!(
                    "{} needs a backward-forward fit",
                    spec.kind.name()
                )));
            }
            FitSampler::new(fit, m, m)?
        }
    };
    let needed: Vec<(usize, usize)> = match spec.conditioning() {
        Conditioning::First => vec![(0, m)],
        _ => (0..cfg.d).map(|j| (j, m - j)).collect(),
    };
    for (b, a) in needed {
        if sampler.eligible_rows(b, a) == 0 {
            return Err(Error::input(format!(
                "no stored residual row covers {b} backward and {a} forward lags"
            )));
        }
    }
    estimate_functional_with(&sampler, spec, marginal, opts)
}

/// Window average on one series. Returns `(estimate, conditioning windows)`.
fn window_average(
    series: &LaplaceSeries,
    spec: &FunctionalSpec,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<(f64, usize)> {
    let len = spec.block_len();
    let v = spec.v;
    let (mut sum, mut count, mut total) = (0.0, 0usize, 0usize);
    for seg in series.segment_slices() {
        for w in seg.windows(len) {
            let keep = match spec.conditioning() {
                Conditioning::First => w[0] > v,
                Conditioning::Union => w.iter().any(|&x| x > v),
                Conditioning::None => true,
            };
            total += 1;
            if keep {
                sum += g(w);
                count += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::input(format!("no segment holds a full window of length {len}")));
    }
    match spec.conditioning() {
        Conditioning::None => {
            if !series.values.iter().any(|&x| x > v) {
                return Err(Error::input(format!("no exceedances of v = {v}")));
            }
            Ok((sum / count as f64, count))
        }
        _ if count == 0 => Err(Error::input(format!("no usable windows with an exceedance of v = {v}"))),
        _ => Ok((sum / count as f64, count)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOptions {
    pub block_length: usize,
    pub replications: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for EmpiricalOptions {
    fn default() -> Self {
        Self {
            block_length: 20,
            replications: 200,
            seed: 0,
            threads: 1,
        }
    }
}

/// Sample average over all full windows of each segment, with a
/// moving-block bootstrap standard error. `n` in the report counts the
/// conditioning windows.
pub fn empirical_functional(
    series: &LaplaceSeries,
    spec: &FunctionalSpec,
    marginal: Option<&MarginalModel>,
    opts: &EmpiricalOptions,
) -> Result<EstimateReport> {
    spec.validate()?;
    let g = kernel_fn(spec, marginal)?;
    let (estimate, n) = window_average(series, spec, &g)?;
    let shortest = series.segments.iter().map(|&(a, b)| b - a).min().unwrap_or(1);
    let scheme = BootstrapScheme::moving_block(opts.block_length.min(shortest).max(1), opts.seed);
    let boot = bootstrap_estimate(series, &scheme, opts.replications, 0.95, opts.threads, |s| {
        window_average(s, spec, &g).map(|r| r.0)
    })?;
    Ok(EstimateReport::new(estimate, boot.std_error, n, opts.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Index of the source block.
    pub block: usize,
    /// Position of the first exceedance within the block.
    pub start: usize,
    /// Values from the first to the last exceedance.
    pub values: Vec<f64>,
    pub run_length: usize,
    /// False when the block ended before `run_length` non-exceedances.
    pub terminated: bool,
}

/// Runs-method clusters: one per block, starting at the first exceedance of
/// `v` and closed by `r` consecutive non-exceedances.
pub fn extract_clusters(blocks: &[Vec<f64>], v: f64, r: usize) -> Vec<Cluster> {
    let r = r.max(1);
    let mut out = Vec::new();
    for (bi, b) in blocks.iter().enumerate() {
        let Some(start) = b.iter().position(|&x| x > v) else {
            continue;
        };
        let (mut last, mut gap, mut terminated) = (start, 0, false);
        for (i, &x) in b.iter().enumerate().skip(start + 1) {
            if x > v {
                last = i;
                gap = 0;
            } else {
                gap += 1;
                if gap == r {
                    terminated = true;
                    break;
                }
            }
        }
        out.push(Cluster {
            block: bi,
            start,
            values: b[start..=last].to_vec(),
            run_length: r,
            terminated,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::GeneratorKind;
    use crate::rng::StreamRng;
    use proptest::prelude::*;

    fn spec(kind: FunctionalKind, d: usize) -> FunctionalSpec {
        FunctionalSpec::new(kind, 2.0, d).unwrap()
    }

    #[test]
    fn kernels_on_hand_blocks() {
        let v = 2.0;
        let low = [v + 1.0, v - 1.0, v - 0.5, v - 2.0];
        assert_eq!(spec(FunctionalKind::Theta, 4).kernel(&low), 1.0);
        assert_eq!(spec(FunctionalKind::TotalExceed { s: 1 }, 4).kernel(&low), 1.0);
        assert_eq!(spec(FunctionalKind::E3, 4).kernel(&low), 1.0);

        let b = [v + 1.0, v + 1.0, v - 1.0, v + 1.0];
        assert_eq!(spec(FunctionalKind::ConsecExceed { s: 2 }, 4).kernel(&b), 1.0);
        assert_eq!(spec(FunctionalKind::ConsecExceed { s: 3 }, 4).kernel(&b), 0.0);
        assert_eq!(spec(FunctionalKind::P { r: 3 }, 4).kernel(&b), 1.0);
        assert_eq!(spec(FunctionalKind::E1, 4).kernel(&b), v + 1.0);
        assert_eq!(spec(FunctionalKind::Theta, 4).kernel(&b), 0.0);

        assert_eq!(spec(FunctionalKind::E2, 3).kernel(&[1.0, 2.0, 3.0]), 2.0);
        let chi = spec(FunctionalKind::Chi, 2);
        assert_eq!(chi.block_len(), 3);
        assert_eq!(chi.kernel(&[3.0, 0.0, 2.5]), 1.0);
        assert_eq!(chi.kernel(&[3.0, 2.5, 0.0]), 0.0);
    }

    #[test]
    fn validation() {
        assert!(FunctionalSpec::new(FunctionalKind::Theta, 1.0, 1).is_err());
        assert!(FunctionalSpec::new(FunctionalKind::Chi, 1.0, 1).is_ok());
        assert!(FunctionalSpec::new(FunctionalKind::P { r: 0 }, 1.0, 3).is_err());
        assert!(FunctionalSpec::new(FunctionalKind::PStar { r: 4 }, 1.0, 3).is_err());
        assert!(FunctionalSpec::new(FunctionalKind::ConsecExceed { s: 4 }, 1.0, 3).is_err());
        let s = spec(FunctionalKind::Theta, 3);
        assert!(evaluate_functional(&[3.0, 1.0], &s, None).is_err());
        assert!(evaluate_functional(&[3.0, 1.0, 1.0], &s.with_scale(Scale::Data), None)
            .unwrap_err()
            .is_input());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = FunctionalSpec::new(FunctionalKind::PStar { r: 2 }, 3.5, 5).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"kind\":\"p_star\""), "{j}");
        assert_eq!(serde_json::from_str::<FunctionalSpec>(&j).unwrap(), s);
    }

    #[test]
    fn clusters_by_hand() {
        let v = 0.0;
        let c = extract_clusters(&[vec![1.0, -1.0, -1.0, 2.0]], v, 2);
        assert_eq!(c[0].values, vec![1.0]);
        assert!(c[0].terminated);
        let c = extract_clusters(&[vec![1.0, -1.0, 2.0, -1.0]], v, 3);
        assert_eq!(c[0].values, vec![1.0, -1.0, 2.0]);
        assert!(!c[0].terminated);
        let c = extract_clusters(&[vec![1.0, 2.0, 3.0], vec![-1.0, -2.0, -3.0]], v, 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].values, vec![1.0, 2.0, 3.0]);
        assert!(!c[0].terminated);
    }

    struct Degenerate;
    impl ConditionalSampler for Degenerate {
        fn sample_given(&self, _: f64, before: usize, after: usize, _: &mut StreamRng, b: &mut Vec<f64>, f: &mut Vec<f64>) {
            b.clear();
            b.resize(before, -5.0);
            f.clear();
            f.resize(after, -5.0);
        }
    }

    #[test]
    fn theta_on_degenerate_model_is_one() {
        let r = estimate_functional_with(&Degenerate, &spec(FunctionalKind::Theta, 2), None, &McOptions::new(100, 1))
            .unwrap();
        assert_eq!((r.estimate, r.std_error), (1.0, 0.0));
        let r = estimate_functional_with(&Degenerate, &spec(FunctionalKind::PStar { r: 1 }, 4), None, &McOptions::new(100, 1))
            .unwrap();
        assert_eq!(r.estimate, 1.0);
    }

    #[test]
    fn forward_p_partitions_sum_to_one() {
        let sampler = crate::generators::GaussAr1Conditional::new(0.7).unwrap();
        let d = 5;
        let total: f64 = (1..=d)
            .map(|r| {
                estimate_functional_with(&sampler, &spec(FunctionalKind::P { r }, d), None, &McOptions::new(5000, 3))
                    .unwrap()
                    .estimate
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn empirical_theta_of_single_exceedance_is_one() {
        let mut x = vec![0.0; 30];
        x[10] = 5.0;
        let s = LaplaceSeries::single(x).unwrap();
        let r = empirical_functional(&s, &spec(FunctionalKind::Theta, 5), None, &EmpiricalOptions {
            block_length: 5,
            replications: 20,
            ..Default::default()
        });
        // most replicates miss the exceedance and fail
        match r {
            Ok(r) => assert_eq!(r.estimate, 1.0),
            Err(e) => assert!(e.to_string().contains("bootstrap"), "{e}"),
        }
        let (est, n) = window_average(&s, &spec(FunctionalKind::Theta, 5), &|w| spec(FunctionalKind::Theta, 5).kernel(w)).unwrap();
        assert_eq!((est, n), (1.0, 1));
        assert!(window_average(&LaplaceSeries::single(vec![0.0; 30]).unwrap(), &spec(FunctionalKind::Theta, 5), &|_| 0.0).is_err());
    }

    #[test]
    fn empirical_windows_do_not_cross_segments() {
        // exceedance at the end of the first segment has no full window
        let s = LaplaceSeries::new(
            vec![0.0, 0.0, 5.0, 5.0, 0.0, 0.0],
            vec![(0, 3), (3, 6)],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let sp = spec(FunctionalKind::Theta, 3);
        let (est, n) = window_average(&s, &sp, &|w| sp.kernel(w)).unwrap();
        assert_eq!((est, n), (1.0, 1));
    }

    #[test]
    fn empirical_chi_on_iid_noise() {
        let g = crate::generators::GeneratorSpec {
            kind: GeneratorKind::GaussAr1 { rho: 0.0 },
            n: 200_000,
            seed: 8,
        };
        let s = crate::generators::generate(&g).unwrap();
        let v = crate::stats::laplace_quantile(0.9);
        let sp = FunctionalSpec::new(FunctionalKind::Chi, v, 1).unwrap();
        let r = empirical_functional(&s, &sp, None, &EmpiricalOptions {
            replications: 50,
            ..Default::default()
        })
        .unwrap();
        let p = 0.1;
        let binom = (p * (1.0 - p) / r.n as f64).sqrt();
        assert!((r.estimate - p).abs() < 3.0 * binom, "{r:?}");
        assert!((r.std_error / binom - 1.0).abs() < 0.4, "{} vs {binom}", r.std_error);
    }

    #[test]
    fn data_scale_uses_back_transform() {
        let mut rng = <StreamRng as rand::SeedableRng>::seed_from_u64(1);
        let x: Vec<f64> = (0..2000)
            .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::Exp1, &mut rng))
            .collect();
        let raw = crate::margins::Series::single(x).unwrap();
        check_data_scale(&crate::margins::fit_marginal(&raw, 0.9).unwrap());
    }

    fn check_data_scale(m: &MarginalModel) {
        let s = FunctionalSpec::new(FunctionalKind::E1, 1.0, 3).unwrap().with_scale(Scale::Data);
        let b = [1.5, 0.3, 2.0];
        let got = evaluate_functional(&b, &s, Some(m)).unwrap();
        assert!((got - m.from_laplace_value(2.0)).abs() < 1e-12);
        let t = FunctionalSpec::new(FunctionalKind::Theta, 1.0, 3).unwrap().with_scale(Scale::Data);
        assert_eq!(evaluate_functional(&b, &t, Some(m)).unwrap(), t.kernel(&b));
    }

    proptest! {
        #[test]
        fn theta_complements_later_exceedance(
            tail in proptest::collection::vec(-5.0f64..5.0, 1..10),
            e in 0.0f64..3.0,
        ) {
            let v = 1.0;
            let mut b = vec![v + e + 1e-9];
            b.extend(tail);
            let s = FunctionalSpec::new(FunctionalKind::Theta, v, b.len()).unwrap();
            let later = b[1..].iter().any(|&x| x > v) as u8 as f64;
            prop_assert_eq!(s.kernel(&b) + later, 1.0);
            let e3 = FunctionalSpec::new(FunctionalKind::E3, v, b.len()).unwrap().kernel(&b);
            prop_assert!(e3 >= 1.0 && e3 <= b.len() as f64);
        }

        #[test]
        fn cluster_invariants(b in proptest::collection::vec(-3.0f64..3.0, 1..15), r in 1usize..4) {
            for c in extract_clusters(&[b.clone()], 0.0, r) {
                prop_assert!(c.values[0] > 0.0);
                prop_assert!(*c.values.last().unwrap() > 0.0);
                let gaps = longest_run_above(&c.values.iter().map(|&x| -x).collect::<Vec<_>>(), -0.0);
                prop_assert!(gaps < r);
            }
        }
    }
}
