//! Synthetic Markov chains with exactly Laplace margins, used as ground
//! truth, plus brute-force oracles computed from long generated series.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Conditioning, FunctionalSpec};
use crate::margins::LaplaceSeries;
use crate::rng::{substream, StreamRng};
use crate::simulate::{ConditionalSampler, EstimateReport};
use crate::stats::{gaussian_to_laplace, laplace_from_probs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    GaussAr1 { rho: f64 },
    InvLogistic { gamma: f64 },
    GaussAr2 { theta1: f64, theta2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GeneratorKind::GaussAr1 { rho } if !(rho.abs() < 1.0) => {
                Err(Error::input(format!("AR(1) needs |rho| < 1, got {rho}")))
            }
            GeneratorKind::InvLogistic { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                Err(Error::input(format!("inverted logistic needs gamma in (0, 1], got {gamma}")))
            }
            GeneratorKind::GaussAr2 { theta1, theta2 }
                if !(theta1 + theta2 < 1.0 && theta2 - theta1 < 1.0 && theta2.abs() < 1.0) =>
            {
                Err(Error::input(format!(
                    "AR(2) coefficients ({theta1}, {theta2}) are not stationary"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Endless Laplace-scale stream under `seed`.
    pub fn stream(&self, seed: u64) -> Result<GeneratorStream> {
        self.validate()?;
        Ok(GeneratorStream {
            kind: *self,
            rng: substream(seed, 0),
            state: [f64::NAN, f64::NAN],
            started: 0,
        })
    }
}

/// `(ρ₁, ρ₂, σ_w²)` of a unit-variance Gaussian AR(2).
pub fn ar2_moments(theta1: f64, theta2: f64) -> (f64, f64, f64) {
    let rho1 = theta1 / (1.0 - theta2);
    let rho2 = theta2 + theta1 * rho1;
    (rho1, rho2, 1.0 - theta1 * rho1 - theta2 * rho2)
}

/// `log P(Y₁ > y1 | Y₀ = y0)` for the inverted logistic chain with unit
/// exponential margins.
pub fn inv_logistic_log_survival(y0: f64, y1: f64, gamma: f64) -> f64 {
    if y1 <= 0.0 {
        return 0.0;
    }
    let g = 1.0 / gamma;
    let s = y0.powf(g) + y1.powf(g);
    y0 - s.powf(gamma) + (gamma - 1.0) * s.ln() + (g - 1.0) * y0.ln()
}

/// Draws `Y₁ | Y₀ = y0` by bisection on the conditional survival.
pub fn inv_logistic_transition<R: Rng + ?Sized>(y0: f64, gamma: f64, rng: &mut R) -> f64 {
    if gamma == 1.0 {
        // independence
        return Exp1.sample(rng);
    }
    let target = (1.0 - rng.random::<f64>()).ln();
    let (mut lo, mut hi) = (0.0f64, y0.max(1.0));
    while inv_logistic_log_survival(y0, hi, gamma) > target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if inv_logistic_log_survival(y0, mid, gamma) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn exp_to_laplace(y: f64) -> f64 {
    laplace_from_probs(-(-y).exp_m1(), (-y).exp())
}

pub struct GeneratorStream {
    kind: GeneratorKind,
    rng: StreamRng,
    /// Latent values: last and (for AR(2)) second-to-last.
    state: [f64; 2],
    started: usize,
}

impl Iterator for GeneratorStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let rng = &mut self.rng;
        let value = match self.kind {
            GeneratorKind::GaussAr1 { rho } => {
                let e: f64 = StandardNormal.sample(rng);
                let y = if self.started == 0 {
                    e
                } else {
                    rho * self.state[0] + (1.0 - rho * rho).sqrt() * e
                };
                self.state[0] = y;
                gaussian_to_laplace(y)
            }
            GeneratorKind::GaussAr2 { theta1, theta2 } => {
                let (rho1, _, var_w) = ar2_moments(theta1, theta2);
                let e: f64 = StandardNormal.sample(rng);
                let y = match self.started {
                    0 => e,
                    // (Y₀, Y₁) jointly normal with correlation ρ₁
                    1 => rho1 * self.state[0] + (1.0 - rho1 * rho1).sqrt() * e,
                    _ => theta1 * self.state[0] + theta2 * self.state[1] + var_w.sqrt() * e,
                };
                self.state[1] = self.state[0];
                self.state[0] = y;
                gaussian_to_laplace(y)
            }
            GeneratorKind::InvLogistic { gamma } => {
                let y = if self.started == 0 {
                    Exp1.sample(rng)
                } else {
                    inv_logistic_transition(self.state[0], gamma, rng)
                };
                self.state[0] = y;
                exp_to_laplace(y)
            }
        };
        self.started += 1;
        Some(value)
    }
}

/// One single-segment series.
pub fn generate(spec: &GeneratorSpec) -> Result<LaplaceSeries> {
    if spec.n == 0 {
        return Err(Error::input("series length must be positive"));
    }
    LaplaceSeries::single(spec.kind.stream(spec.seed)?.take(spec.n).collect())
}

/// Batch-means standard error over contiguous batches of kernel values;
/// accounts for the dependence between overlapping windows.
struct BatchMeans {
    batch: usize,
    sum: f64,
    count: usize,
    cur_sum: f64,
    cur_count: usize,
    batch_means: Vec<f64>,
}

impl BatchMeans {
    fn new(batch: usize) -> Self {
        Self {
            batch,
            sum: 0.0,
            count: 0,
            cur_sum: 0.0,
            cur_count: 0,
            batch_means: Vec::new(),
        }
    }

    fn push(&mut self, g: f64, position: usize) {
        if position / self.batch > self.batch_means.len() && self.cur_count > 0 {
            self.flush();
        }
        self.sum += g;
        self.count += 1;
        self.cur_sum += g;
        self.cur_count += 1;
    }

    fn flush(&mut self) {
        self.batch_means.push(self.cur_sum / self.cur_count as f64);
        self.cur_sum = 0.0;
        self.cur_count = 0;
    }

    fn report(mut self, seed: u64) -> Result<EstimateReport> {
        if self.cur_count > 0 {
            self.flush();
        }
        if self.count == 0 {
            return Err(Error::input("no eligible windows in the oracle series"));
        }
        let est = self.sum / self.count as f64;
        let b = self.batch_means.len();
        let se = if b > 1 {
            crate::stats::std_dev(&self.batch_means) / (b as f64).sqrt()
        } else {
            f64::NAN
        };
        Ok(EstimateReport::new(est, se, self.count, seed))
    }
}

/// Direct Monte Carlo of `E[g(X_{t..t+len}) | conditioning]` over sliding
/// windows of one long generated series. The standard error uses 200
/// batch means.
pub fn oracle_estimate(
    spec: &GeneratorSpec,
    len: usize,
    conditioning: Conditioning,
    v: f64,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<EstimateReport> {
    if len == 0 || spec.n < len {
        return Err(Error::input("oracle series shorter than one window"));
    }
    let mut stream = spec.kind.stream(spec.seed)?;
    let mut window: VecDeque<f64> = VecDeque::with_capacity(len + 1);
    let mut buf = vec![0.0; len];
    let mut acc = BatchMeans::new((spec.n / 200).max(1));
    // position of the most recent exceedance, for the union test
    let mut last_exceed: Option<usize> = None;
    for pos in 0..spec.n {
        let x = stream.next().expect("endless stream");
        if x > v {
            last_exceed = Some(pos);
        }
        window.push_back(x);
        if window.len() > len {
            window.pop_front();
        }
        if window.len() < len {
            continue;
        }
        let start = pos + 1 - len;
        let eligible = match conditioning {
            Conditioning::First => window[0] > v,
            Conditioning::Union => last_exceed.is_some_and(|e| e >= start),
            Conditioning::None => true,
        };
        if !eligible {
            continue;
        }
        for (b, w) in buf.iter_mut().zip(window.iter()) {
            *b = *w;
        }
        acc.push(g(&buf), start);
    }
    acc.report(spec.seed)
}

/// Oracle for a catalogue functional on a generator.
pub fn oracle_conditional_probability(
    spec: &GeneratorSpec,
    functional: &FunctionalSpec,
    n_direct: usize,
) -> Result<EstimateReport> {
    functional.validate()?;
    if functional.needs_marginal() {
        return Err(Error::input("generator oracles work on the Laplace scale only"));
    }
    let run = GeneratorSpec { n: n_direct, ..*spec };
    oracle_estimate(
        &run,
        functional.block_len(),
        functional.conditioning(),
        functional.v,
        &|w| functional.kernel(w),
    )
}

/// `P(max X_{1:d} > v)` by direct simulation.
pub fn oracle_union_probability(
    spec: &GeneratorSpec,
    v: f64,
    d: usize,
    n_direct: usize,
) -> Result<EstimateReport> {
    let run = GeneratorSpec { n: n_direct, ..*spec };
    oracle_estimate(&run, d, Conditioning::None, v, &|w| {
        w.iter().any(|&x| x > v) as u8 as f64
    })
}

/// Exact neighbours of a value in the Gaussian AR(1) chain on Laplace
/// margins. The chain is reversible, so both sides use the same recursion.
#[derive(Debug, Clone, Copy)]
pub struct GaussAr1Conditional {
    pub rho: f64,
}

impl GaussAr1Conditional {
    pub fn new(rho: f64) -> Result<Self> {
        GeneratorKind::GaussAr1 { rho }.validate()?;
        Ok(Self { rho })
    }

    fn walk(&self, y0: f64, len: usize, rng: &mut StreamRng, out: &mut Vec<f64>) {
        let s = (1.0 - self.rho * self.rho).sqrt();
        let mut y = y0;
        out.clear();
        for _ in 0..len {
            let e: f64 = StandardNormal.sample(rng);
            y = self.rho * y + s * e;
            out.push(gaussian_to_laplace(y));
        }
    }
}

impl ConditionalSampler for GaussAr1Conditional {
    fn sample_given(
        &self,
        x: f64,
        before: usize,
        after: usize,
        rng: &mut StreamRng,
        backward: &mut Vec<f64>,
        forward: &mut Vec<f64>,
    ) {
        let y0 = crate::stats::laplace_to_gaussian(x);
        self.walk(y0, after, rng, forward);
        self.walk(y0, before, rng, backward);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::FunctionalKind;
    use crate::stats::{ks_p_value, ks_statistic, laplace_cdf, laplace_quantile};

    fn normal_scores_acf(x: &[f64], lag: usize) -> f64 {
        let z: Vec<f64> = x
            .iter()
            .map(|&v| crate::stats::laplace_to_gaussian(v))
            .collect();
        let n = z.len() - lag;
        let m = crate::stats::mean(&z);
        let var = z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / z.len() as f64;
        (0..n).map(|i| (z[i] - m) * (z[i + lag] - m)).sum::<f64>() / (z.len() as f64 * var)
    }

    #[test]
    fn ar2_innovation_variance() {
        let (_, _, var) = ar2_moments(0.6, 0.3);
        assert!((var - 0.241429).abs() < 1e-6, "{var}");
        let displayed = 1.0 - 0.36 - 0.09 - 2.0 * (0.36 * 0.3) / 0.7;
        assert!((var - displayed).abs() < 1e-12);
    }

    #[test]
    fn margins_are_standard_laplace() {
        let kinds = [
            GeneratorKind::GaussAr1 { rho: 0.7 },
            GeneratorKind::GaussAr2 {
                theta1: 0.6,
                theta2: 0.3,
            },
            GeneratorKind::InvLogistic { gamma: 0.5 },
        ];
        for kind in kinds {
            let s = generate(&GeneratorSpec {
                kind,
                n: 1_000_000,
                seed: 3,
            })
            .unwrap();
            // thin to reduce serial dependence before the KS test
            let thinned: Vec<f64> = s.values.iter().step_by(20).copied().collect();
            let d = ks_statistic(&thinned, laplace_cdf);
            let p = ks_p_value(d, thinned.len());
            assert!(p > 0.01, "{kind:?}: p = {p}");
        }
    }

    #[test]
    fn ar1_autocorrelations_and_independence() {
        let s = generate(&GeneratorSpec {
            kind: GeneratorKind::GaussAr1 { rho: 0.7 },
            n: 1_000_000,
            seed: 5,
        })
        .unwrap();
        for lag in 1..=5 {
            let r = normal_scores_acf(&s.values, lag);
            assert!((r - 0.7f64.powi(lag as i32)).abs() < 0.01, "lag {lag}: {r}");
        }
        let iid = generate(&GeneratorSpec {
            kind: GeneratorKind::GaussAr1 { rho: 0.0 },
            n: 100_000,
            seed: 6,
        })
        .unwrap();
        assert!(normal_scores_acf(&iid.values, 1).abs() < 0.01);
    }

    #[test]
    fn ar2_yule_walker() {
        let s = generate(&GeneratorSpec {
            kind: GeneratorKind::GaussAr2 {
                theta1: 0.6,
                theta2: 0.3,
            },
            n: 1_000_000,
            seed: 8,
        })
        .unwrap();
        let (r1, r2, _) = ar2_moments(0.6, 0.3);
        assert!((normal_scores_acf(&s.values, 1) - r1).abs() < 0.01);
        assert!((normal_scores_acf(&s.values, 2) - r2).abs() < 0.01);
    }

    #[test]
    fn inverted_logistic_survival_matches_numeric_derivative() {
        let gamma = 0.5;
        let joint = |a: f64, b: f64| {
            (-(a.powf(1.0 / gamma) + b.powf(1.0 / gamma)).powf(gamma)).exp()
        };
        for &(y0, y1) in &[(0.3, 0.2), (1.0, 1.5), (2.5, 0.7), (4.0, 6.0)] {
            let h = 1e-5;
            let deriv = -(joint(y0 + h, y1) - joint(y0 - h, y1)) / (2.0 * h);
            let numeric = y0.exp() * deriv;
            let analytic = inv_logistic_log_survival(y0, y1, gamma).exp();
            assert!((numeric - analytic).abs() < 1e-8, "{y0} {y1}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn inverted_logistic_transition_passes_ks() {
        let gamma = 0.5;
        let y0 = 2.0;
        let mut rng = substream(10, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| inv_logistic_transition(y0, gamma, &mut rng))
            .collect();
        // conditional CDF from a trapezoid integral of the conditional density,
        // itself a numeric derivative of the survival
        let cdf = |y: f64| {
            let n = 4000;
            let h = y / n as f64;
            let dens = |t: f64| {
                let e = 1e-6;
                let a = inv_logistic_log_survival(y0, (t - e).max(0.0), gamma).exp();
                let b = inv_logistic_log_survival(y0, t + e, gamma).exp();
                (a - b) / (t + e - (t - e).max(0.0))
            };
            (0..n)
                .map(|i| 0.5 * h * (dens(i as f64 * h) + dens((i + 1) as f64 * h)))
                .sum::<f64>()
        };
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        // KS over a grid of evaluation points (quadrature at every draw is too slow)
        let mut d: f64 = 0.0;
        for q in 1..100 {
            let idx = q * sorted.len() / 100;
            let y = sorted[idx];
            d = d.max((cdf(y) - idx as f64 / sorted.len() as f64).abs());
        }
        assert!(ks_p_value(d, draws.len()) > 0.01, "d = {d}");
    }

    #[test]
    fn chi_oracle_on_independent_series() {
        let v = laplace_quantile(0.9);
        let f = FunctionalSpec::new(FunctionalKind::Chi, v, 1).unwrap();
        let spec = GeneratorSpec {
            kind: GeneratorKind::GaussAr1 { rho: 0.0 },
            n: 0,
            seed: 2,
        };
        let r = oracle_conditional_probability(&spec, &f, 1_000_000).unwrap();
        assert!((r.estimate - 0.1).abs() < 3.0 * r.std_error + 1e-3, "{r:?}");
        assert!(r.std_error > 0.0 && r.std_error < 0.005);
    }

    #[test]
    fn theta_oracle_is_a_probability_and_inv_logistic_chi_decays() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::InvLogistic { gamma: 0.5 },
            n: 0,
            seed: 4,
        };
        let mut last = f64::INFINITY;
        for q in [0.9, 0.99, 0.999] {
            let v = laplace_quantile(q);
            let chi = oracle_conditional_probability(
                &spec,
                &FunctionalSpec::new(FunctionalKind::Chi, v, 1).unwrap(),
                400_000,
            )
            .unwrap();
            assert!(chi.estimate < last, "{q}: {}", chi.estimate);
            last = chi.estimate;
            let theta = oracle_conditional_probability(
                &spec,
                &FunctionalSpec::new(FunctionalKind::Theta, v, 5).unwrap(),
                400_000,
            )
            .unwrap();
            assert!((0.0..=1.0).contains(&theta.estimate));
        }
    }

    #[test]
    fn union_oracle_on_independent_series() {
        let v = laplace_quantile(0.95);
        let spec = GeneratorSpec {
            kind: GeneratorKind::GaussAr1 { rho: 0.0 },
            n: 0,
            seed: 12,
        };
        let r = oracle_union_probability(&spec, v, 3, 1_000_000).unwrap();
        let exact = 1.0 - 0.95f64.powi(3);
        assert!((r.estimate - exact).abs() < 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(GeneratorKind::GaussAr1 { rho: 1.0 }.validate().is_err());
        assert!(GeneratorKind::InvLogistic { gamma: 0.0 }.validate().is_err());
        assert!(GeneratorKind::GaussAr2 {
            theta1: 0.8,
            theta2: 0.3
        }
        .validate()
        .is_err());
    }
}
