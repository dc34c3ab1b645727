//! δ-Laplace (generalized Gaussian) distribution and the Gaussian copula
//! used for residual dependence across lags.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::stats::{norm_cdf, norm_score};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaLaplace {
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl DeltaLaplace {
    pub fn new(mu: f64, sigma: f64, delta: f64) -> Result<Self> {
        if !(sigma > 0.0 && delta > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::input(format!(
                "delta-Laplace needs sigma > 0 and delta > 0, got ({mu}, {sigma}, {delta})"
            )));
        }
        Ok(Self { mu, sigma, delta })
    }

    /// Normalizing constant `log δ - log 2 - log σ - log Γ(1/δ)`.
    pub fn log_norm_const(&self) -> f64 {
        self.delta.ln() - std::f64::consts::LN_2 - self.sigma.ln() - ln_gamma(1.0 / self.delta)
    }

    pub fn log_density(&self, z: f64) -> f64 {
        self.log_norm_const() - ((z - self.mu) / self.sigma).abs().powf(self.delta)
    }

    /// `(F(z), 1 - F(z))`, each computed without cancellation.
    pub fn cdf_pair(&self, z: f64) -> (f64, f64) {
        let w = (z - self.mu) / self.sigma;
        if w == 0.0 {
            return (0.5, 0.5);
        }
        let a = 1.0 / self.delta;
        let t = w.abs().powf(self.delta);
        let far = 0.5 * gamma_ur(a, t);
        let near = 0.5 + 0.5 * gamma_lr(a, t);
        if w > 0.0 {
            (near, far)
        } else {
            (far, near)
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.cdf_pair(z).0
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::input(format!("quantile level must lie in (0, 1), got {q}")));
        }
        Ok(if q < 0.5 {
            self.tail_quantile(q, false)
        } else {
            self.tail_quantile(1.0 - q, true)
        })
    }

    /// Value whose lower (`upper = false`) or upper tail probability is `p <= 1/2`.
    pub fn tail_quantile(&self, p: f64, upper: bool) -> f64 {
        if p >= 0.5 {
            return self.mu;
        }
        let a = 1.0 / self.delta;
        let t = inverse_gamma_ur(a, 2.0 * p);
        let w = t.powf(1.0 / self.delta);
        if upper {
            self.mu + self.sigma * w
        } else {
            self.mu - self.sigma * w
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let gamma = Gamma::new(1.0 / self.delta, 1.0).expect("valid gamma shape");
        let w: f64 = gamma.sample(rng);
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        self.mu + self.sigma * s * w.powf(1.0 / self.delta)
    }
}

/// Solves `Q(a, t) = target` for `t`, with `Q` the regularized upper
/// incomplete gamma. Newton steps in `log t`, safeguarded by a bracket.
fn inverse_gamma_ur(a: f64, target: f64) -> f64 {
    if target >= 1.0 {
        return 0.0;
    }
    let lg = ln_gamma(a);
    let (mut lo, mut hi) = (0.0f64, a.max(1.0));
    while gamma_ur(a, hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let q = gamma_ur(a, t);
        let diff = q - target;
        if diff > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // dQ/dt = -t^(a-1) e^-t / Γ(a); Newton on log Q for tail accuracy
        let log_dens = (a - 1.0) * t.ln() - t - lg;
        let step = (q.ln() - target.ln()) * q / log_dens.exp();
        let mut next = t + step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.max(1e-300) {
            return next;
        }
        t = next;
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    t
}

/// Maximum-likelihood fit. The scale is profiled out in closed form
/// (`σ^δ = δ/n Σ|z-μ|^δ`), leaving a search over `(μ, log δ)`.
pub fn dl_mle(samples: &[f64]) -> Result<DeltaLaplace> {
    dl_mle_inner(samples, None, 1e-10)
}

/// Single simplex run started from `start`. Used inside outer searches where
/// the previous optimum is a good guess and a looser tolerance is enough.
pub fn dl_mle_warm(samples: &[f64], start: &DeltaLaplace, xtol: f64) -> Result<DeltaLaplace> {
    dl_mle_inner(samples, Some(start), xtol)
}

fn dl_mle_inner(samples: &[f64], warm: Option<&DeltaLaplace>, xtol: f64) -> Result<DeltaLaplace> {
    let n = samples.len();
    if n < 20 {
        return Err(Error::input(format!(
            "delta-Laplace fit needs at least 20 samples, got {n}"
        )));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::input("non-finite sample"));
    }
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Err(Error::input("degenerate (constant) sample"));
    }
    let spread = hi - lo;
    let nf = n as f64;

    let profile = |mu: f64, delta: f64| -> Option<(f64, f64)> {
        let s: f64 = samples.iter().map(|z| (z - mu).abs().powf(delta)).sum();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        let sigma = (delta * s / nf).powf(1.0 / delta);
        let nll = nf
            * (std::f64::consts::LN_2 + sigma.ln() + ln_gamma(1.0 / delta) - delta.ln())
            + nf / delta;
        Some((sigma, nll))
    };
    let objective = |p: &[f64]| {
        let delta = p[1].exp();
        if !(0.05..=50.0).contains(&delta) {
            return f64::INFINITY;
        }
        profile(p[0], delta).map_or(f64::INFINITY, |(_, nll)| nll)
    };

    // μ is searched in units of the sample range around a fixed anchor
    let anchor = 0.5 * (lo + hi);
    let scaled = |p: &[f64]| objective(&[anchor + p[0] * spread, p[1]]);
    let to_scaled = |mu: f64, log_delta: f64| vec![(mu - anchor) / spread, log_delta];
    let nm = NelderMead::default().with_xtol(xtol).with_step(0.1);
    let best = match warm {
        Some(w) => {
            let x0 = to_scaled(w.mu, w.delta.clamp(0.06, 45.0).ln());
            nm.minimize(scaled, &x0)
        }
        None => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = crate::stats::quantile_sorted(&sorted, 0.5);
            let mean = crate::stats::mean(samples);
            let starts = vec![to_scaled(median, 0.0), to_scaled(mean, 2f64.ln())];
            nm.minimize_multistart(scaled, &starts)
        }
    }
    .require_converged("delta-Laplace fit")?;
    let mu = anchor + best.x[0] * spread;
    let delta = best.x[1].exp();
    let (sigma, _) = profile(mu, delta).expect("finite at optimum");
    DeltaLaplace::new(mu, sigma, delta)
}

// ---------------------------------------------------------------------------
// Gaussian copula

/// Precision of the lag vector given the conditioning value: the
/// `(k+1)`-dimensional AR(1)-type tridiagonal matrix with its first row and
/// column removed.
pub fn build_conditional_precision(rho: f64, k: usize) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::input(format!("|rho| must be < 1, got {rho}")));
    }
    if k == 0 {
        return Err(Error::input("dimension must be at least 1"));
    }
    let mut q = DMatrix::zeros(k, k);
    for i in 0..k {
        q[(i, i)] = if i + 1 == k { 1.0 } else { 1.0 + rho * rho };
        if i + 1 < k {
            q[(i, i + 1)] = -rho;
            q[(i + 1, i)] = -rho;
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaKind {
    Independence,
    GaussianAr1Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCopula {
    pub kind: CopulaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub dim: usize,
}

impl ResidualCopula {
    pub fn independence(dim: usize) -> Self {
        Self {
            kind: CopulaKind::Independence,
            rho: None,
            dim,
        }
    }

    pub fn gaussian(rho: f64, dim: usize) -> Result<Self> {
        build_conditional_precision(rho, dim)?;
        Ok(Self {
            kind: CopulaKind::GaussianAr1Conditional,
            rho: Some(rho),
            dim,
        })
    }

    /// Correlation matrix: the inverse precision rescaled to unit diagonal.
    pub fn correlation(&self) -> Result<DMatrix<f64>> {
        match (self.kind, self.rho) {
            (CopulaKind::Independence, _) => Ok(DMatrix::identity(self.dim, self.dim)),
            (CopulaKind::GaussianAr1Conditional, Some(rho)) => {
                let q = build_conditional_precision(rho, self.dim)?;
                let cov = q
                    .cholesky()
                    .ok_or_else(|| Error::Internal("precision not positive definite".into()))?
                    .inverse();
                let d: Vec<f64> = (0..self.dim).map(|i| cov[(i, i)].sqrt()).collect();
                Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
                    if i == j {
                        1.0
                    } else {
                        cov[(i, j)] / (d[i] * d[j])
                    }
                }))
            }
            (CopulaKind::GaussianAr1Conditional, None) => {
                Err(Error::input("Gaussian copula requires rho"))
            }
        }
    }

    pub fn factor(&self) -> Result<CopulaFactor> {
        let p = self.correlation()?;
        let chol = p
            .cholesky()
            .ok_or_else(|| Error::Internal("correlation matrix not positive definite".into()))?;
        Ok(CopulaFactor { l: chol.l() })
    }
}

/// Cholesky factor of the copula correlation matrix. The factor of any
/// leading sub-block is the leading block of this factor, which is what
/// truncated residual vectors need.
#[derive(Debug, Clone)]
pub struct CopulaFactor {
    l: DMatrix<f64>,
}

impl CopulaFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Log copula density at normal scores `w` (the leading `w.len()` lags).
    pub fn log_density(&self, w: &[f64]) -> f64 {
        let m = w.len();
        debug_assert!(m <= self.dim());
        let mut y = vec![0.0; m];
        let mut log_det = 0.0;
        let mut quad = 0.0;
        let mut plain = 0.0;
        for i in 0..m {
            let mut s = w[i];
            for j in 0..i {
                s -= self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
            log_det += self.l[(i, i)].ln();
            quad += y[i] * y[i];
            plain += w[i] * w[i];
        }
        -log_det - 0.5 * quad + 0.5 * plain
    }

    /// Correlated standard normal vector.
    pub fn sample_normals<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.dim();
        let e: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        (0..k)
            .map(|i| (0..=i).map(|j| self.l[(i, j)] * e[j]).sum())
            .collect()
    }
}

/// Draws one residual vector: correlated normals pushed through each
/// component's δ-Laplace quantile.
pub fn gaussian_copula_sample<R: Rng + ?Sized>(
    factor: &CopulaFactor,
    marginals: &[DeltaLaplace],
    rng: &mut R,
) -> Vec<f64> {
    assert_eq!(marginals.len(), factor.dim(), "one marginal per copula dimension");
    let w = factor.sample_normals(rng);
    w.iter()
        .zip(marginals)
        .map(|(&wi, m)| {
            let tail = norm_cdf(-wi.abs());
            m.tail_quantile(tail, wi > 0.0)
        })
        .collect()
}

/// Normal score `Φ^{-1}(F(z))` computed from the smaller tail.
pub fn normal_score(m: &DeltaLaplace, z: f64) -> f64 {
    let (f, sf) = m.cdf_pair(z);
    norm_score(f, sf)
}
