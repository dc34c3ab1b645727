//! Norming functions `a_i(x)`, `b_i(x)` and the structured parameterizations
//! of the lag coefficients `α_1, α_2, ...`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logit inputs are clamped to this magnitude so every map stays strictly
/// inside its open interval in double precision.
const LOGIT_CLAMP: f64 = 30.0;

/// Lower and upper margin for β on the optimizer scale.
pub const BETA_EPS: f64 = 1e-6;

fn logistic(u: f64) -> f64 {
    let u = u.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maps the real line onto `(lo, hi)`.
pub fn to_interval(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * logistic(u)
}

/// Inverse of [`to_interval`].
pub fn from_interval(x: f64, lo: f64, hi: f64) -> f64 {
    logit((x - lo) / (hi - lo))
}

/// `sign(x)|x|^p`; keeps the recurrence defined for negative coefficients
/// and reduces to the plain power for `p = 1` or `x >= 0`.
fn signed_pow(x: f64, p: f64) -> f64 {
    x.signum() * x.abs().powf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// `a = α x`, `b = x^β`
    Model1,
    /// `a = α x`, `b = 1 + (α x)^β`, α ≥ 0
    Model2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum AlphaStructure {
    Free { alpha: Vec<f64> },
    Geometric { alpha: f64 },
    /// Order-2 autocorrelation recurrence in partial-autocorrelation form.
    ArCorr2 { r1: f64, r2: f64 },
    ArCorr3 { r1: f64, r2: f64, r3: f64 },
    /// Order-`l` nonlinear recurrence: free initial values `α_1..α_{l-1}`,
    /// weights from the identifiable soft-max of `Γ_1..Γ_{l-1}`.
    Pt {
        init: Vec<f64>,
        c: f64,
        delta: f64,
        gamma_raw: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Free,
    Geometric,
    Ar2,
    Ar3,
    Pt { order: usize },
}

impl AlphaStructure {
    pub fn kind(&self) -> StructureKind {
        match self {
            AlphaStructure::Free { .. } => StructureKind::Free,
            AlphaStructure::Geometric { .. } => StructureKind::Geometric,
            AlphaStructure::ArCorr2 { .. } => StructureKind::Ar2,
            AlphaStructure::ArCorr3 { .. } => StructureKind::Ar3,
            AlphaStructure::Pt { init, .. } => StructureKind::Pt {
                order: init.len() + 1,
            },
        }
    }

    /// Checks the parameter-space invariants.
    pub fn validate(&self) -> Result<()> {
        let open = |r: f64, name: &str| {
            if r.abs() < 1.0 {
                Ok(())
            } else {
                Err(Error::input(format!("{name} must lie in (-1, 1), got {r}")))
            }
        };
        match self {
            AlphaStructure::Free { alpha } => {
                if let Some(a) = alpha.iter().find(|a| !(a.abs() <= 1.0)) {
                    return Err(Error::input(format!("free alpha {a} outside [-1, 1]")));
                }
            }
            AlphaStructure::Geometric { alpha } => {
                if !(alpha.abs() <= 1.0) {
                    return Err(Error::input(format!("alpha {alpha} outside [-1, 1]")));
                }
            }
            AlphaStructure::ArCorr2 { r1, r2 } => {
                open(*r1, "r1")?;
                open(*r2, "r2")?;
            }
            AlphaStructure::ArCorr3 { r1, r2, r3 } => {
                open(*r1, "r1")?;
                open(*r2, "r2")?;
                open(*r3, "r3")?;
            }
            AlphaStructure::Pt {
                init,
                c,
                delta,
                gamma_raw,
            } => {
                if init.is_empty() || init.len() != gamma_raw.len() {
                    return Err(Error::input(
                        "PT structure needs order >= 2 with one weight parameter per initial value",
                    ));
                }
                if let Some(a) = init.iter().find(|a| !(a.abs() <= 1.0)) {
                    return Err(Error::input(format!("PT initial alpha {a} outside [-1, 1]")));
                }
                if !(*delta > 0.0) || !delta.is_finite() {
                    return Err(Error::input(format!("PT delta must be positive, got {delta}")));
                }
                let bound = pt_c_bound(&pt_weights(gamma_raw), *delta);
                if !(*c > 0.0 && *c < bound) {
                    return Err(Error::input(format!(
                        "PT constant c = {c} violates 0 < c < {bound} (sum of gamma^(1+delta) bound)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether `alpha_sequence` can go beyond the fitted horizon.
    pub fn extrapolates(&self) -> bool {
        !matches!(self, AlphaStructure::Free { .. })
    }
}

/// Autoregressive coefficients from order-2 partial autocorrelations.
pub fn ar2_theta(r1: f64, r2: f64) -> (f64, f64) {
    (r1 * (1.0 - r2), r2)
}

/// Autoregressive coefficients from order-3 partial autocorrelations.
pub fn ar3_theta(r1: f64, r2: f64, r3: f64) -> (f64, f64, f64) {
    (
        r1 - r1 * r2 - r2 * r3,
        r2 - r1 * r3 + r1 * r2 * r3,
        r3,
    )
}

/// Weights on the simplex from `l - 1` unconstrained values under the
/// sum-to-zero constraint (the last raw value is minus the sum of the others).
pub fn pt_weights(gamma_raw: &[f64]) -> Vec<f64> {
    let last = -gamma_raw.iter().sum::<f64>();
    let m = gamma_raw.iter().copied().fold(last, f64::max);
    let mut w: Vec<f64> = gamma_raw.iter().map(|g| (g - m).exp()).collect();
    w.push((last - m).exp());
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Supremum of admissible `c`: `(Σ γ_i^{1+δ})^{-1/δ}`. Below it the
/// recurrence is a contraction and keeps `|α_t| < 1`.
pub fn pt_c_bound(gamma: &[f64], delta: f64) -> f64 {
    // log-sum-exp so large δ does not underflow
    let logs: Vec<f64> = gamma.iter().map(|g| (1.0 + delta) * g.ln()).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    (-lse / delta).exp()
}

/// Range of `log δ` for the recurrence exponent on the optimizer scale.
const PT_LOG_DELTA: f64 = 4.0;

/// `α_1..α_len`. Recurrence structures continue past any fitted horizon;
/// the free structure cannot and errors when `len` exceeds its size.
pub fn alpha_sequence(structure: &AlphaStructure, len: usize) -> Result<Vec<f64>> {
    structure.validate()?;
    match structure {
        AlphaStructure::Free { alpha } => {
            if len > alpha.len() {
                return Err(Error::input(format!(
                    "free alpha structure has {} lags; cannot extrapolate to {len}",
                    alpha.len()
                )));
            }
            Ok(alpha[..len].to_vec())
        }
        AlphaStructure::Geometric { alpha } => Ok(linear_recurrence(&[*alpha], &[1.0], len)),
        AlphaStructure::ArCorr2 { r1, r2 } => {
            let (t1, t2) = ar2_theta(*r1, *r2);
            Ok(linear_recurrence(&[t1, t2], &[1.0, t1 / (1.0 - t2)], len))
        }
        AlphaStructure::ArCorr3 { r1, r2, r3 } => {
            let (t1, t2, t3) = ar3_theta(*r1, *r2, *r3);
            let a1 = (t1 + t2 * t3) / (1.0 - t2 - t1 * t3 - t3 * t3);
            let a2 = t2 + (t1 + t3) * a1;
            Ok(linear_recurrence(&[t1, t2, t3], &[1.0, a1, a2], len))
        }
        AlphaStructure::Pt {
            init,
            c,
            delta,
            gamma_raw,
        } => {
            let gamma = pt_weights(gamma_raw);
            let l = gamma.len();
            let mut seq = Vec::with_capacity(len + 1);
            seq.push(1.0);
            seq.extend_from_slice(init);
            while seq.len() <= len {
                let t = seq.len();
                let s: f64 = (1..=l)
                    .map(|i| gamma[i - 1] * signed_pow(gamma[i - 1] * seq[t - i], *delta))
                    .sum();
                seq.push(c * signed_pow(s, 1.0 / delta));
            }
            seq.truncate(len + 1);
            Ok(seq[1..].to_vec())
        }
    }
}

/// `α_t = Σ θ_j α_{t-j}` continued from `start = [α_0, α_1, ...]`; returns `α_1..α_len`.
fn linear_recurrence(theta: &[f64], start: &[f64], len: usize) -> Vec<f64> {
    let mut seq = start.to_vec();
    while seq.len() <= len {
        let t = seq.len();
        let next = theta
            .iter()
            .enumerate()
            .map(|(j, th)| th * seq[t - 1 - j])
            .sum();
        seq.push(next);
    }
    seq.truncate(len + 1);
    seq[1..].to_vec()
}

/// The order-2 nonlinear-recurrence structure reproducing the AR(2)
/// autocorrelation sequence with coefficients `(θ1, θ2)`.
pub fn pt_from_ar2(theta1: f64, theta2: f64) -> Result<AlphaStructure> {
    if !(theta1 > 0.0 && theta2 > 0.0) {
        return Err(Error::input("theta1 and theta2 must be positive"));
    }
    if theta1 == theta2 {
        return Err(Error::input("theta1 = theta2 makes the mapping singular"));
    }
    if !(theta2 < 1.0 - theta1 && theta2 < 1.0 + theta1) {
        return Err(Error::input("coefficients outside the stationarity triangle"));
    }
    // (θ1 - √(θ1θ2))/(θ1 - θ2) and (θ1 - θ2)²/(θ1 - 2√(θ1θ2) + θ2), with the
    // common factor √θ1 - √θ2 cancelled to avoid loss of precision
    let (s1, s2) = (theta1.sqrt(), theta2.sqrt());
    let gamma1 = s1 / (s1 + s2);
    let c = (s1 + s2).powi(2);
    // with two weights the identifiable soft-max gives γ1 = 1/(1 + e^{-2Γ1})
    let gamma_raw = 0.5 * logit(gamma1);
    let s = AlphaStructure::Pt {
        init: vec![theta1 / (1.0 - theta2)],
        c,
        delta: 1.0,
        gamma_raw: vec![gamma_raw],
    };
    s.validate()?;
    Ok(s)
}

impl StructureKind {
    pub fn n_params(&self, k: usize) -> usize {
        match self {
            StructureKind::Free => k,
            StructureKind::Geometric => 1,
            StructureKind::Ar2 => 2,
            StructureKind::Ar3 => 3,
            StructureKind::Pt { order } => 2 * (order - 1) + 2,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if let StructureKind::Pt { order } = self {
            if *order < 2 || *order > k {
                return Err(Error::input(format!(
                    "PT order must lie in 2..={k}, got {order}"
                )));
            }
        }
        Ok(())
    }

    /// Structure from unconstrained values. `nonneg` confines free and
    /// geometric coefficients to `[0, 1]` (needed by Model 2).
    pub fn from_unconstrained(&self, u: &[f64], k: usize, nonneg: bool) -> AlphaStructure {
        let alo = if nonneg { 0.0 } else { -1.0 };
        match self {
            StructureKind::Free => AlphaStructure::Free {
                alpha: u[..k].iter().map(|&x| to_interval(x, alo, 1.0)).collect(),
            },
            StructureKind::Geometric => AlphaStructure::Geometric {
                alpha: to_interval(u[0], alo, 1.0),
            },
            StructureKind::Ar2 => AlphaStructure::ArCorr2 {
                r1: to_interval(u[0], -1.0, 1.0),
                r2: to_interval(u[1], -1.0, 1.0),
            },
            StructureKind::Ar3 => AlphaStructure::ArCorr3 {
                r1: to_interval(u[0], -1.0, 1.0),
                r2: to_interval(u[1], -1.0, 1.0),
                r3: to_interval(u[2], -1.0, 1.0),
            },
            StructureKind::Pt { order } => {
                let m = order - 1;
                let init = u[..m].iter().map(|&x| to_interval(x, alo, 1.0)).collect();
                let gamma_raw = u[m..2 * m].to_vec();
                let delta = to_interval(u[2 * m], -PT_LOG_DELTA, PT_LOG_DELTA).exp();
                let bound = pt_c_bound(&pt_weights(&gamma_raw), delta);
                AlphaStructure::Pt {
                    init,
                    c: to_interval(u[2 * m + 1], 0.0, bound),
                    delta,
                    gamma_raw,
                }
            }
        }
    }

    /// Inverse of [`StructureKind::from_unconstrained`].
    pub fn to_unconstrained(s: &AlphaStructure, nonneg: bool) -> Vec<f64> {
        let alo = if nonneg { 0.0 } else { -1.0 };
        match s {
            AlphaStructure::Free { alpha } => {
                alpha.iter().map(|&a| from_interval(a, alo, 1.0)).collect()
            }
            AlphaStructure::Geometric { alpha } => vec![from_interval(*alpha, alo, 1.0)],
            AlphaStructure::ArCorr2 { r1, r2 } => {
                vec![from_interval(*r1, -1.0, 1.0), from_interval(*r2, -1.0, 1.0)]
            }
            AlphaStructure::ArCorr3 { r1, r2, r3 } => vec![
                from_interval(*r1, -1.0, 1.0),
                from_interval(*r2, -1.0, 1.0),
                from_interval(*r3, -1.0, 1.0),
            ],
            AlphaStructure::Pt {
                init,
                c,
                delta,
                gamma_raw,
            } => {
                let mut u: Vec<f64> = init.iter().map(|&a| from_interval(a, alo, 1.0)).collect();
                u.extend_from_slice(gamma_raw);
                u.push(from_interval(delta.ln(), -PT_LOG_DELTA, PT_LOG_DELTA));
                let bound = pt_c_bound(&pt_weights(gamma_raw), *delta);
                u.push(from_interval(*c, 0.0, bound));
                u
            }
        }
    }

    /// Starting structure whose lag-1 coefficient is about `alpha1`.
    pub fn initial(&self, alpha1: f64, k: usize, nonneg: bool) -> AlphaStructure {
        let lo = if nonneg { 0.01 } else { -0.95 };
        let a = alpha1.clamp(lo, 0.95);
        match self {
            StructureKind::Free => AlphaStructure::Free {
                alpha: (1..=k).map(|i| a.powi(i as i32).max(lo)).collect(),
            },
            StructureKind::Geometric => AlphaStructure::Geometric { alpha: a },
            StructureKind::Ar2 => AlphaStructure::ArCorr2 { r1: a, r2: 0.0 },
            StructureKind::Ar3 => AlphaStructure::ArCorr3 {
                r1: a,
                r2: 0.0,
                r3: 0.0,
            },
            StructureKind::Pt { order } => {
                let m = order - 1;
                let gamma_raw = vec![0.0; m];
                let delta = 1.0;
                let bound = pt_c_bound(&pt_weights(&gamma_raw), delta);
                AlphaStructure::Pt {
                    init: (1..=m).map(|i| a.powi(i as i32).max(lo)).collect(),
                    c: 0.9 * bound,
                    delta,
                    gamma_raw,
                }
            }
        }
    }
}

/// β on the optimizer scale: the open interval `(ε, 1 - ε)`.
pub fn beta_from_unconstrained(u: f64) -> f64 {
    to_interval(u, BETA_EPS, 1.0 - BETA_EPS)
}

pub fn beta_to_unconstrained(beta: f64) -> f64 {
    from_interval(beta.clamp(2.0 * BETA_EPS, 1.0 - 2.0 * BETA_EPS), BETA_EPS, 1.0 - BETA_EPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormingSpec {
    pub model: Model,
    pub alpha: AlphaStructure,
    pub beta: f64,
    /// Horizon `k`: number of lags modelled.
    pub k: usize,
}

impl NormingSpec {
    pub fn new(model: Model, alpha: AlphaStructure, beta: f64, k: usize) -> Result<Self> {
        let spec = Self {
            model,
            alpha,
            beta,
            k,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::input("horizon k must be at least 1"));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::input(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        self.alpha.kind().validate(self.k)?;
        let seq = alpha_sequence(&self.alpha, self.k)?;
        if self.model == Model::Model2 {
            if let Some(a) = seq.iter().find(|&&a| a < 0.0) {
                return Err(Error::input(format!(
                    "Model 2 needs non-negative alpha; structure gives {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn alphas(&self, len: usize) -> Result<Vec<f64>> {
        let seq = alpha_sequence(&self.alpha, len)?;
        if self.model == Model::Model2 && seq.iter().any(|&a| a < 0.0) {
            return Err(Error::input("Model 2 needs non-negative alpha"));
        }
        Ok(seq)
    }
}

/// `a_i(x)` given the lag coefficient `alpha`.
pub fn norm_location(alpha: f64, x: f64) -> f64 {
    alpha * x
}

/// `b_i(x)`; `0^0` is taken as 1, so Model 2 with `α = β = 0` gives 2.
pub fn norm_scale(model: Model, alpha: f64, beta: f64, x: f64) -> f64 {
    match model {
        Model::Model1 => x.powf(beta),
        Model::Model2 => 1.0 + (alpha * x).powf(beta),
    }
}

/// Norming for both sides of a conditioning exceedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardForwardSpec {
    pub forward: NormingSpec,
    pub backward: NormingSpec,
    pub symmetric: bool,
}

impl BackwardForwardSpec {
    pub fn symmetric(spec: NormingSpec) -> Self {
        Self {
            forward: spec.clone(),
            backward: spec,
            symmetric: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.forward.validate()?;
        self.backward.validate()?;
        if self.forward.k != self.backward.k {
            return Err(Error::input("forward and backward horizons differ"));
        }
        if self.symmetric && self.forward != self.backward {
            return Err(Error::input("symmetric spec with differing sides"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ar2_from_theta(t1: f64, t2: f64) -> AlphaStructure {
        // invert θ1 = r1 (1 - r2), θ2 = r2
        AlphaStructure::ArCorr2 {
            r1: t1 / (1.0 - t2),
            r2: t2,
        }
    }

    #[test]
    fn ar2_hand_values() {
        let s = ar2_from_theta(0.6, 0.3);
        let a = alpha_sequence(&s, 5).unwrap();
        assert!((a[0] - 6.0 / 7.0).abs() < 1e-12);
        assert!((a[1] - (0.6 * 6.0 / 7.0 + 0.3)).abs() < 1e-12);
        assert!((a[1] - 0.814286).abs() < 1e-6);
        for t in 1..5 {
            let prev2 = if t == 1 { 1.0 } else { a[t - 2] };
            assert!((a[t] - (0.6 * a[t - 1] + 0.3 * prev2)).abs() < 1e-12);
        }
    }

    #[test]
    fn ar2_with_zero_r2_is_geometric() {
        let s = AlphaStructure::ArCorr2 { r1: 0.37, r2: 0.0 };
        let a = alpha_sequence(&s, 20).unwrap();
        let g = alpha_sequence(&AlphaStructure::Geometric { alpha: 0.37 }, 20).unwrap();
        assert_eq!(a, g);
        let mut p = 1.0;
        for v in &a {
            p *= 0.37;
            assert_eq!(*v, p);
        }
        let g = alpha_sequence(&AlphaStructure::Geometric { alpha: 1.0 }, 7).unwrap();
        assert!(g.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn ar3_matches_yule_walker() {
        // autocorrelations of a stationary AR(3) satisfy the recurrence from lag 1
        let s = AlphaStructure::ArCorr3 {
            r1: 0.5,
            r2: -0.3,
            r3: 0.2,
        };
        let (t1, t2, t3) = ar3_theta(0.5, -0.3, 0.2);
        let a = alpha_sequence(&s, 30).unwrap();
        let rho = |i: isize| if i == 0 { 1.0 } else { a[i.unsigned_abs() - 1] };
        for t in 1..30isize {
            let rhs = t1 * rho(t - 1) + t2 * rho(t - 2) + t3 * rho(t - 3);
            assert!((rho(t) - rhs).abs() < 1e-12, "lag {t}");
        }
    }

    #[test]
    fn pt_from_ar2_hand_values() {
        let s = pt_from_ar2(0.6, 0.3).unwrap();
        if let AlphaStructure::Pt { c, gamma_raw, .. } = &s {
            assert!((pt_weights(gamma_raw)[0] - 0.585786).abs() < 1e-6);
            assert!((c - 1.748528).abs() < 1e-6);
        } else {
            panic!();
        }
        let pt = alpha_sequence(&s, 30).unwrap();
        let ar = alpha_sequence(&ar2_from_theta(0.6, 0.3), 30).unwrap();
        assert!((pt[1] - 0.814286).abs() < 1e-6);
        for (x, y) in pt.iter().zip(&ar) {
            assert!((x - y).abs() < 1e-6);
        }
        let pt = alpha_sequence(&pt_from_ar2(0.5, 0.2).unwrap(), 20).unwrap();
        let ar = alpha_sequence(&ar2_from_theta(0.5, 0.2), 20).unwrap();
        for (x, y) in pt.iter().zip(&ar) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(pt_from_ar2(0.3, 0.3).unwrap_err().is_input());
    }

    #[test]
    fn pt_constraint_is_enforced() {
        let s = AlphaStructure::Pt {
            init: vec![0.5],
            c: 5.0,
            delta: 1.0,
            gamma_raw: vec![0.0],
        };
        assert!(alpha_sequence(&s, 5).unwrap_err().is_input());
    }

    #[test]
    fn norming_hand_values() {
        assert_eq!(norm_scale(Model::Model1, 0.3, 0.0, 5.0), 1.0);
        assert!((norm_location(0.49, 4.0) - 1.96).abs() < 1e-15);
        assert!((norm_scale(Model::Model1, 0.49, 0.5, 4.0) - 2.0).abs() < 1e-15);
        assert_eq!(norm_scale(Model::Model2, 0.0, 0.4, 3.0), 1.0);
        assert_eq!(norm_scale(Model::Model2, 0.0, 0.0, 3.0), 2.0);
    }

    #[test]
    fn model2_rejects_negative_alpha() {
        let spec = NormingSpec::new(
            Model::Model2,
            AlphaStructure::Geometric { alpha: -0.5 },
            0.2,
            3,
        );
        assert!(spec.unwrap_err().is_input());
    }

    #[test]
    fn free_structure_cannot_extrapolate() {
        let s = AlphaStructure::Free {
            alpha: vec![0.5, 0.2],
        };
        assert_eq!(alpha_sequence(&s, 2).unwrap(), vec![0.5, 0.2]);
        assert!(alpha_sequence(&s, 3).unwrap_err().is_input());
    }

    #[test]
    fn transforms_midpoint_and_saturation() {
        assert_eq!(to_interval(0.0, -1.0, 1.0), 0.0);
        assert!((beta_from_unconstrained(0.0) - 0.5).abs() < 1e-15);
        for &u in &[-38.0, 38.0] {
            let r = to_interval(u, -1.0, 1.0);
            assert!(r > -1.0 && r < 1.0);
            let b = beta_from_unconstrained(u);
            assert!(b > 0.0 && b < 1.0);
        }
    }

    fn kinds() -> Vec<StructureKind> {
        vec![
            StructureKind::Free,
            StructureKind::Geometric,
            StructureKind::Ar2,
            StructureKind::Ar3,
            StructureKind::Pt { order: 2 },
            StructureKind::Pt { order: 3 },
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn unconstrained_round_trip(
            u in prop::collection::vec(-15.0f64..15.0, 6),
            which in 0usize..6,
            nonneg in any::<bool>(),
        ) {
            let kind = kinds()[which];
            let k = 4;
            let n = kind.n_params(k);
            let s = kind.from_unconstrained(&u[..n], k, nonneg);
            prop_assert!(s.validate().is_ok());
            let back = StructureKind::to_unconstrained(&s, nonneg);
            for (a, b) in u[..n].iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0) * 1e3, "{} {}", a, b);
            }
            let s2 = kind.from_unconstrained(&back, k, nonneg);
            let (a1, a2) = (alpha_sequence(&s, k).unwrap(), alpha_sequence(&s2, k).unwrap());
            // near-saturated partial correlations lose a few digits on the way back
            for (x, y) in a1.iter().zip(&a2) {
                prop_assert!((x - y).abs() < 1e-8, "{} {} {:e}", x, y, x - y);
            }
        }

        #[test]
        fn alphas_stay_in_unit_interval(
            u in prop::collection::vec(-6.0f64..6.0, 6),
            which in 0usize..6,
            len in 1usize..=50,
        ) {
            let kind = kinds()[which];
            let k = 4;
            let n = kind.n_params(k);
            let s = kind.from_unconstrained(&u[..n], k, false);
            let len = if kind == StructureKind::Free { len.min(k) } else { len };
            for a in alpha_sequence(&s, len).unwrap() {
                prop_assert!(a.abs() <= 1.0 + 1e-12, "{}", a);
            }
        }

        #[test]
        fn scale_is_positive(
            alpha in 0.0f64..=1.0, beta in 0.0f64..1.0, x in 1e-3f64..50.0,
        ) {
            prop_assert!(norm_scale(Model::Model1, alpha, beta, x) > 0.0);
            prop_assert!(norm_scale(Model::Model2, alpha, beta, x) > 0.0);
        }
    }

    #[test]
    fn pt_ar2_equivalence_grid() {
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let t1 = 0.05 + 0.09 * i as f64;
                let t2 = 0.02 + 0.05 * j as f64;
                if t1 == t2 || t1 + t2 >= 0.99 {
                    continue;
                }
                let pt = alpha_sequence(&pt_from_ar2(t1, t2).unwrap(), 30).unwrap();
                let ar = alpha_sequence(&ar2_from_theta(t1, t2), 30).unwrap();
                for (x, y) in pt.iter().zip(&ar) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }
}
