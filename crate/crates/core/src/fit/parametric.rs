//! Parametric residual model: δ-Laplace parameters as exponential curves in
//! the lag, plus a Gaussian copula across lags. Fitted in two stages: the
//! norming and curves under an independence copula, then the copula
//! correlation alone with everything else frozen.

use serde::{Deserialize, Serialize};

use super::semiparametric::{check_lag_counts, small_sample_warning, Layout};
use super::{
    residual_nll, Direction, ExceedanceBlockSet, FitMetadata, FitOptions, FittedConditionalModel,
    LagData, Norming, ResidualModel,
};
use crate::dists::{normal_score, DeltaLaplace, ResidualCopula};
use crate::error::{Error, Result};
use crate::norming::{from_interval, to_interval, Model, StructureKind};
use crate::optim::NelderMead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `σ_j = (1+u)^{-β} (1 + C e^{-D(j-1)})`, `C ∈ (0, 3)`.
    ThresholdScaled,
    /// `σ_j = 1 + C e^{-D(j-1)}`, `C ∈ (-1, 0)`.
    Unscaled,
}

/// `μ_j = A e^{-B(j-1)}`, `σ_j` per [`Parameterization`],
/// `δ_j = 1 + E e^{-F(j-1)}` for lag `j ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCurves {
    pub parameterization: Parameterization,
    /// Fit threshold; enters the threshold-scaled σ curve.
    pub u: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl ResidualCurves {
    /// Open intervals for `A..F`.
    pub fn bounds(p: Parameterization) -> [(f64, f64); 6] {
        let c = match p {
            Parameterization::ThresholdScaled => (0.0, 3.0),
            Parameterization::Unscaled => (-1.0, 0.0),
        };
        [(0.0, 1.0), (0.0, 5.0), c, (0.0, 5.0), (0.0, 1.0), (0.0, 5.0)]
    }

    fn values(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    pub fn validate(&self) -> Result<()> {
        for ((lo, hi), v) in Self::bounds(self.parameterization).iter().zip(self.values()) {
            if !(v > *lo && v < *hi) {
                return Err(Error::input(format!(
                    "curve parameter {v} outside ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    pub fn from_unconstrained(p: Parameterization, u: f64, th: &[f64]) -> Self {
        let b = Self::bounds(p);
        let v: Vec<f64> = (0..6).map(|i| to_interval(th[i], b[i].0, b[i].1)).collect();
        Self {
            parameterization: p,
            u,
            a: v[0],
            b: v[1],
            c: v[2],
            d: v[3],
            e: v[4],
            f: v[5],
        }
    }

    pub fn to_unconstrained(&self) -> Vec<f64> {
        let b = Self::bounds(self.parameterization);
        self.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| from_interval(v, b[i].0, b[i].1))
            .collect()
    }

    /// Residual margin at lag `lag ≥ 1` under norming exponent `beta`.
    pub fn at(&self, lag: usize, beta: f64) -> Result<DeltaLaplace> {
        let i = lag as f64 - 1.0;
        let mu = self.a * (-self.b * i).exp();
        let shape = 1.0 + self.c * (-self.d * i).exp();
        let sigma = match self.parameterization {
            Parameterization::ThresholdScaled => (1.0 + self.u).powf(-beta) * shape,
            Parameterization::Unscaled => shape,
        };
        DeltaLaplace::new(mu, sigma, 1.0 + self.e * (-self.f * i).exp())
    }

    fn start(p: Parameterization, u: f64) -> Self {
        let c = match p {
            Parameterization::ThresholdScaled => 0.8,
            Parameterization::Unscaled => -0.3,
        };
        Self {
            parameterization: p,
            u,
            a: 0.2,
            b: 1.0,
            c,
            d: 0.7,
            e: 0.5,
            f: 1.0,
        }
    }
}

/// Normal scores of each block's observed residuals under the fitted
/// curves. Rows are the leading lags present in the block.
pub fn stage2_scores(
    blocks: &ExceedanceBlockSet,
    norming: &Norming,
    curves: &ResidualCurves,
) -> Result<Vec<Vec<f64>>> {
    let spec = norming.forward();
    let alphas = spec.alphas(blocks.k)?;
    let margins = (1..=blocks.k)
        .map(|j| curves.at(j, spec.beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(blocks
        .blocks
        .iter()
        .map(|b| {
            b.forward
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    let a = alphas[i];
                    let z = (y - a * b.x) / crate::norming::norm_scale(spec.model, a, spec.beta, b.x);
                    normal_score(&margins[i], z)
                })
                .collect()
        })
        .collect())
}

/// Negative copula log-likelihood at `rho`. Truncated rows use the leading
/// sub-block of the correlation matrix, i.e. the marginal of observed lags.
pub fn copula_nll(scores: &[Vec<f64>], rho: f64, k: usize) -> f64 {
    let Ok(factor) = ResidualCopula::gaussian(rho, k).and_then(|c| c.factor()) else {
        return f64::INFINITY;
    };
    -scores.iter().map(|w| factor.log_density(w)).sum::<f64>()
}

/// Stage 2: `ρ̂` maximizing the copula term; returns `(ρ̂, nll)`.
pub fn stage2_rho(scores: &[Vec<f64>], k: usize) -> Result<(f64, f64)> {
    let nm = NelderMead::default().with_xtol(1e-9).with_step(0.5);
    let best = nm
        .minimize_multistart(
            |th: &[f64]| copula_nll(scores, to_interval(th[0], -1.0, 1.0), k),
            &[vec![0.0], vec![1.5]],
        )
        .require_converged("copula correlation")?;
    Ok((to_interval(best.x[0], -1.0, 1.0), best.value))
}

/// Two-stage parametric fit (forward blocks only).
pub fn fit_parametric(
    blocks: &ExceedanceBlockSet,
    model: Model,
    structure: StructureKind,
    parameterization: Parameterization,
    opts: &FitOptions,
) -> Result<FittedConditionalModel> {
    if blocks.direction != Direction::Forward {
        return Err(Error::input("parametric fits take forward blocks only"));
    }
    structure.validate(blocks.k)?;
    let table = LagData::table(blocks);
    check_lag_counts(&table, 2)?;
    let layout = Layout {
        model,
        kind: structure,
        k: blocks.k,
        direction: Direction::Forward,
        symmetric: true,
    };
    let nd = layout.dim();
    let u = blocks.u;

    let mut buf = Vec::new();
    let objective = |th: &[f64]| -> f64 {
        let Some(norming) = layout.norming(&th[..nd]) else {
            return f64::INFINITY;
        };
        let spec = norming.forward();
        let Ok(alphas) = spec.alphas(blocks.k) else {
            return f64::INFINITY;
        };
        let curves = ResidualCurves::from_unconstrained(parameterization, u, &th[nd..]);
        let mut total = 0.0;
        for ld in &table {
            let Ok(dl) = curves.at(ld.lag, spec.beta) else {
                return f64::INFINITY;
            };
            let log_b = ld.residuals(spec.model, alphas[ld.lag - 1], spec.beta, &mut buf);
            total += residual_nll(&buf, log_b, &dl);
        }
        total
    };

    let mut center = layout.start(blocks)?;
    center.extend(ResidualCurves::start(parameterization, u).to_unconstrained());
    let nm = NelderMead::default()
        .with_xtol(opts.xtol)
        .with_max_evals(opts.max_evals.max(200 * center.len()))
        .with_step(0.5);
    let best = nm
        .minimize_multistart(objective, &layout.starts(&center, opts))
        .require_converged("parametric fit, stage 1")?;
    let norming = layout
        .norming(&best.x[..nd])
        .ok_or_else(|| Error::Internal("optimum maps to an invalid norming".into()))?;
    let curves = ResidualCurves::from_unconstrained(parameterization, u, &best.x[nd..]);

    let scores = stage2_scores(blocks, &norming, &curves)?;
    let (rho, copula_term) = stage2_rho(&scores, blocks.k)?;

    Ok(FittedConditionalModel {
        marginal_model_ref: None,
        u,
        k: blocks.k,
        norming,
        residuals: ResidualModel::Parametric {
            curves,
            copula: ResidualCopula::gaussian(rho, blocks.k)?,
        },
        fit_metadata: FitMetadata {
            nll: best.value + copula_term,
            iterations: best.evals,
            seed: opts.seed,
            n_blocks: blocks.len(),
            warnings: small_sample_warning(blocks),
        },
    })
}
