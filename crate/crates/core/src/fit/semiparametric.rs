//! Semi-parametric fit: outer simplex over (structure, β), inner per-lag
//! nuisance estimates, empirical residuals kept at the optimum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    composite_nll, normal_scores_correlation, residual_nll, Direction, ExceedanceBlockSet,
    FitMetadata, FitOptions, FittedConditionalModel, LagData, Norming, ResidualModel,
    ResidualStore, Side, WorkingMargin,
};
use crate::dists::{dl_mle, dl_mle_warm, DeltaLaplace};
use crate::error::{Error, Result};
use crate::norming::{
    beta_from_unconstrained, beta_to_unconstrained, BackwardForwardSpec, Model, NormingSpec,
    StructureKind,
};
use crate::optim::NelderMead;

/// Closed-form Gaussian fit (mean and ML standard deviation), expressed as
/// the equivalent δ-Laplace with `δ = 2`.
pub fn gaussian_nuisance(z: &[f64]) -> Result<DeltaLaplace> {
    let n = z.len();
    if n < 2 {
        return Err(Error::input(format!("Gaussian fit needs 2 samples, got {n}")));
    }
    let m = crate::stats::mean(z);
    let var = z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::input("degenerate (constant) residuals"));
    }
    DeltaLaplace::new(m, (2.0 * var).sqrt(), 2.0)
}

/// Inner step for one lag.
pub fn inner_nuisance(
    z: &[f64],
    margin: WorkingMargin,
    warm: Option<&DeltaLaplace>,
) -> Result<DeltaLaplace> {
    match (margin, warm) {
        (WorkingMargin::Gaussian, _) => gaussian_nuisance(z),
        (WorkingMargin::DeltaLaplace, None) => dl_mle(z),
        (WorkingMargin::DeltaLaplace, Some(w)) => dl_mle_warm(z, w, 1e-8),
    }
}

/// Maps the outer parameter vector to a norming.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub model: Model,
    pub kind: StructureKind,
    pub k: usize,
    pub direction: Direction,
    pub symmetric: bool,
}

impl Layout {
    fn side_dim(&self) -> usize {
        self.kind.n_params(self.k) + 1
    }

    pub fn dim(&self) -> usize {
        match (self.direction, self.symmetric) {
            (Direction::BackwardForward, false) => 2 * self.side_dim(),
            _ => self.side_dim(),
        }
    }

    fn side_spec(&self, th: &[f64]) -> Option<NormingSpec> {
        let np = self.kind.n_params(self.k);
        let nonneg = self.model == Model::Model2;
        let alpha = self.kind.from_unconstrained(&th[..np], self.k, nonneg);
        NormingSpec::new(self.model, alpha, beta_from_unconstrained(th[np]), self.k).ok()
    }

    pub fn norming(&self, th: &[f64]) -> Option<Norming> {
        let fwd = self.side_spec(&th[..self.side_dim()])?;
        Some(match (self.direction, self.symmetric) {
            (Direction::Forward, _) => Norming::Forward(fwd),
            (Direction::BackwardForward, true) => {
                Norming::BackwardForward(BackwardForwardSpec::symmetric(fwd))
            }
            (Direction::BackwardForward, false) => {
                let bwd = self.side_spec(&th[self.side_dim()..])?;
                Norming::BackwardForward(BackwardForwardSpec {
                    forward: fwd,
                    backward: bwd,
                    symmetric: false,
                })
            }
        })
    }

    fn encode_side(&self, spec: &NormingSpec) -> Vec<f64> {
        let mut th = StructureKind::to_unconstrained(&spec.alpha, self.model == Model::Model2);
        th.push(beta_to_unconstrained(spec.beta));
        th
    }

    pub fn encode(&self, norming: &Norming) -> Vec<f64> {
        let mut th = self.encode_side(norming.forward());
        if self.dim() > th.len() {
            th.extend(self.encode_side(norming.side(Side::Backward)));
        }
        th
    }

    /// Default start: α from the lag-1 normal-scores correlation, β = 0.2.
    pub fn start(&self, blocks: &ExceedanceBlockSet) -> Result<Vec<f64>> {
        let nonneg = self.model == Model::Model2;
        let a1 = normal_scores_correlation(blocks).unwrap_or(0.5).clamp(0.05, 0.9);
        let spec = NormingSpec::new(self.model, self.kind.initial(a1, self.k, nonneg), 0.2, self.k)?;
        let norming = match self.direction {
            Direction::Forward => Norming::Forward(spec),
            Direction::BackwardForward => Norming::BackwardForward(BackwardForwardSpec {
                forward: spec.clone(),
                backward: spec,
                symmetric: self.symmetric,
            }),
        };
        Ok(self.encode(&norming))
    }

    pub fn starts(&self, center: &[f64], opts: &FitOptions) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        NelderMead::jittered_starts(center, 0.5, opts.restarts, &mut rng)
    }
}

/// Per-lag sample-size requirements, with a readable error.
pub(crate) fn check_lag_counts(table: &[LagData], needed: usize) -> Result<()> {
    for ld in table {
        if ld.x.len() < needed {
            let side = match ld.side {
                Side::Forward => "forward",
                Side::Backward => "backward",
            };
            return Err(Error::input(format!(
                "{side} lag {} has {} residuals; at least {needed} are needed",
                ld.lag,
                ld.x.len()
            )));
        }
    }
    Ok(())
}

pub(crate) fn small_sample_warning(blocks: &ExceedanceBlockSet) -> Vec<String> {
    if blocks.len() < 20 {
        vec![format!("only {} exceedance blocks; at least 20 are recommended", blocks.len())]
    } else {
        Vec::new()
    }
}

/// Profile composite-likelihood fit. The direction comes from `blocks`;
/// `opts.symmetric` ties the two sides of a backward–forward fit.
pub fn fit_semiparametric(
    blocks: &ExceedanceBlockSet,
    model: Model,
    structure: StructureKind,
    working_margin: WorkingMargin,
    opts: &FitOptions,
) -> Result<FittedConditionalModel> {
    structure.validate(blocks.k)?;
    let table = LagData::table(blocks);
    let needed = match working_margin {
        WorkingMargin::DeltaLaplace => 20,
        WorkingMargin::Gaussian => 2,
    };
    check_lag_counts(&table, needed)?;
    let layout = Layout {
        model,
        kind: structure,
        k: blocks.k,
        direction: blocks.direction,
        symmetric: opts.symmetric,
    };

    let mut warm: Vec<Option<DeltaLaplace>> = vec![None; table.len()];
    let mut buf = Vec::new();
    let objective = |th: &[f64]| -> f64 {
        let Some(norming) = layout.norming(th) else {
            return f64::INFINITY;
        };
        let mut total = 0.0;
        let mut alphas: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (j, ld) in table.iter().enumerate() {
            let spec = norming.side(ld.side);
            let slot = &mut alphas[(ld.side == Side::Backward) as usize];
            if slot.is_empty() {
                match spec.alphas(blocks.k) {
                    Ok(a) => *slot = a,
                    Err(_) => return f64::INFINITY,
                }
            }
            let log_b = ld.residuals(spec.model, slot[ld.lag - 1], spec.beta, &mut buf);
            match inner_nuisance(&buf, working_margin, warm[j].as_ref()) {
                Ok(dl) => {
                    warm[j] = Some(dl);
                    total += residual_nll(&buf, log_b, &dl);
                }
                Err(_) => return f64::INFINITY,
            }
        }
        total
    };

    let center = layout.start(blocks)?;
    let nm = NelderMead::default()
        .with_xtol(opts.xtol)
        .with_max_evals(opts.max_evals)
        .with_step(0.3);
    let best = nm
        .minimize_multistart(objective, &layout.starts(&center, opts))
        .require_converged("semi-parametric fit")?;
    let norming = layout
        .norming(&best.x)
        .ok_or_else(|| Error::Internal("optimum maps to an invalid norming".into()))?;
    finish(blocks, norming, working_margin, best.evals, opts)
}

/// Cold inner fits, residual store and metadata at a given norming.
pub(crate) fn finish(
    blocks: &ExceedanceBlockSet,
    norming: Norming,
    working_margin: WorkingMargin,
    iterations: usize,
    opts: &FitOptions,
) -> Result<FittedConditionalModel> {
    let mut forward_nuisance = Vec::new();
    let mut backward_nuisance = Vec::new();
    let mut buf = Vec::new();
    for ld in LagData::table(blocks) {
        let spec = norming.side(ld.side);
        let alpha = spec.alphas(blocks.k)?[ld.lag - 1];
        ld.residuals(spec.model, alpha, spec.beta, &mut buf);
        let dl = inner_nuisance(&buf, working_margin, None)?;
        match ld.side {
            Side::Forward => forward_nuisance.push(dl),
            Side::Backward => backward_nuisance.push(dl),
        }
    }
    let nll = composite_nll(blocks, &norming, &forward_nuisance, &backward_nuisance);
    let residual_store = ResidualStore::build(blocks, &norming)?;
    Ok(FittedConditionalModel {
        marginal_model_ref: None,
        u: blocks.u,
        k: blocks.k,
        norming,
        residuals: ResidualModel::Empirical {
            working_margin,
            forward_nuisance,
            backward_nuisance,
            residual_store,
        },
        fit_metadata: FitMetadata {
            nll,
            iterations,
            seed: opts.seed,
            n_blocks: blocks.len(),
            warnings: small_sample_warning(blocks),
        },
    })
}
