//! Residual checks: dependence on the conditioning value and fit of the
//! per-lag margins.

use serde::Serialize;

use super::{Direction, ExceedanceBlockSet, FittedConditionalModel, LagData, Side};
use crate::error::{Error, Result};
use crate::stats::kendall_tau;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagDiagnostic {
    pub side: Side,
    pub lag: usize,
    pub n_pairs: usize,
    /// Kendall's τ between `x_t` and the lag residual.
    pub tau: Option<f64>,
    /// Set when the lag had fewer than 3 pairs.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqPoint {
    pub side: Side,
    pub lag: usize,
    pub prob: f64,
    pub empirical: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualDiagnostics {
    pub lags: Vec<LagDiagnostic>,
    pub qq: Vec<QqPoint>,
}

pub fn residual_diagnostics(
    fit: &FittedConditionalModel,
    blocks: &ExceedanceBlockSet,
) -> Result<ResidualDiagnostics> {
    if fit.k != blocks.k {
        return Err(Error::input(format!(
            "fit horizon {} does not match blocks horizon {}",
            fit.k, blocks.k
        )));
    }
    if blocks.direction == Direction::BackwardForward && fit.direction() == Direction::Forward {
        return Err(Error::input("blocks carry a backward side the fit does not model"));
    }
    let mut out = ResidualDiagnostics {
        lags: Vec::new(),
        qq: Vec::new(),
    };
    let mut z = Vec::new();
    for ld in LagData::table(blocks) {
        let spec = fit.norming.side(ld.side);
        let alpha = spec.alphas(blocks.k)?[ld.lag - 1];
        ld.residuals(spec.model, alpha, spec.beta, &mut z);
        let n = z.len();
        let skipped = n < 3;
        out.lags.push(LagDiagnostic {
            side: ld.side,
            lag: ld.lag,
            n_pairs: n,
            tau: if skipped { None } else { kendall_tau(&ld.x, &z) },
            skipped,
        });
        if skipped {
            continue;
        }
        let Some(margin) = fit.lag_margin(ld.side, ld.lag) else {
            continue;
        };
        let mut sorted = z.clone();
        sorted.sort_by(f64::total_cmp);
        for (i, &e) in sorted.iter().enumerate() {
            let prob = (i + 1) as f64 / (n + 1) as f64;
            out.qq.push(QqPoint {
                side: ld.side,
                lag: ld.lag,
                prob,
                empirical: e,
                model: margin.quantile(prob)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DeltaLaplace;
    use crate::fit::{fit_semiparametric, Block, FitOptions, WorkingMargin};
    use crate::norming::{AlphaStructure, Model, NormingSpec, StructureKind};
    use crate::rng::substream;
    use rand_distr::{Distribution, Exp1};

    #[test]
    fn independent_residuals_have_small_tau() {
        let spec =
            NormingSpec::new(Model::Model1, AlphaStructure::Geometric { alpha: 0.5 }, 0.3, 3).unwrap();
        let z = DeltaLaplace::new(0.0, 1.0, 1.3).unwrap();
        let mut rng = substream(12, 0);
        let alphas = spec.alphas(3).unwrap();
        let blocks = ExceedanceBlockSet {
            u: 2.0,
            k: 3,
            direction: Direction::Forward,
            blocks: (0..2000)
                .map(|t| {
                    let e: f64 = Exp1.sample(&mut rng);
                    let x = 2.0 + e;
                    Block {
                        t,
                        x,
                        forward: alphas.iter().map(|a| a * x + x.powf(0.3) * z.sample(&mut rng)).collect(),
                        backward: Vec::new(),
                    }
                })
                .collect(),
        };
        let fit = fit_semiparametric(
            &blocks,
            Model::Model1,
            StructureKind::Geometric,
            WorkingMargin::DeltaLaplace,
            &FitOptions::default(),
        )
        .unwrap();
        let d = residual_diagnostics(&fit, &blocks).unwrap();
        assert_eq!(d.lags.len(), 3);
        for l in &d.lags {
            assert!(l.tau.unwrap().abs() < 0.05, "{l:?}");
        }
        assert_eq!(d.qq.len(), 3 * 2000);
        // central QQ points sit close to the fitted margin
        let mid = &d.qq[1000];
        assert!((mid.empirical - mid.model).abs() < 0.1, "{mid:?}");
    }

    #[test]
    fn monotone_residuals_give_unit_tau_and_short_lags_are_flagged() {
        // α = 0, β = 0 makes the residual the value itself
        let spec = NormingSpec::new(Model::Model1, AlphaStructure::Geometric { alpha: 0.0 }, 0.0, 2).unwrap();
        let blocks = ExceedanceBlockSet {
            u: 1.0,
            k: 2,
            direction: Direction::Forward,
            blocks: (0..30)
                .map(|i| {
                    let x = 1.0 + i as f64 * 0.1;
                    Block {
                        t: i,
                        x,
                        forward: if i < 2 { vec![x, x] } else { vec![x] },
                        backward: Vec::new(),
                    }
                })
                .collect(),
        };
        let fit = crate::fit::semiparametric::finish(
            &blocks,
            crate::fit::Norming::Forward(spec),
            WorkingMargin::Gaussian,
            0,
            &FitOptions::default(),
        );
        // lag 2 has only two residuals: the Gaussian inner fit still works
        let fit = fit.unwrap();
        let d = residual_diagnostics(&fit, &blocks).unwrap();
        assert_eq!(d.lags[0].tau, Some(1.0));
        assert!(d.lags[1].skipped && d.lags[1].tau.is_none());
    }
}
