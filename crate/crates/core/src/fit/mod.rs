//! Composite-likelihood estimation of the conditional norming model.
//!
//! Two routes share the block extraction and the per-lag likelihood:
//! the semi-parametric fit profiles out one δ-Laplace (or Gaussian)
//! nuisance triple per lag and keeps the empirical residual vectors; the
//! parametric fit replaces the nuisance by smooth curves in the lag and adds
//! a Gaussian copula across lags, estimated in a second stage.

mod diagnostics;
mod parametric;
pub(crate) mod semiparametric;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dists::{DeltaLaplace, ResidualCopula};
use crate::error::{Error, Result};
use crate::margins::{format_float, LaplaceSeries};
use crate::norming::{norm_scale, BackwardForwardSpec, Model, NormingSpec, StructureKind};
use crate::stats::norm_quantile;

pub use diagnostics::{residual_diagnostics, LagDiagnostic, QqPoint, ResidualDiagnostics};
pub use parametric::{
    copula_nll, fit_parametric, stage2_rho, stage2_scores, Parameterization, ResidualCurves,
};
pub use semiparametric::{fit_semiparametric, gaussian_nuisance, inner_nuisance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    BackwardForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Forward,
    Backward,
}

/// One exceedance `x_t > u` with its trailing values `x_{t+1..t+m}` and, for
/// backward–forward sets, leading values stored nearest first
/// (`backward[0] = x_{t-1}`).
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub t: usize,
    pub x: f64,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

impl Block {
    pub fn side(&self, side: Side) -> &[f64] {
        match side {
            Side::Forward => &self.forward,
            Side::Backward => &self.backward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceBlockSet {
    pub u: f64,
    pub k: usize,
    pub direction: Direction,
    pub blocks: Vec<Block>,
}

impl ExceedanceBlockSet {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn sides(&self) -> &'static [Side] {
        match self.direction {
            Direction::Forward => &[Side::Forward],
            Direction::BackwardForward => &[Side::Forward, Side::Backward],
        }
    }

    /// `(x_t, x_{t±lag})` pairs available at one lag on one side.
    pub fn lag_pairs(&self, side: Side, lag: usize) -> (Vec<f64>, Vec<f64>) {
        let ld = LagData::collect(self, side, lag);
        (ld.x, ld.y)
    }
}

/// Blocks of up to `k` values after (and, for backward–forward, before)
/// every exceedance of `u`. Blocks stop at segment ends; exceedances with no
/// neighbouring values at all are dropped.
pub fn extract_blocks(
    series: &LaplaceSeries,
    u: f64,
    k: usize,
    direction: Direction,
) -> Result<ExceedanceBlockSet> {
    if !(u > 0.0) {
        return Err(Error::input(format!("threshold u must be positive, got {u}")));
    }
    if k == 0 {
        return Err(Error::input("horizon k must be at least 1"));
    }
    let mut blocks = Vec::new();
    let mut exceedances = 0usize;
    for &(start, end) in &series.segments {
        for t in start..end {
            let x = series.values[t];
            if x <= u {
                continue;
            }
            exceedances += 1;
            let forward = series.values[t + 1..(t + 1 + k).min(end)].to_vec();
            let backward: Vec<f64> = match direction {
                Direction::Forward => Vec::new(),
                Direction::BackwardForward => series.values[t.saturating_sub(k).max(start)..t]
                    .iter()
                    .rev()
                    .copied()
                    .collect(),
            };
            if forward.is_empty() && backward.is_empty() {
                continue;
            }
            blocks.push(Block {
                t,
                x,
                forward,
                backward,
            });
        }
    }
    if blocks.is_empty() {
        return Err(Error::input(format!(
            "no usable blocks above u = {u}: {exceedances} exceedances, none with neighbouring values"
        )));
    }
    Ok(ExceedanceBlockSet {
        u,
        k,
        direction,
        blocks,
    })
}

/// Pairs for one `(side, lag)` with the owning block index.
#[derive(Debug, Clone)]
pub(crate) struct LagData {
    pub side: Side,
    pub lag: usize,
    pub rows: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LagData {
    pub fn collect(set: &ExceedanceBlockSet, side: Side, lag: usize) -> Self {
        let mut ld = LagData {
            side,
            lag,
            rows: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        };
        for (r, b) in set.blocks.iter().enumerate() {
            if let Some(&y) = b.side(side).get(lag - 1) {
                ld.rows.push(r);
                ld.x.push(b.x);
                ld.y.push(y);
            }
        }
        ld
    }

    /// Forward lags `1..=k`, then backward lags for backward–forward sets.
    pub fn table(set: &ExceedanceBlockSet) -> Vec<LagData> {
        set.sides()
            .iter()
            .flat_map(|&s| (1..=set.k).map(move |i| LagData::collect(set, s, i)))
            .collect()
    }

    /// Residuals `(y - αx) / b(x)` written to `out`; returns `Σ log b(x)`.
    pub fn residuals(&self, model: Model, alpha: f64, beta: f64, out: &mut Vec<f64>) -> f64 {
        out.clear();
        let mut log_b = 0.0;
        for (&x, &y) in self.x.iter().zip(&self.y) {
            let b = norm_scale(model, alpha, beta, x);
            log_b += b.ln();
            out.push((y - alpha * x) / b);
        }
        log_b
    }
}

/// Negative log density summed over residuals, plus the Jacobian term.
pub(crate) fn residual_nll(z: &[f64], log_b: f64, nuisance: &DeltaLaplace) -> f64 {
    let c = nuisance.log_norm_const();
    let s: f64 = z
        .iter()
        .map(|&v| ((v - nuisance.mu) / nuisance.sigma).abs().powf(nuisance.delta))
        .sum();
    -(z.len() as f64) * c + s + log_b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkingMargin {
    DeltaLaplace,
    /// Stored as δ-Laplace with `δ = 2`, `σ = √2 · sd`, which is the same law.
    Gaussian,
}

/// Estimated norming: one spec, or a pair for backward–forward fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum Norming {
    Forward(NormingSpec),
    BackwardForward(BackwardForwardSpec),
}

impl Norming {
    pub fn side(&self, side: Side) -> &NormingSpec {
        match (self, side) {
            (Norming::Forward(s), _) => s,
            (Norming::BackwardForward(bf), Side::Forward) => &bf.forward,
            (Norming::BackwardForward(bf), Side::Backward) => &bf.backward,
        }
    }

    pub fn forward(&self) -> &NormingSpec {
        self.side(Side::Forward)
    }

    pub fn direction(&self) -> Direction {
        match self {
            Norming::Forward(_) => Direction::Forward,
            Norming::BackwardForward(_) => Direction::BackwardForward,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Norming::Forward(s) => s.validate(),
            Norming::BackwardForward(bf) => bf.validate(),
        }
    }
}

/// Negative composite log-likelihood (the `log 2` of the δ-Laplace density
/// included). `backward_nuisance` is ignored for forward sets. Inadmissible
/// parameters give `+inf`.
pub fn composite_nll(
    blocks: &ExceedanceBlockSet,
    norming: &Norming,
    forward_nuisance: &[DeltaLaplace],
    backward_nuisance: &[DeltaLaplace],
) -> f64 {
    let mut buf = Vec::new();
    let mut total = 0.0;
    for &side in blocks.sides() {
        let spec = norming.side(side);
        let Ok(alphas) = spec.alphas(blocks.k) else {
            return f64::INFINITY;
        };
        let nuisance = match side {
            Side::Forward => forward_nuisance,
            Side::Backward => backward_nuisance,
        };
        for lag in 1..=blocks.k {
            let ld = LagData::collect(blocks, side, lag);
            if ld.x.is_empty() {
                continue;
            }
            let Some(dl) = nuisance.get(lag - 1) else {
                return f64::INFINITY;
            };
            let log_b = ld.residuals(spec.model, alphas[lag - 1], spec.beta, &mut buf);
            total += residual_nll(&buf, log_b, dl);
        }
    }
    if total.is_nan() {
        f64::INFINITY
    } else {
        total
    }
}

/// Empirical residual vectors at the fitted norming, one row per block.
/// Missing entries mark lags cut off by a segment end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStore {
    pub k: usize,
    pub t: Vec<usize>,
    pub x: Vec<f64>,
    pub forward: Vec<Vec<Option<f64>>>,
    /// Empty rows for forward-only fits.
    pub backward: Vec<Vec<Option<f64>>>,
}

impl ResidualStore {
    pub fn build(blocks: &ExceedanceBlockSet, norming: &Norming) -> Result<Self> {
        let k = blocks.k;
        let n = blocks.len();
        let mut store = ResidualStore {
            k,
            t: blocks.blocks.iter().map(|b| b.t).collect(),
            x: blocks.blocks.iter().map(|b| b.x).collect(),
            forward: vec![vec![None; k]; n],
            backward: match blocks.direction {
                Direction::Forward => vec![Vec::new(); n],
                Direction::BackwardForward => vec![vec![None; k]; n],
            },
        };
        for &side in blocks.sides() {
            let spec = norming.side(side);
            let alphas = spec.alphas(k)?;
            for (r, b) in blocks.blocks.iter().enumerate() {
                for (i, &y) in b.side(side).iter().enumerate() {
                    let a = alphas[i];
                    let z = (y - a * b.x) / norm_scale(spec.model, a, spec.beta, b.x);
                    match side {
                        Side::Forward => store.forward[r][i] = Some(z),
                        Side::Backward => store.backward[r][i] = Some(z),
                    }
                }
            }
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn has_backward(&self) -> bool {
        self.backward.iter().any(|r| !r.is_empty())
    }

    /// CSV with columns `t, x, f1..fk` and `b1..bk` when present; missing
    /// entries are empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let back = self.has_backward();
        let mut header = vec!["t".to_string(), "x".to_string()];
        header.extend((1..=self.k).map(|i| format!("f{i}")));
        if back {
            header.extend((1..=self.k).map(|i| format!("b{i}")));
        }
        w.write_record(&header)?;
        let cell = |v: &Option<f64>| v.map(format_float).unwrap_or_default();
        for r in 0..self.len() {
            let mut rec = vec![self.t[r].to_string(), format_float(self.x[r])];
            rec.extend(self.forward[r].iter().map(cell));
            if back {
                rec.extend(self.backward[r].iter().map(cell));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let k = header.iter().filter(|h| h.starts_with('f')).count();
        let back = header.iter().any(|h| h.starts_with('b'));
        if k == 0 || header.len() != 2 + k * (1 + back as usize) {
            return Err(Error::input("residual CSV needs columns t, x, f1..fk[, b1..bk]"));
        }
        let mut store = ResidualStore {
            k,
            t: Vec::new(),
            x: Vec::new(),
            forward: Vec::new(),
            backward: Vec::new(),
        };
        let parse = |s: &str, row: usize| -> Result<Option<f64>> {
            if s.trim().is_empty() {
                return Ok(None);
            }
            s.trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::input(format!("row {row}: cannot parse '{s}'")))
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let t = rec[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::input(format!("row {}: bad index", row + 1)))?;
            let x = parse(&rec[1], row + 1)?
                .ok_or_else(|| Error::input(format!("row {}: missing x", row + 1)))?;
            store.t.push(t);
            store.x.push(x);
            let f = (0..k).map(|i| parse(&rec[2 + i], row + 1)).collect::<Result<_>>()?;
            store.forward.push(f);
            let b = if back {
                (0..k)
                    .map(|i| parse(&rec[2 + k + i], row + 1))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            store.backward.push(b);
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ResidualModel {
    Empirical {
        working_margin: WorkingMargin,
        forward_nuisance: Vec<DeltaLaplace>,
        #[serde(default)]
        backward_nuisance: Vec<DeltaLaplace>,
        residual_store: ResidualStore,
    },
    Parametric {
        curves: ResidualCurves,
        copula: ResidualCopula,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub nll: f64,
    pub iterations: usize,
    pub seed: u64,
    pub n_blocks: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedConditionalModel {
    #[serde(default)]
    pub marginal_model_ref: Option<String>,
    pub u: f64,
    pub k: usize,
    pub norming: Norming,
    pub residuals: ResidualModel,
    pub fit_metadata: FitMetadata,
}

pub type SemiParamFit = FittedConditionalModel;
pub type ParamFit = FittedConditionalModel;

impl FittedConditionalModel {
    pub fn direction(&self) -> Direction {
        self.norming.direction()
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self.residuals, ResidualModel::Parametric { .. })
    }

    /// Fitted residual margin at `lag` on `side`, if the model has one.
    pub fn lag_margin(&self, side: Side, lag: usize) -> Option<DeltaLaplace> {
        match &self.residuals {
            ResidualModel::Empirical {
                forward_nuisance,
                backward_nuisance,
                ..
            } => match side {
                Side::Forward => forward_nuisance.get(lag - 1).copied(),
                Side::Backward => backward_nuisance.get(lag - 1).copied(),
            },
            ResidualModel::Parametric { curves, .. } => match side {
                Side::Forward => curves.at(lag, self.norming.forward().beta).ok(),
                Side::Backward => None,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.norming.validate()?;
        if m.norming.forward().k != m.k {
            return Err(Error::input("norming horizon does not match k"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Backward–forward fits: tie both sides to one norming.
    pub symmetric: bool,
    /// Jittered starting points for the outer search.
    pub restarts: usize,
    pub seed: u64,
    pub xtol: f64,
    pub max_evals: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            symmetric: true,
            restarts: 3,
            seed: 0,
            xtol: 1e-6,
            max_evals: 20_000,
        }
    }
}

/// Everything needed to fit one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub model: Model,
    pub structure: StructureKind,
    pub working_margin: WorkingMargin,
    /// `Some` selects the two-stage parametric fit.
    pub parametric: Option<Parameterization>,
    pub options: FitOptions,
}

pub fn fit_blocks(blocks: &ExceedanceBlockSet, config: &FitConfig) -> Result<FittedConditionalModel> {
    match config.parametric {
        Some(p) => fit_parametric(blocks, config.model, config.structure, p, &config.options),
        None => fit_semiparametric(
            blocks,
            config.model,
            config.structure,
            config.working_margin,
            &config.options,
        ),
    }
}

/// Lag-1 correlation of normal scores over forward pairs; a starting value for α.
pub(crate) fn normal_scores_correlation(blocks: &ExceedanceBlockSet) -> Option<f64> {
    let (x, y) = blocks.lag_pairs(Side::Forward, 1);
    let n = x.len();
    if n < 3 {
        return None;
    }
    let scores = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut s = vec![0.0; n];
        for (rank, &i) in idx.iter().enumerate() {
            s[i] = norm_quantile((rank + 1) as f64 / (n + 1) as f64);
        }
        s
    };
    let (sx, sy) = (scores(&x), scores(&y));
    let num: f64 = sx.iter().zip(&sy).map(|(a, b)| a * b).sum();
    let den = (sx.iter().map(|a| a * a).sum::<f64>() * sy.iter().map(|b| b * b).sum::<f64>()).sqrt();
    (den > 0.0).then(|| num / den)
}

/// One row of a threshold scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterStabilityRow {
    pub u: f64,
    pub n_blocks: usize,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub nll: f64,
    pub error: Option<String>,
}

/// Refits at every threshold of a sorted grid; failures are recorded in the
/// row and the scan continues.
pub fn parameter_stability_scan(
    series: &LaplaceSeries,
    u_grid: &[f64],
    k: usize,
    direction: Direction,
    config: &FitConfig,
) -> Result<Vec<ParameterStabilityRow>> {
    if u_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::input("threshold grid must be sorted ascending"));
    }
    let rows = u_grid
        .iter()
        .map(|&u| {
            let attempt = extract_blocks(series, u, k, direction).and_then(|b| {
                let fit = fit_blocks(&b, config)?;
                Ok((b.len(), fit))
            });
            match attempt {
                Ok((n, fit)) => ParameterStabilityRow {
                    u,
                    n_blocks: n,
                    alpha: fit.norming.forward().alphas(k).unwrap_or_default(),
                    beta: fit.norming.forward().beta,
                    nll: fit.fit_metadata.nll,
                    error: None,
                },
                Err(e) => ParameterStabilityRow {
                    u,
                    n_blocks: 0,
                    alpha: Vec::new(),
                    beta: f64::NAN,
                    nll: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}
