//! Semi-parametric marginal model: interpolated empirical body below a
//! threshold, generalized Pareto tail above it, and the transforms between
//! the data scale and standard Laplace margins.

use std::io::{Read, Write};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{numeric_hessian, NelderMead};
use crate::rng::StreamRng;
use crate::stats::{laplace_from_probs, quantile_sorted};

/// A univariate series split into contiguous segments (for example one
/// segment per year). The same type carries data-scale and Laplace-scale values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<f64>,
    /// Half-open `(start, end)` index ranges, ordered and covering `values`.
    pub segments: Vec<(usize, usize)>,
    pub segment_ids: Vec<String>,
}

pub type RawSeries = Series;
pub type LaplaceSeries = Series;

impl Series {
    /// Validates segment structure and rejects non-finite values.
    pub fn new(
        values: Vec<f64>,
        segments: Vec<(usize, usize)>,
        segment_ids: Vec<String>,
    ) -> Result<Self> {
        if segments.len() != segment_ids.len() {
            return Err(Error::input("one id required per segment"));
        }
        let mut next = 0;
        for &(a, b) in &segments {
            if a != next || b <= a {
                return Err(Error::input(format!(
                    "segments must be ordered, non-empty and contiguous; got ({a}, {b}) after index {next}"
                )));
            }
            next = b;
        }
        if next != values.len() {
            return Err(Error::input("segments do not cover the series"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            values,
            segments,
            segment_ids,
        })
    }

    /// One segment spanning all values.
    pub fn single(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::input("empty series"));
        }
        Self::new(values, vec![(0, n)], vec!["0".to_string()])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Iterates over segment slices.
    pub fn segment_slices(&self) -> impl Iterator<Item = &[f64]> {
        self.segments.iter().map(|&(a, b)| &self.values[a..b])
    }

    /// Same segment structure, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::input("value count does not match segment structure"));
        }
        Self::new(values, self.segments.clone(), self.segment_ids.clone())
    }

    /// Reads `segment_id,value` CSV. A new segment starts whenever the id changes.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2
            || headers.get(0).map(str::trim) != Some("segment_id")
            || headers.get(1).map(str::trim) != Some("value")
        {
            return Err(Error::input("expected header `segment_id,value`"));
        }
        let mut values = Vec::new();
        let mut segments = Vec::new();
        let mut ids: Vec<String> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let id = rec
                .get(0)
                .ok_or_else(|| Error::input(format!("row {line}: missing segment_id")))?
                .trim()
                .to_string();
            let raw = rec
                .get(1)
                .ok_or_else(|| Error::input(format!("row {line}: missing value")))?
                .trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::input(format!("row {line}: cannot parse value {raw:?}")))?;
            if !v.is_finite() {
                return Err(Error::input(format!("row {line}: non-finite value {raw:?}")));
            }
            if ids.last() != Some(&id) {
                if ids.contains(&id) {
                    return Err(Error::input(format!(
                        "row {line}: segment {id:?} is not contiguous"
                    )));
                }
                let start = values.len();
                if let Some(last) = segments.last_mut() {
                    let (_, end): &mut (usize, usize) = last;
                    *end = start;
                }
                segments.push((start, start));
                ids.push(id);
            }
            values.push(v);
        }
        if let Some(last) = segments.last_mut() {
            last.1 = values.len();
        }
        if values.is_empty() {
            return Err(Error::input("no observations"));
        }
        Self::new(values, segments, ids)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["segment_id", "value"])?;
        for (&(a, b), id) in self.segments.iter().zip(&self.segment_ids) {
            for v in &self.values[a..b] {
                w.write_record([id.as_str(), &format_float(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

// ---------------------------------------------------------------------------
// Generalized Pareto

/// `|ξ|` below this uses the exponential limit.
const XI_ZERO: f64 = 1e-6;

/// Survival function of the GPD excess distribution.
pub fn gpd_survival(y: f64, scale: f64, shape: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    if shape.abs() < XI_ZERO {
        return (-y / scale).exp();
    }
    let t = 1.0 + shape * y / scale;
    if t <= 0.0 {
        0.0
    } else {
        t.powf(-1.0 / shape)
    }
}

/// Excess with survival probability `s` (inverse of [`gpd_survival`]).
pub fn gpd_inverse_survival(s: f64, scale: f64, shape: f64) -> f64 {
    if shape.abs() < XI_ZERO {
        -scale * s.ln()
    } else {
        scale / shape * (s.powf(-shape) - 1.0)
    }
}

/// Negative GPD log-likelihood; `+inf` outside the support.
pub fn gpd_nll(excesses: &[f64], scale: f64, shape: f64) -> f64 {
    if scale <= 0.0 || shape <= -1.0 {
        return f64::INFINITY;
    }
    let n = excesses.len() as f64;
    if shape.abs() < XI_ZERO {
        return n * scale.ln() + excesses.iter().sum::<f64>() / scale;
    }
    let mut acc = 0.0;
    for &y in excesses {
        let t = 1.0 + shape * y / scale;
        if t <= 0.0 {
            return f64::INFINITY;
        }
        acc += t.ln();
    }
    n * scale.ln() + (1.0 + 1.0 / shape) * acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub scale: f64,
    pub shape: f64,
    /// Standard errors of (scale, shape); NaN when the observed information
    /// is not positive definite.
    pub std_errors: (f64, f64),
}

/// Maximum-likelihood GPD fit to positive excesses.
pub fn fit_gpd(excesses: &[f64]) -> Result<GpdFit> {
    if excesses.len() < 10 {
        return Err(Error::input(format!(
            "GPD fit needs at least 10 excesses, got {}",
            excesses.len()
        )));
    }
    if let Some(bad) = excesses.iter().find(|&&y| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::input(format!("excesses must be positive, found {bad}")));
    }
    let m = crate::stats::mean(excesses);
    let v = crate::stats::variance(excesses);
    let ratio = if v > 0.0 { m * m / v } else { 1.0 };
    let xi0 = (0.5 * (1.0 - ratio)).clamp(-0.45, 0.9);
    let sigma0 = (0.5 * m * (ratio + 1.0)).max(1e-8 * m.max(1e-300));

    let objective = |p: &[f64]| gpd_nll(excesses, p[0].exp(), p[1]);
    let mut rng = StreamRng::seed_from_u64(0x6750_4446);
    let starts = NelderMead::jittered_starts(&[sigma0.ln(), xi0], 0.3, 6, &mut rng);
    let best = NelderMead::default()
        .with_step(0.2)
        .minimize_multistart(objective, &starts)
        .require_converged("GPD fit")?;
    let (scale, shape) = (best.x[0].exp(), best.x[1]);

    let hess = numeric_hessian(|p: &[f64]| gpd_nll(excesses, p[0], p[1]), &[scale, shape]);
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
    let std_errors = if det > 0.0 && hess[0][0] > 0.0 {
        ((hess[1][1] / det).sqrt(), (hess[0][0] / det).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(GpdFit {
        scale,
        shape,
        std_errors,
    })
}

// ---------------------------------------------------------------------------
// Marginal model

/// Serialized form; the interpolation knots are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct MarginalModelData {
    threshold_ustar: f64,
    gpd_scale: f64,
    gpd_shape: f64,
    gpd_std_errors: (f64, f64),
    exceedance_prob: f64,
    n_total: usize,
    sorted_body: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MarginalModelData", into = "MarginalModelData")]
pub struct MarginalModel {
    pub threshold: f64,
    pub scale: f64,
    pub shape: f64,
    pub std_errors: (f64, f64),
    pub exceedance_prob: f64,
    pub n_total: usize,
    pub sorted_body: Vec<f64>,
    /// Distinct body values and their rescaled plotting positions.
    knots_x: Vec<f64>,
    knots_f: Vec<f64>,
}

impl From<MarginalModel> for MarginalModelData {
    fn from(m: MarginalModel) -> Self {
        Self {
            threshold_ustar: m.threshold,
            gpd_scale: m.scale,
            gpd_shape: m.shape,
            gpd_std_errors: m.std_errors,
            exceedance_prob: m.exceedance_prob,
            n_total: m.n_total,
            sorted_body: m.sorted_body,
        }
    }
}

impl TryFrom<MarginalModelData> for MarginalModel {
    type Error = Error;

    fn try_from(d: MarginalModelData) -> Result<Self> {
        MarginalModel::from_parts(
            d.threshold_ustar,
            GpdFit {
                scale: d.gpd_scale,
                shape: d.gpd_shape,
                std_errors: d.gpd_std_errors,
            },
            d.exceedance_prob,
            d.n_total,
            d.sorted_body,
        )
    }
}

impl MarginalModel {
    /// Assembles a model from its parts; `sorted_body` must be the sorted
    /// observations `<= threshold`, ending at `threshold`.
    pub fn from_parts(
        threshold: f64,
        gpd: GpdFit,
        exceedance_prob: f64,
        n_total: usize,
        sorted_body: Vec<f64>,
    ) -> Result<Self> {
        if !(gpd.scale > 0.0) || !gpd.shape.is_finite() {
            return Err(Error::input("GPD scale must be positive"));
        }
        if !(exceedance_prob > 0.0 && exceedance_prob < 1.0) {
            return Err(Error::input("exceedance probability must lie in (0, 1)"));
        }
        if sorted_body.is_empty()
            || sorted_body.windows(2).any(|w| w[0] > w[1])
            || *sorted_body.last().unwrap() != threshold
        {
            return Err(Error::input(
                "body must be sorted ascending and end at the threshold",
            ));
        }
        if sorted_body.len() > n_total {
            return Err(Error::input("body larger than the sample"));
        }

        // average ranks over ties, plotting position rank/(N+1)
        let mut knots_x = Vec::new();
        let mut knots_f = Vec::new();
        let denom = n_total as f64 + 1.0;
        let mut i = 0;
        while i < sorted_body.len() {
            let mut j = i;
            while j + 1 < sorted_body.len() && sorted_body[j + 1] == sorted_body[i] {
                j += 1;
            }
            let avg_rank = 0.5 * ((i + 1) + (j + 1)) as f64;
            knots_x.push(sorted_body[i]);
            knots_f.push(avg_rank / denom);
            i = j + 1;
        }
        // rescale so the body meets the tail at 1 - p
        let top = *knots_f.last().unwrap();
        let factor = (1.0 - exceedance_prob) / top;
        knots_f.iter_mut().for_each(|f| *f *= factor);
        let last = knots_f.len() - 1;
        knots_f[last] = 1.0 - exceedance_prob;

        Ok(Self {
            threshold,
            scale: gpd.scale,
            shape: gpd.shape,
            std_errors: gpd.std_errors,
            exceedance_prob,
            n_total,
            sorted_body,
            knots_x,
            knots_f,
        })
    }

    /// Finite upper endpoint when the tail shape is negative.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.shape <= -XI_ZERO).then(|| self.threshold - self.scale / self.shape)
    }

    /// `(F(y), 1 - F(y))`, with the survival computed directly in the tail.
    pub fn cdf_pair(&self, y: f64) -> (f64, f64) {
        if y > self.threshold {
            let sf =
                self.exceedance_prob * gpd_survival(y - self.threshold, self.scale, self.shape);
            return (1.0 - sf, sf);
        }
        let f = self.body_cdf(y);
        (f, 1.0 - f)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.cdf_pair(y).0
    }

    fn body_cdf(&self, y: f64) -> f64 {
        let xs = &self.knots_x;
        let fs = &self.knots_f;
        if y <= xs[0] {
            return fs[0];
        }
        // first knot strictly greater than y
        let hi = xs.partition_point(|&x| x <= y);
        if hi >= xs.len() {
            return fs[fs.len() - 1];
        }
        let lo = hi - 1;
        fs[lo] + (y - xs[lo]) / (xs[hi] - xs[lo]) * (fs[hi] - fs[lo])
    }

    fn body_quantile(&self, f: f64) -> f64 {
        let xs = &self.knots_x;
        let fs = &self.knots_f;
        if f <= fs[0] {
            return xs[0];
        }
        let hi = fs.partition_point(|&g| g < f);
        if hi >= fs.len() {
            return xs[xs.len() - 1];
        }
        let lo = hi - 1;
        xs[lo] + (f - fs[lo]) / (fs[hi] - fs[lo]) * (xs[hi] - xs[lo])
    }

    /// Laplace-scale value of one observation.
    pub fn to_laplace_value(&self, y: f64) -> Result<f64> {
        if let Some(end) = self.upper_endpoint() {
            if y >= end {
                return Err(Error::input(format!(
                    "value {y} is at or beyond the fitted upper endpoint {end}"
                )));
            }
        }
        let (f, sf) = self.cdf_pair(y);
        let x = laplace_from_probs(f, sf);
        if !x.is_finite() {
            return Err(Error::input(format!("value {y} maps outside the Laplace range")));
        }
        Ok(x)
    }

    /// Data-scale value of a Laplace-scale value.
    pub fn from_laplace_value(&self, x: f64) -> f64 {
        let (f, sf) = if x < 0.0 {
            let f = 0.5 * x.exp();
            (f, 1.0 - f)
        } else {
            let sf = 0.5 * (-x).exp();
            (1.0 - sf, sf)
        };
        if sf < self.exceedance_prob {
            self.threshold
                + gpd_inverse_survival(sf / self.exceedance_prob, self.scale, self.shape)
        } else {
            self.body_quantile(f)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Fits the marginal model with threshold at the empirical `threshold_quantile`.
pub fn fit_marginal(series: &RawSeries, threshold_quantile: f64) -> Result<MarginalModel> {
    let mut sorted = series.values.clone();
    sorted.sort_by(f64::total_cmp);
    fit_marginal_sorted(&sorted, threshold_quantile)
}

fn fit_marginal_sorted(sorted: &[f64], q: f64) -> Result<MarginalModel> {
    if !(q > 0.5 && q < 1.0) {
        return Err(Error::input(format!(
            "threshold quantile must lie in (0.5, 1), got {q}"
        )));
    }
    let n = sorted.len();
    // order statistic y_(ceil(qN)), so the body maximum is the threshold
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    let u = sorted[idx];
    let body_len = sorted.partition_point(|&y| y <= u);
    let excesses: Vec<f64> = sorted[body_len..].iter().map(|y| y - u).collect();
    if excesses.len() < 10 {
        return Err(Error::input(format!(
            "threshold at quantile {q} leaves {} exceedances; at least 10 are needed",
            excesses.len()
        )));
    }
    let gpd = fit_gpd(&excesses)?;
    MarginalModel::from_parts(
        u,
        gpd,
        excesses.len() as f64 / n as f64,
        n,
        sorted[..body_len].to_vec(),
    )
}

pub fn to_laplace(series: &RawSeries, model: &MarginalModel) -> Result<LaplaceSeries> {
    let values = series
        .values
        .iter()
        .map(|&y| model.to_laplace_value(y))
        .collect::<Result<Vec<_>>>()?;
    series.with_values(values)
}

pub fn from_laplace(values: &[f64], model: &MarginalModel) -> Vec<f64> {
    values.iter().map(|&x| model.from_laplace_value(x)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub quantile: f64,
    pub threshold: f64,
    pub n_exceed: usize,
    pub scale: f64,
    pub shape: f64,
    pub scale_se: f64,
    pub shape_se: f64,
    pub error: Option<String>,
}

/// One GPD fit per quantile in `grid`; failures are recorded in their row.
pub fn threshold_stability_scan(series: &RawSeries, grid: &[f64]) -> Result<Vec<StabilityRow>> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::input("quantile grid must be sorted ascending"));
    }
    let mut sorted = series.values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(grid
        .iter()
        .map(|&q| {
            let threshold = quantile_sorted(&sorted, q);
            let n_exceed = sorted.len() - sorted.partition_point(|&y| y <= threshold);
            match fit_marginal_sorted(&sorted, q) {
                Ok(m) => StabilityRow {
                    quantile: q,
                    threshold: m.threshold,
                    n_exceed: (m.exceedance_prob * m.n_total as f64).round() as usize,
                    scale: m.scale,
                    shape: m.shape,
                    scale_se: m.std_errors.0,
                    shape_se: m.std_errors.1,
                    error: None,
                },
                Err(e) => StabilityRow {
                    quantile: q,
                    threshold,
                    n_exceed,
                    scale: f64::NAN,
                    shape: f64::NAN,
                    scale_se: f64::NAN,
                    shape_se: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stats::{ks_p_value, ks_statistic, laplace_cdf};
    use rand::Rng;

    fn gpd_sample(n: usize, scale: f64, shape: f64, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0);
        (0..n)
            .map(|_| gpd_inverse_survival(1.0 - rng.random::<f64>(), scale, shape))
            .collect()
    }

    /// Gaussian body with a Pareto-type upper tail.
    fn heavy_series(n: usize, seed: u64) -> RawSeries {
        let mut rng = substream(seed, 1);
        let values = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                if u < 0.1 {
                    1.5 + gpd_inverse_survival(1.0 - rng.random::<f64>(), 0.8, 0.15)
                } else {
                    z
                }
            })
            .collect();
        Series::single(values).unwrap()
    }

    #[test]
    fn gpd_survival_hand_value() {
        assert!((gpd_survival(2.0, 1.0, 0.5) - 0.25).abs() < 1e-15);
        assert!((gpd_survival(1.0, 1.0, 0.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gpd_recovers_parameters() {
        let ex = gpd_sample(10_000, 2.0, 0.2, 11);
        let fit = fit_gpd(&ex).unwrap();
        assert!((fit.scale - 2.0).abs() < 0.1, "{fit:?}");
        assert!((fit.shape - 0.2).abs() < 0.05, "{fit:?}");
        assert!(fit.std_errors.0 > 0.0 && fit.std_errors.1 > 0.0);
    }

    #[test]
    fn gpd_exponential_limit() {
        let ex = gpd_sample(10_000, 1.0, 0.0, 12);
        let fit = fit_gpd(&ex).unwrap();
        assert!(fit.shape.abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn gpd_optimum_beats_grid() {
        let ex = gpd_sample(2_000, 1.3, -0.1, 13);
        let fit = fit_gpd(&ex).unwrap();
        let best = gpd_nll(&ex, fit.scale, fit.shape);
        for i in 0..21 {
            for j in 0..21 {
                let s = fit.scale * (0.8 + 0.4 * i as f64 / 20.0);
                let x = fit.shape * (0.8 + 0.4 * j as f64 / 20.0);
                assert!(best <= gpd_nll(&ex, s, x) + 1e-9);
            }
        }
    }

    #[test]
    fn gpd_rejects_bad_input() {
        assert!(fit_gpd(&[1.0; 5]).unwrap_err().is_input());
        let mut ex = vec![1.0; 20];
        ex[3] = 0.0;
        assert!(fit_gpd(&ex).unwrap_err().is_input());
    }

    #[test]
    fn transform_hand_values() {
        let s = heavy_series(20_000, 3);
        let m = fit_marginal(&s, 0.95).unwrap();
        // median of the plotting-position body
        let med = m.from_laplace_value(0.0);
        assert!(m.to_laplace_value(med).unwrap().abs() < 1e-12);
        let y95 = m.from_laplace_value(10f64.ln());
        assert!((m.cdf(y95) - 0.95).abs() < 1e-12);
        let y25 = m.from_laplace_value(0.5f64.ln());
        assert!((m.cdf(y25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn continuity_at_threshold() {
        let s = heavy_series(5_000, 4);
        let m = fit_marginal(&s, 0.9).unwrap();
        let below = m.cdf(m.threshold);
        let above = m.cdf(m.threshold + 1e-13);
        assert!((below - (1.0 - m.exceedance_prob)).abs() < 1e-12);
        assert!((above - below).abs() < 1e-12);
    }

    #[test]
    fn round_trip_on_laplace_grid() {
        let s = heavy_series(50_000, 5);
        let m = fit_marginal(&s, 0.95).unwrap();
        for i in 0..=160 {
            let x = -8.0 + 0.1 * i as f64;
            let back = m.to_laplace_value(m.from_laplace_value(x)).unwrap();
            assert!((back - x).abs() < 1e-9, "{x} -> {back}");
        }
    }

    #[test]
    fn round_trip_on_data() {
        let s = heavy_series(5_000, 6);
        let m = fit_marginal(&s, 0.9).unwrap();
        let lap = to_laplace(&s, &m).unwrap();
        let back = from_laplace(&lap.values, &m);
        for (y, b) in s.values.iter().zip(&back) {
            assert!((y - b).abs() <= 1e-9 * y.abs().max(1.0), "{y} {b}");
        }
    }

    #[test]
    fn transformed_data_is_laplace() {
        let s = heavy_series(20_000, 7);
        let m = fit_marginal(&s, 0.95).unwrap();
        let lap = to_laplace(&s, &m).unwrap();
        let d = ks_statistic(&lap.values, laplace_cdf);
        assert!(ks_p_value(d, lap.len()) > 0.01, "D = {d}");
    }

    #[test]
    fn cdf_is_monotone_with_ties() {
        let vals: Vec<f64> = (0..400).map(|i| ((i * 7) % 50) as f64 / 10.0).collect();
        let mut vals = vals;
        vals.extend((0..40).map(|i| 5.0 + i as f64 * 0.37));
        let m = fit_marginal(&Series::single(vals).unwrap(), 0.9).unwrap();
        let mut prev = 0.0;
        for i in 0..2000 {
            let y = -1.0 + i as f64 * 0.015;
            let f = m.cdf(y);
            assert!(f >= prev, "{y}");
            prev = f;
        }
    }

    #[test]
    fn negative_shape_endpoint_is_rejected() {
        let m = MarginalModel::from_parts(
            1.0,
            GpdFit {
                scale: 1.0,
                shape: -0.5,
                std_errors: (0.0, 0.0),
            },
            0.1,
            10,
            vec![0.0, 0.5, 1.0],
        )
        .unwrap();
        assert_eq!(m.upper_endpoint(), Some(3.0));
        assert!(m.to_laplace_value(3.5).unwrap_err().is_input());
        assert!(m.to_laplace_value(2.9).is_ok());
    }

    #[test]
    fn too_few_exceedances() {
        let s = Series::single((0..50).map(f64::from).collect()).unwrap();
        let err = fit_marginal(&s, 0.9).unwrap_err();
        assert!(err.to_string().contains("5 exceedances"), "{err}");
    }

    #[test]
    fn stability_scan_rows() {
        let s = heavy_series(20_000, 8);
        assert!(threshold_stability_scan(&s, &[]).unwrap().is_empty());
        let rows = threshold_stability_scan(&s, &[0.9, 0.95, 0.9999]).unwrap();
        assert_eq!(rows.len(), 3);
        let (a, b) = (&rows[0], &rows[1]);
        assert!(a.error.is_none() && b.error.is_none());
        let joint = 1.96 * (a.shape_se.powi(2) + b.shape_se.powi(2)).sqrt();
        assert!((a.shape - b.shape).abs() < joint);
        assert!(rows[2].error.is_some());
    }

    #[test]
    fn json_round_trip() {
        let s = heavy_series(3_000, 9);
        let m = fit_marginal(&s, 0.9).unwrap();
        let back = MarginalModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.threshold, m.threshold);
        assert_eq!(back.scale, m.scale);
        for &y in &[-2.0, 0.1, 1.4, 3.0] {
            assert_eq!(back.cdf(y), m.cdf(y));
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "segment_id,value\n2001,1.5\n2001,2\n2002,-0.25\n";
        let s = Series::read_csv(text.as_bytes()).unwrap();
        assert_eq!(s.segments, vec![(0, 2), (2, 3)]);
        assert_eq!(s.segment_ids, vec!["2001", "2002"]);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(Series::read_csv(out.as_slice()).unwrap(), s);

        let bad = "segment_id,value\na,1\na,NaN\n";
        let err = Series::read_csv(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
        let split = "segment_id,value\na,1\nb,2\na,3\n";
        assert!(Series::read_csv(split.as_bytes()).unwrap_err().is_input());
    }
}
