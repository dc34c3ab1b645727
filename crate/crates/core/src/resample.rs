//! Block bootstraps for dependent series. Resampling happens within each
//! segment, so no resampled block ever spans a segment boundary.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins::Series;
use crate::rng::{par_map, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapKind {
    /// Non-overlapping blocks.
    Block,
    MovingBlock,
    /// Geometric block lengths with mean `block_length`, wrapping around.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapScheme {
    pub kind: BootstrapKind,
    pub block_length: usize,
    pub seed: u64,
}

impl BootstrapScheme {
    pub fn moving_block(block_length: usize, seed: u64) -> Self {
        Self {
            kind: BootstrapKind::MovingBlock,
            block_length,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_length == 0 {
            return Err(Error::input("block length must be positive"));
        }
        Ok(())
    }
}

fn resample_segment<R: Rng + ?Sized>(x: &[f64], kind: BootstrapKind, b: usize, rng: &mut R, out: &mut Vec<f64>) {
    let n = x.len();
    let b = b.min(n);
    let target = out.len() + n;
    match kind {
        BootstrapKind::Block => {
            let blocks = n / b;
            while out.len() < target {
                let s = rng.random_range(0..blocks) * b;
                let take = b.min(target - out.len());
                out.extend_from_slice(&x[s..s + take]);
            }
        }
        BootstrapKind::MovingBlock => {
            while out.len() < target {
                let s = rng.random_range(0..=n - b);
                let take = b.min(target - out.len());
                out.extend_from_slice(&x[s..s + take]);
            }
        }
        BootstrapKind::Stationary => {
            let geo = Geometric::new(1.0 / b as f64).expect("valid probability");
            while out.len() < target {
                let s = rng.random_range(0..n);
                let len = (geo.sample(rng) as usize + 1).min(target - out.len());
                out.extend((0..len).map(|i| x[(s + i) % n]));
            }
        }
    }
}

/// One bootstrap replicate with the same segment structure as `series`.
/// Block lengths longer than a segment are clamped to it.
pub fn resample_series<R: Rng + ?Sized>(series: &Series, scheme: &BootstrapScheme, rng: &mut R) -> Result<Series> {
    scheme.validate()?;
    let mut values = Vec::with_capacity(series.len());
    for seg in series.segment_slices() {
        resample_segment(seg, scheme.kind, scheme.block_length, rng, &mut values);
    }
    series.with_values(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Estimator on the original series.
    pub estimate: f64,
    pub std_error: f64,
    /// Percentile interval at the requested level.
    pub ci: (f64, f64),
    pub replicates: Vec<f64>,
    /// Replicates where the estimator returned an error.
    pub failures: usize,
}

/// Vector-valued estimator on `replications` resampled series; replicate `r`
/// uses substream `r` of the scheme seed. Returns the successful rows and the
/// failure count. More than 20% failures is an error.
pub fn bootstrap_replicates<F>(
    series: &Series,
    scheme: &BootstrapScheme,
    replications: usize,
    threads: usize,
    estimator: F,
) -> Result<(Vec<Vec<f64>>, usize)>
where
    F: Fn(&Series) -> Result<Vec<f64>> + Sync,
{
    scheme.validate()?;
    let results = par_map(replications, threads, |r| {
        let mut rng = substream(scheme.seed, r as u64);
        resample_series(series, scheme, &mut rng).and_then(|s| estimator(&s))
    });
    let rows: Vec<Vec<f64>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failures = replications - rows.len();
    if failures * 5 > replications {
        return Err(Error::input(format!(
            "estimator failed on {failures} of {replications} bootstrap replicates"
        )));
    }
    Ok((rows, failures))
}

/// Runs `estimator` on `replications` resampled series. Failed replicates are
/// dropped; more than 20% failures is an error.
pub fn bootstrap_estimate<F>(
    series: &Series,
    scheme: &BootstrapScheme,
    replications: usize,
    level: f64,
    threads: usize,
    estimator: F,
) -> Result<BootstrapResult>
where
    F: Fn(&Series) -> Result<f64> + Sync,
{
    scheme.validate()?;
    if replications < 2 {
        return Err(Error::input("at least two bootstrap replications are needed"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::input("confidence level must lie in (0, 1)"));
    }
    let estimate = estimator(series)?;
    let (rows, failures) = bootstrap_replicates(series, scheme, replications, threads, |s| {
        estimator(s).map(|v| vec![v])
    })?;
    let mut replicates: Vec<f64> = rows.into_iter().map(|r| r[0]).collect();
    let std_error = crate::stats::std_dev(&replicates);
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    let ci = (
        crate::stats::quantile_sorted(&sorted, a),
        crate::stats::quantile_sorted(&sorted, 1.0 - a),
    );
    replicates.shrink_to_fit();
    Ok(BootstrapResult {
        estimate,
        std_error,
        ci,
        replicates,
        failures,
    })
}
