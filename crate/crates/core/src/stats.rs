//! Small numerical and statistical helpers shared across modules.

use statrs::function::erf::{erfc, erfc_inv};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Normal score of a probability given as `(cdf, sf)`; uses the smaller
/// tail so values near 1 keep full precision.
pub fn norm_score(cdf: f64, sf: f64) -> f64 {
    if cdf <= sf {
        norm_quantile(cdf)
    } else {
        -norm_quantile(sf)
    }
}

/// Standard Laplace CDF.
pub fn laplace_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.5 * x.exp()
    } else {
        1.0 - 0.5 * (-x).exp()
    }
}

/// Standard Laplace quantile: `log(2q)` below the median, `-log(2(1-q))` above.
pub fn laplace_quantile(q: f64) -> f64 {
    if q < 0.5 {
        (2.0 * q).ln()
    } else {
        -(2.0 * (1.0 - q)).ln()
    }
}

/// Laplace value of a probability given as `(cdf, sf)` without cancellation.
pub fn laplace_from_probs(cdf: f64, sf: f64) -> f64 {
    if cdf < 0.5 {
        (2.0 * cdf).ln()
    } else {
        -(2.0 * sf).ln()
    }
}

/// Laplace value of a standard normal variate.
pub fn gaussian_to_laplace(y: f64) -> f64 {
    if y < 0.0 {
        (2.0 * norm_cdf(y)).ln()
    } else {
        -(2.0 * norm_cdf(-y)).ln()
    }
}

/// Inverse of [`gaussian_to_laplace`].
pub fn laplace_to_gaussian(x: f64) -> f64 {
    if x < 0.0 {
        norm_quantile(0.5 * x.exp())
    } else {
        -norm_quantile(0.5 * (-x).exp())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` at sample size `n`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kendall's tau-b in O(n log n) (Knight's merge-sort algorithm).
/// Returns `None` when fewer than two pairs or a margin is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let pairs_total = (n as f64) * (n as f64 - 1.0) / 2.0;
    let tie_pairs = |run: usize| (run as f64) * (run as f64 - 1.0) / 2.0;

    let (mut ties_x, mut ties_xy) = (0.0, 0.0);
    let (mut run_x, mut run_xy) = (1usize, 1usize);
    for i in 1..n {
        if pairs[i].0 == pairs[i - 1].0 {
            run_x += 1;
            if pairs[i].1 == pairs[i - 1].1 {
                run_xy += 1;
            } else {
                ties_xy += tie_pairs(run_xy);
                run_xy = 1;
            }
        } else {
            ties_x += tie_pairs(run_x);
            ties_xy += tie_pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    ties_x += tie_pairs(run_x);
    ties_xy += tie_pairs(run_xy);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf) as f64;

    let mut ties_y = 0.0;
    let mut run_y = 1usize;
    for i in 1..n {
        if ys[i] == ys[i - 1] {
            run_y += 1;
        } else {
            ties_y += tie_pairs(run_y);
            run_y = 1;
        }
    }
    ties_y += tie_pairs(run_y);

    let denom = ((pairs_total - ties_x) * (pairs_total - ties_y)).sqrt();
    if denom == 0.0 {
        return None;
    }
    let concordant_minus_discordant = pairs_total - ties_x - ties_y + ties_xy - 2.0 * swaps;
    Some(concordant_minus_discordant / denom)
}

/// Sorts `v` ascending and returns the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left_buf, right_buf) = buf.split_at_mut(mid);
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        merge_count(l, left_buf) + merge_count(r, right_buf)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = v[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = v[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kendall_brute(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sx = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
                let sy = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
                if sx == 0.0 && sy == 0.0 {
                    continue;
                }
                if sx == 0.0 {
                    tx += 1.0;
                } else if sy == 0.0 {
                    ty += 1.0;
                } else if sx == sy {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
        (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
    }

    #[test]
    fn kendall_monotone_and_antimonotone() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        let z: Vec<f64> = x.iter().map(|v| -v.exp()).collect();
        assert_eq!(kendall_tau(&x, &y), Some(1.0));
        assert_eq!(kendall_tau(&x, &z), Some(-1.0));
    }

    proptest! {
        #[test]
        fn kendall_matches_quadratic_count(
            pts in prop::collection::vec((0i32..6, 0i32..6), 3..40)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
            match kendall_tau(&x, &y) {
                Some(t) => prop_assert!((t - kendall_brute(&x, &y)).abs() < 1e-12),
                None => prop_assert!(kendall_brute(&x, &y).is_nan()),
            }
        }
    }

    #[test]
    fn laplace_quantiles() {
        assert!((laplace_quantile(0.95) - 10f64.ln()).abs() < 1e-12);
        assert!((laplace_quantile(0.25) - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(laplace_quantile(0.5), 0.0);
        for &x in &[-5.0, -0.3, 0.0, 0.7, 12.0] {
            assert!((laplace_quantile(laplace_cdf(x)) - x).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_laplace_round_trip() {
        for &y in &[-8.0, -2.5, -1e-3, 0.0, 0.4, 3.0, 8.0] {
            let x = gaussian_to_laplace(y);
            assert!((laplace_to_gaussian(x) - y).abs() < 1e-9, "{y}");
        }
        assert!((norm_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn ks_p_value_reference_points() {
        // Kolmogorov distribution: P(K > 1.358) ~ 0.05
        let d = 1.358 / (1e6f64).sqrt();
        let p = ks_p_value(d, 1_000_000);
        assert!((p - 0.05).abs() < 2e-3, "{p}");
    }
}
