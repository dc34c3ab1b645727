//! Derivative-free minimization (Nelder–Mead simplex).
//!
//! Every likelihood in the crate is optimized on an unconstrained scale, so
//! the minimizer needs no bound handling. Non-finite objective values are
//! treated as `+inf`, which lets objectives reject inadmissible points.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Stop once the simplex diameter (max distance to the best vertex) is below this.
    pub xtol: f64,
    /// Also stop when the spread of objective values is below `ftol * (1 + |f_best|)`.
    /// Zero disables the test.
    pub ftol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex along each axis.
    pub step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            xtol: 1e-8,
            ftol: 0.0,
            max_evals: 20_000,
            step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

impl Minimum {
    /// Turns a non-converged run into a diagnostic error.
    pub fn require_converged(self, what: &str) -> Result<Self> {
        if self.converged && self.value.is_finite() {
            Ok(self)
        } else {
            Err(Error::Numerical {
                message: format!("{what}: simplex search did not converge"),
                best: self.x,
                best_value: self.value,
            })
        }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    pub fn with_xtol(mut self, xtol: f64) -> Self {
        self.xtol = xtol;
        self
    }

    pub fn with_ftol(mut self, ftol: f64) -> Self {
        self.ftol = ftol;
        self
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    /// One simplex run from `x0`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        self.run(&mut f, x0, self.max_evals)
    }

    /// Runs from every start, restarting each run once from its own optimum
    /// (guards against premature collapse), and keeps the best result.
    pub fn minimize_multistart<F>(&self, mut f: F, starts: &[Vec<f64>]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        assert!(!starts.is_empty(), "at least one start required");
        let mut best: Option<Minimum> = None;
        let mut total = 0;
        for x0 in starts {
            let first = self.run(&mut f, x0, self.max_evals);
            let second = self.run(&mut f, &first.x, self.max_evals);
            total += first.evals + second.evals;
            let run = if second.value <= first.value { second } else { first };
            best = match best {
                Some(b) if b.value <= run.value => Some(b),
                _ => Some(run),
            };
        }
        let mut best = best.unwrap();
        best.evals = total;
        best
    }

    /// `count` starts: `center` itself plus uniform jitter of half-width `spread`.
    pub fn jittered_starts<R: Rng + ?Sized>(
        center: &[f64],
        spread: f64,
        count: usize,
        rng: &mut R,
    ) -> Vec<Vec<f64>> {
        let mut starts = vec![center.to_vec()];
        for _ in 1..count.max(1) {
            starts.push(
                center
                    .iter()
                    .map(|c| c + spread * (2.0 * rng.random::<f64>() - 1.0))
                    .collect(),
            );
        }
        starts
    }

    fn run<F>(&self, f: &mut F, x0: &[f64], budget: usize) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        if n == 0 {
            let value = sanitize(f(x0));
            return Minimum {
                x: Vec::new(),
                value,
                evals: 1,
                converged: true,
            };
        }
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            sanitize(f(x))
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += self.step;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial2 = vec![0.0; n];
        let mut converged = false;

        loop {
            // order: best first
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let diameter = simplex[1..]
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            let spread = values[n] - values[0];
            if diameter < self.xtol
                || (self.ftol > 0.0
                    && values[0].is_finite()
                    && spread <= self.ftol * (1.0 + values[0].abs()))
            {
                converged = true;
                break;
            }
            if evals >= budget {
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let worst = &simplex[n];
            for j in 0..n {
                trial[j] = centroid[j] + (centroid[j] - worst[j]);
            }
            let fr = eval(&trial, &mut evals);

            if fr < values[0] {
                for j in 0..n {
                    trial2[j] = centroid[j] + 2.0 * (trial[j] - centroid[j]);
                }
                let fe = eval(&trial2, &mut evals);
                if fe < fr {
                    simplex[n].copy_from_slice(&trial2);
                    values[n] = fe;
                } else {
                    simplex[n].copy_from_slice(&trial);
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
                continue;
            }
            // contraction (outside if the reflection beat the worst point)
            let outside = fr < values[n];
            for j in 0..n {
                trial2[j] = if outside {
                    centroid[j] + 0.5 * (trial[j] - centroid[j])
                } else {
                    centroid[j] + 0.5 * (simplex[n][j] - centroid[j])
                };
            }
            let fc = eval(&trial2, &mut evals);
            if (outside && fc <= fr) || (!outside && fc < values[n]) {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            for i in 1..=n {
                for j in 0..n {
                    simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                }
                values[i] = eval(&simplex[i].clone(), &mut evals);
            }
        }

        let (best_idx, _) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        Minimum {
            x: simplex[best_idx].clone(),
            value: values[best_idx],
            evals,
            converged,
        }
    }
}

/// Central-difference Hessian of `f` at `x`.
pub fn numeric_hessian<F>(f: F, x: &[f64]) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut hess = vec![vec![0.0; n]; n];
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + h[i];
        let fp = f(&p);
        p[i] = x[i] - h[i];
        let fm = f(&p);
        p[i] = x[i];
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let nm = NelderMead::default().with_xtol(1e-10);
        let m = nm.minimize_multistart(rosenbrock, &[vec![-1.2, 1.0]]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6, "{:?}", m.x);
        assert!((m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn infinite_region_is_avoided() {
        // minimum of (x-2)^2 restricted to x > 1
        let f = |x: &[f64]| {
            if x[0] <= 1.0 {
                f64::INFINITY
            } else {
                (x[0] - 2.0).powi(2)
            }
        };
        let m = NelderMead::default().minimize(f, &[1.5]);
        assert!((m.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn budget_exhaustion_reports_error() {
        let m = NelderMead::default()
            .with_max_evals(5)
            .minimize(rosenbrock, &[-1.2, 1.0]);
        assert!(!m.converged);
        let err = m.require_converged("rosenbrock").unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] + 0.5 * x[1] * x[1];
        let h = numeric_hessian(f, &[0.3, -2.0]);
        assert!((h[0][0] - 6.0).abs() < 1e-5);
        assert!((h[0][1] - 1.0).abs() < 1e-5);
        assert!((h[1][1] - 1.0).abs() < 1e-5);
    }
}
