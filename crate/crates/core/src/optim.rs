//! Derivative-free Nelder-Mead minimisation with restarts.
//!
//! Uses the dimension-adaptive coefficients of Gao and Han (2012). Restart 0
//! starts from the supplied point; each further restart rebuilds a randomly
//! jittered simplex around the best point found so far.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    /// Number of Nelder-Mead runs (at least 1; the study default is 3).
    pub restarts: usize,
    /// Iteration cap per run.
    pub max_iterations: usize,
    /// A run stops once max f - min f over the simplex falls below this.
    pub f_tol: f64,
    /// Seed for the restart jitter.
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { restarts: 3, max_iterations: 5000, f_tol: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    /// Iterations summed over all runs.
    pub iterations: usize,
    pub evaluations: usize,
    /// The final run met the tolerance before its iteration cap.
    pub converged: bool,
    pub restarts_used: usize,
    /// Best objective of each run, in order.
    pub restart_objectives: Vec<f64>,
    /// Index of the run that produced the returned point.
    pub best_restart: usize,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub report: OptimReport,
}

/// Minimises `f` from `x0` with initial per-coordinate simplex steps `steps`.
/// Non-finite objective values are treated as +inf.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], steps: &[f64], config: &OptimConfig) -> OptimResult {
    assert_eq!(x0.len(), steps.len(), "steps must match the dimension");
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let dim = x0.len();
    if dim == 0 {
        let v = eval(x0);
        return OptimResult {
            x: Vec::new(),
            value: v,
            report: OptimReport {
                iterations: 0,
                evaluations: 1,
                converged: true,
                restarts_used: 1,
                restart_objectives: vec![v],
                best_restart: 0,
            },
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let runs = config.restarts.max(1);
    let mut best_x = x0.to_vec();
    let mut best_v = f64::INFINITY;
    let mut best_restart = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut restart_objectives = Vec::with_capacity(runs);

    for run in 0..runs {
        let (start, run_steps): (Vec<f64>, Vec<f64>) = if run == 0 {
            (x0.to_vec(), steps.to_vec())
        } else {
            let s = steps
                .iter()
                .map(|s| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * s * rng.random_range(0.5..1.5)
                })
                .collect();
            (best_x.clone(), s)
        };
        let (x, v, it, ok) = nelder_mead(&mut eval, &start, &run_steps, config);
        iterations += it;
        converged = ok;
        restart_objectives.push(v);
        // strict improvement beyond 1e-12 keeps ties on the earliest run
        if v < best_v - 1e-12 || best_v == f64::INFINITY && v < f64::INFINITY {
            best_v = v;
            best_x = x;
            best_restart = run;
        }
    }

    OptimResult {
        x: best_x,
        value: best_v,
        report: OptimReport {
            iterations,
            evaluations,
            converged,
            restarts_used: runs,
            restart_objectives,
            best_restart,
        },
    }
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    steps: &[f64],
    config: &OptimConfig,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x0.len();
    let nf = n as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / nf;
    let gamma = 0.75 - 1.0 / (2.0 * nf);
    let delta = 1.0 - 1.0 / nf;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if steps[i] != 0.0 { steps[i] } else { 0.05 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();

    let mut order: Vec<usize> = (0..=n).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];

    while iterations < config.max_iterations {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        let spread = values[worst] - values[best];
        if spread.is_finite() && spread < config.f_tol {
            converged = true;
            break;
        }
        if values[best].is_finite() && simplex_diameter(&simplex, best) < 1e-14 {
            // collapsed: nothing further to gain in this run
            converged = values[worst].is_finite();
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x / nf;
            }
        }
        let point = |coef: f64, out: &mut Vec<f64>, worst_x: &[f64]| {
            for k in 0..n {
                out[k] = centroid[k] + coef * (centroid[k] - worst_x[k]);
            }
        };

        point(alpha, &mut trial, &simplex[worst]);
        let fr = f(&trial);
        if fr < values[best] {
            let reflected = trial.clone();
            point(beta, &mut trial, &simplex[worst]);
            let fe = f(&trial);
            if fe < fr {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }
        let (coef, reference) = if fr < values[worst] { (gamma * alpha, fr) } else { (-gamma, values[worst]) };
        point(coef, &mut trial, &simplex[worst]);
        let fc = f(&trial);
        if fc <= reference {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best_x = simplex[best].clone();
        for i in 0..=n {
            if i == best {
                continue;
            }
            for k in 0..n {
                simplex[i][k] = best_x[k] + delta * (simplex[i][k] - best_x[k]);
            }
            values[i] = f(&simplex[i]);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best], iterations, converged)
}

fn simplex_diameter(simplex: &[Vec<f64>], best: usize) -> f64 {
    simplex
        .iter()
        .map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum()
    }

    #[test]
    fn quadratic_minimum() {
        let r = minimize(
            |x| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 5.0,
            &[0.0, 0.0],
            &[1.0, 1.0],
            &OptimConfig::default(),
        );
        assert!((r.x[0] - 3.0).abs() < 1e-3 && (r.x[1] + 1.0).abs() < 1e-3);
        assert!((r.value - 5.0).abs() < 1e-7);
        assert!(r.report.converged);
        assert_eq!(r.report.restart_objectives.len(), 3);
    }

    #[test]
    fn rosenbrock_in_four_dimensions() {
        let r = minimize(rosenbrock, &[-1.2, 1.0, -0.5, 0.8], &[0.5; 4], &OptimConfig { restarts: 6, ..Default::default() });
        assert!(r.value < 1e-6, "{}", r.value);
    }

    #[test]
    fn infinite_regions_are_avoided() {
        let r = minimize(
            |x| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() },
            &[3.0],
            &[1.0],
            &OptimConfig::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-3);
        let nan = minimize(|x| if x[0] > 2.0 { f64::NAN } else { (x[0] - 1.0).powi(2) }, &[0.0], &[1.0], &OptimConfig::default());
        assert!(nan.value.is_finite());
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = OptimConfig { seed: 9, ..Default::default() };
        let a = minimize(rosenbrock, &[0.0, 0.0, 0.0], &[0.3; 3], &cfg);
        let b = minimize(rosenbrock, &[0.0, 0.0, 0.0], &[0.3; 3], &cfg);
        assert_eq!(a.x, b.x);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn restarts_never_worsen_the_first_run() {
        let r = minimize(rosenbrock, &[2.0, 2.0, 2.0], &[0.1; 3], &OptimConfig { max_iterations: 50, ..Default::default() });
        let first = r.report.restart_objectives[0];
        assert!(r.value <= first);
        assert!(!r.report.converged || r.value < 1e-6);
    }
}
