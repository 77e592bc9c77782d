//! Acceptance suite with its own harness: criteria run one after another
//! (so timings are undisturbed), each prints one `criterion N: PASS|FAIL`
//! line, and the process fails if any criterion does.

use std::f64::consts::PI;
use std::time::Instant;

use faer::Mat;
use mixed_whittle::aep::{aep_cdf, simulate_aep_errors, AepParams};
use mixed_whittle::covariance::{CovarianceFamily, CovarianceSpec};
use mixed_whittle::design::{DesignComponent, DesignMatrix, DesignSpec};
use mixed_whittle::estimate::{fit, gaussian_nll, profile_beta, whittle_nll, Method, ModelSpec};
use mixed_whittle::optim::{minimize, OptimConfig};
use mixed_whittle::predict::{gap_experiment, simple_krige, GapPlan};
use mixed_whittle::simstudy::{
    gen_scenario, median, run_study, scenario_model, simulate_gaussian_process, Metric, ScenarioConfig, ScenarioKind,
    StudyConfig, StudyResults,
};
use mixed_whittle::spectral::{expected_periodogram, modulated_acv, ObservedSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---------- independent oracles ----------

/// E[I_j] = (1/n) sum_s sum_t g_s g_t c(|s - t|) e^{-i w_j (s - t)}.
fn expected_periodogram_oracle(acv: &[f64], mask: &[bool], j: usize) -> f64 {
    let n = mask.len();
    let w = 2.0 * PI * j as f64 / n as f64;
    let mut total = 0.0;
    for s in 0..n {
        for t in 0..n {
            if mask[s] && mask[t] {
                total += acv[s.abs_diff(t)] * (w * (s as f64 - t as f64)).cos();
            }
        }
    }
    total / n as f64
}

fn periodogram_oracle(y: &[f64], j: usize) -> f64 {
    let n = y.len();
    let w = 2.0 * PI * j as f64 / n as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        re += v * (w * (t + 1) as f64).cos();
        im -= v * (w * (t + 1) as f64).sin();
    }
    (re * re + im * im) / n as f64
}

/// Inverse and log-determinant by Gauss-Jordan elimination with partial pivoting.
fn inverse_logdet(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut logdet = 0.0;
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, p);
        inv.swap(col, p);
        let d = m[col][col];
        logdet += d.abs().ln();
        for k in 0..n {
            m[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                for k in 0..n {
                    m[r][k] -= f * m[col][k];
                    inv[r][k] -= f * inv[col][k];
                }
            }
        }
    }
    (inv, logdet)
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn random_matern(rng: &mut ChaCha8Rng) -> CovarianceSpec {
    CovarianceSpec::matern(
        rng.random_range(0.0..0.5),
        rng.random_range(0.2..3.0),
        rng.random_range(0.5..10.0),
        rng.random_range(0.3..3.0),
    )
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    loop {
        let m: Vec<bool> = (0..n).map(|_| rng.random::<f64>() > 0.3).collect();
        if m.iter().filter(|&&g| g).count() >= 4 {
            return m;
        }
    }
}

fn fixture_design() -> DesignSpec {
    DesignSpec::new(vec![
        DesignComponent::Intercept,
        DesignComponent::LinearTrend,
        DesignComponent::SeasonalPair { period: 12.0 },
    ])
    .unwrap()
}

// ---------- criteria ----------

fn criterion_01_expected_periodogram_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut oracle_time = 0.0;
    for &n in &[16usize, 32] {
        for _ in 0..10 {
            let cov = random_matern(&mut rng);
            let mask = random_mask(&mut rng, n);
            let acv = cov.acv_sequence(n).unwrap();
            let f = expected_periodogram(&modulated_acv(&acv, &mask).unwrap()).unwrap();
            let t = Instant::now();
            for (k, fk) in f.iter().enumerate() {
                worst = worst.max((fk - expected_periodogram_oracle(&acv, &mask, k)).abs());
            }
            oracle_time += t.elapsed().as_secs_f64();
        }
    }
    let secs = started.elapsed().as_secs_f64() - oracle_time;
    report(1, worst < 1e-10 && secs < 1.0, &format!("max abs error {worst:.2e}, runtime {secs:.4} s"));
}

fn criterion_02_whittle_objective_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 32;
    let design = fixture_design();
    let m: DesignMatrix = design.build(None, None, n).unwrap();
    let x: Vec<f64> = (0..n).map(|t| 1.0 + 0.1 * t as f64 + (t as f64).sin() + rng.random_range(-1.0..1.0)).collect();
    let mask = random_mask(&mut rng, n);
    let series = ObservedSeries::new(x.clone(), mask.clone()).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let cov = random_matern(&mut rng);
        let beta: Vec<f64> = (0..m.cols()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = whittle_nll(&series, &m, &cov, &beta);
        let fitted = m.mul_vec(&beta).unwrap();
        let resid: Vec<f64> = (0..n).map(|t| if mask[t] { x[t] - fitted[t] } else { 0.0 }).collect();
        let acv = cov.acv_sequence(n).unwrap();
        let oracle: f64 = (0..n)
            .map(|j| {
                let f = expected_periodogram_oracle(&acv, &mask, j);
                f.ln() + periodogram_oracle(&resid, j) / f
            })
            .sum();
        worst = worst.max((got - oracle).abs() / oracle.abs().max(1.0));
    }
    report(2, worst < 1e-9, &format!("max relative deviation {worst:.2e} over 20 points"));
}

fn criterion_03_gaussian_likelihood_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 16;
    let design = fixture_design();
    let m = design.build(None, None, n).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let cov = random_matern(&mut rng);
        let mask = random_mask(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let beta: Vec<f64> = (0..m.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let series = ObservedSeries::new(x.clone(), mask.clone()).unwrap();
        let idx: Vec<usize> = (0..n).filter(|&t| mask[t]).collect();
        let acv = cov.acv_sequence(n).unwrap();
        let c: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| acv[i.abs_diff(j)]).collect()).collect();
        let (inv, logdet) = inverse_logdet(&c);
        let fitted = m.mul_vec(&beta).unwrap();
        let r: Vec<f64> = idx.iter().map(|&t| x[t] - fitted[t]).collect();
        let oracle = 0.5 * logdet + 0.5 * dot(&r, &matvec(&inv, &r)) + 0.5 * idx.len() as f64 * (2.0 * PI).ln();
        let got = gaussian_nll(&series, &m, &cov, &beta).unwrap();
        worst = worst.max((got - oracle).abs());

        if idx.len() > m.cols() {
            let m_obs = DesignMatrix {
                columns: m.columns.iter().map(|col| idx.iter().map(|&t| col[t]).collect()).collect(),
                labels: m.labels.clone(),
                rows: idx.len(),
            };
            let c_mat = Mat::from_fn(idx.len(), idx.len(), |i, j| c[i][j]);
            let x_obs: Vec<f64> = idx.iter().map(|&t| x[t]).collect();
            let got_beta = profile_beta(&m_obs, &c_mat, &x_obs).unwrap();
            // (M^T C^-1 M)^-1 M^T C^-1 x
            let cinv_m: Vec<Vec<f64>> = m_obs.columns.iter().map(|col| matvec(&inv, col)).collect();
            let gram: Vec<Vec<f64>> =
                cinv_m.iter().map(|a| m_obs.columns.iter().map(|b| dot(a, b)).collect()).collect();
            let rhs: Vec<f64> = cinv_m.iter().map(|a| dot(a, &x_obs)).collect();
            let (ginv, _) = inverse_logdet(&gram);
            let oracle_beta = matvec(&ginv, &rhs);
            for (a, b) in got_beta.iter().zip(&oracle_beta) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }

    // profiled versus joint optimisation on a complete n = 64 fixture
    let n = 64;
    let spec_design = DesignSpec::new(vec![DesignComponent::Intercept, DesignComponent::LinearTrend]).unwrap();
    let truth = CovarianceSpec::exponential(0.2, 1.0, 4.0);
    let noise = simulate_gaussian_process(&truth, n, 33).unwrap();
    let x: Vec<f64> = (0..n).map(|t| 2.0 + 1.5 * (t + 1) as f64 / n as f64 + noise[t]).collect();
    let series = ObservedSeries::complete(x).unwrap();
    let tight = OptimConfig { restarts: 6, f_tol: 1e-12, ..Default::default() };
    let profiled = fit(&series, None, &ModelSpec::new(spec_design.clone(), CovarianceFamily::Exponential, Method::Exact), &tight).unwrap();
    let m = spec_design.build(None, None, n).unwrap();
    let joint = minimize(
        |p| {
            let cov = CovarianceSpec::exponential(p[0].exp(), p[1].exp(), p[2].exp());
            gaussian_nll(&series, &m, &cov, &p[3..]).unwrap_or(f64::INFINITY)
        },
        &[(0.1f64).ln(), 0.0, (2.0f64).ln(), 2.0, 1.0],
        &[0.5, 0.5, 0.5, 0.5, 0.5],
        &tight,
    );
    let gap = (profiled.objective - joint.value).abs();
    report(
        3,
        worst < 1e-9 && gap < 1e-6,
        &format!("max oracle deviation {worst:.2e}; profiled {:.9} vs joint {:.9}", profiled.objective, joint.value),
    );
}

/// Integral of the AEP density, splitting at the mode and using z = mu +- v^2
/// so the cusp at the mode does not slow Simpson's rule.
fn aep_mass(p: &AepParams) -> f64 {
    let side = |sign: f64, scale_tail: f64| {
        let vmax = scale_tail.sqrt();
        let k = 200_000;
        let h = vmax / k as f64;
        let g = |v: f64| 2.0 * v * p.pdf(p.mu + sign * v * v);
        let mut s = g(0.0) + g(vmax);
        for i in 1..k {
            s += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let lo = p.mu - p.quantile(1e-15).unwrap();
    let hi = p.quantile_tails(1.0 - 1e-15, 1e-15) - p.mu;
    side(-1.0, lo) + side(1.0, hi)
}

fn criterion_04_aep_distribution_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut round_trip = 0.0f64;
    let mut mass_err = 0.0f64;
    let mut mode_err = 0.0f64;
    for _ in 0..50 {
        let p = AepParams::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..3.0),
            rng.random_range(0.1..0.9),
            rng.random_range(0.6..4.0),
            rng.random_range(0.6..4.0),
        )
        .unwrap();
        for i in 1..=99 {
            let prob = i as f64 / 100.0;
            round_trip = round_trip.max((aep_cdf(p.quantile(prob).unwrap(), &p) - prob).abs());
        }
        mode_err = mode_err.max((aep_cdf(p.mu, &p) - p.varsigma).abs());
        mass_err = mass_err.max((aep_mass(&p) - 1.0).abs());
    }
    // Kolmogorov-Smirnov against the exact cdf, iid draws (pure nugget)
    let theta = AepParams { mu: 0.0, sigma: 1.4, varsigma: 0.4, p1: 1.0, p2: 1.9 };
    let iid = CovarianceSpec::matern(1.0, 0.0, 1.0, 1.5);
    let mut sample = simulate_aep_errors(&iid, &theta, 100_000, 44).unwrap();
    sample.sort_by(f64::total_cmp);
    let m = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = aep_cdf(z, &theta);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    // asymptotic critical value at level 0.01
    let ks_ok = d * m.sqrt() < 1.6276;
    let secs = started.elapsed().as_secs_f64();
    report(
        4,
        round_trip < 1e-9 && mass_err < 1e-6 && mode_err == 0.0 && ks_ok && secs < 30.0,
        &format!(
            "round trip {round_trip:.2e}, mass {mass_err:.2e}, F(mu) - varsigma {mode_err:.1e}, KS sqrt(n) D = {:.3}, {secs:.1} s",
            d * m.sqrt()
        ),
    );
}

fn criterion_05_simulation_exactness() {
    let cov = CovarianceSpec::matern(0.05, 2.0, 25.0, 1.5);
    let n = 256;
    let reps = 5000;
    let acv = cov.acv_sequence(6).unwrap();
    let mut est = vec![Vec::with_capacity(reps); 6];
    for r in 0..reps {
        let x = simulate_gaussian_process(&cov, n, r as u64).unwrap();
        for (lag, e) in est.iter_mut().enumerate() {
            e.push((0..n - lag).map(|t| x[t] * x[t + lag]).sum::<f64>() / (n - lag) as f64);
        }
    }
    let mut worst_z = 0.0f64;
    for (lag, e) in est.iter().enumerate() {
        let mean = e.iter().sum::<f64>() / reps as f64;
        let sd = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let z = (mean - acv[lag]).abs() / (sd / (reps as f64).sqrt());
        worst_z = worst_z.max(z);
    }
    report(5, worst_z < 3.0, &format!("largest deviation {worst_z:.2} SE over lags 0-5"));
}

fn study(kind: ScenarioKind, n: usize, reps: usize, methods: Vec<Method>) -> StudyResults {
    let cfg = StudyConfig {
        scenarios: vec![kind],
        sizes: vec![n],
        replicates: reps,
        methods,
        seed: 2024,
        ..Default::default()
    };
    let res = run_study(&cfg).unwrap();
    if !res.failures.is_empty() {
        println!("  {} failed fits excluded", res.failures.len());
    }
    res
}

fn med(res: &StudyResults, kind: ScenarioKind, n: usize, method: Method, metric: Metric) -> f64 {
    median(&res.values(kind, n, method, metric))
}

fn criterion_06_consistency_trend() {
    let started = Instant::now();
    let kind = ScenarioKind::StandardMixed;
    let small = study(kind, 256, 50, vec![Method::Whittle]);
    let large = study(kind, 2048, 50, vec![Method::Whittle]);
    let a = (med(&small, kind, 256, Method::Whittle, Metric::AlphaRelative), med(&large, kind, 2048, Method::Whittle, Metric::AlphaRelative));
    let b = (med(&small, kind, 256, Method::Whittle, Metric::BetaRelative), med(&large, kind, 2048, Method::Whittle, Metric::BetaRelative));
    let secs = started.elapsed().as_secs_f64();
    report(
        6,
        a.1 < a.0 && b.1 < b.0 && secs <= 1800.0,
        &format!("alpha {:.3} -> {:.3}, beta {:.3} -> {:.3}, {secs:.0} s", a.0, a.1, b.0, b.1),
    );
}

fn criterion_07_method_ordering() {
    let kind = ScenarioKind::StandardMixed;
    let res = study(kind, 1024, 100, vec![Method::Whittle, Method::Exact, Method::TwoStage]);
    let ml = med(&res, kind, 1024, Method::Exact, Metric::BetaRelative);
    let w = med(&res, kind, 1024, Method::Whittle, Metric::BetaRelative);
    let ts = med(&res, kind, 1024, Method::TwoStage, Metric::BetaRelative);
    let ordered = ml <= w && w <= ts;
    let closer = (w - ml).abs() < (ts - w).abs();
    report(
        7,
        ordered && closer,
        &format!("median beta error ML {ml:.4}, Whittle {w:.4}, two-stage {ts:.4}; ordered {ordered}, closer to ML {closer}"),
    );
}

fn criterion_08_robustness_ordering() {
    let kind = ScenarioKind::AepError;
    let res = study(kind, 1024, 100, vec![Method::Whittle, Method::Exact]);
    let acv = (med(&res, kind, 1024, Method::Whittle, Metric::AcvDivergence), med(&res, kind, 1024, Method::Exact, Metric::AcvDivergence));
    let irf = (med(&res, kind, 1024, Method::Whittle, Metric::IrfDivergence), med(&res, kind, 1024, Method::Exact, Metric::IrfDivergence));
    report(
        8,
        acv.0 <= acv.1 && irf.0 <= irf.1,
        &format!("median ACV divergence Whittle {:.3} vs ML {:.3}; IRF divergence {:.4} vs {:.4}", acv.0, acv.1, irf.0, irf.1),
    );
}

fn intercept_fit(alpha: CovarianceSpec, mean: f64, n: usize) -> mixed_whittle::estimate::ModelFit {
    // a fit object with known parameters, built by fitting with everything fixed
    let design = DesignSpec::new(vec![DesignComponent::Intercept]).unwrap();
    let mut spec = ModelSpec::new(design, alpha.family, Method::Exact);
    for &p in alpha.family.params() {
        spec = spec.with_fixed(p, alpha.get(p));
    }
    let x: Vec<f64> = (0..n).map(|t| mean + if t % 2 == 0 { 1e-3 } else { -1e-3 }).collect();
    let mut f = fit(&ObservedSeries::complete(x).unwrap(), None, &spec, &OptimConfig::default()).unwrap();
    f.beta = vec![mean];
    f
}

fn criterion_09_kriging_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // interpolation exactness without nugget
    let n = 40;
    let alpha = CovarianceSpec::matern(0.0, 1.0, 5.0, 1.5);
    let f = intercept_fit(alpha, 1.0, n);
    let x: Vec<f64> = simulate_gaussian_process(&alpha, n, 90).unwrap().iter().map(|v| v + 1.0).collect();
    let mut mask = vec![true; n];
    mask[13] = false;
    let s = ObservedSeries::new(x.clone(), mask).unwrap();
    let targets = [3usize, 20, 39];
    let p = simple_krige(&f, &s, None, &targets, None).unwrap();
    let interp = targets.iter().enumerate().map(|(i, &t)| (p.mean[i] - x[t]).abs().max(p.variance[i])).fold(0.0, f64::max);

    // variance never increases when an observation is added
    let mut violations = 0;
    for _ in 0..100 {
        let n = rng.random_range(10..40);
        let alpha = random_matern(&mut rng);
        let f = intercept_fit(alpha, 0.0, n);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() > 0.4).collect();
        mask[0] = true;
        mask[n - 1] = true;
        let missing: Vec<usize> = (0..n).filter(|&t| !mask[t]).collect();
        if missing.len() < 2 {
            continue;
        }
        let target = missing[0];
        let add = missing[1 + rng.random_range(0..missing.len() - 1)];
        let before = simple_krige(&f, &ObservedSeries::new(x.clone(), mask.clone()).unwrap(), None, &[target], None).unwrap();
        mask[add] = true;
        let after = simple_krige(&f, &ObservedSeries::new(x.clone(), mask).unwrap(), None, &[target], None).unwrap();
        if after.variance[0] > before.variance[0] + 1e-12 {
            violations += 1;
        }
    }

    // identical fits in the gap experiment
    let n = 240;
    let f = intercept_fit(CovarianceSpec::matern(0.1, 1.0, 6.0, 1.5), 0.0, n);
    let y = simulate_gaussian_process(&CovarianceSpec::matern(0.1, 1.0, 6.0, 1.5), n, 91).unwrap();
    let s = ObservedSeries::complete(y).unwrap();
    let table = gap_experiment(&s, None, [("a", &f), ("b", &f)], &GapPlan::STANDARD, 10, 5).unwrap();
    let zero = table.rows.iter().all(|r| format!("{:.2}", r.reduction_percent) == "0.00");
    report(
        9,
        interp < 1e-8 && violations == 0 && zero,
        &format!("interpolation error {interp:.1e}, variance increases {violations}/100, identical-fit reductions 0.00%: {zero}"),
    );
}

fn median_secs(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

fn criterion_10_complexity_scaling() {
    let cov = CovarianceSpec::matern(0.1, 1.0, 20.0, 1.5);
    let design = DesignSpec::new(vec![DesignComponent::Intercept, DesignComponent::LinearTrend]).unwrap();
    let setup = |n: usize| {
        let x = simulate_gaussian_process(&cov, n, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() > 0.25).collect();
        (ObservedSeries::new(x, mask).unwrap(), design.build(None, None, n).unwrap())
    };
    let whittle_time = |n: usize| {
        let (s, m) = setup(n);
        let beta = [0.1, 0.2];
        let mut samples = Vec::new();
        for _ in 0..100 {
            let t = Instant::now();
            std::hint::black_box(whittle_nll(&s, &m, &cov, &beta));
            samples.push(t.elapsed().as_secs_f64());
        }
        median_secs(samples)
    };
    let gauss_time = |n: usize, reps: usize| {
        let x = simulate_gaussian_process(&cov, n, 11).unwrap();
        let s = ObservedSeries::complete(x).unwrap();
        let m = design.build(None, None, n).unwrap();
        let mut samples = Vec::new();
        for _ in 0..reps {
            let t = Instant::now();
            std::hint::black_box(gaussian_nll(&s, &m, &cov, &[0.1, 0.2]).unwrap());
            samples.push(t.elapsed().as_secs_f64());
        }
        median_secs(samples)
    };
    let w_small = whittle_time(1 << 13);
    let w_large = whittle_time(1 << 16);
    let g_small = gauss_time(1 << 10, 9);
    let g_large = gauss_time(1 << 12, 3);
    let (rw, rg) = (w_large / w_small, g_large / g_small);
    report(
        10,
        rw < 14.0 && rg > 16.0,
        &format!("Whittle 2^16 / 2^13 time ratio {rw:.2}; Gaussian 2^12 / 2^10 ratio {rg:.1}"),
    );
}

fn criterion_11_gap_experiment_protocol() {
    let sc = ScenarioConfig { seed: 11, ..ScenarioConfig::new(ScenarioKind::StandardMixed, 720) };
    let data = gen_scenario(&sc, 0).unwrap();
    let cfg = OptimConfig::default();
    let whittle = fit(&data.series, Some(&data.exog), &scenario_model(ScenarioKind::StandardMixed, 120, Method::Whittle), &cfg).unwrap();
    let ml_exp_spec = ModelSpec::new(ScenarioKind::StandardMixed.design(120), CovarianceFamily::Exponential, Method::Exact);
    let ml_exp = fit(&data.series, Some(&data.exog), &ml_exp_spec, &cfg).unwrap();
    let table = gap_experiment(&data.series, Some(&data.exog), [("whittle_matern", &whittle), ("exact_exponential", &ml_exp)], &GapPlan::STANDARD, 25, 7).unwrap();
    let mut detail = Vec::new();
    let mut pass = table.rows.len() == 3;
    for row in &table.rows {
        detail.push(format!("{}: {:.2}% (pooled {:.2}%)", row.label, row.median_reduction_percent, row.reduction_percent));
        pass &= row.median_reduction_percent > 0.0;
    }
    report(11, pass, &format!("median per-repeat RMSE reduction {}", detail.join(", ")));
}

fn main() {
    // an optional substring filter, as with the default harness
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn()); 11] = [
        ("criterion_01_expected_periodogram_exactness", criterion_01_expected_periodogram_exactness),
        ("criterion_02_whittle_objective_exactness", criterion_02_whittle_objective_exactness),
        ("criterion_03_gaussian_likelihood_exactness", criterion_03_gaussian_likelihood_exactness),
        ("criterion_04_aep_distribution_suite", criterion_04_aep_distribution_suite),
        ("criterion_05_simulation_exactness", criterion_05_simulation_exactness),
        ("criterion_06_consistency_trend", criterion_06_consistency_trend),
        ("criterion_07_method_ordering", criterion_07_method_ordering),
        ("criterion_08_robustness_ordering", criterion_08_robustness_ordering),
        ("criterion_09_kriging_properties", criterion_09_kriging_properties),
        ("criterion_10_complexity_scaling", criterion_10_complexity_scaling),
        ("criterion_11_gap_experiment_protocol", criterion_11_gap_experiment_protocol),
    ];
    // the failing assertion is already summarised by the criterion line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        if std::panic::catch_unwind(run).is_err() {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
