//! Simple Kriging with the fitted fixed term as a known mean, for gap
//! filling and forecasting, plus the Gaussian-copula pipeline for AEP fits
//! and the gap-carving experiment.
//!
//! Times are 0-based indices into the series; indices at or beyond the
//! series length are forecasts.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::ExogenousSeries;
use crate::error::{Error, Result};
use crate::estimate::ModelFit;
use crate::linalg::{toeplitz_submatrix, Cholesky};
use crate::special::norm_quantile;
use crate::spectral::ObservedSeries;

/// Diagonal jitter escalations allowed on factorisation failure.
const MAX_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub times: Vec<usize>,
    pub mean: Vec<f64>,
    /// Kriging variance in the Gaussian space of the model.
    pub variance: Vec<f64>,
    /// Predictive interval at `level`, when requested.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub level: Option<f64>,
    /// Jitter escalations needed to factorise the observed covariance.
    pub escalations: usize,
    /// Observed residuals whose AEP probability hit the clamp.
    pub clamped: usize,
}

/// Kriging of zero-mean residuals: means k^T C^{-1} r and variances
/// c(0) - k^T C^{-1} k at `targets`.
fn krige_residuals(acv: &[f64], idx: &[usize], r_obs: &[f64], targets: &[usize]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let c = toeplitz_submatrix(acv, idx);
    let chol = Cholesky::with_jitter(c.as_ref(), acv[0], MAX_ESCALATIONS).ok_or_else(|| {
        Error::Numerical(format!(
            "observed covariance matrix is not positive definite after {MAX_ESCALATIONS} jitter escalations"
        ))
    })?;
    if chol.escalations > 0 {
        log::info!("kriging needed {} jitter escalation(s)", chol.escalations);
    }
    let mut k = Mat::from_fn(idx.len(), targets.len(), |i, j| acv[idx[i].abs_diff(targets[j])]);
    chol.solve_lower_in_place(&mut k);
    let w = chol.whiten(r_obs);
    let mut means = Vec::with_capacity(targets.len());
    let mut vars = Vec::with_capacity(targets.len());
    for j in 0..targets.len() {
        let col = k.col(j);
        let mean: f64 = col.iter().zip(&w).map(|(a, b)| a * b).sum();
        let explained: f64 = col.iter().map(|a| a * a).sum();
        means.push(mean);
        vars.push((acv[0] - explained).clamp(0.0, acv[0]));
    }
    Ok((means, vars, chol.escalations))
}

struct Prepared {
    fixed: Vec<f64>,
    idx: Vec<usize>,
    resid: Vec<f64>,
    acv: Vec<f64>,
}

fn prepare(fit: &ModelFit, series: &ObservedSeries, exog: Option<&ExogenousSeries>, targets: &[usize]) -> Result<Prepared> {
    if targets.is_empty() {
        return Err(Error::Input("no target times".into()));
    }
    if series.len() != fit.n {
        return Err(Error::Dimension(format!("fit was made on {} time steps, series has {}", fit.n, series.len())));
    }
    let rows = targets.iter().copied().max().unwrap_or(0).max(series.len() - 1) + 1;
    let fixed = fit.fixed_term(exog, rows)?;
    let idx = series.observed_indices();
    let raw = series.raw_values();
    let resid: Vec<f64> = idx.iter().map(|&t| raw[t] - fixed[t]).collect();
    let acv = fit.alpha.acv_sequence(rows)?;
    Ok(Prepared { fixed, idx, resid, acv })
}

/// Simple Kriging of the series at `targets`, treating the fitted fixed
/// term as the known mean.
pub fn simple_krige(
    fit: &ModelFit,
    series: &ObservedSeries,
    exog: Option<&ExogenousSeries>,
    targets: &[usize],
    level: Option<f64>,
) -> Result<Prediction> {
    let p = prepare(fit, series, exog, targets)?;
    let (rm, variance, escalations) = krige_residuals(&p.acv, &p.idx, &p.resid, targets)?;
    let mean: Vec<f64> = targets.iter().zip(&rm).map(|(&t, r)| p.fixed[t] + r).collect();
    let (lower, upper) = match level {
        Some(l) => {
            let z = interval_z(l)?;
            let lo = mean.iter().zip(&variance).map(|(m, v)| m - z * v.sqrt()).collect();
            let hi = mean.iter().zip(&variance).map(|(m, v)| m + z * v.sqrt()).collect();
            (Some(lo), Some(hi))
        }
        None => (None, None),
    };
    Ok(Prediction { times: targets.to_vec(), mean, variance, lower, upper, level, escalations, clamped: 0 })
}

fn interval_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("interval level must lie in (0, 1), got {level}")));
    }
    Ok(norm_quantile(0.5 + level / 2.0))
}

/// Kriging for AEP fits: residuals are mapped to Gaussian scores, kriged,
/// and the predicted score (and its interval ends) mapped back through
/// F^{-1}(Phi(.)) before adding the fixed term.
pub fn krige_aep(
    fit: &ModelFit,
    series: &ObservedSeries,
    exog: Option<&ExogenousSeries>,
    targets: &[usize],
    level: Option<f64>,
) -> Result<Prediction> {
    let theta = fit.theta.ok_or_else(|| Error::Config("AEP Kriging needs a fit with AEP marginal parameters".into()))?;
    let p = prepare(fit, series, exog, targets)?;
    let mut clamped = 0;
    let scores: Vec<f64> = p
        .resid
        .iter()
        .map(|&r| {
            let (g, hit) = theta.to_gaussian(r);
            clamped += hit as usize;
            g
        })
        .collect();
    if clamped > 0 {
        log::info!("{clamped} residual probabilities clamped in the Gaussian transform");
    }
    let (gm, variance, escalations) = krige_residuals(&p.acv, &p.idx, &scores, targets)?;
    let mean = targets.iter().zip(&gm).map(|(&t, g)| p.fixed[t] + theta.from_gaussian(*g)).collect();
    let (lower, upper) = match level {
        Some(l) => {
            let z = interval_z(l)?;
            let map = |sign: f64| -> Vec<f64> {
                targets
                    .iter()
                    .zip(gm.iter().zip(&variance))
                    .map(|(&t, (g, v))| p.fixed[t] + theta.from_gaussian(g + sign * z * v.sqrt()))
                    .collect()
            };
            (Some(map(-1.0)), Some(map(1.0)))
        }
        None => (None, None),
    };
    Ok(Prediction { times: targets.to_vec(), mean, variance, lower, upper, level, escalations, clamped })
}

/// Dispatches to [`krige_aep`] for AEP fits and [`simple_krige`] otherwise.
pub fn predict(
    fit: &ModelFit,
    series: &ObservedSeries,
    exog: Option<&ExogenousSeries>,
    targets: &[usize],
    level: Option<f64>,
) -> Result<Prediction> {
    if fit.theta.is_some() {
        krige_aep(fit, series, exog, targets, level)
    } else {
        simple_krige(fit, series, exog, targets, level)
    }
}

/// Point predictions only; an empty target set gives an empty result.
pub fn predict_values(
    fit: &ModelFit,
    series: &ObservedSeries,
    exog: Option<&ExogenousSeries>,
    targets: &[usize],
) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    Ok(predict(fit, series, exog, targets, None)?.mean)
}

/// `count` gaps of `length` consecutive values each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapPlan {
    pub count: usize,
    pub length: usize,
}

impl GapPlan {
    /// 12 x 1, 6 x 2 and 3 x 4 months.
    pub const STANDARD: [GapPlan; 3] =
        [GapPlan { count: 12, length: 1 }, GapPlan { count: 6, length: 2 }, GapPlan { count: 3, length: 4 }];

    pub fn label(&self) -> String {
        format!("{}x{}", self.count, self.length)
    }
}

/// Places `plan` gaps at random over observed values so that every gap is
/// bordered on both sides by an observed value that stays observed.
pub fn carve_gaps(mask: &[bool], plan: GapPlan, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = mask.len();
    if plan.count == 0 || plan.length == 0 {
        return Err(Error::Config("gap plans need a positive count and length".into()));
    }
    let fits = |taken: &[bool], start: usize| {
        start >= 1
            && start + plan.length < n
            && mask[start - 1]
            && !taken[start - 1]
            && mask[start + plan.length]
            && !taken[start + plan.length]
            && (start..start + plan.length).all(|t| mask[t] && !taken[t])
    };
    for _ in 0..100 {
        let mut taken = vec![false; n];
        let mut gaps = Vec::with_capacity(plan.count * plan.length);
        let mut placed = 0;
        let mut attempts = 0;
        while placed < plan.count && attempts < 10_000 {
            attempts += 1;
            let start = rng.random_range(1..n.max(2));
            if fits(&taken, start) {
                for t in start..start + plan.length {
                    taken[t] = true;
                    gaps.push(t);
                }
                placed += 1;
            }
        }
        if placed == plan.count {
            gaps.sort_unstable();
            return Ok(gaps);
        }
    }
    Err(Error::Input(format!(
        "cannot place {} gaps of length {} between observed values in a series of length {n}",
        plan.count, plan.length
    )))
}

/// RMSE of each fit on each plan, per repeat and pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub plan: GapPlan,
    pub label: String,
    /// Pooled RMSE over all repeats, one entry per fit.
    pub rmse: Vec<f64>,
    /// Per-repeat RMSE, indexed [fit][repeat].
    pub repeat_rmse: Vec<Vec<f64>>,
    /// 100 (RMSE_baseline - RMSE_candidate) / RMSE_baseline on pooled RMSE.
    pub reduction_percent: f64,
    /// Median over repeats of the per-repeat reduction.
    pub median_reduction_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    /// Names of the fits; the first is the candidate, the second the baseline.
    pub methods: Vec<String>,
    pub repeats: usize,
    pub rows: Vec<GapRow>,
}

fn reduction(candidate: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        if candidate == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        100.0 * (baseline - candidate) / baseline
    }
}

/// Removes observed values following each plan, predicts them with both
/// fits (held fixed), and tabulates RMSE and the percentage reduction of
/// the candidate relative to the baseline. Repeats run in parallel with
/// per-repeat seeds.
pub fn gap_experiment(
    series: &ObservedSeries,
    exog: Option<&ExogenousSeries>,
    fits: [(&str, &ModelFit); 2],
    plans: &[GapPlan],
    repeats: usize,
    seed: u64,
) -> Result<GapTable> {
    if repeats == 0 {
        return Err(Error::Config("gap experiment needs at least one repeat".into()));
    }
    let mut rows = Vec::with_capacity(plans.len());
    for (pi, &plan) in plans.iter().enumerate() {
        let per_repeat: Vec<Result<[(f64, usize); 2]>> = (0..repeats)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::simstudy::derive_seed(seed, &[pi as u64, rep as u64]));
                let gaps = carve_gaps(series.mask(), plan, &mut rng)?;
                let mut mask = series.mask().to_vec();
                for &t in &gaps {
                    mask[t] = false;
                }
                let carved = ObservedSeries::new(series.raw_values().to_vec(), mask)?;
                let truth: Vec<f64> = gaps.iter().map(|&t| series.raw_values()[t]).collect();
                let mut out = [(0.0, gaps.len()); 2];
                for (k, (_, fit)) in fits.iter().enumerate() {
                    let pred = predict_values(fit, &carved, exog, &gaps)?;
                    out[k].0 = pred.iter().zip(&truth).map(|(p, x)| (p - x).powi(2)).sum();
                }
                Ok(out)
            })
            .collect();
        let per_repeat: Vec<[(f64, usize); 2]> = per_repeat.into_iter().collect::<Result<_>>()?;
        let mut rmse = Vec::with_capacity(2);
        let mut repeat_rmse = Vec::with_capacity(2);
        for k in 0..2 {
            let sse: f64 = per_repeat.iter().map(|r| r[k].0).sum();
            let count: usize = per_repeat.iter().map(|r| r[k].1).sum();
            rmse.push((sse / count as f64).sqrt());
            repeat_rmse.push(per_repeat.iter().map(|r| (r[k].0 / r[k].1 as f64).sqrt()).collect::<Vec<f64>>());
        }
        let reductions: Vec<f64> =
            repeat_rmse[0].iter().zip(&repeat_rmse[1]).map(|(c, b)| reduction(*c, *b)).collect();
        rows.push(GapRow {
            plan,
            label: plan.label(),
            reduction_percent: reduction(rmse[0], rmse[1]),
            median_reduction_percent: crate::simstudy::median(&reductions),
            rmse,
            repeat_rmse,
        });
    }
    Ok(GapTable { methods: fits.iter().map(|(name, _)| name.to_string()).collect(), repeats, rows })
}
