//! Simulation study: stationary Gaussian draws, the three data-generating
//! scenarios, MCAR masks, the metric suite and a replicate runner.

use std::collections::BTreeMap;
use std::time::Instant;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aep::{simulate_aep_errors, transformed_acv, AepParams};
use crate::covariance::{CovarianceFamily, CovarianceSpec};
use crate::design::{irf_weights, DesignComponent, DesignSpec, ExogenousSeries, IrfParams};
use crate::error::{Error, Result};
use crate::estimate::{fit, Method, ModelFit, ModelSpec};
use crate::linalg::{toeplitz_submatrix, Cholesky};
use crate::optim::OptimConfig;
use crate::predict::predict_values;
use crate::spectral::{forward_plan, ObservedSeries};

/// Embedding spectra below -tol * max eigenvalue are treated as a failed
/// embedding rather than rounding.
const EMBEDDING_TOLERANCE: f64 = 1e-9;

/// Stationary zero-mean Gaussian draw at times 1..n with autocovariance
/// `cov.acv_sequence(n)`, by circulant embedding. The embedding length is
/// doubled up to 8n; if its spectrum is still negative the draw falls back
/// to a dense Cholesky factor.
pub fn simulate_gaussian_process(cov: &CovarianceSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    cov.validate()?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n == 1 {
        let z: f64 = rng.sample(StandardNormal);
        return Ok(vec![z * cov.total_variance().sqrt()]);
    }
    let mut m = (2 * (n - 1)).next_power_of_two();
    while m <= 8 * n {
        if let Some(eig) = embedding_spectrum(cov, m)? {
            let mut buf: Vec<Complex64> = eig
                .iter()
                .map(|&l| {
                    let s = (l / m as f64).sqrt();
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    Complex64::new(s * a, s * b)
                })
                .collect();
            forward_plan(m).process(&mut buf);
            return Ok(buf[..n].iter().map(|z| z.re).collect());
        }
        m *= 2;
    }
    log::info!("circulant embedding failed up to length {}; using a dense factor", 8 * n);
    let acv = cov.acv_sequence(n)?;
    let idx: Vec<usize> = (0..n).collect();
    let c = toeplitz_submatrix(&acv, &idx);
    let chol = Cholesky::with_jitter(c.as_ref(), acv[0], 3).ok_or_else(|| Error::NotPositiveDefinite { params: cov.values() })?;
    let z = Mat::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = chol.factor() * z;
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

/// Eigenvalues of the circulant embedding of length m, clipped at zero, or
/// `None` if they are materially negative.
fn embedding_spectrum(cov: &CovarianceSpec, m: usize) -> Result<Option<Vec<f64>>> {
    let half = m / 2;
    let acv = cov.acv_sequence(half + 1)?;
    let row: Vec<f64> = (0..m).map(|k| acv[if k <= half { k } else { m - k }]).collect();
    let eig: Vec<f64> = crate::spectral::dft_real(&row).iter().map(|z| z.re).collect();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    if eig.iter().any(|&l| l < -EMBEDDING_TOLERANCE * max) {
        return Ok(None);
    }
    Ok(Some(eig.into_iter().map(|l| l.max(0.0)).collect()))
}

/// exp of a Gaussian draw with autocovariance `alpha_ext`, covering n
/// response times plus the `n_irf - 1` values the IRF looks back over.
pub fn gen_external_variable(alpha_ext: &CovarianceSpec, n: usize, n_irf: usize, seed: u64) -> Result<ExogenousSeries> {
    if n_irf == 0 {
        return Err(Error::domain("IRF window must be >= 1"));
    }
    let g = simulate_gaussian_process(alpha_ext, n + n_irf - 1, seed)?;
    ExogenousSeries::new(g.into_iter().map(f64::exp).collect(), n_irf - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    StandardMixed,
    FullyRandom,
    AepError,
}

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::StandardMixed => "standard_mixed",
            ScenarioKind::FullyRandom => "fully_random",
            ScenarioKind::AepError => "aep_error",
        }
    }

    /// Design used both to generate and to fit.
    pub fn design(self, n_irf: usize) -> DesignSpec {
        use DesignComponent::*;
        let components = match self {
            ScenarioKind::AepError => {
                vec![Intercept, LinearTrend, SeasonalPair { period: 12.0 }, IrfCovariate { window: n_irf }]
            }
            _ => vec![
                LinearTrend,
                SeasonalPair { period: 12.0 },
                CyclicSplines { count: 4 },
                IrfCovariate { window: n_irf },
            ],
        };
        DesignSpec { components }
    }

    /// Estimators compared in this scenario.
    pub fn methods(self) -> Vec<Method> {
        match self {
            ScenarioKind::AepError => vec![Method::Whittle, Method::Exact, Method::TwoStage, Method::AepExact],
            _ => vec![Method::Whittle, Method::Exact, Method::TwoStage],
        }
    }
}

/// True parameters of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTruth {
    pub beta: Vec<f64>,
    pub gamma: IrfParams,
    pub alpha: CovarianceSpec,
    /// AEP marginal of the errors (AepError only).
    pub theta: Option<AepParams>,
    pub alpha_ext: CovarianceSpec,
    pub n_irf: usize,
}

impl ScenarioTruth {
    pub fn default_for(kind: ScenarioKind) -> Self {
        let standard = Self {
            beta: vec![3.0, 0.15, -0.6, 18.0, 10.0, 18.0, 20.0, 1.5],
            gamma: IrfParams { shape: 8.0, rate: 0.2 },
            alpha: CovarianceSpec::matern(0.05, 2.0, 25.0, 1.5),
            theta: None,
            alpha_ext: CovarianceSpec::matern(0.1, 1.0, 15.0, 0.5),
            n_irf: 120,
        };
        match kind {
            ScenarioKind::StandardMixed => standard,
            ScenarioKind::FullyRandom => Self { beta: vec![0.0; 8], ..standard },
            ScenarioKind::AepError => Self {
                beta: vec![16.0, 3.0, 0.15, -0.6, 1.5],
                alpha: CovarianceSpec::matern(0.1, 0.9, 25.0, 1.5),
                theta: Some(AepParams { mu: 0.0, sigma: 1.4, varsigma: 0.4, p1: 1.0, p2: 1.9 }),
                ..standard
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub n: usize,
    #[serde(default = "default_missing_fraction")]
    pub missing_fraction: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to [`ScenarioTruth::default_for`].
    #[serde(default)]
    pub truth: Option<ScenarioTruth>,
}

fn default_missing_fraction() -> f64 {
    0.25
}

fn default_replicates() -> usize {
    100
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind, n: usize) -> Self {
        Self {
            scenario,
            n,
            missing_fraction: default_missing_fraction(),
            replicates: default_replicates(),
            seed: 0,
            truth: None,
        }
    }

    pub fn truth(&self) -> ScenarioTruth {
        self.truth.clone().unwrap_or_else(|| ScenarioTruth::default_for(self.scenario))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(Error::Config(format!("missing fraction must lie in [0, 1), got {}", self.missing_fraction)));
        }
        if self.n < 16 {
            return Err(Error::Config(format!("scenario length must be >= 16, got {}", self.n)));
        }
        let truth = self.truth();
        let design = self.scenario.design(truth.n_irf);
        design.validate()?;
        if truth.beta.len() != design.num_columns() {
            return Err(Error::Config(format!(
                "{} true coefficients for a design with {} columns",
                truth.beta.len(),
                design.num_columns()
            )));
        }
        truth.alpha.validate()?;
        truth.alpha_ext.validate()?;
        truth.gamma.validate()?;
        if let Some(t) = truth.theta {
            t.validate()?;
        }
        Ok(())
    }
}

/// One generated data set.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Masked observations.
    pub series: ObservedSeries,
    /// Complete simulated values (fixed term plus error).
    pub full: Vec<f64>,
    pub errors: Vec<f64>,
    pub fixed_term: Vec<f64>,
    pub exog: ExogenousSeries,
    pub design: DesignSpec,
    pub truth: ScenarioTruth,
    /// Number of times the mask was redrawn to reach the minimum count.
    pub mask_redraws: usize,
}

impl Scenario {
    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.series.len()).filter(|&t| !self.series.mask()[t]).collect()
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a seed and stream labels.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |h, &p| mix(h ^ mix(p)))
}

fn scenario_code(kind: ScenarioKind) -> u64 {
    kind as u64 + 1
}

fn method_code(method: Method) -> u64 {
    match method {
        Method::Whittle => 1,
        Method::Exact => 2,
        Method::TwoStage => 3,
        Method::AepExact => 4,
    }
}

const STREAM_EXOG: u64 = 101;
const STREAM_ERROR: u64 = 102;
const STREAM_MASK: u64 = 103;
const STREAM_FIT: u64 = 104;

/// Generates replicate `replicate` of `config`. Within a replicate index,
/// StandardMixed and FullyRandom share the exogenous draw.
pub fn gen_scenario(config: &ScenarioConfig, replicate: usize) -> Result<Scenario> {
    config.validate()?;
    let truth = config.truth();
    let n = config.n;
    let design = config.scenario.design(truth.n_irf);
    let rep = replicate as u64;
    let exog_group = match config.scenario {
        ScenarioKind::AepError => scenario_code(ScenarioKind::AepError),
        _ => 0,
    };
    let exog = gen_external_variable(
        &truth.alpha_ext,
        n,
        truth.n_irf,
        derive_seed(config.seed, &[STREAM_EXOG, exog_group, n as u64, rep]),
    )?;
    let m = design.build(Some(&exog), Some(truth.gamma), n)?;
    let fixed_term = m.mul_vec(&truth.beta)?;
    let error_seed = derive_seed(config.seed, &[STREAM_ERROR, scenario_code(config.scenario), n as u64, rep]);
    let errors = match (config.scenario, truth.theta) {
        (ScenarioKind::AepError, Some(theta)) => simulate_aep_errors(&truth.alpha, &theta, n, error_seed)?,
        (ScenarioKind::AepError, None) => return Err(Error::Config("the AEP scenario needs theta".into())),
        _ => simulate_gaussian_process(&truth.alpha, n, error_seed)?,
    };
    let full: Vec<f64> = fixed_term.iter().zip(&errors).map(|(f, e)| f + e).collect();

    let min_observed = (2 * design.num_columns()).max(10);
    if min_observed > n {
        return Err(Error::Length(format!("{n} time steps cannot hold {min_observed} observations")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[STREAM_MASK, scenario_code(config.scenario), n as u64, rep]));
    let mut mask_redraws = 0;
    let mask = loop {
        let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= config.missing_fraction).collect();
        if mask.iter().filter(|&&g| g).count() >= min_observed {
            break mask;
        }
        mask_redraws += 1;
        if mask_redraws > 10_000 {
            return Err(Error::Config("could not draw a mask with enough observations".into()));
        }
    };
    if mask_redraws > 0 {
        log::info!("replicate {replicate}: mask redrawn {mask_redraws} times");
    }
    let series = ObservedSeries::new(full.clone(), mask)?;
    Ok(Scenario { kind: config.scenario, series, full, errors, fixed_term, exog, design, truth, mask_redraws })
}

/// The metric suite; applicability per scenario follows the study design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// sum |(alpha_hat - alpha) / alpha|
    AlphaRelative,
    /// sum_{tau < n} |c_hat(tau) - c(tau)|
    AcvDivergence,
    /// sum |(beta_hat - beta) / beta|
    BetaRelative,
    /// sum |beta_hat - beta|
    BetaAbsolute,
    /// sum_{tau < n_irf} |IRF_hat(tau) - IRF(tau)|
    IrfDivergence,
    /// Root mean squared error of the predicted missing values.
    Rmse,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::AlphaRelative,
        Metric::AcvDivergence,
        Metric::BetaRelative,
        Metric::BetaAbsolute,
        Metric::IrfDivergence,
        Metric::Rmse,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::AlphaRelative => "alpha_relative_l1",
            Metric::AcvDivergence => "acv_divergence",
            Metric::BetaRelative => "beta_relative_l1",
            Metric::BetaAbsolute => "beta_absolute_l1",
            Metric::IrfDivergence => "irf_divergence",
            Metric::Rmse => "rmse_missing",
        }
    }

    pub fn applies_to(self, kind: ScenarioKind) -> bool {
        use ScenarioKind::*;
        match self {
            Metric::AlphaRelative => kind != AepError,
            Metric::AcvDivergence => kind == AepError,
            Metric::BetaRelative => kind != FullyRandom,
            Metric::BetaAbsolute => kind == FullyRandom,
            Metric::IrfDivergence => kind != FullyRandom,
            Metric::Rmse => true,
        }
    }

    pub fn applicable(kind: ScenarioKind) -> Vec<Metric> {
        Self::ALL.iter().copied().filter(|m| m.applies_to(kind)).collect()
    }
}

/// Truth and predictions needed to score a fit.
#[derive(Debug, Clone, Copy)]
pub struct MetricInputs<'a> {
    pub kind: ScenarioKind,
    pub truth: &'a ScenarioTruth,
    /// Series length; the ACV divergence sums lags 0..n-1.
    pub n: usize,
    /// True and predicted values at the missing times.
    pub missing_true: &'a [f64],
    pub missing_pred: &'a [f64],
}

/// One metric, refused outside the scenarios where it is defined.
pub fn metric(which: Metric, fit: &ModelFit, inputs: &MetricInputs<'_>) -> Result<f64> {
    let truth = inputs.truth;
    if !which.applies_to(inputs.kind) {
        return Err(Error::MetricNotApplicable(format!(
            "{} is not part of the metric set for the {} scenario (see the metric applicability table)",
            which.label(),
            inputs.kind.label()
        )));
    }
    match which {
        Metric::AlphaRelative => {
            let params = truth.alpha.family.params();
            let mut total = 0.0;
            for &p in params {
                let t = truth.alpha.get(p);
                if t == 0.0 {
                    return Err(Error::MetricNotApplicable(format!("true {p:?} is zero; relative error undefined")));
                }
                total += ((fit.alpha.get(p) - t) / t).abs();
            }
            Ok(total)
        }
        Metric::AcvDivergence => {
            let theta = truth.theta.ok_or_else(|| Error::Config("ACV divergence needs the true AEP marginal".into()))?;
            let reference = transformed_acv(&truth.alpha, &theta, inputs.n)?;
            let fitted = match fit.theta {
                Some(t) => transformed_acv(&fit.alpha, &t, inputs.n)?,
                None => fit.alpha.acv_sequence(inputs.n)?,
            };
            Ok(reference.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).sum())
        }
        Metric::BetaRelative | Metric::BetaAbsolute => {
            if fit.beta.len() != truth.beta.len() {
                return Err(Error::Dimension(format!(
                    "fit has {} coefficients, truth has {}",
                    fit.beta.len(),
                    truth.beta.len()
                )));
            }
            let relative = which == Metric::BetaRelative;
            let mut total = 0.0;
            for (b, t) in fit.beta.iter().zip(&truth.beta) {
                if relative {
                    if *t == 0.0 {
                        return Err(Error::MetricNotApplicable(
                            "a true coefficient is zero; relative error undefined".into(),
                        ));
                    }
                    total += ((b - t) / t).abs();
                } else {
                    total += (b - t).abs();
                }
            }
            Ok(total)
        }
        Metric::IrfDivergence => {
            let g = fit.gamma.ok_or_else(|| Error::Config("fit has no IRF parameters".into()))?;
            let a = irf_weights(g, truth.n_irf)?;
            let b = irf_weights(truth.gamma, truth.n_irf)?;
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum())
        }
        Metric::Rmse => {
            if inputs.missing_true.len() != inputs.missing_pred.len() {
                return Err(Error::Dimension("predictions do not match the missing values".into()));
            }
            if inputs.missing_true.is_empty() {
                return Ok(0.0);
            }
            let sse: f64 = inputs.missing_true.iter().zip(inputs.missing_pred).map(|(a, b)| (a - b).powi(2)).sum();
            Ok((sse / inputs.missing_true.len() as f64).sqrt())
        }
    }
}

/// All metrics defined for the scenario.
pub fn metrics(fit: &ModelFit, inputs: &MetricInputs<'_>) -> Result<BTreeMap<Metric, f64>> {
    Metric::applicable(inputs.kind).into_iter().map(|m| Ok((m, metric(m, fit, inputs)?))).collect()
}

/// Fitting specification used for a scenario and method.
pub fn scenario_model(kind: ScenarioKind, n_irf: usize, method: Method) -> ModelSpec {
    ModelSpec::new(kind.design(n_irf), CovarianceFamily::Matern, method)
}

/// Batch of scenarios, sizes and methods to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub scenarios: Vec<ScenarioKind>,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub missing_fraction: f64,
    pub seed: u64,
    /// Restrict the methods; empty means every method of the scenario.
    pub methods: Vec<Method>,
    pub optim: OptimConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![ScenarioKind::StandardMixed, ScenarioKind::FullyRandom, ScenarioKind::AepError],
            sizes: vec![256, 512, 1024, 2048],
            replicates: default_replicates(),
            missing_fraction: default_missing_fraction(),
            seed: 0,
            methods: Vec::new(),
            optim: OptimConfig::default(),
        }
    }
}

/// One metric value of one replicate, in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub method: Method,
    pub replicate: usize,
    pub metric: Metric,
    pub value: f64,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFailure {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub method: Option<Method>,
    pub replicate: usize,
    pub error: String,
}

/// Boxplot data: whiskers at the minimum and the 90th percentile, the top
/// decile as points. Points above `cutoff` (q3 + 5 IQR) are only counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub method: Method,
    pub metric: Metric,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub p90: f64,
    pub upper_points: Vec<f64>,
    pub cutoff: f64,
    pub cutoff_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub rows: Vec<StudyRow>,
    pub failures: Vec<StudyFailure>,
    pub summary: Vec<BoxplotSummary>,
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

pub fn boxplot(values: &[f64]) -> (f64, f64, f64, f64, f64, Vec<f64>, f64, usize) {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let med = quantile_sorted(&v, 0.5);
    let q3 = quantile_sorted(&v, 0.75);
    let p90 = quantile_sorted(&v, 0.9);
    let cutoff = q3 + 5.0 * (q3 - q1);
    let upper: Vec<f64> = v.iter().copied().filter(|&x| x > p90 && x <= cutoff).collect();
    let cut = v.iter().filter(|&&x| x > cutoff).count();
    (v.first().copied().unwrap_or(f64::NAN), q1, med, q3, p90, upper, cutoff, cut)
}

/// Generates, fits and scores one replicate for every method.
pub fn run_replicate(
    config: &ScenarioConfig,
    replicate: usize,
    methods: &[Method],
    optim: &OptimConfig,
) -> Result<(Vec<StudyRow>, Vec<StudyFailure>)> {
    let scenario = gen_scenario(config, replicate)?;
    let missing = scenario.missing_indices();
    let missing_true: Vec<f64> = missing.iter().map(|&t| scenario.full[t]).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &method in methods {
        let started = Instant::now();
        let spec = scenario_model(config.scenario, scenario.truth.n_irf, method);
        let cfg = OptimConfig {
            seed: derive_seed(
                config.seed,
                &[STREAM_FIT, scenario_code(config.scenario), config.n as u64, method_code(method), replicate as u64],
            ),
            ..optim.clone()
        };
        let outcome = fit(&scenario.series, Some(&scenario.exog), &spec, &cfg).and_then(|f| {
            let pred = predict_values(&f, &scenario.series, Some(&scenario.exog), &missing)?;
            let inputs = MetricInputs {
                kind: config.scenario,
                truth: &scenario.truth,
                n: config.n,
                missing_true: &missing_true,
                missing_pred: &pred,
            };
            Ok((metrics(&f, &inputs)?, f.converged()))
        });
        let seconds = started.elapsed().as_secs_f64();
        match outcome {
            Ok((values, converged)) => {
                rows.extend(values.into_iter().map(|(metric, value)| StudyRow {
                    scenario: config.scenario,
                    n: config.n,
                    method,
                    replicate,
                    metric,
                    value,
                    converged,
                    seconds,
                }));
            }
            Err(e) => {
                log::warn!("{} n={} {} replicate {replicate}: {e}", config.scenario.label(), config.n, method.label());
                failures.push(StudyFailure {
                    scenario: config.scenario,
                    n: config.n,
                    method: Some(method),
                    replicate,
                    error: e.to_string(),
                })
            }
        }
    }
    Ok((rows, failures))
}

/// Runs every (scenario, n, method, replicate). Replicates run in parallel
/// on the current rayon pool; each derives its own seeds, so the results do
/// not depend on scheduling. Failures are recorded and excluded.
pub fn run_study(config: &StudyConfig) -> Result<StudyResults> {
    if config.replicates == 0 {
        return Err(Error::Config("replicates must be >= 1".into()));
    }
    let mut jobs = Vec::new();
    for &scenario in &config.scenarios {
        for &n in &config.sizes {
            let sc = ScenarioConfig {
                scenario,
                n,
                missing_fraction: config.missing_fraction,
                replicates: config.replicates,
                seed: config.seed,
                truth: None,
            };
            sc.validate()?;
            let methods: Vec<Method> = scenario
                .methods()
                .into_iter()
                .filter(|m| config.methods.is_empty() || config.methods.contains(m))
                .collect();
            for r in 0..config.replicates {
                jobs.push((sc.clone(), r, methods.clone()));
            }
        }
    }
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|(sc, r, methods)| (sc.scenario, sc.n, *r, run_replicate(sc, *r, methods, &config.optim)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (scenario, n, replicate, outcome) in outcomes {
        match outcome {
            Ok((r, f)) => {
                rows.extend(r);
                failures.extend(f);
            }
            Err(e) => failures.push(StudyFailure { scenario, n, method: None, replicate, error: e.to_string() }),
        }
    }
    if !failures.is_empty() {
        log::warn!("{} replicate fits failed and are excluded", failures.len());
    }
    let summary = summarise(&rows);
    Ok(StudyResults { rows, failures, summary })
}

/// Boxplot summaries per (scenario, n, method, metric).
pub fn summarise(rows: &[StudyRow]) -> Vec<BoxplotSummary> {
    let mut groups: BTreeMap<(ScenarioKind, usize, u64, Metric), (Method, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scenario, r.n, method_code(r.method), r.metric))
            .or_insert_with(|| (r.method, Vec::new()))
            .1
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((scenario, n, _, metric), (method, values))| {
            let (min, q1, median, q3, p90, upper_points, cutoff, cutoff_count) = boxplot(&values);
            BoxplotSummary {
                scenario,
                n,
                method,
                metric,
                count: values.len(),
                min,
                q1,
                median,
                q3,
                p90,
                upper_points,
                cutoff,
                cutoff_count,
            }
        })
        .collect()
}

impl StudyResults {
    /// Long-format CSV, one row per replicate x method x metric.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "n", "method", "replicate", "metric", "value", "converged", "seconds"])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.label().to_string(),
                r.n.to_string(),
                r.method.label().to_string(),
                r.replicate.to_string(),
                r.metric.label().to_string(),
                format!("{:e}", r.value),
                r.converged.to_string(),
                format!("{:.6}", r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Values of one metric for one scenario, size and method, by replicate.
    pub fn values(&self, scenario: ScenarioKind, n: usize, method: Method, metric: Metric) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.scenario == scenario && r.n == n && r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }
}
