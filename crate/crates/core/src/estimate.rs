//! Estimators for the mixed model x = M_gamma beta + eps: the debiased,
//! modulated Whittle likelihood, exact Gaussian likelihood with profiled
//! beta, two-stage least squares plus Whittle, and exact likelihood under
//! AEP-marginal errors with a Gaussian copula.

use std::collections::BTreeMap;

use faer::Mat;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aep::{aep_nll, fit_aep_marginal, AepParams};
use crate::covariance::{CovParam, CovarianceFamily, CovarianceSpec};
use crate::design::{irf_column, DesignComponent, DesignMatrix, DesignSpec, ExogenousSeries, IrfParams};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, toeplitz_submatrix, Cholesky};
use crate::optim::{minimize, OptimConfig, OptimReport};
use crate::spectral::{
    clip_expected_periodogram, dft_real, empirical_acv, expected_periodogram, mask_pair_counts, modulate_with_counts,
    modulated_residuals, ObservedSeries, DEFAULT_SPECTRAL_FLOOR,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Joint debiased Whittle over (alpha, beta, gamma).
    Whittle,
    /// Exact Gaussian likelihood, beta profiled.
    Exact,
    /// Least squares over (beta, gamma), then Whittle over alpha.
    TwoStage,
    /// Exact likelihood with AEP marginals and a Gaussian copula.
    AepExact,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Whittle => "whittle",
            Method::Exact => "exact",
            Method::TwoStage => "two_stage",
            Method::AepExact => "aep_exact",
        }
    }
}

/// Bijection between an optimiser coordinate and a constrained parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// (0, inf)
    Log,
    /// (0, 1)
    Logit,
}

impl Transform {
    /// Domain value to optimiser coordinate. A zero on a log scale maps to
    /// -inf, which the optimiser never visits.
    pub fn to_raw(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Logit => (v / (1.0 - v)).ln(),
        }
    }

    pub fn from_raw(self, r: f64) -> f64 {
        match self {
            Transform::Identity => r,
            Transform::Log => r.exp(),
            Transform::Logit => {
                if r >= 0.0 {
                    1.0 / (1.0 + (-r).exp())
                } else {
                    let e = r.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

pub fn transform_parameters(values: &[f64], transforms: &[Transform]) -> Vec<f64> {
    values.iter().zip(transforms).map(|(v, t)| t.to_raw(*v)).collect()
}

pub fn untransform_parameters(raw: &[f64], transforms: &[Transform]) -> Vec<f64> {
    raw.iter().zip(transforms).map(|(r, t)| t.from_raw(*r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhittleOptions {
    /// Profile beta by frequency-domain generalised least squares. The
    /// objective is quadratic in beta, so this gives the same optimum as
    /// searching beta numerically; `false` searches jointly.
    pub profile_beta: bool,
    /// Keep the zero frequency in the likelihood sum.
    pub include_zero_frequency: bool,
    /// Expected-periodogram floor relative to c~(0).
    pub floor: f64,
}

impl Default for WhittleOptions {
    fn default() -> Self {
        Self { profile_beta: true, include_zero_frequency: true, floor: DEFAULT_SPECTRAL_FLOOR }
    }
}

fn default_period() -> f64 {
    12.0
}

fn default_initial_irf() -> IrfParams {
    IrfParams { shape: 1.0, rate: 0.1 }
}

/// What to fit: fixed-term design, covariance family with optional fixed
/// parameters, and the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub design: DesignSpec,
    pub family: CovarianceFamily,
    /// Covariance parameters held at the given values.
    #[serde(default)]
    pub fixed: BTreeMap<CovParam, f64>,
    /// Period of the Matérn-periodic kernel (never estimated).
    #[serde(default = "default_period")]
    pub period: f64,
    pub method: Method,
    #[serde(default)]
    pub whittle: WhittleOptions,
    /// Starting IRF parameters for the least-squares initialisation.
    #[serde(default = "default_initial_irf")]
    pub initial_irf: IrfParams,
}

/// Intercept, trend and a 12-step seasonal pair; Matérn errors; Whittle.
impl Default for ModelSpec {
    fn default() -> Self {
        let design = DesignSpec {
            components: vec![
                DesignComponent::Intercept,
                DesignComponent::LinearTrend,
                DesignComponent::SeasonalPair { period: 12.0 },
            ],
        };
        Self::new(design, CovarianceFamily::Matern, Method::Whittle)
    }
}

impl ModelSpec {
    pub fn new(design: DesignSpec, family: CovarianceFamily, method: Method) -> Self {
        Self {
            design,
            family,
            fixed: BTreeMap::new(),
            period: default_period(),
            method,
            whittle: WhittleOptions::default(),
            initial_irf: default_initial_irf(),
        }
    }

    pub fn with_fixed(mut self, param: CovParam, value: f64) -> Self {
        self.fixed.insert(param, value);
        self
    }

    /// Covariance parameters searched by the optimiser, in canonical order.
    pub fn free_covariance(&self) -> Vec<CovParam> {
        self.family
            .params()
            .iter()
            .copied()
            .filter(|p| !self.fixed.contains_key(p))
            .filter(|p| !(self.method == Method::AepExact && *p == CovParam::Sill))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        for p in self.fixed.keys() {
            if !self.family.params().contains(p) {
                return Err(Error::Config(format!("fixed parameter {p:?} does not belong to {:?}", self.family)));
            }
        }
        if self.method == Method::AepExact {
            if self.fixed.contains_key(&CovParam::Sill) {
                return Err(Error::Config("AEP models tie the sill to 1 - nugget; it cannot be fixed".into()));
            }
            if let Some(&c0) = self.fixed.get(&CovParam::Nugget) {
                if !(0.0..1.0).contains(&c0) {
                    return Err(Error::Config("AEP models need a fixed nugget in [0, 1)".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub method: Method,
    pub design: DesignSpec,
    /// Number of time steps the model was fitted on (reference for trend and spline span).
    pub n: usize,
    pub n_observed: usize,
    pub alpha: CovarianceSpec,
    pub beta: Vec<f64>,
    pub beta_labels: Vec<String>,
    pub gamma: Option<IrfParams>,
    pub theta: Option<AepParams>,
    /// Attained negative (quasi-)log-likelihood of the method.
    pub objective: f64,
    pub free_parameters: Vec<String>,
    pub report: OptimReport,
    /// Least-squares stage used for initialisation (and as stage 1 of TwoStage).
    pub stage1_report: Option<OptimReport>,
    /// Residuals whose AEP probability hit the clamp at the optimum.
    pub clamped: usize,
}

impl ModelFit {
    pub fn converged(&self) -> bool {
        self.report.converged
    }

    /// Fixed term M_gamma beta for times 1..rows, with trend and splines
    /// referenced to the fitted length.
    pub fn fixed_term(&self, exog: Option<&ExogenousSeries>, rows: usize) -> Result<Vec<f64>> {
        let m = self.design.build_extended(exog, self.gamma, self.n, rows)?;
        m.mul_vec(&self.beta)
    }

    /// Design matrix at the fitted gamma over times 1..rows.
    pub fn design_matrix(&self, exog: Option<&ExogenousSeries>, rows: usize) -> Result<DesignMatrix> {
        self.design.build_extended(exog, self.gamma, self.n, rows)
    }
}

/// Negative debiased Whittle log-likelihood
/// sum_j [log f~(w_j) + I~_j(beta) / f~(w_j)] over all Fourier frequencies.
/// Invalid parameters give +inf; see [`try_whittle_nll`] for the reason.
pub fn whittle_nll(series: &ObservedSeries, design: &DesignMatrix, alpha: &CovarianceSpec, beta: &[f64]) -> f64 {
    try_whittle_nll(series, design, alpha, beta, &WhittleOptions::default()).unwrap_or(f64::INFINITY)
}

pub fn try_whittle_nll(
    series: &ObservedSeries,
    design: &DesignMatrix,
    alpha: &CovarianceSpec,
    beta: &[f64],
    options: &WhittleOptions,
) -> Result<f64> {
    let resid = modulated_residuals(series, design, beta)?;
    let n = series.len() as f64;
    let periodogram: Vec<f64> = dft_real(&resid).iter().map(|z| z.norm_sqr() / n).collect();
    let counts = mask_pair_counts(series.mask());
    let f = whittle_spectrum(alpha, &counts, options.floor)?;
    Ok(whittle_sum(&f, &periodogram, options.include_zero_frequency))
}

/// Clipped expected periodogram f~ for the mask summarised by `counts`.
fn whittle_spectrum(alpha: &CovarianceSpec, counts: &[f64], floor: f64) -> Result<Vec<f64>> {
    let acv = alpha.acv_sequence(counts.len())?;
    let cbar = modulate_with_counts(&acv, counts);
    let mut f = expected_periodogram(&cbar)?;
    if !(cbar[0] > 0.0) {
        return Err(Error::domain("modulated variance is zero"));
    }
    clip_expected_periodogram(&mut f, cbar[0], floor);
    Ok(f)
}

fn whittle_sum(f: &[f64], periodogram: &[f64], include_zero: bool) -> f64 {
    let start = if include_zero { 0 } else { 1 };
    f[start..].iter().zip(&periodogram[start..]).map(|(f, i)| f.ln() + i / f).sum()
}

/// Negative exact Gaussian log-likelihood over the observed times
/// (rows and columns of unobserved times deleted), including the
/// (n_obs / 2) log 2 pi constant.
pub fn gaussian_nll(series: &ObservedSeries, design: &DesignMatrix, alpha: &CovarianceSpec, beta: &[f64]) -> Result<f64> {
    let idx = series.observed_indices();
    let resid = modulated_residuals(series, design, beta)?;
    let r: Vec<f64> = idx.iter().map(|&t| resid[t]).collect();
    let acv = alpha.acv_sequence(series.len())?;
    let chol = Cholesky::try_new(toeplitz_submatrix(&acv, &idx).as_ref())
        .ok_or_else(|| Error::NotPositiveDefinite { params: alpha.values() })?;
    let w = chol.whiten(&r);
    Ok(0.5 * chol.log_det() + 0.5 * w.iter().map(|v| v * v).sum::<f64>() + 0.5 * idx.len() as f64 * LN_2PI)
}

/// Generalised least squares beta = (M^T C^{-1} M)^{-1} M^T C^{-1} x, via a
/// Cholesky whitening followed by QR. `m_obs` holds only observed rows.
pub fn profile_beta(m_obs: &DesignMatrix, c_obs: &Mat<f64>, x_obs: &[f64]) -> Result<Vec<f64>> {
    if c_obs.nrows() != x_obs.len() || m_obs.rows() != x_obs.len() {
        return Err(Error::Dimension(format!(
            "covariance {}x{}, design {} rows, data {}",
            c_obs.nrows(),
            c_obs.ncols(),
            m_obs.rows(),
            x_obs.len()
        )));
    }
    let chol = Cholesky::try_new(c_obs.as_ref()).ok_or_else(|| Error::NotPositiveDefinite { params: Vec::new() })?;
    gls(&chol, m_obs, &(0..x_obs.len()).collect::<Vec<_>>(), x_obs).map(|(b, _)| b)
}

/// GLS on the rows `idx` of `design`; returns beta and the whitened residual
/// sum of squares.
fn gls(chol: &Cholesky, design: &DesignMatrix, idx: &[usize], x_obs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut z = Mat::from_fn(idx.len(), design.cols(), |i, j| design.get(idx[i], j));
    chol.solve_lower_in_place(&mut z);
    let w = chol.whiten(x_obs);
    let beta = least_squares(z.as_ref(), &w, &design.labels)?;
    let mut rss = 0.0;
    for i in 0..idx.len() {
        let fitted: f64 = (0..design.cols()).map(|j| z[(i, j)] * beta[j]).sum();
        rss += (w[i] - fitted).powi(2);
    }
    Ok((beta, rss))
}

/// Ordinary least squares over observed rows.
fn ols(design: &DesignMatrix, idx: &[usize], x_obs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let a = Mat::from_fn(idx.len(), design.cols(), |i, j| design.get(idx[i], j));
    let beta = least_squares(a.as_ref(), x_obs, &design.labels)?;
    let rss = (0..idx.len())
        .map(|i| {
            let fitted: f64 = (0..design.cols()).map(|j| a[(i, j)] * beta[j]).sum();
            (x_obs[i] - fitted).powi(2)
        })
        .sum();
    Ok((beta, rss))
}

/// The fixed inputs of one fit: series, design with the IRF column
/// rebuilt per gamma.
struct Problem<'a> {
    series: &'a ObservedSeries,
    base: DesignMatrix,
    irf: Option<(&'a ExogenousSeries, usize, usize)>,
    idx: Vec<usize>,
    x_obs: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(series: &'a ObservedSeries, exog: Option<&'a ExogenousSeries>, spec: &ModelSpec) -> Result<Self> {
        let n = series.len();
        let base = spec.design.build(exog, Some(spec.initial_irf), n)?;
        let irf = match (spec.design.irf_window(), spec.design.irf_column_index()) {
            (Some(window), Some(col)) => Some((exog.expect("checked by build"), window, col)),
            _ => None,
        };
        Ok(Self { series, base, irf, idx: series.observed_indices(), x_obs: series.observed_values() })
    }

    fn n(&self) -> usize {
        self.series.len()
    }

    fn irf_col(&self, gamma: Option<IrfParams>) -> Result<Option<(usize, Vec<f64>)>> {
        match (self.irf, gamma) {
            (Some((exog, window, col)), Some(g)) => Ok(Some((col, irf_column(exog, g, window, self.n())?))),
            (Some(_), None) => Err(Error::Config("IRF parameters missing".into())),
            _ => Ok(None),
        }
    }

    fn design(&self, gamma: Option<IrfParams>) -> Result<DesignMatrix> {
        let mut m = self.base.clone();
        if let Some((col, values)) = self.irf_col(gamma)? {
            m.columns[col] = values;
        }
        Ok(m)
    }
}

/// Frequency-domain pieces of the Whittle objective that do not depend on
/// the parameters.
struct WhittleCache {
    counts: Vec<f64>,
    x_hat: Vec<Complex64>,
    col_hat: Vec<Vec<Complex64>>,
    options: WhittleOptions,
}

impl WhittleCache {
    fn new(problem: &Problem, options: &WhittleOptions) -> Self {
        let mask = problem.series.mask();
        let col_hat = problem
            .base
            .columns
            .iter()
            .map(|c| dft_real(&c.iter().zip(mask).map(|(v, &g)| if g { *v } else { 0.0 }).collect::<Vec<_>>()))
            .collect();
        Self {
            counts: mask_pair_counts(mask),
            x_hat: dft_real(&problem.series.modulated()),
            col_hat,
            options: options.clone(),
        }
    }

    fn positions(&self) -> std::ops::Range<usize> {
        let start = if self.options.include_zero_frequency { 0 } else { 1 };
        start..self.counts.len()
    }

    /// Objective and beta. `beta = None` profiles beta by weighted least
    /// squares on the stacked real and imaginary parts.
    fn eval(
        &self,
        problem: &Problem,
        alpha: &CovarianceSpec,
        gamma: Option<IrfParams>,
        beta: Option<&[f64]>,
    ) -> Result<(f64, Vec<f64>)> {
        let f = whittle_spectrum(alpha, &self.counts, self.options.floor)?;
        let mut irf_hat = None;
        if let Some((col, values)) = problem.irf_col(gamma)? {
            let mask = problem.series.mask();
            let g: Vec<f64> = values.iter().zip(mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
            irf_hat = Some((col, dft_real(&g)));
        }
        let cols: Vec<&[Complex64]> = (0..self.col_hat.len())
            .map(|k| match &irf_hat {
                Some((c, h)) if *c == k => h.as_slice(),
                _ => self.col_hat[k].as_slice(),
            })
            .collect();
        let positions = self.positions();
        let beta = match beta {
            Some(b) => b.to_vec(),
            None => {
                let rows = positions.len();
                let m = cols.len();
                let mut a = Mat::<f64>::zeros(2 * rows, m);
                let mut b = vec![0.0; 2 * rows];
                for (r, j) in positions.clone().enumerate() {
                    let w = 1.0 / f[j].sqrt();
                    for k in 0..m {
                        a[(2 * r, k)] = cols[k][j].re * w;
                        a[(2 * r + 1, k)] = cols[k][j].im * w;
                    }
                    b[2 * r] = self.x_hat[j].re * w;
                    b[2 * r + 1] = self.x_hat[j].im * w;
                }
                least_squares(a.as_ref(), &b, &problem.base.labels)?
            }
        };
        let n = self.counts.len() as f64;
        let mut total = 0.0;
        for j in positions {
            let mut r = self.x_hat[j];
            for (k, c) in cols.iter().enumerate() {
                r -= c[j] * beta[k];
            }
            total += f[j].ln() + r.norm_sqr() / n / f[j];
        }
        Ok((total, beta))
    }
}

/// Exact Gaussian objective with beta profiled (or given).
fn exact_eval(
    problem: &Problem,
    alpha: &CovarianceSpec,
    gamma: Option<IrfParams>,
) -> Result<(f64, Vec<f64>)> {
    let acv = alpha.acv_sequence(problem.n())?;
    let c = toeplitz_submatrix(&acv, &problem.idx);
    let chol = Cholesky::try_new(c.as_ref()).ok_or_else(|| Error::NotPositiveDefinite { params: alpha.values() })?;
    let design = problem.design(gamma)?;
    let (beta, rss) = gls(&chol, &design, &problem.idx, &problem.x_obs)?;
    let nll = 0.5 * chol.log_det() + 0.5 * rss + 0.5 * problem.idx.len() as f64 * LN_2PI;
    Ok((nll, beta))
}

/// Layout of the optimiser vector.
#[derive(Clone)]
struct Layout {
    template: CovarianceSpec,
    cov_free: Vec<CovParam>,
    cov_transforms: Vec<Transform>,
    irf: bool,
    n_beta: usize,
    aep: bool,
    tied_sill: bool,
}

const AEP_TRANSFORMS: [Transform; 4] = [Transform::Log, Transform::Logit, Transform::Log, Transform::Log];

struct Decoded {
    alpha: CovarianceSpec,
    gamma: Option<IrfParams>,
    beta: Option<Vec<f64>>,
    theta: Option<AepParams>,
}

impl Layout {
    fn dim(&self) -> usize {
        self.cov_free.len() + if self.irf { 2 } else { 0 } + self.n_beta + if self.aep { 4 } else { 0 }
    }

    fn decode(&self, x: &[f64]) -> Decoded {
        debug_assert_eq!(x.len(), self.dim());
        let mut alpha = self.template;
        let mut i = 0;
        for (p, t) in self.cov_free.iter().zip(&self.cov_transforms) {
            alpha.set(*p, t.from_raw(x[i]));
            i += 1;
        }
        if self.tied_sill {
            alpha.sill = 1.0 - alpha.nugget;
        }
        let gamma = if self.irf {
            let g = IrfParams { shape: x[i].exp(), rate: x[i + 1].exp() };
            i += 2;
            Some(g)
        } else {
            None
        };
        let beta = if self.n_beta > 0 {
            let b = x[i..i + self.n_beta].to_vec();
            i += self.n_beta;
            Some(b)
        } else {
            None
        };
        let theta = if self.aep {
            let v = untransform_parameters(&x[i..i + 4], &AEP_TRANSFORMS);
            Some(AepParams { mu: 0.0, sigma: v[0], varsigma: v[1], p1: v[2], p2: v[3] })
        } else {
            None
        };
        Decoded { alpha, gamma, beta, theta }
    }

    fn encode(&self, alpha: &CovarianceSpec, gamma: Option<IrfParams>, beta: &[f64], theta: Option<&AepParams>) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .cov_free
            .iter()
            .zip(&self.cov_transforms)
            .map(|(p, t)| t.to_raw(alpha.get(*p)))
            .collect();
        if let (true, Some(g)) = (self.irf, gamma) {
            x.push(g.shape.ln());
            x.push(g.rate.ln());
        }
        if self.n_beta > 0 {
            x.extend_from_slice(beta);
        }
        if let (true, Some(t)) = (self.aep, theta) {
            x.extend(transform_parameters(&[t.sigma, t.varsigma, t.p1, t.p2], &AEP_TRANSFORMS));
        }
        x
    }

    fn names(&self, beta_labels: &[String]) -> Vec<String> {
        let mut names: Vec<String> = self.cov_free.iter().map(|p| format!("{p:?}").to_lowercase()).collect();
        if self.irf {
            names.push("irf_shape".into());
            names.push("irf_rate".into());
        }
        if self.n_beta > 0 {
            names.extend(beta_labels.iter().cloned());
        }
        if self.aep {
            names.extend(["aep_sigma", "aep_varsigma", "aep_p1", "aep_p2"].map(String::from));
        }
        names
    }
}

fn layout(spec: &ModelSpec, irf: bool, n_beta: usize, aep: bool, include_cov: bool) -> Layout {
    let mut template = match spec.family {
        CovarianceFamily::Exponential => CovarianceSpec::exponential(1.0, 1.0, 1.0),
        CovarianceFamily::Matern => CovarianceSpec::matern(1.0, 1.0, 1.0, 1.0),
        CovarianceFamily::MaternPeriodic => CovarianceSpec::matern_periodic(1.0, 1.0, 1.0, 1.0, 1.0, spec.period),
    };
    for (p, v) in &spec.fixed {
        template.set(*p, *v);
    }
    let cov_free = if include_cov { spec.free_covariance() } else { Vec::new() };
    let cov_transforms = cov_free
        .iter()
        .map(|p| if aep && *p == CovParam::Nugget { Transform::Logit } else { Transform::Log })
        .collect();
    Layout { template, cov_free, cov_transforms, irf, n_beta, aep, tied_sill: aep }
}

/// Least-squares stage: gamma by Nelder-Mead with beta profiled by OLS.
struct Stage1 {
    gamma: Option<IrfParams>,
    beta: Vec<f64>,
    report: Option<OptimReport>,
}

/// Number of stage-1 Nelder-Mead starts: the configured one plus the best grid points.
const STAGE1_STARTS: usize = 4;

fn stage1(problem: &Problem, spec: &ModelSpec, config: &OptimConfig) -> Result<Stage1> {
    if problem.irf.is_none() {
        let (beta, _) = ols(&problem.base, &problem.idx, &problem.x_obs)?;
        return Ok(Stage1 { gamma: None, beta, report: None });
    }
    spec.initial_irf.validate()?;
    let rss_at = |g: IrfParams| -> Result<f64> { Ok(ols(&problem.design(Some(g))?, &problem.idx, &problem.x_obs)?.1) };
    // surface rank problems at the starting point rather than as +inf
    rss_at(spec.initial_irf)?;
    // log RSS makes the stopping tolerance relative to the residual scale
    let objective = |x: &[f64]| {
        rss_at(IrfParams { shape: x[0].exp(), rate: x[1].exp() }).map_or(f64::INFINITY, |r| r.max(1e-300).ln())
    };
    // The RSS surface in gamma is multimodal, so the configured start is
    // joined by a coarse grid over shape and mean lag, and the best few
    // starts are refined.
    let window = problem.irf.map_or(1, |(_, w, _)| w) as f64;
    let mut starts = vec![[spec.initial_irf.shape.ln(), spec.initial_irf.rate.ln()]];
    for shape in [0.5f64, 1.0, 2.0, 4.0, 8.0, 16.0] {
        for frac in [0.02, 0.05, 0.1, 0.2, 0.4] {
            let mean_lag = (frac * window).max(0.5);
            starts.push([shape.ln(), (shape / mean_lag).ln()]);
        }
    }
    let mut scored: Vec<(f64, [f64; 2])> = starts.iter().map(|x| (objective(x), *x)).collect();
    // the configured start always runs first; stable sort keeps ties in order
    let first = scored.remove(0);
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.insert(0, first);
    let mut result: Option<crate::optim::OptimResult> = None;
    for (_, x0) in scored.iter().take(STAGE1_STARTS) {
        let r = minimize(objective, x0, &[0.5, 0.5], config);
        if result.as_ref().map_or(true, |best| r.value < best.value - 1e-12) {
            result = Some(r);
        }
    }
    let result = result.expect("at least one start");
    let gamma = IrfParams { shape: result.x[0].exp(), rate: result.x[1].exp() };
    let (beta, _) = ols(&problem.design(Some(gamma))?, &problem.idx, &problem.x_obs)?;
    Ok(Stage1 { gamma: Some(gamma), beta, report: Some(result.report) })
}

/// Method-of-moments covariance start from residuals: 5% / 95% nugget/sill
/// split of the residual variance, length-scale from the lag where the
/// empirical autocovariance halves, smoothness 1.
fn moment_start(resid: &ObservedSeries, spec: &ModelSpec, unit_variance: bool) -> CovarianceSpec {
    let acv = empirical_acv(resid, resid.len() / 2);
    let var = if unit_variance { 1.0 } else { acv[0].max(1e-12) };
    let half = acv.iter().position(|&c| c.is_finite() && c <= 0.5 * acv[0]).unwrap_or(acv.len()).max(1) as f64;
    let length_scale = match spec.family {
        CovarianceFamily::Exponential => half / std::f64::consts::LN_2,
        _ => half,
    }
    .clamp(0.5, resid.len() as f64);
    let mut alpha = match spec.family {
        CovarianceFamily::Exponential => CovarianceSpec::exponential(0.05 * var, 0.95 * var, length_scale),
        CovarianceFamily::Matern => CovarianceSpec::matern(0.05 * var, 0.95 * var, length_scale, 1.0),
        CovarianceFamily::MaternPeriodic => {
            CovarianceSpec::matern_periodic(0.05 * var, 0.95 * var, length_scale, 1.0, 1.0, spec.period)
        }
    };
    for (p, v) in &spec.fixed {
        alpha.set(*p, *v);
    }
    if unit_variance {
        alpha.sill = 1.0 - alpha.nugget;
    }
    alpha
}

fn steps_for(layout: &Layout, beta0: &[f64], resid_sd: f64) -> Vec<f64> {
    let mut steps = vec![0.5; layout.cov_free.len()];
    if layout.irf {
        steps.extend([0.3, 0.3]);
    }
    if layout.n_beta > 0 {
        steps.extend(beta0.iter().map(|b| (0.1 * b.abs()).max(0.1 * resid_sd).max(1e-3)));
    }
    if layout.aep {
        steps.extend([0.2, 0.4, 0.3, 0.3]);
    }
    steps
}

fn cov_ok(alpha: &CovarianceSpec) -> bool {
    alpha.validate().is_ok()
}

fn gamma_ok(gamma: Option<IrfParams>) -> bool {
    gamma.map_or(true, |g| g.validate().is_ok())
}

/// Fits `spec` to `series`, with `exog` required when the design contains an
/// IRF covariate. Non-convergence is reported in the result, not an error.
pub fn fit(
    series: &ObservedSeries,
    exog: Option<&ExogenousSeries>,
    spec: &ModelSpec,
    config: &OptimConfig,
) -> Result<ModelFit> {
    spec.validate()?;
    let problem = Problem::new(series, exog, spec)?;
    let m = problem.base.cols();
    let irf = problem.irf.is_some();
    let free_count = m + spec.free_covariance().len() + if irf { 2 } else { 0 } + if spec.method == Method::AepExact { 4 } else { 0 };
    if problem.idx.len() <= free_count {
        return Err(Error::Length(format!(
            "{} observed values are too few for {free_count} free parameters",
            problem.idx.len()
        )));
    }

    let s1 = stage1(&problem, spec, config)?;
    let design1 = problem.design(s1.gamma)?;
    let resid_values: Vec<f64> = modulated_residuals(series, &design1, &s1.beta)?;
    let resid = series.with_values(resid_values)?;
    let resid_obs = resid.observed_values();
    let resid_sd = (resid_obs.iter().map(|r| r * r).sum::<f64>() / resid_obs.len() as f64).sqrt();

    let labels = problem.base.labels.clone();
    match spec.method {
        Method::Whittle => {
            let cache = WhittleCache::new(&problem, &spec.whittle);
            let joint = !spec.whittle.profile_beta;
            let lay = layout(spec, irf, if joint { m } else { 0 }, false, true);
            let alpha0 = moment_start(&resid, spec, false);
            let x0 = lay.encode(&alpha0, s1.gamma, &s1.beta, None);
            let steps = steps_for(&lay, &s1.beta, resid_sd);
            let objective = |x: &[f64]| {
                let d = lay.decode(x);
                if !cov_ok(&d.alpha) || !gamma_ok(d.gamma) {
                    return f64::INFINITY;
                }
                cache.eval(&problem, &d.alpha, d.gamma, d.beta.as_deref()).map_or(f64::INFINITY, |r| r.0)
            };
            let result = minimize(objective, &x0, &steps, config);
            let d = lay.decode(&result.x);
            let (value, beta) = cache.eval(&problem, &d.alpha, d.gamma, d.beta.as_deref())?;
            Ok(ModelFit {
                method: spec.method,
                design: spec.design.clone(),
                n: series.len(),
                n_observed: problem.idx.len(),
                alpha: d.alpha,
                beta,
                beta_labels: labels.clone(),
                gamma: d.gamma,
                theta: None,
                objective: value,
                free_parameters: lay.names(&labels),
                report: result.report,
                stage1_report: s1.report,
                clamped: 0,
            })
        }
        Method::Exact => {
            let lay = layout(spec, irf, 0, false, true);
            let alpha0 = moment_start(&resid, spec, false);
            let x0 = lay.encode(&alpha0, s1.gamma, &[], None);
            let steps = steps_for(&lay, &[], resid_sd);
            let objective = |x: &[f64]| {
                let d = lay.decode(x);
                if !cov_ok(&d.alpha) || !gamma_ok(d.gamma) {
                    return f64::INFINITY;
                }
                exact_eval(&problem, &d.alpha, d.gamma).map_or(f64::INFINITY, |r| r.0)
            };
            let result = minimize(objective, &x0, &steps, config);
            let d = lay.decode(&result.x);
            let (value, beta) = exact_eval(&problem, &d.alpha, d.gamma)?;
            Ok(ModelFit {
                method: spec.method,
                design: spec.design.clone(),
                n: series.len(),
                n_observed: problem.idx.len(),
                alpha: d.alpha,
                beta,
                beta_labels: labels.clone(),
                gamma: d.gamma,
                theta: None,
                objective: value,
                free_parameters: lay.names(&labels),
                report: result.report,
                stage1_report: s1.report,
                clamped: 0,
            })
        }
        Method::TwoStage => {
            let cache = WhittleCache::new(&problem, &spec.whittle);
            let lay = layout(spec, false, 0, false, true);
            let alpha0 = moment_start(&resid, spec, false);
            let x0 = lay.encode(&alpha0, None, &[], None);
            let steps = steps_for(&lay, &[], resid_sd);
            let n = series.len() as f64;
            let periodogram: Vec<f64> =
                dft_real(&resid.modulated()).iter().map(|z| z.norm_sqr() / n).collect();
            let include_zero = spec.whittle.include_zero_frequency;
            let stage2 = |alpha: &CovarianceSpec| -> Result<f64> {
                let f = whittle_spectrum(alpha, &cache.counts, spec.whittle.floor)?;
                Ok(whittle_sum(&f, &periodogram, include_zero))
            };
            let result = minimize(
                |x| {
                    let d = lay.decode(x);
                    if !cov_ok(&d.alpha) {
                        return f64::INFINITY;
                    }
                    stage2(&d.alpha).unwrap_or(f64::INFINITY)
                },
                &x0,
                &steps,
                config,
            );
            let d = lay.decode(&result.x);
            let value = stage2(&d.alpha)?;
            Ok(ModelFit {
                method: spec.method,
                design: spec.design.clone(),
                n: series.len(),
                n_observed: problem.idx.len(),
                alpha: d.alpha,
                beta: s1.beta,
                beta_labels: labels.clone(),
                gamma: s1.gamma,
                theta: None,
                objective: value,
                free_parameters: lay.names(&labels),
                report: result.report,
                stage1_report: s1.report,
                clamped: 0,
            })
        }
        Method::AepExact => fit_aep(series, &problem, spec, config, s1, &resid_obs, resid_sd),
    }
}

fn fit_aep(
    series: &ObservedSeries,
    problem: &Problem,
    spec: &ModelSpec,
    config: &OptimConfig,
    s1: Stage1,
    resid_obs: &[f64],
    resid_sd: f64,
) -> Result<ModelFit> {
    let labels = problem.base.labels.clone();
    let marginal = fit_aep_marginal(resid_obs, config)?;
    let mut theta = marginal.params;
    let mut beta0 = s1.beta.clone();
    // The mode is pinned at 0; move the fitted location into the fixed term.
    let shift = theta.mu;
    let mut col = 0;
    let mut shifted = false;
    for c in &spec.design.components {
        match c {
            DesignComponent::Intercept => {
                beta0[col] += shift;
                shifted = true;
            }
            DesignComponent::CyclicSplines { count } => {
                for k in 0..*count {
                    beta0[col + k] += shift;
                }
                shifted = true;
            }
            _ => {}
        }
        col += c.columns();
    }
    if shifted {
        theta.mu = 0.0;
    } else {
        log::warn!("design has no intercept or splines; the AEP mode is fixed at 0");
        theta.mu = 0.0;
    }

    // latent-scale starting covariance from the Gaussianised residuals
    let design0 = problem.design(s1.gamma)?;
    let fitted = design0.mul_vec(&beta0)?;
    let raw = series.raw_values();
    let gauss: Vec<f64> = (0..series.len())
        .map(|t| if series.mask()[t] { theta.to_gaussian(raw[t] - fitted[t]).0 } else { 0.0 })
        .collect();
    let gseries = series.with_values(gauss)?;
    let alpha0 = moment_start(&gseries, spec, true);

    let irf = problem.irf.is_some();
    let lay = layout(spec, irf, problem.base.cols(), true, true);
    let x0 = lay.encode(&alpha0, s1.gamma, &beta0, Some(&theta));
    let steps = steps_for(&lay, &beta0, resid_sd);
    let eval = |d: &Decoded| -> Result<crate::aep::AepNll> {
        let design = problem.design(d.gamma)?;
        aep_nll(series, &design, &d.alpha, d.beta.as_deref().unwrap_or(&[]), d.theta.as_ref().expect("aep layout"))
    };
    let result = minimize(
        |x| {
            let d = lay.decode(x);
            if !cov_ok(&d.alpha) || !gamma_ok(d.gamma) || d.theta.map_or(true, |t| t.validate().is_err()) {
                return f64::INFINITY;
            }
            eval(&d).map_or(f64::INFINITY, |r| r.value)
        },
        &x0,
        &steps,
        config,
    );
    let d = lay.decode(&result.x);
    let value = eval(&d)?;
    Ok(ModelFit {
        method: Method::AepExact,
        design: spec.design.clone(),
        n: series.len(),
        n_observed: problem.idx.len(),
        alpha: d.alpha,
        beta: d.beta.clone().unwrap_or_default(),
        beta_labels: labels.clone(),
        gamma: d.gamma,
        theta: d.theta,
        objective: value.value,
        free_parameters: lay.names(&labels),
        report: result.report,
        stage1_report: s1.report,
        clamped: value.clamped,
    })
}
