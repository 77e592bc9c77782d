//! Asymmetric exponential power (AEP) distribution, Gaussian-copula error
//! simulation by the inversion method, the copula likelihood and iid fitting.
//!
//! Both tail probabilities are carried separately wherever possible so that
//! mapping between the AEP and Gaussian scales keeps full relative precision
//! far out in either tail.

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceSpec;
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::estimate::Transform;
use crate::linalg::{toeplitz_submatrix, Cholesky};
use crate::optim::{minimize, OptimConfig, OptimReport};
use crate::simstudy::simulate_gaussian_process;
use crate::special::{inv_reg_gamma, ln_gamma, norm_cdf, norm_quantile, reg_gamma_p, reg_gamma_q};
use crate::spectral::ObservedSeries;

/// Probabilities passed to the Gaussian quantile are clamped to
/// [CLAMP, 1 - CLAMP].
pub const CLAMP: f64 = 1e-15;

/// theta = (sigma, varsigma, p1, p2) plus the location (mode) mu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AepParams {
    #[serde(default)]
    pub mu: f64,
    pub sigma: f64,
    pub varsigma: f64,
    pub p1: f64,
    pub p2: f64,
}

/// ln K_EP(p) = -ln[2 p^{1/p} Gamma(1 + 1/p)].
pub fn ln_k_ep(p: f64) -> f64 {
    -(std::f64::consts::LN_2 + p.ln() / p + ln_gamma(1.0 + 1.0 / p))
}

impl AepParams {
    pub fn new(mu: f64, sigma: f64, varsigma: f64, p1: f64, p2: f64) -> Result<Self> {
        let p = Self { mu, sigma, varsigma, p1, p2 };
        p.validate()?;
        Ok(p)
    }

    /// The member of the family equal to N(mu, sigma^2).
    pub fn gaussian(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma, varsigma: 0.5, p1: 2.0, p2: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !self.mu.is_finite()
            || !pos(self.sigma)
            || !pos(self.p1)
            || !pos(self.p2)
            || !(self.varsigma > 0.0 && self.varsigma < 1.0)
        {
            return Err(Error::domain(format!(
                "AEP parameters need sigma, p1, p2 > 0 and 0 < varsigma < 1; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn k_ep(p: f64) -> f64 {
        ln_k_ep(p).exp()
    }

    /// varsigma* = varsigma K(p1) / [varsigma K(p1) + (1 - varsigma) K(p2)].
    pub fn varsigma_star(&self) -> f64 {
        let a = self.varsigma * Self::k_ep(self.p1);
        let b = (1.0 - self.varsigma) * Self::k_ep(self.p2);
        a / (a + b)
    }

    fn left_scale(&self) -> f64 {
        2.0 * self.varsigma_star() * self.sigma
    }

    fn right_scale(&self) -> f64 {
        2.0 * (1.0 - self.varsigma_star()) * self.sigma
    }

    /// log density.
    pub fn ln_pdf(&self, z: f64) -> f64 {
        let vs = self.varsigma_star();
        if z <= self.mu {
            let u = (self.mu - z) / (2.0 * vs * self.sigma);
            self.varsigma.ln() - vs.ln() - self.sigma.ln() + ln_k_ep(self.p1) - u.powf(self.p1) / self.p1
        } else {
            let u = (z - self.mu) / (2.0 * (1.0 - vs) * self.sigma);
            (1.0 - self.varsigma).ln() - (1.0 - vs).ln() - self.sigma.ln() + ln_k_ep(self.p2)
                - u.powf(self.p2) / self.p2
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z).exp()
    }

    /// (F(z), 1 - F(z)), each computed without cancellation.
    pub fn cdf_tails(&self, z: f64) -> (f64, f64) {
        if z.is_nan() {
            return (f64::NAN, f64::NAN);
        }
        if z <= self.mu {
            let u = (self.mu - z) / self.left_scale();
            let x = u.powf(self.p1) / self.p1;
            let a = 1.0 / self.p1;
            (self.varsigma * reg_gamma_q(a, x), 1.0 - self.varsigma + self.varsigma * reg_gamma_p(a, x))
        } else {
            let u = (z - self.mu) / self.right_scale();
            let x = u.powf(self.p2) / self.p2;
            let a = 1.0 / self.p2;
            (self.varsigma + (1.0 - self.varsigma) * reg_gamma_p(a, x), (1.0 - self.varsigma) * reg_gamma_q(a, x))
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.cdf_tails(z).0
    }

    /// Quantile given both tail probabilities (lower + upper = 1); the
    /// smaller of the two drives the inversion.
    pub fn quantile_tails(&self, lower: f64, upper: f64) -> f64 {
        if lower <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if upper <= 0.0 {
            return f64::INFINITY;
        }
        if lower <= self.varsigma {
            let q = lower / self.varsigma;
            let x = inv_reg_gamma(1.0 / self.p1, 1.0 - q, q);
            self.mu - self.left_scale() * (self.p1 * x).powf(1.0 / self.p1)
        } else {
            let q = upper / (1.0 - self.varsigma);
            let x = inv_reg_gamma(1.0 / self.p2, 1.0 - q, q);
            self.mu + self.right_scale() * (self.p2 * x).powf(1.0 / self.p2)
        }
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::domain(format!("probability must lie in [0, 1], got {prob}")));
        }
        Ok(self.quantile_tails(prob, 1.0 - prob))
    }

    /// Phi^{-1}(F(z)) with the probability clamped to [CLAMP, 1 - CLAMP];
    /// the flag reports whether the clamp was hit.
    pub fn to_gaussian(&self, z: f64) -> (f64, bool) {
        let (lower, upper) = self.cdf_tails(z);
        if lower <= upper {
            let p = lower.max(CLAMP);
            (norm_quantile(p), lower < CLAMP)
        } else {
            let q = upper.max(CLAMP);
            (-norm_quantile(q), upper < CLAMP)
        }
    }

    /// F^{-1}(Phi(g)).
    pub fn from_gaussian(&self, g: f64) -> f64 {
        if g <= 0.0 {
            let lower = norm_cdf(g);
            self.quantile_tails(lower, 1.0 - lower)
        } else {
            let upper = norm_cdf(-g);
            self.quantile_tails(1.0 - upper, upper)
        }
    }
}

pub fn aep_pdf(z: f64, params: &AepParams) -> f64 {
    params.pdf(z)
}

pub fn aep_cdf(z: f64, params: &AepParams) -> f64 {
    params.cdf(z)
}

pub fn aep_quantile(prob: f64, params: &AepParams) -> Result<f64> {
    params.quantile(prob)
}

/// AEP-marginal errors with the latent Gaussian autocovariance `cov`
/// (which must have c0 + c1 = 1), by F^{-1}(Phi(eps)).
pub fn simulate_aep_errors(cov: &CovarianceSpec, params: &AepParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    check_unit_variance(cov)?;
    let gauss = simulate_gaussian_process(cov, n, seed)?;
    Ok(gauss.iter().map(|&g| params.from_gaussian(g)).collect())
}

fn check_unit_variance(cov: &CovarianceSpec) -> Result<()> {
    if (cov.total_variance() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "the latent Gaussian process of an AEP model needs c0 + c1 = 1, got {}",
            cov.total_variance()
        )));
    }
    Ok(())
}

/// Value of the AEP copula negative log-likelihood and how many residuals
/// hit the probability clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AepNll {
    pub value: f64,
    pub clamped: usize,
}

/// -l_AEP = 1/2 log|C| - 1/2 a^T (I - C^{-1}) a - sum log f(r) over observed
/// times, with a_t = Phi^{-1}(F(r_t)).
pub fn aep_nll(
    series: &ObservedSeries,
    design: &DesignMatrix,
    cov: &CovarianceSpec,
    beta: &[f64],
    params: &AepParams,
) -> Result<AepNll> {
    params.validate()?;
    check_unit_variance(cov)?;
    let idx = series.observed_indices();
    if idx.len() < design.cols() {
        return Err(Error::Length(format!(
            "{} observed values cannot determine {} coefficients",
            idx.len(),
            design.cols()
        )));
    }
    let fitted = design.mul_vec(beta)?;
    if fitted.len() != series.len() {
        return Err(Error::Dimension("design rows do not match series length".into()));
    }
    let raw = series.raw_values();
    let acv = cov.acv_sequence(series.len())?;
    let c = toeplitz_submatrix(&acv, &idx);
    let chol = Cholesky::try_new(c.as_ref()).ok_or_else(|| Error::NotPositiveDefinite { params: cov.values() })?;
    let mut clamped = 0;
    let mut ln_f = 0.0;
    let a: Vec<f64> = idx
        .iter()
        .map(|&t| {
            let r = raw[t] - fitted[t];
            ln_f += params.ln_pdf(r);
            let (g, hit) = params.to_gaussian(r);
            clamped += hit as usize;
            g
        })
        .collect();
    let aa: f64 = a.iter().map(|v| v * v).sum();
    let w = chol.whiten(&a);
    let quad: f64 = w.iter().map(|v| v * v).sum();
    let value = 0.5 * chol.log_det() - 0.5 * aa + 0.5 * quad - ln_f;
    if !value.is_finite() {
        return Err(Error::Numerical("AEP likelihood is not finite".into()));
    }
    Ok(AepNll { value, clamped })
}

/// Negative iid AEP log-likelihood of a sample.
pub fn aep_iid_nll(sample: &[f64], params: &AepParams) -> f64 {
    if params.validate().is_err() {
        return f64::INFINITY;
    }
    -sample.iter().map(|&z| params.ln_pdf(z)).sum::<f64>()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AepMarginalFit {
    pub params: AepParams,
    pub nll: f64,
    /// Negative log-likelihood at the moment-based starting point.
    pub start_nll: f64,
    pub report: OptimReport,
}

const MARGINAL_TRANSFORMS: [Transform; 5] =
    [Transform::Identity, Transform::Log, Transform::Logit, Transform::Log, Transform::Log];

/// Maximum-likelihood iid AEP fit over (mu, sigma, varsigma, p1, p2),
/// started from the Gaussian member with the sample median and deviation.
pub fn fit_aep_marginal(residuals: &[f64], config: &OptimConfig) -> Result<AepMarginalFit> {
    if residuals.len() < 50 {
        return Err(Error::Length(format!("AEP fitting needs at least 50 residuals, got {}", residuals.len())));
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("residuals contain non-finite values".into()));
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let sd = (residuals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Input("residuals are constant".into()));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let start = AepParams::gaussian(median, sd);
    let start_nll = aep_iid_nll(residuals, &start);
    let values = [start.mu, start.sigma, start.varsigma, start.p1, start.p2];
    let x0: Vec<f64> = values.iter().zip(MARGINAL_TRANSFORMS).map(|(v, t)| t.to_raw(*v)).collect();
    let steps = [0.25 * sd, 0.3, 0.5, 0.3, 0.3];
    let decode = |x: &[f64]| {
        let v: Vec<f64> = x.iter().zip(MARGINAL_TRANSFORMS).map(|(r, t)| t.from_raw(*r)).collect();
        AepParams { mu: v[0], sigma: v[1], varsigma: v[2], p1: v[3], p2: v[4] }
    };
    let result = minimize(|x| aep_iid_nll(residuals, &decode(x)), &x0, &steps, config);
    let params = decode(&result.x);
    params.validate()?;
    Ok(AepMarginalFit { params, nll: result.value, start_nll, report: result.report })
}

/// Exact autocovariance of F^{-1}(Phi(Z_t)) for a latent unit-variance
/// Gaussian process with autocovariance `latent` (lags 0..n-1), through the
/// Hermite expansion cov = sum_k d_k^2 rho^k, d_k = E[g(Z) He_k(Z)] / sqrt(k!).
pub fn transformed_acv(latent: &CovarianceSpec, params: &AepParams, n: usize) -> Result<Vec<f64>> {
    params.validate()?;
    check_unit_variance(latent)?;
    let rho = latent.acv_sequence(n)?;
    let coeffs = hermite_coefficients(|z| params.from_gaussian(z), 60);
    let mean = coeffs[0];
    let second = gaussian_expectation(|z| params.from_gaussian(z).powi(2));
    let variance = second - mean * mean;
    let mut out = Vec::with_capacity(n);
    out.push(variance);
    for &r in &rho[1..] {
        let mut total = 0.0;
        let mut power = r;
        for d in &coeffs[1..] {
            total += d * d * power;
            power *= r;
            if power.abs() < 1e-300 {
                break;
            }
        }
        out.push(total);
    }
    Ok(out)
}

const HERMITE_GRID_HALF_WIDTH: f64 = 12.0;
const HERMITE_GRID_POINTS: usize = 48_001;

/// E[h(Z)] for standard normal Z by composite Simpson on [-12, 12].
fn gaussian_expectation<F: Fn(f64) -> f64>(h: F) -> f64 {
    let m = HERMITE_GRID_POINTS - 1;
    let step = 2.0 * HERMITE_GRID_HALF_WIDTH / m as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for i in 0..=m {
        let z = -HERMITE_GRID_HALF_WIDTH + i as f64 * step;
        let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * h(z) * norm * (-0.5 * z * z).exp();
    }
    total * step / 3.0
}

/// d_k = E[g(Z) h_k(Z)] with orthonormal Hermite h_k = He_k / sqrt(k!).
fn hermite_coefficients<F: Fn(f64) -> f64>(g: F, order: usize) -> Vec<f64> {
    let m = HERMITE_GRID_POINTS - 1;
    let step = 2.0 * HERMITE_GRID_HALF_WIDTH / m as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut coeffs = vec![0.0; order + 1];
    let mut h = vec![0.0; order + 1];
    for i in 0..=m {
        let z = -HERMITE_GRID_HALF_WIDTH + i as f64 * step;
        let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let weight = w * g(z) * norm * (-0.5 * z * z).exp();
        h[0] = 1.0;
        if order >= 1 {
            h[1] = z;
        }
        for k in 1..order {
            h[k + 1] = (z * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
        }
        for k in 0..=order {
            coeffs[k] += weight * h[k];
        }
    }
    coeffs.iter().map(|c| c * step / 3.0).collect()
}
