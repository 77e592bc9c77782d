//! Stationary autocovariance functions on an integer lag grid: nested-nugget
//! Matérn, exponential, and Matérn times a periodic kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_bessel_k, ln_gamma};

/// Largest smoothness accepted; the Bessel routine is validated up to here.
pub const MAX_SMOOTHNESS: f64 = 50.0;

/// Below this Bessel argument the Matérn part is replaced by its limit c1.
const SMALL_ARGUMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceFamily {
    /// c1 exp(-tau / lambda_m)
    Exponential,
    /// Matérn with nugget
    Matern,
    /// Matérn times exp(-2 sin^2(pi tau / p) / lambda_p^2); the period p is fixed
    MaternPeriodic,
}

/// A single covariance parameter, used to address free/fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovParam {
    Nugget,
    Sill,
    LengthScale,
    Smoothness,
    PeriodicLengthScale,
}

impl CovarianceFamily {
    /// Parameters that can be estimated for this family, in canonical order.
    pub fn params(self) -> &'static [CovParam] {
        use CovParam::*;
        match self {
            CovarianceFamily::Exponential => &[Nugget, Sill, LengthScale],
            CovarianceFamily::Matern => &[Nugget, Sill, LengthScale, Smoothness],
            CovarianceFamily::MaternPeriodic => {
                &[Nugget, Sill, LengthScale, Smoothness, PeriodicLengthScale]
            }
        }
    }
}

fn default_smoothness() -> f64 {
    0.5
}
fn default_periodic_length_scale() -> f64 {
    1.0
}
fn default_period() -> f64 {
    12.0
}

/// Covariance family plus its parameter values. Fields a family does not use
/// are carried but ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub family: CovarianceFamily,
    /// c0 >= 0
    pub nugget: f64,
    /// c1 >= 0
    pub sill: f64,
    /// lambda_m > 0, in time steps
    pub length_scale: f64,
    /// nu > 0 (Matérn families)
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
    /// lambda_p > 0 (Matérn-periodic)
    #[serde(default = "default_periodic_length_scale")]
    pub periodic_length_scale: f64,
    /// p > 0 in time steps (Matérn-periodic, never estimated)
    #[serde(default = "default_period")]
    pub period: f64,
}

impl CovarianceSpec {
    pub fn exponential(nugget: f64, sill: f64, length_scale: f64) -> Self {
        Self {
            family: CovarianceFamily::Exponential,
            nugget,
            sill,
            length_scale,
            smoothness: default_smoothness(),
            periodic_length_scale: default_periodic_length_scale(),
            period: default_period(),
        }
    }

    pub fn matern(nugget: f64, sill: f64, length_scale: f64, smoothness: f64) -> Self {
        Self {
            family: CovarianceFamily::Matern,
            smoothness,
            ..Self::exponential(nugget, sill, length_scale)
        }
    }

    pub fn matern_periodic(
        nugget: f64,
        sill: f64,
        length_scale: f64,
        smoothness: f64,
        periodic_length_scale: f64,
        period: f64,
    ) -> Self {
        Self {
            family: CovarianceFamily::MaternPeriodic,
            periodic_length_scale,
            period,
            ..Self::matern(nugget, sill, length_scale, smoothness)
        }
    }

    pub fn get(&self, param: CovParam) -> f64 {
        match param {
            CovParam::Nugget => self.nugget,
            CovParam::Sill => self.sill,
            CovParam::LengthScale => self.length_scale,
            CovParam::Smoothness => self.smoothness,
            CovParam::PeriodicLengthScale => self.periodic_length_scale,
        }
    }

    pub fn set(&mut self, param: CovParam, value: f64) {
        match param {
            CovParam::Nugget => self.nugget = value,
            CovParam::Sill => self.sill = value,
            CovParam::LengthScale => self.length_scale = value,
            CovParam::Smoothness => self.smoothness = value,
            CovParam::PeriodicLengthScale => self.periodic_length_scale = value,
        }
    }

    /// Values of the family's parameters in canonical order.
    pub fn values(&self) -> Vec<f64> {
        self.family.params().iter().map(|&p| self.get(p)).collect()
    }

    pub fn total_variance(&self) -> f64 {
        self.nugget + self.sill
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_nonneg(self.nugget) {
            return Err(Error::domain(format!("nugget must be >= 0, got {}", self.nugget)));
        }
        if !finite_nonneg(self.sill) {
            return Err(Error::domain(format!("partial sill must be >= 0, got {}", self.sill)));
        }
        if !finite_pos(self.length_scale) {
            return Err(Error::domain(format!(
                "length-scale must be > 0, got {}",
                self.length_scale
            )));
        }
        if self.family != CovarianceFamily::Exponential
            && !(finite_pos(self.smoothness) && self.smoothness <= MAX_SMOOTHNESS)
        {
            return Err(Error::domain(format!(
                "smoothness must lie in (0, {MAX_SMOOTHNESS}], got {}",
                self.smoothness
            )));
        }
        if self.family == CovarianceFamily::MaternPeriodic {
            if !finite_pos(self.periodic_length_scale) {
                return Err(Error::domain(format!(
                    "periodic length-scale must be > 0, got {}",
                    self.periodic_length_scale
                )));
            }
            if !finite_pos(self.period) {
                return Err(Error::domain(format!("period must be > 0, got {}", self.period)));
            }
        }
        Ok(())
    }

    /// Autocovariance at integer lag `tau`.
    pub fn acv(&self, tau: usize) -> Result<f64> {
        self.validate()?;
        Ok(self.kernel().eval(tau as f64))
    }

    /// c(0), ..., c(n-1).
    pub fn acv_sequence(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::domain("acv_sequence needs n >= 1"));
        }
        self.validate()?;
        let kernel = self.kernel();
        let mut out = Vec::with_capacity(n);
        out.push(self.total_variance());
        let mut vanished = false;
        for tau in 1..n {
            // The decaying part is monotone and the periodic factor is at most
            // one, so once the former underflows every later lag is zero.
            if vanished {
                out.push(0.0);
                continue;
            }
            let base = kernel.decaying(tau as f64);
            if base == 0.0 {
                vanished = true;
            }
            out.push(base * kernel.periodic(tau as f64));
        }
        Ok(out)
    }

    /// Evaluation at a real-valued lag; only meant for Bessel accuracy checks.
    #[doc(hidden)]
    pub fn acv_continuous(&self, tau: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.kernel().eval(tau))
    }

    fn kernel(&self) -> Kernel {
        let ln_norm = match self.family {
            CovarianceFamily::Exponential => 0.0,
            _ => -(self.smoothness - 1.0) * std::f64::consts::LN_2 - ln_gamma(self.smoothness),
        };
        Kernel { spec: *self, ln_norm }
    }
}

/// Pre-validated evaluator with the Matérn normalising constant cached.
struct Kernel {
    spec: CovarianceSpec,
    ln_norm: f64,
}

impl Kernel {
    fn eval(&self, tau: f64) -> f64 {
        let s = &self.spec;
        if tau == 0.0 {
            return s.nugget + s.sill;
        }
        if s.sill == 0.0 {
            return 0.0;
        }
        self.decaying(tau) * self.periodic(tau)
    }

    /// Monotone part c1 rho(tau) (no periodic factor).
    fn decaying(&self, tau: f64) -> f64 {
        let s = &self.spec;
        match s.family {
            CovarianceFamily::Exponential => s.sill * (-tau / s.length_scale).exp(),
            _ => s.sill * self.matern_correlation(tau),
        }
    }

    fn periodic(&self, tau: f64) -> f64 {
        let s = &self.spec;
        if s.family != CovarianceFamily::MaternPeriodic {
            return 1.0;
        }
        let sin = (std::f64::consts::PI * tau / s.period).sin();
        (-2.0 * sin * sin / (s.periodic_length_scale * s.periodic_length_scale)).exp()
    }

    fn matern_correlation(&self, tau: f64) -> f64 {
        let nu = self.spec.smoothness;
        let x = 2.0 * nu.sqrt() * tau / self.spec.length_scale;
        if x < SMALL_ARGUMENT {
            return 1.0;
        }
        let ln_value = self.ln_norm + nu * x.ln() + ln_bessel_k(nu, x);
        if ln_value < -745.0 {
            0.0
        } else {
            ln_value.exp().min(1.0)
        }
    }
}
