//! Fourier grid, periodograms of (modulated) series and exact expected
//! periodograms for an autocovariance sequence under an observation mask.
//!
//! All frequency-indexed vectors are returned in FFT order: position k holds
//! the Fourier index j = k for k <= n/2 and j = k - n otherwise. The
//! likelihoods sum over every position, so the order never matters there;
//! [`FrequencyGrid`] converts to the centred indexing when needed.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};

/// Default floor for the expected periodogram, relative to c~(0).
pub const DEFAULT_SPECTRAL_FLOOR: f64 = 1e-12;

/// Negative expected-periodogram values below -tol * max(c~(0), 1) are a
/// model inconsistency rather than rounding.
const NEGATIVE_TOLERANCE: f64 = 1e-9;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Forward DFT of a real sequence, sum_t y_t e^{-i 2 pi k t / n}, t = 0..n-1.
pub(crate) fn dft_real(y: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        forward_plan(buf.len()).process(&mut buf);
    }
    buf
}

/// The n Fourier frequencies 2 pi j / n, j in {-ceil(n/2)+1, ..., floor(n/2)}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    n: usize,
}

impl FrequencyGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("frequency grid needs n >= 1"));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Fourier indices in increasing order.
    pub fn indices(&self) -> Vec<i64> {
        let n = self.n as i64;
        let lo = -((n + 1) / 2) + 1;
        (lo..=n / 2).collect()
    }

    /// Fourier index stored at FFT position `k`.
    pub fn index_at(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k <= n / 2 {
            k
        } else {
            k - n
        }
    }

    /// FFT position of Fourier index `j`.
    pub fn position(&self, j: i64) -> usize {
        j.rem_euclid(self.n as i64) as usize
    }

    pub fn frequency(&self, j: i64) -> f64 {
        2.0 * PI * j as f64 / self.n as f64
    }

    /// Frequencies in FFT order.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.frequency(self.index_at(k))).collect()
    }
}

/// Values on a regular integer time grid with an observation mask.
/// Entries at unobserved times are never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ObservedSeries {
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::Dimension(format!(
                "values have length {}, mask has length {}",
                values.len(),
                mask.len()
            )));
        }
        let observed = mask.iter().filter(|&&g| g).count();
        if observed < 2 {
            return Err(Error::Length(format!("at least 2 observed values needed, got {observed}")));
        }
        if let Some(i) = (0..values.len()).find(|&i| mask[i] && !values[i].is_finite()) {
            return Err(Error::Input(format!("observed value at index {i} is not finite")));
        }
        Ok(Self { values, mask })
    }

    /// All entries observed.
    pub fn complete(values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(values, mask)
    }

    /// `None` entries become unobserved.
    pub fn from_options(values: &[Option<f64>]) -> Result<Self> {
        let mask = values.iter().map(Option::is_some).collect();
        let vals = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        Self::new(vals, mask)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Raw storage, including placeholders at unobserved times.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: usize) -> Option<f64> {
        self.mask[t].then(|| self.values[t])
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&t| self.mask[t]).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&g| g).count()
    }

    pub fn observed_values(&self) -> Vec<f64> {
        (0..self.len()).filter(|&t| self.mask[t]).map(|t| self.values[t]).collect()
    }

    pub fn missing_fraction(&self) -> f64 {
        1.0 - self.observed_count() as f64 / self.len() as f64
    }

    /// x_t g_t, with unobserved entries set to zero (never multiplied, so
    /// non-finite placeholders cannot leak).
    pub fn modulated(&self) -> Vec<f64> {
        self.values.iter().zip(&self.mask).map(|(&v, &g)| if g { v } else { 0.0 }).collect()
    }

    /// Same mask with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.mask.clone())
    }
}

/// I_j = (1/n) |sum_t y_t e^{-i w_j t}|^2 over all n Fourier frequencies.
pub fn periodogram(y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::domain("periodogram of an empty series"));
    }
    let n = y.len() as f64;
    Ok(dft_real(y).iter().map(|z| z.norm_sqr() / n).collect())
}

/// Residuals x_t - M^(t) beta at observed times, zero elsewhere.
pub fn modulated_residuals(series: &ObservedSeries, design: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>> {
    if design.rows() != series.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, series has length {}",
            design.rows(),
            series.len()
        )));
    }
    let fitted = design.mul_vec(beta)?;
    Ok((0..series.len())
        .map(|t| if series.mask[t] { series.values[t] - fitted[t] } else { 0.0 })
        .collect())
}

/// Periodogram of the modulated residuals g_t (x_t - M^(t) beta).
pub fn modulated_residual_periodogram(series: &ObservedSeries, design: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>> {
    periodogram(&modulated_residuals(series, design, beta)?)
}

/// Number of observed pairs (t, t + tau) for tau = 0..n-1, via one padded
/// FFT autocorrelation; counts are integers so rounding makes them exact.
pub fn mask_pair_counts(mask: &[bool]) -> Vec<f64> {
    let n = mask.len();
    if n == 0 {
        return Vec::new();
    }
    if n <= 64 {
        return (0..n)
            .map(|tau| (0..n - tau).filter(|&t| mask[t] && mask[t + tau]).count() as f64)
            .collect();
    }
    let m = (2 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (b, &g) in buf.iter_mut().zip(mask) {
        if g {
            b.re = 1.0;
        }
    }
    forward_plan(m).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    inverse_plan(m).process(&mut buf);
    buf[..n].iter().map(|z| (z.re / m as f64).round()).collect()
}

/// Empirical autocovariance of a masked series about its observed mean:
/// sum over observed pairs at lag tau divided by the number of such pairs,
/// for tau = 0..=max_lag. Lags without pairs give NaN.
pub fn empirical_acv(series: &ObservedSeries, max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let max_lag = max_lag.min(n.saturating_sub(1));
    let vals = series.observed_values();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let centred: Vec<f64> = (0..n).map(|t| if series.mask[t] { series.values[t] - mean } else { 0.0 }).collect();
    let counts = mask_pair_counts(&series.mask);
    let m = (2 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (b, v) in buf.iter_mut().zip(&centred) {
        b.re = *v;
    }
    forward_plan(m).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    inverse_plan(m).process(&mut buf);
    (0..=max_lag)
        .map(|tau| if counts[tau] > 0.0 { buf[tau].re / m as f64 / counts[tau] } else { f64::NAN })
        .collect()
}

/// c~(tau) = c(tau) (1/n) sum_t g_t g_{t+tau}.
pub fn modulated_acv(acv: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if acv.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "autocovariance has length {}, mask has length {}",
            acv.len(),
            mask.len()
        )));
    }
    let counts = mask_pair_counts(mask);
    Ok(modulate_with_counts(acv, &counts))
}

pub(crate) fn modulate_with_counts(acv: &[f64], counts: &[f64]) -> Vec<f64> {
    let n = acv.len() as f64;
    acv.iter().zip(counts).map(|(c, k)| c * k / n).collect()
}

/// (1 - tau/n) c(tau), the complete-data special case of [`modulated_acv`].
pub fn tapered_acv(acv: &[f64]) -> Vec<f64> {
    let n = acv.len() as f64;
    acv.iter().enumerate().map(|(tau, c)| c * (1.0 - tau as f64 / n)).collect()
}

/// f(w_j) = 2 Re[sum_tau cbar(tau) e^{-i w_j tau}] - cbar(0), via one FFT.
///
/// Returns the raw values; a value below -1e-9 max(cbar(0), 1) means the
/// sequence is not a valid (modulated) autocovariance.
pub fn expected_periodogram(cbar: &[f64]) -> Result<Vec<f64>> {
    if cbar.is_empty() {
        return Err(Error::domain("expected periodogram of an empty sequence"));
    }
    let c0 = cbar[0];
    let f: Vec<f64> = dft_real(cbar).iter().map(|z| 2.0 * z.re - c0).collect();
    let tol = NEGATIVE_TOLERANCE * c0.abs().max(1.0);
    if let Some((j, v)) = f.iter().enumerate().find(|(_, v)| **v < -tol || !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "expected periodogram is {v:e} at FFT position {j}; the autocovariance is not valid"
        )));
    }
    Ok(f)
}

/// Raises entries below `floor_rel * cbar0` to that floor.
pub fn clip_expected_periodogram(f: &mut [f64], cbar0: f64, floor_rel: f64) -> usize {
    let floor = floor_rel * cbar0;
    let mut clipped = 0;
    for v in f.iter_mut() {
        if *v < floor {
            *v = floor;
            clipped += 1;
        }
    }
    clipped
}
