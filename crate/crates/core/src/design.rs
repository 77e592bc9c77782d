//! Fixed-term design matrix: intercept, linear trend, seasonal harmonics,
//! cyclic cubic spline basis and an impulse-response filtered exogenous driver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum IRF window (number of lags, including lag 0).
pub const DEFAULT_IRF_WINDOW: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignComponent {
    Intercept,
    /// (1/n, 2/n, ..., 1)
    LinearTrend,
    /// sin(2 pi t / period), cos(2 pi t / period)
    SeasonalPair { period: f64 },
    /// `count` cyclic cubic spline basis functions over the full span
    CyclicSplines { count: usize },
    /// IRF-weighted sum of the exogenous series over `window` lags
    IrfCovariate { window: usize },
}

impl DesignComponent {
    pub fn columns(&self) -> usize {
        match self {
            DesignComponent::SeasonalPair { .. } => 2,
            DesignComponent::CyclicSplines { count } => *count,
            _ => 1,
        }
    }
}

/// Ordered list of fixed-term components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignSpec {
    pub components: Vec<DesignComponent>,
}

impl DesignSpec {
    pub fn new(components: Vec<DesignComponent>) -> Result<Self> {
        let spec = Self { components };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let has_intercept = self.components.iter().any(|c| matches!(c, DesignComponent::Intercept));
        let has_splines = self
            .components
            .iter()
            .any(|c| matches!(c, DesignComponent::CyclicSplines { .. }));
        if has_intercept && has_splines {
            return Err(Error::Config(
                "intercept and cyclic splines are mutually exclusive (the splines sum to one)".into(),
            ));
        }
        if self.irf_components() > 1 {
            return Err(Error::Config("at most one IRF covariate is supported".into()));
        }
        for c in &self.components {
            match *c {
                DesignComponent::SeasonalPair { period } if !(period.is_finite() && period > 0.0) => {
                    return Err(Error::Config(format!("seasonal period must be > 0, got {period}")));
                }
                DesignComponent::CyclicSplines { count } if count < 3 => {
                    return Err(Error::Config(format!("cyclic splines need K >= 3, got {count}")));
                }
                DesignComponent::IrfCovariate { window } if window == 0 => {
                    return Err(Error::Config("IRF window must be >= 1".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn num_columns(&self) -> usize {
        self.components.iter().map(DesignComponent::columns).sum()
    }

    fn irf_components(&self) -> usize {
        self.components
            .iter()
            .filter(|c| matches!(c, DesignComponent::IrfCovariate { .. }))
            .count()
    }

    /// IRF window if the design contains an IRF covariate.
    pub fn irf_window(&self) -> Option<usize> {
        self.components.iter().find_map(|c| match c {
            DesignComponent::IrfCovariate { window } => Some(*window),
            _ => None,
        })
    }

    /// Index of the IRF column, if any.
    pub fn irf_column_index(&self) -> Option<usize> {
        let mut idx = 0;
        for c in &self.components {
            if matches!(c, DesignComponent::IrfCovariate { .. }) {
                return Some(idx);
            }
            idx += c.columns();
        }
        None
    }

    pub fn column_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.num_columns());
        for c in &self.components {
            match c {
                DesignComponent::Intercept => labels.push("intercept".to_string()),
                DesignComponent::LinearTrend => labels.push("trend".to_string()),
                DesignComponent::SeasonalPair { period } => {
                    labels.push(format!("sin_{period}"));
                    labels.push(format!("cos_{period}"));
                }
                DesignComponent::CyclicSplines { count } => {
                    labels.extend((1..=*count).map(|k| format!("spline_{k}")));
                }
                DesignComponent::IrfCovariate { .. } => labels.push("irf".to_string()),
            }
        }
        labels
    }

    /// Design matrix for response times 1..n.
    pub fn build(&self, exog: Option<&ExogenousSeries>, gamma: Option<IrfParams>, n: usize) -> Result<DesignMatrix> {
        self.build_extended(exog, gamma, n, n)
    }

    /// Design matrix for times 1..rows, where trend scaling and the spline
    /// span are fixed by the fitted length `n_ref`. Rows beyond `n_ref`
    /// extend the fixed term in time (forecasting).
    pub fn build_extended(
        &self,
        exog: Option<&ExogenousSeries>,
        gamma: Option<IrfParams>,
        n_ref: usize,
        rows: usize,
    ) -> Result<DesignMatrix> {
        self.validate()?;
        if n_ref == 0 || rows == 0 {
            return Err(Error::Length("design needs at least one row".into()));
        }
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(self.num_columns());
        for c in &self.components {
            match *c {
                DesignComponent::Intercept => columns.push(vec![1.0; rows]),
                DesignComponent::LinearTrend => {
                    columns.push((1..=rows).map(|t| t as f64 / n_ref as f64).collect())
                }
                DesignComponent::SeasonalPair { period } => {
                    let arg = |t: usize| 2.0 * std::f64::consts::PI * t as f64 / period;
                    columns.push((1..=rows).map(|t| arg(t).sin()).collect());
                    columns.push((1..=rows).map(|t| arg(t).cos()).collect());
                }
                DesignComponent::CyclicSplines { count } => {
                    let basis = CyclicSplineBasis::new(count, n_ref as f64)?;
                    for k in 0..count {
                        columns.push((1..=rows).map(|t| basis.eval(k, t as f64)).collect());
                    }
                }
                DesignComponent::IrfCovariate { window } => {
                    let exog = exog.ok_or_else(|| {
                        Error::Config("design has an IRF covariate but no exogenous series was given".into())
                    })?;
                    let gamma = gamma.ok_or_else(|| {
                        Error::Config("design has an IRF covariate but no IRF parameters were given".into())
                    })?;
                    columns.push(irf_column(exog, gamma, window, rows)?);
                }
            }
        }
        Ok(DesignMatrix { columns, labels: self.column_labels(), rows })
    }
}

/// IRF shape/rate parameters, gamma = (s, a).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrfParams {
    pub shape: f64,
    pub rate: f64,
}

impl IrfParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        let p = Self { shape, rate };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape.is_finite() && self.shape > 0.0 && self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::domain(format!(
                "IRF shape and rate must be > 0, got ({}, {})",
                self.shape, self.rate
            )));
        }
        Ok(())
    }
}

/// Exogenous driver with `lead` values preceding response time 1, so that the
/// value at response time t (1-based, possibly <= 0) is `values[lead + t - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSeries {
    pub values: Vec<f64>,
    pub lead: usize,
}

impl ExogenousSeries {
    pub fn new(values: Vec<f64>, lead: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("exogenous series has a missing/non-finite value at index {i}")));
        }
        Ok(Self { values, lead })
    }

    /// Number of response times covered, given a window of `window` lags.
    pub fn covered(&self, window: usize) -> Option<usize> {
        if self.lead + 1 < window {
            None
        } else {
            Some(self.values.len().saturating_sub(self.lead))
        }
    }
}

/// Normalised IRF weights for lags 0..window-1, w_tau proportional to
/// (tau+1)^(s-1) exp(-a (tau+1)), evaluated in log space.
pub fn irf_weights(gamma: IrfParams, window: usize) -> Result<Vec<f64>> {
    gamma.validate()?;
    if window == 0 {
        return Err(Error::domain("IRF window must be >= 1"));
    }
    let logs: Vec<f64> = (0..window)
        .map(|tau| {
            let u = (tau + 1) as f64;
            (gamma.shape - 1.0) * u.ln() - gamma.rate * u
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::domain("IRF weights are degenerate"));
    }
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::domain("IRF weights are degenerate"));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// m_t = sum_tau w_tau p(t - tau) for t = 1..n.
pub fn irf_column(exog: &ExogenousSeries, gamma: IrfParams, window: usize, n: usize) -> Result<Vec<f64>> {
    let weights = irf_weights(gamma, window)?;
    irf_column_with_weights(exog, &weights, n)
}

pub(crate) fn irf_column_with_weights(exog: &ExogenousSeries, weights: &[f64], n: usize) -> Result<Vec<f64>> {
    let window = weights.len();
    let required_lead = window - 1;
    if exog.lead < required_lead || exog.values.len() < exog.lead + n {
        return Err(Error::Length(format!(
            "exogenous series needs {} values before the first response time and {} in total \
             (window {window}, n {n}); has lead {} and length {}",
            required_lead,
            required_lead + n,
            exog.lead,
            exog.values.len()
        )));
    }
    let base = exog.lead - required_lead;
    let p = &exog.values[base..];
    Ok((0..n)
        .map(|t| {
            // p index of lag tau at response index t: t + window - 1 - tau
            let end = t + window - 1;
            weights.iter().enumerate().map(|(tau, w)| w * p[end - tau]).sum()
        })
        .collect())
}

/// Realised n x m design matrix, stored by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub rows: usize,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// M beta.
    pub fn mul_vec(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "beta has {} entries, design has {} columns",
                beta.len(),
                self.cols()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (col, b) in self.columns.iter().zip(beta) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += b * v;
            }
        }
        Ok(out)
    }
}

/// Cyclic cubic regression spline basis with K evenly spaced knots on
/// [0, span); each basis function is the periodic cubic spline interpolating
/// the k-th unit vector at the knots, so the basis is a partition of unity.
#[derive(Debug, Clone)]
pub struct CyclicSplineBasis {
    count: usize,
    span: f64,
    h: f64,
    /// second derivatives at the knots, one row per basis function
    curvature: Vec<Vec<f64>>,
}

impl CyclicSplineBasis {
    pub fn new(count: usize, span: f64) -> Result<Self> {
        if count < 3 {
            return Err(Error::domain(format!("cyclic splines need K >= 3, got {count}")));
        }
        if !(span.is_finite() && span > count as f64) {
            return Err(Error::domain(format!(
                "cyclic spline span {span} too short for {count} basis functions"
            )));
        }
        let h = span / count as f64;
        // Periodic spline conditions: B delta = D beta with B = h/6 [1 4 1],
        // D = 1/h [1 -2 1], both circulant.
        let k = count;
        let mut b = vec![vec![0.0; k]; k];
        let mut d = vec![vec![0.0; k]; k];
        for i in 0..k {
            let prev = (i + k - 1) % k;
            let next = (i + 1) % k;
            b[i][i] += 4.0 * h / 6.0;
            b[i][prev] += h / 6.0;
            b[i][next] += h / 6.0;
            d[i][i] += -2.0 / h;
            d[i][prev] += 1.0 / h;
            d[i][next] += 1.0 / h;
        }
        let solution = solve_dense(b, d);
        // column j of the solution holds the knot curvatures of basis j
        let curvature = (0..k).map(|j| (0..k).map(|i| solution[i][j]).collect()).collect();
        Ok(Self { count, span, h, curvature })
    }

    /// Basis function `k` at position `x` (wrapped into [0, span)).
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        let xr = x.rem_euclid(self.span);
        let mut j = (xr / self.h).floor() as usize;
        if j >= self.count {
            j = self.count - 1;
        }
        let j1 = (j + 1) % self.count;
        let left = j as f64 * self.h;
        let am = (left + self.h - xr) / self.h;
        let ap = (xr - left) / self.h;
        let h = self.h;
        let cm = ((left + h - xr).powi(3) / h - h * (left + h - xr)) / 6.0;
        let cp = ((xr - left).powi(3) / h - h * (xr - left)) / 6.0;
        let value_j = if j == k { 1.0 } else { 0.0 };
        let value_j1 = if j1 == k { 1.0 } else { 0.0 };
        am * value_j + ap * value_j1 + cm * self.curvature[k][j] + cp * self.curvature[k][j1]
    }
}

/// Solves A X = B for small dense systems by Gaussian elimination with
/// partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[i][j] -= f * a[col][j];
            }
            for j in 0..b[i].len() {
                b[i][j] -= f * b[col][j];
            }
        }
    }
    let m = b[0].len();
    let mut x = vec![vec![0.0; m]; n];
    for i in (0..n).rev() {
        for c in 0..m {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j][c]).sum();
            x[i][c] = (b[i][c] - s) / a[i][i];
        }
    }
    x
}
