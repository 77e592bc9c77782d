//! Dense symmetric-positive-definite and least-squares helpers over faer.

use std::sync::Once;

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::linalg::solvers::SolveLstsq;
use faer::{Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Relative threshold on |R_kk| below which a column is declared dependent.
const RANK_TOLERANCE: f64 = 1e-10;

static SEQUENTIAL: Once = Once::new();

/// faer reads a process-wide parallelism setting; pin it to sequential so
/// every factorisation is bit-reproducible independent of the thread pool.
pub(crate) fn init() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Symmetric Toeplitz matrix c(|i - j|) restricted to rows/columns `idx`.
pub fn toeplitz_submatrix(acv: &[f64], idx: &[usize]) -> Mat<f64> {
    let k = idx.len();
    Mat::from_fn(k, k, |i, j| acv[idx[i].abs_diff(idx[j])])
}

/// Lower Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat<f64>,
    /// Number of diagonal jitter escalations applied before success.
    pub escalations: usize,
    /// Total jitter added to the diagonal.
    pub jitter: f64,
}

impl Cholesky {
    /// Plain factorisation; `None` if the matrix is not numerically PD.
    pub fn try_new(a: MatRef<'_, f64>) -> Option<Self> {
        init();
        a.llt(Side::Lower).ok().map(|f| Self { l: f.L().to_owned(), escalations: 0, jitter: 0.0 })
    }

    /// Factorisation with up to `max_escalations` diagonal jitter attempts of
    /// `1e-10 * scale * 10^k`, k = 0, 1, ...
    pub fn with_jitter(a: MatRef<'_, f64>, scale: f64, max_escalations: usize) -> Option<Self> {
        if let Some(f) = Self::try_new(a) {
            return Some(f);
        }
        let mut work = a.to_owned();
        let mut added = 0.0;
        for k in 0..max_escalations {
            let jitter = 1e-10 * scale * 10f64.powi(k as i32);
            for i in 0..work.nrows() {
                work[(i, i)] += jitter - added;
            }
            added = jitter;
            if let Some(mut f) = Self::try_new(work.as_ref()) {
                f.escalations = k + 1;
                f.jitter = jitter;
                return Some(f);
            }
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> MatRef<'_, f64> {
        self.l.as_ref()
    }

    /// log |A| = 2 sum log L_ii.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Solves L Y = B in place.
    pub fn solve_lower_in_place(&self, b: &mut Mat<f64>) {
        solve_lower_triangular_in_place(self.l.as_ref(), b.as_mut(), Par::Seq);
    }

    /// L^{-1} b for a vector.
    pub fn whiten(&self, b: &[f64]) -> Vec<f64> {
        let mut m = column(b);
        self.solve_lower_in_place(&mut m);
        m.col(0).iter().copied().collect()
    }

    /// A^{-1} B.
    pub fn solve(&self, b: &Mat<f64>) -> Mat<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(&mut x);
        solve_upper_triangular_in_place(self.l.as_ref().transpose(), x.as_mut(), Par::Seq);
        x
    }

    /// A^{-1} b for a vector.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        self.solve(&column(b)).col(0).iter().copied().collect()
    }
}

pub(crate) fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Least-squares solution of A x = b by Householder QR, refusing rank
/// deficient A and naming the columns that depend on earlier ones.
pub fn least_squares(a: MatRef<'_, f64>, b: &[f64], labels: &[String]) -> Result<Vec<f64>> {
    init();
    let (rows, cols) = (a.nrows(), a.ncols());
    if rows != b.len() {
        return Err(Error::Dimension(format!("matrix has {rows} rows, right-hand side has {}", b.len())));
    }
    if rows < cols {
        return Err(Error::Length(format!("{rows} rows cannot determine {cols} coefficients")));
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    let qr = a.qr();
    let r = qr.thin_R();
    let scale = (0..cols).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    let dependent: Vec<String> = (0..cols)
        .filter(|&k| !(r[(k, k)].abs() > RANK_TOLERANCE * scale) || scale == 0.0)
        .map(|k| labels.get(k).cloned().unwrap_or_else(|| format!("column {k}")))
        .collect();
    if !dependent.is_empty() {
        return Err(Error::Singular { columns: dependent });
    }
    let sol = qr.solve_lstsq(column(b));
    Ok((0..cols).map(|k| sol[(k, 0)]).collect())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: MatRef<'_, f64>) -> Result<f64> {
    init();
    let ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalue computation failed: {e:?}")))?;
    Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
}
