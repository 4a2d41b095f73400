//! Generalized least squares under a known covariance `sigma^2 V`, and F
//! tests of linear hypotheses `R beta = r`.
//!
//! The fit whitens with the Cholesky factor `L` of `V` (`L L^T = V`) and then
//! solves the ordinary least-squares problem on `(L^-1 y, L^-1 X)` by
//! Householder QR. `V` is never inverted explicitly.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::FDistribution;
use crate::error::{Error, Result};

/// Relative threshold on `|R_jj| / ||x_j||` below which a whitened design
/// column is treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GlsFit {
    pub beta_hat: DVector<f64>,
    pub sigma2_hat: f64,
    /// `B = (X^T V^-1 X)^-1`, so that `Cov(beta_hat) = sigma^2 B`.
    pub b_matrix: DMatrix<f64>,
    /// `(y - X beta_hat)^T V^-1 (y - X beta_hat)`.
    pub residual_quadform: f64,
    pub nu: usize,
    pub n: usize,
    pub p: usize,
}

impl GlsFit {
    /// Estimated `Cov(beta_hat) = sigma2_hat * B`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.b_matrix * self.sigma2_hat
    }
}

/// Least squares on already-whitened data. Also returns `sum_j ln |R_jj|`,
/// i.e. half of `ln det(X^T V^-1 X)`.
pub(crate) fn whitened_least_squares(y: DVector<f64>, x: DMatrix<f64>) -> Result<(GlsFit, f64)> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::InsufficientDf { n, p });
    }
    let col_norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let qr = x.qr();
    let r = qr.r();
    let dependent: Vec<String> = (0..p)
        .filter(|&j| col_norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOL * col_norms[j])
        .map(|j| format!("column {j}"))
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficientDesign { columns: dependent });
    }

    let mut qty = y;
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, p).into_owned();
    let residual_quadform = qty.rows(p, n - p).norm_squared();

    let beta_hat = r
        .solve_upper_triangular(&head)
        .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::NumericalFailure("triangular inverse failed".into()))?;
    let mut b_matrix = &r_inv * r_inv.transpose();
    symmetrize(&mut b_matrix);
    let half_logdet = (0..p).map(|j| r[(j, j)].abs().ln()).sum();

    let nu = n - p;
    Ok((
        GlsFit {
            beta_hat,
            sigma2_hat: residual_quadform / nu as f64,
            b_matrix,
            residual_quadform,
            nu,
            n,
            p,
        },
        half_logdet,
    ))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Cholesky factor of `V`, or `CovarianceNotPD`.
pub(crate) fn cholesky_lower(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !v.is_square() {
        return Err(Error::DimensionMismatch("V must be square".into()));
    }
    v.clone()
        .cholesky()
        .map(|c| c.unpack())
        .ok_or(Error::CovarianceNotPD)
}

/// Whitens `(y, X)` with the lower Cholesky factor `L` of `V`.
pub(crate) fn whiten(
    l: &DMatrix<f64>,
    y: &DVector<f64>,
    x: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let yw = l.solve_lower_triangular(y).ok_or(Error::CovarianceNotPD)?;
    let xw = l.solve_lower_triangular(x).ok_or(Error::CovarianceNotPD)?;
    Ok((yw, xw))
}

/// BLUE of `beta` and the unbiased `sigma^2` estimate under `Cov(y) = sigma^2 V`.
pub fn gls_fit(y: &DVector<f64>, x: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<GlsFit> {
    let n = x.nrows();
    if y.len() != n || v.nrows() != n || v.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} rows, X has {n}, V is {}x{}",
            y.len(),
            v.nrows(),
            v.ncols()
        )));
    }
    let l = cholesky_lower(v)?;
    let (yw, xw) = whiten(&l, y, x)?;
    whitened_least_squares(yw, xw).map(|(fit, _)| fit)
}

/// `gls_fit` with `V = I`, without materialising `V`.
pub fn ols_fit(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<GlsFit> {
    whitened_least_squares(y.clone(), x.clone()).map(|(fit, _)| fit)
}

/// `H0: R beta = r` with `R` of full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHypothesis {
    r_matrix: DMatrix<f64>,
    r_vector: DVector<f64>,
}

impl LinearHypothesis {
    pub fn new(r_matrix: DMatrix<f64>, r_vector: DVector<f64>) -> Result<Self> {
        let (rows, cols) = r_matrix.shape();
        if rows == 0 {
            return Err(Error::InvalidHypothesis("R has no rows".into()));
        }
        if rows > cols {
            return Err(Error::InvalidHypothesis(format!(
                "R has {rows} rows but only {cols} columns"
            )));
        }
        if r_vector.len() != rows {
            return Err(Error::InvalidHypothesis(format!(
                "r has length {} but R has {rows} rows",
                r_vector.len()
            )));
        }
        let scale = r_matrix.amax();
        let rank = r_matrix.rank(scale * cols as f64 * f64::EPSILON * 10.0);
        if rank < rows {
            return Err(Error::InvalidHypothesis(format!(
                "R has rank {rank} < {rows} rows"
            )));
        }
        Ok(Self { r_matrix, r_vector })
    }

    /// `R = (0 : I : 0)` selecting the coefficients in `block`, with `r = 0`.
    pub fn zero_block(p: usize, block: Range<usize>) -> Result<Self> {
        if block.is_empty() || block.end > p {
            return Err(Error::InvalidHypothesis(format!(
                "block {block:?} is empty or exceeds p = {p}"
            )));
        }
        let r = block.len();
        let mut m = DMatrix::zeros(r, p);
        for (row, col) in block.enumerate() {
            m[(row, col)] = 1.0;
        }
        Self::new(m, DVector::zeros(r))
    }

    /// `R = (0 : I_{p-1})`: every coefficient except the intercept is zero.
    pub fn all_slopes(p: usize) -> Result<Self> {
        Self::zero_block(p, 1..p)
    }

    pub fn r_matrix(&self) -> &DMatrix<f64> {
        &self.r_matrix
    }

    pub fn r_vector(&self) -> &DVector<f64> {
        &self.r_vector
    }

    /// Number of restrictions.
    pub fn rank(&self) -> usize {
        self.r_matrix.nrows()
    }
}

/// `(R b - r)^T (R C R^T)^-1 (R b - r)`.
pub(crate) fn hypothesis_quadform(
    beta: &DVector<f64>,
    cov: &DMatrix<f64>,
    hyp: &LinearHypothesis,
) -> Result<f64> {
    let p = beta.len();
    if hyp.r_matrix.ncols() != p || cov.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "hypothesis has {} columns, model has {p} coefficients",
            hyp.r_matrix.ncols()
        )));
    }
    let diff = &hyp.r_matrix * beta - &hyp.r_vector;
    let mut middle = &hyp.r_matrix * cov * hyp.r_matrix.transpose();
    symmetrize(&mut middle);
    let chol = middle.cholesky().ok_or(Error::HypothesisSingular)?;
    let w = chol
        .l_dirty()
        .solve_lower_triangular(&diff)
        .ok_or(Error::HypothesisSingular)?;
    Ok(w.norm_squared())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

impl FTest {
    pub(crate) fn from_statistic(f: f64, df1: usize, df2: usize) -> Result<Self> {
        let dist = FDistribution::new(df1 as f64, df2 as f64)
            .ok_or_else(|| Error::InvalidArgument(format!("degrees of freedom ({df1}, {df2})")))?;
        Ok(Self {
            f,
            df1,
            df2,
            p_value: dist.sf(f),
        })
    }
}

/// F statistic for `hyp` and its upper-tail p-value under `F(r, nu)`.
pub fn f_statistic(fit: &GlsFit, hyp: &LinearHypothesis) -> Result<FTest> {
    if fit.nu == 0 {
        return Err(Error::InsufficientDf { n: fit.n, p: fit.p });
    }
    let quad = hypothesis_quadform(&fit.beta_hat, &fit.b_matrix, hyp)?;
    let r = hyp.rank();
    let f = if quad == 0.0 {
        0.0
    } else if fit.sigma2_hat == 0.0 {
        f64::INFINITY
    } else {
        quad / (r as f64 * fit.sigma2_hat)
    };
    FTest::from_statistic(f, r, fit.nu)
}
