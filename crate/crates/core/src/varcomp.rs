//! REML estimation of the variance ratios `k_i = sigma_i^2 / sigma^2`.
//!
//! The criterion is `-2` times the restricted log-likelihood with `beta` and
//! `sigma^2` profiled out, up to an additive constant:
//!
//! ```text
//! ln det V + ln det(X^T V^-1 X) + nu ln((y - X b)^T V^-1 (y - X b))
//! ```
//!
//! With `V = I + Z D Z^T` and `D = diag(k_i I)` the criterion only needs
//! `M = I_q + D^1/2 Z^T Z D^1/2`: `det V = det M` and
//! `W^T V^-1 W = W^T W - (D^1/2 Z^T W)^T M^-1 (D^1/2 Z^T W)` for `W = (X : y)`.
//! All `n`-sized cross products are formed once, so each evaluation costs
//! `O(q^3 + p^3)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Factor;
use crate::error::{Error, Result};
use crate::gls::symmetrize;
use crate::optimize::{brent, nelder_mead, SimplexOptions};

/// Ratios below this are reported as exactly zero.
const BOUNDARY: f64 = 1e-10;
/// Upper end of the scalar search in `ln(1 + k)`, i.e. `k <= 1e6`.
const T_MAX: f64 = 13.815_511_557_963_774;
const SCAN_POINTS: usize = 64;
const MULTISTART: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCompEstimate {
    pub ratios: Vec<f64>,
    pub sigma2_hat: f64,
    pub component_variances: Vec<f64>,
    pub criterion_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    /// Scalar search for one grouping factor, simplex otherwise.
    #[default]
    Auto,
    Scalar,
    Simplex,
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub optimizer: Optimizer,
    /// Absolute tolerance on `ln(1 + k)` for the scalar search.
    pub scalar_xtol: f64,
    pub scalar_max_iter: usize,
    pub simplex: SimplexOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Auto,
            scalar_xtol: 1e-8,
            scalar_max_iter: 200,
            simplex: SimplexOptions {
                step: 0.5,
                ftol: 1e-10,
                xtol: 1e-9,
                max_iter: 500,
            },
        }
    }
}

/// Everything the criterion needs, precomputed from `(y, X, Z_1..Z_m)`.
#[derive(Debug, Clone)]
pub struct RemlProblem {
    n: usize,
    p: usize,
    /// Level offsets of each factor within the stacked `Z`.
    offsets: Vec<usize>,
    /// `W^T W`, `W = (X : y)` after centering.
    wtw: DMatrix<f64>,
    /// `Z^T W`.
    ztw: DMatrix<f64>,
    /// `Z^T Z`.
    ztz: DMatrix<f64>,
}

struct Evaluation {
    criterion: f64,
    quadform: f64,
}

impl RemlProblem {
    pub fn new(y: &DVector<f64>, x: &DMatrix<f64>, groups: &[Factor]) -> Result<Self> {
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
        if let Some(g) = groups.iter().find(|g| g.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "grouping factor has {} rows, expected {n}",
                g.len()
            )));
        }

        // W = (X : y). If X carries an intercept column, centre the other
        // columns: a unit-triangular change of basis that leaves the
        // criterion unchanged but keeps the cross products well scaled.
        let mut w = DMatrix::zeros(n, p + 1);
        w.columns_mut(0, p).copy_from(x);
        w.column_mut(p).copy_from(y);
        let has_intercept = p > 0 && x.column(0).iter().all(|&v| v == 1.0);
        if has_intercept {
            for j in 1..=p {
                let mean = w.column(j).mean();
                w.column_mut(j).add_scalar_mut(-mean);
            }
        }

        let mut offsets = Vec::with_capacity(groups.len() + 1);
        let mut q = 0;
        for g in groups {
            offsets.push(q);
            q += g.n_levels();
        }
        offsets.push(q);

        let mut ztw = DMatrix::zeros(q, p + 1);
        let mut ztz = DMatrix::zeros(q, q);
        for row in 0..n {
            for (gi, g) in groups.iter().enumerate() {
                let a = offsets[gi] + g.codes()[row];
                for j in 0..=p {
                    ztw[(a, j)] += w[(row, j)];
                }
                for (gj, h) in groups.iter().enumerate() {
                    ztz[(a, offsets[gj] + h.codes()[row])] += 1.0;
                }
            }
        }

        let mut wtw = w.tr_mul(&w);
        symmetrize(&mut wtw);

        let problem = Self {
            n,
            p,
            offsets,
            wtw,
            ztw,
            ztz,
        };
        let total_ss = problem.wtw[(p, p)];
        let at_zero = problem.evaluate(&vec![0.0; groups.len()])?;
        if at_zero.quadform <= 1e-24 * total_ss || total_ss == 0.0 {
            return Err(Error::DegenerateResponse);
        }
        Ok(problem)
    }

    pub fn n_factors(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nu(&self) -> usize {
        self.n - self.p
    }

    fn evaluate(&self, ratios: &[f64]) -> Result<Evaluation> {
        if ratios.len() != self.n_factors() {
            return Err(Error::DimensionMismatch(format!(
                "{} ratios for {} grouping factors",
                ratios.len(),
                self.n_factors()
            )));
        }
        if let Some(k) = ratios.iter().find(|k| !k.is_finite() || **k < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance ratio {k} must be finite and non-negative"
            )));
        }
        let q = self.ztz.nrows();
        let p = self.p;
        let mut scale = DVector::zeros(q);
        for (i, &k) in ratios.iter().enumerate() {
            scale
                .rows_mut(self.offsets[i], self.offsets[i + 1] - self.offsets[i])
                .fill(k.sqrt());
        }

        let mut m = DMatrix::identity(q, q);
        for a in 0..q {
            for b in 0..q {
                m[(a, b)] += scale[a] * self.ztz[(a, b)] * scale[b];
            }
        }
        let m_chol = m
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("I + D^1/2 Z^T Z D^1/2 not PD".into()))?;
        let logdet_v: f64 = 2.0
            * m_chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d: &f64| d.ln())
                .sum::<f64>();

        let mut a = self.ztw.clone();
        for (r, mut row) in a.row_iter_mut().enumerate() {
            row *= scale[r];
        }
        let g = m_chol
            .l_dirty()
            .solve_lower_triangular(&a)
            .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
        let mut s = &self.wtw - g.tr_mul(&g);
        symmetrize(&mut s);

        let s_chol = s.cholesky().ok_or(Error::DegenerateResponse)?;
        let l = s_chol.l_dirty();
        let logdet_xvx: f64 = 2.0 * (0..p).map(|j| l[(j, j)].ln()).sum::<f64>();
        let quadform = l[(p, p)] * l[(p, p)];
        let criterion = logdet_v + logdet_xvx + self.nu() as f64 * quadform.ln();
        if !criterion.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "criterion not finite at ratios {ratios:?}"
            )));
        }
        Ok(Evaluation {
            criterion,
            quadform,
        })
    }

    /// `-2` restricted log-likelihood (profiled, up to a constant) at `ratios`.
    pub fn criterion(&self, ratios: &[f64]) -> Result<f64> {
        self.evaluate(ratios).map(|e| e.criterion)
    }

    /// `(y - X b)^T V^-1 (y - X b)` at `ratios`.
    pub fn residual_quadform(&self, ratios: &[f64]) -> Result<f64> {
        self.evaluate(ratios).map(|e| e.quadform)
    }

    fn finish(
        &self,
        ratios: Vec<f64>,
        converged: bool,
        iterations: usize,
    ) -> Result<VarCompEstimate> {
        let ratios: Vec<f64> = ratios
            .into_iter()
            .map(|k| if k < BOUNDARY { 0.0 } else { k })
            .collect();
        let eval = self.evaluate(&ratios)?;
        let sigma2_hat = eval.quadform / self.nu() as f64;
        Ok(VarCompEstimate {
            component_variances: ratios.iter().map(|k| k * sigma2_hat).collect(),
            ratios,
            sigma2_hat,
            criterion_value: eval.criterion,
            converged,
            iterations,
        })
    }

    fn estimate_scalar(&self, opts: &EstimateOptions) -> Result<VarCompEstimate> {
        let crit = |t: f64| self.criterion(&[t.exp_m1()]);
        let grid: Vec<f64> = (0..SCAN_POINTS)
            .map(|i| T_MAX * i as f64 / (SCAN_POINTS - 1) as f64)
            .collect();
        let values = grid.iter().map(|&t| crit(t)).collect::<Result<Vec<_>>>()?;
        let best = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(SCAN_POINTS - 1)];

        let min = brent(crit, lo, hi, opts.scalar_xtol, opts.scalar_max_iter)?;
        let (mut t, mut ft) = (min.x, min.fx);
        if lo == 0.0 {
            let f0 = values[0];
            if f0 <= ft {
                t = 0.0;
                ft = f0;
            }
        }
        if !min.converged {
            return Err(Error::ConvergenceFailure {
                best: vec![t.exp_m1()],
                criterion: ft,
                iterations: min.iterations,
            });
        }
        self.finish(vec![t.exp_m1()], true, min.iterations + SCAN_POINTS)
    }

    fn estimate_simplex(&self, opts: &EstimateOptions) -> Result<VarCompEstimate> {
        let m = self.n_factors();
        let to_ratios = |s: &[f64]| -> Vec<f64> { s.iter().map(|v| v.abs().exp_m1()).collect() };
        let objective = |s: &[f64]| self.criterion(&to_ratios(s));

        let starts: Vec<Vec<f64>> = (0..MULTISTART.len().pow(m as u32))
            .map(|mut idx| {
                (0..m)
                    .map(|_| {
                        let k = MULTISTART[idx % MULTISTART.len()];
                        idx /= MULTISTART.len();
                        k.ln_1p()
                    })
                    .collect()
            })
            .collect();

        let runs = starts
            .par_iter()
            .map(|s0| {
                let first = nelder_mead(objective, s0, opts.simplex)?;
                // restart at the converged point to guard against a collapsed simplex
                let second = nelder_mead(
                    objective,
                    &first.x,
                    SimplexOptions {
                        step: opts.simplex.step * 0.1,
                        ..opts.simplex
                    },
                )?;
                let iterations = first.iterations + second.iterations;
                let better = if second.fx <= first.fx { second } else { first };
                Ok((
                    to_ratios(&better.x),
                    better.fx,
                    better.converged,
                    iterations,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let (ratios, fx, converged, iterations) = runs
            .into_iter()
            .min_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then_with(|| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
            })
            .expect("at least one start");
        if !converged {
            return Err(Error::ConvergenceFailure {
                best: ratios,
                criterion: fx,
                iterations,
            });
        }
        self.finish(ratios, true, iterations)
    }

    pub fn estimate(&self, opts: &EstimateOptions) -> Result<VarCompEstimate> {
        if self.n_factors() == 0 {
            return Err(Error::InvalidArgument(
                "variance ratio estimation needs at least one grouping factor".into(),
            ));
        }
        match (opts.optimizer, self.n_factors()) {
            (Optimizer::Auto, 1) | (Optimizer::Scalar, 1) => self.estimate_scalar(opts),
            (Optimizer::Scalar, m) => Err(Error::InvalidArgument(format!(
                "scalar search needs exactly one grouping factor, got {m}"
            ))),
            _ => self.estimate_simplex(opts),
        }
    }
}

pub fn profile_criterion(
    ratios: &[f64],
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    groups: &[Factor],
) -> Result<f64> {
    RemlProblem::new(y, x, groups)?.criterion(ratios)
}

/// REML estimates of the variance ratios, `sigma^2` and the component
/// variances `sigma_i^2 = k_i sigma^2`.
pub fn estimate_ratios(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    groups: &[Factor],
    opts: &EstimateOptions,
) -> Result<VarCompEstimate> {
    RemlProblem::new(y, x, groups)?.estimate(opts)
}
