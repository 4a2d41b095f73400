//! Effect sizes: Cohen's f² (known and estimated covariance), the
//! F-statistic based R², Cohen's d with Welch's t, and d*.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_v, CovarianceStructure, Factor};
use crate::error::{Error, Result};
use crate::gls::{gls_fit, hypothesis_quadform, GlsFit, LinearHypothesis};

/// Qualitative magnitude of an effect on Cohen's scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Magnitude {
    LessThanSmall,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    fn classify(value: f64, [small, medium, large]: [f64; 3]) -> Self {
        if value >= large {
            Magnitude::Large
        } else if value >= medium {
            Magnitude::Medium
        } else if value >= small {
            Magnitude::Small
        } else {
            Magnitude::LessThanSmall
        }
    }

    /// Thresholds 0.02 / 0.15 / 0.35, half-open intervals.
    pub fn for_f2(f2: f64) -> Self {
        Self::classify(f2, [0.02, 0.15, 0.35])
    }

    /// Thresholds 0.2 / 0.5 / 0.8 on `|d|`.
    pub fn for_d(d: f64) -> Self {
        Self::classify(d.abs(), [0.2, 0.5, 0.8])
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Magnitude::LessThanSmall => "less-than-small",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// f² under a known `V`: the block-1 F numerator over the residual quadratic
/// form, i.e. `F r / nu`.
pub fn f2_exact(fit: &GlsFit, block1: &LinearHypothesis) -> Result<f64> {
    let numerator = hypothesis_quadform(&fit.beta_hat, &fit.b_matrix, block1)?;
    if numerator == 0.0 {
        return Ok(0.0);
    }
    Ok(numerator / fit.residual_quadform)
}

/// f² from an estimated `Cov(beta_hat)`. The `1/nu` factor undoes the
/// `sigma^2` estimate embedded in `covhat`.
pub fn f2_operational(
    beta_hat: &DVector<f64>,
    covhat: &DMatrix<f64>,
    nu: usize,
    block1: &LinearHypothesis,
) -> Result<f64> {
    if nu == 0 {
        return Err(Error::InvalidArgument("nu must be positive".into()));
    }
    Ok(hypothesis_quadform(beta_hat, covhat, block1)? / nu as f64)
}

/// `R² = (r/nu) F / (1 + (r/nu) F)`.
pub fn r2_edwards(f: f64, r: usize, nu: usize) -> Result<f64> {
    if f.is_nan() || f < 0.0 || r == 0 || nu == 0 {
        return Err(Error::InvalidArgument(format!(
            "need F >= 0, r >= 1, nu >= 1 (got F = {f}, r = {r}, nu = {nu})"
        )));
    }
    if f.is_infinite() {
        return Ok(1.0);
    }
    let a = r as f64 / nu as f64 * f;
    Ok(a / (1.0 + a))
}

/// `(R²_AB - R²_A) / (1 - R²_AB)`. May be negative; the caller decides how
/// to flag that.
pub fn f2_via_r2(r2_ab: f64, r2_a: f64) -> Result<f64> {
    for r2 in [r2_ab, r2_a] {
        if !(0.0..1.0).contains(&r2) {
            return Err(Error::InvalidR2(r2));
        }
    }
    Ok((r2_ab - r2_a) / (1.0 - r2_ab))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohensD {
    /// `(mean_1 - mean_0) / s_pooled`.
    pub d: f64,
    pub welch_t: f64,
    pub welch_df: f64,
    pub n0: usize,
    pub n1: usize,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Cohen's d with pooled SD, plus Welch's t for the same contrast. `group`
/// marks membership of group 1.
pub fn cohens_d(y: &[f64], group: &[bool]) -> Result<CohensD> {
    if y.len() != group.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses, {} group labels",
            y.len(),
            group.len()
        )));
    }
    let (g1, g0): (Vec<(f64, bool)>, Vec<(f64, bool)>) = y
        .iter()
        .copied()
        .zip(group.iter().copied())
        .partition(|(_, g)| *g);
    let g0: Vec<f64> = g0.into_iter().map(|(v, _)| v).collect();
    let g1: Vec<f64> = g1.into_iter().map(|(v, _)| v).collect();
    if g0.len() < 2 || g1.len() < 2 {
        return Err(Error::InsufficientGroupData(format!(
            "groups have {} and {} observations; each needs at least 2",
            g0.len(),
            g1.len()
        )));
    }
    let (n0, n1) = (g0.len() as f64, g1.len() as f64);
    let (m0, v0) = mean_var(&g0);
    let (m1, v1) = mean_var(&g1);
    let diff = m1 - m0;

    let pooled = (((n0 - 1.0) * v0 + (n1 - 1.0) * v1) / (n0 + n1 - 2.0)).sqrt();
    let d = if diff == 0.0 { 0.0 } else { diff / pooled };

    let se0 = v0 / n0;
    let se1 = v1 / n1;
    let se = (se0 + se1).sqrt();
    let welch_t = if diff == 0.0 { 0.0 } else { diff / se };
    let welch_df = (se0 + se1).powi(2) / (se0 * se0 / (n0 - 1.0) + se1 * se1 / (n1 - 1.0));

    Ok(CohensD {
        d,
        welch_t,
        welch_df,
        n0: g0.len(),
        n1: g1.len(),
    })
}

/// `d* = sqrt(f² (n - 2 - w) gamma)` where `sigma^2 gamma` is the variance
/// of the binary regressor's coefficient and `w` counts the other regressors.
pub fn d_star(f2: f64, n: usize, w: usize, gamma: f64) -> Result<f64> {
    if !(f2 >= 0.0) || !(gamma > 0.0) || n <= 2 + w {
        return Err(Error::InvalidArgument(format!(
            "d* needs f2 >= 0, gamma > 0, n - 2 - w > 0 (got f2 = {f2}, n = {n}, w = {w}, gamma = {gamma})"
        )));
    }
    Ok((f2 * (n - 2 - w) as f64 * gamma).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: f64,
    pub f2: f64,
}

/// f² as a function of the single variance ratio `k`, with
/// `V = k Z Z^T + I` at each grid point. Output is sorted by `k`.
pub fn f2_curve(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    group: &Factor,
    block1: &LinearHypothesis,
    k_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument("k grid is empty".into()));
    }
    let mut grid = k_grid.to_vec();
    if let Some(k) = grid.iter().find(|k| !k.is_finite() || **k < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid value {k} must be >= 0"
        )));
    }
    grid.sort_by(f64::total_cmp);
    grid.par_iter()
        .map(|&k| {
            let cov = CovarianceStructure::single(k, group.clone())?;
            let v = build_v(&cov, x.nrows())?;
            let fit = gls_fit(y, x, &v)?;
            Ok(CurvePoint {
                k,
                f2: f2_exact(&fit, block1)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gls::{f_statistic, ols_fit};

    fn toy() -> (DVector<f64>, DMatrix<f64>) {
        let y = DVector::from_vec(vec![0.0, 1.0, 1.0, 2.0]);
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        (y, x)
    }

    #[test]
    fn four_point_f2_is_one() {
        let (y, x) = toy();
        let fit = ols_fit(&y, &x).unwrap();
        let h = LinearHypothesis::zero_block(2, 1..2).unwrap();
        let f2 = f2_exact(&fit, &h).unwrap();
        assert!((f2 - 1.0).abs() < 1e-13);
        let t = f_statistic(&fit, &h).unwrap();
        assert!((f2 - t.f * 1.0 / 2.0).abs() < 1e-13);
    }

    #[test]
    fn zero_block_coefficient_gives_zero_f2() {
        let (y, x) = toy();
        let mut fit = ols_fit(&y, &x).unwrap();
        fit.beta_hat[1] = 0.0;
        assert_eq!(
            f2_exact(&fit, &LinearHypothesis::zero_block(2, 1..2).unwrap()).unwrap(),
            0.0
        );
    }

    #[test]
    fn operational_with_sigma2_b_reduces_to_exact() {
        let y = DVector::from_vec(vec![0.3, 1.1, 0.9, 2.4, 1.7, 0.2]);
        let x = DMatrix::from_row_slice(
            6,
            3,
            &[
                1.0, 0.0, 0.5, 1.0, 0.0, 1.5, 1.0, 1.0, -0.3, 1.0, 1.0, 2.0, 1.0, 1.0, 0.1, 1.0,
                0.0, -1.0,
            ],
        );
        let g = Factor::from_codes(vec![0, 0, 1, 1, 2, 2], 3).unwrap();
        let v = build_v(&CovarianceStructure::single(0.7, g).unwrap(), 6).unwrap();
        let fit = gls_fit(&y, &x, &v).unwrap();
        let h = LinearHypothesis::zero_block(3, 1..2).unwrap();
        let exact = f2_exact(&fit, &h).unwrap();
        let op = f2_operational(&fit.beta_hat, &fit.covariance(), fit.nu, &h).unwrap();
        assert!((exact - op).abs() <= 1e-12 * exact);
        let scaled = f2_operational(&fit.beta_hat, &(fit.covariance() * 4.0), fit.nu, &h).unwrap();
        assert!((scaled - op / 4.0).abs() <= 1e-12 * op);
    }

    #[test]
    fn edwards_r2_values() {
        assert_eq!(r2_edwards(1.0, 1, 1).unwrap(), 0.5);
        assert_eq!(r2_edwards(0.0, 2, 10).unwrap(), 0.0);
        assert!(r2_edwards(-1.0, 1, 1).is_err());
        let mut prev = -1.0;
        for i in 0..200 {
            let r2 = r2_edwards(i as f64 * 0.37, 2, 997).unwrap();
            assert!(r2 > prev && r2 < 1.0);
            prev = r2;
        }
    }

    #[test]
    fn f2_from_r2_values() {
        assert_eq!(f2_via_r2(0.5, 0.25).unwrap(), 0.5);
        assert_eq!(f2_via_r2(0.3, 0.3).unwrap(), 0.0);
        // the published inputs are rounded to 7 digits; propagating +-5e-8
        // through the ratio bounds the error by ~1.3e-7
        let v = f2_via_r2(0.1539263, 0.07418754).unwrap();
        assert!((v - 0.09424569).abs() < 1.3e-7);
        assert!(f2_via_r2(0.2, 0.3).unwrap() < 0.0);
        assert!(matches!(f2_via_r2(1.0, 0.3), Err(Error::InvalidR2(_))));
    }

    #[test]
    fn cohens_d_by_hand() {
        let r = cohens_d(&[0.0, 1.0, 1.0, 2.0], &[false, false, true, true]).unwrap();
        assert!((r.d - 2f64.sqrt()).abs() < 1e-14);
        // Welch: diff 1, se sqrt(0.5/2 + 0.5/2) = sqrt(0.5)
        assert!((r.welch_t - 2f64.sqrt()).abs() < 1e-14);
        assert!((r.welch_df - 2.0).abs() < 1e-12);

        let same = cohens_d(&[1.0, 2.0, 2.0, 1.0], &[false, false, true, true]).unwrap();
        assert_eq!(same.d, 0.0);

        assert!(matches!(
            cohens_d(&[1.0, 2.0, 3.0], &[false, false, true]),
            Err(Error::InsufficientGroupData(_))
        ));
    }

    #[test]
    fn d_star_reproduces_fixed_effects_example() {
        let d = d_star(0.0017767, 1000, 1, 0.0065821).unwrap();
        assert_eq!((d * 1000.0).round() / 1000.0, 0.108);
        assert_eq!(d_star(0.0, 50, 1, 0.1).unwrap(), 0.0);
        assert!(d_star(0.1, 3, 1, 0.1).is_err());
        assert!(d_star(0.1, 30, 1, 0.0).is_err());
    }

    #[test]
    fn d_star_without_covariates_is_pooled_d() {
        let (y, x) = toy();
        let fit = ols_fit(&y, &x).unwrap();
        let f2 = f2_exact(&fit, &LinearHypothesis::zero_block(2, 1..2).unwrap()).unwrap();
        let ds = d_star(f2, 4, 0, fit.b_matrix[(1, 1)]).unwrap();
        let d = cohens_d(y.as_slice(), &[false, false, true, true])
            .unwrap()
            .d;
        assert!((ds - d.abs()).abs() < 1e-13);
    }

    #[test]
    fn magnitude_thresholds_are_half_open() {
        assert_eq!(Magnitude::for_f2(0.0199999), Magnitude::LessThanSmall);
        assert_eq!(Magnitude::for_f2(0.02), Magnitude::Small);
        assert_eq!(Magnitude::for_f2(0.15), Magnitude::Medium);
        assert_eq!(Magnitude::for_f2(0.35), Magnitude::Large);
        assert_eq!(Magnitude::for_f2(0.0946626), Magnitude::Small);
        assert_eq!(Magnitude::for_d(-0.4122), Magnitude::Small);
        assert_eq!(Magnitude::for_d(0.5), Magnitude::Medium);
        assert_eq!(Magnitude::for_d(0.8), Magnitude::Large);
        assert_eq!(Magnitude::for_d(0.108), Magnitude::LessThanSmall);
        assert_eq!(Magnitude::Medium.to_string(), "medium");
    }

    #[test]
    fn curve_matches_pointwise_fits() {
        let y = DVector::from_vec(vec![1.0, 2.5, 0.3, 4.1, 2.2, 3.3, 0.9, 1.8]);
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { (i % 2) as f64 });
        let g = Factor::from_codes(vec![0, 0, 1, 1, 1, 2, 2, 2], 3).unwrap();
        let h = LinearHypothesis::zero_block(2, 1..2).unwrap();
        let curve = f2_curve(&y, &x, &g, &h, &[1.0, 0.0, 0.5]).unwrap();
        assert_eq!(
            curve.iter().map(|c| c.k).collect::<Vec<_>>(),
            vec![0.0, 0.5, 1.0]
        );
        for point in &curve {
            let v = build_v(&CovarianceStructure::single(point.k, g.clone()).unwrap(), 8).unwrap();
            let fit = gls_fit(&y, &x, &v).unwrap();
            assert_eq!(point.f2, f2_exact(&fit, &h).unwrap());
        }
        let fixed = f2_exact(&ols_fit(&y, &x).unwrap(), &h).unwrap();
        assert!((curve[0].f2 - fixed).abs() < 1e-13);
        assert!(f2_curve(&y, &x, &g, &h, &[]).is_err());
    }
}
