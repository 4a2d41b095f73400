//! End-to-end effect-size analysis of one model: encode, estimate the
//! variance ratios (unless given), fit, and compute every effect size for
//! block 1 given block 2 and the random intercepts.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::design::{
    build_v, encode_design, encode_reduced, CovarianceStructure, DatasetFrame, EncodedDesign,
    ModelSpec,
};
use crate::effectsize::{
    cohens_d, d_star, f2_curve, f2_exact, f2_operational, f2_via_r2, r2_edwards, CohensD,
    CurvePoint, Magnitude,
};
use crate::error::{Error, Result};
use crate::gls::{f_statistic, gls_fit, ols_fit, FTest, GlsFit, LinearHypothesis};
use crate::varcomp::{EstimateOptions, RemlProblem};

#[derive(Debug, Clone, Default)]
pub struct AnalysisConfig {
    pub spec: ModelSpec,
    /// Known variance ratios, one per random factor. Skips estimation and
    /// is used for the reduced model too.
    pub k_override: Option<Vec<f64>>,
    pub estimate: EstimateOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioSource {
    /// No random factors; `V = I`.
    None,
    Estimated,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub source: RatioSource,
    pub ratios: Vec<f64>,
    pub sigma2_hat: f64,
    pub component_variances: Vec<f64>,
    pub criterion_value: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeReport {
    pub n: usize,
    pub p: usize,
    pub nu: usize,
    pub coefficient_names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub block1: Vec<String>,
    pub variance: VarianceSummary,
    /// Only present when the covariance was supplied rather than estimated.
    pub f2_exact: Option<f64>,
    pub f2_operational: f64,
    pub f2_magnitude: Magnitude,
    pub block1_test: FTest,
    pub full_model_test: FTest,
    pub r2_ab: f64,
    pub reduced_variance: VarianceSummary,
    pub reduced_model_test: Option<FTest>,
    pub r2_a: f64,
    pub f2_via_r2: f64,
    pub f2_via_r2_negative: bool,
    pub cohens_d: Option<CohensD>,
    pub d_magnitude: Option<Magnitude>,
    pub gamma: Option<f64>,
    pub d_star: Option<f64>,
    pub d_star_magnitude: Option<Magnitude>,
    pub notes: Vec<String>,
}

struct ModelFit {
    fit: GlsFit,
    variance: VarianceSummary,
}

fn fit_model(design: &EncodedDesign, config: &AnalysisConfig) -> Result<ModelFit> {
    let factors = design.factors();
    let (ratios, mut variance) = if factors.is_empty() {
        if config.k_override.as_ref().is_some_and(|k| !k.is_empty()) {
            return Err(Error::InvalidSpec(
                "variance ratios given but the model has no random factors".into(),
            ));
        }
        (
            Vec::new(),
            VarianceSummary {
                source: RatioSource::None,
                ratios: Vec::new(),
                sigma2_hat: f64::NAN,
                component_variances: Vec::new(),
                criterion_value: None,
                converged: None,
                iterations: None,
            },
        )
    } else if let Some(k) = &config.k_override {
        if k.len() != factors.len() {
            return Err(Error::InvalidSpec(format!(
                "{} variance ratios given for {} random factors",
                k.len(),
                factors.len()
            )));
        }
        (
            k.clone(),
            VarianceSummary {
                source: RatioSource::Override,
                ratios: k.clone(),
                sigma2_hat: f64::NAN,
                component_variances: Vec::new(),
                criterion_value: None,
                converged: None,
                iterations: None,
            },
        )
    } else {
        let est = RemlProblem::new(&design.y, &design.x, &factors)?.estimate(&config.estimate)?;
        (
            est.ratios.clone(),
            VarianceSummary {
                source: RatioSource::Estimated,
                ratios: est.ratios,
                sigma2_hat: est.sigma2_hat,
                component_variances: est.component_variances,
                criterion_value: Some(est.criterion_value),
                converged: Some(est.converged),
                iterations: Some(est.iterations),
            },
        )
    };

    let fit = if ratios.iter().all(|&k| k == 0.0) {
        ols_fit(&design.y, &design.x)?
    } else {
        let cov = CovarianceStructure::new(ratios.clone(), factors)?;
        gls_fit(&design.y, &design.x, &build_v(&cov, design.n())?)?
    };
    // report the fit's own sigma^2 so that sigma2_hat * B is exactly the
    // covariance the effect sizes use
    variance.sigma2_hat = fit.sigma2_hat;
    variance.component_variances = ratios.iter().map(|k| k * fit.sigma2_hat).collect();
    Ok(ModelFit { fit, variance })
}

/// F test of all slopes against zero, computed from the estimated
/// covariance `sigma2_hat B`.
fn slopes_test(fit: &GlsFit) -> Result<Option<FTest>> {
    if fit.p < 2 {
        return Ok(None);
    }
    f_statistic(fit, &LinearHypothesis::all_slopes(fit.p)?).map(Some)
}

pub fn analyze(frame: &DatasetFrame, config: &AnalysisConfig) -> Result<EffectSizeReport> {
    let design = encode_design(frame, &config.spec)?;
    let full = fit_model(&design, config)?;
    let fit = &full.fit;
    let block1 = LinearHypothesis::zero_block(fit.p, design.block1.clone())?;

    let f2_op = f2_operational(&fit.beta_hat, &fit.covariance(), fit.nu, &block1)?;
    let f2_known = match full.variance.source {
        RatioSource::Estimated => None,
        _ => Some(f2_exact(fit, &block1)?),
    };
    let block1_test = f_statistic(fit, &block1)?;
    let full_model_test = slopes_test(fit)?.expect("block 1 is non-empty");
    let r2_ab = r2_edwards(full_model_test.f, full_model_test.df1, full_model_test.df2)?;

    let reduced_design = encode_reduced(frame, &config.spec)?;
    let reduced = fit_model(&reduced_design, config)?;
    let reduced_model_test = slopes_test(&reduced.fit)?;
    let r2_a = match &reduced_model_test {
        Some(t) => r2_edwards(t.f, t.df1, t.df2)?,
        None => 0.0,
    };
    let f2_r2 = f2_via_r2(r2_ab, r2_a)?;

    let mut notes = Vec::new();
    if f2_r2 < 0.0 {
        notes.push("f2 via R² is negative: the reduced model has the larger R²".to_owned());
    }

    let (mut d, mut gamma, mut dstar) = (None, None, None);
    match design.binary_block1_column() {
        Some(j) => {
            let group: Vec<bool> = design.x.column(j).iter().map(|&v| v == 1.0).collect();
            d = Some(cohens_d(design.y.as_slice(), &group)?);
            let g = fit.b_matrix[(j, j)];
            let w = fit.p - 2;
            gamma = Some(g);
            dstar = Some(d_star(f2_op, fit.n, w, g)?);
        }
        None => {
            notes.push("Cohen's d and d* omitted: block 1 is not a single binary column".to_owned())
        }
    }

    Ok(EffectSizeReport {
        n: fit.n,
        p: fit.p,
        nu: fit.nu,
        coefficient_names: design.column_names.clone(),
        beta_hat: fit.beta_hat.iter().copied().collect(),
        block1: config.spec.block1.clone(),
        variance: full.variance,
        f2_exact: f2_known,
        f2_operational: f2_op,
        f2_magnitude: Magnitude::for_f2(f2_op),
        block1_test,
        full_model_test,
        r2_ab,
        reduced_variance: reduced.variance,
        reduced_model_test,
        r2_a,
        f2_via_r2: f2_r2,
        f2_via_r2_negative: f2_r2 < 0.0,
        d_magnitude: d.map(|d| Magnitude::for_d(d.d)),
        cohens_d: d,
        gamma,
        d_star: dstar,
        d_star_magnitude: dstar.map(Magnitude::for_d),
        notes,
    })
}

/// Design matrix, response and block-1 hypothesis for a frame, as used by
/// [`analyze`]. Exposed for curve evaluation and cross-checks.
pub fn prepare(
    frame: &DatasetFrame,
    spec: &ModelSpec,
) -> Result<(EncodedDesign, LinearHypothesis)> {
    let design = encode_design(frame, spec)?;
    let h = LinearHypothesis::zero_block(design.p(), design.block1.clone())?;
    Ok((design, h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveOutput {
    pub points: Vec<CurvePoint>,
    /// `(k_hat, f2(k_hat))` when the ratio was estimated rather than given.
    pub estimated: Option<CurvePoint>,
}

/// f² over `k_grid` for a model with exactly one random factor. Unless
/// `k_override` is set, the REML estimate is evaluated as an extra point.
pub fn curve(frame: &DatasetFrame, config: &AnalysisConfig, k_grid: &[f64]) -> Result<CurveOutput> {
    let (design, block1) = prepare(frame, &config.spec)?;
    let factors = design.factors();
    if factors.len() != 1 {
        return Err(Error::InvalidSpec(format!(
            "the f2 curve needs exactly one random factor, got {}",
            factors.len()
        )));
    }
    let points = f2_curve(&design.y, &design.x, &factors[0], &block1, k_grid)?;
    let estimated = match &config.k_override {
        Some(_) => None,
        None => {
            let est =
                RemlProblem::new(&design.y, &design.x, &factors)?.estimate(&config.estimate)?;
            f2_curve(&design.y, &design.x, &factors[0], &block1, &est.ratios)?
                .into_iter()
                .next()
        }
    };
    Ok(CurveOutput { points, estimated })
}

/// Formats `x` with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", digits.saturating_sub(1), x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may have added a digit (e.g. 9.9999 -> 10.000)
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && rounded.abs().log10().floor() as i32 != exp {
        let decimals = decimals.saturating_sub(1);
        return format!("{x:.decimals$}");
    }
    s
}

fn write_test(out: &mut String, label: &str, t: &FTest) -> fmt::Result {
    writeln!(
        out,
        "{label:<28}F = {}  df = ({}, {})  p = {}",
        format_sig(t.f, 7),
        t.df1,
        t.df2,
        format_sig(t.p_value, 7)
    )
}

impl EffectSizeReport {
    /// Plain-text rendering with 7 significant digits.
    pub fn to_text(&self) -> String {
        let s = |x: f64| format_sig(x, 7);
        let mut out = String::new();
        let _ = (|| -> fmt::Result {
            writeln!(
                out,
                "Effect size of {} (n = {}, p = {}, nu = {})",
                self.block1.join(", "),
                self.n,
                self.p,
                self.nu
            )?;
            writeln!(out)?;
            writeln!(
                out,
                "Variance components ({})",
                serde_label(&self.variance.source)
            )?;
            for (i, k) in self.variance.ratios.iter().enumerate() {
                writeln!(
                    out,
                    "  k[{i}] = {}  sigma_u2[{i}] = {}",
                    s(*k),
                    s(self.variance.component_variances[i])
                )?;
            }
            writeln!(out, "  sigma2_hat = {}", s(self.variance.sigma2_hat))?;
            writeln!(out)?;
            writeln!(out, "Fixed effects")?;
            for (name, b) in self.coefficient_names.iter().zip(&self.beta_hat) {
                writeln!(out, "  {name:<24}{}", s(*b))?;
            }
            writeln!(out)?;
            if let Some(f2) = self.f2_exact {
                writeln!(out, "{:<28}{}", "f2 (known V)", s(f2))?;
            }
            writeln!(
                out,
                "{:<28}{}  [{}]",
                "f2 (operational)",
                s(self.f2_operational),
                self.f2_magnitude
            )?;
            write_test(&mut out, "block 1 test", &self.block1_test)?;
            write_test(&mut out, "full model test", &self.full_model_test)?;
            if let Some(t) = &self.reduced_model_test {
                write_test(&mut out, "reduced model test", t)?;
            }
            writeln!(out, "{:<28}{}", "R2_AB", s(self.r2_ab))?;
            writeln!(out, "{:<28}{}", "R2_A", s(self.r2_a))?;
            writeln!(out, "{:<28}{}", "f2 via R2", s(self.f2_via_r2))?;
            if let Some(d) = &self.cohens_d {
                writeln!(
                    out,
                    "{:<28}{}  [{}]",
                    "Cohen's d",
                    s(d.d),
                    Magnitude::for_d(d.d)
                )?;
                writeln!(
                    out,
                    "{:<28}{}  df = {}",
                    "Welch t",
                    s(d.welch_t),
                    s(d.welch_df)
                )?;
            }
            if let (Some(ds), Some(g)) = (self.d_star, self.gamma) {
                writeln!(out, "{:<28}{}  [{}]", "d*", s(ds), Magnitude::for_d(ds))?;
                writeln!(out, "{:<28}{}", "gamma", s(g))?;
            }
            for note in &self.notes {
                writeln!(out, "note: {note}")?;
            }
            Ok(())
        })();
        out
    }
}

fn serde_label(source: &RatioSource) -> &'static str {
    match source {
        RatioSource::None => "none",
        RatioSource::Estimated => "estimated",
        RatioSource::Override => "override",
    }
}
