//! Cohen's f² and related effect sizes for linear mixed models with a
//! variance-components covariance `V = I + sum_i k_i Z_i Z_i^T`.
//!
//! The pieces compose as: [`design`] encodes a [`DatasetFrame`] into
//! `X = (1 : X1 : X2)` and grouping factors, [`varcomp`] estimates the
//! ratios `k_i` by REML, [`gls`] fits the model and tests hypotheses, and
//! [`effectsize`] turns fits into f², R², d and d*. [`analysis::analyze`]
//! runs the whole chain.

pub mod analysis;
pub mod datagen;
pub mod design;
pub mod distributions;
pub mod effectsize;
pub mod error;
pub mod gls;
pub mod io;
pub mod optimize;
pub mod varcomp;

pub use analysis::{
    analyze, curve, AnalysisConfig, CurveOutput, EffectSizeReport, RatioSource, VarianceSummary,
};
pub use datagen::{generate, GenConfig, GroupAssignment, X2Distribution};
pub use design::{
    build_v, encode_design, encode_reduced, Column, CovarianceStructure, DatasetFrame,
    EncodedDesign, Factor, GroupingFactor, ModelSpec,
};
pub use distributions::FDistribution;
pub use effectsize::{
    cohens_d, d_star, f2_curve, f2_exact, f2_operational, f2_via_r2, r2_edwards, CohensD,
    CurvePoint, Magnitude,
};
pub use error::{Error, ErrorKind, Result};
pub use gls::{f_statistic, gls_fit, ols_fit, FTest, GlsFit, LinearHypothesis};
pub use varcomp::{
    estimate_ratios, profile_criterion, EstimateOptions, Optimizer, RemlProblem, VarCompEstimate,
};
