//! Synthetic random-intercept data with a binary regressor of interest, a
//! correlated quantitative covariate and one grouping factor.
//!
//! `y = b0 + b1 X1 + b2 X2 + u_Z + e` with `u ~ N(0, sigma_u2)` per level and
//! `e ~ N(0, sigma2)`. The prevalence of `X1 = 1` varies by level and falls
//! as the level's `u` rises, and `X2` is positively correlated with `X1`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::{Column, DatasetFrame, Factor};
use crate::error::{Error, Result};

// Independent per-column streams: adding a column never perturbs the others.
const STREAM_LEVELS: u64 = 1;
const STREAM_EFFECTS: u64 = 2;
const STREAM_X1: u64 = 3;
const STREAM_X2: u64 = 4;
const STREAM_NOISE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct X2Distribution {
    pub mean: f64,
    pub sd: f64,
    /// Target correlation with `X1`.
    pub corr_with_x1: f64,
}

impl Default for X2Distribution {
    fn default() -> Self {
        Self {
            mean: 0.0,
            sd: 1.0,
            corr_with_x1: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupAssignment {
    /// Slope of the level's logit prevalence of `X1 = 1` against its
    /// standardized random effect; positive values make high-`u` levels
    /// carry fewer ones.
    pub prevalence_spread: f64,
}

impl Default for GroupAssignment {
    fn default() -> Self {
        Self {
            prevalence_spread: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub p_group1: f64,
    pub beta: [f64; 3],
    pub sigma2: f64,
    pub sigma_u2: f64,
    pub n_levels: usize,
    pub x2: X2Distribution,
    pub group_assignment: GroupAssignment,
    pub seed: u64,
}

impl GenConfig {
    /// Regression coefficients and variances are always caller-supplied;
    /// the remaining knobs take their defaults.
    pub fn new(
        n: usize,
        n_levels: usize,
        beta: [f64; 3],
        sigma2: f64,
        sigma_u2: f64,
        seed: u64,
    ) -> Self {
        Self {
            n,
            p_group1: 0.313,
            beta,
            sigma2,
            sigma_u2,
            n_levels,
            x2: X2Distribution::default(),
            group_assignment: GroupAssignment::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_levels == 0 || self.n < self.n_levels {
            return bad(format!(
                "need n >= n_levels >= 1 (n = {}, n_levels = {})",
                self.n, self.n_levels
            ));
        }
        if !(0.0..=1.0).contains(&self.p_group1) {
            return bad(format!("p_group1 = {} outside [0, 1]", self.p_group1));
        }
        if !(self.sigma2 >= 0.0 && self.sigma_u2 >= 0.0)
            || !self.sigma2.is_finite()
            || !self.sigma_u2.is_finite()
        {
            return bad("variances must be finite and non-negative".into());
        }
        if !(self.x2.sd >= 0.0) || !(-1.0..=1.0).contains(&self.x2.corr_with_x1) {
            return bad("X2 needs sd >= 0 and correlation in [-1, 1]".into());
        }
        if self
            .beta
            .iter()
            .chain([&self.x2.mean, &self.group_assignment.prevalence_spread])
            .any(|v| !v.is_finite())
        {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn generate(config: &GenConfig) -> Result<DatasetFrame> {
    config.validate()?;
    let n = config.n;
    let levels = config.n_levels;

    // balanced level sizes, shuffled
    let mut codes: Vec<usize> = (0..n).map(|i| i % levels).collect();
    codes.shuffle(&mut stream(config.seed, STREAM_LEVELS));

    let sd_u = config.sigma_u2.sqrt();
    let std_effects: Vec<f64> = {
        let mut rng = stream(config.seed, STREAM_EFFECTS);
        (0..levels)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    };
    let effects: Vec<f64> = std_effects.iter().map(|z| z * sd_u).collect();

    let p = config.p_group1;
    let prevalence: Vec<f64> = if p == 0.0 || p == 1.0 {
        vec![p; levels]
    } else {
        let spread = if sd_u > 0.0 {
            config.group_assignment.prevalence_spread
        } else {
            0.0
        };
        std_effects
            .iter()
            .map(|z| sigmoid(logit(p) - spread * z))
            .collect()
    };
    let x1: Vec<f64> = {
        let mut rng = stream(config.seed, STREAM_X1);
        codes
            .iter()
            .map(|&c| {
                if rng.random::<f64>() < prevalence[c] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    };

    let x2: Vec<f64> = {
        let mut rng = stream(config.seed, STREAM_X2);
        let rho = config.x2.corr_with_x1;
        let x1_sd = (p * (1.0 - p)).sqrt();
        x1.iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let standardized = if x1_sd > 0.0 { (x - p) / x1_sd } else { 0.0 };
                config.x2.mean + config.x2.sd * (rho * standardized + (1.0 - rho * rho).sqrt() * z)
            })
            .collect()
    };

    let [b0, b1, b2] = config.beta;
    let sd_e = config.sigma2.sqrt();
    let y: Vec<f64> = {
        let mut rng = stream(config.seed, STREAM_NOISE);
        (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                b0 + b1 * x1[i] + b2 * x2[i] + effects[codes[i]] + sd_e * e
            })
            .collect()
    };

    let width = levels.to_string().len();
    let labels: Vec<String> = codes
        .iter()
        .map(|c| format!("G{:0width$}", c + 1))
        .collect();

    DatasetFrame::new(
        vec![
            ("Y".into(), Column::Numeric(y)),
            ("X1".into(), Column::Numeric(x1)),
            ("X2".into(), Column::Numeric(x2)),
            (
                "Z".into(),
                Column::Categorical(Factor::from_labels(&labels)?),
            ),
        ],
        "Y",
    )
}
