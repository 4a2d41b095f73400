//! Model data, design encoding and construction of the covariance matrix `V`.
//!
//! The fixed-effects design is always partitioned as `X = (1 : X1 : X2)` where
//! `X1` holds the regressors whose effect is being sized and `X2` the
//! conditioning regressors. Random effects are random intercepts: each
//! grouping factor contributes an indicator matrix `Z_i` with exactly one 1
//! per row, and `V = I + sum_i k_i Z_i Z_i^T`.

use std::collections::{BTreeSet, HashSet};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A categorical variable: sorted level labels plus one level code per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    levels: Vec<String>,
    codes: Vec<usize>,
}

impl Factor {
    /// Levels are ordered lexicographically by label; the first is the
    /// treatment-coding reference.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidFrame("categorical column is empty".into()));
        }
        let levels: Vec<String> = labels
            .iter()
            .map(|s| s.as_ref().to_owned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = labels
            .iter()
            .map(|s| {
                levels
                    .binary_search_by(|l| l.as_str().cmp(s.as_ref()))
                    .expect("label collected above")
            })
            .collect();
        Ok(Self { levels, codes })
    }

    /// Builds a factor from integer codes `0..n_levels`; labels are the
    /// zero-padded code numbers so that lexicographic and numeric order agree.
    pub fn from_codes(codes: Vec<usize>, n_levels: usize) -> Result<Self> {
        if codes.iter().any(|&c| c >= n_levels) {
            return Err(Error::InvalidArgument(format!(
                "factor code out of range 0..{n_levels}"
            )));
        }
        let width = n_levels.saturating_sub(1).to_string().len();
        let levels = (0..n_levels).map(|i| format!("{i:0width$}")).collect();
        Ok(Self { levels, codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn label(&self, row: usize) -> &str {
        &self.levels[self.codes[row]]
    }

    /// Dense `n x q` indicator matrix `Z`.
    pub fn indicator_matrix(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.codes.len(), self.levels.len());
        for (row, &code) in self.codes.iter().enumerate() {
            z[(row, code)] = 1.0;
        }
        z
    }

    /// Row indices belonging to each level.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.levels.len()];
        for (row, &code) in self.codes.iter().enumerate() {
            out[code].push(row);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Factor),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Column-oriented data set with a designated numeric response.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFrame {
    names: Vec<String>,
    columns: Vec<Column>,
    response: String,
    n: usize,
}

impl DatasetFrame {
    pub fn new(columns: Vec<(String, Column)>, response: impl Into<String>) -> Result<Self> {
        let response = response.into();
        let n = columns
            .first()
            .map(|(_, c)| c.len())
            .ok_or_else(|| Error::InvalidFrame("frame has no columns".into()))?;
        if n == 0 {
            return Err(Error::InvalidFrame("frame has no rows".into()));
        }
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidFrame(format!("duplicate column name {name}")));
            }
            if col.len() != n {
                return Err(Error::InvalidFrame(format!(
                    "column {name} has length {} but frame has {n} rows",
                    col.len()
                )));
            }
            if let Column::Numeric(v) = col {
                if let Some(row) = v.iter().position(|x| x.is_nan()) {
                    return Err(Error::MissingValue {
                        column: name.clone(),
                        row,
                    });
                }
            }
        }
        let (names, columns): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
        let frame = Self {
            names,
            columns,
            response,
            n,
        };
        match frame.column(&frame.response)? {
            Column::Categorical(_) => Err(Error::InvalidResponse(
                frame.response.clone(),
                "response must be numeric".into(),
            )),
            Column::Numeric(v) if v.iter().any(|x| !x.is_finite()) => Err(Error::InvalidResponse(
                frame.response.clone(),
                "response contains non-finite values".into(),
            )),
            Column::Numeric(_) => Ok(frame),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::ColumnNotFound(name.to_owned()))
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.columns.iter())
    }

    pub fn response(&self) -> &[f64] {
        match self.column(&self.response) {
            Ok(Column::Numeric(v)) => v,
            _ => unreachable!("validated at construction"),
        }
    }
}

/// Which columns go into the block of interest, the conditioning block and
/// the random-intercept grouping factors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelSpec {
    pub block1: Vec<String>,
    pub block2: Vec<String>,
    pub random: Vec<String>,
}

impl ModelSpec {
    pub fn new(block1: Vec<String>, block2: Vec<String>, random: Vec<String>) -> Self {
        Self {
            block1,
            block2,
            random,
        }
    }

    pub fn validate(&self, frame: &DatasetFrame) -> Result<()> {
        if self.block1.is_empty() {
            return Err(Error::InvalidSpec(
                "block 1 must name at least one column".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in self.block1.iter().chain(&self.block2) {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "column {name} appears more than once in the fixed blocks"
                )));
            }
        }
        let mut seen_random = HashSet::new();
        for name in self.block1.iter().chain(&self.block2).chain(&self.random) {
            if name == frame.response_name() {
                return Err(Error::InvalidSpec(format!(
                    "response {name} cannot also be a regressor"
                )));
            }
            frame.column(name)?;
        }
        for name in &self.random {
            if !seen_random.insert(name.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "random factor {name} listed twice"
                )));
            }
            if !matches!(frame.column(name)?, Column::Categorical(_)) {
                return Err(Error::InvalidSpec(format!(
                    "random factor {name} must be categorical"
                )));
            }
        }
        Ok(())
    }
}

/// A named random-intercept grouping factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingFactor {
    pub name: String,
    pub factor: Factor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDesign {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub block1: Range<usize>,
    pub block2: Range<usize>,
    pub groups: Vec<GroupingFactor>,
}

impl EncodedDesign {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn factors(&self) -> Vec<Factor> {
        self.groups.iter().map(|g| g.factor.clone()).collect()
    }

    pub fn z_matrices(&self) -> Vec<DMatrix<f64>> {
        self.groups
            .iter()
            .map(|g| g.factor.indicator_matrix())
            .collect()
    }

    /// Index of the block-1 column when block 1 is a single 0/1 column with
    /// both values present.
    pub fn binary_block1_column(&self) -> Option<usize> {
        if self.block1.len() != 1 {
            return None;
        }
        let j = self.block1.start;
        let col = self.x.column(j);
        let all_binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
        let ones = col.iter().filter(|&&v| v == 1.0).count();
        (all_binary && ones > 0 && ones < col.len()).then_some(j)
    }
}

fn encode_columns(
    frame: &DatasetFrame,
    names: &[String],
    out_cols: &mut Vec<Vec<f64>>,
    out_names: &mut Vec<String>,
) -> Result<()> {
    for name in names {
        match frame.column(name)? {
            Column::Numeric(v) => {
                if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::MissingValue {
                        column: name.clone(),
                        row,
                    });
                }
                out_cols.push(v.clone());
                out_names.push(name.clone());
            }
            Column::Categorical(f) => {
                if f.n_levels() < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "categorical regressor {name} has a single level"
                    )));
                }
                for level in 1..f.n_levels() {
                    out_cols.push(
                        f.codes()
                            .iter()
                            .map(|&c| if c == level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    out_names.push(format!("{name}{}", f.levels()[level]));
                }
            }
        }
    }
    Ok(())
}

/// Names of columns that lie (numerically) in the span of the columns before
/// them. Modified Gram-Schmidt with one re-orthogonalisation pass.
fn dependent_columns(cols: &[Vec<f64>], names: &[String]) -> Vec<String> {
    const TOL: f64 = 1e-10;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for (col, name) in cols.iter().zip(names) {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut w = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= proj * qi);
            }
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= TOL * norm0 {
            dependent.push(name.clone());
        } else {
            w.iter_mut().for_each(|v| *v /= norm);
            basis.push(w);
        }
    }
    dependent
}

fn encode_parts(
    frame: &DatasetFrame,
    block1: &[String],
    block2: &[String],
    random: &[String],
) -> Result<EncodedDesign> {
    let n = frame.n();
    let mut cols = vec![vec![1.0; n]];
    let mut names = vec!["(Intercept)".to_owned()];
    encode_columns(frame, block1, &mut cols, &mut names)?;
    let b1_end = cols.len();
    encode_columns(frame, block2, &mut cols, &mut names)?;
    let b2_end = cols.len();

    let p = cols.len();
    if p + 1 > n {
        return Err(Error::InsufficientDf { n, p });
    }
    let dependent = dependent_columns(&cols, &names);
    if !dependent.is_empty() {
        return Err(Error::RankDeficientDesign { columns: dependent });
    }

    let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
    let groups = random
        .iter()
        .map(|name| match frame.column(name)? {
            Column::Categorical(f) => Ok(GroupingFactor {
                name: name.clone(),
                factor: f.clone(),
            }),
            Column::Numeric(_) => Err(Error::InvalidSpec(format!(
                "random factor {name} must be categorical"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EncodedDesign {
        y: DVector::from_column_slice(frame.response()),
        x,
        column_names: names,
        block1: 1..b1_end,
        block2: b1_end..b2_end,
        groups,
    })
}

/// Encodes `frame` under `spec` into `X = (1 : X1 : X2)` and the grouping
/// factors. Categorical regressors are treatment coded against their first
/// level in lexicographic order.
pub fn encode_design(frame: &DatasetFrame, spec: &ModelSpec) -> Result<EncodedDesign> {
    spec.validate(frame)?;
    encode_parts(frame, &spec.block1, &spec.block2, &spec.random)
}

/// Encodes the reduced model `X = (1 : X2)`, i.e. `spec` with block 1
/// dropped. The returned design has an empty block 1.
pub fn encode_reduced(frame: &DatasetFrame, spec: &ModelSpec) -> Result<EncodedDesign> {
    spec.validate(frame)?;
    encode_parts(frame, &[], &spec.block2, &spec.random)
}

/// Variance ratios `k_i = sigma_i^2 / sigma^2` together with their grouping
/// factors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStructure {
    ratios: Vec<f64>,
    groups: Vec<Factor>,
}

impl CovarianceStructure {
    pub fn new(ratios: Vec<f64>, groups: Vec<Factor>) -> Result<Self> {
        if ratios.len() != groups.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ratios for {} grouping factors",
                ratios.len(),
                groups.len()
            )));
        }
        if let Some(k) = ratios.iter().find(|k| !k.is_finite() || **k < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance ratio {k} must be finite and non-negative"
            )));
        }
        Ok(Self { ratios, groups })
    }

    pub fn single(k: f64, group: Factor) -> Result<Self> {
        Self::new(vec![k], vec![group])
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn groups(&self) -> &[Factor] {
        &self.groups
    }
}

/// `V = I_n + sum_i k_i Z_i Z_i^T`, materialised densely.
pub fn build_v(cov: &CovarianceStructure, n: usize) -> Result<DMatrix<f64>> {
    for g in &cov.groups {
        if g.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "grouping factor has {} rows, expected {n}",
                g.len()
            )));
        }
    }
    let mut v = DMatrix::identity(n, n);
    for (&k, g) in cov.ratios.iter().zip(&cov.groups) {
        if k == 0.0 {
            continue;
        }
        for rows in g.members() {
            for &a in &rows {
                for &b in &rows {
                    v[(a, b)] += k;
                }
            }
        }
    }
    Ok(v)
}
