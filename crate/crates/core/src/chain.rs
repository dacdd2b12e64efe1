//! Markov chain models and distribution classes.
//!
//! States are stored 0-based. Node labels (`X_1 .. X_T`) are 1-based wherever
//! a node index crosses the public API.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for simplex checks on probability vectors and matrix rows.
pub const PROB_TOL: f64 = 1e-12;

/// Row-stochastic `k x k` matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let violations = matrix_violations(&rows);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(join_violations(&violations)));
        }
        Ok(Self::from_rows_unchecked(&rows))
    }

    /// Rescales every row to sum to one. Rows must be non-negative with
    /// positive mass.
    pub fn renormalized(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut rows = rows;
        for (r, row) in rows.iter_mut().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidModel(format!("row {r} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidModel(format!("row {r} has zero mass")));
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Self::new(rows)
    }

    /// Binary chain with `p0 = P(0 -> 0)` and `p1 = P(1 -> 1)`.
    pub fn binary(p0: f64, p1: f64) -> Result<Self> {
        Self::new(vec![vec![p0, 1.0 - p0], vec![1.0 - p1, p1]])
    }

    pub fn identity(k: usize) -> Self {
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        Self { k, data }
    }

    pub(crate) fn from_rows_unchecked(rows: &[Vec<f64>]) -> Self {
        let k = rows.len();
        Self {
            k,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub(crate) fn from_flat_unchecked(k: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), k * k);
        Self { k, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.k + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.k..(from + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|r| self.row(r).to_vec()).collect()
    }

    pub(crate) fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let k = self.k;
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                for j in 0..k {
                    out[i * k + j] += a * other.data[l * k + j];
                }
            }
        }
        TransitionMatrix { k, data: out }
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; k];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for j in 0..k {
                out[j] += vi * self.data[i * k + j];
            }
        }
        out
    }

    /// `[P^0, P^1, ..., P^max_power]`.
    pub fn powers(&self, max_power: usize) -> Vec<TransitionMatrix> {
        let mut out = Vec::with_capacity(max_power + 1);
        out.push(TransitionMatrix::identity(self.k));
        for j in 1..=max_power {
            let next = out[j - 1].mul(self);
            debug_assert!(next.max_row_defect() <= 1e-10);
            out.push(next);
        }
        out
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.k)
            .map(|r| (self.row(r).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }
}

impl Serialize for TransitionMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransitionMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        TransitionMatrix::new(rows).map_err(serde::de::Error::custom)
    }
}

/// One generating distribution: initial distribution, transition matrix and
/// chain length.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainModel {
    q: Vec<f64>,
    p: TransitionMatrix,
    len: usize,
}

impl MarkovChainModel {
    pub fn new(q: Vec<f64>, p: TransitionMatrix, len: usize) -> Result<Self> {
        let spec = ChainSpec {
            q: q.clone(),
            p: p.rows(),
            len,
        };
        let report = validate_chain(&spec);
        if !report.is_ok() {
            return Err(Error::InvalidModel(join_violations(&report.violations)));
        }
        Ok(Self { q, p, len })
    }

    pub fn initial(&self) -> &[f64] {
        &self.q
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn k(&self) -> usize {
        self.p.k()
    }

    /// Marginals `P(X_t)` for `t = 1..=T` (index 0 holds `X_1`).
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len);
        out.push(self.q.clone());
        for t in 1..self.len {
            let next = self.p.left_mul(&out[t - 1]);
            out.push(next);
        }
        out
    }
}

/// Raw JSON form of a single chain, validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainSpec {
    pub q: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "T", default = "default_len")]
    pub len: usize,
}

fn default_len() -> usize {
    1
}

impl TryFrom<ChainSpec> for MarkovChainModel {
    type Error = Error;

    fn try_from(spec: ChainSpec) -> Result<Self> {
        let report = validate_chain(&spec);
        if !report.is_ok() {
            return Err(Error::InvalidModel(join_violations(&report.violations)));
        }
        Ok(Self {
            q: spec.q,
            p: TransitionMatrix::from_rows_unchecked(&spec.p),
            len: spec.len,
        })
    }
}

impl From<&MarkovChainModel> for ChainSpec {
    fn from(m: &MarkovChainModel) -> Self {
        ChainSpec {
            q: m.q.clone(),
            p: m.p.rows(),
            len: m.len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NotSquare { row: usize, len: usize, expected: usize },
    TooFewStates { k: usize },
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    InitialEntryOutOfRange { index: usize, value: f64 },
    InitialSum { sum: f64 },
    LengthMismatch { q_len: usize, k: usize },
    ZeroLength,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotSquare { row, len, expected } => {
                write!(f, "row {row} has {len} entries, expected {expected}")
            }
            Violation::TooFewStates { k } => write!(f, "need at least 2 states, got {k}"),
            Violation::EntryOutOfRange { row, col, value } => {
                write!(f, "P[{row}][{col}] = {value} outside [0,1]")
            }
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::InitialEntryOutOfRange { index, value } => {
                write!(f, "q[{index}] = {value} outside [0,1]")
            }
            Violation::InitialSum { sum } => write!(f, "q sums to {sum}"),
            Violation::LengthMismatch { q_len, k } => {
                write!(f, "q has length {q_len} but P has {k} states")
            }
            Violation::ZeroLength => write!(f, "chain length must be at least 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn matrix_violations(rows: &[Vec<f64>]) -> Vec<Violation> {
    let k = rows.len();
    let mut out = Vec::new();
    if k < 2 {
        out.push(Violation::TooFewStates { k });
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != k {
            out.push(Violation::NotSquare {
                row: r,
                len: row.len(),
                expected: k,
            });
            continue;
        }
        for (c, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                out.push(Violation::EntryOutOfRange {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            out.push(Violation::RowSum { row: r, sum });
        }
    }
    out
}

/// Checks a raw chain specification, reporting every violation found.
pub fn validate_chain(spec: &ChainSpec) -> ValidationReport {
    let mut violations = matrix_violations(&spec.p);
    for (i, &v) in spec.q.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            violations.push(Violation::InitialEntryOutOfRange { index: i, value: v });
        }
    }
    let sum: f64 = spec.q.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        violations.push(Violation::InitialSum { sum });
    }
    if spec.q.len() != spec.p.len() {
        violations.push(Violation::LengthMismatch {
            q_len: spec.q.len(),
            k: spec.p.len(),
        });
    }
    if spec.len == 0 {
        violations.push(Violation::ZeroLength);
    }
    ValidationReport { violations }
}

/// The class of admissible generating distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKind {
    FiniteSet(Vec<MarkovChainModel>),
    /// Every initial distribution in the simplex paired with each matrix.
    MatrixSetAllInits {
        matrices: Vec<TransitionMatrix>,
        len: usize,
    },
    /// Binary chains with `p0, p1` in `[alpha, beta]`, all initial
    /// distributions.
    BinaryInterval {
        alpha: f64,
        beta: f64,
        grid_step: f64,
        len: usize,
    },
    /// Class summarized directly by its mixing parameters.
    MixingParams {
        pi_min: f64,
        g: f64,
        k: usize,
        len: usize,
        reversible: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionClass(ClassKind);

pub const DEFAULT_GRID_STEP: f64 = 0.01;

impl DistributionClass {
    pub fn finite_set(models: Vec<MarkovChainModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidModel("finite set is empty".into()))?;
        let (k, len) = (first.k(), first.len());
        if models.iter().any(|m| m.k() != k || m.len() != len) {
            return Err(Error::InvalidModel(
                "all members must share state count and chain length".into(),
            ));
        }
        Ok(Self(ClassKind::FiniteSet(models)))
    }

    pub fn matrix_set_all_inits(matrices: Vec<TransitionMatrix>, len: usize) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidModel("matrix set is empty".into()))?;
        let k = first.k();
        if matrices.iter().any(|m| m.k() != k) {
            return Err(Error::InvalidModel("matrices must share state count".into()));
        }
        if len == 0 {
            return Err(Error::InvalidModel("chain length must be at least 1".into()));
        }
        Ok(Self(ClassKind::MatrixSetAllInits { matrices, len }))
    }

    pub fn binary_interval(alpha: f64, beta: f64, grid_step: f64, len: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= beta && beta < 1.0) {
            return Err(Error::InvalidModel(format!(
                "binary interval needs 0 < alpha <= beta < 1, got [{alpha}, {beta}]"
            )));
        }
        if !(grid_step > 0.0) {
            return Err(Error::InvalidModel("grid_step must be positive".into()));
        }
        if len == 0 {
            return Err(Error::InvalidModel("chain length must be at least 1".into()));
        }
        Ok(Self(ClassKind::BinaryInterval {
            alpha,
            beta,
            grid_step,
            len,
        }))
    }

    pub fn mixing_params(pi_min: f64, g: f64, k: usize, len: usize, reversible: bool) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidModel("need at least 2 states".into()));
        }
        if !(pi_min > 0.0 && pi_min <= 1.0 / k as f64 + PROB_TOL) {
            return Err(Error::InvalidModel(format!(
                "pi_min must lie in (0, 1/k], got {pi_min}"
            )));
        }
        if !(g > 0.0 && g <= 2.0) {
            return Err(Error::InvalidModel(format!("g must lie in (0, 2], got {g}")));
        }
        if len == 0 {
            return Err(Error::InvalidModel("chain length must be at least 1".into()));
        }
        Ok(Self(ClassKind::MixingParams {
            pi_min,
            g,
            k,
            len,
            reversible,
        }))
    }

    pub fn kind(&self) -> &ClassKind {
        &self.0
    }

    pub fn kind_name(&self) -> &'static str {
        match self.0 {
            ClassKind::FiniteSet(_) => "finite_set",
            ClassKind::MatrixSetAllInits { .. } => "matrix_set_all_inits",
            ClassKind::BinaryInterval { .. } => "binary_interval",
            ClassKind::MixingParams { .. } => "mixing_params",
        }
    }

    pub fn chain_length(&self) -> usize {
        match &self.0 {
            ClassKind::FiniteSet(m) => m[0].len(),
            ClassKind::MatrixSetAllInits { len, .. }
            | ClassKind::BinaryInterval { len, .. }
            | ClassKind::MixingParams { len, .. } => *len,
        }
    }

    pub fn state_count(&self) -> usize {
        match &self.0 {
            ClassKind::FiniteSet(m) => m[0].k(),
            ClassKind::MatrixSetAllInits { matrices, .. } => matrices[0].k(),
            ClassKind::BinaryInterval { .. } => 2,
            ClassKind::MixingParams { k, .. } => *k,
        }
    }

    /// Same class with a different chain length.
    pub fn with_length(&self, len: usize) -> Result<Self> {
        match &self.0 {
            ClassKind::FiniteSet(models) => Self::finite_set(
                models
                    .iter()
                    .map(|m| MarkovChainModel::new(m.q.clone(), m.p.clone(), len))
                    .collect::<Result<_>>()?,
            ),
            ClassKind::MatrixSetAllInits { matrices, .. } => {
                Self::matrix_set_all_inits(matrices.clone(), len)
            }
            ClassKind::BinaryInterval {
                alpha,
                beta,
                grid_step,
                ..
            } => Self::binary_interval(*alpha, *beta, *grid_step, len),
            ClassKind::MixingParams {
                pi_min,
                g,
                k,
                reversible,
                ..
            } => Self::mixing_params(*pi_min, *g, *k, len, *reversible),
        }
    }

    /// Grid expansion of a binary interval into explicit matrices; other
    /// explicit classes return their matrix list.
    pub fn transition_matrices(&self) -> Result<Vec<TransitionMatrix>> {
        match &self.0 {
            ClassKind::FiniteSet(m) => Ok(m.iter().map(|x| x.p.clone()).collect()),
            ClassKind::MatrixSetAllInits { matrices, .. } => Ok(matrices.clone()),
            ClassKind::BinaryInterval {
                alpha,
                beta,
                grid_step,
                ..
            } => {
                let grid = interval_grid(*alpha, *beta, *grid_step);
                let mut out = Vec::with_capacity(grid.len() * grid.len());
                for &p0 in &grid {
                    for &p1 in &grid {
                        out.push(TransitionMatrix::binary(p0, p1)?);
                    }
                }
                Ok(out)
            }
            ClassKind::MixingParams { .. } => Err(Error::UnsupportedClass {
                mechanism: "transition matrix expansion",
                class: "mixing_params",
            }),
        }
    }
}

/// Points `alpha, alpha + step, ...` up to and including `beta`.
pub fn interval_grid(alpha: f64, beta: f64, step: f64) -> Vec<f64> {
    let n = ((beta - alpha) / step + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|j| alpha + j as f64 * step).collect();
    if let Some(last) = out.last_mut() {
        if (*last - beta).abs() <= 1e-9 {
            *last = beta;
        } else if *last < beta {
            out.push(beta);
        }
    }
    out
}

/// JSON document describing a distribution class.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassSpec {
    FiniteSet {
        #[serde(rename = "T")]
        len: usize,
        chains: Vec<InitialAndMatrix>,
    },
    MatrixSetAllInits {
        #[serde(rename = "T")]
        len: usize,
        matrices: Vec<Vec<Vec<f64>>>,
    },
    BinaryInterval {
        #[serde(rename = "T")]
        len: usize,
        alpha: f64,
        beta: f64,
        #[serde(default = "default_grid_step")]
        grid_step: f64,
    },
    MixingParams {
        #[serde(rename = "T")]
        len: usize,
        k: usize,
        pi_min: f64,
        g: f64,
        #[serde(default)]
        reversible: bool,
    },
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InitialAndMatrix {
    pub q: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
}

impl TryFrom<ClassSpec> for DistributionClass {
    type Error = Error;

    fn try_from(spec: ClassSpec) -> Result<Self> {
        match spec {
            ClassSpec::FiniteSet { len, chains } => DistributionClass::finite_set(
                chains
                    .into_iter()
                    .map(|c| MarkovChainModel::try_from(ChainSpec { q: c.q, p: c.p, len }))
                    .collect::<Result<_>>()?,
            ),
            ClassSpec::MatrixSetAllInits { len, matrices } => {
                DistributionClass::matrix_set_all_inits(
                    matrices
                        .into_iter()
                        .map(TransitionMatrix::new)
                        .collect::<Result<_>>()?,
                    len,
                )
            }
            ClassSpec::BinaryInterval {
                len,
                alpha,
                beta,
                grid_step,
            } => DistributionClass::binary_interval(alpha, beta, grid_step, len),
            ClassSpec::MixingParams {
                len,
                k,
                pi_min,
                g,
                reversible,
            } => DistributionClass::mixing_params(pi_min, g, k, len, reversible),
        }
    }
}

impl From<&DistributionClass> for ClassSpec {
    fn from(c: &DistributionClass) -> Self {
        match c.kind() {
            ClassKind::FiniteSet(models) => ClassSpec::FiniteSet {
                len: models[0].len(),
                chains: models
                    .iter()
                    .map(|m| InitialAndMatrix {
                        q: m.q.clone(),
                        p: m.p.rows(),
                    })
                    .collect(),
            },
            ClassKind::MatrixSetAllInits { matrices, len } => ClassSpec::MatrixSetAllInits {
                len: *len,
                matrices: matrices.iter().map(|m| m.rows()).collect(),
            },
            ClassKind::BinaryInterval {
                alpha,
                beta,
                grid_step,
                len,
            } => ClassSpec::BinaryInterval {
                len: *len,
                alpha: *alpha,
                beta: *beta,
                grid_step: *grid_step,
            },
            ClassKind::MixingParams {
                pi_min,
                g,
                k,
                len,
                reversible,
            } => ClassSpec::MixingParams {
                len: *len,
                k: *k,
                pi_min: *pi_min,
                g: *g,
                reversible: *reversible,
            },
        }
    }
}

impl DistributionClass {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ClassSpec = serde_json::from_str(s)?;
        spec.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ClassSpec::from(self)).expect("class spec serializes")
    }
}
