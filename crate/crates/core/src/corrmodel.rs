//! Correlation problems: families of conditional output distributions
//! `P(a|X)` indexed by joint inputs `X` drawn from a promise set `D`.
//!
//! A problem is either extensional (an explicit promise and a probability
//! table) or intensional (a registered [`Generator`] that evaluates the
//! promise predicate and the probabilities on demand). Large GHZ problems can
//! only be represented intensionally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghz::{GhzGenerator, GhzParams};
use crate::space::{Odometer, Shape};

/// Default cap on the number of input vectors an exhaustive scan may visit.
pub const DEFAULT_SCAN_LIMIT: u128 = 1 << 24;

/// Tolerance on `Σ_a P(a|X) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// An intensional source of promise membership and probabilities.
///
/// Implementations must return exact zeros for impossible outcomes:
/// admissibility is decided by `prob(x, a) > 0` with no tolerance.
pub trait Generator: Send + Sync + fmt::Debug {
    fn id(&self) -> &'static str;
    fn params(&self) -> serde_json::Value;
    fn shape(&self) -> Shape;
    fn promise_holds(&self, x: &[u32]) -> bool;
    /// Exact `|D|`, when known in closed form.
    fn promise_size(&self) -> Option<u128> {
        None
    }
    /// Direct enumerator of `D`, when cheaper than scanning `k^n`.
    fn promise_members(&self) -> Option<Box<dyn Iterator<Item = Vec<u32>> + '_>> {
        None
    }
    /// `P(a|X)`; callers guarantee `x` is a promise member and both vectors are in range.
    fn prob(&self, x: &[u32], a: &[u32]) -> f64;
}

/// Resolve a generator id and its JSON parameters.
pub fn generator_from_id(id: &str, params: &serde_json::Value) -> Result<Arc<dyn Generator>> {
    match id {
        GhzGenerator::ID => {
            let p: GhzParams =
                serde_json::from_value(params.clone()).map_err(|e| Error::Schema(format!("ghz params: {e}")))?;
            Ok(Arc::new(GhzGenerator::new(p)?))
        }
        other => Err(Error::UnknownGenerator(other.to_string())),
    }
}

#[derive(Debug, Clone)]
pub enum PromiseSet {
    Explicit(BTreeSet<Vec<u32>>),
    Generator(Arc<dyn Generator>),
}

#[derive(Debug, Clone)]
pub enum ProbSource {
    /// Rows keyed by input vector; each row holds `d^n` probabilities in lexicographic output order.
    Table(BTreeMap<Vec<u32>, Vec<f64>>),
    Generator(Arc<dyn Generator>),
}

#[derive(Debug, Clone)]
pub struct CorrelationProblem {
    shape: Shape,
    promise: PromiseSet,
    prob: ProbSource,
}

impl CorrelationProblem {
    pub fn new(shape: Shape, promise: PromiseSet, prob: ProbSource) -> Result<Self> {
        if let PromiseSet::Explicit(members) = &promise {
            for x in members {
                shape.check_input(x)?;
            }
        }
        for g in [generator_of_promise(&promise), generator_of_prob(&prob)]
            .into_iter()
            .flatten()
        {
            if g.shape() != shape {
                return Err(Error::Schema(format!(
                    "generator {:?} has shape {:?}, problem declares {:?}",
                    g.id(),
                    g.shape(),
                    shape
                )));
            }
        }
        if let ProbSource::Table(rows) = &prob {
            let width = shape
                .output_count()
                .filter(|&c| c <= 1 << 24)
                .ok_or_else(|| Error::InvalidParams("d^n too large for a table".into()))?
                as usize;
            for (x, row) in rows {
                shape.check_input(x)?;
                if row.len() != width {
                    return Err(Error::Schema(format!(
                        "row for {x:?} has {} entries, expected {width}",
                        row.len()
                    )));
                }
                if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::Schema(format!("probability {p} for {x:?} outside [0,1]")));
                }
            }
            match &promise {
                PromiseSet::Explicit(members) => {
                    if members.len() != rows.len() || members.iter().any(|x| !rows.contains_key(x)) {
                        return Err(Error::Schema("table rows do not match the promise members".into()));
                    }
                }
                PromiseSet::Generator(g) => {
                    if let Some(x) = rows.keys().find(|x| !g.promise_holds(x)) {
                        return Err(Error::Schema(format!("table row {x:?} is outside the promise")));
                    }
                }
            }
        }
        Ok(CorrelationProblem { shape, promise, prob })
    }

    /// Extensional problem whose promise is exactly the set of table rows.
    pub fn tabulated(shape: Shape, rows: BTreeMap<Vec<u32>, Vec<f64>>) -> Result<Self> {
        let members = rows.keys().cloned().collect();
        Self::new(shape, PromiseSet::Explicit(members), ProbSource::Table(rows))
    }

    pub fn from_generator(g: Arc<dyn Generator>) -> Self {
        CorrelationProblem {
            shape: g.shape(),
            promise: PromiseSet::Generator(g.clone()),
            prob: ProbSource::Generator(g),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn promise(&self) -> &PromiseSet {
        &self.promise
    }

    pub fn prob_source(&self) -> &ProbSource {
        &self.prob
    }

    /// The generator backing this problem, if it is fully intensional.
    pub fn generator(&self) -> Option<&Arc<dyn Generator>> {
        match (&self.promise, &self.prob) {
            (PromiseSet::Generator(g), ProbSource::Generator(_)) => Some(g),
            _ => None,
        }
    }

    /// Membership test; total over `{0..k-1}^n`.
    pub fn in_promise(&self, x: &[u32]) -> Result<bool> {
        self.shape.check_input(x)?;
        Ok(self.in_promise_unchecked(x))
    }

    pub(crate) fn in_promise_unchecked(&self, x: &[u32]) -> bool {
        match &self.promise {
            PromiseSet::Explicit(m) => m.contains(x),
            PromiseSet::Generator(g) => g.promise_holds(x),
        }
    }

    /// `|D|` when known without enumeration.
    pub fn promise_size_hint(&self) -> Option<u128> {
        match &self.promise {
            PromiseSet::Explicit(m) => Some(m.len() as u128),
            PromiseSet::Generator(g) => g.promise_size(),
        }
    }

    /// Exact `|D|`, counting by enumeration when no closed form exists.
    pub fn promise_size(&self, limit: u128) -> Result<u128> {
        match self.promise_size_hint() {
            Some(s) => Ok(s),
            None => Ok(self.enumerate_promise(limit)?.count() as u128),
        }
    }

    /// `P(a|X)`. Errors if `X` is outside the promise.
    pub fn prob(&self, x: &[u32], a: &[u32]) -> Result<f64> {
        self.shape.check_input(x)?;
        self.shape.check_output(a)?;
        if !self.in_promise_unchecked(x) {
            return Err(Error::OutsidePromise(x.to_vec()));
        }
        Ok(self.prob_unchecked(x, a))
    }

    pub(crate) fn prob_unchecked(&self, x: &[u32], a: &[u32]) -> f64 {
        match &self.prob {
            ProbSource::Table(rows) => rows[x][self.shape.output_index(a)],
            ProbSource::Generator(g) => g.prob(x, a),
        }
    }

    /// Whether `a` has strictly positive probability on `x`.
    pub fn admissible(&self, x: &[u32], a: &[u32]) -> Result<bool> {
        Ok(self.prob(x, a)? > 0.0)
    }

    /// The full conditional distribution `P(·|X)` in lexicographic output order.
    pub fn distribution(&self, x: &[u32]) -> Result<Vec<f64>> {
        self.shape.check_input(x)?;
        if !self.in_promise_unchecked(x) {
            return Err(Error::OutsidePromise(x.to_vec()));
        }
        if let ProbSource::Table(rows) = &self.prob {
            return Ok(rows[x].clone());
        }
        Ok(self.shape.outputs().map(|a| self.prob_unchecked(x, &a)).collect())
    }

    /// Stream every member of `D` exactly once.
    ///
    /// Fails with [`Error::TooLarge`] when the number of vectors that would be
    /// visited (`|D|` for enumerable promises, `k^n` for scanned ones) exceeds `limit`.
    pub fn enumerate_promise(&self, limit: u128) -> Result<Box<dyn Iterator<Item = Vec<u32>> + '_>> {
        match &self.promise {
            PromiseSet::Explicit(m) => {
                guard("promise members", m.len() as u128, limit)?;
                Ok(Box::new(m.iter().cloned()))
            }
            PromiseSet::Generator(g) => {
                if let (Some(size), Some(iter)) = (g.promise_size(), g.promise_members()) {
                    guard("promise members", size, limit)?;
                    return Ok(iter);
                }
                let total = self.shape.input_count().unwrap_or(u128::MAX);
                guard("input vectors", total, limit)?;
                let g = g.clone();
                Ok(Box::new(
                    Odometer::new(self.shape.n, self.shape.k).filter(move |x| g.promise_holds(x)),
                ))
            }
        }
    }

    /// Convert to an explicit table (requires enumerable promise).
    pub fn materialize(&self, limit: u128) -> Result<CorrelationProblem> {
        let mut rows = BTreeMap::new();
        for x in self.enumerate_promise(limit)? {
            let row = self.distribution(&x)?;
            rows.insert(x, row);
        }
        CorrelationProblem::tabulated(self.shape, rows)
    }
}

fn guard(what: &'static str, needed: u128, limit: u128) -> Result<()> {
    if needed > limit {
        Err(Error::TooLarge { what, needed, limit })
    } else {
        Ok(())
    }
}

fn generator_of_promise(p: &PromiseSet) -> Option<&Arc<dyn Generator>> {
    match p {
        PromiseSet::Generator(g) => Some(g),
        PromiseSet::Explicit(_) => None,
    }
}

fn generator_of_prob(p: &ProbSource) -> Option<&Arc<dyn Generator>> {
    match p {
        ProbSource::Generator(g) => Some(g),
        ProbSource::Table(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowResidual {
    pub x: Vec<u32>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub promise_size: u128,
    /// Largest `|Σ_a P(a|X) - 1|` over the promise.
    pub max_residual: f64,
    /// Rows whose residual exceeds [`NORMALIZATION_TOL`].
    pub failures: Vec<RowResidual>,
    /// Entries outside `[0,1]`.
    pub out_of_range: usize,
    pub support_min: Option<usize>,
    pub support_max: Option<usize>,
    pub support_mean: Option<f64>,
    /// Set when the generator's closed-form `|D|` disagrees with enumeration.
    pub cardinality_mismatch: Option<(u128, u128)>,
}

/// Check normalization, range and promise cardinality of a problem.
pub fn validate_problem(p: &CorrelationProblem, limit: u128) -> Result<ValidationReport> {
    let mut count: u128 = 0;
    let mut max_residual: f64 = 0.0;
    let mut failures = Vec::new();
    let mut out_of_range = 0usize;
    let (mut smin, mut smax, mut ssum) = (usize::MAX, 0usize, 0u128);
    for x in p.enumerate_promise(limit)? {
        count += 1;
        let row = p.distribution(&x)?;
        let total: f64 = row.iter().sum();
        let residual = (total - 1.0).abs();
        max_residual = max_residual.max(residual);
        if residual > NORMALIZATION_TOL || residual.is_nan() {
            failures.push(RowResidual { x: x.clone(), residual });
        }
        out_of_range += row.iter().filter(|q| !(0.0..=1.0).contains(*q)).count();
        let support = row.iter().filter(|&&q| q > 0.0).count();
        smin = smin.min(support);
        smax = smax.max(support);
        ssum += support as u128;
    }
    let cardinality_mismatch = match &p.promise {
        PromiseSet::Generator(g) => match g.promise_size() {
            Some(declared) if declared != count => Some((declared, count)),
            _ => None,
        },
        PromiseSet::Explicit(_) => None,
    };
    let nonempty = count > 0;
    Ok(ValidationReport {
        passed: failures.is_empty() && out_of_range == 0 && cardinality_mismatch.is_none(),
        promise_size: count,
        max_residual,
        failures,
        out_of_range,
        support_min: nonempty.then_some(smin),
        support_max: nonempty.then_some(smax),
        support_mean: nonempty.then(|| ssum as f64 / count as f64),
        cardinality_mismatch,
    })
}

// ---------------------------------------------------------------------------
// Problem files

pub const PROBLEM_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    k: u32,
    d: u32,
    promise: PromiseFile,
    prob: ProbFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum PromiseFile {
    Explicit {
        members: Vec<Vec<u32>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cardinality: Option<u64>,
    },
    Generator {
        id: String,
        params: serde_json::Value,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ProbFile {
    Table { rows: Vec<RowFile> },
    Generator { id: String, params: serde_json::Value },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowFile {
    x: Vec<u32>,
    p: Vec<f64>,
}

/// Parse a problem document.
pub fn problem_from_json(text: &str) -> Result<CorrelationProblem> {
    let file: ProblemFile = serde_json::from_str(text)?;
    let shape = Shape::new(file.n, file.k, file.d)?;
    let promise = match file.promise {
        PromiseFile::Explicit { members, cardinality } => {
            let declared = members.len();
            let set: BTreeSet<_> = members.into_iter().collect();
            if set.len() != declared {
                return Err(Error::Schema("duplicate promise members".into()));
            }
            if let Some(c) = cardinality {
                if c as usize != set.len() {
                    return Err(Error::Schema(format!(
                        "declared cardinality {c} but {} members listed",
                        set.len()
                    )));
                }
            }
            PromiseSet::Explicit(set)
        }
        PromiseFile::Generator { id, params } => PromiseSet::Generator(generator_from_id(&id, &params)?),
    };
    let prob = match file.prob {
        ProbFile::Table { rows } => {
            let mut map = BTreeMap::new();
            for row in rows {
                shape.check_input(&row.x)?;
                if map.insert(row.x.clone(), row.p).is_some() {
                    return Err(Error::Schema(format!("duplicate row for {:?}", row.x)));
                }
            }
            ProbSource::Table(map)
        }
        ProbFile::Generator { id, params } => ProbSource::Generator(generator_from_id(&id, &params)?),
    };
    // Explicit promise members must also be valid symbols before the table check.
    if let PromiseSet::Explicit(m) = &promise {
        for x in m {
            shape.check_input(x).map_err(|e| Error::Schema(e.to_string()))?;
        }
    }
    CorrelationProblem::new(shape, promise, prob)
}

/// Serialize a problem; floats carry 17 significant digits.
pub fn problem_to_json(p: &CorrelationProblem) -> Result<String> {
    let promise = match &p.promise {
        PromiseSet::Explicit(m) => PromiseFile::Explicit {
            members: m.iter().cloned().collect(),
            cardinality: Some(m.len() as u64),
        },
        PromiseSet::Generator(g) => PromiseFile::Generator {
            id: g.id().to_string(),
            params: g.params(),
        },
    };
    let prob = match &p.prob {
        ProbSource::Table(rows) => ProbFile::Table {
            rows: rows
                .iter()
                .map(|(x, p)| RowFile {
                    x: x.clone(),
                    p: p.clone(),
                })
                .collect(),
        },
        ProbSource::Generator(g) => ProbFile::Generator {
            id: g.id().to_string(),
            params: g.params(),
        },
    };
    let file = ProblemFile {
        n: p.shape.n,
        k: p.shape.k,
        d: p.shape.d,
        promise,
        prob,
    };
    crate::json::to_string_pretty(&file)
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<CorrelationProblem> {
    let text = std::fs::read_to_string(path)?;
    problem_from_json(&text)
}

pub fn save_problem(p: &CorrelationProblem, path: impl AsRef<Path>) -> Result<()> {
    let mut text = problem_to_json(p)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
