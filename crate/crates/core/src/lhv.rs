//! Deterministic local hidden-variable strategies with no-click outcomes,
//! and the exact maximal all-click probability of error-free models.
//!
//! A probabilistic model is a mixture of deterministic strategies, so the best
//! all-click probability is a linear program over the error-free ones. Two
//! objectives are supported: the click probability averaged over uniformly
//! drawn promise inputs, and the worst case over promise inputs (the
//! input-independent setting).

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::corrmodel::CorrelationProblem;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, Relation, Solution, Status};
use crate::space::{checked_pow, Shape};

/// Default cap on the number of deterministic strategies visited.
pub const DEFAULT_MAX_STRATEGIES: u128 = 100_000_000;

/// Per-party response tables; symbol `d` stands for no click (⊥).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeterministicLhv {
    shape: Shape,
    table: Vec<u32>,
}

impl DeterministicLhv {
    pub fn from_fn(shape: Shape, f: impl Fn(usize, u32) -> Option<u32>) -> Self {
        let mut table = Vec::with_capacity(shape.n * shape.k as usize);
        for i in 0..shape.n {
            for x in 0..shape.k {
                let out = f(i, x).unwrap_or(shape.d);
                assert!(out <= shape.d, "strategy output {out} out of range");
                table.push(out);
            }
        }
        DeterministicLhv { shape, table }
    }

    pub fn from_tables(shape: Shape, tables: &[Vec<Option<u32>>]) -> Result<Self> {
        if tables.len() != shape.n {
            return Err(Error::Arity {
                expected: shape.n,
                got: tables.len(),
            });
        }
        let mut table = Vec::with_capacity(shape.n * shape.k as usize);
        for t in tables {
            if t.len() != shape.k as usize {
                return Err(Error::Arity {
                    expected: shape.k as usize,
                    got: t.len(),
                });
            }
            for &o in t {
                match o {
                    Some(v) if v >= shape.d => return Err(Error::out_of_range("strategy output", v, shape.d)),
                    Some(v) => table.push(v),
                    None => table.push(shape.d),
                }
            }
        }
        Ok(DeterministicLhv { shape, table })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// `λ_i(x)`, `None` for no click.
    pub fn output(&self, party: usize, x: u32) -> Option<u32> {
        let v = self.table[party * self.shape.k as usize + x as usize];
        (v < self.shape.d).then_some(v)
    }

    /// Joint output on `x`, or `None` unless every detector clicks.
    pub fn response(&self, x: &[u32]) -> Option<Vec<u32>> {
        x.iter().enumerate().map(|(i, &xi)| self.output(i, xi)).collect()
    }

    pub fn tables(&self) -> Vec<Vec<Option<u32>>> {
        (0..self.shape.n)
            .map(|i| (0..self.shape.k).map(|x| self.output(i, x)).collect())
            .collect()
    }

    /// Canonical base-(d+1) code, party 1 and input 0 most significant.
    pub fn encode(&self) -> u128 {
        let base = self.shape.d as u128 + 1;
        self.table.iter().fold(0u128, |acc, &v| acc * base + v as u128)
    }

    pub fn decode(shape: Shape, mut code: u128) -> Result<Self> {
        let len = shape.n * shape.k as usize;
        let base = shape.d as u128 + 1;
        let total = strategy_count(shape).ok_or_else(|| Error::InvalidParams("strategy space overflows".into()))?;
        if code >= total {
            return Err(Error::InvalidParams(format!("strategy code {code} >= {total}")));
        }
        let mut table = vec![0u32; len];
        for slot in table.iter_mut().rev() {
            *slot = (code % base) as u32;
            code /= base;
        }
        Ok(DeterministicLhv { shape, table })
    }
}

impl Serialize for DeterministicLhv {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tables().serialize(s)
    }
}

/// `(d+1)^(n·k)`.
pub fn strategy_count(shape: Shape) -> Option<u128> {
    checked_pow(shape.d as u128 + 1, shape.n * shape.k as usize)
}

/// `A_{λ,X}`: every detector clicks on `x`.
pub fn all_click(lambda: &DeterministicLhv, x: &[u32]) -> bool {
    x.iter().enumerate().all(|(i, &xi)| lambda.output(i, xi).is_some())
}

/// Every strategy for `shape` in code order, optionally filtered.
pub fn enumerate_strategies<'a>(
    shape: Shape,
    max_strategies: u128,
    filter: Option<Box<dyn Fn(&DeterministicLhv) -> bool + 'a>>,
) -> Result<impl Iterator<Item = DeterministicLhv> + 'a> {
    let total = strategy_count(shape).unwrap_or(u128::MAX);
    if total > max_strategies {
        return Err(Error::TooLarge {
            what: "deterministic strategies",
            needed: total,
            limit: max_strategies,
        });
    }
    Ok((0..total)
        .map(move |code| DeterministicLhv::decode(shape, code).expect("code in range"))
        .filter(move |s| filter.as_ref().is_none_or(|f| f(s))))
}

/// No all-click promise input receives an inadmissible joint output.
///
/// Outputs containing ⊥ are never judged: those runs are discarded.
pub fn is_error_free(p: &CorrelationProblem, lambda: &DeterministicLhv, scan_limit: u128) -> Result<bool> {
    if lambda.shape() != p.shape() {
        return Err(Error::InvalidParams("strategy shape differs from problem".into()));
    }
    for x in p.enumerate_promise(scan_limit)? {
        if let Some(a) = lambda.response(&x) {
            if p.prob_unchecked(&x, &a) <= 0.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A finite mixture `ν` of deterministic strategies, keyed by strategy code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LhvDistribution {
    pub shape: Shape,
    pub weights: BTreeMap<u128, f64>,
}

impl LhvDistribution {
    pub fn point(lambda: &DeterministicLhv) -> Self {
        LhvDistribution {
            shape: lambda.shape(),
            weights: BTreeMap::from([(lambda.encode(), 1.0)]),
        }
    }

    pub fn strategies(&self) -> impl Iterator<Item = (DeterministicLhv, f64)> + '_ {
        self.weights
            .iter()
            .map(|(&c, &w)| (DeterministicLhv::decode(self.shape, c).expect("stored code"), w))
    }

    /// `Σ_λ ν(λ) A_{λ,X}`.
    pub fn click_probability(&self, x: &[u32]) -> f64 {
        self.strategies().filter(|(s, _)| all_click(s, x)).map(|(_, w)| w).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Click probability averaged over uniformly drawn promise inputs.
    #[serde(rename = "avg")]
    Average,
    /// Smallest click probability over promise inputs.
    #[serde(rename = "minmax")]
    WorstCase,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(Objective::Average),
            "minmax" | "worst" | "worst-case" => Ok(Objective::WorstCase),
            other => Err(Error::InvalidParams(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LhvLimits {
    pub scan_limit: u128,
    pub max_strategies: u128,
}

impl Default for LhvLimits {
    fn default() -> Self {
        LhvLimits {
            scan_limit: crate::corrmodel::DEFAULT_SCAN_LIMIT,
            max_strategies: DEFAULT_MAX_STRATEGIES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClickOptimum {
    pub objective: Objective,
    /// Optimal all-click probability `q*`.
    pub q_star: f64,
    /// An optimal mixture, supported on error-free strategies.
    pub distribution: LhvDistribution,
    pub strategies_visited: u128,
    pub error_free: u128,
    /// Distinct click patterns on the promise (LP columns).
    pub columns: usize,
    pub promise_size: usize,
    lp: Option<(LinearProgram, Solution)>,
}

impl ClickOptimum {
    /// Exact rational value of the optimum, certified from the final simplex basis.
    pub fn certify(&self) -> Result<BigRational> {
        match &self.lp {
            Some((prog, sol)) => {
                let cert = lp::certify(prog, sol)?;
                Ok(cert.value)
            }
            None => Ok(BigRational::from_float(self.q_star).expect("finite")),
        }
    }
}

/// Solve for the maximal all-click probability over error-free models.
pub fn max_click_probability(p: &CorrelationProblem, objective: Objective, limits: LhvLimits) -> Result<ClickOptimum> {
    let shape = p.shape();
    let promise: Vec<Vec<u32>> = p.enumerate_promise(limits.scan_limit)?.collect();
    let total = strategy_count(shape).unwrap_or(u128::MAX);
    if total > limits.max_strategies {
        return Err(Error::TooLarge {
            what: "deterministic strategies",
            needed: total,
            limit: limits.max_strategies,
        });
    }
    if promise.is_empty() {
        let lambda = DeterministicLhv::decode(shape, 0)?;
        return Ok(ClickOptimum {
            objective,
            q_star: 1.0,
            distribution: LhvDistribution::point(&lambda),
            strategies_visited: 0,
            error_free: 0,
            columns: 0,
            promise_size: 0,
            lp: None,
        });
    }
    let admissible: Vec<Vec<bool>> = promise
        .iter()
        .map(|x| shape.outputs().map(|a| p.prob_unchecked(x, &a) > 0.0).collect())
        .collect();

    // Click pattern over the promise -> lowest strategy code realizing it.
    let words = promise.len().div_ceil(64);
    let mut patterns: BTreeMap<Vec<u64>, u128> = BTreeMap::new();
    let mut error_free = 0u128;
    let d = shape.d;
    for code in 0..total {
        let lambda = DeterministicLhv::decode(shape, code)?;
        let mut pattern = vec![0u64; words];
        let mut clean = true;
        for (t, x) in promise.iter().enumerate() {
            let mut idx = 0usize;
            let mut clicks = true;
            for (i, &xi) in x.iter().enumerate() {
                let v = lambda.table[i * shape.k as usize + xi as usize];
                if v == d {
                    clicks = false;
                    break;
                }
                idx = idx * d as usize + v as usize;
            }
            if clicks {
                if !admissible[t][idx] {
                    clean = false;
                    break;
                }
                pattern[t / 64] |= 1 << (t % 64);
            }
        }
        if clean {
            error_free += 1;
            patterns.entry(pattern).or_insert(code);
        }
    }
    let columns: Vec<(Vec<u64>, u128)> = patterns.into_iter().collect();
    let clicks = |col: &[u64], t: usize| col[t / 64] >> (t % 64) & 1 == 1;
    let m = promise.len();
    let prog = match objective {
        Objective::Average => {
            let obj = columns
                .iter()
                .map(|(c, _)| c.iter().map(|w| w.count_ones()).sum::<u32>() as f64 / m as f64)
                .collect::<Vec<_>>();
            let mut prog = LinearProgram::new(obj);
            prog.add_row(vec![1.0; columns.len()], Relation::Eq, 1.0);
            prog
        }
        Objective::WorstCase => {
            let nv = columns.len() + 1;
            let mut obj = vec![0.0; nv];
            obj[nv - 1] = 1.0;
            let mut prog = LinearProgram::new(obj);
            for t in 0..m {
                let mut row: Vec<f64> = columns
                    .iter()
                    .map(|(c, _)| if clicks(c, t) { -1.0 } else { 0.0 })
                    .collect();
                row.push(1.0);
                prog.add_row(row, Relation::Le, 0.0);
            }
            let mut sum = vec![1.0; nv];
            sum[nv - 1] = 0.0;
            prog.add_row(sum, Relation::Eq, 1.0);
            prog
        }
    };
    let sol = prog.solve()?;
    if sol.status != Status::Optimal {
        return Err(Error::Lp(format!("unexpected status {:?}", sol.status)));
    }
    let mut weights = BTreeMap::new();
    for (j, (_, code)) in columns.iter().enumerate() {
        if sol.x[j] > lp::LP_TOL {
            weights.insert(*code, sol.x[j]);
        }
    }
    Ok(ClickOptimum {
        objective,
        q_star: sol.value,
        distribution: LhvDistribution { shape, weights },
        strategies_visited: total,
        error_free,
        columns: columns.len(),
        promise_size: m,
        lp: Some((prog, sol)),
    })
}

/// Re-evaluate a mixture from scratch: check weights and error-freeness,
/// then return its objective value.
pub fn evaluate_distribution(
    p: &CorrelationProblem,
    nu: &LhvDistribution,
    objective: Objective,
    scan_limit: u128,
) -> Result<f64> {
    let total: f64 = nu.weights.values().sum();
    if nu.weights.values().any(|&w| w < -1e-12) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Inconsistent(format!("mixture weights invalid (sum {total})")));
    }
    for (lambda, _) in nu.strategies() {
        if !is_error_free(p, &lambda, scan_limit)? {
            return Err(Error::Inconsistent(format!(
                "strategy {} in the support is not error free",
                lambda.encode()
            )));
        }
    }
    let promise: Vec<Vec<u32>> = p.enumerate_promise(scan_limit)?.collect();
    if promise.is_empty() {
        return Ok(1.0);
    }
    let per_input: Vec<f64> = promise.iter().map(|x| nu.click_probability(x)).collect();
    Ok(match objective {
        Objective::Average => per_input.iter().sum::<f64>() / per_input.len() as f64,
        Objective::WorstCase => per_input.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// `η = q*^(1/n)`.
pub fn exact_eta_star(p: &CorrelationProblem, objective: Objective, limits: LhvLimits) -> Result<f64> {
    let opt = max_click_probability(p, objective, limits)?;
    Ok(eta_from_click(opt.q_star, p.shape().n))
}

pub fn eta_from_click(q: f64, n: usize) -> f64 {
    q.max(0.0).powf(1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmodel::DEFAULT_SCAN_LIMIT;
    use crate::ghz::{build_ghz_problem, GhzParams};

    fn ghz(n: usize, l: u32) -> CorrelationProblem {
        build_ghz_problem(GhzParams::new(n, l).unwrap())
    }

    #[test]
    fn strategy_counts() {
        let count = |n, k, d| {
            enumerate_strategies(Shape::new(n, k, d).unwrap(), DEFAULT_MAX_STRATEGIES, None)
                .unwrap()
                .count()
        };
        assert_eq!(count(1, 1, 1), 2);
        assert_eq!(count(2, 2, 2), 81);
        assert_eq!(count(2, 4, 2), 6561);
        assert!(enumerate_strategies(Shape::new(3, 4, 2).unwrap(), 1000, None).is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let shape = Shape::new(2, 3, 2).unwrap();
        for code in [0u128, 1, 17, 728] {
            let s = DeterministicLhv::decode(shape, code).unwrap();
            assert_eq!(s.encode(), code);
        }
        assert!(DeterministicLhv::decode(shape, 729).is_err());
    }

    #[test]
    fn click_indicator() {
        let shape = Shape::new(2, 2, 2).unwrap();
        let total = DeterministicLhv::from_fn(shape, |_, x| Some(x));
        for x in shape.inputs() {
            assert!(all_click(&total, &x));
        }
        let holes = DeterministicLhv::from_fn(shape, |i, x| (i != 0 || x != 1).then_some(0));
        assert!(all_click(&holes, &[0, 1]));
        assert!(!all_click(&holes, &[1, 0]));
        let first_zero = DeterministicLhv::from_fn(shape, |i, x| (i != 0 || x != 0).then_some(0));
        assert!(!all_click(&first_zero, &[0, 0]));
    }

    #[test]
    fn error_free_examples() {
        let p = ghz(2, 1);
        let identity = DeterministicLhv::from_fn(p.shape(), |_, x| Some(x));
        assert!(is_error_free(&p, &identity, DEFAULT_SCAN_LIMIT).unwrap());

        let p = ghz(2, 2);
        let zeros = DeterministicLhv::from_fn(p.shape(), |_, _| Some(0));
        assert!(!is_error_free(&p, &zeros, DEFAULT_SCAN_LIMIT).unwrap());

        let silent = DeterministicLhv::from_fn(p.shape(), |i, _| (i != 0).then_some(0));
        assert!(is_error_free(&p, &silent, DEFAULT_SCAN_LIMIT).unwrap());
    }

    #[test]
    fn classical_problem_clicks_always() {
        let p = ghz(2, 1);
        for obj in [Objective::Average, Objective::WorstCase] {
            let opt = max_click_probability(&p, obj, LhvLimits::default()).unwrap();
            assert!((opt.q_star - 1.0).abs() < 1e-12);
            let achieved = evaluate_distribution(&p, &opt.distribution, obj, DEFAULT_SCAN_LIMIT).unwrap();
            assert!((achieved - opt.q_star).abs() < 1e-9);
            assert_eq!(opt.certify().unwrap(), lp::ratio(1, 1));
        }
    }

    #[test]
    fn worst_case_never_exceeds_average() {
        let p = ghz(2, 2);
        let avg = max_click_probability(&p, Objective::Average, LhvLimits::default()).unwrap();
        let worst = max_click_probability(&p, Objective::WorstCase, LhvLimits::default()).unwrap();
        assert!(worst.q_star <= avg.q_star + 1e-12);
        for (opt, obj) in [(&avg, Objective::Average), (&worst, Objective::WorstCase)] {
            let again = evaluate_distribution(&p, &opt.distribution, obj, DEFAULT_SCAN_LIMIT).unwrap();
            assert!((again - opt.q_star).abs() < 1e-9);
            opt.certify().unwrap();
        }
    }

    #[test]
    fn empty_promise_is_vacuous() {
        let shape = Shape::new(2, 2, 2).unwrap();
        let p = CorrelationProblem::tabulated(shape, BTreeMap::new()).unwrap();
        let opt = max_click_probability(&p, Objective::WorstCase, LhvLimits::default()).unwrap();
        assert_eq!(opt.q_star, 1.0);
    }

    #[test]
    fn eta_from_q() {
        assert_eq!(eta_from_click(1.0, 7), 1.0);
        assert!((eta_from_click(0.25, 2) - 0.5).abs() < 1e-15);
    }
}
