//! Monochromatic rectangles and the exact computation of `r(P)`.
//!
//! A rectangle is a product `R_1 × … × R_n` of per-party input subsets. It is
//! `a`-monochromatic for a problem `P` when every promise input inside it
//! admits output `a`. `r(P)` is the largest number of promise inputs any
//! monochromatic rectangle can hold; every deterministic local strategy maps
//! each output to such a rectangle, which is what turns `r(P)` into bounds.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::corrmodel::CorrelationProblem;
use crate::error::{Error, Result};
use crate::ghz::{self, GhzParams};
use crate::lhv::DeterministicLhv;
use crate::space::{checked_pow, Odometer, Shape};

/// Default node budget for [`max_monochromatic_overlap`].
pub const DEFAULT_MAX_NODES: u64 = 50_000_000;

/// Largest per-party input alphabet a [`Rectangle`] can hold.
pub const MAX_RECT_INPUTS: u32 = 64;

/// Product of per-party input subsets, one bitmask per party.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rectangle {
    k: u32,
    masks: Vec<u64>,
}

impl Rectangle {
    pub fn from_masks(k: u32, masks: Vec<u64>) -> Result<Self> {
        if k == 0 || k > MAX_RECT_INPUTS {
            return Err(Error::InvalidParams(format!(
                "rectangles support 1..={MAX_RECT_INPUTS} inputs per party, got {k}"
            )));
        }
        let valid = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        if let Some(m) = masks.iter().find(|&&m| m & !valid != 0) {
            return Err(Error::out_of_range("rectangle member", 63 - m.leading_zeros(), k));
        }
        Ok(Rectangle { k, masks })
    }

    pub fn from_sets(k: u32, sets: &[Vec<u32>]) -> Result<Self> {
        let mut masks = Vec::with_capacity(sets.len());
        for set in sets {
            let mut m = 0u64;
            for &x in set {
                if x >= k || x >= MAX_RECT_INPUTS {
                    return Err(Error::out_of_range("rectangle member", x, k));
                }
                m |= 1 << x;
            }
            masks.push(m);
        }
        Self::from_masks(k, masks)
    }

    pub fn full(shape: Shape) -> Result<Self> {
        let all = if shape.k >= 64 { u64::MAX } else { (1u64 << shape.k) - 1 };
        Self::from_masks(shape.k, vec![all; shape.n])
    }

    pub fn parties(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    pub fn set(&self, party: usize) -> Vec<u32> {
        (0..self.k).filter(|&x| self.masks[party] >> x & 1 == 1).collect()
    }

    pub fn sets(&self) -> Vec<Vec<u32>> {
        (0..self.parties()).map(|i| self.set(i)).collect()
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        x.len() == self.masks.len() && x.iter().zip(&self.masks).all(|(&xi, &m)| xi < 64 && m >> xi & 1 == 1)
    }

    /// `|R| = Π|R_i|`, `None` on overflow.
    pub fn size(&self) -> Option<u128> {
        self.masks
            .iter()
            .try_fold(1u128, |acc, m| acc.checked_mul(m.count_ones() as u128))
    }

    pub fn is_empty(&self) -> bool {
        self.masks.contains(&0)
    }

    /// Points of the rectangle in lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        let sets = self.sets();
        let dims: Vec<usize> = sets.iter().map(Vec::len).collect();
        let total: usize = if dims.is_empty() { 1 } else { dims.iter().product() };
        (0..total).map(move |mut idx| {
            let mut x = vec![0u32; sets.len()];
            for i in (0..sets.len()).rev() {
                x[i] = sets[i][idx % dims[i]];
                idx /= dims[i];
            }
            x
        })
    }
}

impl Serialize for Rectangle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.sets().serialize(s)
    }
}

fn ensure_points(r: &Rectangle, limit: u128) -> Result<()> {
    let size = r.size().unwrap_or(u128::MAX);
    if size > limit {
        return Err(Error::TooLarge {
            what: "rectangle points",
            needed: size,
            limit,
        });
    }
    Ok(())
}

/// Every promise input in `R` admits `a`; vacuously true when `R ∩ D = ∅`.
pub fn is_monochromatic(p: &CorrelationProblem, r: &Rectangle, a: &[u32], limit: u128) -> Result<bool> {
    let shape = p.shape();
    shape.check_output(a)?;
    check_rect_shape(r, shape)?;
    ensure_points(r, limit)?;
    for x in r.points() {
        if p.in_promise_unchecked(&x) && p.prob_unchecked(&x, a) <= 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every promise input in `R` has forced output parity `b`.
pub fn b_monochromatic(params: GhzParams, r: &Rectangle, b: u8, limit: u128) -> Result<bool> {
    check_rect_shape(r, params.shape())?;
    ensure_points(r, limit)?;
    for x in r.points() {
        if ghz::promise_holds(params, &x) && ghz::parity_target(params, &x)? != b {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_rect_shape(r: &Rectangle, shape: Shape) -> Result<()> {
    if r.parties() != shape.n || r.k != shape.k {
        return Err(Error::InvalidParams(format!(
            "rectangle is {}-party over {} inputs, problem is {}-party over {}",
            r.parties(),
            r.k,
            shape.n,
            shape.k
        )));
    }
    Ok(())
}

/// Which outputs a rectangle is monochromatic for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// A single output vector `a`.
    Output(Vec<u32>),
    /// GHZ parity class `b`: every `a` with `Σa_i ≡ b (mod 2)`.
    Parity(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxOverlap {
    /// `r(P)`.
    pub r: u64,
    pub witness: Rectangle,
    pub label: Label,
    /// Search nodes visited.
    pub nodes: u64,
}

/// Per-point colouring of `{0..k-1}^n` for a single label.
#[derive(Debug, Clone)]
struct Grid {
    n: usize,
    k: u32,
    /// Promise inputs that admit the label.
    good: Vec<u64>,
    /// Promise inputs that do not admit it.
    bad: Vec<bool>,
}

/// Exact `r(P)` with a lexicographically first witness.
///
/// For GHZ problems the search runs over the two parity classes; otherwise it
/// runs once per distinct admissibility pattern of the output labels. Each
/// search is a depth-first branch and bound over per-party subsets: fixing
/// `R_1` collapses the problem to `n-1` parties with summed good counts and
/// OR-ed bad flags, and the number of good points that avoid every bad flag is
/// an upper bound for any completion. The last party takes every input that
/// keeps the rectangle clean.
pub fn max_monochromatic_overlap(p: &CorrelationProblem, scan_limit: u128, max_nodes: u64) -> Result<MaxOverlap> {
    let shape = p.shape();
    if shape.k > MAX_RECT_INPUTS {
        return Err(Error::InvalidParams(format!(
            "rectangle search supports k <= {MAX_RECT_INPUTS}, got {}",
            shape.k
        )));
    }
    let total = shape.input_count().unwrap_or(u128::MAX);
    if total > scan_limit {
        return Err(Error::TooLarge {
            what: "input vectors",
            needed: total,
            limit: scan_limit,
        });
    }
    let labelled = label_grids(p)?;
    let mut counter = NodeCounter {
        visited: 0,
        limit: max_nodes,
    };
    let mut best: Option<(u64, Vec<u64>, Label)> = None;
    for (label, grid) in labelled {
        let floor = best.as_ref().map(|b| b.0);
        if let Some((value, masks)) = search(&grid, floor, &mut counter)? {
            if floor.is_none_or(|f| value > f) {
                best = Some((value, masks, label));
            }
        }
    }
    let (r, masks, label) = best.expect("at least one label is searched");
    Ok(MaxOverlap {
        r,
        witness: Rectangle::from_masks(shape.k, masks)?,
        label,
        nodes: counter.visited,
    })
}

fn label_grids(p: &CorrelationProblem) -> Result<Vec<(Label, Grid)>> {
    let shape = p.shape();
    let cells = shape.input_count().expect("bounded by scan limit") as usize;
    if let Some(params) = ghz::ghz_params_of(p) {
        let mut grids = Vec::new();
        for b in 0..2u8 {
            let mut g = Grid::empty(shape, cells);
            for (idx, x) in Odometer::new(shape.n, shape.k).enumerate() {
                if ghz::promise_holds(params, &x) {
                    if ghz::parity_target(params, &x)? == b {
                        g.good[idx] = 1;
                    } else {
                        g.bad[idx] = true;
                    }
                }
            }
            grids.push((Label::Parity(b), g));
        }
        return Ok(grids);
    }
    let outputs = shape
        .output_count()
        .filter(|&c| c <= 1 << 20)
        .ok_or_else(|| Error::InvalidParams("too many output labels to search".into()))? as usize;
    let mut grids: Vec<Grid> = (0..outputs).map(|_| Grid::empty(shape, cells)).collect();
    for (idx, x) in Odometer::new(shape.n, shape.k).enumerate() {
        if !p.in_promise_unchecked(&x) {
            continue;
        }
        for (ai, a) in shape.outputs().enumerate() {
            if p.prob_unchecked(&x, &a) > 0.0 {
                grids[ai].good[idx] = 1;
            } else {
                grids[ai].bad[idx] = true;
            }
        }
    }
    // Labels with identical admissibility patterns share one search.
    let mut seen: BTreeMap<Vec<u8>, ()> = BTreeMap::new();
    let mut out = Vec::new();
    for (ai, g) in grids.into_iter().enumerate() {
        let key: Vec<u8> = g
            .good
            .iter()
            .zip(&g.bad)
            .map(|(&gd, &bd)| {
                if gd > 0 {
                    1
                } else if bd {
                    2
                } else {
                    0
                }
            })
            .collect();
        if seen.insert(key, ()).is_none() {
            out.push((Label::Output(shape.output_vector(ai)), g));
        }
    }
    Ok(out)
}

impl Grid {
    fn empty(shape: Shape, cells: usize) -> Self {
        Grid {
            n: shape.n,
            k: shape.k,
            good: vec![0; cells],
            bad: vec![false; cells],
        }
    }
}

struct NodeCounter {
    visited: u64,
    limit: u64,
}

impl NodeCounter {
    fn tick(&mut self) -> Result<()> {
        self.visited += 1;
        if self.visited > self.limit {
            return Err(Error::BudgetExceeded {
                visited: self.visited,
                limit: self.limit,
            });
        }
        Ok(())
    }
}

/// Best `(value, masks)` strictly above `floor`, if any.
fn search(grid: &Grid, floor: Option<u64>, counter: &mut NodeCounter) -> Result<Option<(u64, Vec<u64>)>> {
    let mut state = SearchState {
        k: grid.k,
        best: floor,
        best_masks: None,
        prefix: Vec::with_capacity(grid.n),
    };
    // An empty promise still has the empty-overlap rectangle as witness.
    if floor.is_none() && grid.good.iter().all(|&g| g == 0) {
        state.best = Some(0);
        state.best_masks = Some(vec![0; grid.n]);
    }
    descend(&mut state, grid.n, &grid.good, &grid.bad, counter)?;
    Ok(state.best_masks.map(|m| (state.best.unwrap(), m)))
}

struct SearchState {
    k: u32,
    best: Option<u64>,
    best_masks: Option<Vec<u64>>,
    prefix: Vec<u64>,
}

impl SearchState {
    fn beats(&self, value: u64) -> bool {
        self.best.is_none_or(|b| value > b)
    }
}

fn clean_value(good: &[u64], bad: &[bool]) -> u64 {
    good.iter().zip(bad).filter(|(_, &b)| !b).map(|(&g, _)| g).sum()
}

fn descend(st: &mut SearchState, parties: usize, good: &[u64], bad: &[bool], counter: &mut NodeCounter) -> Result<()> {
    let k = st.k as usize;
    if parties == 1 {
        counter.tick()?;
        let mut mask = 0u64;
        let mut value = 0u64;
        for x in 0..k {
            if !bad[x] && good[x] > 0 {
                mask |= 1 << x;
                value += good[x];
            }
        }
        if value > 0 && st.beats(value) {
            st.best = Some(value);
            let mut masks = st.prefix.clone();
            masks.push(mask);
            st.best_masks = Some(masks);
        }
        return Ok(());
    }
    let stride = good.len() / k;
    let mut sub_good = vec![0u64; stride];
    let mut sub_bad = vec![false; stride];
    let top: u64 = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    for mask in 1..=top {
        counter.tick()?;
        sub_good.iter_mut().for_each(|g| *g = 0);
        sub_bad.iter_mut().for_each(|b| *b = false);
        let mut bits = mask;
        while bits != 0 {
            let x = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let slice = x * stride..(x + 1) * stride;
            for (acc, &g) in sub_good.iter_mut().zip(&good[slice.clone()]) {
                *acc += g;
            }
            for (acc, &b) in sub_bad.iter_mut().zip(&bad[slice]) {
                *acc |= b;
            }
        }
        if !st.beats(clean_value(&sub_good, &sub_bad)) {
            continue;
        }
        st.prefix.push(mask);
        descend(st, parties - 1, &sub_good, &sub_bad, counter)?;
        st.prefix.pop();
    }
    Ok(())
}

/// `((2^l − 2)/n + 1)^n`, the analytic cap on GHZ monochromatic rectangles.
pub fn analytic_r_bound(n: usize, l: u32) -> f64 {
    let k = 2f64.powi(l as i32);
    ((k - 2.0) / n as f64 + 1.0).powi(n as i32)
}

/// `⌊((2^l − 2)/n + 1)^n⌋` computed exactly as `⌊(2^l − 2 + n)^n / n^n⌋`.
pub fn analytic_r_bound_floor(n: usize, l: u32) -> BigUint {
    let num = (BigUint::one() << l as usize) - 2u32 + n;
    let den = BigUint::from(n);
    num.pow(n as u32) / den.pow(n as u32)
}

/// `⌈|D| / r⌉`, the minimum number of monochromatic rectangles covering `D`.
pub fn cover_lower_bound(d_size: u128, r: u128) -> Result<u128> {
    if d_size == 0 {
        return Ok(0);
    }
    if r == 0 {
        return Err(Error::Inconsistent("r = 0 with a nonempty promise".into()));
    }
    Ok(d_size.div_ceil(r))
}

/// `|D| / r` for real-valued (analytic) `r`; the cover needs at least this many rectangles.
pub fn cover_ratio(d_size: f64, r: f64) -> Result<f64> {
    if d_size == 0.0 {
        return Ok(0.0);
    }
    if r <= 0.0 {
        return Err(Error::Inconsistent("r <= 0 with a nonempty promise".into()));
    }
    Ok(d_size / r)
}

/// `R_λ(a) = λ_1⁻¹(a_1) × … × λ_n⁻¹(a_n)`.
pub fn rectangle_of_strategy(lambda: &DeterministicLhv, a: &[u32]) -> Result<Rectangle> {
    let shape = lambda.shape();
    shape.check_output(a)?;
    let masks = (0..shape.n)
        .map(|i| {
            (0..shape.k)
                .filter(|&x| lambda.output(i, x) == Some(a[i]))
                .fold(0u64, |m, x| m | 1 << x)
        })
        .collect();
    Rectangle::from_masks(shape.k, masks)
}

/// `k^n` as a float for reporting.
pub fn input_space_size(shape: Shape) -> Option<u128> {
    checked_pow(shape.k as u128, shape.n)
}

/// Convenience: `analytic_r_bound_floor` as `u128` (saturating).
pub fn analytic_r_bound_floor_u128(n: usize, l: u32) -> u128 {
    analytic_r_bound_floor(n, l).to_u128().unwrap_or(u128::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmodel::DEFAULT_SCAN_LIMIT;
    use crate::ghz::build_ghz_problem;
    use std::collections::BTreeMap;

    fn ghz(n: usize, l: u32) -> CorrelationProblem {
        build_ghz_problem(GhzParams::new(n, l).unwrap())
    }

    fn rect(k: u32, sets: &[&[u32]]) -> Rectangle {
        let owned: Vec<Vec<u32>> = sets.iter().map(|s| s.to_vec()).collect();
        Rectangle::from_sets(k, &owned).unwrap()
    }

    /// Exhaustive oracle for two parties: every pair of subsets, every label class.
    fn brute_r_two_party(n_l: (usize, u32)) -> u64 {
        let params = GhzParams::new(n_l.0, n_l.1).unwrap();
        assert_eq!(params.n, 2);
        let k = params.k();
        let mut best = 0;
        for m0 in 0u64..1 << k {
            for m1 in 0u64..1 << k {
                let r = Rectangle::from_masks(k, vec![m0, m1]).unwrap();
                let inside: Vec<_> = r.points().filter(|x| ghz::promise_holds(params, x)).collect();
                let classes: std::collections::BTreeSet<_> =
                    inside.iter().map(|x| ghz::parity_target(params, x).unwrap()).collect();
                if classes.len() <= 1 {
                    best = best.max(inside.len() as u64);
                }
            }
        }
        best
    }

    #[test]
    fn monochromatic_examples() {
        let p = ghz(2, 2);
        let r = rect(4, &[&[1, 2], &[2, 3]]);
        assert!(is_monochromatic(&p, &r, &[0, 0], DEFAULT_SCAN_LIMIT).unwrap());
        assert!(!is_monochromatic(&p, &r, &[0, 1], DEFAULT_SCAN_LIMIT).unwrap());
        let mixed = rect(4, &[&[0, 2], &[0, 2]]);
        for a in p.shape().outputs() {
            assert!(!is_monochromatic(&p, &mixed, &a, DEFAULT_SCAN_LIMIT).unwrap());
        }
        let off = rect(4, &[&[0], &[1]]);
        for a in p.shape().outputs() {
            assert!(is_monochromatic(&p, &off, &a, DEFAULT_SCAN_LIMIT).unwrap());
        }
    }

    #[test]
    fn b_monochromatic_examples() {
        let q = GhzParams::new(2, 2).unwrap();
        let r = rect(4, &[&[1, 2], &[2, 3]]);
        assert!(b_monochromatic(q, &r, 0, DEFAULT_SCAN_LIMIT).unwrap());
        assert!(!b_monochromatic(q, &r, 1, DEFAULT_SCAN_LIMIT).unwrap());
        let full = Rectangle::full(q.shape()).unwrap();
        assert!(!b_monochromatic(q, &full, 0, DEFAULT_SCAN_LIMIT).unwrap());
        assert!(b_monochromatic(q, &rect(4, &[&[0], &[1]]), 1, DEFAULT_SCAN_LIMIT).unwrap());
    }

    #[test]
    fn two_party_search_matches_brute_force() {
        for nl in [(2, 1), (2, 2), (2, 3)] {
            let got = max_monochromatic_overlap(&ghz(nl.0, nl.1), DEFAULT_SCAN_LIMIT, DEFAULT_MAX_NODES).unwrap();
            assert_eq!(got.r, brute_r_two_party(nl), "{nl:?}");
        }
    }

    #[test]
    fn n2_l2_has_r_two_with_valid_witness() {
        let p = ghz(2, 2);
        let got = max_monochromatic_overlap(&p, DEFAULT_SCAN_LIMIT, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(got.r, 2);
        let Label::Parity(b) = got.label else { panic!() };
        let q = GhzParams::new(2, 2).unwrap();
        assert!(b_monochromatic(q, &got.witness, b, DEFAULT_SCAN_LIMIT).unwrap());
        let overlap = got.witness.points().filter(|x| ghz::promise_holds(q, x)).count();
        assert_eq!(overlap, 2);
    }

    #[test]
    fn search_is_within_analytic_bound() {
        for (n, l) in [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)] {
            let got = max_monochromatic_overlap(&ghz(n, l), DEFAULT_SCAN_LIMIT, DEFAULT_MAX_NODES).unwrap();
            assert!(
                BigUint::from(got.r) <= analytic_r_bound_floor(n, l),
                "({n},{l}) r={}",
                got.r
            );
        }
    }

    #[test]
    fn generic_labels_agree_with_parity_classes() {
        // Same GHZ problem as an explicit table: labels are output vectors.
        let p = ghz(2, 2).materialize(DEFAULT_SCAN_LIMIT).unwrap();
        let got = max_monochromatic_overlap(&p, DEFAULT_SCAN_LIMIT, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(got.r, 2);
        let Label::Output(a) = &got.label else { panic!() };
        assert!(is_monochromatic(&p, &got.witness, a, DEFAULT_SCAN_LIMIT).unwrap());
    }

    #[test]
    fn budget_is_reported_not_truncated() {
        let p = ghz(3, 2);
        assert!(matches!(
            max_monochromatic_overlap(&p, DEFAULT_SCAN_LIMIT, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn empty_promise_gives_zero() {
        let shape = Shape::new(2, 2, 2).unwrap();
        let p = CorrelationProblem::tabulated(shape, BTreeMap::new()).unwrap();
        let got = max_monochromatic_overlap(&p, DEFAULT_SCAN_LIMIT, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(got.r, 0);
    }

    #[test]
    fn analytic_bound_values() {
        assert_eq!(analytic_r_bound(2, 2), 4.0);
        assert_eq!(analytic_r_bound(1, 1), 1.0);
        assert_eq!(analytic_r_bound(8, 5), 4.75f64.powi(8));
        assert_eq!(analytic_r_bound_floor_u128(3, 2), 4);
        assert_eq!(analytic_r_bound_floor_u128(2, 2), 4);
        assert_eq!(analytic_r_bound_floor_u128(8, 5), 4.75f64.powi(8).floor() as u128);
    }

    #[test]
    fn cover_bounds() {
        assert_eq!(cover_lower_bound(8, 2).unwrap(), 4);
        assert_eq!(cover_lower_bound(9, 2).unwrap(), 5);
        assert_eq!(cover_lower_bound(0, 0).unwrap(), 0);
        assert!(cover_lower_bound(8, 0).is_err());
        let c = cover_ratio(2f64.powi(35), 4.75f64.powi(8)).unwrap();
        assert!((c - 2f64.powi(35) / 4.75f64.powi(8)).abs() < 1e-6);
    }

    #[test]
    fn strategy_preimages() {
        let shape = Shape::new(2, 2, 2).unwrap();
        let constant = DeterministicLhv::from_fn(shape, |_, _| Some(1));
        let full = rectangle_of_strategy(&constant, &[1, 1]).unwrap();
        assert_eq!(full, Rectangle::full(shape).unwrap());
        let identity = DeterministicLhv::from_fn(shape, |_, x| Some(x));
        let r = rectangle_of_strategy(&identity, &[0, 1]).unwrap();
        assert_eq!(r.sets(), vec![vec![0], vec![1]]);
        let empty = rectangle_of_strategy(&constant, &[0, 1]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.size(), Some(0));
    }

    #[test]
    fn rectangle_basics() {
        let r = rect(4, &[&[0, 3], &[1, 2, 3]]);
        assert_eq!(r.size(), Some(6));
        assert!(r.contains(&[3, 2]));
        assert!(!r.contains(&[1, 2]));
        assert_eq!(r.points().count(), 6);
        assert!(Rectangle::from_sets(4, &[vec![4]]).is_err());
        assert_eq!(serde_json::to_string(&r).unwrap(), "[[0,3],[1,2,3]]");
    }
}
