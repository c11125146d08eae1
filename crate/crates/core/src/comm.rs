//! Broadcast communication protocols with shared randomness.
//!
//! A protocol is a binary tree. At an internal node one party broadcasts a
//! bit computed from its own input and the shared random value; at a leaf
//! each party outputs a symbol computed the same way. For a fixed random
//! value the inputs reaching a leaf form a rectangle, and splitting it by the
//! output vector gives the leaf rectangles `R(leaf, a)`. A protocol that only
//! produces admissible outputs therefore covers the promise with
//! monochromatic rectangles, at most `2^c · d^n` of them.
//!
//! [`protocol_to_lhv`] turns a protocol into a local model with no-click
//! outcomes: a conversation is drawn up front, and a party clicks only if its
//! input is consistent with every message it sends in that conversation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corrmodel::CorrelationProblem;
use crate::error::{Error, Result};
use crate::lhv::DeterministicLhv;
use crate::rectangles::{is_monochromatic, Rectangle, MAX_RECT_INPUTS};
use crate::space::Shape;

pub const PROTOCOL_SCHEMA_VERSION: &str = "1";

/// Largest bit count accepted by [`ghz_broadcast_protocol`].
pub const MAX_EXPLICIT_PROTOCOL_BITS: u32 = 16;

/// Exact probability weight, serialized as `"p/q"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Weight(pub BigRational);

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Weight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| BigInt::from_str(t.trim()).map_err(|e| Error::Schema(format!("weight {s:?}: {e}")));
        let r = match s.split_once('/') {
            Some((num, den)) => {
                let den = parse(den)?;
                if den.is_zero() {
                    return Err(Error::Schema(format!("weight {s:?} has zero denominator")));
                }
                BigRational::new(parse(num)?, den)
            }
            None => BigRational::from_integer(parse(s)?),
        };
        Ok(Weight(r))
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomnessDomain {
    pub values: usize,
    pub weights: Vec<Weight>,
}

impl RandomnessDomain {
    pub fn trivial() -> Self {
        RandomnessDomain {
            values: 1,
            weights: vec![Weight(BigRational::one())],
        }
    }

    pub fn uniform(values: usize) -> Self {
        let w = BigRational::new(BigInt::one(), BigInt::from(values));
        RandomnessDomain {
            values,
            weights: vec![Weight(w); values],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values == 0 || self.weights.len() != self.values {
            return Err(Error::Schema("randomness domain needs one weight per value".into()));
        }
        if self.weights.iter().any(|w| w.0 < BigRational::zero()) {
            return Err(Error::Schema("negative randomness weight".into()));
        }
        let total: BigRational = self.weights.iter().map(|w| w.0.clone()).sum();
        if total != BigRational::one() {
            return Err(Error::Schema(format!("randomness weights sum to {total}")));
        }
        Ok(())
    }
}

/// Per-party tables are indexed `[random value][input]`. A table with a
/// single row ignores the random value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProtocolNode {
    Speak {
        speaker: usize,
        msg_table: Vec<Vec<u8>>,
        children: Box<[ProtocolNode; 2]>,
    },
    Leaf {
        output_tables: Vec<Vec<Vec<u32>>>,
    },
}

fn lookup<T: Copy>(table: &[Vec<T>], rand: usize, x: u32) -> T {
    let row = if table.len() == 1 { &table[0] } else { &table[rand] };
    row[x as usize]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolTree {
    pub n: usize,
    pub k: u32,
    pub d: u32,
    pub randomness: RandomnessDomain,
    pub root: ProtocolNode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub transcript: Vec<u8>,
    pub outputs: Vec<u32>,
    /// Leaf number in depth-first order (child 0 first).
    pub leaf: usize,
}

/// One nonempty leaf rectangle `R(leaf, a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafRectangle {
    pub leaf: usize,
    pub transcript: Vec<u8>,
    pub a: Vec<u32>,
    pub rect: Rectangle,
}

/// Inputs consistent with one root-to-leaf path, per party.
#[derive(Debug, Clone)]
struct LeafRegion<'a> {
    leaf: usize,
    transcript: Vec<u8>,
    masks: Vec<u64>,
    outputs: &'a [Vec<Vec<u32>>],
}

impl ProtocolTree {
    pub fn new(shape: Shape, randomness: RandomnessDomain, root: ProtocolNode) -> Result<Self> {
        let t = ProtocolTree {
            n: shape.n,
            k: shape.k,
            d: shape.d,
            randomness,
            root,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn shape(&self) -> Shape {
        Shape {
            n: self.n,
            k: self.k,
            d: self.d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Shape::new(self.n, self.k, self.d)?;
        if self.k > MAX_RECT_INPUTS {
            return Err(Error::Schema(format!("protocols support k <= {MAX_RECT_INPUTS}")));
        }
        self.randomness.validate()?;
        self.validate_node(&self.root)
    }

    fn check_table<T: Copy + Into<u64>>(&self, table: &[Vec<T>], bound: u64, what: &'static str) -> Result<()> {
        if table.len() != 1 && table.len() != self.randomness.values {
            return Err(Error::Schema(format!(
                "{what} has {} rows, expected 1 or {}",
                table.len(),
                self.randomness.values
            )));
        }
        for row in table {
            if row.len() != self.k as usize {
                return Err(Error::Schema(format!(
                    "{what} row has {} entries, expected {}",
                    row.len(),
                    self.k
                )));
            }
            if let Some(&v) = row.iter().find(|&&v| v.into() >= bound) {
                return Err(Error::out_of_range(what, v.into(), bound));
            }
        }
        Ok(())
    }

    fn validate_node(&self, node: &ProtocolNode) -> Result<()> {
        match node {
            ProtocolNode::Speak {
                speaker,
                msg_table,
                children,
            } => {
                if *speaker >= self.n {
                    return Err(Error::Schema(format!("speaker {speaker} >= n = {}", self.n)));
                }
                self.check_table(msg_table, 2, "message bit")?;
                self.validate_node(&children[0])?;
                self.validate_node(&children[1])
            }
            ProtocolNode::Leaf { output_tables } => {
                if output_tables.len() != self.n {
                    return Err(Error::Schema(format!(
                        "leaf has {} output tables, expected {}",
                        output_tables.len(),
                        self.n
                    )));
                }
                for t in output_tables {
                    self.check_table(t, self.d as u64, "output symbol")?;
                }
                Ok(())
            }
        }
    }

    /// Communication cost `c`: the depth of the tree.
    pub fn bits(&self) -> u32 {
        fn depth(n: &ProtocolNode) -> u32 {
            match n {
                ProtocolNode::Speak { children, .. } => 1 + depth(&children[0]).max(depth(&children[1])),
                ProtocolNode::Leaf { .. } => 0,
            }
        }
        depth(&self.root)
    }

    pub fn leaf_count(&self) -> usize {
        fn count(n: &ProtocolNode) -> usize {
            match n {
                ProtocolNode::Speak { children, .. } => count(&children[0]) + count(&children[1]),
                ProtocolNode::Leaf { .. } => 1,
            }
        }
        count(&self.root)
    }

    fn check_rand(&self, rand: usize) -> Result<()> {
        if rand >= self.randomness.values {
            return Err(Error::out_of_range(
                "random value",
                rand as u64,
                self.randomness.values as u64,
            ));
        }
        Ok(())
    }

    fn regions(&self, rand: usize) -> Vec<LeafRegion<'_>> {
        let full = if self.k == 64 { u64::MAX } else { (1u64 << self.k) - 1 };
        let mut out = Vec::new();
        let mut counter = 0usize;
        self.collect_regions(&self.root, rand, vec![full; self.n], Vec::new(), &mut counter, &mut out);
        out
    }

    fn collect_regions<'a>(
        &'a self,
        node: &'a ProtocolNode,
        rand: usize,
        masks: Vec<u64>,
        transcript: Vec<u8>,
        counter: &mut usize,
        out: &mut Vec<LeafRegion<'a>>,
    ) {
        match node {
            ProtocolNode::Leaf { output_tables } => {
                out.push(LeafRegion {
                    leaf: *counter,
                    transcript,
                    masks,
                    outputs: output_tables,
                });
                *counter += 1;
            }
            ProtocolNode::Speak {
                speaker,
                msg_table,
                children,
            } => {
                for bit in 0..2u8 {
                    let mut m = masks.clone();
                    let allowed = (0..self.k)
                        .filter(|&x| lookup(msg_table, rand, x) == bit)
                        .fold(0u64, |acc, x| acc | 1 << x);
                    m[*speaker] &= allowed;
                    let mut t = transcript.clone();
                    t.push(bit);
                    self.collect_regions(&children[bit as usize], rand, m, t, counter, out);
                }
            }
        }
    }
}

/// Execute the protocol on input `x` with random value `rand`.
pub fn run_protocol(t: &ProtocolTree, x: &[u32], rand: usize) -> Result<Run> {
    t.shape().check_input(x)?;
    t.check_rand(rand)?;
    let mut node = &t.root;
    let mut transcript = Vec::new();
    // Leaf numbering: leaves left of the taken path.
    let mut leaf = 0usize;
    loop {
        match node {
            ProtocolNode::Speak {
                speaker,
                msg_table,
                children,
            } => {
                let bit = lookup(msg_table, rand, x[*speaker]);
                transcript.push(bit);
                if bit == 1 {
                    leaf += count_leaves(&children[0]);
                }
                node = &children[bit as usize];
            }
            ProtocolNode::Leaf { output_tables } => {
                let outputs = output_tables
                    .iter()
                    .zip(x)
                    .map(|(tab, &xi)| lookup(tab, rand, xi))
                    .collect();
                return Ok(Run {
                    transcript,
                    outputs,
                    leaf,
                });
            }
        }
    }
}

fn count_leaves(n: &ProtocolNode) -> usize {
    match n {
        ProtocolNode::Speak { children, .. } => count_leaves(&children[0]) + count_leaves(&children[1]),
        ProtocolNode::Leaf { .. } => 1,
    }
}

/// Nonempty rectangles `R(leaf, a)` for one random value.
pub fn leaf_rectangles(t: &ProtocolTree, rand: usize) -> Result<Vec<LeafRectangle>> {
    t.check_rand(rand)?;
    let shape = t.shape();
    let mut out = Vec::new();
    for region in t.regions(rand) {
        if region.masks.contains(&0) {
            continue;
        }
        // Split each party's set by its output symbol.
        let per_party: Vec<BTreeMap<u32, u64>> = (0..shape.n)
            .map(|i| {
                let mut by_symbol: BTreeMap<u32, u64> = BTreeMap::new();
                for x in 0..shape.k {
                    if region.masks[i] >> x & 1 == 1 {
                        *by_symbol.entry(lookup(&region.outputs[i], rand, x)).or_default() |= 1 << x;
                    }
                }
                by_symbol
            })
            .collect();
        let mut combos: Vec<(Vec<u32>, Vec<u64>)> = vec![(Vec::new(), Vec::new())];
        for party in &per_party {
            let mut next = Vec::with_capacity(combos.len() * party.len());
            for (a, masks) in &combos {
                for (&sym, &mask) in party {
                    let mut a2 = a.clone();
                    a2.push(sym);
                    let mut m2 = masks.clone();
                    m2.push(mask);
                    next.push((a2, m2));
                }
            }
            combos = next;
        }
        for (a, masks) in combos {
            out.push(LeafRectangle {
                leaf: region.leaf,
                transcript: region.transcript.clone(),
                a,
                rect: Rectangle::from_masks(shape.k, masks)?,
            });
        }
    }
    Ok(out)
}

fn check_problem(t: &ProtocolTree, p: &CorrelationProblem) -> Result<()> {
    if t.shape() != p.shape() {
        return Err(Error::InvalidParams(format!(
            "protocol shape {:?} differs from problem {:?}",
            t.shape(),
            p.shape()
        )));
    }
    Ok(())
}

/// Every leaf rectangle, for every random value in the support, is
/// monochromatic for its output vector.
pub fn verify_admissible(t: &ProtocolTree, p: &CorrelationProblem, scan_limit: u128) -> Result<bool> {
    check_problem(t, p)?;
    for (rand, w) in t.randomness.weights.iter().enumerate() {
        if w.0.is_zero() {
            continue;
        }
        for lr in leaf_rectangles(t, rand)? {
            if !is_monochromatic(p, &lr.rect, &lr.a, scan_limit)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// How output distributions are compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Compare {
    /// Exact rational equality (problem floats are read as exact dyadics).
    Exact,
    Tolerance(f64),
}

/// Output distribution of the protocol on `x`, indexed by output rank.
pub fn output_distribution(t: &ProtocolTree, x: &[u32]) -> Result<BTreeMap<usize, BigRational>> {
    let shape = t.shape();
    let mut dist: BTreeMap<usize, BigRational> = BTreeMap::new();
    for (rand, w) in t.randomness.weights.iter().enumerate() {
        if w.0.is_zero() {
            continue;
        }
        let run = run_protocol(t, x, rand)?;
        *dist
            .entry(shape.output_index(&run.outputs))
            .or_insert_with(BigRational::zero) += &w.0;
    }
    Ok(dist)
}

fn matches(expected: &[f64], got: &BTreeMap<usize, BigRational>, cmp: Compare) -> bool {
    expected.iter().enumerate().all(|(ai, &pv)| {
        let zero = BigRational::zero();
        let g = got.get(&ai).unwrap_or(&zero);
        match cmp {
            Compare::Exact => BigRational::from_float(pv).is_some_and(|e| &e == g),
            Compare::Tolerance(tol) => {
                let gf = rational_to_f64(g);
                (gf - pv).abs() <= tol
            }
        }
    })
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// For every promise input the protocol's output law equals `P(·|X)`.
pub fn verify_reproduces(t: &ProtocolTree, p: &CorrelationProblem, cmp: Compare, scan_limit: u128) -> Result<bool> {
    check_problem(t, p)?;
    for x in p.enumerate_promise(scan_limit)? {
        let expected = p.distribution(&x)?;
        if !matches(&expected, &output_distribution(t, &x)?, cmp) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A local model with no-click outcomes built from a protocol.
#[derive(Debug, Clone, Serialize)]
pub struct DetectorModel {
    pub shape: Shape,
    /// Number of conversations `(random value, leaf)` with positive weight.
    pub conversations: usize,
    pub components: Vec<DetectorComponent>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectorComponent {
    pub weight: Weight,
    pub rand: usize,
    pub leaf: usize,
    pub strategy: DeterministicLhv,
}

impl DetectorModel {
    /// Probability that every detector clicks on `x`.
    pub fn all_click_probability(&self, x: &[u32]) -> BigRational {
        self.components
            .iter()
            .filter(|c| crate::lhv::all_click(&c.strategy, x))
            .map(|c| c.weight.0.clone())
            .sum()
    }

    /// Output law on `x` conditioned on every detector clicking.
    pub fn conditional_distribution(&self, x: &[u32]) -> Option<BTreeMap<usize, BigRational>> {
        let total = self.all_click_probability(x);
        if total.is_zero() {
            return None;
        }
        let mut dist: BTreeMap<usize, BigRational> = BTreeMap::new();
        for c in &self.components {
            if let Some(a) = c.strategy.response(x) {
                *dist
                    .entry(self.shape.output_index(&a))
                    .or_insert_with(BigRational::zero) += &c.weight.0;
            }
        }
        for v in dist.values_mut() {
            *v /= &total;
        }
        Some(dist)
    }

    /// The all-click probability if it is the same on every promise input.
    pub fn input_independent_click(&self, p: &CorrelationProblem, scan_limit: u128) -> Result<Option<BigRational>> {
        let mut seen: Option<BigRational> = None;
        for x in p.enumerate_promise(scan_limit)? {
            let q = self.all_click_probability(&x);
            match &seen {
                None => seen = Some(q),
                Some(s) if *s != q => return Ok(None),
                _ => {}
            }
        }
        Ok(seen)
    }

    /// Conditional output law equals `P(·|X)` on every promise input.
    pub fn reproduces(&self, p: &CorrelationProblem, cmp: Compare, scan_limit: u128) -> Result<bool> {
        for x in p.enumerate_promise(scan_limit)? {
            let Some(dist) = self.conditional_distribution(&x) else {
                return Ok(false);
            };
            if !matches(&p.distribution(&x)?, &dist, cmp) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Draw a random value, then one of its reachable conversations uniformly.
///
/// In conversation `(r, leaf)` party `i` clicks on `x_i` iff `x_i` would send
/// every message party `i` sends on that path, and then outputs what the
/// leaf prescribes. The protocol must reproduce `P` exactly.
pub fn protocol_to_lhv(t: &ProtocolTree, p: &CorrelationProblem, scan_limit: u128) -> Result<DetectorModel> {
    if !verify_reproduces(t, p, Compare::Exact, scan_limit)? {
        return Err(Error::Protocol("protocol does not reproduce the problem".into()));
    }
    let shape = t.shape();
    let mut components = Vec::new();
    for (rand, w) in t.randomness.weights.iter().enumerate() {
        if w.0.is_zero() {
            continue;
        }
        let reachable: Vec<LeafRegion<'_>> = t
            .regions(rand)
            .into_iter()
            .filter(|r| r.masks.iter().all(|&m| m != 0))
            .collect();
        let share = &w.0 / BigRational::from_integer(BigInt::from(reachable.len()));
        for region in reachable {
            let strategy = DeterministicLhv::from_fn(shape, |i, x| {
                (region.masks[i] >> x & 1 == 1).then(|| lookup(&region.outputs[i], rand, x))
            });
            components.push(DetectorComponent {
                weight: Weight(share.clone()),
                rand,
                leaf: region.leaf,
                strategy,
            });
        }
    }
    Ok(DetectorModel {
        shape,
        conversations: components.len(),
        components,
    })
}

/// Bit count `(n-1)·l` of the GHZ broadcast protocol.
pub fn ghz_broadcast_bits(n: usize, l: u32) -> u64 {
    (n as u64 - 1) * l as u64
}

/// Parties 2..n broadcast their inputs bit by bit (most significant first).
/// Shared randomness supplies uniform bits `r_2..r_n`; party `i >= 2` outputs
/// `r_i` and party 1 outputs `b ⊕ r_2 ⊕ … ⊕ r_n`, where `b` is bit `l-1` of
/// `ΣX_i mod 2^l`, which is the forced parity on promise inputs.
pub fn ghz_broadcast_protocol(n: usize, l: u32) -> Result<ProtocolTree> {
    let params = crate::ghz::GhzParams::new(n, l)?;
    let bits = ghz_broadcast_bits(n, l);
    if bits > MAX_EXPLICIT_PROTOCOL_BITS as u64 || n - 1 > 16 || params.k() > MAX_RECT_INPUTS {
        return Err(Error::TooLarge {
            what: "protocol tree leaves",
            needed: 1u128 << bits.min(127),
            limit: 1u128 << MAX_EXPLICIT_PROTOCOL_BITS,
        });
    }
    let k = params.k();
    let rand_values = 1usize << (n - 1);
    let shape = params.shape();
    let root = broadcast_node(params, rand_values, 1, 0, &mut Vec::new());
    let t = ProtocolTree::new(shape, RandomnessDomain::uniform(rand_values), root)?;
    debug_assert_eq!(t.bits() as u64, bits);
    debug_assert!(k >= 2);
    Ok(t)
}

fn broadcast_node(
    params: crate::ghz::GhzParams,
    rand_values: usize,
    party: usize,
    bit: u32,
    heard: &mut Vec<u32>,
) -> ProtocolNode {
    let (n, l, k) = (params.n, params.l, params.k());
    if party == n {
        // heard holds the bits of X_2..X_n, most significant first.
        let known: u64 = heard
            .chunks(l as usize)
            .map(|chunk| chunk.iter().fold(0u64, |v, &b| v << 1 | b as u64))
            .sum();
        let mut tables = Vec::with_capacity(n);
        let first: Vec<Vec<u32>> = (0..rand_values)
            .map(|r| {
                let mask = r.count_ones() & 1;
                (0..k)
                    .map(|x1| {
                        let sum = (known + x1 as u64) & ((1u64 << l) - 1);
                        let b = (sum >> (l - 1)) as u32 & 1;
                        b ^ mask
                    })
                    .collect()
            })
            .collect();
        tables.push(first);
        for i in 1..n {
            let t: Vec<Vec<u32>> = (0..rand_values)
                .map(|r| vec![(r >> (i - 1)) as u32 & 1; k as usize])
                .collect();
            tables.push(t);
        }
        return ProtocolNode::Leaf { output_tables: tables };
    }
    let shift = l - 1 - bit;
    let msg_table = vec![(0..k).map(|x| (x >> shift & 1) as u8).collect()];
    let (next_party, next_bit) = if bit + 1 == l { (party + 1, 0) } else { (party, bit + 1) };
    let mut child = |b: u32| {
        heard.push(b);
        let node = broadcast_node(params, rand_values, next_party, next_bit, heard);
        heard.pop();
        node
    };
    let c0 = child(0);
    let c1 = child(1);
    ProtocolNode::Speak {
        speaker: party,
        msg_table,
        children: Box::new([c0, c1]),
    }
}

pub fn protocol_from_json(text: &str) -> Result<ProtocolTree> {
    let t: ProtocolTree = serde_json::from_str(text)?;
    t.validate()?;
    Ok(t)
}

pub fn load_protocol(path: impl AsRef<Path>) -> Result<ProtocolTree> {
    protocol_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_protocol(t: &ProtocolTree, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(t)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmodel::DEFAULT_SCAN_LIMIT;
    use crate::ghz::{build_ghz_problem, parity_target, GhzParams};

    const LIMIT: u128 = DEFAULT_SCAN_LIMIT;

    fn constant_protocol(shape: Shape, out: u32) -> ProtocolTree {
        let tables = vec![vec![vec![out; shape.k as usize]]; shape.n];
        ProtocolTree::new(
            shape,
            RandomnessDomain::trivial(),
            ProtocolNode::Leaf { output_tables: tables },
        )
        .unwrap()
    }

    /// Party 1 announces `X_1 mod 2`; everyone outputs 0.
    fn parity_announcement(k: u32) -> ProtocolTree {
        let shape = Shape::new(2, k, 2).unwrap();
        let leaf = || ProtocolNode::Leaf {
            output_tables: vec![vec![vec![0; k as usize]]; 2],
        };
        let root = ProtocolNode::Speak {
            speaker: 0,
            msg_table: vec![(0..k).map(|x| (x % 2) as u8).collect()],
            children: Box::new([leaf(), leaf()]),
        };
        ProtocolTree::new(shape, RandomnessDomain::trivial(), root).unwrap()
    }

    #[test]
    fn runs() {
        let c = constant_protocol(Shape::new(2, 4, 2).unwrap(), 1);
        let run = run_protocol(&c, &[3, 2], 0).unwrap();
        assert!(run.transcript.is_empty());
        assert_eq!(run.outputs, vec![1, 1]);

        let t = parity_announcement(4);
        assert_eq!(run_protocol(&t, &[3, 0], 0).unwrap().transcript, vec![1]);
        assert_eq!(run_protocol(&t, &[2, 0], 0).unwrap().transcript, vec![0]);

        let g = ghz_broadcast_protocol(2, 2).unwrap();
        let q = GhzParams::new(2, 2).unwrap();
        for r in 0..2 {
            let run = run_protocol(&g, &[1, 3], r).unwrap();
            assert_eq!(run.transcript, vec![1, 1]);
            let parity = run.outputs.iter().sum::<u32>() % 2;
            assert_eq!(parity as u8, parity_target(q, &[1, 3]).unwrap());
        }
    }

    #[test]
    fn leaf_rectangle_examples() {
        let shape = Shape::new(2, 4, 2).unwrap();
        let c = constant_protocol(shape, 0);
        let rects = leaf_rectangles(&c, 0).unwrap();
        assert_eq!(rects.len(), 1);
        assert_eq!(rects[0].rect, Rectangle::full(shape).unwrap());

        let t = parity_announcement(4);
        let rects = leaf_rectangles(&t, 0).unwrap();
        assert_eq!(rects.len(), 2);
        assert_eq!(rects[0].rect.sets(), vec![vec![0, 2], vec![0, 1, 2, 3]]);
        assert_eq!(rects[1].rect.sets(), vec![vec![1, 3], vec![0, 1, 2, 3]]);
    }

    #[test]
    fn leaf_rectangles_partition_inputs() {
        for (n, l) in [(2, 1), (2, 2), (3, 2)] {
            let t = ghz_broadcast_protocol(n, l).unwrap();
            for rand in 0..t.randomness.values {
                let rects = leaf_rectangles(&t, rand).unwrap();
                assert!(rects.len() as u128 <= (1u128 << t.bits()) * (1u128 << n));
                for x in t.shape().inputs() {
                    let owners: Vec<_> = rects.iter().filter(|r| r.rect.contains(&x)).collect();
                    assert_eq!(owners.len(), 1, "{x:?}");
                    let run = run_protocol(&t, &x, rand).unwrap();
                    assert_eq!(owners[0].a, run.outputs);
                    assert_eq!(owners[0].leaf, run.leaf);
                    assert_eq!(owners[0].transcript, run.transcript);
                }
            }
        }
    }

    #[test]
    fn ghz_protocol_is_correct() {
        for (n, l) in [(2, 2), (3, 2)] {
            let t = ghz_broadcast_protocol(n, l).unwrap();
            assert_eq!(t.bits() as u64, ghz_broadcast_bits(n, l));
            let p = build_ghz_problem(GhzParams::new(n, l).unwrap());
            assert!(verify_admissible(&t, &p, LIMIT).unwrap());
            assert!(verify_reproduces(&t, &p, Compare::Exact, LIMIT).unwrap());
            assert!(verify_reproduces(&t, &p, Compare::Tolerance(1e-12), LIMIT).unwrap());
        }
        assert_eq!(ghz_broadcast_bits(8, 5), 35);
        assert!(ghz_broadcast_protocol(8, 5).is_err());
    }

    #[test]
    fn flipped_output_is_caught() {
        let mut t = ghz_broadcast_protocol(2, 2).unwrap();
        fn flip(node: &mut ProtocolNode) {
            match node {
                ProtocolNode::Speak { children, .. } => {
                    flip(&mut children[0]);
                    flip(&mut children[1]);
                }
                ProtocolNode::Leaf { output_tables } => {
                    for row in output_tables[0].iter_mut() {
                        row.iter_mut().for_each(|v| *v ^= 1);
                    }
                }
            }
        }
        flip(&mut t.root);
        let p = build_ghz_problem(GhzParams::new(2, 2).unwrap());
        assert!(!verify_admissible(&t, &p, LIMIT).unwrap());
        assert!(!verify_reproduces(&t, &p, Compare::Exact, LIMIT).unwrap());
        assert!(protocol_to_lhv(&t, &p, LIMIT).is_err());
    }

    #[test]
    fn deterministic_protocol_cannot_split_outcomes() {
        fn first_row(node: &mut ProtocolNode) {
            match node {
                ProtocolNode::Speak { children, .. } => {
                    first_row(&mut children[0]);
                    first_row(&mut children[1]);
                }
                ProtocolNode::Leaf { output_tables } => output_tables.iter_mut().for_each(|t| t.truncate(1)),
            }
        }
        let t = ghz_broadcast_protocol(2, 2).unwrap();
        let mut root = t.root.clone();
        first_row(&mut root);
        let fixed = ProtocolTree::new(t.shape(), RandomnessDomain::trivial(), root).unwrap();
        let p = build_ghz_problem(GhzParams::new(2, 2).unwrap());
        assert!(verify_admissible(&fixed, &p, LIMIT).unwrap());
        assert!(!verify_reproduces(&fixed, &p, Compare::Exact, LIMIT).unwrap());
    }

    #[test]
    fn empty_promise_is_vacuous() {
        let shape = Shape::new(2, 2, 2).unwrap();
        let p = CorrelationProblem::tabulated(shape, BTreeMap::new()).unwrap();
        let c = constant_protocol(shape, 1);
        assert!(verify_admissible(&c, &p, LIMIT).unwrap());
    }

    #[test]
    fn point_distribution_is_reproduced() {
        let shape = Shape::new(2, 2, 2).unwrap();
        let rows = shape.inputs().map(|x| (x, vec![0.0, 0.0, 0.0, 1.0])).collect();
        let p = CorrelationProblem::tabulated(shape, rows).unwrap();
        let c = constant_protocol(shape, 1);
        assert!(verify_reproduces(&c, &p, Compare::Exact, LIMIT).unwrap());
        let model = protocol_to_lhv(&c, &p, LIMIT).unwrap();
        assert_eq!(model.conversations, 1);
        for x in shape.inputs() {
            assert_eq!(model.all_click_probability(&x), BigRational::one());
        }
    }

    #[test]
    fn transform_of_ghz_protocol() {
        let t = ghz_broadcast_protocol(2, 2).unwrap();
        let p = build_ghz_problem(GhzParams::new(2, 2).unwrap());
        let model = protocol_to_lhv(&t, &p, LIMIT).unwrap();
        let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
        assert_eq!(model.input_independent_click(&p, LIMIT).unwrap(), Some(quarter));
        assert!(model.reproduces(&p, Compare::Exact, LIMIT).unwrap());
    }

    #[test]
    fn protocol_file_round_trip() {
        let t = ghz_broadcast_protocol(3, 2).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        assert!(text.contains("\"1/4\""));
        assert_eq!(protocol_from_json(&text).unwrap(), t);
        let bad = text.replace("\"1/4\"", "\"1/3\"");
        assert!(protocol_from_json(&bad).is_err());
    }

    #[test]
    fn weight_parsing() {
        assert_eq!("3/6".parse::<Weight>().unwrap().0, BigRational::new(1.into(), 2.into()));
        assert_eq!("1".parse::<Weight>().unwrap().0, BigRational::one());
        assert!("1/0".parse::<Weight>().is_err());
        assert!("x".parse::<Weight>().is_err());
    }
}
