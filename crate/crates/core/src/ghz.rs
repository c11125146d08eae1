//! The n-party GHZ phase-measurement correlation problem.
//!
//! Parties share `(|0…0⟩ + |1…1⟩)/√2`. Party `i` receives an `l`-bit input
//! `X_i`, applies the phase `|1⟩ ↦ exp(2πi X_i / 2^l)|1⟩` and measures in the
//! `|±⟩` basis, reporting 0 for `|+⟩` and 1 for `|−⟩`. The outcome law is
//!
//! ```text
//! P(a|X) = 2^-n · (1 + cos(2π ΣX_i / 2^l + π Σa_i))
//! ```
//!
//! On inputs with `ΣX_i ≡ 0 (mod 2^(l-1))` the cosine is ±1, so the parity of
//! the outputs is fixed to `b = (ΣX_i mod 2^l) / 2^(l-1)` and every admissible
//! outcome has probability exactly `2^(1-n)`. Those inputs form the promise.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::corrmodel::{CorrelationProblem, Generator};
use crate::error::{Error, Result};
use crate::space::{Odometer, Shape};

/// Largest party count the state-vector simulation accepts.
pub const ORACLE_MAX_PARTIES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GhzParams {
    pub n: usize,
    pub l: u32,
}

impl GhzParams {
    pub fn new(n: usize, l: u32) -> Result<Self> {
        let p = GhzParams { n, l };
        p.validate()?;
        Ok(p)
    }

    /// Input width `l = ⌈log₂ n⌉`, so that `log₂ n ≤ l < log₂ n + 1`.
    pub fn for_parties(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("need n >= 2, got {n}")));
        }
        Self::new(n, ceil_log2(n))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParams(format!("ghz needs n >= 2, got {}", self.n)));
        }
        if !(1..=16).contains(&self.l) {
            return Err(Error::InvalidParams(format!("ghz needs 1 <= l <= 16, got {}", self.l)));
        }
        if self.n as u64 * self.l as u64 > 64 {
            return Err(Error::InvalidParams(format!(
                "n*l = {} exceeds 64",
                self.n as u64 * self.l as u64
            )));
        }
        Ok(())
    }

    /// Inputs per party, `2^l`.
    pub fn k(&self) -> u32 {
        1 << self.l
    }

    /// Promise modulus `2^(l-1)`.
    pub fn half(&self) -> u64 {
        1 << (self.l - 1)
    }

    pub fn shape(&self) -> Shape {
        Shape {
            n: self.n,
            k: self.k(),
            d: 2,
        }
    }

    /// Exact `|D| = 2^((n-1)l + 1)`.
    pub fn exact_promise_size(&self) -> u128 {
        1u128 << ((self.n as u32 - 1) * self.l + 1)
    }

    /// `log₂ |D|` in the chosen counting convention.
    pub fn log2_promise_size(&self, mode: CountMode) -> f64 {
        let base = ((self.n - 1) as u32 * self.l) as f64;
        match mode {
            CountMode::Paper => base,
            CountMode::Exact => base + 1.0,
        }
    }

    fn check_inputs(&self, x: &[u32]) -> Result<()> {
        self.shape().check_input(x)
    }

    /// `ΣX_i mod 2^l`.
    fn phase_sum(&self, x: &[u32]) -> u64 {
        let mask = (1u64 << self.l) - 1;
        x.iter().fold(0u64, |s, &xi| s.wrapping_add(xi as u64)) & mask
    }
}

/// `⌈log₂ n⌉` for `n >= 1`.
pub fn ceil_log2(n: usize) -> u32 {
    usize::BITS - n.saturating_sub(1).leading_zeros()
}

/// How the promise cardinality is counted.
///
/// `Paper` uses `2^((n-1)l)` (last input treated as fully determined);
/// `Exact` uses the true count `2^((n-1)l+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    Paper,
    Exact,
}

impl CountMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CountMode::Paper => "paper",
            CountMode::Exact => "exact",
        }
    }
}

impl std::str::FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(CountMode::Paper),
            "exact" => Ok(CountMode::Exact),
            other => Err(Error::InvalidParams(format!("unknown mode {other:?}"))),
        }
    }
}

/// `(ΣX_i) mod 2^(l-1) = 0`.
pub fn promise_holds(params: GhzParams, x: &[u32]) -> bool {
    params.phase_sum(x).is_multiple_of(params.half())
}

/// The forced output parity `b = (ΣX_i mod 2^l) / 2^(l-1)` on a promise input.
pub fn parity_target(params: GhzParams, x: &[u32]) -> Result<u8> {
    params.check_inputs(x)?;
    if !promise_holds(params, x) {
        return Err(Error::OutsidePromise(x.to_vec()));
    }
    Ok((params.phase_sum(x) / params.half()) as u8)
}

fn output_parity(a: &[u32]) -> u32 {
    a.iter().fold(0, |p, &ai| p ^ (ai & 1))
}

/// Closed-form probability for a given phase sum and output parity.
fn prob_for(params: GhzParams, sum: u64, parity: u32) -> f64 {
    let scale = 0.5f64.powi(params.n as i32);
    if sum.is_multiple_of(params.half()) {
        let b = (sum / params.half()) as u32;
        return if b == parity { 2.0 * scale } else { 0.0 };
    }
    // angle = π·t/2^l with t = 2·sum + parity·2^l reduced mod 2^(l+1)
    let k = 1u64 << params.l;
    let t = (2 * sum + parity as u64 * k) % (2 * k);
    scale * (1.0 + (PI * t as f64 / k as f64).cos())
}

/// `P_QM(a|X)`; defined for every input, on or off the promise.
pub fn ghz_prob(params: GhzParams, x: &[u32], a: &[u32]) -> Result<f64> {
    params.check_inputs(x)?;
    params.shape().check_output(a)?;
    Ok(prob_for(params, params.phase_sum(x), output_parity(a)))
}

/// The closed form evaluated for all `2^n` outcomes in lexicographic order.
pub fn ghz_distribution(params: GhzParams, x: &[u32]) -> Result<Vec<f64>> {
    params.check_inputs(x)?;
    let sum = params.phase_sum(x);
    let even = prob_for(params, sum, 0);
    let odd = prob_for(params, sum, 1);
    // Setting bit j flips the parity of every index below 2^j.
    let mut out = vec![even; 1 << params.n];
    for j in 0..params.n {
        let (lo, hi) = out.split_at_mut(1 << j);
        for (h, &l) in hi[..1 << j].iter_mut().zip(lo.iter()) {
            *h = if l == even { odd } else { even };
        }
    }
    Ok(out)
}

/// Outcome distribution from a direct simulation of the state and measurements.
///
/// The state is kept sparse as `(basis index, amplitude)` pairs. Each party's
/// phase gate multiplies the amplitudes of basis states where its qubit is 1;
/// the `±` measurement amplitude for outcome `a` is
/// `Σ_basis α · 2^(-n/2) · (-1)^(a·basis)`. Party 1 is the most significant bit.
pub fn statevector_oracle(params: GhzParams, x: &[u32]) -> Result<Vec<f64>> {
    StateVectorOracle::new(params)?.distribution(x)
}

/// [`statevector_oracle`] with the measurement signs precomputed for repeated use.
#[derive(Debug, Clone)]
pub struct StateVectorOracle {
    params: GhzParams,
    basis: [u64; 2],
    /// `signs[e][o] = (-1)^popcount(o & basis[e])`.
    signs: [Vec<f64>; 2],
    /// Phase gate eigenvalue `e^(2πi·x/k)` for each input symbol.
    phases: Vec<Complex64>,
}

impl StateVectorOracle {
    pub fn new(params: GhzParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        if n > ORACLE_MAX_PARTIES {
            return Err(Error::TooLarge {
                what: "state-vector outcomes",
                needed: 1u128 << n,
                limit: 1u128 << ORACLE_MAX_PARTIES,
            });
        }
        let basis = [0, (1u64 << n) - 1];
        let signs = basis.map(|b| {
            let mut sign = vec![1.0f64; 1 << n];
            for j in 0..n {
                let s = if b >> j & 1 == 1 { -1.0 } else { 1.0 };
                let (lo, hi) = sign.split_at_mut(1 << j);
                for (h, &l) in hi[..1 << j].iter_mut().zip(lo.iter()) {
                    *h = l * s;
                }
            }
            sign
        });
        let k = params.k();
        let phases = (0..k)
            .map(|xi| Complex64::from_polar(1.0, 2.0 * PI * xi as f64 / k as f64))
            .collect();
        Ok(StateVectorOracle {
            params,
            basis,
            signs,
            phases,
        })
    }

    pub fn distribution(&self, x: &[u32]) -> Result<Vec<f64>> {
        let params = self.params;
        params.check_inputs(x)?;
        let n = params.n;
        let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut alpha = [amp; 2];
        for (party, &xi) in x.iter().enumerate() {
            let bit = 1u64 << (n - 1 - party);
            let phase = self.phases[xi as usize];
            for (a, b) in alpha.iter_mut().zip(self.basis) {
                if b & bit != 0 {
                    *a *= phase;
                }
            }
        }
        let norm = 0.5f64.powf(n as f64 / 2.0);
        let [a0, a1] = alpha.map(|a| a * norm);
        let len = 1 << n;
        let (s0, s1) = (&self.signs[0][..len], &self.signs[1][..len]);
        Ok((0..len)
            .map(|o| {
                let re = a0.re * s0[o] + a1.re * s1[o];
                let im = a0.im * s0[o] + a1.im * s1[o];
                re * re + im * im
            })
            .collect())
    }
}

/// Intensional GHZ problem: promise `promise_holds`, probabilities `ghz_prob`.
#[derive(Debug, Clone)]
pub struct GhzGenerator {
    params: GhzParams,
}

impl GhzGenerator {
    pub const ID: &'static str = "ghz";

    pub fn new(params: GhzParams) -> Result<Self> {
        params.validate()?;
        Ok(GhzGenerator { params })
    }

    pub fn params(&self) -> GhzParams {
        self.params
    }
}

impl Generator for GhzGenerator {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(self.params).expect("params serialize")
    }

    fn shape(&self) -> Shape {
        self.params.shape()
    }

    fn promise_holds(&self, x: &[u32]) -> bool {
        promise_holds(self.params, x)
    }

    fn promise_size(&self) -> Option<u128> {
        Some(self.params.exact_promise_size())
    }

    fn promise_members(&self) -> Option<Box<dyn Iterator<Item = Vec<u32>> + '_>> {
        let p = self.params;
        let m = p.half();
        let k = p.k() as u64;
        Some(Box::new(Odometer::new(p.n - 1, p.k()).flat_map(move |head| {
            let s = head.iter().map(|&v| v as u64).sum::<u64>() % m;
            let first = (m - s) % m;
            (first..k).step_by(m as usize).map(move |last| {
                let mut x = head.clone();
                x.push(last as u32);
                x
            })
        })))
    }

    fn prob(&self, x: &[u32], a: &[u32]) -> f64 {
        prob_for(self.params, self.params.phase_sum(x), output_parity(a))
    }
}

/// Downcast helper: the GHZ parameters behind a problem, if it is a GHZ problem.
pub fn ghz_params_of(p: &CorrelationProblem) -> Option<GhzParams> {
    let g = p.generator()?;
    if g.id() != GhzGenerator::ID {
        return None;
    }
    serde_json::from_value(g.params()).ok()
}

pub fn build_ghz_problem(params: GhzParams) -> CorrelationProblem {
    CorrelationProblem::from_generator(Arc::new(GhzGenerator::new(params).expect("validated params")))
}
