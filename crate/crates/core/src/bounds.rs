//! Detector-efficiency and communication bounds from rectangle sizes.
//!
//! With `r` the largest monochromatic overlap and `|D|` the promise size:
//!
//! ```text
//! η* ≤ d · (r / |D|)^(1/n)
//! R_pub ≥ log₂(|D| / (d^n · r))
//! ```
//!
//! Every quantity is carried in `log₂` form internally so that GHZ instances
//! with thousands of parties (where `|D| = 2^((n-1)l)` overflows `f64`) stay
//! representable.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ghz::{ceil_log2, CountMode};

/// Slack used when rounding real-valued bit counts to integers.
const ROUND_EPS: f64 = 1e-9;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParams(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// `d · (r/|D|)^(1/n)` without the cap at 1.
pub fn eta_upper_bound_raw(n: usize, d: u32, r: f64, d_size: f64) -> Result<f64> {
    check_positive("r", r)?;
    check_positive("|D|", d_size)?;
    if d_size < r {
        return Err(Error::Inconsistent(format!("|D| = {d_size} is smaller than r = {r}")));
    }
    Ok(eta_from_logs(n, d, r.log2(), d_size.log2()))
}

/// `min(1, d · (r/|D|)^(1/n))`.
pub fn eta_upper_bound(n: usize, d: u32, r: f64, d_size: f64) -> Result<f64> {
    Ok(eta_upper_bound_raw(n, d, r, d_size)?.min(1.0))
}

fn eta_from_logs(n: usize, d: u32, log2_r: f64, log2_d_size: f64) -> f64 {
    ((d as f64).log2() + (log2_r - log2_d_size) / n as f64).exp2()
}

fn comm_from_logs(n: usize, d: u32, log2_r: f64, log2_d_size: f64) -> f64 {
    log2_d_size - n as f64 * (d as f64).log2() - log2_r
}

/// A real-valued communication lower bound and its integer forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommBound {
    /// `log₂(|D| / (d^n r))`; may be negative.
    pub real: f64,
    /// `max(0, ⌈real⌉)`: the strongest integral statement.
    pub bits: u64,
    /// `max(0, ⌊real⌋)`: the truncated value as usually quoted.
    pub floor_bits: u64,
}

impl CommBound {
    fn from_real(real: f64) -> Self {
        let ceil = (real - ROUND_EPS).ceil().max(0.0);
        let floor = (real + ROUND_EPS).floor().max(0.0);
        CommBound {
            real,
            bits: ceil as u64,
            floor_bits: floor as u64,
        }
    }
}

/// `log₂(|D| / (d^n · r))`, with integer roundings.
pub fn comm_lower_bound(n: usize, d: u32, r: f64, d_size: f64) -> Result<CommBound> {
    check_positive("r", r)?;
    check_positive("|D|", d_size)?;
    Ok(CommBound::from_real(comm_from_logs(n, d, r.log2(), d_size.log2())))
}

/// `log₂` of `((2^l − 2)/n + 1)^n`.
pub fn log2_analytic_r(n: usize, l: u32) -> f64 {
    let k = (l as f64).exp2();
    n as f64 * ((k - 2.0) / n as f64 + 1.0).log2()
}

/// The closed-form efficiency bound `2·2^(l/n)·(1/n − 2/(n 2^l) + 1/2^l)`.
pub fn eta_closed_form(n: usize, l: u32) -> f64 {
    let nf = n as f64;
    let k = (l as f64).exp2();
    2.0 * (l as f64 / nf).exp2() * (1.0 / nf - 2.0 / (nf * k) + 1.0 / k)
}

/// `(4/n) · n^(1/n)`.
pub fn eta_chain_rhs(n: usize) -> f64 {
    let nf = n as f64;
    4.0 / nf * nf.powf(1.0 / nf)
}

/// `n (log₂ n − 3)`.
pub fn comm_target(n: usize) -> f64 {
    let nf = n as f64;
    nf * (nf.log2() - 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub l: Option<u32>,
    pub d: u32,
    pub mode: CountMode,
    /// `log₂ |D|` actually used.
    pub log2_promise_size: f64,
    /// `log₂ r` actually used.
    pub log2_r: f64,
    /// `analytic` or `exact-search`.
    pub r_source: &'static str,
    pub eta_raw: f64,
    /// `min(1, eta_raw)`.
    pub eta_upper: f64,
    pub eta_vacuous: bool,
    /// Closed-form middle term of the GHZ efficiency chain, when applicable.
    pub eta_closed_form: Option<f64>,
    pub rpub: CommBound,
    /// `log₂` of the cover-size lower bound `|D| / r`.
    pub log2_cover_lower: f64,
    pub notes: Vec<String>,
}

fn report_from_logs(
    n: usize,
    l: Option<u32>,
    d: u32,
    mode: CountMode,
    log2_d_size: f64,
    log2_r: f64,
    r_source: &'static str,
) -> BoundReport {
    let eta_raw = eta_from_logs(n, d, log2_r, log2_d_size);
    let mut notes = Vec::new();
    if eta_raw >= 1.0 {
        notes.push("efficiency bound is vacuous (>= 1)".to_string());
    }
    if mode == CountMode::Paper {
        notes.push("|D| counted as 2^((n-1)l); the exact count is twice that".to_string());
    }
    BoundReport {
        n,
        l,
        d,
        mode,
        log2_promise_size: log2_d_size,
        log2_r,
        r_source,
        eta_raw,
        eta_upper: eta_raw.min(1.0),
        eta_vacuous: eta_raw >= 1.0,
        eta_closed_form: l.map(|l| eta_closed_form(n, l)),
        rpub: CommBound::from_real(comm_from_logs(n, d, log2_r, log2_d_size)),
        log2_cover_lower: log2_d_size - log2_r,
        notes,
    }
}

fn check_ghz(n: usize, l: u32) -> Result<()> {
    if n < 2 || l == 0 || l > 1000 {
        return Err(Error::InvalidParams(format!(
            "need n >= 2 and 1 <= l <= 1000, got n={n}, l={l}"
        )));
    }
    Ok(())
}

/// Bounds for the GHZ problem with the analytic rectangle cap.
pub fn ghz_bounds(n: usize, l: u32, mode: CountMode) -> Result<BoundReport> {
    check_ghz(n, l)?;
    let log2_d = ((n - 1) as f64) * l as f64 + if mode == CountMode::Exact { 1.0 } else { 0.0 };
    Ok(report_from_logs(
        n,
        Some(l),
        2,
        mode,
        log2_d,
        log2_analytic_r(n, l),
        "analytic",
    ))
}

/// Bounds from an exactly searched `r` and exact `|D|`.
pub fn bounds_from_exact(n: usize, d: u32, r: u64, d_size: u128) -> Result<BoundReport> {
    check_positive("r", r as f64)?;
    check_positive("|D|", d_size as f64)?;
    if (d_size as f64) < r as f64 {
        return Err(Error::Inconsistent(format!("|D| = {d_size} is smaller than r = {r}")));
    }
    Ok(report_from_logs(
        n,
        None,
        d,
        CountMode::Exact,
        (d_size as f64).log2(),
        (r as f64).log2(),
        "exact-search",
    ))
}

/// Default width range `1..=⌈log₂ n⌉ + 4`.
pub fn default_l_range(n: usize) -> std::ops::RangeInclusive<u32> {
    1..=ceil_log2(n) + 4
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizedBounds {
    pub n: usize,
    pub mode: CountMode,
    /// Width minimizing the efficiency bound (smallest on ties).
    pub l_eta: u32,
    pub eta_upper: f64,
    pub eta_raw: f64,
    /// Width maximizing the communication bound (smallest on ties).
    pub l_rpub: u32,
    pub rpub: CommBound,
    pub candidates: Vec<BoundReport>,
}

/// Optimize the efficiency and communication bounds independently over `l`.
pub fn ghz_bounds_optimized(
    n: usize,
    mode: CountMode,
    l_range: impl IntoIterator<Item = u32>,
) -> Result<OptimizedBounds> {
    let candidates = l_range
        .into_iter()
        .map(|l| ghz_bounds(n, l, mode))
        .collect::<Result<Vec<_>>>()?;
    let first = candidates
        .first()
        .ok_or_else(|| Error::InvalidParams("empty l range".into()))?;
    let mut eta_best = first;
    let mut rpub_best = first;
    for c in &candidates[1..] {
        if c.eta_raw < eta_best.eta_raw {
            eta_best = c;
        }
        if c.rpub.real > rpub_best.rpub.real {
            rpub_best = c;
        }
    }
    Ok(OptimizedBounds {
        n,
        mode,
        l_eta: eta_best.l.unwrap(),
        eta_upper: eta_best.eta_upper,
        eta_raw: eta_best.eta_raw,
        l_rpub: rpub_best.l.unwrap(),
        rpub: rpub_best.rpub,
        candidates: candidates.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticCheck {
    pub n: usize,
    pub l: u32,
    pub eta_bound: f64,
    pub chain_rhs: f64,
    pub eight_over_n: f64,
    pub eta_ok: bool,
    pub rpub_real: f64,
    pub rpub_target: f64,
    pub rpub_ok: bool,
}

impl AsymptoticCheck {
    pub fn holds(&self) -> bool {
        self.eta_ok && self.rpub_ok
    }
}

/// With `l = ⌈log₂ n⌉` in paper mode: `η bound ≤ (4/n) n^(1/n) ≤ 8/n` and
/// `R_pub bound ≥ n (log₂ n − 3)`.
pub fn asymptotic_check(n: usize) -> Result<AsymptoticCheck> {
    if n < 3 {
        return Err(Error::InvalidParams(format!("need n >= 3, got {n}")));
    }
    let l = ceil_log2(n);
    let rep = ghz_bounds(n, l, CountMode::Paper)?;
    let eta_bound = rep.eta_closed_form.expect("ghz report");
    let chain_rhs = eta_chain_rhs(n);
    let eight_over_n = 8.0 / n as f64;
    let target = comm_target(n);
    Ok(AsymptoticCheck {
        n,
        l,
        eta_bound,
        chain_rhs,
        eight_over_n,
        eta_ok: eta_bound <= chain_rhs + 1e-12 && chain_rhs <= eight_over_n + 1e-12,
        rpub_real: rep.rpub.real,
        rpub_target: target,
        rpub_ok: rep.rpub.real >= target - 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub l_eta: u32,
    pub eta_upper: f64,
    pub l_rpub: u32,
    pub rpub_lower_real: f64,
    pub rpub_lower_bits: u64,
    pub mode: CountMode,
}

impl From<&OptimizedBounds> for SweepRow {
    fn from(o: &OptimizedBounds) -> Self {
        SweepRow {
            n: o.n,
            l_eta: o.l_eta,
            eta_upper: o.eta_upper,
            l_rpub: o.l_rpub,
            rpub_lower_real: o.rpub.real,
            rpub_lower_bits: o.rpub.bits,
            mode: o.mode,
        }
    }
}

/// One optimized row per `n`, in increasing `n`.
pub fn sweep(n_range: impl IntoIterator<Item = usize>, mode: CountMode) -> Result<Vec<SweepRow>> {
    n_range
        .into_iter()
        .map(|n| ghz_bounds_optimized(n, mode, default_l_range(n)).map(|o| SweepRow::from(&o)))
        .collect()
}
