//! Index arithmetic over product spaces `{0..base-1}^len`.
//!
//! Vectors are ordered lexicographically with the first coordinate most
//! significant, so the rank of `a` among all output vectors is the base-`d`
//! number `a_1 a_2 ... a_n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Party count, inputs per party and outputs per party of a correlation problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub k: u32,
    pub d: u32,
}

impl Shape {
    pub fn new(n: usize, k: u32, d: u32) -> Result<Self> {
        if n == 0 || k == 0 || d == 0 {
            return Err(Error::InvalidParams(format!(
                "n, k, d must be positive (got n={n}, k={k}, d={d})"
            )));
        }
        Ok(Shape { n, k, d })
    }

    /// `k^n`, or `None` on overflow.
    pub fn input_count(&self) -> Option<u128> {
        checked_pow(self.k as u128, self.n)
    }

    /// `d^n`, or `None` on overflow.
    pub fn output_count(&self) -> Option<u128> {
        checked_pow(self.d as u128, self.n)
    }

    pub fn check_input(&self, x: &[u32]) -> Result<()> {
        check_vector(x, self.n, self.k, "input symbol")
    }

    pub fn check_output(&self, a: &[u32]) -> Result<()> {
        check_vector(a, self.n, self.d, "output symbol")
    }

    /// Rank of an output vector in lexicographic order.
    pub fn output_index(&self, a: &[u32]) -> usize {
        rank(a, self.d)
    }

    pub fn output_vector(&self, idx: usize) -> Vec<u32> {
        unrank(idx as u128, self.d, self.n)
    }

    pub fn input_index(&self, x: &[u32]) -> usize {
        rank(x, self.k)
    }

    pub fn input_vector(&self, idx: usize) -> Vec<u32> {
        unrank(idx as u128, self.k, self.n)
    }

    /// All inputs in lexicographic order.
    pub fn inputs(&self) -> Odometer {
        Odometer::new(self.n, self.k)
    }

    /// All outputs in lexicographic order.
    pub fn outputs(&self) -> Odometer {
        Odometer::new(self.n, self.d)
    }
}

pub(crate) fn checked_pow(base: u128, exp: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

fn check_vector(v: &[u32], len: usize, bound: u32, what: &'static str) -> Result<()> {
    if v.len() != len {
        return Err(Error::Arity {
            expected: len,
            got: v.len(),
        });
    }
    match v.iter().find(|&&s| s >= bound) {
        Some(&s) => Err(Error::out_of_range(what, s, bound)),
        None => Ok(()),
    }
}

pub fn rank(v: &[u32], base: u32) -> usize {
    v.iter().fold(0usize, |acc, &s| acc * base as usize + s as usize)
}

pub fn unrank(mut idx: u128, base: u32, len: usize) -> Vec<u32> {
    let mut v = vec![0u32; len];
    for slot in v.iter_mut().rev() {
        *slot = (idx % base as u128) as u32;
        idx /= base as u128;
    }
    v
}

/// Lexicographic iterator over `{0..base-1}^len`.
#[derive(Debug, Clone)]
pub struct Odometer {
    current: Option<Vec<u32>>,
    base: u32,
}

impl Odometer {
    pub fn new(len: usize, base: u32) -> Self {
        let current = if base == 0 && len > 0 { None } else { Some(vec![0; len]) };
        Odometer { current, base }
    }
}

impl Iterator for Odometer {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().unwrap();
        let mut i = cur.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < self.base {
                break;
            }
            cur[i] = 0;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odometer_counts_and_orders() {
        let all: Vec<_> = Odometer::new(3, 2).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0], vec![0, 0, 0]);
        assert_eq!(all[1], vec![0, 0, 1]);
        assert_eq!(all[7], vec![1, 1, 1]);
        for (i, v) in all.iter().enumerate() {
            assert_eq!(rank(v, 2), i);
            assert_eq!(&unrank(i as u128, 2, 3), v);
        }
    }

    #[test]
    fn empty_length_yields_single_vector() {
        assert_eq!(Odometer::new(0, 5).count(), 1);
    }

    #[test]
    fn shape_rejects_zero_sizes() {
        assert!(Shape::new(0, 2, 2).is_err());
        assert!(Shape::new(2, 0, 2).is_err());
    }

    #[test]
    fn checked_counts_overflow_to_none() {
        let s = Shape::new(200, 4, 2).unwrap();
        assert!(s.input_count().is_none());
        assert_eq!(Shape::new(3, 4, 2).unwrap().input_count(), Some(64));
    }
}
