//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems are `maximize c·x` subject to linear rows and `x >= 0`. The
//! solver is meant for the small strategy LPs in [`crate::lhv`]: determinism
//! and auditability matter more than speed. [`certify`] re-checks an optimal
//! basis in exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

/// Feasibility and optimality tolerance.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub value: f64,
    /// Values of the original variables.
    pub x: Vec<f64>,
    /// Final basis as standard-form column indices, one per kept row.
    pub basis: Vec<usize>,
    /// Original row index for each kept tableau row.
    pub kept_rows: Vec<usize>,
    pub pivots: usize,
}

/// `A x = b, x >= 0` after adding slack/surplus columns and making `b >= 0`.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Number of original variables (a prefix of the columns).
    pub structural: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.vars(), "row width");
        self.rows.push(Row { coeffs, rel, rhs });
    }

    pub fn standard_form(&self) -> StandardForm {
        let nv = self.vars();
        let slack_count = self.rows.iter().filter(|r| r.rel != Relation::Eq).count();
        let width = nv + slack_count;
        let mut a = Vec::with_capacity(self.rows.len());
        let mut b = Vec::with_capacity(self.rows.len());
        let mut slack = nv;
        for row in &self.rows {
            let mut line = vec![0.0; width];
            line[..nv].copy_from_slice(&row.coeffs);
            match row.rel {
                Relation::Le => {
                    line[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    line[slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            let mut rhs = row.rhs;
            if rhs < 0.0 {
                line.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            a.push(line);
            b.push(rhs);
        }
        let mut c = self.objective.clone();
        c.resize(width, 0.0);
        StandardForm {
            a,
            b,
            c,
            structural: nv,
        }
    }

    pub fn solve(&self) -> Result<Solution> {
        let sf = self.standard_form();
        Tableau::build(&sf).run(&sf)
    }
}

struct Tableau {
    /// `m` rows of `width + 1` entries; the last entry is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    kept: Vec<usize>,
    /// Columns `>= artificial_start` are artificial.
    artificial_start: usize,
    pivots: usize,
}

impl Tableau {
    fn build(sf: &StandardForm) -> Self {
        let m = sf.a.len();
        let width = sf.c.len();
        // Rows whose slack has coefficient +1 can start with the slack basic.
        let mut basis = vec![usize::MAX; m];
        for col in sf.structural..width {
            let mut nonzero = sf.a.iter().enumerate().filter(|(_, row)| row[col] != 0.0);
            if let (Some((i, row)), None) = (nonzero.next(), nonzero.next()) {
                if row[col] == 1.0 && basis[i] == usize::MAX {
                    basis[i] = col;
                }
            }
        }
        let needing: Vec<usize> = (0..m).filter(|&i| basis[i] == usize::MAX).collect();
        let total = width + needing.len();
        let mut rows = Vec::with_capacity(m);
        for (i, line) in sf.a.iter().enumerate() {
            let mut r = line.clone();
            r.resize(total, 0.0);
            r.push(sf.b[i]);
            rows.push(r);
        }
        for (t, &i) in needing.iter().enumerate() {
            rows[i][width + t] = 1.0;
            basis[i] = width + t;
        }
        Tableau {
            rows,
            basis,
            kept: (0..m).collect(),
            artificial_start: width,
            pivots: 0,
        }
    }

    fn width(&self) -> usize {
        self.rows.first().map_or(self.artificial_start, |r| r.len() - 1)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, &pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Maximize `cost · x` over columns `< limit`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], limit: usize) -> bool {
        loop {
            // Bland: lowest-index column with positive reduced cost.
            let entering = (0..limit).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .zip(&self.rows)
                        .map(|(&bj, r)| cost[bj] * r[j])
                        .sum::<f64>();
                reduced > LP_TOL
            });
            let Some(col) = entering else { return true };
            let rhs = self.width();
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.rows.iter().enumerate() {
                if r[col] > LP_TOL {
                    let ratio = r[rhs] / r[col];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - LP_TOL || (ratio <= lr + LP_TOL && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((row, _)) => self.pivot(row, col),
            }
        }
    }

    fn objective_value(&self, cost: &[f64]) -> f64 {
        let rhs = self.width();
        self.basis
            .iter()
            .zip(&self.rows)
            .map(|(&bj, r)| cost.get(bj).copied().unwrap_or(0.0) * r[rhs])
            .sum()
    }

    fn run(mut self, sf: &StandardForm) -> Result<Solution> {
        let width = self.artificial_start;
        let total = self.width();
        if total > width {
            let phase1: Vec<f64> = (0..total).map(|j| if j >= width { -1.0 } else { 0.0 }).collect();
            self.optimize(&phase1, total);
            if self.objective_value(&phase1) < -LP_TOL {
                return Ok(self.finish(sf, Status::Infeasible));
            }
            self.drive_out_artificials();
        }
        let mut cost = sf.c.clone();
        cost.resize(self.width(), 0.0);
        let status = if self.optimize(&cost, width) {
            Status::Optimal
        } else {
            Status::Unbounded
        };
        Ok(self.finish(sf, status))
    }

    fn drive_out_artificials(&mut self) {
        let width = self.artificial_start;
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= width {
                match (0..width).find(|&j| !self.basis.contains(&j) && self.rows[i][j].abs() > LP_TOL) {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        // Redundant row.
                        self.rows.remove(i);
                        self.basis.remove(i);
                        self.kept.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for r in self.rows.iter_mut() {
            let rhs = r[r.len() - 1];
            r.truncate(width);
            r.push(rhs);
        }
    }

    fn finish(self, sf: &StandardForm, status: Status) -> Solution {
        let rhs = self.width();
        let mut full = vec![0.0; sf.c.len()];
        for (&bj, r) in self.basis.iter().zip(&self.rows) {
            if bj < full.len() {
                full[bj] = r[rhs];
            }
        }
        let value = full.iter().zip(&sf.c).map(|(x, c)| x * c).sum();
        Solution {
            status,
            value,
            x: full[..sf.structural].to_vec(),
            basis: self.basis,
            kept_rows: self.kept,
            pivots: self.pivots,
        }
    }
}

/// Exact optimality certificate for a basis.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub value: BigRational,
    /// Exact values of the original variables.
    pub x: Vec<BigRational>,
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite coefficient")
}

/// Re-derive the basic solution in rational arithmetic and check primal
/// feasibility, dual feasibility and every original row exactly.
pub fn certify(lp: &LinearProgram, sol: &Solution) -> Result<Certificate> {
    if sol.status != Status::Optimal {
        return Err(Error::Lp(format!("cannot certify status {:?}", sol.status)));
    }
    let sf = lp.standard_form();
    let width = sf.c.len();
    let m = sol.basis.len();
    if sol.basis.iter().any(|&j| j >= width) {
        return Err(Error::Lp("artificial column left in basis".into()));
    }
    let a: Vec<Vec<BigRational>> = sol
        .kept_rows
        .iter()
        .map(|&i| sf.a[i].iter().map(|&v| exact(v)).collect())
        .collect();
    let b: Vec<BigRational> = sol.kept_rows.iter().map(|&i| exact(sf.b[i])).collect();
    let c: Vec<BigRational> = sf.c.iter().map(|&v| exact(v)).collect();

    // B x_B = b
    let basis_cols: Vec<Vec<BigRational>> = (0..m)
        .map(|i| sol.basis.iter().map(|&j| a[i][j].clone()).collect())
        .collect();
    let xb = solve_exact(basis_cols.clone(), b)?;
    if xb.iter().any(|v| v.is_negative()) {
        return Err(Error::Lp("basis is not primal feasible".into()));
    }
    // Bᵀ y = c_B
    let transposed: Vec<Vec<BigRational>> = (0..m)
        .map(|r| (0..m).map(|s| basis_cols[s][r].clone()).collect())
        .collect();
    let cb: Vec<BigRational> = sol.basis.iter().map(|&j| c[j].clone()).collect();
    let y = solve_exact(transposed, cb)?;
    for j in 0..width {
        let mut reduced = c[j].clone();
        for i in 0..m {
            if !a[i][j].is_zero() {
                reduced -= &y[i] * &a[i][j];
            }
        }
        if reduced.is_positive() {
            return Err(Error::Lp(format!("column {j} has positive reduced cost")));
        }
    }
    let mut full = vec![BigRational::zero(); width];
    for (k, &j) in sol.basis.iter().enumerate() {
        full[j] = xb[k].clone();
    }
    // Rows dropped as redundant must still hold.
    for (i, row) in lp.rows.iter().enumerate() {
        let lhs: BigRational = row
            .coeffs
            .iter()
            .zip(&full)
            .filter(|(c, _)| **c != 0.0)
            .map(|(&c, x)| exact(c) * x)
            .sum();
        let rhs = exact(row.rhs);
        let ok = match row.rel {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
        };
        if !ok {
            return Err(Error::Lp(format!("row {i} violated in exact arithmetic")));
        }
    }
    let value = full.iter().zip(&c).map(|(x, c)| x * c).sum();
    Ok(Certificate {
        value,
        x: full[..sf.structural].to_vec(),
    })
}

/// Gaussian elimination over the rationals for a square nonsingular system.
fn solve_exact(mut m: Vec<Vec<BigRational>>, mut rhs: Vec<BigRational>) -> Result<Vec<BigRational>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !m[r][col].is_zero())
            .ok_or_else(|| Error::Lp("singular basis".into()))?;
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v /= &p;
        }
        rhs[col] /= &p;
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let (src, dst) = if r < col {
                    let (lo, hi) = m.split_at_mut(col);
                    (&hi[0], &mut lo[r])
                } else {
                    let (lo, hi) = m.split_at_mut(r);
                    (&lo[col], &mut hi[0])
                };
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    if !s.is_zero() {
                        *d -= &f * s;
                    }
                }
                let t = &f * &rhs[col];
                rhs[r] -= t;
            }
        }
    }
    Ok(rhs)
}

/// Rational `num/den` helper for tests and reports.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), value 36
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        let cert = certify(&lp, &s).unwrap();
        assert_eq!(cert.value, ratio(36, 1));
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y s.t. x + y = 1, x >= 0.25 (as -x <= -0.25 via Ge), y <= 0.5
        let mut lp = LinearProgram::new(vec![2.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add_row(vec![0.0, 1.0], Relation::Ge, 0.25);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value - 1.75).abs() < 1e-9);
        assert_eq!(certify(&lp, &s).unwrap().value, ratio(7, 4));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        lp.add_row(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap().status, Status::Infeasible);

        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_row(vec![0.0, 1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap().status, Status::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add_row(vec![2.0, 2.0], Relation::Eq, 2.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value - 1.0).abs() < 1e-9);
        assert_eq!(s.kept_rows.len(), 1);
        assert_eq!(certify(&lp, &s).unwrap().value, ratio(1, 1));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles under the largest-coefficient rule.
        let mut lp = LinearProgram::new(vec![0.75, -150.0, 0.02, -6.0]);
        lp.add_row(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.add_row(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.add_row(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value - 0.05).abs() < 1e-9);
    }
}
