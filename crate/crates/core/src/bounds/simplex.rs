//! Exact two-phase simplex on a dense tableau, Bland's rule throughout.

use num_traits::{One, Signed, Zero};

use crate::rational::Rational;
use crate::{Error, Result};

/// `coeffs . x >= rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub rhs: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub x: Vec<Rational>,
    pub value: Rational,
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        self.rows[r].iter_mut().for_each(|v| *v /= &p);
        self.rhs[r] /= &p;
        let (pivot_row, pivot_rhs) = (self.rows[r].clone(), self.rhs[r].clone());
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        self.basis[r] = c;
    }

    /// Minimises `cost . x` over columns allowed by `enterable`.
    fn optimize(&mut self, cost: &[Rational], enterable: &dyn Fn(usize) -> bool) -> Result<()> {
        let ncols = cost.len();
        loop {
            let entering = (0..ncols).filter(|&j| enterable(j) && !self.basis.contains(&j)).find(|&j| {
                let reduced = self.basis.iter().zip(&self.rows).fold(cost[j].clone(), |acc, (&b, row)| {
                    if row[j].is_zero() {
                        acc
                    } else {
                        acc - &cost[b] * &row[j]
                    }
                });
                reduced.is_negative()
            });
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, Rational)> = None;
            for r in 0..self.rows.len() {
                if self.rows[r][c].is_positive() {
                    let ratio = &self.rhs[r] / &self.rows[r][c];
                    let better = match &leave {
                        None => true,
                        Some((lr, best)) => ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr]),
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::InvalidParameter("linear program is unbounded".into()));
            };
            self.pivot(r, c);
        }
    }
}

/// Minimises `cost . x` subject to `constraints` and `x >= 0`.
pub fn minimize(cost: &[Rational], constraints: &[Constraint]) -> Result<Solution> {
    let n = cost.len();
    let m = constraints.len();
    // columns: structural n, surplus m, artificial m
    let total = n + 2 * m;
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (i, con) in constraints.iter().enumerate() {
        if con.coeffs.len() != n {
            return Err(Error::InvalidParameter("constraint width mismatch".into()));
        }
        // keep rhs non-negative: flip the row if needed
        let sign = if con.rhs.is_negative() { -Rational::one() } else { Rational::one() };
        let mut row = vec![Rational::zero(); total];
        for (j, a) in con.coeffs.iter().enumerate() {
            row[j] = a * &sign;
        }
        row[n + i] = -sign.clone();
        row[n + m + i] = Rational::one();
        rows.push(row);
        rhs.push(&con.rhs * &sign);
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis: (n + m..n + 2 * m).collect(),
    };

    let mut phase_one = vec![Rational::zero(); total];
    phase_one[n + m..].iter_mut().for_each(|c| *c = Rational::one());
    t.optimize(&phase_one, &|_| true)?;
    let infeasibility: Rational = t
        .basis
        .iter()
        .zip(&t.rhs)
        .filter(|(&b, _)| b >= n + m)
        .map(|(_, v)| v.clone())
        .sum();
    if infeasibility.is_positive() {
        return Err(Error::InvalidParameter("linear program is infeasible".into()));
    }
    // drive remaining (zero) artificials out of the basis where possible
    for r in 0..m {
        if t.basis[r] >= n + m {
            if let Some(c) = (0..n + m).find(|&j| !t.rows[r][j].is_zero()) {
                t.pivot(r, c);
            }
        }
    }

    let mut phase_two = vec![Rational::zero(); total];
    phase_two[..n].clone_from_slice(cost);
    t.optimize(&phase_two, &|j| j < n + m)?;

    let mut x = vec![Rational::zero(); n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs[r].clone();
        }
    }
    let value = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(Solution { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn con(coeffs: &[i64], rhs: i64) -> Constraint {
        Constraint {
            coeffs: coeffs.iter().map(|&c| int(c)).collect(),
            rhs: int(rhs),
        }
    }

    #[test]
    fn textbook_diet_problem() {
        // min 2x + 3y s.t. x + y >= 4, x + 3y >= 6
        let sol = minimize(&[int(2), int(3)], &[con(&[1, 1], 4), con(&[1, 3], 6)]).unwrap();
        assert_eq!(sol.value, int(9));
        assert_eq!(sol.x, vec![int(3), int(1)]);
    }

    #[test]
    fn fractional_optimum() {
        // min x + y s.t. 3x + y >= 2, x + 3y >= 2
        let sol = minimize(&[int(1), int(1)], &[con(&[3, 1], 2), con(&[1, 3], 2)]).unwrap();
        assert_eq!(sol.value, int(1));
        assert_eq!(sol.x, vec![ratio(1, 2), ratio(1, 2)]);
    }

    #[test]
    fn infeasible_and_unbounded() {
        assert!(minimize(&[int(1)], &[con(&[-1], 1)]).is_err());
        assert!(minimize(&[int(-1)], &[con(&[1], 1)]).is_err());
    }

    #[test]
    fn degenerate_redundant_rows() {
        let sol = minimize(&[int(1), int(1)], &[con(&[1, 1], 2), con(&[2, 2], 4), con(&[1, 0], 0)]).unwrap();
        assert_eq!(sol.value, int(2));
    }
}
