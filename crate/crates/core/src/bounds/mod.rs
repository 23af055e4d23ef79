//! Necessary conditions for schemes where full propagation is a dominant
//! strategy, the closed-form payment lower bounds they imply, and an exact
//! minimisation oracle over the polytope they carve out.

mod simplex;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::rational::{self, int, Rational};
use crate::schemes::RewardTable;
use crate::{Error, Result};

pub use simplex::{minimize, Constraint, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintId {
    /// `r(i,h) >= r(i,h+1) + r(i+1,h+1)`
    Pascal,
    /// `r(1,h) / w <= r(1+k,h+k)`
    Dist,
    /// `r(H_s-h+1, H_s) >= S(h) / (t-1)` with `S(h) = sum_j r(j, h+j)`
    TboundTail,
    /// `r(1,h) >= 1 + S(h) / (t-1)`
    TboundHead,
    /// `r(1,h) >= 1`
    Ir,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub indices: BTreeMap<&'static str, u32>,
    #[serde(with = "rational::serde_str")]
    pub lhs: Rational,
    #[serde(with = "rational::serde_str")]
    pub rhs: Rational,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn of(&self, id: ConstraintId) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.constraint == id)
    }

    /// `lhs >= rhs` or record a violation.
    fn require(&mut self, constraint: ConstraintId, indices: &[(&'static str, u32)], lhs: Rational, rhs: Rational) {
        if lhs < rhs {
            self.violations.push(Violation {
                constraint,
                indices: indices.iter().copied().collect(),
                lhs,
                rhs,
            });
        }
    }
}

fn require_height(table: &RewardTable, hs: u32) -> Result<()> {
    if hs == 0 || table.height() < hs {
        return Err(Error::InvalidParameter(format!(
            "table height {} cannot cover H_s = {hs}",
            table.height()
        )));
    }
    Ok(())
}

/// Checks the pascal, dist (with `w = t`), tbound and IR conditions.
pub fn check_scheme_constraints(table: &RewardTable, t: u32, hs: u32) -> Result<ConstraintReport> {
    check_scheme_constraints_with_w(table, t, t, hs)
}

/// As [`check_scheme_constraints`] with the competition `w` of the dist
/// condition given separately.
pub fn check_scheme_constraints_with_w(table: &RewardTable, w: u32, t: u32, hs: u32) -> Result<ConstraintReport> {
    require_height(table, hs)?;
    if t < 2 || w < 1 {
        return Err(Error::InvalidParameter(format!("need t >= 2 and w >= 1, got t = {t}, w = {w}")));
    }
    let r = |i, h| table.get(i, h);
    let mut report = ConstraintReport::default();
    for h in 1..hs {
        for i in 1..=h {
            report.require(
                ConstraintId::Pascal,
                &[("i", i), ("h", h)],
                r(i, h),
                r(i, h + 1) + r(i + 1, h + 1),
            );
        }
    }
    let w_r = int(i64::from(w));
    for h in 1..hs {
        for k in 1..=hs - h {
            report.require(
                ConstraintId::Dist,
                &[("h", h), ("k", k)],
                r(1 + k, h + k),
                r(1, h) / &w_r,
            );
        }
    }
    let t1 = int(i64::from(t) - 1);
    for h in 1..=hs {
        let s: Rational = (1..=hs - h).map(|j| r(j, h + j)).sum();
        let share = s / &t1;
        report.require(ConstraintId::TboundTail, &[("h", h)], r(hs - h + 1, hs), share.clone());
        report.require(ConstraintId::TboundHead, &[("h", h)], r(1, h), int(1) + share);
    }
    for h in 1..=hs {
        report.require(ConstraintId::Ir, &[("h", h)], r(1, h), int(1));
    }
    Ok(report)
}

fn binomial(n: u32, k: u32) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, j| acc * BigInt::from(n - j) / BigInt::from(j + 1))
}

/// Both sides of `r(1,1) >= sum_i C(H_s-1, i) r(i+1, H_s)`.
pub fn binom_sides(table: &RewardTable, hs: u32) -> Result<(Rational, Rational)> {
    require_height(table, hs)?;
    let rhs = (0..hs)
        .map(|i| Rational::from_integer(binomial(hs - 1, i)) * table.get(i + 1, hs))
        .sum();
    Ok((table.get(1, 1), rhs))
}

pub fn binom_lower_bound(table: &RewardTable, hs: u32) -> Result<bool> {
    let (lhs, rhs) = binom_sides(table, hs)?;
    Ok(lhs >= rhs)
}

/// The table meeting pascal with equality above the given bottom row
/// `r(1,H_s), ..., r(H_s,H_s)`.
pub fn pascal_equality_table(bottom: &[Rational]) -> Result<RewardTable> {
    let hs = bottom.len();
    let mut grid: Vec<Vec<Rational>> = vec![Vec::new(); hs];
    if hs == 0 {
        return Err(Error::InvalidParameter("empty bottom row".into()));
    }
    grid[hs - 1] = bottom.to_vec();
    for h in (0..hs - 1).rev() {
        grid[h] = (0..=h).map(|i| &grid[h + 1][i] + &grid[h + 1][i + 1]).collect();
    }
    RewardTable::from_fn(hs as u32, |i, h| grid[h as usize - 1][i as usize - 1].clone())
}

/// A lower bound, exact or enclosed in a rational interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundValue {
    pub params: BTreeMap<&'static str, u32>,
    #[serde(with = "rational::serde_str")]
    pub lower: Rational,
    #[serde(with = "rational::serde_str")]
    pub upper: Rational,
    /// The exactly known rational part of the value.
    #[serde(with = "rational::serde_str")]
    pub exact_part: Rational,
}

impl BoundValue {
    fn exact(params: &[(&'static str, u32)], value: Rational) -> Self {
        Self {
            params: params.iter().copied().collect(),
            lower: value.clone(),
            upper: value.clone(),
            exact_part: value,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }

    pub fn value(&self) -> Option<&Rational> {
        self.is_exact().then_some(&self.lower)
    }

    pub fn approx(&self) -> f64 {
        rational::to_f64(&((&self.lower + &self.upper) / int(2)))
    }
}

/// `(1/2) (1/(t-1) + (m-1)! / (t-1)^(m-1))`
pub fn rmh_lower_bound(m: u32, t: u32) -> Result<BoundValue> {
    if m < 1 || t < 2 {
        return Err(Error::InvalidParameter(format!("need m >= 1 and t >= 2, got m = {m}, t = {t}")));
    }
    let t1 = int(i64::from(t) - 1);
    let fact: BigInt = (1..m).map(BigInt::from).product();
    let value = (int(1) / &t1 + Rational::from_integer(fact) / rational::pow(&t1, m - 1)) / int(2);
    Ok(BoundValue::exact(&[("m", m), ("t", t)], value))
}

/// Default number of decimal digits for the enclosure of `e`.
pub const E_DIGITS: u32 = 64;

/// A rational interval `[lo, hi]` containing `e`, about `10^-digits` wide.
pub fn e_interval(digits: u32) -> (Rational, Rational) {
    let tolerance = Rational::new(BigInt::one(), BigInt::from(10).pow(digits));
    let mut sum = Rational::zero();
    let mut term = Rational::one();
    let mut n: i64 = 0;
    loop {
        sum += &term;
        n += 1;
        term /= int(n);
        // the tail after `sum` is below 2 * (next term)
        let tail = &term * int(2);
        if tail < tolerance {
            // round outwards to decimals with two guard digits
            let scale = Rational::from_integer(BigInt::from(10).pow(digits + 2));
            let lo = (&sum * &scale).floor() / &scale;
            let hi = ((sum + tail) * &scale).ceil() / &scale;
            return (lo, hi);
        }
    }
}

/// `(1/10) (2^(H-4)/t^2 + (1/t) ((H-3)/(t e))^(H-3))`, with `e` enclosed to
/// [`E_DIGITS`] digits.
pub fn dominant_payment_bound(t: u32, h: u32) -> Result<BoundValue> {
    dominant_payment_bound_with_digits(t, h, E_DIGITS)
}

pub fn dominant_payment_bound_with_digits(t: u32, h: u32, digits: u32) -> Result<BoundValue> {
    if t < 2 || h < 4 {
        return Err(Error::InvalidParameter(format!("need t >= 2 and H >= 4, got t = {t}, H = {h}")));
    }
    let tr = int(i64::from(t));
    let tenth = Rational::new(BigInt::one(), BigInt::from(10));
    let first = &tenth * rational::pow(&int(2), h - 4) / (&tr * &tr);
    let (e_lo, e_hi) = e_interval(digits);
    let second = |e: &Rational| &tenth / &tr * rational::pow(&(int(i64::from(h) - 3) / (&tr * e)), h - 3);
    Ok(BoundValue {
        params: [("t", t), ("H", h)].into_iter().collect(),
        lower: &first + second(&e_hi),
        upper: &first + second(&e_lo),
        exact_part: first,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleObjective {
    /// `r(H_s, H_s)`: what the seed-most identity earns on a longest chain.
    RootReward,
    /// Total payment averaged uniformly over chain lengths `1..=H_s`.
    ExpectedPayment,
}

pub const MAX_ORACLE_HEIGHT: u32 = 6;
pub const MAX_ORACLE_SEEDS: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub hs: u32,
    pub t: u32,
    pub objective: OracleObjective,
    pub value: Rational,
    pub table: RewardTable,
}

impl OracleResult {
    /// `{params, objective, value: "num/den", table}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": {"h_s": self.hs, "t": self.t},
            "objective": self.objective,
            "value": rational::format(&self.value),
            "table": self.table.to_json(),
        })
    }
}

fn var(i: u32, h: u32) -> usize {
    (h * (h - 1) / 2 + (i - 1)) as usize
}

/// Exact minimum of `objective` over tables meeting pascal, dist (`w = t`),
/// IR and non-negativity up to height `hs`.
pub fn min_payment_oracle(hs: u32, t: u32, objective: OracleObjective) -> Result<OracleResult> {
    if hs == 0 || hs > MAX_ORACLE_HEIGHT || t == 0 || t > MAX_ORACLE_SEEDS {
        return Err(Error::SizeLimit(format!(
            "oracle supports 1 <= H_s <= {MAX_ORACLE_HEIGHT} and 1 <= t <= {MAX_ORACLE_SEEDS}, got H_s = {hs}, t = {t}"
        )));
    }
    let n = var(hs, hs) + 1;
    let row = |terms: &[(usize, Rational)], rhs: Rational| {
        let mut coeffs = vec![Rational::zero(); n];
        for (j, c) in terms {
            coeffs[*j] += c;
        }
        Constraint { coeffs, rhs }
    };
    let mut constraints = Vec::new();
    for h in 1..hs {
        for i in 1..=h {
            constraints.push(row(
                &[(var(i, h), int(1)), (var(i, h + 1), int(-1)), (var(i + 1, h + 1), int(-1))],
                int(0),
            ));
        }
        for k in 1..=hs - h {
            constraints.push(row(&[(var(1 + k, h + k), int(i64::from(t))), (var(1, h), int(-1))], int(0)));
        }
    }
    for h in 1..=hs {
        constraints.push(row(&[(var(1, h), int(1))], int(1)));
    }
    let mut cost = vec![Rational::zero(); n];
    match objective {
        OracleObjective::RootReward => cost[var(hs, hs)] = int(1),
        OracleObjective::ExpectedPayment => {
            let w = int(1) / int(i64::from(hs));
            for h in 1..=hs {
                for i in 1..=h {
                    cost[var(i, h)] = w.clone();
                }
            }
        }
    }
    let sol = minimize(&cost, &constraints)?;
    let table = RewardTable::from_fn(hs, |i, h| sol.x[var(i, h)].clone())?;
    Ok(OracleResult {
        hs,
        t,
        objective,
        value: sol.value,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use crate::schemes::make_almost_uniform;

    #[test]
    fn almost_uniform_breaks_pascal() {
        let table = make_almost_uniform(int(1), 3).unwrap();
        let report = check_scheme_constraints(&table, 7, 3).unwrap();
        let v = report
            .of(ConstraintId::Pascal)
            .find(|v| v.indices["i"] == 2 && v.indices["h"] == 2)
            .expect("pascal violation at (2,2)");
        assert_eq!((v.lhs.clone(), v.rhs.clone()), (int(1), int(2)));
        assert!(report.of(ConstraintId::Ir).next().is_none());
    }

    #[test]
    fn ir_violation_reported() {
        let table = RewardTable::from_fn(2, |i, h| if (i, h) == (1, 2) { ratio(1, 2) } else { int(5) }).unwrap();
        let report = check_scheme_constraints(&table, 3, 2).unwrap();
        assert!(report.of(ConstraintId::Ir).any(|v| v.indices["h"] == 2));
    }

    #[test]
    fn pascal_equality_table_is_tight() {
        let bottom: Vec<Rational> = vec![int(3), int(1), ratio(1, 2), ratio(1, 3)];
        let table = pascal_equality_table(&bottom).unwrap();
        let report = check_scheme_constraints(&table, 4, 4).unwrap();
        assert!(report.of(ConstraintId::Pascal).next().is_none());
        let (lhs, rhs) = binom_sides(&table, 4).unwrap();
        assert_eq!(lhs, rhs);
        assert!(binom_lower_bound(&table, 4).unwrap());
    }

    #[test]
    fn binom_examples() {
        let table = make_almost_uniform(int(1), 3).unwrap();
        assert_eq!(binom_sides(&table, 3).unwrap(), (int(4), int(5)));
        assert!(!binom_lower_bound(&table, 3).unwrap());
        assert!(binom_lower_bound(&table, 1).unwrap());
    }

    #[test]
    fn rmh_examples() {
        assert_eq!(rmh_lower_bound(1, 2).unwrap().value(), Some(&int(1)));
        assert_eq!(rmh_lower_bound(3, 2).unwrap().value(), Some(&ratio(3, 2)));
        assert_eq!(rmh_lower_bound(2, 3).unwrap().value(), Some(&ratio(1, 2)));
        assert!(rmh_lower_bound(2, 1).is_err());
    }

    #[test]
    fn e_enclosure() {
        let (lo, hi) = e_interval(30);
        assert!(lo < hi);
        assert!(&hi - &lo < Rational::new(BigInt::from(2), BigInt::from(10).pow(30)));
        assert!((rational::to_f64(&lo) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn dominant_bound_examples() {
        let b = dominant_payment_bound(2, 5).unwrap();
        let direct = 0.1 * (0.5 + 0.5 * (1.0 / std::f64::consts::E).powi(2));
        assert!((b.approx() - direct).abs() < 1e-12);
        assert!((b.approx() - 0.05677).abs() < 1e-5);
        assert_eq!(b.exact_part, ratio(1, 20));
        let b4 = dominant_payment_bound(2, 4).unwrap();
        assert!((b4.approx() - 0.0342).abs() < 1e-4);
        assert!(dominant_payment_bound(1, 5).is_err());
        assert!(dominant_payment_bound(2, 3).is_err());
    }

    #[test]
    fn dominant_bound_grows_with_height() {
        for t in 2..=10 {
            for h in 4..20 {
                let a = dominant_payment_bound_with_digits(t, h, 40).unwrap();
                let b = dominant_payment_bound_with_digits(t, h + 1, 40).unwrap();
                assert!(b.lower > a.upper, "t={t} H={h}");
            }
        }
    }

    #[test]
    fn seeds_growing_like_root_two_keep_the_bound_small() {
        for h in 4..=30u32 {
            let t = 2u32.pow(h.div_ceil(2));
            assert!(dominant_payment_bound_with_digits(t, h, 30).unwrap().upper < int(1));
        }
        assert!(dominant_payment_bound_with_digits(2, 30, 30).unwrap().lower > int(1_000_000));
    }

    #[test]
    fn oracle_small_instances() {
        let r = min_payment_oracle(2, 2, OracleObjective::RootReward).unwrap();
        assert_eq!(r.value, int(1));
        let r = min_payment_oracle(2, 100, OracleObjective::RootReward).unwrap();
        assert_eq!(r.value, ratio(1, 99));
        let r = min_payment_oracle(3, 2, OracleObjective::RootReward).unwrap();
        assert!(r.value >= ratio(3, 2));
        assert!(min_payment_oracle(7, 2, OracleObjective::RootReward).is_err());
    }

    #[test]
    fn oracle_tables_satisfy_the_constraints() {
        for hs in 1..=4 {
            for t in 2..=4 {
                for objective in [OracleObjective::RootReward, OracleObjective::ExpectedPayment] {
                    let r = min_payment_oracle(hs, t, objective).unwrap();
                    let report = check_scheme_constraints(&r.table, t, hs).unwrap();
                    assert!(
                        report
                            .violations
                            .iter()
                            .all(|v| matches!(v.constraint, ConstraintId::TboundTail | ConstraintId::TboundHead)),
                        "{hs} {t} {report:?}"
                    );
                    assert!(binom_lower_bound(&r.table, hs).unwrap());
                }
            }
        }
    }

    #[test]
    fn oracle_respects_rmh() {
        for hs in 1..=5 {
            for t in 2..=6 {
                let r = min_payment_oracle(hs, t, OracleObjective::RootReward).unwrap();
                assert!(r.value >= rmh_lower_bound(hs, t).unwrap().lower, "H_s={hs} t={t}");
            }
        }
    }

    #[test]
    fn oracle_json_shape() {
        let r = min_payment_oracle(2, 2, OracleObjective::RootReward).unwrap();
        let v = r.to_json();
        assert_eq!(v["value"], "1/1");
        assert_eq!(v["objective"], "root_reward");
        assert_eq!(v["params"]["t"], 2);
    }
}
