//! Reward tables `r(i, h)`: the reward paid to the `i`-th identity of a
//! winning chain of length `h`, counted from the authorizer (`i = 1`) up to
//! the seed (`i = h`).

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{self, int, Rational};
use crate::{Error, Result};

/// Seeds per group below which the hybrid guarantee no longer applies.
pub const HYBRID_MIN_GROUP: u32 = 7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardTable {
    height: u32,
    /// `rows[h - 1][i - 1] = r(i, h)`.
    rows: Vec<Vec<Rational>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalityCheck {
    pub holds: bool,
    /// Smallest chain length `h` with `r(1, h) < 1`.
    pub first_violation: Option<u32>,
}

impl RewardTable {
    /// Builds a table of the given height from `reward(i, h)`.
    pub fn from_fn(height: u32, mut reward: impl FnMut(u32, u32) -> Rational) -> Result<Self> {
        if height == 0 {
            return Err(Error::InvalidParameter("table height must be at least 1".into()));
        }
        let mut rows = Vec::with_capacity(height as usize);
        for h in 1..=height {
            let mut row = Vec::with_capacity(h as usize);
            for i in 1..=h {
                let r = reward(i, h);
                if r.is_negative() {
                    return Err(Error::InvalidParameter(format!(
                        "negative reward r({i},{h}) = {}",
                        rational::format(&r)
                    )));
                }
                row.push(r);
            }
            rows.push(row);
        }
        Ok(Self { height, rows })
    }

    /// The reward horizon: chains longer than this pay nothing.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// `r(i, h)`; zero outside `1 <= i <= h <= height`.
    pub fn get(&self, i: u32, h: u32) -> Rational {
        self.entry(i, h).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn entry(&self, i: u32, h: u32) -> Option<&Rational> {
        if i == 0 || i > h || h > self.height {
            return None;
        }
        Some(&self.rows[h as usize - 1][i as usize - 1])
    }

    pub fn set(&mut self, i: u32, h: u32, value: Rational) -> Result<()> {
        if i == 0 || i > h || h > self.height {
            return Err(Error::InvalidParameter(format!("no entry r({i},{h})")));
        }
        if value.is_negative() {
            return Err(Error::InvalidParameter("rewards must be non-negative".into()));
        }
        self.rows[h as usize - 1][i as usize - 1] = value;
        Ok(())
    }

    /// `sum_{i=1..h} r(i, h)`, zero beyond the horizon.
    pub fn total_payment(&self, h: u32) -> Rational {
        if h == 0 || h > self.height {
            return Rational::zero();
        }
        self.rows[h as usize - 1].iter().sum()
    }

    pub fn check_individual_rationality(&self, up_to: u32) -> RationalityCheck {
        let one = Rational::one();
        let first_violation = (1..=up_to.min(self.height))
            .find(|&h| self.get(1, h) < one)
            .or_else(|| (up_to > self.height).then_some(self.height + 1));
        RationalityCheck {
            holds: first_violation.is_none(),
            first_violation,
        }
    }

    /// Recovers `(beta, height)` when the table has the almost-uniform shape.
    pub fn as_almost_uniform(&self) -> Option<AlmostUniform> {
        let beta = self.get(1, self.height) - Rational::one();
        let scheme = AlmostUniform::new(beta, self.height).ok()?;
        (scheme.table() == *self).then_some(scheme)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = TableDoc::from(self);
        serde_json::to_value(doc).expect("table serialises")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&TableDoc::from(self)).expect("table serialises")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: TableDoc = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        doc.try_into()
    }
}

/// Wire form: `{"height": H, "entries": [[i, h, "num/den"], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableDoc {
    pub height: u32,
    pub entries: Vec<(u32, u32, String)>,
}

impl From<&RewardTable> for TableDoc {
    fn from(t: &RewardTable) -> Self {
        let mut entries = Vec::new();
        for h in 1..=t.height {
            for i in 1..=h {
                entries.push((i, h, rational::format(&t.get(i, h))));
            }
        }
        TableDoc {
            height: t.height,
            entries,
        }
    }
}

impl TryFrom<TableDoc> for RewardTable {
    type Error = Error;

    fn try_from(doc: TableDoc) -> Result<Self> {
        let mut table = RewardTable::from_fn(doc.height, |_, _| Rational::zero())?;
        for (i, h, value) in doc.entries {
            table.set(i, h, rational::parse(&value)?)?;
        }
        Ok(table)
    }
}

/// The `(beta, H)`-almost-uniform scheme: the authorizer of a chain of
/// length `h <= H` gets `1 + beta * (H - h + 1)`, every other identity gets
/// `beta`, and longer chains get nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlmostUniform {
    pub beta: Rational,
    pub height: u32,
}

impl AlmostUniform {
    pub fn new(beta: Rational, height: u32) -> Result<Self> {
        if !beta.is_positive() {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                rational::format(&beta)
            )));
        }
        if height == 0 {
            return Err(Error::InvalidParameter("height must be at least 1".into()));
        }
        Ok(Self { beta, height })
    }

    pub fn authorizer_reward(&self, h: u32) -> Rational {
        if h == 0 || h > self.height {
            return Rational::zero();
        }
        Rational::one() + &self.beta * int(i64::from(self.height - h + 1))
    }

    pub fn table(&self) -> RewardTable {
        RewardTable::from_fn(self.height, |i, h| {
            if i == 1 {
                self.authorizer_reward(h)
            } else {
                self.beta.clone()
            }
        })
        .expect("almost-uniform rewards are non-negative")
    }

    /// `1 + H * beta`, paid for every chain within the horizon.
    pub fn total_payment(&self) -> Rational {
        Rational::one() + &self.beta * int(i64::from(self.height))
    }
}

pub fn make_almost_uniform(beta: Rational, height: u32) -> Result<RewardTable> {
    Ok(AlmostUniform::new(beta, height)?.table())
}

/// Referral-style scheme paying `base * ratio^(i-1)` to position `i`
/// regardless of chain length, truncated at `cutoff`.
pub fn make_geometric(base: Rational, ratio: Rational, cutoff: u32) -> Result<RewardTable> {
    if !ratio.is_positive() || ratio >= Rational::one() {
        return Err(Error::InvalidParameter(format!(
            "geometric ratio must lie in (0, 1), got {}",
            rational::format(&ratio)
        )));
    }
    if !base.is_positive() {
        return Err(Error::InvalidParameter("geometric base must be positive".into()));
    }
    RewardTable::from_fn(cutoff, |i, _| &base * rational::pow(&ratio, i - 1))
}

/// `log_d(x)` when `x` is an exact power of `d`.
pub fn exact_log(d: u32, x: u64) -> Option<u32> {
    if d < 2 || x == 0 {
        return None;
    }
    let mut k = 0;
    let mut p: u64 = 1;
    while p < x {
        p = p.checked_mul(u64::from(d))?;
        k += 1;
    }
    (p == x).then_some(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedGroup {
    /// Runs the `(1/H, H)` scheme.
    A,
    /// Runs the `(1, 1 + log_d H)` scheme.
    B,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridLayout {
    pub a: u32,
    pub b: u32,
    pub branching: u32,
    pub height: u32,
    pub log_height: u32,
}

/// Which reward table each seed runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeAssignment {
    tables: Vec<RewardTable>,
    groups: Vec<SeedGroup>,
    hybrid: Option<HybridLayout>,
    /// Set when the hybrid parameters fall outside `a >= b >= 7`.
    pub warning: Option<String>,
}

impl SchemeAssignment {
    pub fn uniform(seeds: u32, table: RewardTable) -> Self {
        Self {
            tables: vec![table; seeds as usize],
            groups: vec![SeedGroup::Uniform; seeds as usize],
            hybrid: None,
            warning: None,
        }
    }

    pub fn from_tables(tables: Vec<RewardTable>) -> Self {
        let groups = vec![SeedGroup::Uniform; tables.len()];
        Self {
            tables,
            groups,
            hybrid: None,
            warning: None,
        }
    }

    pub fn seeds(&self) -> u32 {
        self.tables.len() as u32
    }

    /// Table of the seed with tree index `tree`.
    pub fn table(&self, tree: u32) -> &RewardTable {
        &self.tables[tree as usize]
    }

    pub fn group(&self, tree: u32) -> SeedGroup {
        self.groups[tree as usize]
    }

    pub fn hybrid(&self) -> Option<&HybridLayout> {
        self.hybrid.as_ref()
    }

    pub fn max_height(&self) -> u32 {
        self.tables.iter().map(RewardTable::height).max().unwrap_or(0)
    }
}

/// Seeds `0..a` run `(1/H, H)`, seeds `a..a+b` run `(1, 1 + log_d H)`.
pub fn make_hybrid(a: u32, b: u32, d: u32, height: u32) -> Result<SchemeAssignment> {
    if a == 0 || b == 0 {
        return Err(Error::InvalidParameter("both seed groups must be non-empty".into()));
    }
    if d < 2 {
        return Err(Error::InvalidParameter(format!("branching factor {d} below 2")));
    }
    let log_height = exact_log(d, u64::from(height)).ok_or_else(|| {
        Error::InvalidParameter(format!("H = {height} is not an integral power of d = {d}"))
    })?;
    let group_a = make_almost_uniform(Rational::new(1.into(), height.into()), height)?;
    let group_b = make_almost_uniform(Rational::one(), 1 + log_height)?;

    let mut tables = vec![group_a; a as usize];
    tables.extend(std::iter::repeat_n(group_b, b as usize));
    let mut groups = vec![SeedGroup::A; a as usize];
    groups.extend(std::iter::repeat_n(SeedGroup::B, b as usize));

    let warning = (!(a >= b && b >= HYBRID_MIN_GROUP))
        .then(|| format!("a = {a}, b = {b} violates a >= b >= {HYBRID_MIN_GROUP}"));
    Ok(SchemeAssignment {
        tables,
        groups,
        hybrid: Some(HybridLayout {
            a,
            b,
            branching: d,
            height,
            log_height,
        }),
        warning,
    })
}

/// Expected payment of the hybrid scheme under full propagation with a
/// uniformly drawn authorizer:
///
/// `(a N_A 2 + b N_B (1 + log_d H)) / (a N_A + b N_B)` with
/// `N_A = (d^H - 1)/(d - 1)` and `N_B = (dH - 1)/(d - 1)`.
pub fn hybrid_expected_payment(assignment: &SchemeAssignment, d: u32, height: u32) -> Result<Rational> {
    let layout = assignment
        .hybrid()
        .ok_or_else(|| Error::InvalidParameter("assignment is not a hybrid scheme".into()))?;
    if layout.branching != d || layout.height != height {
        return Err(Error::InvalidParameter(format!(
            "assignment was built for d = {}, H = {}",
            layout.branching, layout.height
        )));
    }
    let d_big = Rational::from_integer(d.into());
    let one = Rational::one();
    let n_a = (rational::pow(&d_big, height) - &one) / (&d_big - &one);
    let n_b = (&d_big * int(i64::from(height)) - &one) / (&d_big - &one);
    let a = int(i64::from(layout.a));
    let b = int(i64::from(layout.b));
    let per_b = int(1 + i64::from(layout.log_height));
    let num = &a * &n_a * int(2) + &b * &n_b * per_b;
    let den = a * n_a + b * n_b;
    Ok(num / den)
}

/// Largest single-chain payment any seed of the assignment can trigger.
pub fn worst_case_payment(assignment: &SchemeAssignment, group: SeedGroup) -> Rational {
    (0..assignment.seeds())
        .filter(|&s| assignment.group(s) == group)
        .flat_map(|s| {
            let t = assignment.table(s);
            (1..=t.height()).map(move |h| t.total_payment(h))
        })
        .max()
        .unwrap_or_else(Rational::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    #[test]
    fn almost_uniform_entries() {
        let t = make_almost_uniform(int(1), 3).unwrap();
        assert_eq!(t.get(1, 2), int(3));
        assert_eq!(t.get(2, 2), int(1));
        let t = make_almost_uniform(ratio(1, 3), 3).unwrap();
        assert_eq!(t.get(1, 3), ratio(4, 3));
        assert_eq!(t.get(2, 3), ratio(1, 3));
        assert_eq!(t.get(3, 3), ratio(1, 3));
    }

    #[test]
    fn nothing_beyond_horizon() {
        let t = make_almost_uniform(int(1), 3).unwrap();
        for i in 1..=4 {
            assert_eq!(t.get(i, 4), Rational::zero());
        }
        assert_eq!(t.total_payment(4), Rational::zero());
    }

    #[test]
    fn non_positive_beta_rejected() {
        assert!(matches!(
            make_almost_uniform(int(0), 3),
            Err(Error::InvalidParameter(_))
        ));
        assert!(make_almost_uniform(ratio(-1, 2), 3).is_err());
    }

    #[test]
    fn total_payment_closed_forms() {
        let t = make_almost_uniform(int(1), 3).unwrap();
        assert_eq!(t.total_payment(2), int(4));
        for h in 1..=5 {
            let t = make_almost_uniform(ratio(1, 5), 5).unwrap();
            assert_eq!(t.total_payment(h), int(2));
        }
    }

    #[test]
    fn individual_rationality() {
        let t = make_almost_uniform(int(1), 3).unwrap();
        assert!(t.check_individual_rationality(3).holds);

        let mut bad = t.clone();
        bad.set(1, 2, ratio(1, 2)).unwrap();
        let check = bad.check_individual_rationality(3);
        assert!(!check.holds);
        assert_eq!(check.first_violation, Some(2));

        let g = make_geometric(ratio(1, 2), ratio(1, 2), 4).unwrap();
        assert_eq!(g.check_individual_rationality(4).first_violation, Some(1));
    }

    #[test]
    fn geometric_entries() {
        let g = make_geometric(int(2000), ratio(1, 2), 8).unwrap();
        assert_eq!(g.get(1, 5), int(2000));
        assert_eq!(g.get(2, 5), int(1000));
        assert_eq!(g.get(3, 5), int(500));
        let g = make_geometric(int(1), ratio(1, 2), 8).unwrap();
        assert_eq!(g.get(4, 6), ratio(1, 8));
        assert!(make_geometric(int(1), int(1), 8).is_err());
        assert!(make_geometric(int(1), int(0), 8).is_err());
    }

    #[test]
    fn hybrid_tables() {
        let s = make_hybrid(7, 7, 3, 9).unwrap();
        assert!(s.warning.is_none());
        let b = s.table(7);
        assert_eq!(b.height(), 3);
        assert_eq!(b.get(1, 3), int(2));
        let a = s.table(0);
        assert_eq!(a.height(), 9);
        for h in 2..=9 {
            for i in 2..=h {
                assert_eq!(a.get(i, h), ratio(1, 9));
            }
        }
        assert!(make_hybrid(6, 7, 3, 9).unwrap().warning.is_some());
        assert!(matches!(
            make_hybrid(7, 7, 3, 10),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn hybrid_payment() {
        let s = make_hybrid(7, 7, 3, 9).unwrap();
        let p = hybrid_expected_payment(&s, 3, 9).unwrap();
        assert_eq!(p, ratio(138047, 68978));
        assert_eq!(worst_case_payment(&s, SeedGroup::B), int(4));
        for a in 7..=20u32 {
            for b in 7..=a {
                for (d, h) in [(3u32, 9u32), (3, 27), (4, 16), (5, 25), (3, 3)] {
                    let s = make_hybrid(a, b, d, h).unwrap();
                    assert!(hybrid_expected_payment(&s, d, h).unwrap() <= int(3));
                }
            }
        }
    }

    #[test]
    fn almost_uniform_detection() {
        let t = make_almost_uniform(ratio(2, 7), 5).unwrap();
        assert_eq!(t.as_almost_uniform().unwrap().beta, ratio(2, 7));
        let g = make_geometric(int(4), ratio(1, 2), 3).unwrap();
        assert!(g.as_almost_uniform().is_none());
    }

    #[test]
    fn json_shape() {
        let t = make_almost_uniform(ratio(1, 3), 2).unwrap();
        assert_eq!(
            t.to_json_string(),
            r#"{"height":2,"entries":[[1,1,"5/3"],[1,2,"4/3"],[2,2,"1/3"]]}"#
        );
        assert!(RewardTable::from_json_str(r#"{"height":2,"entries":[[3,2,"1/1"]]}"#).is_err());
    }

    proptest! {
        #[test]
        fn mimic_identity(bn in 1i64..20, bd in 1i64..20, height in 1u32..12) {
            let s = AlmostUniform::new(ratio(bn, bd), height).unwrap();
            let t = s.table();
            for h in 1..=height {
                prop_assert_eq!(t.total_payment(h), s.total_payment());
                for q in 0..=(height - h) {
                    let lhs = t.get(1, h);
                    let rhs = t.get(1, h + q) + &s.beta * int(q as i64);
                    prop_assert_eq!(lhs, rhs);
                }
            }
        }

        #[test]
        fn json_round_trip(bn in 1i64..50, bd in 1i64..50, height in 1u32..8) {
            let t = make_almost_uniform(ratio(bn, bd), height).unwrap();
            let text = t.to_json_string();
            let back = RewardTable::from_json_str(&text).unwrap();
            prop_assert_eq!(back.to_json_string(), text);
            prop_assert_eq!(back, t);
        }
    }
}
