use num_traits::Zero;

use super::{
    allocate_rewards, attempters_from_levels, compute_levels, winning_chain, ExternalEnvironment,
    LevelStrategy, Profile,
};
use crate::rational::{int, Rational};
use crate::schemes::{AlmostUniform, RewardTable, SchemeAssignment};
use crate::topology::{Forest, NodeId};
use crate::{Error, Result};

/// Reward a node at `level` collects from a chain of length `h` on which it
/// appears with `copies - 1` clones, in a tree whose seed starts at
/// `scheme_height`.
///
/// Its identities sit at positions `h - H_s + level - j` for
/// `j = 0..copies`, counted from the authorizer.
pub fn chain_position_rewards(table: &RewardTable, scheme_height: u32, level: u32, copies: u32, h: u32) -> Rational {
    let top = i64::from(h) - i64::from(scheme_height) + i64::from(level);
    (0..i64::from(copies))
        .map(|j| top - j)
        .filter(|&pos| pos >= 1)
        .map(|pos| table.get(pos as u32, h))
        .sum()
}

/// Expected reward of a focal node at `level` playing `own`, given for each
/// child a histogram of attempters in that child's subtree by chain length
/// (`histograms[i][h - 1]`), plus `others` attempters outside the focal
/// subtree (the focal node not included). Works for any reward table.
pub fn focal_utility(
    table: &RewardTable,
    scheme_height: u32,
    level: u32,
    own: &LevelStrategy,
    histograms: &[&[u64]],
    others: u64,
) -> Rational {
    debug_assert!(level >= 1);
    let own_h = scheme_height - level + own.pre_auth + 1;
    let mut num = chain_position_rewards(table, scheme_height, level, own.pre_auth + 1, own_h);
    let mut attempters = others + 1;
    for (hist, &c) in histograms.iter().zip(&own.clones) {
        for (idx, &count) in hist.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let h = idx as u32 + 1;
            num += chain_position_rewards(table, scheme_height, level, c + 1, h) * int(count as i64);
            attempters += count;
        }
    }
    num / int(attempters as i64)
}

/// Closed form for almost-uniform tables:
/// `(1 + beta l + sum_i beta (l - y_i) A_i) / (k + sum_i A_i)` with
/// `y_i = l - c_i - 1` and `A_i` the attempters below child `i`.
pub fn expected_utility_closed_form(
    level: u32,
    clones: &[u32],
    attempters: &[u64],
    env: ExternalEnvironment,
    scheme: &AlmostUniform,
) -> Result<Rational> {
    if level == 0 {
        return Err(Error::InvalidLevel("focal node at level 0 does not attempt".into()));
    }
    if clones.len() != attempters.len() {
        return Err(Error::InvalidParameter("one attempter count per child".into()));
    }
    if clones.iter().any(|&c| c >= level) {
        return Err(Error::InvalidProfile(format!("clone counts must be below level {level}")));
    }
    let l = i64::from(level);
    let mut num = int(1) + &scheme.beta * int(l);
    let mut den = int(env.k() as i64);
    for (&c, &a) in clones.iter().zip(attempters) {
        let y = l - i64::from(c) - 1;
        num += &scheme.beta * int(l - y) * int(a as i64);
        den += int(a as i64);
    }
    Ok(num / den)
}

/// Expected utility of `focal` placed at `level` and playing `own` while its
/// descendants follow `profile`. Requires an almost-uniform table.
#[allow(clippy::too_many_arguments)]
pub fn expected_utility(
    forest: &Forest,
    focal: NodeId,
    level: u32,
    own: &LevelStrategy,
    profile: &Profile,
    env: ExternalEnvironment,
    table: &RewardTable,
) -> Result<Rational> {
    let scheme = table.as_almost_uniform().ok_or(Error::NotAlmostUniform)?;
    if level == 0 {
        return Err(Error::InvalidLevel("focal node at level 0 does not attempt".into()));
    }
    own.validate(level, forest.child_count(focal))?;
    let attempters: Vec<u64> = forest
        .children(focal)
        .zip(&own.clones)
        .map(|(child, &c)| count_attempters(forest, profile, child, level - 1 - c))
        .collect();
    expected_utility_closed_form(level, &own.clones, &attempters, env, &scheme)
}

fn count_attempters(forest: &Forest, profile: &Profile, node: NodeId, level: u32) -> u64 {
    if level == 0 {
        return 0;
    }
    let s = profile.at(node, level);
    1 + forest
        .children(node)
        .zip(&s.clones)
        .map(|(child, &c)| count_attempters(forest, profile, child, level - 1 - c))
        .sum::<u64>()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedRewards {
    /// Expected reward of every node, indexed by node id.
    pub per_node: Vec<Rational>,
    /// Expected total payment per authorized transaction.
    pub expected_payment: Rational,
    pub attempters: usize,
    pub external: u64,
}

/// Exact expectation over a uniformly drawn authorizer among the forest's
/// attempters plus `external` outside attempters that pay nobody here.
pub fn exact_expected_rewards(
    forest: &Forest,
    profile: &Profile,
    assignment: &SchemeAssignment,
    external: u64,
) -> Result<ExpectedRewards> {
    let levels = compute_levels(forest, profile, assignment)?;
    let attempters = attempters_from_levels(forest, &levels);
    let total = attempters.len() as u64 + external;
    if total == 0 {
        return Err(Error::NoAttempters);
    }
    let mut per_node = vec![Rational::zero(); forest.len()];
    let mut payment = Rational::zero();
    for &w in &attempters {
        let chain = winning_chain(forest, profile, &levels, w)?;
        let table = assignment.table(forest.node(w).tree);
        for (node, r) in allocate_rewards(&chain, table) {
            payment += &r;
            per_node[node.0] += r;
        }
    }
    let n = int(total as i64);
    per_node.iter_mut().for_each(|r| *r /= &n);
    Ok(ExpectedRewards {
        per_node,
        expected_payment: payment / n,
        attempters: attempters.len(),
        external,
    })
}
