//! Sybil deviations: a node inserting fake identities of itself into the
//! chain, either before authorizing or on the way to one child.

use std::fmt;

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::game::{compute_levels, exact_expected_rewards, LevelStrategy, Profile};
use crate::rational::{self, Rational};
use crate::schemes::{RewardTable, SchemeAssignment};
use crate::topology::{Forest, NodeId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationKind {
    /// Extra clones before authorizing (`p`).
    PreAuth,
    /// Extra clones towards the child with this index (`c_i`).
    Child(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SybilDeviation {
    pub node: NodeId,
    pub kind: DeviationKind,
    /// Clones added on top of the node's current strategy.
    pub delta: u32,
}

impl SybilDeviation {
    /// The node's strategy after the deviation, if still admissible at `level`.
    pub fn apply(&self, current: &LevelStrategy, level: u32) -> Option<LevelStrategy> {
        let mut s = current.clone();
        let slot = match self.kind {
            DeviationKind::PreAuth => &mut s.pre_auth,
            DeviationKind::Child(i) => s.clones.get_mut(i)?,
        };
        *slot += self.delta;
        (*slot < level).then_some(s)
    }
}

impl fmt::Display for SybilDeviation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DeviationKind::PreAuth => write!(f, "p+{}", self.delta),
            DeviationKind::Child(i) => write!(f, "c{i}+{}", self.delta),
        }
    }
}

/// Reward change of the node at `chain_position` of a chain of length
/// `chain_length` when it inserts `clones_added` fake identities right
/// after itself, lengthening the chain accordingly.
pub fn sybil_gain(table: &RewardTable, chain_position: u32, chain_length: u32, clones_added: u32) -> Result<Rational> {
    if chain_position == 0 || chain_position > chain_length {
        return Err(Error::InvalidParameter(format!(
            "chain position {chain_position} outside 1..={chain_length}"
        )));
    }
    if clones_added == 0 {
        return Err(Error::InvalidParameter("clones_added must be positive".into()));
    }
    let extended = chain_length + clones_added;
    let with: Rational = (chain_position..=chain_position + clones_added)
        .map(|j| table.get(j, extended))
        .sum();
    Ok(with - table.get(chain_position, chain_length))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SybilResponse {
    pub node: NodeId,
    pub level: u32,
    /// `None` when honest play is optimal.
    pub deviation: Option<SybilDeviation>,
    #[serde(with = "rational::serde_str")]
    pub gain: Rational,
    #[serde(with = "rational::serde_str")]
    pub baseline: Rational,
}

/// Searches every single-kind identity insertion of up to `max_clones`
/// extra clones for `node`, keeping the rest of `profile` fixed, and
/// returns the one with the largest exact expected-reward gain. Ties go to
/// honest play, then to the earlier deviation.
pub fn best_sybil_response(
    forest: &Forest,
    assignment: &SchemeAssignment,
    profile: &Profile,
    external: u64,
    node: NodeId,
    max_clones: u32,
) -> Result<SybilResponse> {
    let levels = compute_levels(forest, profile, assignment)?;
    let level = levels.level(node);
    let baseline = exact_expected_rewards(forest, profile, assignment, external)?.per_node[node.0].clone();
    let mut response = SybilResponse {
        node,
        level,
        deviation: None,
        gain: Rational::zero(),
        baseline,
    };
    if level == 0 {
        return Ok(response);
    }
    let current = profile.at(node, level);
    let kinds = std::iter::once(DeviationKind::PreAuth).chain((0..forest.child_count(node)).map(DeviationKind::Child));
    let candidates: Vec<(SybilDeviation, LevelStrategy)> = kinds
        .flat_map(|kind| (1..=max_clones).map(move |delta| SybilDeviation { node, kind, delta }))
        .filter_map(|d| d.apply(current, level).map(|s| (d, s)))
        .collect();
    let gains: Vec<Result<Rational>> = candidates
        .par_iter()
        .map(|(_, s)| {
            let mut deviated = profile.clone();
            deviated.set(forest, node, level, s.clone())?;
            let r = exact_expected_rewards(forest, &deviated, assignment, external)?;
            Ok(&r.per_node[node.0] - &response.baseline)
        })
        .collect();
    for ((dev, _), gain) in candidates.into_iter().zip(gains) {
        let gain = gain?;
        if gain > response.gain {
            response.gain = gain;
            response.deviation = Some(dev);
        }
    }
    Ok(response)
}

/// Best responses of every node.
pub fn scan_sybil(
    forest: &Forest,
    assignment: &SchemeAssignment,
    profile: &Profile,
    external: u64,
    max_clones: u32,
) -> Result<Vec<SybilResponse>> {
    forest
        .ids()
        .map(|id| best_sybil_response(forest, assignment, profile, external, id, max_clones))
        .collect()
}

/// CSV with header `scheme,node,deviation,gain`; honest rows read `none`.
pub fn sybil_report_csv(scheme: &str, responses: &[SybilResponse]) -> String {
    let mut out = String::from("scheme,node,deviation,gain\n");
    for r in responses {
        let dev = r.deviation.as_ref().map_or_else(|| "none".to_string(), ToString::to_string);
        out.push_str(&format!("{scheme},{},{dev},{}\n", r.node.0, rational::format(&r.gain)));
    }
    out
}
