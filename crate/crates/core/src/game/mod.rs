//! The propagation game: per-level strategies with cloning, the level
//! recursion, winning chains and expected utilities.
//!
//! A node that receives the transaction after a chain of `H_s - l` identities
//! is at level `l`; at that level its strategy is a tuple of clone counts
//! `c_1..c_d` (one per child, each in `0..=l-1`) plus `p`, the number of
//! clones it inserts before authorizing. Child `i` then sits at level
//! `l - 1 - c_i`. Level 0 is inert: it pays nothing, so the node does not
//! attempt and neither do its descendants. Refusing to forward to a child is
//! expressed as `c_i = l - 1`.

mod chain;
mod simulate;
mod utility;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::schemes::SchemeAssignment;
use crate::topology::{Forest, NodeId};
use crate::{Error, Result};

pub use chain::{allocate_rewards, winning_chain, WinningChain};
pub use simulate::{simulate_authorization, NodeStats, SimulationConfig, SimulationReport};
pub use utility::{
    chain_position_rewards, exact_expected_rewards, expected_utility, expected_utility_closed_form,
    focal_utility, ExpectedRewards,
};

/// Behaviour of a node at one level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LevelStrategy {
    /// Clone counts per child.
    #[serde(rename = "c")]
    pub clones: Vec<u32>,
    /// Clones inserted before authorizing.
    #[serde(rename = "p")]
    pub pre_auth: u32,
}

impl LevelStrategy {
    pub fn honest(children: usize) -> Self {
        Self {
            clones: vec![0; children],
            pre_auth: 0,
        }
    }

    pub fn new(clones: Vec<u32>, pre_auth: u32) -> Self {
        Self { clones, pre_auth }
    }

    pub fn is_honest(&self) -> bool {
        self.pre_auth == 0 && self.clones.iter().all(|&c| c == 0)
    }

    /// Checks `0 <= c_i, p <= level - 1` and the child count.
    pub fn validate(&self, level: u32, children: usize) -> Result<()> {
        if level == 0 {
            return Err(Error::InvalidLevel("strategies are defined for levels >= 1".into()));
        }
        if self.clones.len() != children {
            return Err(Error::InvalidProfile(format!(
                "expected {children} clone counts, got {}",
                self.clones.len()
            )));
        }
        let cap = level - 1;
        if self.pre_auth > cap || self.clones.iter().any(|&c| c > cap) {
            return Err(Error::InvalidProfile(format!(
                "clone counts at level {level} must not exceed {cap}"
            )));
        }
        Ok(())
    }

    /// Every strategy available at `level` for a node with `children` children,
    /// in lexicographic `(clones, pre_auth)` order.
    pub fn enumerate(level: u32, children: usize) -> Vec<LevelStrategy> {
        assert!(level >= 1);
        let mut clone_vectors: Vec<Vec<u32>> = vec![Vec::new()];
        for _ in 0..children {
            clone_vectors = clone_vectors
                .into_iter()
                .flat_map(|v| {
                    (0..level).map(move |c| {
                        let mut v = v.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        clone_vectors
            .into_iter()
            .flat_map(|c| (0..level).map(move |p| LevelStrategy::new(c.clone(), p)))
            .collect()
    }
}

/// A node's full strategy: one [`LevelStrategy`] per level `1..=max_level`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    levels: Vec<LevelStrategy>,
}

impl Strategy {
    pub fn honest(children: usize, max_level: u32) -> Self {
        Self {
            levels: vec![LevelStrategy::honest(children); max_level as usize],
        }
    }

    pub fn max_level(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn at(&self, level: u32) -> &LevelStrategy {
        &self.levels[level as usize - 1]
    }
}

/// A strategy for every node of a forest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    max_level: u32,
    strategies: Vec<Strategy>,
}

impl Profile {
    /// Full propagation and no duplication everywhere.
    pub fn honest(forest: &Forest, max_level: u32) -> Self {
        Self {
            max_level,
            strategies: forest
                .ids()
                .map(|id| Strategy::honest(forest.child_count(id), max_level))
                .collect(),
        }
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn strategy(&self, node: NodeId) -> &Strategy {
        &self.strategies[node.0]
    }

    pub fn at(&self, node: NodeId, level: u32) -> &LevelStrategy {
        self.strategies[node.0].at(level)
    }

    pub fn set(&mut self, forest: &Forest, node: NodeId, level: u32, s: LevelStrategy) -> Result<()> {
        if level > self.max_level {
            return Err(Error::InvalidLevel(format!(
                "level {level} exceeds profile maximum {}",
                self.max_level
            )));
        }
        s.validate(level, forest.child_count(node))?;
        self.strategies[node.0].levels[level as usize - 1] = s;
        Ok(())
    }

    /// Sets the same behaviour at every level where it is admissible.
    pub fn set_all_levels(&mut self, forest: &Forest, node: NodeId, s: &LevelStrategy) {
        for level in 1..=self.max_level {
            let capped = LevelStrategy::new(
                s.clones.iter().map(|&c| c.min(level - 1)).collect(),
                s.pre_auth.min(level - 1),
            );
            self.set(forest, node, level, capped).expect("capped strategy is admissible");
        }
    }

    /// JSON form: `{node: {level: {"c": [...], "p": p}}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let doc: BTreeMap<String, BTreeMap<String, &LevelStrategy>> = self
            .strategies
            .iter()
            .enumerate()
            .map(|(node, s)| {
                let levels = s
                    .levels
                    .iter()
                    .enumerate()
                    .map(|(i, ls)| ((i + 1).to_string(), ls))
                    .collect();
                (node.to_string(), levels)
            })
            .collect();
        serde_json::to_value(doc).expect("profile serialises")
    }

    pub fn from_json(forest: &Forest, max_level: u32, value: &serde_json::Value) -> Result<Self> {
        let doc: BTreeMap<String, BTreeMap<String, LevelStrategy>> =
            serde_json::from_value(value.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let mut profile = Profile::honest(forest, max_level);
        let mut seen = vec![false; forest.len()];
        for (node, levels) in doc {
            let node: usize = node
                .parse()
                .map_err(|_| Error::Parse(format!("bad node id {node:?}")))?;
            if node >= forest.len() {
                return Err(Error::InvalidProfile(format!("node {node} not in forest")));
            }
            for (level, s) in levels {
                let level: u32 = level
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad level {level:?}")))?;
                profile.set(forest, NodeId(node), level, s)?;
            }
            seen[node] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidProfile(format!("node {missing} has no strategy")));
        }
        Ok(profile)
    }
}

/// Count of aware attempters outside a focal subtree, the focal node included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExternalEnvironment {
    k: u64,
}

impl ExternalEnvironment {
    pub fn new(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k counts the focal node, so k >= 1".into()));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> u64 {
        self.k
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMap {
    levels: Vec<u32>,
}

impl LevelMap {
    pub fn level(&self, node: NodeId) -> u32 {
        self.levels[node.0]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.levels
    }
}

/// Seeds start at their table's height; child `i` of `u` gets
/// `l(u) - 1 - c_i`, and level 0 propagates as 0.
pub fn compute_levels(forest: &Forest, profile: &Profile, assignment: &SchemeAssignment) -> Result<LevelMap> {
    if assignment.seeds() != forest.config().seeds {
        return Err(Error::InvalidConfig(format!(
            "assignment covers {} seeds, forest has {}",
            assignment.seeds(),
            forest.config().seeds
        )));
    }
    if assignment.max_height() > profile.max_level() {
        return Err(Error::InvalidProfile(format!(
            "profile covers levels up to {}, schemes need {}",
            profile.max_level(),
            assignment.max_height()
        )));
    }
    let mut levels = vec![0u32; forest.len()];
    // Breadth-first numbering puts every parent before its children.
    for id in forest.ids() {
        let level = match forest.parent(id) {
            None => assignment.table(forest.node(id).tree).height(),
            Some(parent) => {
                let lp = levels[parent.0];
                if lp == 0 {
                    0
                } else {
                    let i = forest.child_index(id).expect("non-seed has an index");
                    lp - 1 - profile.at(parent, lp).clones[i]
                }
            }
        };
        levels[id.0] = level;
    }
    Ok(LevelMap { levels })
}

/// Nodes that try to authorize: aware and promised an authorizer reward of
/// at least 1, i.e. at level `>= 1`.
pub fn attempt_set(forest: &Forest, profile: &Profile, assignment: &SchemeAssignment) -> Result<Vec<NodeId>> {
    let levels = compute_levels(forest, profile, assignment)?;
    Ok(attempters_from_levels(forest, &levels))
}

pub(crate) fn attempters_from_levels(forest: &Forest, levels: &LevelMap) -> Vec<NodeId> {
    forest.ids().filter(|&id| levels.level(id) >= 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;
    use crate::schemes::{make_almost_uniform, make_hybrid};
    use crate::topology::{build_forest, NetworkConfig};

    fn tree(t: u32, d: u32, h: u32) -> Forest {
        build_forest(NetworkConfig::new(t, d, h).unwrap()).unwrap()
    }

    fn au(t: u32, height: u32) -> SchemeAssignment {
        SchemeAssignment::uniform(t, make_almost_uniform(int(1), height).unwrap())
    }

    #[test]
    fn level_recursion() {
        let f = tree(1, 3, 3);
        let s = au(1, 3);
        let mut p = Profile::honest(&f, 3);
        let lv = compute_levels(&f, &p, &s).unwrap();
        assert_eq!(lv.level(NodeId(0)), 3);
        assert_eq!(lv.level(NodeId(1)), 2);

        p.set(&f, NodeId(0), 3, LevelStrategy::new(vec![1, 0, 0], 0)).unwrap();
        let lv = compute_levels(&f, &p, &s).unwrap();
        assert_eq!(lv.level(NodeId(1)), 1);
        // first grandchild under child 1
        assert_eq!(lv.level(NodeId(4)), 0);
        assert_eq!(lv.level(NodeId(7)), 1);
    }

    #[test]
    fn level_zero_is_absorbing() {
        let f = tree(1, 3, 3);
        let s = au(1, 3);
        let mut p = Profile::honest(&f, 3);
        p.set(&f, NodeId(0), 3, LevelStrategy::new(vec![2, 2, 2], 0)).unwrap();
        let lv = compute_levels(&f, &p, &s).unwrap();
        for id in f.ids().skip(1) {
            assert_eq!(lv.level(id), 0);
        }
    }

    #[test]
    fn attempt_sets() {
        let f = tree(1, 3, 2);
        let s = au(1, 2);
        let mut p = Profile::honest(&f, 2);
        assert_eq!(attempt_set(&f, &p, &s).unwrap().len(), 4);
        p.set(&f, NodeId(0), 2, LevelStrategy::new(vec![1, 1, 1], 0)).unwrap();
        assert_eq!(attempt_set(&f, &p, &s).unwrap(), vec![NodeId(0)]);
    }

    #[test]
    fn hybrid_horizon_limits_attempters() {
        let f = tree(2, 3, 9);
        let mut s = make_hybrid(1, 1, 3, 9).unwrap();
        s.warning = None;
        let p = Profile::honest(&f, 9);
        let lv = compute_levels(&f, &p, &s).unwrap();
        let b_seed = f.seed_of_tree(1);
        for id in f.subtree(b_seed) {
            let depth = f.node(id).depth;
            assert_eq!(lv.level(id) >= 1, depth <= 3, "node {id} at depth {depth}");
        }
        let a_seed = f.seed_of_tree(0);
        assert!(f.subtree(a_seed).iter().all(|&id| lv.level(id) >= 1));
    }

    #[test]
    fn strategy_bounds() {
        assert!(LevelStrategy::new(vec![0, 1, 1], 1).validate(2, 3).is_ok());
        assert!(LevelStrategy::new(vec![0, 2, 1], 0).validate(2, 3).is_err());
        assert!(LevelStrategy::new(vec![0, 0], 0).validate(2, 3).is_err());
        assert!(LevelStrategy::honest(3).validate(0, 3).is_err());
        assert_eq!(LevelStrategy::enumerate(2, 3).len(), 16);
        assert_eq!(LevelStrategy::enumerate(1, 3), vec![LevelStrategy::honest(3)]);
        assert_eq!(LevelStrategy::enumerate(3, 0).len(), 3);
    }

    #[test]
    fn profile_json_round_trip() {
        let f = tree(1, 2, 2);
        let mut p = Profile::honest(&f, 2);
        p.set(&f, NodeId(0), 2, LevelStrategy::new(vec![1, 0], 1)).unwrap();
        let v = p.to_json();
        assert_eq!(v["0"]["2"]["c"], serde_json::json!([1, 0]));
        assert_eq!(v["0"]["2"]["p"], serde_json::json!(1));
        let back = Profile::from_json(&f, 2, &v).unwrap();
        assert_eq!(back, p);

        let mut broken = v.clone();
        broken.as_object_mut().unwrap().remove("2");
        assert!(Profile::from_json(&f, 2, &broken).is_err());
    }

    #[test]
    fn environment_counts_focal_node() {
        assert!(ExternalEnvironment::new(0).is_err());
        assert_eq!(ExternalEnvironment::new(3).unwrap().k(), 3);
    }
}
