use std::collections::BTreeMap;

use num_traits::Zero;

use super::{LevelMap, Profile};
use crate::rational::Rational;
use crate::schemes::RewardTable;
use crate::topology::{Forest, NodeId};
use crate::{Error, Result};

/// The identity sequence of a winning chain, authorizer first.
///
/// Position `j` (1-based) is the `j`-th identity counted from the
/// authorizer; the seed's identities come last. Each real node occupies one
/// contiguous run of positions, of length `q(u) + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinningChain {
    seed: NodeId,
    identities: Vec<NodeId>,
}

impl WinningChain {
    pub fn new(seed: NodeId, identities: Vec<NodeId>) -> Result<Self> {
        if identities.is_empty() {
            return Err(Error::MalformedChain("empty chain".into()));
        }
        if identities.last() != Some(&seed) {
            return Err(Error::MalformedChain("chain must end at its seed".into()));
        }
        let mut closed = std::collections::BTreeSet::new();
        for pair in identities.windows(2) {
            if pair[0] != pair[1] && !closed.insert(pair[0]) {
                return Err(Error::MalformedChain(format!(
                    "identities of node {} are not contiguous",
                    pair[0]
                )));
            }
        }
        if closed.contains(identities.last().unwrap()) {
            return Err(Error::MalformedChain(format!(
                "identities of node {} are not contiguous",
                seed
            )));
        }
        Ok(Self { seed, identities })
    }

    /// Builds a chain from `(node, clones)` pairs listed seed first.
    pub fn from_runs(runs_top_down: &[(NodeId, u32)]) -> Result<Self> {
        let seed = runs_top_down
            .first()
            .ok_or_else(|| Error::MalformedChain("empty chain".into()))?
            .0;
        let identities = runs_top_down
            .iter()
            .rev()
            .flat_map(|&(node, clones)| std::iter::repeat_n(node, clones as usize + 1))
            .collect();
        Self::new(seed, identities)
    }

    pub fn seed(&self) -> NodeId {
        self.seed
    }

    pub fn authorizer(&self) -> NodeId {
        self.identities[0]
    }

    /// Chain length `h`, clones included.
    pub fn len(&self) -> u32 {
        self.identities.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn identities(&self) -> &[NodeId] {
        &self.identities
    }

    /// Clone count `q(u)` of every real node on the chain.
    pub fn clone_counts(&self) -> BTreeMap<NodeId, u32> {
        let mut out = BTreeMap::new();
        for &id in &self.identities {
            *out.entry(id).or_insert(0u32) += 1;
        }
        out.values_mut().for_each(|v| *v -= 1);
        out
    }
}

/// Reconstructs the chain that results when `winner` authorizes.
pub fn winning_chain(forest: &Forest, profile: &Profile, levels: &LevelMap, winner: NodeId) -> Result<WinningChain> {
    let lw = levels.level(winner);
    if lw == 0 {
        return Err(Error::InvalidLevel(format!("node {winner} is at level 0 and never authorizes")));
    }
    let path = forest.path_from_seed(winner);
    let mut runs = Vec::with_capacity(path.len());
    for pair in path.windows(2) {
        let (u, child) = (pair[0], pair[1]);
        let i = forest.child_index(child).expect("child has an index");
        runs.push((u, profile.at(u, levels.level(u)).clones[i]));
    }
    runs.push((winner, profile.at(winner, lw).pre_auth));
    WinningChain::from_runs(&runs)
}

/// Pays position `j` the amount `r(j, h)` and sums per real node. Chains
/// beyond the table's horizon pay zero to everyone.
pub fn allocate_rewards(chain: &WinningChain, table: &RewardTable) -> BTreeMap<NodeId, Rational> {
    let h = chain.len();
    let mut out: BTreeMap<NodeId, Rational> = BTreeMap::new();
    for (pos, &id) in chain.identities.iter().enumerate() {
        let r = table.get(pos as u32 + 1, h);
        *out.entry(id).or_insert_with(Rational::zero) += r;
    }
    out
}
