//! The forest of `t` complete `d`-ary trees of height `H`.
//!
//! Nodes are numbered densely: trees are laid out one after another in seed
//! order and each tree is numbered breadth-first, so node `j` of a tree has
//! children `d*j + 1 ..= d*j + d`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper bound on the number of nodes `build_forest` will materialise.
pub const MAX_NODES: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of seeds `t`.
    pub seeds: u32,
    /// Branching factor `d`.
    pub branching: u32,
    /// Tree height `H`; a tree of height 1 is a lone seed.
    pub height: u32,
}

impl NetworkConfig {
    pub fn new(seeds: u32, branching: u32, height: u32) -> Result<Self> {
        let config = Self {
            seeds,
            branching,
            height,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds < 1 {
            return Err(Error::InvalidConfig("need at least one seed (t >= 1)".into()));
        }
        if self.branching < 2 {
            return Err(Error::InvalidConfig(format!(
                "branching factor d = {} must be at least 2",
                self.branching
            )));
        }
        if self.height < 1 {
            return Err(Error::InvalidConfig("tree height H must be at least 1".into()));
        }
        Ok(())
    }

    /// Rejects `d = 2` with [`Error::BranchingBelowTheorem`].
    pub fn require_theorem_branching(&self) -> Result<()> {
        self.validate()?;
        if self.branching < 3 {
            return Err(Error::BranchingBelowTheorem(self.branching));
        }
        Ok(())
    }

    pub fn tree_size(&self) -> u64 {
        full_subtree_size(self.branching, self.height)
    }

    /// `n = t * (d^H - 1) / (d - 1)`.
    pub fn node_count(&self) -> u64 {
        u64::from(self.seeds)
            .checked_mul(self.tree_size())
            .expect("node count overflows u64")
    }
}

/// Number of nodes in a complete `d`-ary tree of height `y`:
/// `(d^y - 1) / (d - 1)`, with height 0 being the empty tree.
pub fn full_subtree_size(d: u32, y: u32) -> u64 {
    assert!(d >= 2, "branching factor must be at least 2");
    let mut size: u64 = 0;
    for _ in 0..y {
        size = size
            .checked_mul(u64::from(d))
            .and_then(|s| s.checked_add(1))
            .expect("subtree size overflows u64");
    }
    size
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub tree: u32,
    /// Depth counted from the seed, which has depth 1.
    pub depth: u32,
    pub parent: Option<NodeId>,
    first_child: usize,
    child_count: u32,
}

#[derive(Debug, Clone)]
pub struct Forest {
    config: NetworkConfig,
    nodes: Vec<Node>,
}

pub fn build_forest(config: NetworkConfig) -> Result<Forest> {
    config.validate()?;
    let size = config.tree_size();
    let total = u64::from(config.seeds)
        .checked_mul(size)
        .filter(|n| *n <= MAX_NODES)
        .ok_or_else(|| {
            Error::InvalidConfig(format!("forest exceeds {MAX_NODES} nodes"))
        })?;
    let d = config.branching as usize;
    let size = size as usize;
    let internal = full_subtree_size(config.branching, config.height - 1) as usize;

    let mut nodes = Vec::with_capacity(total as usize);
    for tree in 0..config.seeds {
        let offset = tree as usize * size;
        let mut depth = 1;
        let mut level_end = 1;
        for j in 0..size {
            if j == level_end {
                depth += 1;
                level_end = level_end * d + 1;
            }
            let is_internal = j < internal;
            nodes.push(Node {
                tree,
                depth,
                parent: (j > 0).then(|| NodeId(offset + (j - 1) / d)),
                first_child: offset + d * j + 1,
                child_count: if is_internal { d as u32 } else { 0 },
            });
        }
    }
    Ok(Forest { config, nodes })
}

impl Forest {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn seeds(&self) -> impl Iterator<Item = NodeId> + '_ {
        let size = self.config.tree_size() as usize;
        (0..self.config.seeds as usize).map(move |t| NodeId(t * size))
    }

    pub fn seed_of_tree(&self, tree: u32) -> NodeId {
        NodeId(tree as usize * self.config.tree_size() as usize)
    }

    pub fn seed_of(&self, id: NodeId) -> NodeId {
        self.seed_of_tree(self.node(id).tree)
    }

    pub fn is_seed(&self, id: NodeId) -> bool {
        self.node(id).parent.is_none()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.node(id).parent
    }

    pub fn children(&self, id: NodeId) -> impl ExactSizeIterator<Item = NodeId> {
        self.child_range(id).map(NodeId)
    }

    pub fn child_count(&self, id: NodeId) -> usize {
        self.node(id).child_count as usize
    }

    fn child_range(&self, id: NodeId) -> Range<usize> {
        let n = self.node(id);
        n.first_child..n.first_child + n.child_count as usize
    }

    /// Which child of its parent `id` is (0-based), or `None` for a seed.
    pub fn child_index(&self, id: NodeId) -> Option<usize> {
        self.parent(id)
            .map(|p| id.0 - self.node(p).first_child)
    }

    /// Seed-to-node path, inclusive on both ends.
    pub fn path_from_seed(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Child indices taken on the way from the seed to `id`.
    pub fn child_path(&self, id: NodeId) -> Vec<usize> {
        self.path_from_seed(id)
            .iter()
            .filter_map(|&n| self.child_index(n))
            .collect()
    }

    /// `id` and all of its descendants, breadth-first.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            let cur = out[i];
            out.extend(self.children(cur));
            i += 1;
        }
        out
    }

    pub fn is_ancestor(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        while let Some(p) = self.parent(node) {
            if p == ancestor {
                return true;
            }
            node = p;
        }
        false
    }
}
