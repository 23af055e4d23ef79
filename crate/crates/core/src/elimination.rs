//! Iterated elimination of weakly dominated strategies on strategic trees.
//!
//! Each `(node, level)` pair is treated as its own agent: a node's behaviour
//! at level `l` only matters when it actually sits at level `l`. A strategy
//! of agent `(v, l)` is compared against another over every combination of
//!
//! - surviving strategies of `v`'s descendants, summarised per child as a
//!   histogram of attempters by chain length, and
//! - the achievable number of attempters outside `v`'s subtree, given that
//!   `v` is reached at level `l` (ancestors, their other subtrees, other
//!   strategic trees and the fixed external attempters).
//!
//! Clones inserted before authorizing never change anybody's payoff under
//! an almost-uniform table, so they cannot be weakly dominated. Payoff
//! equivalent strategies are therefore collapsed onto the lexicographically
//! smallest representative, and agents that no surviving profile reaches
//! are collapsed the same way.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::game::{focal_utility, LevelStrategy};
use crate::rational::{int, Rational};
use crate::schemes::RewardTable;
use crate::topology::{build_forest, full_subtree_size, Forest, NetworkConfig, NodeId};
use crate::{Error, Result};

/// Seeds required by the almost-uniform guarantee.
pub const THEOREM_MIN_SEEDS: u64 = 7;

/// Largest per-agent strategy set the engine will enumerate.
pub const MAX_STRATEGIES_PER_AGENT: usize = 4096;
pub const MAX_STRATEGIC_NODES: usize = 512;

type Hist = Vec<u64>;
type Worlds = Vec<Hist>;

#[derive(Debug, Clone)]
pub struct EliminationGame {
    forest: Forest,
    table: RewardTable,
    external: u64,
    /// `survivors[node][level - 1]`, kept sorted.
    survivors: Vec<Vec<Vec<LevelStrategy>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HypothesisReport {
    pub branching_ok: bool,
    /// Competition seen by a root: strategic seeds plus external attempters.
    pub root_competition: u64,
    /// `7 + 2/beta + 6`, when the table is almost-uniform.
    pub required_competition: Option<String>,
    pub competition_ok: Option<bool>,
    pub violations: Vec<String>,
}

impl EliminationGame {
    /// `config.seeds` strategic trees sharing `table`, plus `external`
    /// attempters that are aware but have no strategic choices.
    pub fn new(config: NetworkConfig, table: RewardTable, external: u64) -> Result<Self> {
        let forest = build_forest(config)?;
        if forest.len() > MAX_STRATEGIC_NODES {
            return Err(Error::SizeLimit(format!(
                "{} strategic nodes exceed the limit of {MAX_STRATEGIC_NODES}",
                forest.len()
            )));
        }
        let height = table.height();
        let mut survivors = Vec::with_capacity(forest.len());
        for id in forest.ids() {
            let children = forest.child_count(id);
            let mut per_level = Vec::with_capacity(height as usize);
            for level in 1..=height {
                let all = LevelStrategy::enumerate(level, children);
                if all.len() > MAX_STRATEGIES_PER_AGENT {
                    return Err(Error::SizeLimit(format!(
                        "{} strategies at level {level} exceed {MAX_STRATEGIES_PER_AGENT}",
                        all.len()
                    )));
                }
                per_level.push(all);
            }
            survivors.push(per_level);
        }
        Ok(Self {
            forest,
            table,
            external,
            survivors,
        })
    }

    pub fn single_tree(branching: u32, tree_height: u32, table: RewardTable, external: u64) -> Result<Self> {
        Self::new(NetworkConfig::new(1, branching, tree_height)?, table, external)
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn table(&self) -> &RewardTable {
        &self.table
    }

    pub fn scheme_height(&self) -> u32 {
        self.table.height()
    }

    pub fn external(&self) -> u64 {
        self.external
    }

    pub fn with_external(&self, external: u64) -> Self {
        Self {
            external,
            ..self.clone()
        }
    }

    pub fn survivors(&self, node: NodeId, level: u32) -> &[LevelStrategy] {
        &self.survivors[node.0][level as usize - 1]
    }

    pub fn agents(&self) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        let height = self.scheme_height();
        self.forest.ids().flat_map(move |id| (1..=height).map(move |l| (id, l)))
    }

    pub fn strategy_count(&self) -> usize {
        self.survivors.iter().flatten().map(Vec::len).sum()
    }

    /// Every agent is left with exactly full propagation and no duplication.
    pub fn is_fully_propagating(&self) -> bool {
        self.agents().all(|(id, l)| {
            let s = self.survivors(id, l);
            s.len() == 1 && s[0].is_honest()
        })
    }

    /// Full propagation and no duplication is still available to every agent.
    pub fn honest_profile_survives(&self) -> bool {
        self.agents()
            .all(|(id, l)| self.survivors(id, l).iter().any(LevelStrategy::is_honest))
    }

    pub fn hypotheses(&self) -> HypothesisReport {
        let root_competition = self.external + u64::from(self.forest.config().seeds);
        let mut violations = Vec::new();
        let branching_ok = self.forest.config().branching >= 3;
        if !branching_ok {
            violations.push(format!("d = {} < 3", self.forest.config().branching));
        }
        let (required, ok) = match self.table.as_almost_uniform() {
            Some(s) => {
                let need = int(THEOREM_MIN_SEEDS as i64) + int(2) / &s.beta + int(6);
                let ok = int(root_competition as i64) >= need;
                if !ok {
                    violations.push(format!(
                        "root competition {root_competition} below 7 + 2/beta + 6 = {}",
                        crate::rational::format(&need)
                    ));
                }
                (Some(crate::rational::format(&need)), Some(ok))
            }
            None => {
                violations.push("table is not almost-uniform".into());
                (None, None)
            }
        };
        HypothesisReport {
            branching_ok,
            root_competition,
            required_competition: required,
            competition_ok: ok,
            violations,
        }
    }

    fn remove(&mut self, node: NodeId, level: u32, s: &LevelStrategy) {
        let set = &mut self.survivors[node.0][level as usize - 1];
        set.retain(|x| x != s);
        debug_assert!(!set.is_empty());
    }
}

/// A point of the opponent space where two strategies were compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// Attempters outside the focal subtree, the focal node excluded.
    pub others: u64,
    /// Per child, attempters by chain length under the candidate.
    pub candidate_children: Vec<Hist>,
    /// Per child, attempters by chain length under the incumbent.
    pub incumbent_children: Vec<Hist>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub reachable: bool,
    /// `>=` everywhere and `>` somewhere.
    pub dominates: bool,
    /// Equal everywhere (vacuously so when unreachable).
    pub equivalent: bool,
    /// A strict improvement when dominating, otherwise a profile where the
    /// candidate does worse.
    pub witness: Option<Witness>,
}

/// Lazily memoised achievable outcomes under the current survivor sets.
struct Analyzer<'g> {
    game: &'g EliminationGame,
    outcomes: RefCell<HashMap<(usize, Vec<u32>), Rc<BTreeSet<Worlds>>>>,
    externals: RefCell<HashMap<(usize, u32), Rc<BTreeSet<u64>>>>,
}

fn add_worlds(a: &Worlds, b: &Worlds) -> Worlds {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn minkowski(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> BTreeSet<u64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x + y)).collect()
}

impl<'g> Analyzer<'g> {
    fn new(game: &'g EliminationGame) -> Self {
        Self {
            game,
            outcomes: RefCell::default(),
            externals: RefCell::default(),
        }
    }

    fn height(&self) -> u32 {
        self.game.scheme_height()
    }

    /// Achievable attempter histograms of `node`'s subtree when the node sits
    /// at `levels[j]` in world `j`. Agents shared between worlds (same node,
    /// same level) make the same choice.
    fn outcomes(&self, node: NodeId, levels: &[u32]) -> Rc<BTreeSet<Worlds>> {
        let key = (node.0, levels.to_vec());
        if let Some(hit) = self.outcomes.borrow().get(&key) {
            return hit.clone();
        }
        let height = self.height() as usize;
        let worlds = levels.len();
        let mut distinct: Vec<u32> = levels.iter().copied().filter(|&l| l > 0).collect();
        distinct.sort_unstable();
        distinct.dedup();

        let mut result = BTreeSet::new();
        if distinct.is_empty() {
            result.insert(vec![vec![0u64; height]; worlds]);
        } else {
            let sets: Vec<&[LevelStrategy]> =
                distinct.iter().map(|&l| self.game.survivors(node, l)).collect();
            let children: Vec<NodeId> = self.game.forest.children(node).collect();
            let mut pick = vec![0usize; sets.len()];
            loop {
                let chosen = |l: u32| -> &LevelStrategy {
                    let k = distinct.binary_search(&l).expect("level present");
                    &sets[k][pick[k]]
                };
                let mut base = vec![vec![0u64; height]; worlds];
                for (j, &l) in levels.iter().enumerate() {
                    if l > 0 {
                        let s = chosen(l);
                        base[j][(self.height() - l + s.pre_auth) as usize] += 1;
                    }
                }
                let mut acc: BTreeSet<Worlds> = BTreeSet::from([base]);
                for (i, &child) in children.iter().enumerate() {
                    let child_levels: Vec<u32> = levels
                        .iter()
                        .map(|&l| if l > 0 { l - 1 - chosen(l).clones[i] } else { 0 })
                        .collect();
                    let sub = self.outcomes(child, &child_levels);
                    acc = acc
                        .iter()
                        .flat_map(|a| sub.iter().map(move |b| add_worlds(a, b)))
                        .collect();
                }
                result.extend(acc);

                // odometer over the distinct levels' choices
                let mut k = 0;
                loop {
                    if k == pick.len() {
                        let rc = Rc::new(result);
                        self.outcomes.borrow_mut().insert(key, rc.clone());
                        return rc;
                    }
                    pick[k] += 1;
                    if pick[k] < sets[k].len() {
                        break;
                    }
                    pick[k] = 0;
                    k += 1;
                }
            }
        }
        let rc = Rc::new(result);
        self.outcomes.borrow_mut().insert(key, rc.clone());
        rc
    }

    fn totals(&self, node: NodeId, level: u32) -> BTreeSet<u64> {
        self.outcomes(node, &[level])
            .iter()
            .map(|w| w[0].iter().sum())
            .collect()
    }

    /// Achievable attempter counts outside `v`'s subtree (excluding `v`)
    /// over surviving profiles that place `v` at `level`.
    fn outside(&self, v: NodeId, level: u32) -> Rc<BTreeSet<u64>> {
        let key = (v.0, level);
        if let Some(hit) = self.externals.borrow().get(&key) {
            return hit.clone();
        }
        let forest = &self.game.forest;
        let height = self.height();
        let tree = forest.node(v).tree;
        let mut base = BTreeSet::from([self.game.external]);
        for other in forest.seeds().filter(|&s| forest.node(s).tree != tree) {
            base = minkowski(&base, &self.totals(other, height));
        }
        let path = forest.path_from_seed(v);
        let mut frontier: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::from([(height, base)]);
        for pair in path.windows(2) {
            let (u, next) = (pair[0], pair[1]);
            let on_path = forest.child_index(next).expect("child index");
            let mut advanced: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
            for (&lu, counts) in &frontier {
                if lu == 0 {
                    continue;
                }
                for s in self.game.survivors(u, lu) {
                    let mut side = BTreeSet::from([1u64]);
                    for (i, child) in forest.children(u).enumerate() {
                        if i != on_path {
                            side = minkowski(&side, &self.totals(child, lu - 1 - s.clones[i]));
                        }
                    }
                    let next_level = lu - 1 - s.clones[on_path];
                    advanced
                        .entry(next_level)
                        .or_default()
                        .extend(minkowski(counts, &side));
                }
            }
            frontier = advanced;
        }
        let rc = Rc::new(frontier.remove(&level).unwrap_or_default());
        self.externals.borrow_mut().insert(key, rc.clone());
        rc
    }

    fn compare(&self, v: NodeId, level: u32, candidate: &LevelStrategy, incumbent: &LevelStrategy) -> Comparison {
        let outside = self.outside(v, level);
        if outside.is_empty() {
            return Comparison {
                reachable: false,
                dominates: false,
                equivalent: true,
                witness: None,
            };
        }
        let forest = &self.game.forest;
        let per_child: Vec<Vec<Worlds>> = forest
            .children(v)
            .enumerate()
            .map(|(i, child)| {
                let levels = [level - 1 - candidate.clones[i], level - 1 - incumbent.clones[i]];
                self.outcomes(child, &levels).iter().cloned().collect()
            })
            .collect();

        let table = &self.game.table;
        let height = self.height();
        let mut all_ge = true;
        let mut all_eq = true;
        let mut strict: Option<Witness> = None;
        let mut worse: Option<Witness> = None;
        let mut pick = vec![0usize; per_child.len()];
        'outer: loop {
            let cand: Vec<&[u64]> = per_child.iter().zip(&pick).map(|(p, &k)| p[k][0].as_slice()).collect();
            let inc: Vec<&[u64]> = per_child.iter().zip(&pick).map(|(p, &k)| p[k][1].as_slice()).collect();
            for &others in outside.iter() {
                let u_c = focal_utility(table, height, level, candidate, &cand, others);
                let u_i = focal_utility(table, height, level, incumbent, &inc, others);
                if u_c != u_i {
                    all_eq = false;
                    let witness = || Witness {
                        others,
                        candidate_children: cand.iter().map(|h| h.to_vec()).collect(),
                        incumbent_children: inc.iter().map(|h| h.to_vec()).collect(),
                    };
                    if u_c > u_i {
                        strict.get_or_insert_with(witness);
                    } else {
                        all_ge = false;
                        worse.get_or_insert_with(witness);
                        break 'outer;
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == pick.len() {
                    break 'outer;
                }
                pick[k] += 1;
                if pick[k] < per_child[k].len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
        }
        let dominates = all_ge && strict.is_some();
        Comparison {
            reachable: true,
            dominates,
            equivalent: all_eq,
            witness: if dominates { strict } else { worse },
        }
    }
}

/// Compares `candidate` against `incumbent` for agent `(node, level)`.
pub fn compare_strategies(
    game: &EliminationGame,
    node: NodeId,
    level: u32,
    candidate: &LevelStrategy,
    incumbent: &LevelStrategy,
) -> Comparison {
    Analyzer::new(game).compare(node, level, candidate, incumbent)
}

/// Weak dominance of `candidate` over `incumbent` for agent `(node, level)`.
pub fn dominates(
    game: &EliminationGame,
    node: NodeId,
    level: u32,
    candidate: &LevelStrategy,
    incumbent: &LevelStrategy,
) -> bool {
    candidate != incumbent && compare_strategies(game, node, level, candidate, incumbent).dominates
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Dominated,
    /// Payoff-identical to a lexicographically smaller survivor.
    Equivalent,
    /// No surviving profile reaches the agent.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub node: usize,
    pub level: u32,
    pub strategy: LevelStrategy,
    pub by: LevelStrategy,
    pub reason: RemovalReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<u32>,
    pub witness_profile: Option<Witness>,
}

#[derive(Debug, Clone)]
pub struct EliminationRun {
    pub game: EliminationGame,
    pub trace: Vec<TraceRecord>,
    pub hypotheses: HypothesisReport,
}

impl EliminationRun {
    /// One JSON object per removal.
    pub fn trace_json_lines(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace serialises") + "\n")
            .collect()
    }

    /// Surviving sets of every agent as JSON.
    pub fn survivors_json(&self) -> serde_json::Value {
        survivors_json(&self.game)
    }
}

pub fn survivors_json(game: &EliminationGame) -> serde_json::Value {
    let mut nodes = serde_json::Map::new();
    for id in game.forest.ids() {
        let mut levels = serde_json::Map::new();
        for l in 1..=game.scheme_height() {
            levels.insert(l.to_string(), serde_json::to_value(game.survivors(id, l)).expect("serialises"));
        }
        nodes.insert(id.to_string(), serde_json::Value::Object(levels));
    }
    serde_json::Value::Object(nodes)
}

/// Eliminates in the order of the main lemma: for `phi = 0, 1, ..., H - 1`
/// every strategy with some clone count equal to `l - phi - 1` is removed
/// in favour of the strategy with that count lowered by one, after checking
/// that the removal is justified.
pub fn lemma_order_elimination(game: &EliminationGame) -> Result<EliminationRun> {
    let hypotheses = game.hypotheses();
    let mut game = game.clone();
    let mut trace = Vec::new();
    let height = game.scheme_height();
    for phi in 0..height {
        let agents: Vec<(NodeId, u32)> = game.agents().filter(|&(_, l)| l >= phi + 2).collect();
        for (node, level) in agents {
            let cap = level - phi - 1;
            let count_caps = |s: &LevelStrategy| {
                s.clones.iter().filter(|&&c| c == cap).count() + usize::from(s.pre_auth == cap)
            };
            let mut targets: Vec<LevelStrategy> = game
                .survivors(node, level)
                .iter()
                .filter(|s| count_caps(s) > 0)
                .cloned()
                .collect();
            targets.sort_by_key(|s| std::cmp::Reverse(count_caps(s)));
            for s in targets {
                let (candidate, lowers_clone) = match s.clones.iter().position(|&c| c == cap) {
                    Some(i) => {
                        let mut c = s.clone();
                        c.clones[i] -= 1;
                        (c, true)
                    }
                    None => (LevelStrategy::new(s.clones.clone(), s.pre_auth - 1), false),
                };
                let cmp = Analyzer::new(&game).compare(node, level, &candidate, &s);
                let reason = if !cmp.reachable {
                    RemovalReason::Unreachable
                } else if cmp.dominates {
                    RemovalReason::Dominated
                } else if cmp.equivalent && !lowers_clone {
                    RemovalReason::Equivalent
                } else {
                    return Err(Error::DominationCheckFailed {
                        phi,
                        detail: format!(
                            "node {node} at level {level}: {:?} is not dominated by {:?} (witness {:?})",
                            s, candidate, cmp.witness
                        ),
                    });
                };
                game.remove(node, level, &s);
                trace.push(TraceRecord {
                    node: node.0,
                    level,
                    strategy: s,
                    by: candidate,
                    reason,
                    phi: Some(phi),
                    witness_profile: cmp.witness,
                });
            }
        }
    }
    Ok(EliminationRun {
        game,
        trace,
        hypotheses,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedRemoval {
    pub node: NodeId,
    pub level: u32,
    pub strategy: LevelStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderPolicy {
    /// Uniformly random removable strategy at each step.
    Random(u64),
    /// First removable strategy by `(node, level, strategy)` order.
    Greedy,
    /// The given removals in order, then greedy to the fixpoint.
    Scripted(Vec<ScriptedRemoval>),
}

struct Removable {
    node: NodeId,
    level: u32,
    strategy: LevelStrategy,
    by: LevelStrategy,
    reason: RemovalReason,
    witness: Option<Witness>,
}

fn find_remover(an: &Analyzer<'_>, node: NodeId, level: u32, s: &LevelStrategy) -> Option<Removable> {
    for other in an.game.survivors(node, level) {
        if other == s {
            continue;
        }
        let cmp = an.compare(node, level, other, s);
        let reason = if cmp.dominates {
            RemovalReason::Dominated
        } else if cmp.equivalent && other < s {
            if cmp.reachable {
                RemovalReason::Equivalent
            } else {
                RemovalReason::Unreachable
            }
        } else {
            continue;
        };
        return Some(Removable {
            node,
            level,
            strategy: s.clone(),
            by: other.clone(),
            reason,
            witness: cmp.witness,
        });
    }
    None
}

fn first_removable(game: &EliminationGame) -> Option<Removable> {
    let an = Analyzer::new(game);
    for (node, level) in game.agents() {
        if game.survivors(node, level).len() < 2 {
            continue;
        }
        for s in game.survivors(node, level) {
            if let Some(r) = find_remover(&an, node, level, s) {
                return Some(r);
            }
        }
    }
    None
}

fn all_removable(game: &EliminationGame) -> Vec<Removable> {
    let an = Analyzer::new(game);
    let mut out = Vec::new();
    for (node, level) in game.agents() {
        if game.survivors(node, level).len() < 2 {
            continue;
        }
        for s in game.survivors(node, level) {
            out.extend(find_remover(&an, node, level, s));
        }
    }
    out
}

fn apply(game: &mut EliminationGame, trace: &mut Vec<TraceRecord>, r: Removable) {
    game.remove(r.node, r.level, &r.strategy);
    trace.push(TraceRecord {
        node: r.node.0,
        level: r.level,
        strategy: r.strategy,
        by: r.by,
        reason: r.reason,
        phi: None,
        witness_profile: r.witness,
    });
}

/// Removes weakly dominated (or redundant) strategies one at a time,
/// chosen by `policy`, until none is left.
pub fn iterate_elimination(game: &EliminationGame, policy: &OrderPolicy) -> Result<EliminationRun> {
    let hypotheses = game.hypotheses();
    let mut game = game.clone();
    let mut trace = Vec::new();
    match policy {
        OrderPolicy::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            loop {
                let mut options = all_removable(&game);
                if options.is_empty() {
                    break;
                }
                let pick = rng.random_range(0..options.len());
                apply(&mut game, &mut trace, options.swap_remove(pick));
            }
        }
        OrderPolicy::Greedy | OrderPolicy::Scripted(_) => {
            if let OrderPolicy::Scripted(script) = policy {
                for step in script {
                    let an = Analyzer::new(&game);
                    if !game.survivors(step.node, step.level).contains(&step.strategy) {
                        return Err(Error::InvalidParameter(format!(
                            "scripted strategy {:?} of node {} at level {} is not surviving",
                            step.strategy, step.node, step.level
                        )));
                    }
                    let r = find_remover(&an, step.node, step.level, &step.strategy).ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "scripted strategy {:?} of node {} at level {} is not removable",
                            step.strategy, step.node, step.level
                        ))
                    })?;
                    drop(an);
                    apply(&mut game, &mut trace, r);
                }
            }
            while let Some(r) = first_removable(&game) {
                apply(&mut game, &mut trace, r);
            }
        }
    }
    Ok(EliminationRun {
        game,
        trace,
        hypotheses,
    })
}

/// `2/beta + 6 d A(y_d) + 6`, the outside competition above which lowering
/// the largest clone count is strictly better.
pub fn claim_internal_threshold(d: u32, beta: &Rational, y_d: u32) -> Rational {
    int(2) / beta + int(6 * i64::from(d)) * int(full_subtree_size(d, y_d) as i64) + int(6)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimCounterexample {
    /// Clone counts of all `d` children (the last one is the lowered one).
    pub clones: Vec<u32>,
    /// Attempters below children `1..d-1`; the last child's subtree is full.
    pub attempters: Vec<u64>,
    pub reduced_utility: Rational,
    pub original_utility: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimOutcome {
    pub holds: bool,
    /// Smallest value of `U(reduced) - U(original)` scaled by both
    /// (positive) denominators, over all admissible subtree sizes.
    pub margin: Rational,
    pub counterexample: Option<ClaimCounterexample>,
}

fn claim_structure(d: u32, level: u32, clones: &[u32]) -> Result<u32> {
    if clones.len() != d as usize {
        return Err(Error::PreconditionViolated(format!("expected {d} clone counts")));
    }
    let last = *clones.last().unwrap_or(&0);
    if clones.iter().any(|&c| c > last) {
        return Err(Error::PreconditionViolated(
            "the last child must carry the largest clone count".into(),
        ));
    }
    claim_shape(d, level, last)
}

fn claim_shape(d: u32, level: u32, last: u32) -> Result<u32> {
    if d < 3 {
        return Err(Error::BranchingBelowTheorem(d));
    }
    if level < 2 {
        return Err(Error::PreconditionViolated(format!("level {level} < 2")));
    }
    if last == 0 || last > level - 1 {
        return Err(Error::PreconditionViolated(format!(
            "largest clone count {last} must lie in 1..={}",
            level - 1
        )));
    }
    Ok(level - last - 1)
}

/// The sign of `U(reduced) - U(original)` is that of
/// `constant + sum_i coef(c_i) * A_i`, with `A_i` the other subtrees' sizes.
struct ClaimForm<'a> {
    d: u32,
    beta: &'a Rational,
    level: u32,
    last: u32,
    k: u64,
    constant: Rational,
    delta_n: Rational,
    delta_d: Rational,
}

impl<'a> ClaimForm<'a> {
    fn new(d: u32, beta: &'a Rational, level: u32, last: u32, k: u64) -> Result<Self> {
        let y_d = claim_shape(d, level, last)?;
        if k == 0 {
            return Err(Error::PreconditionViolated("k counts the focal node, so k >= 1".into()));
        }
        let l = int(i64::from(level));
        let y = int(i64::from(y_d));
        let a_d = int(full_subtree_size(d, y_d) as i64);
        let delta_d = int(i64::from(d).pow(y_d));
        let n0 = int(1) + beta * &l + beta * (&l - &y) * &a_d;
        let d0 = int(k as i64) + &a_d;
        let delta_n = beta * (&l - &y - int(1)) * (&a_d + &delta_d) - beta * (&l - &y) * &a_d;
        let constant = &delta_n * &d0 - &n0 * &delta_d;
        Ok(Self {
            d,
            beta,
            level,
            last,
            k,
            constant,
            delta_n,
            delta_d,
        })
    }

    /// Worst contribution of one other child with `c` clones and the
    /// subtree size attaining it.
    fn worst_child(&self, c: u32) -> (Rational, u64) {
        let y = self.level - c - 1;
        let coef = &self.delta_n - self.beta * int(i64::from(c) + 1) * &self.delta_d;
        let size = if coef < Rational::zero() {
            full_subtree_size(self.d, y)
        } else {
            u64::from(y >= 1)
        };
        (coef * int(size as i64), size)
    }

    fn outcome(&self, clones: &[u32]) -> ClaimOutcome {
        let mut margin = self.constant.clone();
        let mut sizes = Vec::with_capacity(clones.len() - 1);
        for &c in &clones[..clones.len() - 1] {
            let (term, size) = self.worst_child(c);
            margin += term;
            sizes.push(size);
        }
        let holds = margin > Rational::zero();
        let counterexample = (!holds).then(|| self.counterexample(clones, sizes));
        ClaimOutcome {
            holds,
            margin,
            counterexample,
        }
    }

    fn counterexample(&self, clones: &[u32], sizes: Vec<u64>) -> ClaimCounterexample {
        let beta = self.beta;
        let l = int(i64::from(self.level));
        let mut num = int(1) + beta * &l;
        let mut den = int(self.k as i64);
        for (&c, &a) in clones.iter().zip(&sizes) {
            num += beta * int(i64::from(c) + 1) * int(a as i64);
            den += int(a as i64);
        }
        let y_d = self.level - self.last - 1;
        let a_d = int(full_subtree_size(self.d, y_d) as i64);
        let grown = &a_d + &self.delta_d;
        let kept = beta * int(i64::from(self.last) + 1);
        let original = (&num + &kept * &a_d) / (&den + &a_d);
        let reduced = (&num + (kept - beta) * &grown) / (&den + &grown);
        ClaimCounterexample {
            clones: clones.to_vec(),
            attempters: sizes,
            reduced_utility: reduced,
            original_utility: original,
        }
    }
}

/// Evaluates, at any `k`, whether lowering the last (largest) clone count by
/// one is strictly better for every admissible size of the other children's
/// aware subtrees, when the last child's subtree is a complete tree.
///
/// `U(reduced) - U(original)` has the sign of an affine function of the
/// other subtree sizes, so its minimum over the box of sizes is attained
/// coordinate-wise at an end point.
pub fn probe_claim_internal(d: u32, beta: &Rational, level: u32, clones: &[u32], k: u64) -> Result<ClaimOutcome> {
    claim_structure(d, level, clones)?;
    let form = ClaimForm::new(d, beta, level, clones[d as usize - 1], k)?;
    Ok(form.outcome(clones))
}

/// As [`probe_claim_internal`], additionally minimising over every clone
/// count `0..=l-y_d-1` of the other children.
pub fn probe_claim_internal_all(d: u32, beta: &Rational, level: u32, y_d: u32, k: u64) -> Result<ClaimOutcome> {
    if y_d + 2 > level {
        return Err(Error::PreconditionViolated(format!("y_d = {y_d} exceeds l - 2")));
    }
    let last = level - y_d - 1;
    let form = ClaimForm::new(d, beta, level, last, k)?;
    let worst = (0..=last)
        .min_by(|&a, &b| form.worst_child(a).0.cmp(&form.worst_child(b).0))
        .expect("non-empty range");
    let mut clones = vec![worst; d as usize - 1];
    clones.push(last);
    Ok(form.outcome(&clones))
}

fn require_threshold(d: u32, beta: &Rational, y_d: u32, k: u64) -> Result<()> {
    let threshold = claim_internal_threshold(d, beta, y_d);
    if int(k as i64) < threshold {
        return Err(Error::PreconditionViolated(format!(
            "k = {k} below 2/beta + 6 d A(y_d) + 6 = {}",
            crate::rational::format(&threshold)
        )));
    }
    Ok(())
}

/// As [`probe_claim_internal`], but `k` must meet
/// [`claim_internal_threshold`].
pub fn check_claim_internal(d: u32, beta: &Rational, level: u32, clones: &[u32], k: u64) -> Result<bool> {
    let y_d = claim_structure(d, level, clones)?;
    require_threshold(d, beta, y_d, k)?;
    Ok(probe_claim_internal(d, beta, level, clones, k)?.holds)
}

/// As [`probe_claim_internal_all`], but `k` must meet
/// [`claim_internal_threshold`].
pub fn check_claim_internal_all(d: u32, beta: &Rational, level: u32, y_d: u32, k: u64) -> Result<bool> {
    claim_shape(d, level, level.saturating_sub(y_d + 1))?;
    require_threshold(d, beta, y_d, k)?;
    Ok(probe_claim_internal_all(d, beta, level, y_d, k)?.holds)
}

/// Smallest integer `k` meeting [`claim_internal_threshold`].
pub fn claim_internal_min_k(d: u32, beta: &Rational, y_d: u32) -> u64 {
    let t = claim_internal_threshold(d, beta, y_d);
    u64::try_from(t.ceil().to_integer()).expect("threshold fits u64")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{attempt_set, expected_utility, expected_utility_closed_form, ExternalEnvironment, Profile};
    use crate::rational::ratio;
    use crate::schemes::{make_almost_uniform, AlmostUniform, SchemeAssignment};

    fn small_game(external: u64) -> EliminationGame {
        let table = make_almost_uniform(int(1), 2).unwrap();
        EliminationGame::single_tree(3, 2, table, external).unwrap()
    }

    #[test]
    fn lemma_order_reaches_full_propagation() {
        let run = lemma_order_elimination(&small_game(14)).unwrap();
        assert!(run.game.is_fully_propagating());
        assert!(run.hypotheses.violations.is_empty());
        assert!(run.trace.iter().all(|r| r.phi == Some(0)));
        // the seed's 15 non-honest strategies plus three unreachable leaf agents
        let seed_removals = run.trace.iter().filter(|r| r.node == 0).count();
        assert_eq!(seed_removals, 15);
    }

    #[test]
    fn thin_competition_breaks_the_first_step() {
        match lemma_order_elimination(&small_game(1)) {
            Err(Error::DominationCheckFailed { phi, .. }) => assert_eq!(phi, 0),
            other => panic!("expected a failed check, got {other:?}"),
        }
        let report = small_game(1).hypotheses();
        assert_eq!(report.competition_ok, Some(false));
    }

    #[test]
    fn every_policy_converges_to_the_same_survivors() {
        let game = small_game(14);
        let greedy = iterate_elimination(&game, &OrderPolicy::Greedy).unwrap();
        assert!(greedy.game.is_fully_propagating());
        for seed in 0..5 {
            let run = iterate_elimination(&game, &OrderPolicy::Random(seed)).unwrap();
            assert!(run.game.is_fully_propagating(), "seed {seed}");
            assert_eq!(run.survivors_json(), greedy.survivors_json());
        }
    }

    #[test]
    fn random_policy_is_reproducible() {
        let game = small_game(14);
        let a = iterate_elimination(&game, &OrderPolicy::Random(9)).unwrap();
        let b = iterate_elimination(&game, &OrderPolicy::Random(9)).unwrap();
        assert_eq!(a.trace_json_lines(), b.trace_json_lines());
    }

    #[test]
    fn scripted_steps_must_be_removable() {
        let game = small_game(14);
        let honest = ScriptedRemoval {
            node: NodeId(0),
            level: 2,
            strategy: LevelStrategy::honest(3),
        };
        assert!(iterate_elimination(&game, &OrderPolicy::Scripted(vec![honest])).is_err());
        let bad = ScriptedRemoval {
            node: NodeId(0),
            level: 2,
            strategy: LevelStrategy::new(vec![1, 1, 1], 0),
        };
        let run = iterate_elimination(&game, &OrderPolicy::Scripted(vec![bad.clone()])).unwrap();
        assert_eq!(run.trace[0].strategy, bad.strategy);
        assert!(run.game.is_fully_propagating());
    }

    #[test]
    fn trace_lines_are_json() {
        let run = lemma_order_elimination(&small_game(14)).unwrap();
        let text = run.trace_json_lines();
        assert_eq!(text.lines().count(), run.trace.len());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("node").is_some() && v.get("witness_profile").is_some());
        }
    }

    #[test]
    fn unreachable_agents_are_collapsed() {
        let run = lemma_order_elimination(&small_game(14)).unwrap();
        let leaf_level_two: Vec<_> = run.trace.iter().filter(|r| r.node != 0).collect();
        assert!(!leaf_level_two.is_empty());
        assert!(leaf_level_two
            .iter()
            .all(|r| r.level == 2 && r.reason == RemovalReason::Unreachable));
    }

    /// Root of a d=3, height-2 tree under a height-3 table: compares every
    /// pair of root strategies over all descendant profiles built explicitly.
    #[test]
    fn root_dominance_matches_profile_enumeration() {
        for external in [1u64, 4, 14] {
            let table = make_almost_uniform(int(1), 3).unwrap();
            let game = EliminationGame::single_tree(3, 2, table.clone(), external).unwrap();
            let forest = game.forest().clone();
            let root = NodeId(0);
            let leaves: Vec<NodeId> = forest.children(root).collect();
            let mut profiles = Vec::new();
            for mask in 0..8u32 {
                let mut p = Profile::honest(&forest, 3);
                for (i, &leaf) in leaves.iter().enumerate() {
                    p.set(&forest, leaf, 2, LevelStrategy::new(vec![], (mask >> i) & 1)).unwrap();
                }
                profiles.push(p);
            }
            let env = ExternalEnvironment::new(external + 1).unwrap();
            let strategies: Vec<LevelStrategy> = LevelStrategy::enumerate(3, 3)
                .into_iter()
                .filter(|s| s.pre_auth == 0)
                .collect();
            let utilities: Vec<Vec<Rational>> = strategies
                .iter()
                .map(|s| {
                    profiles
                        .iter()
                        .map(|p| expected_utility(&forest, root, 3, s, p, env, &table).unwrap())
                        .collect()
                })
                .collect();
            for (a, ua) in strategies.iter().zip(&utilities) {
                for (b, ub) in strategies.iter().zip(&utilities) {
                    let ge = ua.iter().zip(ub).all(|(x, y)| x >= y);
                    let gt = ua.iter().zip(ub).any(|(x, y)| x > y);
                    assert_eq!(dominates(&game, root, 3, a, b), ge && gt, "{a:?} vs {b:?} ext {external}");
                }
            }
        }
    }

    /// A middle node of a height-3 tree: the outside competition it can face
    /// is rebuilt from explicit profiles of the seed and its siblings.
    #[test]
    fn inner_dominance_matches_profile_enumeration() {
        let table = make_almost_uniform(int(1), 3).unwrap();
        let external = 3;
        let game = EliminationGame::single_tree(3, 3, table.clone(), external).unwrap();
        let forest = game.forest().clone();
        let assignment = SchemeAssignment::uniform(1, table.clone());
        let root = NodeId(0);
        let mids: Vec<NodeId> = forest.children(root).collect();
        let v = mids[0];
        let subtree: BTreeSet<NodeId> = forest.subtree(v).into_iter().collect();

        let mut outside = BTreeSet::new();
        let root_choices: Vec<LevelStrategy> = LevelStrategy::enumerate(3, 3)
            .into_iter()
            .filter(|s| s.clones[0] == 0 && s.pre_auth == 0)
            .collect();
        let mid_choices = LevelStrategy::enumerate(2, 3);
        for rs in &root_choices {
            for s1 in &mid_choices {
                for s2 in &mid_choices {
                    let mut p = Profile::honest(&forest, 3);
                    p.set(&forest, root, 3, rs.clone()).unwrap();
                    p.set(&forest, mids[1], 2, s1.clone()).unwrap();
                    p.set(&forest, mids[2], 2, s2.clone()).unwrap();
                    let attempters = attempt_set(&forest, &p, &assignment).unwrap();
                    let outside_count = attempters.iter().filter(|n| !subtree.contains(n)).count() as u64;
                    outside.insert(external + outside_count);
                }
            }
        }
        let an = Analyzer::new(&game);
        assert_eq!(*an.outside(v, 2), outside);

        let scheme = AlmostUniform::new(int(1), 3).unwrap();
        let own: Vec<LevelStrategy> = LevelStrategy::enumerate(2, 3);
        for a in &own {
            for b in &own {
                let u = |s: &LevelStrategy, x: u64| {
                    let counts: Vec<u64> = s.clones.iter().map(|&c| u64::from(c == 0)).collect();
                    expected_utility_closed_form(2, &s.clones, &counts, ExternalEnvironment::new(x + 1).unwrap(), &scheme)
                        .unwrap()
                };
                let ge = outside.iter().all(|&x| u(a, x) >= u(b, x));
                let gt = outside.iter().any(|&x| u(a, x) > u(b, x));
                assert_eq!(dominates(&game, v, 2, a, b), ge && gt, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn lemma_pairs_stay_dominated_as_competition_grows() {
        let base = small_game(1);
        let root = NodeId(0);
        for s in LevelStrategy::enumerate(2, 3) {
            let Some(i) = s.clones.iter().position(|&c| c == 1) else {
                continue;
            };
            let mut lowered = s.clone();
            lowered.clones[i] = 0;
            let mut seen = false;
            for external in 0..40 {
                let now = dominates(&base.with_external(external), root, 2, &lowered, &s);
                assert!(!seen || now, "{s:?} lost dominance at {external}");
                seen |= now;
            }
            assert!(seen);
        }
    }

    #[test]
    fn claim_threshold_value() {
        assert_eq!(claim_internal_threshold(3, &ratio(1, 4), 1), int(32));
        assert_eq!(claim_internal_min_k(3, &ratio(1, 4), 1), 32);
        assert_eq!(claim_internal_min_k(3, &ratio(2, 3), 0), 9);
    }

    #[test]
    fn claim_holds_on_grid_at_threshold() {
        for d in 3..=4u32 {
            for beta in [ratio(1, 4), ratio(1, 2), int(1), int(2)] {
                for level in 2..=5u32 {
                    for cd in 1..level {
                        let y_d = level - cd - 1;
                        let k = claim_internal_min_k(d, &beta, y_d);
                        for others in 0..cd.pow(d - 1) + 1 {
                            let mut clones: Vec<u32> = (0..d - 1)
                                .map(|i| (others / (cd + 1).pow(i)) % (cd + 1))
                                .collect();
                            clones.push(cd);
                            assert!(check_claim_internal(d, &beta, level, &clones, k).unwrap(), "{d} {beta} {level} {clones:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn claim_preconditions() {
        let b = int(1);
        assert!(matches!(check_claim_internal(2, &b, 3, &[0, 1], 100), Err(Error::BranchingBelowTheorem(2))));
        assert!(matches!(check_claim_internal(3, &b, 1, &[0, 0, 0], 100), Err(Error::PreconditionViolated(_))));
        assert!(matches!(check_claim_internal(3, &b, 3, &[0, 0, 0], 100), Err(Error::PreconditionViolated(_))));
        assert!(matches!(check_claim_internal(3, &b, 3, &[2, 0, 1], 100), Err(Error::PreconditionViolated(_))));
        assert!(matches!(check_claim_internal(3, &b, 3, &[0, 0, 1], 3), Err(Error::PreconditionViolated(_))));
    }

    fn brute_force_claim(d: u32, beta: &Rational, level: u32, clones: &[u32], k: u64) -> bool {
        let scheme = AlmostUniform::new(beta.clone(), level).unwrap();
        let y_d = level - clones[d as usize - 1] - 1;
        let ranges: Vec<(u64, u64)> = clones[..d as usize - 1]
            .iter()
            .map(|&c| {
                let y = level - c - 1;
                (u64::from(y >= 1), full_subtree_size(d, y))
            })
            .collect();
        let mut sizes: Vec<u64> = ranges.iter().map(|r| r.0).collect();
        let env = ExternalEnvironment::new(k).unwrap();
        let mut reduced = clones.to_vec();
        reduced[d as usize - 1] -= 1;
        loop {
            let mut a = sizes.clone();
            a.push(full_subtree_size(d, y_d));
            let u_orig = expected_utility_closed_form(level, clones, &a, env, &scheme).unwrap();
            a[d as usize - 1] = full_subtree_size(d, y_d + 1);
            let u_red = expected_utility_closed_form(level, &reduced, &a, env, &scheme).unwrap();
            if u_red <= u_orig {
                return false;
            }
            let mut i = 0;
            loop {
                if i == sizes.len() {
                    return true;
                }
                sizes[i] += 1;
                if sizes[i] <= ranges[i].1 {
                    break;
                }
                sizes[i] = ranges[i].0;
                i += 1;
            }
        }
    }

    #[test]
    fn claim_probe_matches_box_enumeration() {
        for beta in [ratio(1, 3), int(1), int(3)] {
            for level in 2..=4u32 {
                for cd in 1..level {
                    for c1 in 0..=cd {
                        for c2 in 0..=cd {
                            let clones = [c1, c2, cd];
                            for k in [1u64, 2, 5, 10, 20, 40] {
                                let probe = probe_claim_internal(3, &beta, level, &clones, k).unwrap();
                                assert_eq!(probe.holds, brute_force_claim(3, &beta, level, &clones, k), "{beta} {level} {clones:?} {k}");
                                if let Some(cx) = probe.counterexample {
                                    assert!(cx.reduced_utility <= cx.original_utility);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn worst_case_over_all_clone_counts_matches_explicit_search() {
        for beta in [ratio(1, 8), ratio(1, 2), int(1)] {
            for level in 2..=5u32 {
                for y_d in 0..=level - 2 {
                    let cd = level - y_d - 1;
                    for k in [1u64, 3, 8, 30, claim_internal_min_k(3, &beta, y_d)] {
                        let all = probe_claim_internal_all(3, &beta, level, y_d, k).unwrap();
                        let mut explicit = true;
                        for c1 in 0..=cd {
                            for c2 in 0..=cd {
                                explicit &= probe_claim_internal(3, &beta, level, &[c1, c2, cd], k).unwrap().holds;
                            }
                        }
                        assert_eq!(all.holds, explicit, "{beta} {level} {y_d} {k}");
                    }
                }
            }
        }
    }

    #[test]
    fn thin_competition_yields_a_counterexample() {
        let out = probe_claim_internal_all(3, &int(1), 3, 0, 1).unwrap();
        assert!(!out.holds);
        let cx = out.counterexample.unwrap();
        assert!(cx.reduced_utility <= cx.original_utility);
        assert!(matches!(check_claim_internal_all(3, &int(1), 3, 0, 1), Err(Error::PreconditionViolated(_))));
    }
}
