//! Seeded Monte Carlo over the authorizer draw.
//!
//! Trials are split into fixed-size chunks; chunk `c` draws from a ChaCha
//! stream `c` under the run's seed, and chunk results are merged in chunk
//! order, so output does not depend on the thread count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{allocate_rewards, attempters_from_levels, compute_levels, winning_chain, Profile};
use crate::rational::{self, Rational};
use crate::schemes::SchemeAssignment;
use crate::topology::{Forest, NodeId};
use crate::{Error, Result};

const CHUNK: u64 = 4096;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub trials: u64,
    pub seed: u64,
    /// Attempters outside the forest; when one of them wins nobody in the
    /// forest is paid.
    pub external_attempters: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStats {
    pub node: usize,
    pub mean_reward: f64,
    /// Standard error of `mean_reward`.
    pub std_error: f64,
    pub wins: u64,
    pub win_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub trials: u64,
    pub seed: u64,
    pub attempters: usize,
    pub external_attempters: u64,
    pub external_wins: u64,
    pub mean_payment: f64,
    /// Total payment of a trial (`"num/den"`) to the number of trials.
    pub payment_distribution: BTreeMap<String, u64>,
    #[serde(skip)]
    pub nodes: Vec<NodeStats>,
}

/// Precomputed consequence of one attempter winning.
struct Outcome {
    payouts: Vec<(usize, f64)>,
    payment: usize,
}

#[derive(Clone)]
struct Acc {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    wins: Vec<u64>,
    external_wins: u64,
    payments: Vec<u64>,
}

impl Acc {
    fn new(nodes: usize, payment_kinds: usize) -> Self {
        Self {
            sum: vec![0.0; nodes],
            sum_sq: vec![0.0; nodes],
            wins: vec![0; nodes],
            external_wins: 0,
            payments: vec![0; payment_kinds],
        }
    }

    fn merge(&mut self, other: &Acc) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.wins.iter_mut().zip(&other.wins) {
            *a += b;
        }
        for (a, b) in self.payments.iter_mut().zip(&other.payments) {
            *a += b;
        }
        self.external_wins += other.external_wins;
    }
}

/// Draws the authorizer uniformly from the attempt set (plus external
/// attempters) `trials` times and allocates rewards along each winning chain.
pub fn simulate_authorization(
    forest: &Forest,
    profile: &Profile,
    assignment: &SchemeAssignment,
    config: SimulationConfig,
) -> Result<SimulationReport> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let levels = compute_levels(forest, profile, assignment)?;
    let attempters = attempters_from_levels(forest, &levels);
    if attempters.is_empty() {
        return Err(Error::NoAttempters);
    }

    let mut payment_values: Vec<Rational> = Vec::new();
    let mut outcomes = Vec::with_capacity(attempters.len());
    for &w in &attempters {
        let chain = winning_chain(forest, profile, &levels, w)?;
        let paid = allocate_rewards(&chain, assignment.table(forest.node(w).tree));
        let total: Rational = paid.values().sum();
        let payment = match payment_values.iter().position(|p| *p == total) {
            Some(i) => i,
            None => {
                payment_values.push(total);
                payment_values.len() - 1
            }
        };
        outcomes.push(Outcome {
            payouts: paid
                .iter()
                .map(|(node, r)| (node.0, rational::to_f64(r)))
                .collect(),
            payment,
        });
    }
    let payment_f64: Vec<f64> = payment_values.iter().map(rational::to_f64).collect();

    let draw_space = attempters.len() as u64 + config.external_attempters;
    let chunks = config.trials.div_ceil(CHUNK);
    let nodes = forest.len();
    let partials: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(c);
            let n = CHUNK.min(config.trials - c * CHUNK);
            let mut acc = Acc::new(nodes, payment_values.len());
            for _ in 0..n {
                let idx = rng.random_range(0..draw_space);
                let Some(outcome) = outcomes.get(idx as usize) else {
                    acc.external_wins += 1;
                    continue;
                };
                acc.wins[attempters[idx as usize].0] += 1;
                acc.payments[outcome.payment] += 1;
                for &(node, r) in &outcome.payouts {
                    acc.sum[node] += r;
                    acc.sum_sq[node] += r * r;
                }
            }
            acc
        })
        .collect();
    let mut total = Acc::new(nodes, payment_values.len());
    for p in &partials {
        total.merge(p);
    }

    let n = config.trials as f64;
    let node_stats = (0..nodes)
        .map(|i| {
            let mean = total.sum[i] / n;
            let var = if config.trials > 1 {
                ((total.sum_sq[i] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            NodeStats {
                node: i,
                mean_reward: mean,
                std_error: (var / n).sqrt(),
                wins: total.wins[i],
                win_freq: total.wins[i] as f64 / n,
            }
        })
        .collect();

    let mut payment_distribution = BTreeMap::new();
    let mut mean_payment = 0.0;
    for (i, value) in payment_values.iter().enumerate() {
        if total.payments[i] > 0 {
            payment_distribution.insert(rational::format(value), total.payments[i]);
            mean_payment += payment_f64[i] * total.payments[i] as f64;
        }
    }
    if total.external_wins > 0 {
        payment_distribution.insert("external".to_string(), total.external_wins);
    }

    Ok(SimulationReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        trials: config.trials,
        seed: config.seed,
        attempters: attempters.len(),
        external_attempters: config.external_attempters,
        external_wins: total.external_wins,
        mean_payment: mean_payment / n,
        payment_distribution,
        nodes: node_stats,
    })
}

impl SimulationReport {
    pub fn node(&self, id: NodeId) -> &NodeStats {
        &self.nodes[id.0]
    }

    /// `node_id,mean_reward,win_freq`, one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,mean_reward,win_freq\n");
        for s in &self.nodes {
            out.push_str(&format!("{},{},{}\n", s.node, s.mean_reward, s.win_freq));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{exact_expected_rewards, LevelStrategy};
    use crate::rational::int;
    use crate::schemes::make_almost_uniform;
    use crate::topology::{build_forest, NetworkConfig};

    fn setup(height: u32) -> (Forest, SchemeAssignment, Profile) {
        let f = build_forest(NetworkConfig::new(1, 3, 2).unwrap()).unwrap();
        let s = SchemeAssignment::uniform(1, make_almost_uniform(int(1), height).unwrap());
        let p = Profile::honest(&f, height);
        (f, s, p)
    }

    #[test]
    fn uniform_winner_draw() {
        let (f, s, p) = setup(2);
        let cfg = SimulationConfig {
            trials: 100_000,
            seed: 7,
            external_attempters: 6,
        };
        let r = simulate_authorization(&f, &p, &s, cfg).unwrap();
        let freq = 0.1;
        let se = (freq * (1.0 - freq) / cfg.trials as f64).sqrt();
        for id in f.ids() {
            assert!((r.node(id).win_freq - freq).abs() < 3.0 * se, "node {id}");
        }
        let ext = r.external_wins as f64 / cfg.trials as f64;
        assert!((ext - 0.6).abs() < 3.0 * (0.24f64 / cfg.trials as f64).sqrt());
    }

    #[test]
    fn full_propagation_pays_the_closed_form() {
        let (f, s, p) = setup(2);
        let cfg = SimulationConfig {
            trials: 5_000,
            seed: 1,
            external_attempters: 0,
        };
        let r = simulate_authorization(&f, &p, &s, cfg).unwrap();
        assert_eq!(r.payment_distribution.len(), 1);
        assert_eq!(r.payment_distribution["3/1"], 5_000);
    }

    #[test]
    fn means_converge_to_exact_expectation() {
        let (f, s, mut p) = setup(2);
        p.set(&f, NodeId(0), 2, LevelStrategy::new(vec![0, 1, 0], 1)).unwrap();
        let exact = exact_expected_rewards(&f, &p, &s, 3).unwrap();
        let cfg = SimulationConfig {
            trials: 100_000,
            seed: 99,
            external_attempters: 3,
        };
        let r = simulate_authorization(&f, &p, &s, cfg).unwrap();
        for id in f.ids() {
            let want = rational::to_f64(&exact.per_node[id.0]);
            let got = r.node(id);
            if got.std_error == 0.0 {
                assert_eq!(got.mean_reward, want);
            } else {
                assert!((got.mean_reward - want).abs() < 3.0 * got.std_error, "node {id}");
            }
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let (f, s, p) = setup(2);
        let cfg = SimulationConfig {
            trials: 20_000,
            seed: 5,
            external_attempters: 2,
        };
        let a = simulate_authorization(&f, &p, &s, cfg).unwrap();
        let b = simulate_authorization(&f, &p, &s, cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.summary_json(), b.summary_json());
        let c = simulate_authorization(&f, &p, &s, SimulationConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn zero_trials_rejected() {
        let (f, s, p) = setup(2);
        let cfg = SimulationConfig {
            trials: 0,
            seed: 0,
            external_attempters: 0,
        };
        assert!(simulate_authorization(&f, &p, &s, cfg).is_err());
    }
}
