//! Sampling authorizers and comparing with exact expectations.

use propagation_incentives::game::{exact_expected_rewards, simulate_authorization, Profile, SimulationConfig};
use propagation_incentives::rational::{int, to_f64};
use propagation_incentives::schemes::{make_almost_uniform, SchemeAssignment};
use propagation_incentives::topology::{build_forest, NetworkConfig};

fn main() -> propagation_incentives::Result<()> {
    let forest = build_forest(NetworkConfig::new(2, 3, 3)?)?;
    let assignment = SchemeAssignment::uniform(2, make_almost_uniform(int(1), 3)?);
    let profile = Profile::honest(&forest, 3);
    let config = SimulationConfig { trials: 50_000, seed: 7, external_attempters: 10 };
    let report = simulate_authorization(&forest, &profile, &assignment, config)?;
    let exact = exact_expected_rewards(&forest, &profile, &assignment, 10)?;
    for id in forest.ids().take(6) {
        let s = report.node(id);
        println!("node {id}: sampled {:.5} +- {:.5}, exact {:.5}", s.mean_reward, s.std_error, to_f64(&exact.per_node[id.0]));
    }
    println!("{}", report.summary_json());
    Ok(())
}
