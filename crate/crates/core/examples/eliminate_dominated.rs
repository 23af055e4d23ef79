//! Iterated removal of weakly dominated strategies on a small tree.

use propagation_incentives::elimination::{iterate_elimination, lemma_order_elimination, EliminationGame, OrderPolicy};
use propagation_incentives::rational::int;
use propagation_incentives::schemes::make_almost_uniform;

fn main() -> propagation_incentives::Result<()> {
    let table = make_almost_uniform(int(1), 2)?;
    // one strategic tree of branching 3 and height 2, 14 attempters elsewhere
    let game = EliminationGame::single_tree(3, 2, table, 14)?;
    println!("hypotheses: {:?}", game.hypotheses());

    let run = lemma_order_elimination(&game)?;
    for line in run.trace_json_lines().lines().take(5) {
        println!("{line}");
    }
    println!("... {} removals, fully propagating: {}", run.trace.len(), run.game.is_fully_propagating());

    for seed in 0..5 {
        let r = iterate_elimination(&game, &OrderPolicy::Random(seed))?;
        println!("random order {seed}: honest survives = {}", r.game.honest_profile_survives());
    }
    Ok(())
}
