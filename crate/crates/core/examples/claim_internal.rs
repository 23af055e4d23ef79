//! Hoarding versus propagating for an internal node, worst case over the
//! rest of the tree.

use propagation_incentives::elimination::{claim_internal_min_k, probe_claim_internal_all};
use propagation_incentives::rational::ratio;

fn main() -> propagation_incentives::Result<()> {
    let beta = ratio(1, 2);
    for d in [3, 4] {
        for level in 2..=5 {
            for y_d in 0..=level - 2 {
                let k = claim_internal_min_k(d, &beta, y_d);
                let outcome = probe_claim_internal_all(d, &beta, level, y_d, k)?;
                println!("d={d} l={level} y_d={y_d} k={k}: holds={} margin={}", outcome.holds, outcome.margin);
            }
        }
    }
    // far below the threshold the claim can fail
    let thin = probe_claim_internal_all(3, &beta, 4, 0, 1)?;
    println!("k=1: holds={} counterexample={:?}", thin.holds, thin.counterexample);
    Ok(())
}
