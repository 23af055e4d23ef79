//! Exact linear-programming minimum of the payment subject to the
//! dominant-strategy constraints.

use propagation_incentives::bounds::{min_payment_oracle, rmh_lower_bound, OracleObjective};

fn main() -> propagation_incentives::Result<()> {
    for hs in 1..=4 {
        for t in [2, 3, 5] {
            let root = min_payment_oracle(hs, t, OracleObjective::RootReward)?;
            let mean = min_payment_oracle(hs, t, OracleObjective::ExpectedPayment)?;
            let bound = rmh_lower_bound(hs, t)?;
            println!("H_s={hs} t={t}: root {} (rmH {}), expected payment {}", root.value, bound.lower, mean.value);
        }
    }
    println!("{}", min_payment_oracle(2, 2, OracleObjective::RootReward)?.to_json());
    Ok(())
}
