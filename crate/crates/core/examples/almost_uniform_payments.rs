//! Reward tables of the almost-uniform family and their total payments.

use propagation_incentives::rational::{int, ratio};
use propagation_incentives::schemes::make_almost_uniform;

fn main() -> propagation_incentives::Result<()> {
    for (beta, horizon) in [(int(1), 4), (ratio(1, 4), 4), (ratio(1, 2), 3)] {
        let table = make_almost_uniform(beta.clone(), horizon)?;
        println!("beta = {beta}, H = {horizon}");
        for h in 1..=horizon {
            let row: Vec<String> = (1..=h).map(|i| table.get(i, h).to_string()).collect();
            println!("  h = {h}: [{}] total {}", row.join(", "), table.total_payment(h));
        }
    }
    Ok(())
}
