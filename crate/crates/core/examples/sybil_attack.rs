//! Gains from posting fake identities under different reward tables.

use propagation_incentives::rational::{int, ratio};
use propagation_incentives::schemes::{make_almost_uniform, make_geometric, SchemeAssignment};
use propagation_incentives::sybil::{scan_sybil, sybil_gain, sybil_report_csv};
use propagation_incentives::game::Profile;
use propagation_incentives::topology::{build_forest, NetworkConfig};

fn main() -> propagation_incentives::Result<()> {
    let geometric = make_geometric(int(2000), ratio(1, 2), 10)?;
    println!("geometric, position 2 of 3, one fake: {:+}", sybil_gain(&geometric, 2, 3, 1)?);
    let uniform = make_almost_uniform(int(1), 6)?;
    println!("almost-uniform authorizer, 3 fakes: {:+}", sybil_gain(&uniform, 1, 2, 3)?);

    let forest = build_forest(NetworkConfig::new(1, 3, 2)?)?;
    let assignment = SchemeAssignment::uniform(1, make_almost_uniform(int(1), 2)?);
    let profile = Profile::honest(&forest, 2);
    let responses = scan_sybil(&forest, &assignment, &profile, 14, 3)?;
    print!("{}", sybil_report_csv("almost-uniform", &responses));
    Ok(())
}
