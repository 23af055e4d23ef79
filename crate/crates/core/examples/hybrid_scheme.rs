//! Splitting seeds between a cheap geometric table and an almost-uniform one.

use propagation_incentives::rational::to_f64;
use propagation_incentives::schemes::{hybrid_expected_payment, make_hybrid, worst_case_payment, SeedGroup};

fn main() -> propagation_incentives::Result<()> {
    let (a, b, d, height) = (7, 7, 3, 9);
    let assignment = make_hybrid(a, b, d, height)?;
    if let Some(w) = &assignment.warning {
        println!("warning: {w}");
    }
    let expected = hybrid_expected_payment(&assignment, d, height)?;
    println!("expected payment {expected} ~ {:.4}", to_f64(&expected));
    println!("worst case, group A: {}", worst_case_payment(&assignment, SeedGroup::A));
    println!("worst case, group B: {}", worst_case_payment(&assignment, SeedGroup::B));
    Ok(())
}
