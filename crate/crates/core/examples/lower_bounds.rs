//! Payment lower bounds for schemes with dominant-strategy propagation.

use propagation_incentives::bounds::{binom_sides, check_scheme_constraints, pascal_equality_table, dominant_payment_bound, rmh_lower_bound};
use propagation_incentives::rational::{int, ratio, to_f64};
use propagation_incentives::schemes::make_almost_uniform;

fn main() -> propagation_incentives::Result<()> {
    for (t, height) in [(2, 5), (4, 10), (16, 8)] {
        let b = dominant_payment_bound(t, height)?;
        println!("t={t} H={height}: payment >= {:.8} (interval width {:.1e})", b.approx(), to_f64(&(&b.upper - &b.lower)));
    }
    for m in 1..=4 {
        println!("rmH(m={m}, t=3) = {}", rmh_lower_bound(m, 3)?.lower);
    }
    // a table tight on pascal attains the binomial identity exactly
    let tight = pascal_equality_table(&[ratio(1, 8), ratio(1, 8), ratio(1, 4), ratio(1, 2)])?;
    let (top, weighted) = binom_sides(&tight, 4)?;
    println!("r(1,1) = {top}, binomial sum = {weighted}");

    let table = make_almost_uniform(int(1), 3)?;
    for v in check_scheme_constraints(&table, 7, 3)?.violations {
        println!("violates {:?} at {:?}: {} < {}", v.constraint, v.indices, v.lhs, v.rhs);
    }
    Ok(())
}
