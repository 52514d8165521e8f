//! Maximal couplings of discrete laws, exactly in rationals and in floats.

use asiplab::coupling::{maximal_coupling, maximal_coupling_of, total_variation, DiscreteDistribution};
use num::{BigInt, BigRational};

fn q(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn main() -> asiplab::Result<()> {
    let f = vec![q(1, 2), q(1, 3), q(1, 6)];
    let g = vec![q(1, 4), q(1, 4), q(1, 2)];
    let plan = maximal_coupling(&f, &g)?;
    println!("TV = {}, P(X != Y) = {}", total_variation(&f, &g)?, plan.mismatch());
    for row in &plan.joint {
        println!("  {}", row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("  "));
    }
    assert_eq!(plan.row_sums(), f);
    assert_eq!(plan.column_sums(), g);

    let a = DiscreteDistribution::on_line(&[0.0, 1.0, 2.0], &[0.2, 0.5, 0.3])?;
    let b = DiscreteDistribution::on_line(&[1.0, 2.0, 3.0], &[0.4, 0.4, 0.2])?;
    let (support, plan) = maximal_coupling_of(&a, &b)?;
    println!("support {support:?}, mismatch {:.6}", plan.mismatch());
    Ok(())
}
