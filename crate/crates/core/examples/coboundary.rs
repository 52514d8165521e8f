//! A coboundary `f = g - g o T`: bounded partial sums and `Sigma^2 = 0`.

use asiplab::models::catalog;
use asiplab::validator::{coboundary_probe, degenerate_split};
use nalgebra::DMatrix;

fn main() -> asiplab::Result<()> {
    let report = coboundary_probe(&catalog::doubling_coboundary(16), 1 << 16, 8, 3, 1e-8)?;
    println!(
        "sup |S_n| = {:.6} <= {:.1}, Sigma^2 = {:.2e}, pass = {}",
        report.statistics["sup_abs_partial_sum"], report.statistics["telescoping_bound"], report.statistics["sigma2_norm"], report.pass
    );

    // a rank-one limit splits R^2 into the gaussian part E and its kernel F
    let sigma2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
    let split = degenerate_split(&sigma2, 1e-12)?;
    println!("rank {}, E = {:?}, F = {:?}", split.rank, split.e_basis.as_slice(), split.f_basis.as_slice());
    Ok(())
}
