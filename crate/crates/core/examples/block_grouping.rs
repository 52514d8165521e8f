//! Rosenthal terms and the greedy grouping under the `100 M^2` precondition.

use asiplab::coupling::{rosenthal_terms, zaitsev_block_grouping};
use nalgebra::DMatrix;

fn main() -> asiplab::Result<()> {
    let second = vec![1.0; 64];
    let fourth = vec![3.0; 64];
    let r = rosenthal_terms(&second, &fourth, 4.0)?;
    println!("Rosenthal: l2 {:.4}, l4 {:.4}, bound {:.4} (C(p) = {})", r.l2, r.lp, r.bound(), r.constant);

    let covs: Vec<DMatrix<f64>> = (0..500).map(|i| DMatrix::from_row_slice(2, 2, &[1.0 + 0.1 * (i % 3) as f64, 0.2, 0.2, 0.8])).collect();
    let g = zaitsev_block_grouping(&covs, 1.0, 3.0)?;
    println!("{} blocks at {:?}", g.boundaries.len() - 1, &g.boundaries[..4]);
    println!("C_eff = {:.4}, upper bound ok = {}", g.c_eff, g.upper_ok);
    Ok(())
}
