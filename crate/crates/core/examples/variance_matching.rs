//! Joint gaussian law aligning `N(0, cov_S)` with `N(0, cov_Z)`.

use asiplab::coupling::{default_delta, variance_matching_coupling};
use asiplab::rng::{stream_rng, Purpose};
use nalgebra::DMatrix;

fn main() -> asiplab::Result<()> {
    let cs = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
    let cz = DMatrix::from_row_slice(2, 2, &[2.1, 0.3, 0.3, 1.2]);
    let delta = default_delta(&cs, &cz);
    let vm = variance_matching_coupling(&cs, &cz, delta)?;
    println!("delta = {delta:.3e}, E|S - Z|^2 = {:.6}", vm.mean_square_gap());

    let mut rng = stream_rng(5, Purpose::Coupling, 0);
    let n = 100_000;
    let mc: f64 = (0..n)
        .map(|_| {
            let (s, z) = vm.sample(&mut rng);
            (s - z).norm_squared()
        })
        .sum::<f64>()
        / n as f64;
    println!("Monte Carlo      {mc:.6}");

    // coupling a given S draws Z from the conditional law
    let s = nalgebra::DVector::from_vec(vec![1.0, -0.5]);
    println!("Z | S = (1, -0.5): {:?}", vm.couple(&s, &mut rng).as_slice());
    Ok(())
}
