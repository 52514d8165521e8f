//! Perturbed operators `L_t`, the decomposition `L_0 = lambda Pi + Q` and the
//! (I1)/(I2) sweep.

use asiplab::models::catalog;
use asiplab::spectral::{check_conditions_i, coding_char_fn, compute_u1, spectral_decompose, OperatorFamily};

fn main() -> asiplab::Result<()> {
    for model in [catalog::two_state(), catalog::doubling_cos(16)] {
        let family = OperatorFamily::new(&model)?;
        let l0 = family.unperturbed();
        let spec = spectral_decompose(&l0)?;
        println!(
            "{}: basis {} lambda = {:.12} kappa = {:.6} C_Q = {:.3} nilpotent at {:?}, residual {:.2e}",
            model.kind_name(),
            family.dim(),
            spec.lambda,
            spec.kappa,
            spec.c_q,
            spec.nilpotency_index,
            spec.invariant_residual(&l0),
        );
        let u1 = compute_u1(&spec, &family)?;
        println!("  |u_1| = {:.6}", u1.norm());

        let grid: Vec<Vec<f64>> = (-4..=4).map(|i| vec![0.1 * i as f64]).collect();
        let report = check_conditions_i(&family, &grid, 64);
        for r in report.records.iter().step_by(2) {
            println!("  t = {:+.2}  |lambda(t)| = {:.8}", r.t[0], (r.lambda_re.powi(2) + r.lambda_im.powi(2)).sqrt());
        }
        println!("  sup |L_t^n| = {:.6}, pass = {}", report.sup_norm, report.pass);

        // E exp(i t (A_0 + A_1 + A_2)) through the coding identity
        let phi = coding_char_fn(&family, &[vec![0.3], vec![0.3], vec![0.3]])?;
        println!("  E e^(0.3 i S_3) = {phi:.8}");
    }
    Ok(())
}
