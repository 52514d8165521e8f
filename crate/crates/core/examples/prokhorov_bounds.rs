//! Exact Prokhorov distances on small supports and the smoothed upper bound.

use asiplab::coupling::{build_smoothing_v, prokhorov_exact_small, smoothed_discrete_bound, DiscreteDistribution, DEFAULT_RESOLUTION};

fn main() -> asiplab::Result<()> {
    let f = DiscreteDistribution::on_line(&[0.0, 1.0, 5.0], &[0.2, 0.3, 0.5])?;
    let g = DiscreteDistribution::on_line(&[0.1, 1.0, 5.4], &[0.25, 0.25, 0.5])?;
    println!("exact pi(F, G) = {:.6}", prokhorov_exact_small(&f, &g)?);

    for eps0 in [2.0, 20.0, 200.0] {
        let v = build_smoothing_v(eps0, DEFAULT_RESOLUTION)?;
        let m = v.moments_v();
        println!(
            "eps0 = {eps0:>5}: E V^2 = {:.4e}, eta_V = {:.4}, leakage {:.1e}, bound {:.4}",
            m[2],
            v.eta(),
            v.leakage(),
            smoothed_discrete_bound(&f, &g, &v, 257)?
        );
    }
    // a small mass transfer: the smoothing term dominates until eta_V is small
    let close = DiscreteDistribution::on_line(&[0.0, 1.0, 5.0], &[0.21, 0.29, 0.5])?;
    let v = build_smoothing_v(200.0, DEFAULT_RESOLUTION)?;
    println!(
        "close pair: exact {:.4}, smoothed bound {:.4}",
        prokhorov_exact_small(&f, &close)?,
        smoothed_discrete_bound(&f, &close, &v, 1025)?
    );
    Ok(())
}
