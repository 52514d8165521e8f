//! `Sigma^2` from the autocovariance series, against Monte Carlo.

use asiplab::covariance::{check_cov_growth, empirical_sigma2, spectral_sigma2, TailPolicy};
use asiplab::models::catalog;

fn main() -> asiplab::Result<()> {
    for (model, n, replicas) in [(catalog::doubling_cos(64), 1 << 14, 200), (catalog::two_state(), 1 << 12, 400)] {
        let series = spectral_sigma2(&model, TailPolicy::default())?;
        let mc = empirical_sigma2(&model, n, replicas, 11)?;
        println!(
            "{}: Sigma^2 = {:.12} (lag {}, tail <= {:.1e}), Monte Carlo {:.4} +- {:.4}",
            model.kind_name(),
            series.sigma2[(0, 0)],
            series.truncation_lag,
            series.tail_bound,
            mc.estimate[(0, 0)],
            mc.std_error[(0, 0)],
        );
        let growth = check_cov_growth(&model, &series.sigma2, &[0, 5, 50], &[16, 64, 256, 1024])?;
        println!("  sup |cov(S_(m..m+n)) - n Sigma^2| = {:.6}, bounded = {}", growth.sup, growth.bounded);
    }
    // two-state closed form pi_1 pi_2 (2 - a - b) / (a + b)
    let (a, b): (f64, f64) = (0.3, 0.2);
    println!("closed form {:.12}", a * b / (a + b).powi(2) * (2.0 - a - b) / (a + b));
    Ok(())
}
