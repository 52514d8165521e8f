//! Kolmogorov-Smirnov and energy-distance checks of `(S_n - n a)/sqrt(n)`.

use asiplab::covariance::{spectral_sigma2, TailPolicy};
use asiplab::models::catalog;
use asiplab::validator::{clt_test, CltConfig};

fn main() -> asiplab::Result<()> {
    let cfg = CltConfig::default();
    for model in [catalog::iid_standard(2), catalog::doubling_cos(64), catalog::two_state()] {
        let series = spectral_sigma2(&model, TailPolicy::default())?;
        let report = clt_test(&model, 1 << 10, 2000, &series.sigma2, &series.a, 7, &cfg)?;
        println!("{}", report.to_json_line()?);
    }
    Ok(())
}
