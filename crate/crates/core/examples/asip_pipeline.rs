//! The block coupling pipeline end to end, with per-level stage errors.

use asiplab::models::catalog;
use asiplab::scheduler::{Exponent, Rational, SchedulerParams};
use asiplab::validator::{asip_pipeline_demo, PipelineConfig};

fn main() -> asiplab::Result<()> {
    let params = SchedulerParams::optimal(Exponent::Infinite, Rational::new(1, 20))?;
    let cfg = PipelineConfig { replicas: 200, ..PipelineConfig::default() };
    for model in [catalog::two_state(), catalog::iid_standard(1), catalog::doubling_cos(16)] {
        let (report, outcome) = asip_pipeline_demo(&model, &params, 7, &cfg)?;
        println!(
            "{}: exponent {:.4} (r^2 {:.3}) vs lambda {:.3}, pass = {}",
            model.kind_name(),
            outcome.exponent,
            outcome.r_squared,
            outcome.lambda,
            report.pass
        );
        println!("  level blocks  |I|   TV(iii)  gauss(iv)  vm(v)   |X-Z|   bin");
        for l in &outcome.levels {
            println!(
                "  {:>5} {:>6} {:>5} {:>8.4} {:>10.4} {:>6.3} {:>7.4} {:>6.3}",
                l.level,
                l.blocks,
                l.interval_len,
                l.independence_tv,
                l.gaussianization_error,
                l.variance_matching_rms,
                l.stage_discrepancy,
                l.bin_width
            );
        }
        for note in &report.notes {
            println!("  note: {note}");
        }
    }
    Ok(())
}
