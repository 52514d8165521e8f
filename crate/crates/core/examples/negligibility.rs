//! Moment scaling, gap sums and block maxima.

use asiplab::models::catalog;
use asiplab::scheduler::{level_layout, Rational, SchedulerParams};
use asiplab::validator::{block_maxima_test, gap_sum_test, lp_scaling_test, NegligibilityConfig};

fn main() -> asiplab::Result<()> {
    let cfg = NegligibilityConfig::default();
    let model = catalog::two_state();
    let ns: Vec<usize> = (8..=13).map(|k| 1 << k).collect();
    let lp = lp_scaling_test(&model, 3.0, &ns, 200, 7, &cfg)?;
    println!("E|S_n|^3 / n^1.5: max/min = {:.4}, pass = {}", lp.statistic, lp.pass);

    let params = SchedulerParams::new(Rational::new(2, 3), Rational::new(1, 20))?;
    let levels: Vec<u32> = (8..=16).filter(|&n| level_layout(n, &params).map(|l| l.valid).unwrap_or(false)).collect();
    let ks: Vec<u64> = (8..=16).map(|n| 1 << n).collect();
    let gaps = gap_sum_test(&model, &params, &ks, 200, 7, &cfg)?;
    let maxima = block_maxima_test(&model, &params, &levels, 200, 7, &cfg)?;
    for r in [&gaps, &maxima] {
        println!("{}: pass = {}", r.name, r.pass);
        for (x, y) in &r.curve {
            println!("  {x:>8} {y:.4}");
        }
    }
    Ok(())
}
