//! Triadic interval/gap schedule of a dyadic level.

use asiplab::scheduler::{decompose_level, gap_mass, level_layout, optimal_beta, write_schedule_csv, Exponent, Rational, SchedulerParams};

fn main() -> asiplab::Result<()> {
    let params = SchedulerParams::new(Rational::new(1, 2), Rational::new(1, 5))?;
    let layout = level_layout(10, &params)?;
    println!(
        "n = 10: F = {} pairs, |I| = {}, gaps {}, |J_0| = {}",
        layout.pairs,
        layout.interval_len,
        layout.gap_total,
        1u64 << (layout.e + layout.f)
    );
    let blocks = decompose_level(10, &params)?;
    let covered: u64 = blocks.iter().map(|b| b.length).sum();
    println!("{} blocks tile {covered} = 2^10 indices", blocks.len());

    let mut csv = Vec::new();
    write_schedule_csv(&blocks[..6], &params, &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));

    for k in [1u64 << 12, 1 << 16, 1 << 20] {
        println!("gap mass below {k}: {}", gap_mass(k, &params)?);
    }
    for p in [Exponent::Finite(Rational::from_integer(4)), Exponent::Infinite] {
        let (beta, lambda) = optimal_beta(p)?;
        println!("p = {:?}: beta = {beta}, lambda = {lambda}", p.to_f64());
    }
    Ok(())
}
