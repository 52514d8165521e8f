//! One line per acceptance criterion. Exits nonzero when a criterion fails
//! that is not listed in `KNOWN_FAILURES`.

use std::time::{Duration, Instant};

use asiplab::coupling::{
    build_smoothing_v, default_delta, maximal_coupling, prokhorov_exact_small, smoothed_discrete_bound, variance_matching_coupling,
    DiscreteDistribution,
};
use asiplab::covariance::{empirical_sigma2, estimate_centering, spectral_sigma2, TailPolicy};
use asiplab::hypothesis::{h_decay_fit, h_discrepancy, random_configs, BlockConfig};
use asiplab::models::{catalog, FiniteMarkovChain, ProcessModel};
use asiplab::rng::{stream_rng, Purpose};
use asiplab::scheduler::{decompose_level, level_layout, optimal_beta, BlockKind, Exponent, Rational, SchedulerParams};
use asiplab::spectral::OperatorFamily;
use asiplab::validator::{
    asip_pipeline_demo, block_maxima_test, clt_test, coboundary_probe, gap_sum_test, CltConfig, NegligibilityConfig, PipelineConfig,
};
use nalgebra::DMatrix;
use num::{BigInt, BigRational};
use rand::Rng;

/// Failing by construction at desk-scale levels; see the project notes.
const KNOWN_FAILURES: &[u32] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn() -> asiplab::Result<Outcome>;

fn r(a: i64, b: i64) -> Rational {
    Rational::new(a, b)
}

fn scheduler_exactness() -> asiplab::Result<Outcome> {
    let mut levels = 0;
    for (b, e) in [(r(1, 2), r(1, 5)), (r(2, 3), r(1, 10)), (r(3, 4), r(1, 20))] {
        let params = SchedulerParams::new(b, e)?;
        for n in 8..=22u32 {
            if !level_layout(n, &params)?.valid {
                continue;
            }
            let blocks = decompose_level(n, &params)?;
            let total: u64 = blocks.iter().map(|b| b.length).sum();
            let contiguous = blocks.windows(2).all(|w| w[0].end() == w[1].start) && blocks[0].start == 1 << n;
            if total != 1 << n || !contiguous {
                return Ok(outcome(false, format!("level {n} at beta {b}, eps {e} covers {total}")));
            }
            levels += 1;
        }
    }
    let params = SchedulerParams::new(r(1, 2), r(1, 5))?;
    let blocks = decompose_level(10, &params)?;
    let j0 = blocks.iter().find(|b| b.kind == BlockKind::Gap && b.index == 0).map(|b| b.length);
    let lens: Vec<u64> = blocks.iter().filter(|b| b.kind == BlockKind::Interval).map(|b| b.length).collect();
    let gaps: u64 = blocks.iter().filter(|b| b.kind == BlockKind::Gap).map(|b| b.length).sum();
    let ok = j0 == Some(128) && lens.iter().all(|&l| l == 18) && gaps == 448;
    Ok(outcome(ok, format!("{levels} valid levels tile exactly; n = 10: |J_0| = {j0:?}, |I| = {}, gaps {gaps}", lens[0])))
}

fn exponent_helper() -> asiplab::Result<Outcome> {
    let p4 = optimal_beta(Exponent::Finite(Rational::from_integer(4)))?;
    let mut ok = p4 == (r(2, 3), r(1, 3));
    for (a, b) in [(3, 1), (5, 2), (7, 3), (100, 1)] {
        let p = r(a, b);
        let one = Rational::from_integer(1);
        let (beta, lambda) = optimal_beta(Exponent::Finite(p))?;
        ok &= beta == p / (Rational::from_integer(2) * (p - one)) && lambda == p / (Rational::from_integer(4) * (p - one));
    }
    let (_, big) = optimal_beta(Exponent::Finite(Rational::from_integer(1_000_000)))?;
    let in_window = big > r(1, 4) && big < r(2_500_006, 10_000_000);
    Ok(outcome(ok && in_window, format!("p = 4 -> ({}, {}); lambda(10^6) = {big}", p4.0, p4.1)))
}

fn doubling_variance() -> asiplab::Result<Outcome> {
    let model = catalog::doubling_cos(64);
    let series = spectral_sigma2(&model, TailPolicy::default())?;
    let spectral = series.sigma2[(0, 0)];
    let mc = empirical_sigma2(&model, 1 << 14, 200, 2024)?;
    let (est, se) = (mc.estimate[(0, 0)], mc.std_error[(0, 0)]);
    // int_0^1 cos^2(2 pi x) dx, no correlations between distinct lags
    let exact = 0.5;
    let ok = (spectral - exact).abs() <= 1e-8 && (est - exact).abs() <= 4.0 * se;
    Ok(outcome(ok, format!("spectral {spectral:.12}, Monte Carlo {est:.4} +- {se:.4} (|z| = {:.2})", (est - exact).abs() / se)))
}

fn two_state_chain() -> asiplab::Result<Outcome> {
    let (a, b) = (0.3f64, 0.2f64);
    let (p1, p2) = (b / (a + b), a / (a + b));
    let closed = p1 * p2 * (2.0 - a - b) / (a + b);
    let model = catalog::two_state();
    let series = spectral_sigma2(&model, TailPolicy { tol: 1e-12, ..TailPolicy::default() })?;
    let sigma2 = series.sigma2[(0, 0)];

    let rate = -(1.0 - a - b).ln();
    let family = OperatorFamily::new(&model)?;
    let template = BlockConfig::new(vec![0, 3, 7, 9, 12], 2, 1, vec![vec![0.4], vec![-0.2], vec![0.3], vec![0.1]])?;
    let h = h_decay_fit(&family, &template, &(1..=20).collect::<Vec<_>>())?;
    let c = match h.fit {
        asiplab::hypothesis::HFit::Fitted { c, .. } => c,
        asiplab::hypothesis::HFit::ExactFactorization => f64::INFINITY,
    };
    let started = ProcessModel::Markov(FiniteMarkovChain::two_state(a, b)?.with_initial(vec![1.0, 0.0])?);
    let drift = estimate_centering(&started, 40)?.delta;
    let ok = (sigma2 - closed).abs() <= 1e-10 && (c / rate - 1.0).abs() <= 0.1 && (drift / rate - 1.0).abs() <= 0.1;
    Ok(outcome(ok, format!("sigma^2 {sigma2:.12} vs {closed:.12}; (H) rate {c:.6}, drift rate {drift:.6} vs {rate:.6}")))
}

fn hypothesis_exactness() -> asiplab::Result<Outcome> {
    let iid = OperatorFamily::new(&catalog::iid_standard(2))?;
    let mut worst_iid = 0.0f64;
    for cfg in random_configs(17, 2, iid.eps0(), 50, 1) {
        worst_iid = worst_iid.max(h_discrepancy(&iid, &cfg)?);
    }
    let doubling = OperatorFamily::new(&catalog::doubling_cos(16))?;
    let mut worst_dbl = 0.0f64;
    for cfg in random_configs(18, 1, doubling.eps0(), 20, 6) {
        for k in 6..=24 {
            worst_dbl = worst_dbl.max(h_discrepancy(&doubling, &cfg.with_gap(k))?);
        }
    }
    Ok(outcome(worst_iid <= 1e-13 && worst_dbl <= 1e-12, format!("iid worst {worst_iid:.2e}; doubling k > 5 worst {worst_dbl:.2e}")))
}

fn random_rational_law<R: Rng>(rng: &mut R, n: usize) -> Vec<BigRational> {
    let w: Vec<i64> = (0..n).map(|_| rng.random_range(0..20)).collect();
    let total: i64 = w.iter().sum::<i64>().max(1);
    let mut masses: Vec<BigRational> = w.iter().map(|&x| BigRational::new(BigInt::from(x), BigInt::from(total))).collect();
    if w.iter().all(|&x| x == 0) {
        masses[0] = BigRational::from_integer(BigInt::from(1));
    }
    masses
}

fn half_l1(f: &[BigRational], g: &[BigRational]) -> BigRational {
    let total = f.iter().zip(g).fold(BigRational::from_integer(BigInt::from(0)), |acc, (a, b)| acc + if a > b { a - b } else { b - a });
    total / BigRational::from_integer(BigInt::from(2))
}

fn random_line_law<R: Rng>(rng: &mut R, n: usize) -> asiplab::Result<DiscreteDistribution> {
    let points: Vec<f64> = rand::seq::index::sample(rng, 16, n).iter().map(|i| i as f64 * 0.25).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(1..10) as f64).collect();
    let total: f64 = w.iter().sum();
    DiscreteDistribution::on_line(&points, &w.iter().map(|x| x / total).collect::<Vec<_>>())
}

fn coupling_lab() -> asiplab::Result<Outcome> {
    let mut rng = stream_rng(6, Purpose::Misc, 0);
    let mut exact = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..12);
        let f = random_rational_law(&mut rng, n);
        let g = random_rational_law(&mut rng, n);
        let plan = maximal_coupling(&f, &g)?;
        if plan.mismatch() == half_l1(&f, &g) && plan.row_sums() == f && plan.column_sums() == g {
            exact += 1;
        }
    }
    let v = build_smoothing_v(50.0, 2.0)?;
    let mut dominated = 0;
    let mut cases = 0;
    while cases < 20 {
        let (nf, ng) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let f = random_line_law(&mut rng, nf)?;
        let g = random_line_law(&mut rng, ng)?;
        if f.aligned(&g)?.0.len() > 12 {
            continue;
        }
        cases += 1;
        if smoothed_discrete_bound(&f, &g, &v, 513)? >= prokhorov_exact_small(&f, &g)? {
            dominated += 1;
        }
    }
    let mut worst_rel = 0.0f64;
    for pair in 0..10u64 {
        let d = 1 + (pair as usize % 3);
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let cs = &b * b.transpose() + DMatrix::identity(d, d) * 0.1;
        let cz = &c * c.transpose() + DMatrix::identity(d, d) * 0.1;
        let cs = (&cs + cs.transpose()) * 0.5;
        let cz = (&cz + cz.transpose()) * 0.5;
        let vm = variance_matching_coupling(&cs, &cz, default_delta(&cs, &cz))?;
        let mut mc_rng = stream_rng(6, Purpose::Coupling, pair);
        let n = 100_000;
        let mc = (0..n)
            .map(|_| {
                let (s, z) = vm.sample(&mut mc_rng);
                (s - z).norm_squared()
            })
            .sum::<f64>()
            / n as f64;
        worst_rel = worst_rel.max((mc / vm.mean_square_gap() - 1.0).abs());
    }
    let ok = exact == 100 && dominated == 20 && worst_rel <= 0.03;
    Ok(outcome(ok, format!("{exact}/100 exact couplings; bound >= exact in {dominated}/20; worst MC deviation {:.2}%", 100.0 * worst_rel)))
}

fn clt_suite() -> asiplab::Result<Outcome> {
    let models = [catalog::iid_standard(1), catalog::doubling_cos(64), catalog::two_state()];
    let cfg = CltConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for model in &models {
        let series = spectral_sigma2(model, TailPolicy::default())?;
        let mut passed = 0;
        for seed in 0..20u64 {
            if clt_test(model, 1 << 12, 10_000, &series.sigma2, &series.a, 1000 + seed, &cfg)?.pass {
                passed += 1;
            }
        }
        ok &= passed >= 19;
        parts.push(format!("{} {passed}/20", model.kind_name()));
    }
    Ok(outcome(ok, parts.join(", ")))
}

fn coboundary() -> asiplab::Result<Outcome> {
    let model = catalog::doubling_coboundary(16);
    let sigma2 = spectral_sigma2(&model, TailPolicy::default())?.sigma2[(0, 0)].abs();
    let report = coboundary_probe(&model, 1 << 16, 32, 8, 1e-8)?;
    let sup = report.statistics["sup_abs_partial_sum"];
    Ok(outcome(sigma2 <= 1e-8 && sup <= 2.0 && report.pass, format!("Sigma^2 = {sigma2:.1e}, sup |S_n| = {sup:.6} over 32 paths")))
}

fn negligibility() -> asiplab::Result<Outcome> {
    let params = SchedulerParams::new(r(2, 3), r(1, 20))?;
    let levels: Vec<u32> = (1..=16).filter(|&n| level_layout(n, &params).map(|l| l.valid).unwrap_or(false)).collect();
    let ks: Vec<u64> = (8..=16).map(|n| 1u64 << n).collect();
    let cfg = NegligibilityConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for model in [catalog::doubling_cos(16), catalog::two_state()] {
        let gaps = gap_sum_test(&model, &params, &ks, 200, 9, &cfg)?;
        let maxima = block_maxima_test(&model, &params, &levels, 200, 9, &cfg)?;
        ok &= gaps.pass && maxima.pass;
        let tail = |c: &[(f64, f64)]| c[c.len() - 3..].iter().map(|p| format!("{:.3}", p.1)).collect::<Vec<_>>().join(" ");
        parts.push(format!("{}: gap top-3 [{}], maxima top-3 [{}]", model.kind_name(), tail(&gaps.curve), tail(&maxima.curve)));
    }
    Ok(outcome(ok, parts.join("; ")))
}

fn pipeline() -> asiplab::Result<Outcome> {
    let params = SchedulerParams::optimal(Exponent::Infinite, r(1, 20))?;
    let cfg = PipelineConfig { replicas: 200, ..PipelineConfig::default() };
    let (_, out) = asip_pipeline_demo(&catalog::two_state(), &params, 10, &cfg)?;
    let stages_reported = out.levels.iter().all(|l| {
        [l.independence_tv, l.gaussianization_error, l.variance_matching_rms, l.stage_discrepancy, l.bin_width]
            .iter()
            .all(|x| x.is_finite())
    }) && !out.levels.is_empty();
    let (control, _) = asip_pipeline_demo(&catalog::iid_standard(1), &params, 10, &cfg)?;
    let ratio = control.statistics["max_stage_discrepancy_over_bin_width"];
    let ok = out.exponent <= 0.35 && stages_reported && ratio <= 1.0;
    Ok(outcome(
        ok,
        format!("chain exponent {:.4} (r^2 {:.3}); gaussian control |X - Z| / bin width {ratio:.2e}", out.exponent, out.r_squared),
    ))
}

fn main() {
    let criteria: [(u32, &str, Check, Duration); 10] = [
        (1, "scheduler exactness", scheduler_exactness, Duration::from_secs(1)),
        (2, "exponent helper", exponent_helper, Duration::from_secs(1)),
        (3, "doubling-map variance", doubling_variance, Duration::from_secs(60)),
        (4, "two-state chain", two_state_chain, Duration::from_secs(10)),
        (5, "(H) exactness", hypothesis_exactness, Duration::from_secs(30)),
        (6, "coupling lab", coupling_lab, Duration::from_secs(60)),
        (7, "CLT suite", clt_suite, Duration::from_secs(300)),
        (8, "coboundary degeneracy", coboundary, Duration::from_secs(30)),
        (9, "negligibility tests", negligibility, Duration::from_secs(300)),
        (10, "pipeline diagnostic", pipeline, Duration::from_secs(300)),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut unexpected = 0;
    for (id, name, check, budget) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let known = KNOWN_FAILURES.contains(&id);
        let label = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} {label:<12} {name}: {detail} [{:.2} s, budget {} s]", elapsed.as_secs_f64(), budget.as_secs());
        if !pass && !known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
