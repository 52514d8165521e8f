use asiplab::coupling::{maximal_coupling, total_variation, variance_matching_coupling};
use asiplab::linalg::min_eigenvalue;
use asiplab::models::{catalog, partial_sums, ProcessModel};
use asiplab::rng::path_rng;
use asiplab::scheduler::{decompose_level, level_layout, BlockKind, Rational, SchedulerParams};
use asiplab::validator::kolmogorov_pvalue;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn law(weights: &[u32]) -> Vec<f64> {
    let total: u32 = weights.iter().sum::<u32>().max(1);
    let mut v: Vec<f64> = weights.iter().map(|&w| w as f64 / total as f64).collect();
    if weights.iter().all(|&w| w == 0) {
        v[0] = 1.0;
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differencing_recovers_the_path(seed in any::<u64>(), n in 1usize..400, which in 0usize..3) {
        let model = [catalog::two_state(), catalog::doubling_cos(8), catalog::iid_standard(2)][which].clone();
        let path = model.simulate(n, seed).unwrap();
        let s = partial_sums(&path);
        prop_assert!(s.get(0).iter().all(|&x| x == 0.0));
        let d = path.dim;
        for k in 0..n {
            for i in 0..d {
                let (lo, hi, a) = (s.get(k)[i], s.get(k + 1)[i], path.values[k * d + i]);
                prop_assert_eq!(hi, lo + a);
                prop_assert!((hi - lo - a).abs() <= f64::EPSILON * hi.abs().max(lo.abs()));
            }
        }
        let fold = path.values.chunks(d).fold(vec![0.0; d], |mut acc, row| {
            acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
            acc
        });
        prop_assert_eq!(fold, s.get(n).to_vec());
    }

    #[test]
    fn doubling_orbit_is_a_shift(seed in any::<u64>(), n in 2usize..500) {
        let ProcessModel::Doubling(map) = catalog::doubling_cos(4) else { unreachable!() };
        let orbit = map.orbit(n, &mut path_rng(seed, 0));
        for k in 0..n - 1 {
            prop_assert_eq!(orbit[k] << 1, orbit[k + 1] & !1);
        }
    }

    #[test]
    fn maximal_coupling_has_the_marginals(w in prop::collection::vec((0u32..50, 0u32..50), 1..15)) {
        let f = law(&w.iter().map(|p| p.0).collect::<Vec<_>>());
        let g = law(&w.iter().map(|p| p.1).collect::<Vec<_>>());
        let plan = maximal_coupling(&f, &g).unwrap();
        let half_l1: f64 = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        prop_assert!((plan.mismatch() - half_l1).abs() < 1e-12);
        prop_assert!((total_variation(&f, &g).unwrap() - total_variation(&g, &f).unwrap()).abs() < 1e-15);
        for (a, b) in plan.row_sums().iter().zip(&f) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in plan.column_sums().iter().zip(&g) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!(plan.joint.iter().flatten().all(|&m| m >= 0.0));
    }

    #[test]
    fn valid_levels_tile(bn in 1i64..8, bd in 2i64..9, en in 1i64..5, ed in 5i64..40, n in 4u32..20) {
        prop_assume!(bn < bd);
        let beta = Rational::new(bn, bd);
        let eps = Rational::new(en, ed);
        prop_assume!(eps < Rational::from_integer(1) - beta);
        let params = SchedulerParams::new(beta, eps).unwrap();
        let layout = level_layout(n, &params).unwrap();
        if !layout.valid {
            prop_assert!(decompose_level(n, &params).is_err());
            return Ok(());
        }
        let blocks = decompose_level(n, &params).unwrap();
        prop_assert_eq!(blocks.iter().map(|b| b.length).sum::<u64>(), 1u64 << n);
        let gaps: u64 = blocks.iter().filter(|b| b.kind == BlockKind::Gap).map(|b| b.length).sum();
        prop_assert_eq!(gaps, layout.gap_total);
        // |J_j| = 2^e 2^r, r the lowest set bit of j
        for b in blocks.iter().filter(|b| b.kind == BlockKind::Gap && b.index > 0) {
            prop_assert_eq!(b.length, 1u64 << (layout.e + b.index.trailing_zeros()));
        }
    }

    #[test]
    fn kolmogorov_tail_is_monotone(a in 0.0f64..0.2, b in 0.0f64..0.2, n in 10usize..100_000) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(kolmogorov_pvalue(lo, n) + 1e-12 >= kolmogorov_pvalue(hi, n));
    }

    #[test]
    fn variance_matching_has_the_marginals(x in prop::collection::vec(-1.0f64..1.0, 8)) {
        let b = DMatrix::from_row_slice(2, 2, &x[..4]);
        let c = DMatrix::from_row_slice(2, 2, &x[4..]);
        let cs = &b * b.transpose() + DMatrix::identity(2, 2) * 0.05;
        let cz = &c * c.transpose() + DMatrix::identity(2, 2) * 0.05;
        let cs = (&cs + cs.transpose()) * 0.5;
        let cz = (&cz + cz.transpose()) * 0.5;
        let vm = variance_matching_coupling(&cs, &cz, asiplab::coupling::default_delta(&cs, &cz)).unwrap();
        let joint = vm.joint_covariance();
        prop_assert!(min_eigenvalue(&joint) > -1e-9);
        prop_assert!((joint.view((0, 0), (2, 2)) - &cs).amax() < 1e-9);
        prop_assert!((joint.view((2, 2), (2, 2)) - &cz).amax() < 1e-9);
        // E|S - Z|^2 = tr cov_S + tr cov_Z - 2 tr cov(S, Z)
        let direct = cs.trace() + cz.trace() - 2.0 * joint.view((0, 2), (2, 2)).trace();
        prop_assert!((vm.mean_square_gap() - direct).abs() < 1e-9);
    }
}
