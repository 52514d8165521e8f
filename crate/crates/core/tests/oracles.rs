use asiplab::covariance::{spectral_sigma2, TailPolicy};
use asiplab::models::{catalog, partial_sums, ProcessModel, SamplePath};
use asiplab::rng::path_rng;
use asiplab::spectral::{coding_char_fn, OperatorFamily};
use asiplab::validator::{clt_test, CltConfig};
use num::complex::Complex64;

/// Sample mean of `exp(i sum_l t_l A_l)` against the operator product.
fn char_fn_matches(model: &ProcessModel, t: &[Vec<f64>], replicas: u64) {
    let family = OperatorFamily::new(model).unwrap();
    let coded = coding_char_fn(&family, t).unwrap();
    let n = t.len();
    let d = model.dim();
    let mut sum = Complex64::new(0.0, 0.0);
    for r in 0..replicas {
        let values = model.sample_values(n, &mut path_rng(99, r)).unwrap();
        let phase: f64 = (0..n).map(|l| (0..d).map(|i| t[l][i] * values[l * d + i]).sum::<f64>()).sum();
        sum += Complex64::from_polar(1.0, phase);
    }
    let mean = sum / replicas as f64;
    // each coordinate has variance <= 1/2 per draw
    let tol = 4.0 * (0.5 / replicas as f64).sqrt();
    assert!((mean.re - coded.re).abs() < tol && (mean.im - coded.im).abs() < tol, "{mean} vs {coded}");
}

#[test]
fn coded_characteristic_functions_match_simulation() {
    let t: Vec<Vec<f64>> = [0.4, -0.3, 0.2, 0.45, 0.1, -0.25].iter().map(|&x| vec![x]).collect();
    char_fn_matches(&catalog::two_state(), &t, 40_000);
    char_fn_matches(&catalog::doubling_cos(16), &t, 40_000);
    let t2: Vec<Vec<f64>> = vec![vec![0.3, -0.2], vec![0.1, 0.4], vec![-0.35, 0.0]];
    char_fn_matches(&catalog::iid_standard(2), &t2, 40_000);
}

#[test]
fn chain_occupation_and_transition_frequencies() {
    let ProcessModel::Markov(chain) = catalog::two_state() else { unreachable!() };
    let n = 100_000;
    let states = chain.states_path(n, &mut path_rng(3, 0));
    let freq1 = states.iter().filter(|&&s| s == 1).count() as f64 / n as f64;
    // stationary law of [[0.7, 0.3], [0.2, 0.8]] is (0.4, 0.6); with eigenvalue
    // rho = 0.5 the variance inflates by (1 + rho) / (1 - rho) = 3
    let expected = 0.3 / (0.3 + 0.2);
    assert!((freq1 - expected).abs() < 3.0 * (0.24f64 / n as f64).sqrt() * 3f64.sqrt());

    let runs = 20;
    let mut good = 0;
    for seed in 0..runs {
        let states = chain.states_path(n, &mut path_rng(seed, 0));
        let mut counts = [[0usize; 2]; 2];
        for w in states.windows(2) {
            counts[w[0]][w[1]] += 1;
        }
        let ok = (0..2).all(|i| {
            let visits = (counts[i][0] + counts[i][1]) as f64;
            (0..2).all(|j| {
                let p = chain.transition()[(i, j)];
                (counts[i][j] as f64 / visits - p).abs() <= 4.0 * (p * (1.0 - p) / visits).sqrt()
            })
        });
        good += ok as usize;
    }
    assert!(good * 100 >= 95 * runs as usize, "{good}/{runs}");
}

#[test]
fn partial_sums_small_cases() {
    let s = partial_sums(&SamplePath::from_values(1, vec![1.0, -1.0, 1.0]).unwrap());
    assert_eq!((0..=3).map(|k| s.get(k)[0]).collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 1.0]);
    let s = partial_sums(&SamplePath::from_values(2, vec![0.5, -2.0]).unwrap());
    assert_eq!((s.get(0), s.get(1)), (&[0.0, 0.0][..], &[0.5, -2.0][..]));
    assert!(catalog::two_state().simulate(0, 1).is_err());
}

#[test]
fn clt_test_is_calibrated_under_the_null() {
    // exact gaussian sums: rejections at alpha = 0.01 should be rare
    let model = catalog::iid_standard(1);
    let sigma2 = spectral_sigma2(&model, TailPolicy::default()).unwrap().sigma2;
    let passed = (0..100).filter(|&seed| clt_test(&model, 4, 500, &sigma2, &[0.0], seed, &CltConfig::default()).unwrap().pass).count();
    assert!(passed >= 95, "{passed}/100");
}
