mod common;

use common::test_rng;
use fwdim::oracle::brute_force_im;
use fwdim::portfolio::{value_netting_set, Instrument, NettingSet};
use fwdim::regression::{build_regression_data, im_from_second_moment, moment_diagnostics, QuantileScaler, Verdict};
use fwdim::sde::{build_time_grid, simulate_paths, ModelSpec, TimeGrid};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal, StudentT};

proptest! {
    #[test]
    fn margin_is_monotone_in_second_moment(a in proptest::collection::vec(0.0f64..1e6, 1..50), bump in 0.0f64..1e3) {
        let s = QuantileScaler::Normal { p: 0.99 };
        let b: Vec<f64> = a.iter().map(|v| v + bump).collect();
        let ia = im_from_second_moment(&a, &s).unwrap();
        let ib = im_from_second_moment(&b, &s).unwrap();
        prop_assert!(ia.iter().zip(&ib).all(|(x, y)| y >= x));
    }

    #[test]
    fn margin_is_positively_homogeneous(m in proptest::collection::vec(0.0f64..1e4, 1..50), k in 0u32..6) {
        // c = 2^k keeps the scaling exact in floating point
        let c = 2f64.powi(k as i32);
        let s = QuantileScaler::StudentT { p: 0.99, dof: 4.0 };
        let scaled: Vec<f64> = m.iter().map(|v| v * c * c).collect();
        let base = im_from_second_moment(&m, &s).unwrap();
        let out = im_from_second_moment(&scaled, &s).unwrap();
        for (b, o) in base.iter().zip(&out) {
            prop_assert_eq!(*o, c * b);
        }
    }
}

#[test]
fn target_mean_is_the_empirical_second_moment() {
    let m = ModelSpec::Gbm { s0: 100.0, drift: 0.0, vol: 0.25 };
    let g = build_time_grid(1.0, 0.25, 10.0 / 365.0).unwrap();
    let cube = simulate_paths(&m, &g, 2_000, 6).unwrap();
    let ns = NettingSet::new(vec![Instrument::EuropeanCall { strike: 100.0, maturity: 1.0, pricing_vol: 0.25, notional: 1.0 }])
        .unwrap();
    let v = value_netting_set(&ns, &cube, &m, 0.01).unwrap();
    for k in 0..g.n_obs() {
        let d = build_regression_data(&v, &g, k).unwrap();
        let direct: f64 = (0..cube.n_paths())
            .map(|p| (v.get(p, TimeGrid::mpor_column(k)) - v.get(p, TimeGrid::obs_column(k))).powi(2))
            .sum::<f64>()
            / cube.n_paths() as f64;
        let mean = d.y.iter().sum::<f64>() / d.len() as f64;
        assert!((mean - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}

#[test]
fn sample_second_moment_recovers_oracle_margin_at_inception() {
    // At t = 0 every path shares the same state, so the mean of y is a plain
    // Monte Carlo estimate of E[Delta^2]; the scaled root must match the
    // nested estimate on a near-Gaussian PnL.
    let m = ModelSpec::Gbm { s0: 100.0, drift: 0.0, vol: 0.02 };
    let g = build_time_grid(1.0, 0.5, 10.0 / 365.0).unwrap();
    let ns = NettingSet::new(vec![Instrument::Forward { strike: 100.0, maturity: 1.0, notional: 1.0 }]).unwrap();
    let cube = simulate_paths(&m, &g, 50_000, 1).unwrap();
    let v = value_netting_set(&ns, &cube, &m, 0.0).unwrap();
    let d = build_regression_data(&v, &g, 0).unwrap();
    let m2 = d.y.iter().sum::<f64>() / d.len() as f64;
    let approx = im_from_second_moment(&[m2], &QuantileScaler::Normal { p: 0.99 }).unwrap()[0];
    let oracle = brute_force_im(&m, &ns, &g, 1, 50_000, 0.99, 1, 0.0).unwrap();
    assert!((approx / oracle.profile()[0] - 1.0).abs() < 0.02);
}

#[test]
fn gaussian_moments_pass() {
    let mut rng = test_rng(10);
    let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rep = moment_diagnostics(&xs, 200, 1).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass);
    let m4 = rep.moment(4).unwrap().estimate;
    assert!((m4 / 3.0 - 1.0).abs() < 0.1, "E[V^4] = {m4}");
    assert!(rep.moment(1).unwrap().estimate.abs() < 0.02);
    assert!((rep.moment(2).unwrap().estimate - 1.0).abs() < 0.02);
}

#[test]
fn student_t3_is_flagged_across_seeds() {
    let t3 = StudentT::new(3.0).unwrap();
    for seed in 0..5 {
        let mut rng = test_rng(100 + seed);
        let xs: Vec<f64> = (0..100_000).map(|_| t3.sample(&mut rng)).collect();
        let rep = moment_diagnostics(&xs, 200, seed).unwrap();
        assert_eq!(rep.verdict, Verdict::Flag, "seed {seed}: {:?}", rep.moment(4));
    }
}

#[test]
fn report_serialises_to_json() {
    let xs: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
    let rep = moment_diagnostics(&xs, 100, 0).unwrap();
    let json = serde_json::to_value(&rep).unwrap();
    assert_eq!(json["verdict"], "pass");
    assert_eq!(json["moments"].as_array().unwrap().len(), 3);
}
