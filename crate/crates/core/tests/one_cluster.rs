use std::collections::BTreeMap;

use hbm_core::data::{Grouping, GroupedData};
use hbm_core::dist::sample_normal;
use hbm_core::mcmc::{ChainConfig, RunOptions};
use hbm_core::models::hier::{fit_hier_common, fit_hier_varying_with, HierVarying, HierVaryingOptions};
use hbm_core::models::pooling::{fit_complete_pooling, fit_complete_pooling_with, fit_no_pooling};
use hbm_core::models::NuStrategy;
use hbm_core::synthetic::{generate, GeneratorSpec, NoiseKind, ParamValue};
use hbm_core::RandomStream;
use hbm_testkit::{integrate_to_infinity, ks_two_sample, log_grid, mean, normal_cdf, variance, TabulatedCdf};

fn cfg(seed: u64) -> ChainConfig {
    ChainConfig::new(4, 3000, 1000, 1, seed)
}

fn spec(model: &str, params: &[(&str, ParamValue)], sizes: Vec<usize>, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        model: model.into(),
        params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<BTreeMap<_, _>>(),
        group_sizes: sizes,
        second_sizes: None,
        covariate: None,
        noise: NoiseKind::Normal,
        seed,
    }
}

fn grouped(s: &GeneratorSpec) -> GroupedData {
    generate(s).unwrap().0.grouped(Grouping::Group).unwrap()
}

#[test]
fn no_pooling_recovers_single_group() {
    let mut r = RandomStream::new(1, 0);
    let y: Vec<f64> = (0..200).map(|_| sample_normal(&mut r, 5.0, 9.0).unwrap()).collect();
    let fit = fit_no_pooling(&GroupedData::from_groups(vec![y]), &cfg(2)).unwrap();
    assert!((fit.draws.mean_named("theta[g1]").unwrap() - 5.0).abs() < 0.5);
    assert!((fit.draws.mean_named("sigma2[g1]").unwrap() - 9.0).abs() < 1.5);
}

#[test]
fn no_pooling_group_is_unaffected_by_other_groups() {
    let a = GroupedData::from_groups(vec![vec![1.0, 2.0, 4.0], vec![3.0, 5.0, 5.5, 7.0]]);
    let mut b = a.clone();
    b.y[0] = vec![-10.0, 30.0, 2.0, 8.0, 1.0];
    let fa = fit_no_pooling(&a, &cfg(3)).unwrap();
    let fb = fit_no_pooling(&b, &cfg(3)).unwrap();
    for name in ["theta[g2]", "sigma2[g2]"] {
        let x: Vec<u64> = fa.draws.column_named(name).unwrap().into_iter().map(f64::to_bits).collect();
        let y: Vec<u64> = fb.draws.column_named(name).unwrap().into_iter().map(f64::to_bits).collect();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn complete_pooling_recovers_mean() {
    let d = grouped(&spec(
        "complete-pooling",
        &[("theta", ParamValue::Scalar(10.0)), ("sigma2", ParamValue::Scalar(4.0))],
        vec![100, 100, 100],
        4,
    ));
    let fit = fit_complete_pooling(&d, &cfg(5)).unwrap();
    assert!((fit.draws.mean_named("theta").unwrap() - 10.0).abs() < 0.3);
}

#[test]
fn complete_pooling_inflates_variance_under_group_structure() {
    let d = grouped(&spec(
        "hier-common",
        &[
            ("mu", ParamValue::Scalar(0.0)),
            ("tau2", ParamValue::Scalar(25.0)),
            ("sigma2", ParamValue::Scalar(4.0)),
        ],
        vec![40; 8],
        6,
    ));
    let fit = fit_complete_pooling(&d, &cfg(7)).unwrap();
    assert!(fit.draws.mean_named("sigma2").unwrap() > 4.0);
}

#[test]
fn complete_pooling_matches_conjugate_normal_with_frozen_variance() {
    let y = vec![1.2, 0.4, 2.9, 1.7, 0.8];
    let d = GroupedData::from_groups(vec![y.clone()]);
    let sigma2 = 1.5;
    let config = ChainConfig::new(1, 100_500, 500, 1, 8);
    let run = RunOptions::default().with_init(vec![0.0, sigma2]).freeze(&["sigma2"]);
    let fit = fit_complete_pooling_with(&d, &config, &run).unwrap();
    let theta = fit.draws.column_named("theta").unwrap();
    let ybar = mean(&y);
    let sd = (sigma2 / y.len() as f64).sqrt();
    let ks = hbm_testkit::ks_one_sample(&theta, |t| normal_cdf(t, ybar, sd));
    assert!(ks < 0.01, "{ks}");
}

#[test]
fn hier_common_identical_groups_concentrate() {
    let g = vec![3.0, 4.5, 5.0, 6.5, 4.0, 5.5];
    let d = GroupedData::from_groups(vec![g.clone(); 5]);
    let fit = fit_hier_common(&d, &cfg(9)).unwrap();
    let means: Vec<f64> = (1..=5).map(|k| fit.draws.mean_named(&format!("theta[g{k}]")).unwrap()).collect();
    let spread = means.iter().cloned().fold(f64::MIN, f64::max) - means.iter().cloned().fold(f64::MAX, f64::min);
    let within_sd = variance(&fit.draws.column_named("theta[g1]").unwrap()).sqrt();
    assert!(spread < within_sd, "{spread} vs {within_sd}");
}

#[test]
fn hier_common_recovers_hyperparameters() {
    let mut passed = 0;
    for seed in 0..5 {
        let d = grouped(&spec(
            "hier-common",
            &[
                ("mu", ParamValue::Scalar(50.0)),
                ("tau2", ParamValue::Scalar(100.0)),
                ("sigma2", ParamValue::Scalar(25.0)),
                ("theta", ParamValue::Vector(vec![38.0, 45.0, 50.0, 52.0, 57.0, 61.0])),
            ],
            vec![40; 6],
            100 + seed,
        ));
        let fit = fit_hier_common(&d, &cfg(seed)).unwrap();
        let mu = fit.draws.mean_named("mu").unwrap();
        let tau = fit.draws.column_named("tau2").unwrap().iter().map(|v| v.sqrt()).sum::<f64>()
            / fit.draws.n_draws() as f64;
        let sigma = fit.draws.column_named("sigma2").unwrap().iter().map(|v| v.sqrt()).sum::<f64>()
            / fit.draws.n_draws() as f64;
        if (mu - 50.0).abs() < 4.0 && (5.0..=20.0).contains(&tau) && (sigma - 5.0).abs() < 0.6 {
            passed += 1;
        }
    }
    assert!(passed >= 4, "{passed}/5");
}

fn varying_data(seed: u64) -> (GroupedData, Vec<f64>) {
    let s2 = vec![1.5, 2.6, 3.4, 4.4, 5.8, 8.5];
    let d = grouped(&spec(
        "hier-varying",
        &[
            ("mu", ParamValue::Scalar(20.0)),
            ("tau2", ParamValue::Scalar(16.0)),
            ("theta", ParamValue::Vector(vec![14.0, 17.0, 19.0, 21.0, 23.0, 27.0])),
            ("sigma2", ParamValue::Vector(s2.clone())),
        ],
        vec![40; 6],
        seed,
    ));
    (d, s2)
}

#[test]
fn hier_varying_fixed_recovers_group_variances() {
    let (d, s2) = varying_data(11);
    let fit = fit_hier_varying_with(&d, HierVaryingOptions::new(NuStrategy::Fixed), &cfg(12), &RunOptions::default())
        .unwrap();
    for (k, truth) in s2.iter().enumerate() {
        let m = fit.draws.mean_named(&format!("sigma2[g{}]", k + 1)).unwrap();
        assert!(m / truth >= 0.5 && m / truth <= 2.0, "group {k}: {m} vs {truth}");
    }
}

#[test]
fn rho2_conditional_matches_quadrature() {
    let (d, _) = varying_data(13);
    let model = HierVarying::new(&d, HierVaryingOptions::new(NuStrategy::Fixed)).unwrap();
    let nu = model.nu_hat();
    let j = d.n_groups();
    let mut frozen: Vec<String> = (1..=j).map(|k| format!("theta[g{k}]")).collect();
    frozen.extend((1..=j).map(|k| format!("sigma2[g{k}]")));
    frozen.extend(["mu".to_string(), "tau2".to_string()]);
    let names: Vec<&str> = frozen.iter().map(String::as_str).collect();
    let run = RunOptions::default().freeze(&names);
    let config = ChainConfig::new(1, 100_100, 100, 1, 14).forced(true);
    let fit = fit_hier_varying_with(&d, HierVaryingOptions::new(NuStrategy::Fixed), &config, &run).unwrap();
    let s2: Vec<f64> = (1..=j).map(|k| fit.draws.column_named(&format!("sigma2[g{k}]")).unwrap()[0]).collect();
    let rho2 = fit.draws.column_named("rho2").unwrap();
    // Gamma(Jν/2, ν/2·Σ 1/σ_j²) kernel, normalized by quadrature below
    let rate = 0.5 * nu * s2.iter().map(|s| 1.0 / s).sum::<f64>();
    let log_kernel = |r: f64| (0.5 * j as f64 * nu - 1.0) * r.ln() - rate * r;
    let mode_guess = j as f64 / s2.iter().map(|s| 1.0 / s).sum::<f64>();
    let shift = log_kernel(mode_guess);
    let density = |r: f64| if r <= 0.0 { 0.0 } else { (log_kernel(r) - shift).exp() };
    let hi = 20.0 * mode_guess;
    let grid = log_grid(1e-3 * mode_guess, hi, 2000);
    let tail = integrate_to_infinity(density, hi, 1e-12);
    let cdf = TabulatedCdf::from_density(density, 0.0, &grid, Some(tail));
    let ks = cdf.ks_distance(&rho2);
    assert!(ks < 0.01, "{ks}");
}

fn spread_of_sigma_means(h: f64, d: &GroupedData) -> f64 {
    let fit = fit_hier_varying_with(
        d,
        HierVaryingOptions::new(NuStrategy::Power { h }),
        &cfg(15).forced(true),
        &RunOptions::default(),
    )
    .unwrap();
    let m: Vec<f64> = (1..=d.n_groups())
        .map(|k| fit.draws.mean_named(&format!("sigma2[g{k}]")).unwrap())
        .collect();
    variance(&m)
}

#[test]
fn small_power_exponent_compresses_group_variances() {
    let mut r = RandomStream::new(16, 0);
    let s2 = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let y: Vec<Vec<f64>> = s2
        .iter()
        .map(|v| (0..8).map(|_| sample_normal(&mut r, 0.0, *v).unwrap()).collect())
        .collect();
    let d = GroupedData::from_groups(y);
    assert!(spread_of_sigma_means(0.1, &d) < spread_of_sigma_means(3.0, &d));
}

#[test]
fn huge_nu_collapses_group_variances() {
    let (d, _) = varying_data(17);
    let fit = fit_hier_varying_with(
        &d,
        HierVaryingOptions::new(NuStrategy::Fixed).with_nu_hat(1e6),
        &cfg(18).forced(true),
        &RunOptions::default(),
    )
    .unwrap();
    let m: Vec<f64> = (1..=6).map(|k| fit.draws.mean_named(&format!("sigma2[g{k}]")).unwrap()).collect();
    let lo = m.iter().cloned().fold(f64::MAX, f64::min);
    let hi = m.iter().cloned().fold(f64::MIN, f64::max);
    assert!((hi - lo) / mean(&m) < 0.02, "{m:?}");
}

#[test]
fn row_permutation_leaves_theta_distribution_unchanged() {
    let (d, _) = varying_data(19);
    let mut p = d.clone();
    for y in p.y.iter_mut() {
        y.reverse();
        y.rotate_left(7);
    }
    let config = ChainConfig::new(4, 6000, 1000, 5, 20);
    let a = fit_hier_common(&d, &config).unwrap();
    let b = fit_hier_common(&p, &config.clone().with_seed(21)).unwrap();
    let n = a.draws.n_draws() as f64;
    let crit = hbm_testkit::ks_critical(0.001, n, n);
    for k in 1..=6 {
        let name = format!("theta[g{k}]");
        let ks = ks_two_sample(&a.draws.column_named(&name).unwrap(), &b.draws.column_named(&name).unwrap());
        assert!(ks < crit, "{name}: {ks} vs {crit}");
    }
}

#[test]
fn every_nu_strategy_fits_the_same_data() {
    let (d, s2) = varying_data(22);
    for strategy in [NuStrategy::Fixed, NuStrategy::Power { h: 1.0 }, NuStrategy::Exponential] {
        let fit =
            fit_hier_varying_with(&d, HierVaryingOptions::new(strategy), &cfg(23), &RunOptions::default()).unwrap();
        let m: Vec<f64> = (1..=6).map(|k| fit.draws.mean_named(&format!("sigma2[g{k}]")).unwrap()).collect();
        for (a, b) in m.iter().zip(&s2) {
            assert!(a / b > 0.5 && a / b < 2.0, "{strategy}: {a} vs {b}");
        }
    }
}
