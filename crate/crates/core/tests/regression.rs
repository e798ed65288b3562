use std::collections::BTreeMap;

use hbm_core::data::{GroupedData, Grouping, ObservationTable};
use hbm_core::mcmc::{ChainConfig, GibbsModel, RunOptions};
use hbm_core::models::regression::{
    build_regression_priors, fit_national_regression, fit_separate_regressions, fit_varying_both,
    fit_varying_intercepts, fit_varying_intercepts_with, linear_grid, regression_bands, BandTarget, Interval,
    VaryingIntercepts,
};
use hbm_core::models::{Likelihood, RegressionVariant};
use hbm_core::synthetic::{generate, CovariateDesign, GeneratorSpec, NoiseKind, ParamValue};
use hbm_testkit::{ks_critical, ks_two_sample, mean, quantile, spearman, variance};

fn gen(
    variant: &str,
    params: &[(&str, ParamValue)],
    sizes: Vec<usize>,
    noise: NoiseKind,
    seed: u64,
) -> (ObservationTable, BTreeMap<String, f64>) {
    let spec = GeneratorSpec {
        model: format!("regression:{variant}"),
        params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        group_sizes: sizes,
        second_sizes: None,
        covariate: Some(CovariateDesign::Uniform { lo: 0.0, hi: 10.0 }),
        noise,
        seed,
    };
    let (t, truth) = generate(&spec).unwrap();
    (t, truth.params)
}

fn grouped(t: &ObservationTable) -> GroupedData {
    t.grouped(Grouping::Group).unwrap()
}

fn cfg(seed: u64) -> ChainConfig {
    ChainConfig::new(4, 3000, 1000, 1, seed)
}

#[test]
fn national_slope_is_recovered() {
    let (t, _) = gen(
        "national",
        &[("alpha", ParamValue::Scalar(1.0)), ("beta", ParamValue::Scalar(2.0)), ("sigma2", ParamValue::Scalar(0.01))],
        vec![25; 4],
        NoiseKind::Normal,
        1,
    );
    let fit = fit_national_regression(&grouped(&t), &cfg(2)).unwrap();
    let b = fit.draws.mean_named("beta").unwrap();
    assert!((b - 2.0).abs() < 0.05, "{b}");
}

#[test]
fn centering_leaves_slope_and_intercept_unchanged() {
    let (t, _) = gen(
        "national",
        &[("alpha", ParamValue::Scalar(3.0)), ("beta", ParamValue::Scalar(-1.0)), ("sigma2", ParamValue::Scalar(4.0))],
        vec![30; 3],
        NoiseKind::Normal,
        3,
    );
    let rows = t
        .rows()
        .iter()
        .cloned()
        .map(|mut r| {
            r.covariate = r.covariate.map(|x| x + 7.0);
            r
        })
        .collect();
    let shifted = ObservationTable::with_groups(rows, Some(t.groups().to_vec())).unwrap();
    let config = ChainConfig::new(4, 10_000, 1000, 5, 4);
    let a = fit_national_regression(&grouped(&t), &config).unwrap();
    let b = fit_national_regression(&grouped(&shifted), &config.clone().with_seed(5)).unwrap();
    for name in ["alpha", "beta"] {
        let x = a.draws.column_named(name).unwrap();
        let y = b.draws.column_named(name).unwrap();
        let ks = ks_two_sample(&x, &y);
        assert!(ks < ks_critical(0.001, x.len() as f64, y.len() as f64), "{name}: {ks}");
    }
}

#[test]
fn near_collinear_points_give_their_slope() {
    let d = GroupedData::from_groups(vec![vec![5.0, 4.0001, 2.9999], vec![1.0, 3.0, 2.0, 6.0, 4.0]])
        .with_covariate(vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0, 3.0, 4.0]]);
    let fit = fit_separate_regressions(&d, &cfg(6)).unwrap();
    let b = fit.draws.column_named("beta[g1]").unwrap();
    let m = quantile(&b, 0.5);
    assert!((m + 1.0).abs() < 1e-2, "{m}");
}

#[test]
fn small_noisy_group_interval_covers_zero() {
    let x = vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]];
    let y = vec![vec![3.0, -4.0, 6.0, -1.0], vec![2.0, 4.1, 5.9, 8.0, 10.2, 11.9]];
    let d = GroupedData::from_groups(y).with_covariate(x);
    let fit = fit_separate_regressions(&d, &cfg(7)).unwrap();
    let i = Interval::from_draws(&fit.draws.column_named("beta[g1]").unwrap(), 0.95);
    assert!(i.lo < 0.0 && 0.0 < i.hi, "{i:?}");
}

#[test]
fn separate_fits_do_not_share_information() {
    let x = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]; 2];
    let y = vec![vec![1.0, 2.5, 2.9, 4.2, 5.1], vec![9.0, 7.5, 7.1, 5.8, 4.9]];
    let a = GroupedData::from_groups(y.clone()).with_covariate(x.clone());
    let mut y2 = y;
    y2[0] = vec![-40.0, 12.0, 3.0, 100.0, 0.5];
    let b = GroupedData::from_groups(y2).with_covariate(x);
    let fa = fit_separate_regressions(&a, &cfg(8)).unwrap();
    let fb = fit_separate_regressions(&b, &cfg(8)).unwrap();
    for name in ["alpha[g2]", "beta[g2]", "sigma2[g2]"] {
        let (u, v) = (fa.draws.column_named(name).unwrap(), fb.draws.column_named(name).unwrap());
        assert!(u.iter().zip(&v).all(|(p, q)| p.to_bits() == q.to_bits()), "{name}");
    }
    assert_ne!(fa.draws.column_named("beta[g1]").unwrap(), fb.draws.column_named("beta[g1]").unwrap());
}

#[test]
fn prior_pack_recovers_intercept_spread() {
    let (t, _) = gen(
        "varying-intercepts",
        &[
            ("mu", ParamValue::Scalar(100.0)),
            ("tau2", ParamValue::Scalar(25.0)),
            ("beta", ParamValue::Scalar(2.0)),
            ("sigma2", ParamValue::Scalar(4.0)),
        ],
        vec![40; 20],
        NoiseKind::Normal,
        9,
    );
    let d = grouped(&t);
    let config = cfg(10);
    let p = build_regression_priors(&d, &config).unwrap();
    assert!(p.tau2_hat > 0.4 * 25.0 && p.tau2_hat < 2.5 * 25.0, "{}", p.tau2_hat);
    let national = fit_national_regression(&d, &config).unwrap();
    assert_eq!(p.gamma_hat, mean(&national.draws.column_named("beta").unwrap()));
}

fn intercepts_data(seed: u64) -> (GroupedData, BTreeMap<String, f64>) {
    let (t, truth) = gen(
        "varying-intercepts",
        &[
            ("mu", ParamValue::Scalar(50.0)),
            ("tau2", ParamValue::Scalar(64.0)),
            ("beta", ParamValue::Scalar(2.0)),
            ("sigma2", ParamValue::Scalar(9.0)),
        ],
        vec![40; 10],
        NoiseKind::Normal,
        seed,
    );
    (grouped(&t), truth)
}

#[test]
fn varying_intercepts_recover_slope_and_ordering() {
    let (d, truth) = intercepts_data(11);
    let config = cfg(12);
    let p = build_regression_priors(&d, &config).unwrap();
    let fit = fit_varying_intercepts(&d, &p, &config).unwrap();
    let b = fit.draws.mean_named("beta").unwrap();
    assert!((b - 2.0).abs() < 0.3, "{b}");
    let (est, tru): (Vec<f64>, Vec<f64>) = d
        .labels
        .iter()
        .map(|l| {
            let name = format!("alpha[{l}]");
            (fit.draws.mean_named(&name).unwrap(), truth[&name])
        })
        .unzip();
    let rho = spearman(&est, &tru);
    assert!(rho > 0.9, "{rho}");
}

#[test]
fn frozen_small_tau_collapses_intercepts() {
    let (d, _) = intercepts_data(13);
    let config = cfg(14);
    let p = build_regression_priors(&d, &config).unwrap();
    let model = VaryingIntercepts::new(&d, &p).unwrap();
    let mut init = model.init();
    init[model.tau2_index()] = 1e-8;
    let fit = fit_varying_intercepts_with(
        &d,
        &p,
        &config.clone().forced(true),
        &RunOptions::default().freeze(&["tau2"]).with_init(init),
    )
    .unwrap();
    let a: Vec<f64> = d.labels.iter().map(|l| fit.draws.mean_named(&format!("alpha[{l}]")).unwrap()).collect();
    let spread = a.iter().cloned().fold(f64::MIN, f64::max) - a.iter().cloned().fold(f64::MAX, f64::min);
    let raw: Vec<f64> = d.y.iter().map(|y| mean(y)).collect();
    let raw_sd = variance(&raw).sqrt();
    assert!(spread < 0.01 * raw_sd, "{spread} vs {raw_sd}");
}

#[test]
fn laplace_varying_slopes_stay_near_truth() {
    let j = 8;
    let alpha: Vec<f64> = (0..j).map(|k| 20.0 + 3.0 * k as f64).collect();
    let (t, _) = gen(
        "varying-both",
        &[
            ("alpha", ParamValue::Vector(alpha)),
            ("beta", ParamValue::Vector(vec![2.0; j])),
            ("sigma2", ParamValue::Scalar(9.0)),
        ],
        vec![40; j],
        NoiseKind::Laplace,
        15,
    );
    let d = grouped(&t);
    let config = cfg(16);
    let p = build_regression_priors(&d, &config).unwrap();
    let fit = fit_varying_both(&d, &p, Likelihood::Laplace, &config).unwrap();
    for l in &d.labels {
        let i = Interval::from_draws(&fit.draws.column_named(&format!("beta[{l}]")).unwrap(), 0.95);
        assert!((i.mean - 2.0).abs() < 0.5, "{l}: {i:?}");
        assert!(i.lo > 0.0, "{l}: {i:?}");
    }
}

#[test]
fn uncorrelated_coefficients_give_null_correlation() {
    let a = [-2.0, -1.0, 1.0, 2.0];
    let b = [1.0, -1.0, -1.0, 1.0];
    let alpha: Vec<f64> = (0..20).map(|k| 100.0 + 5.0 * a[k % 4]).collect();
    let beta: Vec<f64> = (0..20).map(|k| 2.0 + 0.5 * b[k % 4]).collect();
    let (t, _) = gen(
        "varying-both",
        &[("alpha", ParamValue::Vector(alpha)), ("beta", ParamValue::Vector(beta)), ("sigma2", ParamValue::Scalar(1.0))],
        vec![40; 20],
        NoiseKind::Normal,
        17,
    );
    let d = grouped(&t);
    let config = cfg(18);
    let p = build_regression_priors(&d, &config).unwrap();
    let fit = fit_varying_both(&d, &p, Likelihood::Normal, &config).unwrap();
    let r = fit.draws.mean_named("rho_ab").unwrap();
    assert!(r.abs() < 0.15, "{r}");
}

#[test]
fn bands_narrow_with_sample_size() {
    let mut widths = Vec::new();
    for n in [20, 80, 320] {
        let (t, _) = gen(
            "national",
            &[("alpha", ParamValue::Scalar(1.0)), ("beta", ParamValue::Scalar(0.5)), ("sigma2", ParamValue::Scalar(4.0))],
            vec![n],
            NoiseKind::Normal,
            19,
        );
        let d = grouped(&t);
        let fit = fit_national_regression(&d, &cfg(20)).unwrap();
        let grid = linear_grid(0.0, 10.0, 11);
        let bands = regression_bands(
            &fit.draws,
            RegressionVariant::National,
            &d,
            BandTarget::National,
            &grid,
            Likelihood::Normal,
            0.95,
            21,
        )
        .unwrap();
        widths.push(mean(&bands.iter().map(|p| p.hi - p.lo).collect::<Vec<_>>()));
    }
    assert!(widths[0] > widths[1] && widths[1] > widths[2], "{widths:?}");
}

#[test]
fn band_grid_is_sorted_and_complete() {
    let (t, _) = gen(
        "national",
        &[("alpha", ParamValue::Scalar(1.0)), ("beta", ParamValue::Scalar(0.5)), ("sigma2", ParamValue::Scalar(1.0))],
        vec![30],
        NoiseKind::Normal,
        22,
    );
    let d = grouped(&t);
    let fit = fit_national_regression(&d, &cfg(23)).unwrap();
    let grid = vec![7.0, 1.0, 4.0, 9.5, 0.0, 3.3, 2.0];
    let bands = regression_bands(&fit.draws, RegressionVariant::National, &d, BandTarget::Group(0), &grid, Likelihood::Normal, 0.9, 24)
        .unwrap();
    assert_eq!(bands.len(), grid.len());
    assert!(bands.windows(2).all(|w| w[0].x < w[1].x));
    assert!(bands.iter().all(|p| p.pred_lo <= p.lo && p.lo <= p.mean && p.mean <= p.hi && p.hi <= p.pred_hi));
}

#[test]
fn identical_groups_floor_the_intercept_spread() {
    let (t, _) = gen(
        "national",
        &[("alpha", ParamValue::Scalar(5.0)), ("beta", ParamValue::Scalar(1.0)), ("sigma2", ParamValue::Scalar(4.0))],
        vec![30],
        NoiseKind::Normal,
        31,
    );
    let one = grouped(&t);
    let x = one.covariate().unwrap()[0].clone();
    let d = GroupedData::from_groups(vec![one.y[0].clone(); 3]).with_covariate(vec![x; 3]);
    let p = build_regression_priors(&d, &cfg(32)).unwrap();
    let within = variance(&one.y[0]);
    assert!(p.tau2_hat > 0.0 && p.tau2_hat < 0.01 * within, "{}", p.tau2_hat);
    assert!(p.nu_hat.is_finite() && p.warnings.iter().any(|w| w.contains("residual variances")));
}

fn slope_data(beta: Vec<f64>, seed: u64) -> GroupedData {
    slope_data_with(vec![10.0; beta.len()], beta, seed)
}

fn slope_data_with(alpha: Vec<f64>, beta: Vec<f64>, seed: u64) -> GroupedData {
    let j = beta.len();
    let (t, _) = gen(
        "varying-both",
        &[("alpha", ParamValue::Vector(alpha)), ("beta", ParamValue::Vector(beta)), ("sigma2", ParamValue::Scalar(4.0))],
        vec![30; j],
        NoiseKind::Normal,
        seed,
    );
    grouped(&t)
}

#[test]
fn heterogeneous_slopes_widen_the_common_slope() {
    let width = |d: &GroupedData| {
        let p = build_regression_priors(d, &cfg(41)).unwrap();
        let fit = fit_varying_intercepts(d, &p, &cfg(42)).unwrap();
        Interval::from_draws(&fit.draws.column_named("beta").unwrap(), 0.95)
    };
    let mixed = width(&slope_data(vec![-3.0, -1.5, 0.0, 1.5, 3.0, -3.0, -1.5, 0.0, 1.5, 3.0], 43));
    let flat = width(&slope_data(vec![0.0; 10], 43));
    assert!(mixed.lo < 0.0 && mixed.hi > 0.0, "{mixed:?}");
    assert!(mixed.hi - mixed.lo > 2.0 * (flat.hi - flat.lo), "{mixed:?} {flat:?}");
}

fn hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut h: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = h.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while h.len() >= start + 2 && cross(h[h.len() - 2], h[h.len() - 1], p) <= 0.0 {
                h.pop();
            }
            h.push(p);
        }
        h.pop();
    }
    h
}

fn inside(h: &[(f64, f64)], p: (f64, f64)) -> bool {
    (0..h.len()).all(|i| {
        let (a, b) = (h[i], h[(i + 1) % h.len()]);
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
    })
}

#[test]
fn joint_estimates_shrink_into_the_separate_hull() {
    let (mut hits, mut total) = (0, 0);
    for k in 0..20 {
        let beta: Vec<f64> = (0..8).map(|j| 1.0 + 0.5 * j as f64).collect();
        let alpha: Vec<f64> = (0..8).map(|j| 10.0 + 2.0 * ((3 * j) % 8) as f64).collect();
        let d = slope_data_with(alpha, beta, 500 + k);
        let c = ChainConfig::new(2, 2000, 1000, 1, 600 + k);
        let p = build_regression_priors(&d, &c).unwrap();
        let sep = fit_separate_regressions(&d, &c).unwrap();
        let nat = fit_national_regression(&d, &c).unwrap();
        let both = fit_varying_both(&d, &p, Likelihood::Normal, &c.clone().forced(true)).unwrap();
        let m = |f: &hbm_core::models::Fit, n: &str| f.draws.mean_named(n).unwrap();
        let mut pts: Vec<(f64, f64)> = d.labels.iter().map(|l| (m(&sep, &format!("alpha[{l}]")), m(&sep, &format!("beta[{l}]")))).collect();
        pts.push((m(&nat, "alpha"), m(&nat, "beta")));
        let h = hull(pts);
        for l in &d.labels {
            total += 1;
            if inside(&h, (m(&both, &format!("alpha[{l}]")), m(&both, &format!("beta[{l}]")))) {
                hits += 1;
            }
        }
    }
    assert!(hits as f64 >= 0.8 * total as f64, "{hits}/{total}");
}
