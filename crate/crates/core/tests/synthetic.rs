use std::collections::BTreeMap;

use hbm_core::data::Grouping;
use hbm_core::synthetic::{generate, CovariateDesign, GeneratorSpec, NoiseKind, ParamValue};
use hbm_testkit::{mean, variance};
use proptest::prelude::*;

fn spec(model: &str, params: &[(&str, f64)], sizes: Vec<usize>, noise: NoiseKind, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        model: model.into(),
        params: params
            .iter()
            .map(|(k, v)| (k.to_string(), ParamValue::Scalar(*v)))
            .collect::<BTreeMap<_, _>>(),
        group_sizes: sizes,
        second_sizes: None,
        covariate: None,
        noise,
        seed,
    }
}

fn responses(s: &GeneratorSpec) -> Vec<f64> {
    generate(s).unwrap().0.rows().iter().map(|r| r.response).collect()
}

#[test]
fn complete_pooling_sample_mean() {
    let s = spec("complete-pooling", &[("theta", 10.0), ("sigma2", 9.0)], vec![100], NoiseKind::Normal, 1);
    let m = mean(&responses(&s));
    assert!((m - 10.0).abs() < 0.6, "{m}");
}

#[test]
fn hierarchical_data_is_overdispersed_relative_to_pooling() {
    let between = |model: &str, params: &[(&str, f64)], seed: u64| {
        let s = spec(model, params, vec![40; 6], NoiseKind::Normal, seed);
        let d = generate(&s).unwrap().0.grouped(Grouping::Group).unwrap();
        variance(&d.y.iter().map(|y| mean(y)).collect::<Vec<_>>())
    };
    let wins = (0..20)
        .filter(|&seed| {
            let h = between("hier-common", &[("mu", 50.0), ("tau2", 100.0), ("sigma2", 25.0)], seed);
            let c = between("complete-pooling", &[("theta", 50.0), ("sigma2", 25.0)], seed);
            h > c
        })
        .count();
    assert_eq!(wins, 20);
}

#[test]
fn laplace_noise_has_excess_kurtosis_three() {
    let s = spec("complete-pooling", &[("theta", 0.0), ("sigma2", 4.0)], vec![100_000], NoiseKind::Laplace, 2);
    let y = responses(&s);
    let m = mean(&y);
    let n = y.len() as f64;
    let m2 = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = y.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let k = m4 / (m2 * m2) - 3.0;
    assert!((k - 3.0).abs() < 0.5, "{k}");
    assert!((m2 - 2.0 * 4.0).abs() < 0.2, "{m2}");
}

#[test]
fn regression_truth_records_every_group() {
    let mut s = spec(
        "regression:varying-both",
        &[("mu", 5.0), ("gamma", 1.0), ("tau2", 2.0), ("zeta2", 0.5), ("rho_ab", 0.3), ("nu", 6.0), ("rho2", 1.0)],
        vec![10; 4],
        NoiseKind::Normal,
        3,
    );
    s.covariate = Some(CovariateDesign::Grid { lo: 0.0, hi: 1.0 });
    let (t, truth) = generate(&s).unwrap();
    assert_eq!(t.rows().len(), 40);
    for g in &truth.groups {
        for p in ["alpha", "beta", "sigma2"] {
            assert!(truth.get(&format!("{p}[{g}]")).is_ok(), "{p}[{g}]");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_table(seed in any::<u64>(), j in 1usize..6, n in 1usize..8) {
        let s = spec("hier-varying", &[("mu", 1.0), ("tau2", 2.0), ("nu", 5.0), ("rho2", 1.5)], vec![n; j], NoiseKind::Normal, seed);
        let (a, ta) = generate(&s).unwrap();
        let (b, tb) = generate(&s).unwrap();
        prop_assert_eq!(a.digest(), b.digest());
        prop_assert_eq!(&ta, &tb);
        for g in &ta.groups {
            let name = format!("sigma2[{g}]");
            let v = ta.get(&name).unwrap();
            prop_assert!(v > 0.0);
        }
    }
}
