//! Forward simulation from every model of the ladder with known parameters.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{EducationCategory, Observation, ObservationTable};
use crate::dist::{
    sample_bivariate_normal_cov, sample_normal, sample_scaled_inv_chi2, standard_normal, ScaledInvChi2Params, Sym2,
};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, RegressionVariant};
use crate::random::RandomStream;

/// A pinned value: one number, or one per group (or level, or cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Normal,
    /// Laplace with scale `√σ²`.
    Laplace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateDesign {
    /// Evenly spaced on `[lo, hi]` within each group.
    Grid { lo: f64, hi: f64 },
    /// Years of schooling drawn uniformly from the education categories.
    Years,
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub model: String,
    pub params: BTreeMap<String, ParamValue>,
    pub group_sizes: Vec<usize>,
    /// Rows per cell for each second-cluster level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<CovariateDesign>,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

/// Every parameter value used to generate a table, drawn or pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub model: String,
    pub seed: u64,
    pub groups: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    pub params: BTreeMap<String, f64>,
}

impl TruthRecord {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl GeneratorSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

struct Params<'a> {
    map: &'a BTreeMap<String, ParamValue>,
    truth: BTreeMap<String, f64>,
}

impl Params<'_> {
    fn scalar(&mut self, name: &str) -> Result<f64> {
        match self.map.get(name) {
            Some(ParamValue::Scalar(v)) => {
                self.truth.insert(name.to_string(), *v);
                Ok(*v)
            }
            Some(ParamValue::Vector(_)) => Err(Error::Config(format!("parameter `{name}` must be a single number"))),
            None => Err(Error::MissingParameter(name.to_string())),
        }
    }

    fn positive(&mut self, name: &str) -> Result<f64> {
        let v = self.scalar(name)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("parameter `{name}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn has(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    /// A per-unit vector of length `n`; a scalar is broadcast.
    fn vector(&mut self, name: &str, labels: &[String]) -> Result<Option<Vec<f64>>> {
        let v = match self.map.get(name) {
            None => return Ok(None),
            Some(ParamValue::Scalar(v)) => vec![*v; labels.len()],
            Some(ParamValue::Vector(v)) if v.len() == labels.len() => v.clone(),
            Some(ParamValue::Vector(v)) => {
                return Err(Error::Config(format!(
                    "parameter `{name}` has {} values, expected {}",
                    v.len(),
                    labels.len()
                )))
            }
        };
        self.record(name, labels, &v);
        Ok(Some(v))
    }

    fn record(&mut self, name: &str, labels: &[String], v: &[f64]) {
        for (l, x) in labels.iter().zip(v) {
            self.truth.insert(format!("{name}[{l}]"), *x);
        }
    }

    fn vector_or(
        &mut self,
        name: &str,
        labels: &[String],
        mut draw: impl FnMut(&mut Self) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        if let Some(v) = self.vector(name, labels)? {
            return Ok(v);
        }
        let v = (0..labels.len()).map(|_| draw(self)).collect::<Result<Vec<_>>>()?;
        self.record(name, labels, &v);
        Ok(v)
    }
}

fn noise(kind: NoiseKind, sigma2: f64, r: &mut RandomStream) -> f64 {
    match kind {
        NoiseKind::Normal => sigma2.sqrt() * standard_normal(r),
        NoiseKind::Laplace => {
            let u = r.uniform() - 0.5;
            -sigma2.sqrt() * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
    }
}

fn covariates(design: &CovariateDesign, n: usize, r: &mut RandomStream) -> Vec<f64> {
    match *design {
        CovariateDesign::Grid { lo, hi } => {
            if n == 1 {
                vec![(lo + hi) / 2.0]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        }
        CovariateDesign::Uniform { lo, hi } => (0..n).map(|_| lo + (hi - lo) * r.uniform()).collect(),
        CovariateDesign::Years => {
            let years: Vec<f64> = EducationCategory::ALL.iter().map(|c| c.record().years as f64).collect();
            (0..n)
                .map(|_| years[((r.uniform() * years.len() as f64) as usize).min(years.len() - 1)])
                .collect()
        }
    }
}

/// Draws the table and returns it with the full truth record.
pub fn generate(spec: &GeneratorSpec) -> Result<(ObservationTable, TruthRecord)> {
    let model = ModelSpec::parse(&spec.model, None).or_else(|e| {
        spec.model
            .strip_prefix("hier-varying")
            .map(|_| ModelSpec::HierVarying {
                nu: crate::models::NuStrategy::Fixed,
            })
            .ok_or(e)
    })?;
    if spec.group_sizes.is_empty() {
        return Err(Error::Config("group_sizes is empty".into()));
    }
    if spec.group_sizes.contains(&0) {
        return Err(Error::Config("every group needs at least one row".into()));
    }
    let j = spec.group_sizes.len();
    let groups: Vec<String> = (1..=j).map(|i| format!("g{i}")).collect();
    let mut r = RandomStream::new(spec.seed, 0);
    let mut p = Params {
        map: &spec.params,
        truth: BTreeMap::new(),
    };
    let mut rows = Vec::new();
    let mut levels = Vec::new();
    let mut unit = 0usize;
    let mut push = |rows: &mut Vec<Observation>, g: &str, second: Option<String>, x: Option<f64>, y: f64| {
        unit += 1;
        rows.push(Observation {
            unit: format!("u{unit}"),
            group: g.to_string(),
            second,
            covariate: x,
            response: y,
        });
    };
    match model {
        ModelSpec::CompletePooling => {
            let theta = p.scalar("theta")?;
            let s2 = p.positive("sigma2")?;
            for (g, &n) in groups.iter().zip(&spec.group_sizes) {
                for _ in 0..n {
                    let y = theta + noise(spec.noise, s2, &mut r);
                    push(&mut rows, g, None, None, y);
                }
            }
        }
        ModelSpec::NoPooling => {
            let theta = p.vector("theta", &groups)?.ok_or_else(|| Error::MissingParameter("theta".into()))?;
            let s2 = p.vector("sigma2", &groups)?.ok_or_else(|| Error::MissingParameter("sigma2".into()))?;
            for (k, g) in groups.iter().enumerate() {
                for _ in 0..spec.group_sizes[k] {
                    let y = theta[k] + noise(spec.noise, s2[k], &mut r);
                    push(&mut rows, g, None, None, y);
                }
            }
        }
        ModelSpec::HierCommon | ModelSpec::HierVarying { .. } => {
            let mu = p.scalar("mu")?;
            let tau2 = p.positive("tau2")?;
            let theta = p.vector_or("theta", &groups, |_| sample_normal(&mut r, mu, tau2))?;
            let s2 = if matches!(model, ModelSpec::HierCommon) {
                vec![p.positive("sigma2")?; j]
            } else if p.has("sigma2") {
                p.vector("sigma2", &groups)?.expect("present")
            } else {
                let nu = p.positive("nu")?;
                let rho2 = p.positive("rho2")?;
                p.vector_or("sigma2", &groups, |_| {
                    sample_scaled_inv_chi2(&mut r, ScaledInvChi2Params::new(nu, rho2)?)
                })?
            };
            for (k, g) in groups.iter().enumerate() {
                for _ in 0..spec.group_sizes[k] {
                    let y = theta[k] + noise(spec.noise, s2[k], &mut r);
                    push(&mut rows, g, None, None, y);
                }
            }
        }
        ModelSpec::TwoCluster => {
            let sizes = spec
                .second_sizes
                .as_ref()
                .ok_or_else(|| Error::Config("two-cluster generation needs second_sizes".into()))?;
            if sizes.len() < 2 {
                return Err(Error::Config("two-cluster generation needs at least 2 levels".into()));
            }
            levels = (1..=sizes.len()).map(|i| format!("l{i}")).collect();
            let mu = p.scalar("mu")?;
            let tau2 = p.positive("tau2")?;
            let theta = p.vector_or("theta", &groups, |_| sample_normal(&mut r, mu, tau2))?;
            let lambda = if p.has("lambda") {
                p.vector("lambda", &levels)?.expect("present")
            } else {
                let xi2 = p.positive("xi2")?;
                p.vector_or("lambda", &levels, |_| sample_normal(&mut r, 0.0, xi2))?
            };
            let cells: Vec<String> = groups
                .iter()
                .flat_map(|g| levels.iter().map(move |l| crate::data::cell_label(g, l)))
                .collect();
            let s2 = if p.has("sigma2") {
                p.vector("sigma2", &cells)?.expect("present")
            } else {
                let nu = p.vector("nu", &levels)?.ok_or_else(|| Error::MissingParameter("nu".into()))?;
                let rho2 = p.vector("rho2", &levels)?.ok_or_else(|| Error::MissingParameter("rho2".into()))?;
                let kn = levels.len();
                let mut c = 0usize;
                p.vector_or("sigma2", &cells, |_| {
                    let k = c % kn;
                    c += 1;
                    sample_scaled_inv_chi2(&mut r, ScaledInvChi2Params::new(nu[k], rho2[k])?)
                })?
            };
            for (jj, g) in groups.iter().enumerate() {
                for (k, l) in levels.iter().enumerate() {
                    for _ in 0..sizes[k] {
                        let y = theta[jj] + lambda[k] + noise(spec.noise, s2[jj * levels.len() + k], &mut r);
                        push(&mut rows, g, Some(l.clone()), None, y);
                    }
                }
            }
        }
        ModelSpec::Regression { variant } => {
            let design = spec
                .covariate
                .clone()
                .ok_or_else(|| Error::Config("regression generation needs a covariate design".into()))?;
            let xs: Vec<Vec<f64>> = spec.group_sizes.iter().map(|&n| covariates(&design, n, &mut r)).collect();
            let all: Vec<f64> = xs.iter().flatten().copied().collect();
            let national_center = all.iter().sum::<f64>() / all.len() as f64;
            let centers: Vec<f64> = match variant {
                RegressionVariant::National => vec![national_center; j],
                _ => xs.iter().map(|x| x.iter().sum::<f64>() / x.len() as f64).collect(),
            };
            let (alpha, beta) = match variant {
                RegressionVariant::National => (vec![p.scalar("alpha")?; j], vec![p.scalar("beta")?; j]),
                RegressionVariant::Separate => (
                    p.vector("alpha", &groups)?.ok_or_else(|| Error::MissingParameter("alpha".into()))?,
                    p.vector("beta", &groups)?.ok_or_else(|| Error::MissingParameter("beta".into()))?,
                ),
                RegressionVariant::VaryingIntercepts => {
                    let beta = p.scalar("beta")?;
                    let alpha = if p.has("alpha") {
                        p.vector("alpha", &groups)?.expect("present")
                    } else {
                        let mu = p.scalar("mu")?;
                        let tau2 = p.positive("tau2")?;
                        p.vector_or("alpha", &groups, |_| sample_normal(&mut r, mu, tau2))?
                    };
                    (alpha, vec![beta; j])
                }
                RegressionVariant::VaryingBoth => {
                    if p.has("alpha") && p.has("beta") {
                        (
                            p.vector("alpha", &groups)?.expect("present"),
                            p.vector("beta", &groups)?.expect("present"),
                        )
                    } else {
                        let mu = p.scalar("mu")?;
                        let gamma = p.scalar("gamma")?;
                        let tau2 = p.positive("tau2")?;
                        let zeta2 = p.positive("zeta2")?;
                        let rho = p.scalar("rho_ab")?;
                        if rho.abs() >= 1.0 {
                            return Err(Error::Config(format!("rho_ab must lie in (-1, 1), got {rho}")));
                        }
                        let cov = Sym2 {
                            a: tau2,
                            b: rho * (tau2 * zeta2).sqrt(),
                            c: zeta2,
                        };
                        let mut a = Vec::new();
                        let mut b = Vec::new();
                        for _ in 0..j {
                            let (x, y) = sample_bivariate_normal_cov(&mut r, (mu, gamma), cov)?;
                            a.push(x);
                            b.push(y);
                        }
                        p.record("alpha", &groups, &a);
                        p.record("beta", &groups, &b);
                        (a, b)
                    }
                }
            };
            let s2 = if matches!(variant, RegressionVariant::National) {
                vec![p.positive("sigma2")?; j]
            } else if p.has("sigma2") {
                p.vector("sigma2", &groups)?.expect("present")
            } else {
                let nu = p.positive("nu")?;
                let rho2 = p.positive("rho2")?;
                p.vector_or("sigma2", &groups, |_| {
                    sample_scaled_inv_chi2(&mut r, ScaledInvChi2Params::new(nu, rho2)?)
                })?
            };
            for (k, g) in groups.iter().enumerate() {
                for &x in &xs[k] {
                    let y = alpha[k] + beta[k] * (x - centers[k]) + noise(spec.noise, s2[k], &mut r);
                    push(&mut rows, g, None, Some(x), y);
                }
            }
        }
    }
    let table = ObservationTable::with_groups(rows, Some(groups.clone()))?;
    Ok((
        table,
        TruthRecord {
            model: spec.model.clone(),
            seed: spec.seed,
            groups,
            levels,
            params: p.truth,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(model: &str, params: &[(&str, ParamValue)], sizes: Vec<usize>) -> GeneratorSpec {
        GeneratorSpec {
            model: model.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            group_sizes: sizes,
            second_sizes: None,
            covariate: None,
            noise: NoiseKind::Normal,
            seed: 7,
        }
    }

    #[test]
    fn complete_pooling_mean() {
        let s = spec(
            "complete-pooling",
            &[("theta", ParamValue::Scalar(10.0)), ("sigma2", ParamValue::Scalar(4.0))],
            vec![100],
        );
        let (t, truth) = generate(&s).unwrap();
        let m = t.rows().iter().map(|o| o.response).sum::<f64>() / 100.0;
        assert!((m - 10.0).abs() < 0.6);
        assert_eq!(truth.get("theta").unwrap(), 10.0);
    }

    #[test]
    fn missing_symbol_is_named() {
        let s = spec("hier-common", &[("mu", ParamValue::Scalar(1.0)), ("tau2", ParamValue::Scalar(1.0))], vec![5, 5, 5]);
        match generate(&s) {
            Err(Error::MissingParameter(p)) => assert_eq!(p, "sigma2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_group_size_rejected() {
        let s = spec(
            "complete-pooling",
            &[("theta", ParamValue::Scalar(1.0)), ("sigma2", ParamValue::Scalar(1.0))],
            vec![3, 0],
        );
        assert!(matches!(generate(&s), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_table() {
        let s = spec(
            "hier-varying",
            &[
                ("mu", ParamValue::Scalar(50.0)),
                ("tau2", ParamValue::Scalar(100.0)),
                ("nu", ParamValue::Scalar(8.0)),
                ("rho2", ParamValue::Scalar(25.0)),
            ],
            vec![10; 4],
        );
        let (a, ta) = generate(&s).unwrap();
        let (b, tb) = generate(&s).unwrap();
        assert_eq!(a.rows(), b.rows());
        assert_eq!(ta, tb);
        assert!(ta.params.contains_key("sigma2[g4]"));
    }

    #[test]
    fn two_cluster_cells() {
        let mut s = spec(
            "two-cluster",
            &[
                ("mu", ParamValue::Scalar(0.0)),
                ("tau2", ParamValue::Scalar(1.0)),
                ("lambda", ParamValue::Vector(vec![-1.0, 1.0])),
                ("sigma2", ParamValue::Scalar(1.0)),
            ],
            vec![1, 1, 1],
        );
        s.second_sizes = Some(vec![4, 2]);
        let (t, truth) = generate(&s).unwrap();
        assert_eq!(t.len(), 18);
        assert_eq!(truth.levels, vec!["l1", "l2"]);
        assert_eq!(truth.get("sigma2[g2|l1]").unwrap(), 1.0);
        t.cells().unwrap();
    }

    #[test]
    fn spec_json_roundtrip() {
        let json = r#"{"model":"regression:national","params":{"alpha":1,"beta":2,"sigma2":0.5},
            "group_sizes":[20,20],"covariate":{"kind":"years"},"noise":"laplace","seed":3}"#;
        let s: GeneratorSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.noise, NoiseKind::Laplace);
        let (t, _) = generate(&s).unwrap();
        assert!(t.has_covariate());
    }
}
