//! The model ladder: pooling baselines, one-cluster hierarchical models, the
//! two-cluster model and hierarchical regressions.

pub mod hier;
pub mod pooling;
pub mod regression;
pub mod two_cluster;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::GroupedData;
use crate::dist::normal_ln_pdf;
use crate::error::{Error, Result};
use crate::mcmc::{Diagnostics, PosteriorDraws};

/// Prior strategy for the degrees of freedom `ν` of the group-variance prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NuStrategy {
    /// `ν` held at the method-of-moments estimate.
    Fixed,
    /// `p(ν) ∝ ν^(-h)`, sampled on a grid.
    Power { h: f64 },
    /// `ν ~ Exponential(1/ν̂)`, sampled by Metropolis on `log ν`.
    Exponential,
}

impl NuStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NuStrategy::Power { h } if !(h > 0.0 && h.is_finite()) => {
                Err(Error::Config(format!("power prior needs h > 0, got {h}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for NuStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NuStrategy::Fixed => f.write_str("fixed"),
            NuStrategy::Power { h } => write!(f, "power:{h}"),
            NuStrategy::Exponential => f.write_str("exponential"),
        }
    }
}

impl FromStr for NuStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(NuStrategy::Fixed),
            "exponential" => Ok(NuStrategy::Exponential),
            _ => {
                let h = s
                    .strip_prefix("power:")
                    .ok_or_else(|| Error::Config(format!("unknown nu strategy `{s}`")))?;
                let h: f64 = h
                    .parse()
                    .map_err(|_| Error::Config(format!("power exponent `{h}` is not a number")))?;
                let st = NuStrategy::Power { h };
                st.validate()?;
                Ok(st)
            }
        }
    }
}

/// Observation model of the varying-coefficients regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Likelihood {
    Laplace,
    Normal,
    /// Asymmetric Laplace for quantile regression at `quantile`.
    AsymmetricLaplace { quantile: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionVariant {
    National,
    Separate,
    VaryingIntercepts,
    VaryingBoth,
}

impl RegressionVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            RegressionVariant::National => "national",
            RegressionVariant::Separate => "separate",
            RegressionVariant::VaryingIntercepts => "varying-intercepts",
            RegressionVariant::VaryingBoth => "varying-both",
        }
    }
}

/// Which model of the ladder to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelSpec {
    NoPooling,
    CompletePooling,
    HierCommon,
    HierVarying { nu: NuStrategy },
    TwoCluster,
    Regression { variant: RegressionVariant },
}

impl ModelSpec {
    /// Parses a model tag; `nu` applies to `hier-varying` only.
    pub fn parse(tag: &str, nu: Option<NuStrategy>) -> Result<Self> {
        let spec = match tag {
            "no-pooling" => ModelSpec::NoPooling,
            "complete-pooling" => ModelSpec::CompletePooling,
            "hier-common" => ModelSpec::HierCommon,
            "hier-varying" => ModelSpec::HierVarying {
                nu: nu.unwrap_or(NuStrategy::Fixed),
            },
            "two-cluster" => ModelSpec::TwoCluster,
            "regression:national" => ModelSpec::Regression {
                variant: RegressionVariant::National,
            },
            "regression:separate" => ModelSpec::Regression {
                variant: RegressionVariant::Separate,
            },
            "regression:varying-intercepts" => ModelSpec::Regression {
                variant: RegressionVariant::VaryingIntercepts,
            },
            "regression:varying-both" => ModelSpec::Regression {
                variant: RegressionVariant::VaryingBoth,
            },
            _ => return Err(Error::UnknownModel(tag.to_string())),
        };
        Ok(spec)
    }

    pub fn tag(&self) -> String {
        match self {
            ModelSpec::NoPooling => "no-pooling".into(),
            ModelSpec::CompletePooling => "complete-pooling".into(),
            ModelSpec::HierCommon => "hier-common".into(),
            ModelSpec::HierVarying { nu } => format!("hier-varying[{nu}]"),
            ModelSpec::TwoCluster => "two-cluster".into(),
            ModelSpec::Regression { variant } => format!("regression:{}", variant.as_str()),
        }
    }
}

/// Per-observation log-likelihood for WAIC.
pub trait PointwiseLogLik: Send + Sync {
    fn n_obs(&self) -> usize;

    /// `log p(y_i | Θ)` for one retained draw row.
    fn log_lik(&self, obs: usize, row: &[f64]) -> f64;

    /// What one observation is, e.g. `group` or `cell`.
    fn observation_kind(&self) -> &'static str;

    fn observation_digest(&self) -> String;
}

/// SHA-256 of an observation set: the kind tag, then each label and value.
pub fn observation_digest<'a>(kind: &str, obs: impl Iterator<Item = (&'a str, f64)>) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update([0]);
    for (label, y) in obs {
        h.update(label.as_bytes());
        h.update([0x1f]);
        h.update(y.to_bits().to_le_bytes());
        h.update([0x1e]);
    }
    hex::encode(h.finalize())
}

pub fn group_observation_digest(data: &GroupedData) -> String {
    observation_digest(
        "group",
        data.labels
            .iter()
            .zip(&data.y)
            .flat_map(|(l, ys)| ys.iter().map(move |&y| (l.as_str(), y))),
    )
}

/// Normal likelihood with per-group mean and variance columns.
#[derive(Debug, Clone)]
pub struct GroupNormalLik {
    obs: Vec<(usize, f64)>,
    mean_col: Vec<usize>,
    var_col: Vec<usize>,
    digest: String,
}

impl GroupNormalLik {
    pub fn new(data: &GroupedData, mean_col: Vec<usize>, var_col: Vec<usize>) -> Self {
        let obs = data
            .y
            .iter()
            .enumerate()
            .flat_map(|(j, ys)| ys.iter().map(move |&y| (j, y)))
            .collect();
        Self {
            obs,
            mean_col,
            var_col,
            digest: group_observation_digest(data),
        }
    }
}

impl PointwiseLogLik for GroupNormalLik {
    fn n_obs(&self) -> usize {
        self.obs.len()
    }

    fn log_lik(&self, i: usize, row: &[f64]) -> f64 {
        let (j, y) = self.obs[i];
        normal_ln_pdf(y, row[self.mean_col[j]], row[self.var_col[j]])
    }

    fn observation_kind(&self) -> &'static str {
        "group"
    }

    fn observation_digest(&self) -> String {
        self.digest.clone()
    }
}

/// Draws, diagnostics and the likelihood needed to score them.
pub struct Fit {
    pub spec: ModelSpec,
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    pub likelihood: Box<dyn PointwiseLogLik>,
    pub warnings: Vec<String>,
}

impl fmt::Debug for Fit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fit")
            .field("spec", &self.spec)
            .field("draws", &self.draws.names())
            .field("warnings", &self.warnings)
            .finish()
    }
}

/// Per-group sufficient statistics kept by the kernels.
#[derive(Debug, Clone)]
pub(crate) struct GroupStats {
    pub n: Vec<f64>,
    pub ybar: Vec<f64>,
    /// `Σ (y - ȳ)²` per group.
    pub ss: Vec<f64>,
}

impl GroupStats {
    pub fn new(data: &GroupedData) -> Self {
        let mut n = Vec::new();
        let mut ybar = Vec::new();
        let mut ss = Vec::new();
        for y in &data.y {
            let nj = y.len() as f64;
            let m = y.iter().sum::<f64>() / nj;
            n.push(nj);
            ybar.push(m);
            ss.push(y.iter().map(|v| (v - m).powi(2)).sum());
        }
        Self { n, ybar, ss }
    }

    /// `Σ_i (y_ij - θ)²`.
    pub fn sq_dev(&self, j: usize, theta: f64) -> f64 {
        self.ss[j] + self.n[j] * (self.ybar[j] - theta).powi(2)
    }

    pub fn j(&self) -> usize {
        self.n.len()
    }

    pub fn n_total(&self) -> f64 {
        self.n.iter().sum()
    }
}

pub(crate) fn names_indexed(prefix: &str, labels: &[String]) -> Vec<String> {
    labels.iter().map(|l| format!("{prefix}[{l}]")).collect()
}

pub(crate) fn sample_var(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
