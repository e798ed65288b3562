//! One entry point for every model of the ladder, plus posterior summaries.

use serde::{Deserialize, Serialize};

use crate::data::{Grouping, ObservationTable};
use crate::error::Result;
use crate::mcmc::{ChainConfig, Diagnostics, PosteriorDraws};
use crate::models::hier::{fit_hier_common, fit_hier_varying_with, HierVaryingOptions};
use crate::models::pooling::{fit_complete_pooling, fit_no_pooling};
use crate::models::regression::{
    build_regression_priors, fit_national_regression, fit_separate_regressions, fit_varying_both, fit_varying_intercepts,
    Interval, RegressionPriorPack,
};
use crate::models::two_cluster::{build_two_cluster_priors, fit_two_cluster, TwoClusterPriorPack};
use crate::models::{Fit, Likelihood, ModelSpec, RegressionVariant};
use crate::mcmc::RunOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Observation model of the varying-both regression.
    pub likelihood: Likelihood,
    /// Overrides the moment estimate of `ν̂` for hier-varying.
    pub nu_hat: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            likelihood: Likelihood::Laplace,
            nu_hat: None,
        }
    }
}

/// Prior packs built from simpler fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorPack {
    TwoCluster(TwoClusterPriorPack),
    Regression(RegressionPriorPack),
}

#[derive(Debug)]
pub struct FitOutput {
    pub fit: Fit,
    pub priors: Option<PriorPack>,
}

/// Fits `spec` to a table.
pub fn fit_table(table: &ObservationTable, spec: ModelSpec, options: &FitOptions, config: &ChainConfig) -> Result<FitOutput> {
    let mut priors = None;
    let fit = match spec {
        ModelSpec::NoPooling => fit_no_pooling(&table.grouped(Grouping::Group)?, config)?,
        ModelSpec::CompletePooling => fit_complete_pooling(&table.grouped(Grouping::Group)?, config)?,
        ModelSpec::HierCommon => fit_hier_common(&table.grouped(Grouping::Group)?, config)?,
        ModelSpec::HierVarying { nu } => {
            let mut o = HierVaryingOptions::new(nu);
            o.nu_hat = options.nu_hat;
            fit_hier_varying_with(&table.grouped(Grouping::Group)?, o, config, &RunOptions::default())?
        }
        ModelSpec::TwoCluster => {
            let cells = table.cells()?;
            let p = build_two_cluster_priors(&cells, config)?;
            let f = fit_two_cluster(&cells, &p, config)?;
            priors = Some(PriorPack::TwoCluster(p));
            f
        }
        ModelSpec::Regression { variant } => {
            let data = table.grouped(Grouping::Group)?;
            data.covariate()?;
            match variant {
                RegressionVariant::National => fit_national_regression(&data, config)?,
                RegressionVariant::Separate => fit_separate_regressions(&data, config)?,
                RegressionVariant::VaryingIntercepts => {
                    let p = build_regression_priors(&data, config)?;
                    let f = fit_varying_intercepts(&data, &p, config)?;
                    priors = Some(PriorPack::Regression(p));
                    f
                }
                RegressionVariant::VaryingBoth => {
                    let p = build_regression_priors(&data, config)?;
                    let f = fit_varying_both(&data, &p, options.likelihood, config)?;
                    priors = Some(PriorPack::Regression(p));
                    f
                }
            }
        }
    };
    Ok(FitOutput { fit, priors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
    pub rhat: Option<f64>,
    pub ess: f64,
}

/// Posterior mean, sd and equal-tailed interval at `level` per parameter.
pub fn summarize(draws: &PosteriorDraws, diagnostics: &Diagnostics, level: f64) -> Vec<ParamSummary> {
    draws
        .names()
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let x = draws.column(k);
            let iv = Interval::from_draws(&x, level);
            let sd = if x.len() > 1 {
                (x.iter().map(|v| (v - iv.mean).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
            } else {
                0.0
            };
            let d = diagnostics.get(name);
            ParamSummary {
                name: name.clone(),
                mean: iv.mean,
                sd,
                lo: iv.lo,
                hi: iv.hi,
                rhat: d.and_then(|d| d.rhat),
                ess: d.map_or(f64::NAN, |d| d.ess),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn table() -> ObservationTable {
        let mut rows = Vec::new();
        for (g, base) in [("a", 0.0), ("b", 3.0), ("c", 6.0)] {
            for i in 0..12 {
                rows.push(Observation {
                    unit: format!("{g}{i}"),
                    group: g.into(),
                    second: Some(if i % 2 == 0 { "lo".into() } else { "hi".into() }),
                    covariate: Some(i as f64),
                    response: base + 0.5 * i as f64 + ((i * 7 % 5) as f64 - 2.0) * (1.0 + 0.2 * base),
                });
            }
        }
        ObservationTable::new(rows).unwrap()
    }

    #[test]
    fn every_model_dispatches() {
        let t = table();
        let cfg = ChainConfig::new(2, 600, 200, 1, 1).forced(true);
        for tag in [
            "no-pooling",
            "complete-pooling",
            "hier-common",
            "hier-varying",
            "two-cluster",
            "regression:national",
            "regression:separate",
            "regression:varying-intercepts",
            "regression:varying-both",
        ] {
            let spec = ModelSpec::parse(tag, None).unwrap();
            let out = fit_table(&t, spec, &FitOptions::default(), &cfg).unwrap_or_else(|e| panic!("{tag}: {e}"));
            let s = summarize(&out.fit.draws, &out.fit.diagnostics, 0.95);
            assert_eq!(s.len(), out.fit.draws.n_params());
            assert!(s.iter().all(|p| p.lo <= p.hi && p.mean.is_finite()), "{tag}");
        }
    }
}
