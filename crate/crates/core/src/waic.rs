//! WAIC with pointwise contributions, standard-error intervals and a ranked
//! comparison table.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::models::{Fit, PointwiseLogLik};

/// Reporting scale of the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaicScale {
    /// `-2 lppd + 2 p_waic`.
    #[default]
    Deviance,
    /// `-(lppd - p_waic) / n`.
    Watanabe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseWaic {
    pub lppd: f64,
    pub p_waic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicReport {
    pub model: String,
    pub data_digest: String,
    pub observation_kind: String,
    pub n_obs: usize,
    pub n_draws: usize,
    pub scale: WaicScale,
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub pointwise: Vec<PointwiseWaic>,
}

fn log_mean_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + (x.iter().map(|v| (v - m).exp()).sum::<f64>() / x.len() as f64).ln()
}

fn var1(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Pointwise terms from a log-likelihood matrix, one row per observation.
pub fn pointwise_from_matrix(log_lik: &[Vec<f64>]) -> Result<Vec<PointwiseWaic>> {
    let s = log_lik.first().map_or(0, |r| r.len());
    if s < 2 {
        return Err(Error::Insufficient(format!("WAIC needs at least 2 draws, got {s}")));
    }
    log_lik
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != s {
                return Err(Error::Config("log-likelihood rows differ in length".into()));
            }
            if let Some(d) = row.iter().position(|v| *v == f64::NEG_INFINITY || v.is_nan()) {
                return Err(Error::ImpossibleObservation { observation: i, draw: d });
            }
            Ok(PointwiseWaic {
                lppd: log_mean_exp(row),
                p_waic: var1(row),
            })
        })
        .collect()
}

impl WaicReport {
    pub fn from_pointwise(
        model: &str,
        data_digest: &str,
        observation_kind: &str,
        n_draws: usize,
        pointwise: Vec<PointwiseWaic>,
        scale: WaicScale,
    ) -> Result<Self> {
        let n = pointwise.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let lppd: f64 = pointwise.iter().map(|p| p.lppd).sum();
        let p_waic: f64 = pointwise.iter().map(|p| p.p_waic).sum();
        let terms: Vec<f64> = pointwise.iter().map(|p| -2.0 * p.lppd + 2.0 * p.p_waic).collect();
        let se_dev = if n > 1 { (n as f64 * var1(&terms)).sqrt() } else { 0.0 };
        let (waic, se) = match scale {
            WaicScale::Deviance => (-2.0 * lppd + 2.0 * p_waic, se_dev),
            WaicScale::Watanabe => (-(lppd - p_waic) / n as f64, se_dev / (2.0 * n as f64)),
        };
        Ok(Self {
            model: model.to_string(),
            data_digest: data_digest.to_string(),
            observation_kind: observation_kind.to_string(),
            n_obs: n,
            n_draws,
            scale,
            lppd,
            p_waic,
            waic,
            se,
            lo: waic - 1.96 * se,
            hi: waic + 1.96 * se,
            pointwise,
        })
    }

    /// Per-observation contribution on the report's scale.
    pub fn pointwise_waic(&self) -> Vec<f64> {
        let n = self.n_obs as f64;
        self.pointwise
            .iter()
            .map(|p| match self.scale {
                WaicScale::Deviance => -2.0 * p.lppd + 2.0 * p.p_waic,
                WaicScale::Watanabe => -(p.lppd - p.p_waic) / n,
            })
            .collect()
    }
}

/// Evaluates `likelihood` at every retained draw and reduces per observation.
pub fn compute_waic(draws: &PosteriorDraws, likelihood: &dyn PointwiseLogLik, scale: WaicScale) -> Result<WaicReport> {
    let rows: Vec<&[f64]> = draws.rows().collect();
    if rows.len() < 2 {
        return Err(Error::Insufficient(format!("WAIC needs at least 2 draws, got {}", rows.len())));
    }
    let pointwise = (0..likelihood.n_obs())
        .into_par_iter()
        .map(|i| {
            let ll: Vec<f64> = rows.iter().map(|r| likelihood.log_lik(i, r)).collect();
            if let Some(d) = ll.iter().position(|v| *v == f64::NEG_INFINITY || v.is_nan()) {
                return Err(Error::ImpossibleObservation { observation: i, draw: d });
            }
            Ok(PointwiseWaic {
                lppd: log_mean_exp(&ll),
                p_waic: var1(&ll),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    WaicReport::from_pointwise(
        &draws.meta().model,
        &likelihood.observation_digest(),
        likelihood.observation_kind(),
        rows.len(),
        pointwise,
        scale,
    )
}

pub fn fit_waic(fit: &Fit, scale: WaicScale) -> Result<WaicReport> {
    let mut r = compute_waic(&fit.draws, fit.likelihood.as_ref(), scale)?;
    r.model = fit.spec.tag();
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rank: usize,
    pub model: String,
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    /// Difference from the best model.
    pub delta_waic: f64,
    /// Standard error of the paired pointwise difference from the best model.
    pub delta_se: f64,
    /// Interval overlaps the best model's interval.
    pub overlaps_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub comparable: bool,
    pub warnings: Vec<String>,
}

/// Standard error of the paired pointwise difference between two reports.
pub fn paired_difference_se(a: &WaicReport, b: &WaicReport) -> Option<f64> {
    if a.n_obs != b.n_obs || a.scale != b.scale || a.n_obs < 2 {
        return None;
    }
    let d: Vec<f64> = a
        .pointwise_waic()
        .iter()
        .zip(b.pointwise_waic())
        .map(|(x, y)| x - y)
        .collect();
    Some((a.n_obs as f64 * var1(&d)).sqrt())
}

/// Ranks reports by ascending WAIC, ties broken by model tag.
pub fn compare(reports: &[WaicReport], allow_incomparable: bool) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Config(format!("comparison needs at least 2 reports, got {}", reports.len())));
    }
    let first = &reports[0];
    let mut problems = Vec::new();
    for r in &reports[1..] {
        if r.data_digest != first.data_digest || r.n_obs != first.n_obs {
            problems.push(format!(
                "`{}` ({} {} observations) and `{}` ({} {} observations) were scored on different observation sets",
                first.model, first.n_obs, first.observation_kind, r.model, r.n_obs, r.observation_kind
            ));
        }
        if r.scale != first.scale {
            problems.push(format!("`{}` and `{}` use different WAIC scales", first.model, r.model));
        }
    }
    let comparable = problems.is_empty();
    if !comparable && !allow_incomparable {
        return Err(Error::Incomparable(format!(
            "{}; WAIC values computed on different observations cannot be ranked against each other",
            problems.join("; ")
        )));
    }
    let mut order: Vec<&WaicReport> = reports.iter().collect();
    order.sort_by(|a, b| a.waic.total_cmp(&b.waic).then_with(|| a.model.cmp(&b.model)));
    let best = order[0];
    let rows = order
        .iter()
        .enumerate()
        .map(|(i, r)| ComparisonRow {
            rank: i + 1,
            model: r.model.clone(),
            lppd: r.lppd,
            p_waic: r.p_waic,
            waic: r.waic,
            se: r.se,
            lo: r.lo,
            hi: r.hi,
            delta_waic: r.waic - best.waic,
            delta_se: if comparable { paired_difference_se(r, best).unwrap_or(f64::NAN) } else { f64::NAN },
            overlaps_best: r.lo <= best.hi && best.lo <= r.hi,
        })
        .collect();
    Ok(Comparison {
        rows,
        comparable,
        warnings: problems,
    })
}

impl Comparison {
    /// Plain-text table; the best model is wrapped in `**`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<4} {:<34} {:>12} {:>10} {:>12} {:>10} {:>10} {:>8}",
            "rank", "model", "lppd", "p_waic", "waic", "se", "delta", "overlap"
        );
        for r in &self.rows {
            let name = if r.rank == 1 { format!("**{}**", r.model) } else { r.model.clone() };
            let _ = writeln!(
                s,
                "{:<4} {:<34} {:>12.3} {:>10.3} {:>12.3} {:>10.3} {:>10.3} {:>8}",
                r.rank,
                name,
                r.lppd,
                r.p_waic,
                r.waic,
                r.se,
                r.delta_waic,
                if r.rank == 1 { "-" } else if r.overlaps_best { "yes" } else { "no" }
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
