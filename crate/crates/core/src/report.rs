//! Plot-ready CSV tables for fitted models and the empirical curves.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{GroupSummaries, Grouping, ObservationTable};
use crate::error::{Error, Result};
use crate::estimators::{
    anova_estimates, log_spaced, moment_estimates, sigma_shrinkage_curve, tau_profile, theta_shrinkage_curve, TauGrid,
};
use crate::mcmc::PosteriorDraws;
use crate::models::regression::{regression_bands, slope_table, BandTarget, Interval};
use crate::models::{Likelihood, ModelSpec, RegressionVariant};

pub const LEVEL: f64 = 0.95;
pub const BAND_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRow {
    pub group: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// A curve point or a vertical marker on the same axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub row_type: &'static str,
    pub x: f64,
    pub group: String,
    pub value: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn intervals(draws: &PosteriorDraws, prefix: &str, labels: &[String]) -> Result<Vec<IntervalRow>> {
    labels
        .iter()
        .map(|l| {
            let name = format!("{prefix}[{l}]");
            let col = match draws.column_named(&name) {
                Ok(c) => c,
                Err(_) => draws.column_named(prefix)?,
            };
            let iv = Interval::from_draws(&col, LEVEL);
            Ok(IntervalRow {
                group: l.clone(),
                mean: iv.mean,
                lo: iv.lo,
                hi: iv.hi,
            })
        })
        .collect()
}

/// τ profile rows plus `tau_map`, `lo` and `hi` markers.
pub fn tau_profile_rows(summaries: &GroupSummaries) -> Result<Vec<CurveRow>> {
    let a = anova_estimates(summaries)?;
    let p = tau_profile(summaries, a.sigma2_hat, &TauGrid::Default, 0.05)?;
    let mut rows: Vec<CurveRow> = p
        .grid
        .iter()
        .zip(&p.log_post)
        .map(|(&t, &lp)| CurveRow {
            row_type: "curve",
            x: t,
            group: String::new(),
            value: Some(lp),
        })
        .collect();
    for (name, x) in [("tau_map", p.tau_map), ("lo", p.interval.0), ("hi", p.interval.1)] {
        rows.push(CurveRow {
            row_type: "marker",
            x,
            group: name.into(),
            value: None,
        });
    }
    Ok(rows)
}

/// `E(θ_j | τ)` over the τ grid with a `tau_map` marker.
pub fn theta_shrinkage_rows(summaries: &GroupSummaries) -> Result<Vec<CurveRow>> {
    let a = anova_estimates(summaries)?;
    let p = tau_profile(summaries, a.sigma2_hat, &TauGrid::Default, 0.05)?;
    let c = theta_shrinkage_curve(summaries, a.sigma2_hat, &p.grid)?;
    let mut rows = Vec::new();
    for (j, g) in summaries.groups.iter().enumerate() {
        for (t, m) in c.tau.iter().zip(&c.mean[j]) {
            rows.push(CurveRow {
                row_type: "curve",
                x: *t,
                group: g.label.clone(),
                value: Some(*m),
            });
        }
    }
    rows.push(CurveRow {
        row_type: "marker",
        x: p.tau_map,
        group: "tau_map".into(),
        value: None,
    });
    Ok(rows)
}

/// `E(σ_j² | ν)` on a log grid with a `nu_hat` marker.
pub fn sigma_shrinkage_rows(summaries: &GroupSummaries) -> Result<Vec<CurveRow>> {
    let m = moment_estimates(&summaries.vars())?;
    let nus = log_spaced(0.1, 100.0 * m.nu_hat.max(1.0), 400);
    let n: Vec<usize> = summaries.groups.iter().map(|g| g.n).collect();
    let c = sigma_shrinkage_curve(&summaries.vars(), &n, m.rho2_hat, &nus)?;
    let mut rows = Vec::new();
    for (j, g) in summaries.groups.iter().enumerate() {
        for (nu, v) in c.nu.iter().zip(&c.mean[j]) {
            rows.push(CurveRow {
                row_type: "curve",
                x: *nu,
                group: g.label.clone(),
                value: Some(*v),
            });
        }
    }
    rows.push(CurveRow {
        row_type: "marker",
        x: m.nu_hat,
        group: "nu_hat".into(),
        value: None,
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SlopeCsvRow {
    group: String,
    alpha_mean: f64,
    alpha_lo: f64,
    alpha_hi: f64,
    beta_mean: f64,
    beta_lo: f64,
    beta_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CellRow {
    group: String,
    level: String,
    mean: f64,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ContrastRow {
    level_a: String,
    level_b: String,
    mean: f64,
    lo: f64,
    hi: f64,
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Everything needed to rebuild the report of one fit.
pub struct ReportInput<'a> {
    pub spec: ModelSpec,
    pub draws: &'a PosteriorDraws,
    pub table: &'a ObservationTable,
    pub likelihood: Likelihood,
    pub seed: u64,
}

/// Writes every table that applies to the fit; returns the paths and any
/// curves that could not be computed.
pub fn write_report(dir: &Path, input: &ReportInput<'_>) -> Result<(Vec<PathBuf>, Vec<String>)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut warnings = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = dir.join(name);
        f(&p)?;
        written.push(p);
        Ok(())
    };
    let draws = input.draws;
    let data = input.table.grouped(Grouping::Group)?;
    let labels = data.labels.clone();
    match input.spec {
        ModelSpec::Regression { variant } => {
            let slopes = slope_table(draws, variant, &data, LEVEL)?;
            let rows: Vec<SlopeCsvRow> = slopes
                .into_iter()
                .map(|s| SlopeCsvRow {
                    group: s.group,
                    alpha_mean: s.alpha.mean,
                    alpha_lo: s.alpha.lo,
                    alpha_hi: s.alpha.hi,
                    beta_mean: s.beta.mean,
                    beta_lo: s.beta.lo,
                    beta_hi: s.beta.hi,
                })
                .collect();
            emit("slopes.csv", &|p| write_csv(p, &rows))?;
            let lik = if variant == RegressionVariant::VaryingBoth {
                input.likelihood
            } else {
                Likelihood::Normal
            };
            let x = data.covariate()?;
            let range = |v: &[f64]| {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                crate::models::regression::linear_grid(lo, hi, BAND_POINTS)
            };
            if variant != RegressionVariant::Separate {
                let all: Vec<f64> = x.iter().flatten().copied().collect();
                let b = regression_bands(draws, variant, &data, BandTarget::National, &range(&all), lik, LEVEL, input.seed)?;
                emit("bands_national.csv", &|p| write_csv(p, &b))?;
            }
            if variant != RegressionVariant::National {
                for (j, l) in labels.iter().enumerate() {
                    let b = regression_bands(draws, variant, &data, BandTarget::Group(j), &range(&x[j]), lik, LEVEL, input.seed)?;
                    emit(&format!("bands_{}.csv", file_safe(l)), &|p| write_csv(p, &b))?;
                }
            }
        }
        spec => {
            let theta = intervals(draws, "theta", &labels)?;
            emit("theta_intervals.csv", &|p| write_csv(p, &theta))?;
            if spec != ModelSpec::TwoCluster {
                let sigma = intervals(draws, "sigma2", &labels)?;
                emit("sigma_intervals.csv", &|p| write_csv(p, &sigma))?;
            }
            let summaries = data.summaries();
            match tau_profile_rows(&summaries) {
                Ok(r) => emit("tau_profile.csv", &|p| write_csv(p, &r))?,
                Err(e) => warnings.push(format!("tau_profile.csv skipped: {e}")),
            }
            match theta_shrinkage_rows(&summaries) {
                Ok(r) => emit("shrinkage_theta.csv", &|p| write_csv(p, &r))?,
                Err(e) => warnings.push(format!("shrinkage_theta.csv skipped: {e}")),
            }
            match sigma_shrinkage_rows(&summaries) {
                Ok(r) => emit("shrinkage_sigma.csv", &|p| write_csv(p, &r))?,
                Err(e) => warnings.push(format!("shrinkage_sigma.csv skipped: {e}")),
            }
            if spec == ModelSpec::TwoCluster {
                let cells = input.table.cells()?;
                let mut cell_rows = Vec::new();
                for g in &cells.groups {
                    let t = draws.column_named(&format!("theta[{g}]"))?;
                    for l in &cells.levels {
                        let lam = draws.column_named(&format!("lambda[{l}]"))?;
                        let v: Vec<f64> = t.iter().zip(&lam).map(|(a, b)| a + b).collect();
                        let iv = Interval::from_draws(&v, LEVEL);
                        cell_rows.push(CellRow {
                            group: g.clone(),
                            level: l.clone(),
                            mean: iv.mean,
                            lo: iv.lo,
                            hi: iv.hi,
                        });
                    }
                }
                emit("cell_means.csv", &|p| write_csv(p, &cell_rows))?;
                let mu = draws.column_named("mu")?;
                let mut level_rows = Vec::new();
                let lambdas: Vec<Vec<f64>> = cells
                    .levels
                    .iter()
                    .map(|l| draws.column_named(&format!("lambda[{l}]")))
                    .collect::<Result<_>>()?;
                for (l, lam) in cells.levels.iter().zip(&lambdas) {
                    let v: Vec<f64> = mu.iter().zip(lam).map(|(a, b)| a + b).collect();
                    let iv = Interval::from_draws(&v, LEVEL);
                    level_rows.push(IntervalRow {
                        group: l.clone(),
                        mean: iv.mean,
                        lo: iv.lo,
                        hi: iv.hi,
                    });
                }
                emit("level_means.csv", &|p| write_csv(p, &level_rows))?;
                let mut contrasts = Vec::new();
                for a in 0..cells.levels.len() {
                    for b in 0..cells.levels.len() {
                        if a == b {
                            continue;
                        }
                        let v: Vec<f64> = lambdas[a].iter().zip(&lambdas[b]).map(|(x, y)| x - y).collect();
                        let iv = Interval::from_draws(&v, LEVEL);
                        contrasts.push(ContrastRow {
                            level_a: cells.levels[a].clone(),
                            level_b: cells.levels[b].clone(),
                            mean: iv.mean,
                            lo: iv.lo,
                            hi: iv.hi,
                        });
                    }
                }
                emit("level_contrasts.csv", &|p| write_csv(p, &contrasts))?;
            }
        }
    }
    Ok((written, warnings))
}
