//! Empirical hyperparameter estimators: ANOVA variance components, method of
//! moments for the inverse-χ² variance prior, the conditional profile of τ and
//! the conditional-mean shrinkage curves.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::GroupSummaries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEstimates {
    pub ms_w: f64,
    pub ms_b: f64,
    pub sigma2_hat: f64,
    /// `(MS_B - MS_W) / n̄`, possibly negative.
    pub tau2_hat: f64,
    pub tau2_hat_truncated: f64,
    pub nbar: f64,
}

pub fn anova_estimates(summaries: &GroupSummaries) -> Result<AnovaEstimates> {
    let j = summaries.len();
    if j < 2 {
        return Err(Error::Insufficient(format!("ANOVA needs at least 2 groups, got {j}")));
    }
    let small: Vec<String> = summaries
        .groups
        .iter()
        .filter(|g| g.n < 2)
        .map(|g| g.label.clone())
        .collect();
    if !small.is_empty() {
        return Err(Error::Insufficient(format!(
            "ANOVA needs n_j >= 2 in every group; too small: {}",
            small.join(", ")
        )));
    }
    let n: f64 = summaries.n().iter().sum();
    let jf = j as f64;
    let nbar = n / jf;
    let grand = summaries.weighted_grand_mean();
    let ssw: f64 = summaries.groups.iter().map(|g| (g.n as f64 - 1.0) * g.var).sum();
    let ssb: f64 = summaries
        .groups
        .iter()
        .map(|g| g.n as f64 * (g.mean - grand).powi(2))
        .sum();
    let ms_w = ssw / (n - jf);
    let ms_b = ssb / (jf - 1.0);
    let tau2_hat = (ms_b - ms_w) / nbar;
    Ok(AnovaEstimates {
        ms_w,
        ms_b,
        sigma2_hat: ms_w,
        tau2_hat,
        tau2_hat_truncated: tau2_hat.max(0.0),
        nbar,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub nu_hat: f64,
    pub rho2_hat: f64,
    pub e_s2: f64,
    pub v_s2: f64,
}

impl MomentEstimates {
    /// Estimates from the first two moments `E`, `V` of the group variances.
    pub fn from_moments(e: f64, v: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Domain(format!("mean of group variances must be positive, got {e}")));
        }
        if v == 0.0 {
            return Err(Error::ZeroVarianceOfVariances);
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("variance of group variances must be positive, got {v}")));
        }
        let e2 = e * e;
        Ok(Self {
            nu_hat: 2.0 * e2 / v + 4.0,
            rho2_hat: (2.0 * e2 + 2.0 * v) / (2.0 * e2 + 4.0 * v) * e,
            e_s2: e,
            v_s2: v,
        })
    }
}

/// Method-of-moments `ν̂`, `ρ̂²` from group sample variances; the variance of
/// the list uses divisor `J`.
pub fn moment_estimates(s2: &[f64]) -> Result<MomentEstimates> {
    if s2.len() < 2 {
        return Err(Error::Insufficient(format!(
            "moment estimates need at least 2 group variances, got {}",
            s2.len()
        )));
    }
    if let Some(bad) = s2.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("group variances must be positive, got {bad}")));
    }
    let j = s2.len() as f64;
    let e = s2.iter().sum::<f64>() / j;
    let v = s2.iter().map(|s| (s - e).powi(2)).sum::<f64>() / j;
    MomentEstimates::from_moments(e, v)
}

/// Prior on τ used for the conditional profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauPrior {
    /// `p(τ) ∝ 1` on `(0, ∞)`.
    #[default]
    Uniform,
    /// `p(τ) ∝ 1/τ`; improper at the origin, kept for diagnostics.
    InverseTau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TauGrid {
    /// 400 log-spaced points on `[τ̂/100, 10 τ̂]` with `τ̂` from ANOVA.
    Default,
    LogSpaced { lo: f64, hi: f64, n: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauProfile {
    pub grid: Vec<f64>,
    pub log_post: Vec<f64>,
    pub tau_map: f64,
    pub interval: (f64, f64),
    pub alpha: f64,
    pub threshold_quantile: f64,
    /// The maximum sits at the first or last grid point.
    pub mode_at_endpoint: bool,
    /// The interval runs off the grid on the lower or upper side.
    pub interval_truncated: (bool, bool),
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Precision-weighted `μ̂(τ)` and `V_μ(τ)` given `σ̄_j² = σ²/n_j`.
pub fn mu_hat_given_tau(summaries: &GroupSummaries, sigma2: f64, tau: f64) -> (f64, f64) {
    let t2 = tau * tau;
    let (mut num, mut den) = (0.0, 0.0);
    for g in &summaries.groups {
        let w = 1.0 / (sigma2 / g.n as f64 + t2);
        num += w * g.mean;
        den += w;
    }
    (num / den, 1.0 / den)
}

/// Unnormalized `log p(τ | σ², Y)`.
pub fn tau_log_posterior(summaries: &GroupSummaries, sigma2: f64, tau: f64, prior: TauPrior) -> f64 {
    let (mu, v_mu) = mu_hat_given_tau(summaries, sigma2, tau);
    let t2 = tau * tau;
    let mut lp = 0.5 * v_mu.ln();
    for g in &summaries.groups {
        let d = sigma2 / g.n as f64 + t2;
        lp -= 0.5 * d.ln() + (g.mean - mu).powi(2) / (2.0 * d);
    }
    match prior {
        TauPrior::Uniform => lp,
        TauPrior::InverseTau => lp - tau.ln(),
    }
}

fn default_tau_scale(summaries: &GroupSummaries, sigma2: f64) -> f64 {
    let tau2 = anova_estimates(summaries).map(|a| a.tau2_hat).unwrap_or_else(|_| {
        let m = summaries.means();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m.len() as f64 - 1.0).max(1.0)
    });
    let nmax = summaries.groups.iter().map(|g| g.n).max().unwrap_or(1) as f64;
    let eps = 0.1 * (sigma2 / nmax).sqrt();
    if tau2 > eps * eps {
        tau2.sqrt()
    } else {
        eps
    }
}

pub fn tau_profile(summaries: &GroupSummaries, sigma2: f64, grid: &TauGrid, alpha: f64) -> Result<TauProfile> {
    tau_profile_with_prior(summaries, sigma2, grid, alpha, TauPrior::Uniform)
}

pub fn tau_profile_with_prior(
    summaries: &GroupSummaries,
    sigma2: f64,
    grid: &TauGrid,
    alpha: f64,
    prior: TauPrior,
) -> Result<TauProfile> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if summaries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let grid = match grid {
        TauGrid::Default => {
            let t = default_tau_scale(summaries, sigma2);
            log_spaced(t / 100.0, 10.0 * t, 400)
        }
        TauGrid::LogSpaced { lo, hi, n } => {
            if !(*lo > 0.0 && hi > lo && *n >= 2) {
                return Err(Error::Config(format!("invalid tau grid [{lo}, {hi}] with {n} points")));
            }
            log_spaced(*lo, *hi, *n)
        }
        TauGrid::Explicit(g) => {
            if g.len() < 2 || g[0] <= 0.0 || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("tau grid must be >= 2 ascending positive values".into()));
            }
            g.clone()
        }
    };
    let log_post: Vec<f64> = grid
        .iter()
        .map(|&t| tau_log_posterior(summaries, sigma2, t, prior))
        .collect();
    let (imax, lmax) = log_post
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if !lmax.is_finite() {
        return Err(Error::EmptyGrid {
            lo: grid[0],
            hi: grid[grid.len() - 1],
        });
    }
    let q = ChiSquared::new(1.0)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(1.0 - alpha);
    let thr = lmax - q / 2.0;
    let crossing = |a: usize, b: usize| {
        let (x0, x1, y0, y1) = (grid[a], grid[b], log_post[a], log_post[b]);
        x0 + (thr - y0) * (x1 - x0) / (y1 - y0)
    };
    let mut lo = (grid[0], true);
    for i in (0..imax).rev() {
        if log_post[i] < thr {
            lo = (crossing(i, i + 1), false);
            break;
        }
    }
    let mut hi = (grid[grid.len() - 1], true);
    for i in imax + 1..grid.len() {
        if log_post[i] < thr {
            hi = (crossing(i - 1, i), false);
            break;
        }
    }
    Ok(TauProfile {
        tau_map: grid[imax],
        mode_at_endpoint: imax == 0 || imax == grid.len() - 1,
        interval: (lo.0, hi.0),
        interval_truncated: (lo.1, hi.1),
        alpha,
        threshold_quantile: q,
        grid,
        log_post,
    })
}

/// `E(θ_j | τ, σ², Y)` and `V(θ_j | τ, σ², Y)` over a τ grid, indexed `[j][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCurves {
    pub tau: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

pub fn theta_shrinkage_curve(summaries: &GroupSummaries, sigma2: f64, taus: &[f64]) -> Result<ThetaCurves> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Domain(format!("tau grid values must be positive, got {t}")));
    }
    let j = summaries.len();
    let mut mean = vec![Vec::with_capacity(taus.len()); j];
    let mut var = vec![Vec::with_capacity(taus.len()); j];
    for &tau in taus {
        let (mu, v_mu) = mu_hat_given_tau(summaries, sigma2, tau);
        let t2 = tau * tau;
        for (i, g) in summaries.groups.iter().enumerate() {
            let sb = sigma2 / g.n as f64;
            // weight on μ̂
            let w = sb / (sb + t2);
            mean[i].push((1.0 - w) * g.mean + w * mu);
            var[i].push(sb * t2 / (sb + t2) + w * w * v_mu);
        }
    }
    Ok(ThetaCurves {
        tau: taus.to_vec(),
        mean,
        var,
    })
}

/// `E(σ_j² | θ, ν, ρ², Y)` over a ν grid, indexed `[j][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCurves {
    pub nu: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
}

pub fn sigma_shrinkage_curve(v: &[f64], n: &[usize], rho2: f64, nus: &[f64]) -> Result<SigmaCurves> {
    if v.len() != n.len() {
        return Err(Error::Config("v and n lists differ in length".into()));
    }
    if let Some(k) = n.iter().position(|&nj| nj <= 2) {
        return Err(Error::Insufficient(format!(
            "sigma shrinkage needs n_j >= 3; group {} has {}",
            k + 1,
            n[k]
        )));
    }
    if !(rho2 > 0.0) {
        return Err(Error::Domain(format!("rho2 must be positive, got {rho2}")));
    }
    if let Some(nu) = nus.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("nu grid values must be non-negative, got {nu}")));
    }
    let mean = v
        .iter()
        .zip(n)
        .map(|(&vj, &nj)| {
            let nj = nj as f64;
            nus.iter()
                .map(|&nu| {
                    if nu.is_infinite() {
                        rho2
                    } else {
                        (nu * rho2 + nj * vj) / (nu + nj - 2.0)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SigmaCurves { nu: nus.to_vec(), mean })
}

/// Everything the `estimate` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateBundle {
    pub anova: Option<AnovaEstimates>,
    pub moments: Option<MomentEstimates>,
    pub tau_profile: Option<TauProfile>,
    pub warnings: Vec<String>,
}

pub fn estimate_all(summaries: &GroupSummaries) -> EstimateBundle {
    let mut warnings = Vec::new();
    let anova = anova_estimates(summaries).map_err(|e| warnings.push(e.to_string())).ok();
    let moments = moment_estimates(&summaries.vars())
        .map_err(|e| warnings.push(e.to_string()))
        .ok();
    let tau_profile = anova.as_ref().and_then(|a| {
        if a.sigma2_hat > 0.0 {
            tau_profile(summaries, a.sigma2_hat, &TauGrid::Default, 0.05)
                .map_err(|e| warnings.push(e.to_string()))
                .ok()
        } else {
            warnings.push("within-group variance is zero; tau profile skipped".into());
            None
        }
    });
    if let Some(p) = &tau_profile {
        if p.mode_at_endpoint {
            warnings.push(format!("tau profile mode {} sits at a grid endpoint", p.tau_map));
        }
    }
    EstimateBundle {
        anova,
        moments,
        tau_profile,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GroupedData;
    use approx::assert_abs_diff_eq;

    fn summ(groups: Vec<Vec<f64>>) -> GroupSummaries {
        GroupedData::from_groups(groups).summaries()
    }

    #[test]
    fn anova_balanced_hand_example() {
        let a = anova_estimates(&summ(vec![vec![0.0, 0.0], vec![2.0, 2.0]])).unwrap();
        assert_eq!(a.ms_w, 0.0);
        assert_eq!(a.ms_b, 4.0);
        assert_eq!(a.tau2_hat, 2.0);
        assert_eq!(a.sigma2_hat, a.ms_w);
    }

    #[test]
    fn anova_all_equal() {
        let a = anova_estimates(&summ(vec![vec![3.0; 4], vec![3.0; 4]])).unwrap();
        assert_eq!((a.ms_w, a.ms_b, a.tau2_hat), (0.0, 0.0, 0.0));
    }

    #[test]
    fn anova_negative_tau2_is_kept_with_truncated_companion() {
        let a = anova_estimates(&summ(vec![vec![0.0, 10.0], vec![1.0, 9.0]])).unwrap();
        assert!(a.tau2_hat < 0.0);
        assert_eq!(a.tau2_hat_truncated, 0.0);
    }

    #[test]
    fn anova_rejects_singleton_groups() {
        assert!(anova_estimates(&summ(vec![vec![1.0], vec![2.0, 3.0]])).is_err());
    }

    #[test]
    fn moments_direct_substitution() {
        let m = MomentEstimates::from_moments(1.0, 2.0).unwrap();
        assert_abs_diff_eq!(m.nu_hat, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rho2_hat, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn moments_zero_variance_error() {
        assert!(matches!(moment_estimates(&[1.0, 1.0, 1.0]), Err(Error::ZeroVarianceOfVariances)));
    }

    #[test]
    fn moments_use_population_variance() {
        let m = moment_estimates(&[1.0, 3.0]).unwrap();
        assert_eq!(m.e_s2, 2.0);
        assert_eq!(m.v_s2, 1.0);
    }

    #[test]
    fn theta_curve_hand_example() {
        let s = summ(vec![vec![0.0], vec![2.0]]);
        let c = theta_shrinkage_curve(&s, 1.0, &[1.0]).unwrap();
        assert_abs_diff_eq!(c.mean[0][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.mean[1][0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn sigma_curve_substitutions() {
        let c = sigma_shrinkage_curve(&[4.0], &[10], 1.0, &[0.0, 2.0, f64::INFINITY]).unwrap();
        assert_abs_diff_eq!(c.mean[0][0], 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.mean[0][1], 4.2, epsilon = 1e-15);
        assert_eq!(c.mean[0][2], 1.0);
    }

    #[test]
    fn sigma_curve_rejects_small_groups() {
        assert!(sigma_shrinkage_curve(&[4.0], &[2], 1.0, &[1.0]).is_err());
    }

    #[test]
    fn symmetric_profile_is_finite_at_zero_with_positive_mode() {
        let s = summ(vec![vec![-1.0], vec![1.0]]);
        let grid = log_spaced(1e-6, 20.0, 2000);
        let p = tau_profile(&s, 1.0, &TauGrid::Explicit(grid), 0.05).unwrap();
        assert!(p.log_post[0].is_finite());
        assert!(p.tau_map > 1e-3);
        assert!(!p.mode_at_endpoint);
    }

    #[test]
    fn interval_uses_chi2_quantile_and_contains_mode() {
        let s = summ(vec![vec![0.0, 1.0, 2.0], vec![5.0, 6.0, 7.0], vec![10.0, 11.0, 12.0]]);
        let p = tau_profile(&s, 1.0, &TauGrid::Default, 0.05).unwrap();
        assert_abs_diff_eq!(p.threshold_quantile, 3.8415, epsilon = 1e-4);
        assert!(p.interval.0 <= p.tau_map && p.tau_map <= p.interval.1);
    }

    #[test]
    fn inverse_tau_prior_diverges_at_zero() {
        let s = summ(vec![vec![-1.0], vec![1.0]]);
        let lp: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
            .iter()
            .map(|&t| tau_log_posterior(&s, 1.0, t, TauPrior::InverseTau))
            .collect();
        assert!(lp.windows(2).all(|w| w[1] > w[0] + 4.0));
    }
}
