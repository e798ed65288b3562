//! One-cluster hierarchical normal models.
//!
//! Sweep order, common variance: `θ`, `μ`, `σ²`, `τ²`.
//! Sweep order, varying variances: `θ`, `μ`, `τ²`, `σ_j²`, `ρ²`, then `ν` when
//! it is sampled.

use statrs::function::gamma::ln_gamma;

use super::{group_observation_digest, mean, names_indexed, sample_var, Fit, GroupNormalLik, GroupStats, ModelSpec, NuStrategy};
use crate::data::GroupedData;
use crate::dist::{sample_gamma, sample_normal, sample_scaled_inv_chi2, ScaledInvChi2Params};
use crate::error::{Error, Result};
use crate::estimators::{log_spaced, moment_estimates};
use crate::mcmc::kernels::sample_log_weights;
use crate::mcmc::{run_gibbs, BoxedKernel, ChainConfig, Domain, FnKernel, GibbsModel, Kernel, MetropolisKernel, Phase, RunOptions, Transform};
use crate::random::RandomStream;

pub(crate) fn require_groups(j: usize, min: usize) -> Result<()> {
    if j < min {
        Err(Error::Insufficient(format!(
            "hierarchical models need at least {min} groups, got {j}; use no-pooling or complete-pooling instead"
        )))
    } else {
        Ok(())
    }
}

/// `θ̂_j` and `V_θj` for a normal mean with prior `N(μ, τ²)` and data
/// precision `1/σ̄_j²`.
#[inline]
pub fn theta_conditional(ybar: f64, sigma_bar2: f64, mu: f64, tau2: f64) -> (f64, f64) {
    let prec = 1.0 / sigma_bar2 + 1.0 / tau2;
    ((ybar / sigma_bar2 + mu / tau2) / prec, 1.0 / prec)
}

/// Draws `τ² ~ Inv-χ²(J-1, Σ(θ_j-μ)²/(J-1))`.
pub(crate) fn draw_tau2(theta: &[f64], mu: f64, r: &mut RandomStream) -> Result<f64> {
    let jm1 = theta.len() as f64 - 1.0;
    let ss: f64 = theta.iter().map(|t| (t - mu).powi(2)).sum();
    sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(jm1, ss / jm1)?)
}

/// Draws `ρ² ~ Gamma(Jν/2, (ν/2) Σ 1/σ_j²)`.
pub(crate) fn draw_rho2(sigma2: &[f64], nu: f64, r: &mut RandomStream) -> Result<f64> {
    let j = sigma2.len() as f64;
    let inv: f64 = sigma2.iter().map(|s| 1.0 / s).sum();
    sample_gamma(r, j * nu / 2.0, nu / 2.0 * inv)
}

/// ν-dependent part of `Π Inv-χ²(σ_j²; ν, ρ²)`, with `ω = ν/2`.
pub fn nu_log_conditional(nu: f64, j: f64, rho2: f64, sum_inv_s2: f64, sum_log_s2: f64) -> f64 {
    if !(nu > 0.0) {
        return f64::NEG_INFINITY;
    }
    let w = nu / 2.0;
    j * w * w.ln() - j * ln_gamma(w) + j * w * rho2.ln() - w * rho2 * sum_inv_s2 - w * sum_log_s2
}

/// Sampler for `ν` under a power or exponential prior, reading the current
/// group variances and `ρ²` from the state.
pub(crate) enum NuSampler {
    Grid {
        grid: Vec<f64>,
        /// `log p(ν) + log cell width + Jω log ω - J log Γ(ω)` per point
        base: Vec<f64>,
    },
    Exponential {
        rate: f64,
        scale: f64,
    },
}

impl NuSampler {
    pub fn power(h: f64, nu_hat: f64, j: f64, probe: Option<(f64, f64, f64)>, warnings: &mut Vec<String>) -> Self {
        let build = |lo: f64, hi: f64| {
            let grid = log_spaced(lo, hi, 600);
            let n = grid.len();
            let base = (0..n)
                .map(|i| {
                    let a = if i == 0 { grid[0] } else { (grid[i - 1] * grid[i]).sqrt() };
                    let b = if i == n - 1 { grid[n - 1] } else { (grid[i] * grid[i + 1]).sqrt() };
                    let nu = grid[i];
                    let w = nu / 2.0;
                    -h * nu.ln() + (b - a).ln() + j * w * w.ln() - j * ln_gamma(w)
                })
                .collect::<Vec<f64>>();
            (grid, base)
        };
        let (mut grid, mut base) = build(0.1, 50.0 * nu_hat);
        if let Some((rho2, inv, logs)) = probe {
            let at_edge = |grid: &[f64], base: &[f64]| {
                let lw: Vec<f64> = grid
                    .iter()
                    .zip(base)
                    .map(|(&nu, b)| b + j * nu / 2.0 * rho2.ln() - nu / 2.0 * (rho2 * inv + logs))
                    .collect();
                let imax = lw
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a })
                    .0;
                imax == 0 || imax == lw.len() - 1
            };
            if at_edge(&grid, &base) {
                let (g2, b2) = build(0.01, 500.0 * nu_hat);
                if at_edge(&g2, &b2) {
                    warnings.push(format!(
                        "nu grid [{}, {}] still has its mode at an endpoint",
                        g2[0],
                        g2[g2.len() - 1]
                    ));
                } else {
                    warnings.push(format!("nu grid widened to [{}, {}]", g2[0], g2[g2.len() - 1]));
                }
                grid = g2;
                base = b2;
            }
        }
        NuSampler::Grid { grid, base }
    }

    pub fn exponential(nu_hat: f64) -> Self {
        NuSampler::Exponential {
            rate: 1.0 / nu_hat,
            scale: 0.5,
        }
    }
}

/// Kernel for ν over the inverse-χ² prior of a set of variances.
pub(crate) struct NuKernel<'a> {
    name: String,
    nu: usize,
    rho2: usize,
    /// State indices of the variances sharing this `ν`.
    vars: Vec<usize>,
    sampler: &'a NuSampler,
    mh: Option<Box<dyn Kernel + 'a>>,
}

impl<'a> NuKernel<'a> {
    pub fn new(name: &str, nu: usize, rho2: usize, vars: Vec<usize>, sampler: &'a NuSampler) -> Self {
        let mh: Option<Box<dyn Kernel + 'a>> = match sampler {
            NuSampler::Exponential { rate, scale } => {
                let rate = *rate;
                let vars = vars.clone();
                Some(Box::new(MetropolisKernel::new(
                    name,
                    nu,
                    Transform::Positive,
                    *scale,
                    move |s: &[f64], v: f64| {
                        let j = vars.len() as f64;
                        let inv: f64 = vars.iter().map(|&i| 1.0 / s[i]).sum();
                        let logs: f64 = vars.iter().map(|&i| s[i].ln()).sum();
                        -rate * v + nu_log_conditional(v, j, s[rho2], inv, logs)
                    },
                )))
            }
            NuSampler::Grid { .. } => None,
        };
        Self {
            name: name.to_string(),
            nu,
            rho2,
            vars,
            sampler,
            mh,
        }
    }
}

impl Kernel for NuKernel<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn updates(&self) -> Vec<usize> {
        vec![self.nu]
    }

    fn step(&mut self, state: &mut [f64], stream: &mut RandomStream, phase: Phase) -> Result<()> {
        if let Some(mh) = self.mh.as_mut() {
            return mh.step(state, stream, phase);
        }
        let NuSampler::Grid { grid, base } = self.sampler else {
            unreachable!()
        };
        let j = self.vars.len() as f64;
        let rho2 = state[self.rho2];
        let inv: f64 = self.vars.iter().map(|&i| 1.0 / state[i]).sum();
        let logs: f64 = self.vars.iter().map(|&i| state[i].ln()).sum();
        let slope = j * rho2.ln() / 2.0 - (rho2 * inv + logs) / 2.0;
        let lw: Vec<f64> = grid.iter().zip(base).map(|(&nu, b)| b + nu * slope).collect();
        let i = sample_log_weights(&lw, stream).ok_or(Error::EmptyGrid {
            lo: grid[0],
            hi: grid[grid.len() - 1],
        })?;
        state[self.nu] = grid[i];
        Ok(())
    }

    fn acceptance(&self) -> Option<f64> {
        self.mh.as_ref().and_then(|m| m.acceptance())
    }
}

fn positive_floor(v: f64, floor: f64) -> f64 {
    if v > floor && v.is_finite() {
        v
    } else {
        floor
    }
}

/// Hierarchical model with a common within-group variance.
pub struct HierCommon {
    labels: Vec<String>,
    stats: GroupStats,
    digest: String,
    pooled_var: f64,
}

impl HierCommon {
    pub fn new(data: &GroupedData) -> Result<Self> {
        require_groups(data.n_groups(), 3)?;
        let all = data.all_y();
        let pooled_var = sample_var(&all);
        if pooled_var <= 0.0 {
            return Err(Error::DegenerateVariance {
                group: "<pooled>".into(),
                reason: "all responses are identical".into(),
            });
        }
        Ok(Self {
            labels: data.labels.clone(),
            stats: GroupStats::new(data),
            digest: group_observation_digest(data),
            pooled_var,
        })
    }

    pub fn j(&self) -> usize {
        self.stats.j()
    }

    pub fn mu_index(&self) -> usize {
        self.j()
    }

    pub fn sigma2_index(&self) -> usize {
        self.j() + 1
    }

    pub fn tau2_index(&self) -> usize {
        self.j() + 2
    }
}

impl GibbsModel for HierCommon {
    fn tag(&self) -> String {
        "hier-common".into()
    }

    fn param_names(&self) -> Vec<String> {
        let mut n = names_indexed("theta", &self.labels);
        n.extend(["mu".to_string(), "sigma2".to_string(), "tau2".to_string()]);
        n
    }

    fn domains(&self) -> Vec<Domain> {
        let mut d = vec![Domain::Real; self.j() + 1];
        d.extend([Domain::Positive, Domain::Positive]);
        d
    }

    fn init(&self) -> Vec<f64> {
        let st = &self.stats;
        let mut s = st.ybar.clone();
        s.push(mean(&st.ybar));
        let within: f64 = st.ss.iter().sum::<f64>() / st.n_total();
        s.push(positive_floor(within, 1e-6 * self.pooled_var));
        s.push(positive_floor(sample_var(&st.ybar), 1e-3 * self.pooled_var));
        s
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        let st = &self.stats;
        let j = st.j();
        let (mu, s2, t2) = (self.mu_index(), self.sigma2_index(), self.tau2_index());
        let n = st.n_total();
        Ok(vec![
            Box::new(FnKernel::new("theta", (0..j).collect(), move |s: &mut [f64], r: &mut RandomStream| {
                for k in 0..j {
                    let (m, v) = theta_conditional(st.ybar[k], s[s2] / st.n[k], s[mu], s[t2]);
                    s[k] = sample_normal(r, m, v)?;
                }
                Ok(())
            })),
            Box::new(FnKernel::new("mu", vec![mu], move |s: &mut [f64], r: &mut RandomStream| {
                s[mu] = sample_normal(r, mean(&s[..j]), s[t2] / j as f64)?;
                Ok(())
            })),
            Box::new(FnKernel::new("sigma2", vec![s2], move |s: &mut [f64], r: &mut RandomStream| {
                let ss: f64 = (0..j).map(|k| st.sq_dev(k, s[k])).sum();
                s[s2] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(n, ss / n)?)?;
                Ok(())
            })),
            Box::new(FnKernel::new("tau2", vec![t2], move |s: &mut [f64], r: &mut RandomStream| {
                s[t2] = draw_tau2(&s[..j], s[mu], r)?;
                Ok(())
            })),
        ])
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

pub fn fit_hier_common(data: &GroupedData, config: &ChainConfig) -> Result<Fit> {
    fit_hier_common_with(data, config, &RunOptions::default())
}

pub fn fit_hier_common_with(data: &GroupedData, config: &ChainConfig, options: &RunOptions) -> Result<Fit> {
    let model = HierCommon::new(data)?;
    let (draws, diagnostics) = run_gibbs(&model, config, options)?;
    let j = model.j();
    Ok(Fit {
        spec: ModelSpec::HierCommon,
        draws,
        diagnostics,
        likelihood: Box::new(GroupNormalLik::new(data, (0..j).collect(), vec![model.sigma2_index(); j])),
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierVaryingOptions {
    pub strategy: NuStrategy,
    /// Replaces the method-of-moments `ν̂`.
    pub nu_hat: Option<f64>,
}

impl HierVaryingOptions {
    pub fn new(strategy: NuStrategy) -> Self {
        Self { strategy, nu_hat: None }
    }

    pub fn with_nu_hat(mut self, nu_hat: f64) -> Self {
        self.nu_hat = Some(nu_hat);
        self
    }
}

/// Hierarchical model with group variances `σ_j² ~ Inv-χ²(ν, ρ²)`.
pub struct HierVarying {
    labels: Vec<String>,
    stats: GroupStats,
    digest: String,
    strategy: NuStrategy,
    nu_hat: f64,
    rho2_hat: f64,
    init_s2: Vec<f64>,
    pooled_var: f64,
    nu_sampler: Option<NuSampler>,
    warnings: Vec<String>,
}

impl HierVarying {
    pub fn new(data: &GroupedData, options: HierVaryingOptions) -> Result<Self> {
        options.strategy.validate()?;
        require_groups(data.n_groups(), 3)?;
        let stats = GroupStats::new(data);
        let pooled_var = sample_var(&data.all_y());
        if pooled_var <= 0.0 {
            return Err(Error::DegenerateVariance {
                group: "<pooled>".into(),
                reason: "all responses are identical".into(),
            });
        }
        let s2: Vec<f64> = data.y.iter().map(|y| sample_var(y)).collect();
        let mut warnings = Vec::new();
        let moments = moment_estimates(&s2);
        let (nu_hat, rho2_hat) = match (options.nu_hat, &moments) {
            (Some(nu), Ok(m)) => (nu, m.rho2_hat),
            (Some(nu), Err(_)) => (nu, pooled_var),
            (None, Ok(m)) => (m.nu_hat, m.rho2_hat),
            (None, Err(e)) => match options.strategy {
                NuStrategy::Power { .. } => {
                    warnings.push(format!("moment estimates unavailable ({e}); nu grid centred on 10"));
                    (10.0, pooled_var)
                }
                _ => {
                    return Err(match e {
                        Error::ZeroVarianceOfVariances => Error::ZeroVarianceOfVariances,
                        other => Error::Insufficient(format!("moment estimates failed: {other}")),
                    })
                }
            },
        };
        if !(nu_hat > 0.0 && nu_hat.is_finite()) {
            return Err(Error::Config(format!("nu_hat must be positive, got {nu_hat}")));
        }
        let init_s2: Vec<f64> = s2.iter().map(|v| positive_floor(*v, 1e-3 * pooled_var)).collect();
        let j = stats.j() as f64;
        let probe = {
            let inv: f64 = init_s2.iter().map(|v| 1.0 / v).sum();
            let logs: f64 = init_s2.iter().map(|v| v.ln()).sum();
            (j / inv, inv, logs)
        };
        let nu_sampler = match options.strategy {
            NuStrategy::Fixed => None,
            NuStrategy::Power { h } => Some(NuSampler::power(h, nu_hat, j, Some(probe), &mut warnings)),
            NuStrategy::Exponential => Some(NuSampler::exponential(nu_hat)),
        };
        Ok(Self {
            labels: data.labels.clone(),
            stats,
            digest: group_observation_digest(data),
            strategy: options.strategy,
            nu_hat,
            rho2_hat,
            init_s2,
            pooled_var,
            nu_sampler,
            warnings,
        })
    }

    pub fn j(&self) -> usize {
        self.stats.j()
    }

    pub fn nu_hat(&self) -> f64 {
        self.nu_hat
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn mu_index(&self) -> usize {
        self.j()
    }

    pub fn tau2_index(&self) -> usize {
        self.j() + 1
    }

    pub fn sigma2_index(&self, k: usize) -> usize {
        self.j() + 2 + k
    }

    pub fn rho2_index(&self) -> usize {
        2 * self.j() + 2
    }

    pub fn nu_index(&self) -> Option<usize> {
        self.nu_sampler.as_ref().map(|_| 2 * self.j() + 3)
    }
}

impl GibbsModel for HierVarying {
    fn tag(&self) -> String {
        format!("hier-varying[{}]", self.strategy)
    }

    fn param_names(&self) -> Vec<String> {
        let mut n = names_indexed("theta", &self.labels);
        n.extend(["mu".to_string(), "tau2".to_string()]);
        n.extend(names_indexed("sigma2", &self.labels));
        n.push("rho2".into());
        if self.nu_sampler.is_some() {
            n.push("nu".into());
        }
        n
    }

    fn domains(&self) -> Vec<Domain> {
        let j = self.j();
        let mut d = vec![Domain::Real; j + 1];
        d.extend(std::iter::repeat_n(Domain::Positive, j + 2));
        if self.nu_sampler.is_some() {
            d.push(Domain::Positive);
        }
        d
    }

    fn init(&self) -> Vec<f64> {
        let st = &self.stats;
        let mut s = st.ybar.clone();
        s.push(mean(&st.ybar));
        s.push(positive_floor(sample_var(&st.ybar), 1e-3 * self.pooled_var));
        s.extend(&self.init_s2);
        s.push(self.rho2_hat);
        if self.nu_sampler.is_some() {
            s.push(self.nu_hat);
        }
        s
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        let st = &self.stats;
        let j = st.j();
        let (mu, t2, s0, rho) = (self.mu_index(), self.tau2_index(), self.sigma2_index(0), self.rho2_index());
        let nu_idx = self.nu_index();
        let nu_fixed = self.nu_hat;
        let nu_of = move |s: &[f64]| nu_idx.map_or(nu_fixed, |i| s[i]);
        let mut ks: Vec<BoxedKernel<'_>> = vec![
            Box::new(FnKernel::new("theta", (0..j).collect(), move |s: &mut [f64], r: &mut RandomStream| {
                for k in 0..j {
                    let (m, v) = theta_conditional(st.ybar[k], s[s0 + k] / st.n[k], s[mu], s[t2]);
                    s[k] = sample_normal(r, m, v)?;
                }
                Ok(())
            })),
            Box::new(FnKernel::new("mu", vec![mu], move |s: &mut [f64], r: &mut RandomStream| {
                s[mu] = sample_normal(r, mean(&s[..j]), s[t2] / j as f64)?;
                Ok(())
            })),
            Box::new(FnKernel::new("tau2", vec![t2], move |s: &mut [f64], r: &mut RandomStream| {
                s[t2] = draw_tau2(&s[..j], s[mu], r)?;
                Ok(())
            })),
            Box::new(FnKernel::new(
                "sigma2",
                (s0..s0 + j).collect(),
                move |s: &mut [f64], r: &mut RandomStream| {
                    let nu = nu_of(s);
                    let rho2 = s[rho];
                    for k in 0..j {
                        let nk = st.n[k];
                        let scale = (nu * rho2 + st.sq_dev(k, s[k])) / (nu + nk);
                        s[s0 + k] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(nu + nk, scale)?)?;
                    }
                    Ok(())
                },
            )),
            Box::new(FnKernel::new("rho2", vec![rho], move |s: &mut [f64], r: &mut RandomStream| {
                s[rho] = draw_rho2(&s[s0..s0 + j], nu_of(s), r)?;
                Ok(())
            })),
        ];
        if let (Some(i), Some(sampler)) = (nu_idx, self.nu_sampler.as_ref()) {
            ks.push(Box::new(NuKernel::new("nu", i, rho, (s0..s0 + j).collect(), sampler)));
        }
        Ok(ks)
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

pub fn fit_hier_varying(data: &GroupedData, strategy: NuStrategy, config: &ChainConfig) -> Result<Fit> {
    fit_hier_varying_with(data, HierVaryingOptions::new(strategy), config, &RunOptions::default())
}

pub fn fit_hier_varying_with(
    data: &GroupedData,
    options: HierVaryingOptions,
    config: &ChainConfig,
    run: &RunOptions,
) -> Result<Fit> {
    let model = HierVarying::new(data, options)?;
    let (draws, diagnostics) = run_gibbs(&model, config, run)?;
    let j = model.j();
    Ok(Fit {
        spec: ModelSpec::HierVarying { nu: options.strategy },
        draws,
        diagnostics,
        likelihood: Box::new(GroupNormalLik::new(
            data,
            (0..j).collect(),
            (0..j).map(|k| model.sigma2_index(k)).collect(),
        )),
        warnings: model.warnings.clone(),
    })
}
