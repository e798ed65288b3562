//! Linear regressions on one covariate: national, separate per group,
//! varying intercepts with a common slope, and varying intercepts and slopes
//! with correlated coefficients.

use serde::{Deserialize, Serialize};

use super::hier::{draw_rho2, require_groups, NuKernel, NuSampler};
use super::pooling::run_independent;
use super::{group_observation_digest, mean, names_indexed, sample_var, Fit, Likelihood, ModelSpec, PointwiseLogLik, RegressionVariant};
use crate::data::GroupedData;
use crate::dist::{
    asymmetric_laplace_ln_pdf, laplace_ln_pdf, lkj2_ln_pdf, normal_ln_pdf, sample_bivariate_normal_cov, sample_normal,
    sample_scaled_inv_chi2, scaled_inv_chi2_ln_pdf, standard_normal, ScaledInvChi2Params, Sym2,
};
use crate::error::{Error, Result};
use crate::estimators::{moment_estimates, MomentEstimates};
use crate::mcmc::kernels::AdaptiveScale;
use crate::mcmc::{run_gibbs, PosteriorDraws, BoxedKernel, ChainConfig, Domain, FnKernel, GibbsModel, Kernel, MetropolisKernel, Phase, RunOptions, Transform};
use crate::random::RandomStream;

/// Centred sufficient statistics of one regression data set.
#[derive(Debug, Clone)]
pub(crate) struct RegStats {
    pub n: f64,
    pub xbar: f64,
    pub ybar: f64,
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl RegStats {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = y.len() as f64;
        let xbar = x.iter().sum::<f64>() / n;
        let ybar = y.iter().sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            let (dx, dy) = (a - xbar, b - ybar);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        Self { n, xbar, ybar, sxx, sxy, syy }
    }

    /// `Σ (y - α - β(x - x̄))²`.
    pub fn ssr(&self, alpha: f64, beta: f64) -> f64 {
        (self.syy + self.n * (self.ybar - alpha).powi(2) - 2.0 * beta * self.sxy + beta * beta * self.sxx).max(0.0)
    }

    pub fn ols_slope(&self) -> f64 {
        self.sxy / self.sxx
    }

    pub fn ols_resid_var(&self) -> f64 {
        if self.n > 2.0 {
            self.ssr(self.ybar, self.ols_slope()) / (self.n - 2.0)
        } else {
            0.0
        }
    }
}

fn constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

fn check_group(label: &str, x: &[f64], y: &[f64]) -> Result<()> {
    if y.len() < 3 {
        return Err(Error::Insufficient(format!(
            "group `{label}` has {} observations; regressions need at least 3",
            y.len()
        )));
    }
    if constant(x) {
        return Err(Error::RankDeficient(vec![label.to_string()]));
    }
    Ok(())
}

fn check_all_groups(data: &GroupedData) -> Result<()> {
    let x = data.covariate()?;
    let mut deficient = Vec::new();
    for (j, l) in data.labels.iter().enumerate() {
        match check_group(l, &x[j], &data.y[j]) {
            Err(Error::RankDeficient(g)) => deficient.extend(g),
            Err(e) => return Err(e),
            Ok(()) => {}
        }
    }
    if deficient.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(deficient))
    }
}

/// `Y ~ N(α + β(x - x̄), σ²)` with `p(α, β, σ²) ∝ 1/σ²`.
pub struct LinearNormal {
    names: [String; 3],
    tag: String,
    stats: RegStats,
    floor: f64,
    digest: String,
}

impl LinearNormal {
    pub fn new(label: Option<&str>, x: &[f64], y: &[f64], digest: String, tag: &str) -> Result<Self> {
        check_group(label.unwrap_or("<pooled>"), x, y)?;
        let names = match label {
            Some(l) => [format!("alpha[{l}]"), format!("beta[{l}]"), format!("sigma2[{l}]")],
            None => ["alpha".into(), "beta".into(), "sigma2".into()],
        };
        let stats = RegStats::new(x, y);
        let floor = 1e-6 * (stats.syy / stats.n).max(f64::MIN_POSITIVE);
        Ok(Self {
            names,
            tag: tag.to_string(),
            stats,
            floor,
            digest,
        })
    }

    pub fn xbar(&self) -> f64 {
        self.stats.xbar
    }
}

impl GibbsModel for LinearNormal {
    fn tag(&self) -> String {
        self.tag.clone()
    }

    fn param_names(&self) -> Vec<String> {
        self.names.to_vec()
    }

    fn domains(&self) -> Vec<Domain> {
        vec![Domain::Real, Domain::Real, Domain::Positive]
    }

    fn init(&self) -> Vec<f64> {
        let s = &self.stats;
        vec![s.ybar, s.ols_slope(), s.ols_resid_var().max(self.floor)]
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        let st = &self.stats;
        let suffix = self.names[0].strip_prefix("alpha").unwrap_or("").to_string();
        Ok(vec![
            Box::new(FnKernel::new(format!("alpha{suffix}"), vec![0], move |s: &mut [f64], r: &mut RandomStream| {
                s[0] = sample_normal(r, st.ybar, s[2] / st.n)?;
                Ok(())
            })),
            Box::new(FnKernel::new(format!("beta{suffix}"), vec![1], move |s: &mut [f64], r: &mut RandomStream| {
                s[1] = sample_normal(r, st.ols_slope(), s[2] / st.sxx)?;
                Ok(())
            })),
            Box::new(FnKernel::new(format!("sigma2{suffix}"), vec![2], move |s: &mut [f64], r: &mut RandomStream| {
                let v = st.ssr(s[0], s[1]) / st.n;
                s[2] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(st.n, v)?)?;
                Ok(())
            })),
        ])
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

/// Per-observation likelihood of a regression fit; the columns map each group
/// to its intercept, slope and variance.
pub struct RegressionLik {
    obs: Vec<(usize, f64, f64)>,
    alpha: Vec<usize>,
    beta: Vec<usize>,
    sigma2: Vec<usize>,
    likelihood: Likelihood,
    digest: String,
}

impl RegressionLik {
    fn new(
        data: &GroupedData,
        centers: &[f64],
        cols: (Vec<usize>, Vec<usize>, Vec<usize>),
        likelihood: Likelihood,
    ) -> Result<Self> {
        let x = data.covariate()?;
        let obs = (0..data.n_groups())
            .flat_map(|j| x[j].iter().zip(&data.y[j]).map(move |(&a, &b)| (j, a - centers[j], b)))
            .collect();
        Ok(Self {
            obs,
            alpha: cols.0,
            beta: cols.1,
            sigma2: cols.2,
            likelihood,
            digest: group_observation_digest(data),
        })
    }
}

pub fn residual_ln_pdf(likelihood: Likelihood, y: f64, m: f64, sigma2: f64) -> f64 {
    match likelihood {
        Likelihood::Normal => normal_ln_pdf(y, m, sigma2),
        Likelihood::Laplace => laplace_ln_pdf(y, m, sigma2.sqrt()),
        Likelihood::AsymmetricLaplace { quantile } => asymmetric_laplace_ln_pdf(y, m, sigma2.sqrt(), quantile),
    }
}

impl PointwiseLogLik for RegressionLik {
    fn n_obs(&self) -> usize {
        self.obs.len()
    }

    fn log_lik(&self, i: usize, row: &[f64]) -> f64 {
        let (j, xc, y) = self.obs[i];
        residual_ln_pdf(self.likelihood, y, row[self.alpha[j]] + row[self.beta[j]] * xc, row[self.sigma2[j]])
    }

    fn observation_kind(&self) -> &'static str {
        "group"
    }

    fn observation_digest(&self) -> String {
        self.digest.clone()
    }
}

fn group_centers(data: &GroupedData) -> Result<Vec<f64>> {
    Ok(data.covariate()?.iter().map(|x| mean(x)).collect())
}

pub fn fit_national_regression(data: &GroupedData, config: &ChainConfig) -> Result<Fit> {
    let x = data.all_x().ok_or_else(|| Error::Schema("regression needs a covariate".into()))?;
    let y = data.all_y();
    let model = LinearNormal::new(None, &x, &y, group_observation_digest(data), "regression:national")?;
    let (draws, diagnostics) = run_gibbs(&model, config, &RunOptions::default())?;
    let j = data.n_groups();
    let likelihood = RegressionLik::new(data, &vec![model.xbar(); j], (vec![0; j], vec![1; j], vec![2; j]), Likelihood::Normal)?;
    Ok(Fit {
        spec: ModelSpec::Regression {
            variant: RegressionVariant::National,
        },
        draws,
        diagnostics,
        likelihood: Box::new(likelihood),
        warnings: Vec::new(),
    })
}

pub fn fit_separate_regressions(data: &GroupedData, config: &ChainConfig) -> Result<Fit> {
    check_all_groups(data)?;
    let x = data.covariate()?;
    let models: Vec<LinearNormal> = data
        .labels
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let d = GroupedData::new(vec![l.clone()], vec![data.y[j].clone()]);
            LinearNormal::new(Some(l), &x[j], &data.y[j], group_observation_digest(&d), "regression:separate")
        })
        .collect::<Result<_>>()?;
    let (draws, diagnostics) = run_independent(&models, "regression:separate", group_observation_digest(data), config)?;
    diagnostics.gate(config.force)?;
    let j = data.n_groups();
    let likelihood = RegressionLik::new(
        data,
        &group_centers(data)?,
        ((0..j).map(|k| 3 * k).collect(), (0..j).map(|k| 3 * k + 1).collect(), (0..j).map(|k| 3 * k + 2).collect()),
        Likelihood::Normal,
    )?;
    Ok(Fit {
        spec: ModelSpec::Regression {
            variant: RegressionVariant::Separate,
        },
        draws,
        diagnostics,
        likelihood: Box::new(likelihood),
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionPriorPack {
    pub mu_hat: f64,
    pub sigma2_mu_hat: f64,
    pub tau2_hat: f64,
    pub gamma_hat: f64,
    pub sigma2_gamma_hat: f64,
    pub zeta2_hat: f64,
    pub nu_hat: f64,
    /// Posterior covariance of `(α_j, β_j)` under the separate model.
    pub proposal: Vec<[f64; 3]>,
    pub warnings: Vec<String>,
}

/// Priors from the national and separate fits.
pub fn build_regression_priors(data: &GroupedData, config: &ChainConfig) -> Result<RegressionPriorPack> {
    let (national, separate) = rayon::join(|| fit_national_regression(data, config), || fit_separate_regressions(data, config));
    let (national, separate) = (national?, separate?);
    let alpha = national.draws.column_named("alpha")?;
    let beta = national.draws.column_named("beta")?;
    let mut warnings = Vec::new();
    let x = data.covariate()?;
    let resid: Vec<f64> = (0..data.n_groups())
        .map(|j| RegStats::new(&x[j], &data.y[j]).ols_resid_var())
        .collect();
    let nu_hat = match moment_estimates(&resid) {
        Err(Error::ZeroVarianceOfVariances) => {
            let e = mean(&resid);
            warnings.push("residual variances identical; their variance floored".to_string());
            MomentEstimates::from_moments(e, 1e-2 * e * e)?.nu_hat
        }
        r => r?.nu_hat,
    };
    let floor = 1e-6 * sample_var(&data.all_y());
    let mut floored = |name: &str, v: f64| {
        if v > floor {
            v
        } else {
            warnings.push(format!("{name} floored at {floor}"));
            floor
        }
    };
    let mut a_means = Vec::new();
    let mut b_means = Vec::new();
    let mut proposal = Vec::new();
    for l in &data.labels {
        let a = separate.draws.column_named(&format!("alpha[{l}]"))?;
        let b = separate.draws.column_named(&format!("beta[{l}]"))?;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
        proposal.push([sample_var(&a), cov, sample_var(&b)]);
        a_means.push(ma);
        b_means.push(mb);
    }
    Ok(RegressionPriorPack {
        mu_hat: mean(&alpha),
        sigma2_mu_hat: floored("sigma2_mu_hat", sample_var(&alpha)),
        tau2_hat: floored("tau2_hat", sample_var(&a_means)),
        gamma_hat: mean(&beta),
        sigma2_gamma_hat: floored("sigma2_gamma_hat", sample_var(&beta)),
        zeta2_hat: floored("zeta2_hat", sample_var(&b_means)),
        nu_hat,
        proposal,
        warnings,
    })
}

fn exp_prior_variance_target(count: f64, ss: f64, v: f64, rate: f64) -> f64 {
    -0.5 * count * v.ln() - ss / (2.0 * v) - rate * v
}

fn validate_pack(p: &RegressionPriorPack) -> Result<()> {
    for (name, v) in [
        ("sigma2_mu_hat", p.sigma2_mu_hat),
        ("tau2_hat", p.tau2_hat),
        ("sigma2_gamma_hat", p.sigma2_gamma_hat),
        ("zeta2_hat", p.zeta2_hat),
        ("nu_hat", p.nu_hat),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Layout: `α[J]`, `β`, `μ`, `τ²`, `σ²[J]`, `ρ²`, `ν`.
pub struct VaryingIntercepts {
    labels: Vec<String>,
    stats: Vec<RegStats>,
    priors: RegressionPriorPack,
    nu_sampler: NuSampler,
    digest: String,
    floor: f64,
}

impl VaryingIntercepts {
    pub fn new(data: &GroupedData, priors: &RegressionPriorPack) -> Result<Self> {
        require_groups(data.n_groups(), 3)?;
        validate_pack(priors)?;
        let x = data.covariate()?;
        let stats: Vec<RegStats> = (0..data.n_groups()).map(|j| RegStats::new(&x[j], &data.y[j])).collect();
        if stats.iter().all(|s| s.sxx == 0.0) {
            return Err(Error::RankDeficient(data.labels.clone()));
        }
        Ok(Self {
            labels: data.labels.clone(),
            stats,
            priors: priors.clone(),
            nu_sampler: NuSampler::exponential(priors.nu_hat),
            digest: group_observation_digest(data),
            floor: 1e-6 * sample_var(&data.all_y()),
        })
    }

    fn j(&self) -> usize {
        self.labels.len()
    }

    pub fn beta_index(&self) -> usize {
        self.j()
    }

    pub fn mu_index(&self) -> usize {
        self.j() + 1
    }

    pub fn tau2_index(&self) -> usize {
        self.j() + 2
    }

    pub fn sigma2_index(&self, k: usize) -> usize {
        self.j() + 3 + k
    }

    pub fn rho2_index(&self) -> usize {
        2 * self.j() + 3
    }

    pub fn nu_index(&self) -> usize {
        2 * self.j() + 4
    }

    fn pooled_slope(&self) -> f64 {
        let sxy: f64 = self.stats.iter().map(|s| s.sxy).sum();
        let sxx: f64 = self.stats.iter().map(|s| s.sxx).sum();
        sxy / sxx
    }
}

impl GibbsModel for VaryingIntercepts {
    fn tag(&self) -> String {
        "regression:varying-intercepts".into()
    }

    fn param_names(&self) -> Vec<String> {
        let mut n = names_indexed("alpha", &self.labels);
        n.extend(["beta", "mu", "tau2"].map(String::from));
        n.extend(names_indexed("sigma2", &self.labels));
        n.extend(["rho2", "nu"].map(String::from));
        n
    }

    fn domains(&self) -> Vec<Domain> {
        let j = self.j();
        let mut d = vec![Domain::Real; j + 2];
        d.extend(std::iter::repeat_n(Domain::Positive, j + 3));
        d
    }

    fn init(&self) -> Vec<f64> {
        let b = self.pooled_slope();
        let mut s: Vec<f64> = self.stats.iter().map(|st| st.ybar).collect();
        s.push(b);
        s.push(mean(&s[..self.j()].to_vec()));
        s.push(self.priors.tau2_hat);
        let vars: Vec<f64> = self
            .stats
            .iter()
            .map(|st| (st.ssr(st.ybar, b) / (st.n - 1.0)).max(self.floor))
            .collect();
        let inv: f64 = vars.iter().map(|v| 1.0 / v).sum();
        s.extend(&vars);
        s.push(self.j() as f64 / inv);
        s.push(self.priors.nu_hat);
        s
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        let j = self.j();
        let st = &self.stats;
        let (b, mu, t2, s0, rho, nu) = (
            self.beta_index(),
            self.mu_index(),
            self.tau2_index(),
            self.sigma2_index(0),
            self.rho2_index(),
            self.nu_index(),
        );
        let p = &self.priors;
        let tau_rate = 1.0 / p.tau2_hat;
        Ok(vec![
            Box::new(FnKernel::new("alpha", (0..j).collect(), move |s: &mut [f64], r: &mut RandomStream| {
                for k in 0..j {
                    let prec = st[k].n / s[s0 + k] + 1.0 / s[t2];
                    let num = st[k].n * st[k].ybar / s[s0 + k] + s[mu] / s[t2];
                    s[k] = sample_normal(r, num / prec, 1.0 / prec)?;
                }
                Ok(())
            })),
            Box::new(FnKernel::new("beta", vec![b], move |s: &mut [f64], r: &mut RandomStream| {
                let (mut num, mut prec) = (0.0, 0.0);
                for k in 0..j {
                    num += st[k].sxy / s[s0 + k];
                    prec += st[k].sxx / s[s0 + k];
                }
                s[b] = sample_normal(r, num / prec, 1.0 / prec)?;
                Ok(())
            })),
            Box::new(FnKernel::new("mu", vec![mu], move |s: &mut [f64], r: &mut RandomStream| {
                let prec = j as f64 / s[t2] + 1.0 / p.sigma2_mu_hat;
                let num = s[..j].iter().sum::<f64>() / s[t2] + p.mu_hat / p.sigma2_mu_hat;
                s[mu] = sample_normal(r, num / prec, 1.0 / prec)?;
                Ok(())
            })),
            Box::new(MetropolisKernel::new("tau2", t2, Transform::Positive, 0.5, move |s: &[f64], v: f64| {
                let ss: f64 = s[..j].iter().map(|a| (a - s[mu]).powi(2)).sum();
                exp_prior_variance_target(j as f64, ss, v, tau_rate)
            })),
            Box::new(FnKernel::new(
                "sigma2",
                (s0..s0 + j).collect(),
                move |s: &mut [f64], r: &mut RandomStream| {
                    let (nu, rho2) = (s[nu], s[rho]);
                    for k in 0..j {
                        let scale = (nu * rho2 + st[k].ssr(s[k], s[b])) / (nu + st[k].n);
                        s[s0 + k] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(nu + st[k].n, scale)?)?;
                    }
                    Ok(())
                },
            )),
            Box::new(FnKernel::new("rho2", vec![rho], move |s: &mut [f64], r: &mut RandomStream| {
                s[rho] = draw_rho2(&s[s0..s0 + j], s[nu], r)?;
                Ok(())
            })),
            Box::new(NuKernel::new("nu", nu, rho, (s0..s0 + j).collect(), &self.nu_sampler)),
        ])
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

pub fn fit_varying_intercepts(data: &GroupedData, priors: &RegressionPriorPack, config: &ChainConfig) -> Result<Fit> {
    fit_varying_intercepts_with(data, priors, config, &RunOptions::default())
}

pub fn fit_varying_intercepts_with(
    data: &GroupedData,
    priors: &RegressionPriorPack,
    config: &ChainConfig,
    options: &RunOptions,
) -> Result<Fit> {
    let model = VaryingIntercepts::new(data, priors)?;
    let (draws, diagnostics) = run_gibbs(&model, config, options)?;
    let j = model.j();
    let likelihood = RegressionLik::new(
        data,
        &group_centers(data)?,
        ((0..j).collect(), vec![model.beta_index(); j], (0..j).map(|k| model.sigma2_index(k)).collect()),
        Likelihood::Normal,
    )?;
    Ok(Fit {
        spec: ModelSpec::Regression {
            variant: RegressionVariant::VaryingIntercepts,
        },
        draws,
        diagnostics,
        likelihood: Box::new(likelihood),
        warnings: priors.warnings.clone(),
    })
}

struct GroupSeries {
    xc: Vec<f64>,
    y: Vec<f64>,
}

/// Layout: `α[J]`, `β[J]`, `μ`, `γ`, `τ²`, `ζ²`, `ρ_ab`, `σ²[J]`, `ρ²`, `ν`.
pub struct VaryingBoth {
    labels: Vec<String>,
    series: Vec<GroupSeries>,
    stats: Vec<RegStats>,
    priors: RegressionPriorPack,
    likelihood: Likelihood,
    nu_sampler: NuSampler,
    digest: String,
    floor: f64,
}

impl VaryingBoth {
    pub fn new(data: &GroupedData, priors: &RegressionPriorPack, likelihood: Likelihood) -> Result<Self> {
        require_groups(data.n_groups(), 3)?;
        check_all_groups(data)?;
        validate_pack(priors)?;
        if let Likelihood::AsymmetricLaplace { quantile } = likelihood {
            if !(quantile > 0.0 && quantile < 1.0) {
                return Err(Error::Config(format!("quantile must lie in (0, 1), got {quantile}")));
            }
        }
        if !priors.proposal.is_empty() && priors.proposal.len() != data.n_groups() {
            return Err(Error::Config("prior pack proposal covariances do not match the groups".into()));
        }
        let x = data.covariate()?;
        let stats: Vec<RegStats> = (0..data.n_groups()).map(|j| RegStats::new(&x[j], &data.y[j])).collect();
        let series = (0..data.n_groups())
            .map(|j| GroupSeries {
                xc: x[j].iter().map(|v| v - stats[j].xbar).collect(),
                y: data.y[j].clone(),
            })
            .collect();
        Ok(Self {
            labels: data.labels.clone(),
            series,
            stats,
            priors: priors.clone(),
            likelihood,
            nu_sampler: NuSampler::exponential(priors.nu_hat),
            digest: group_observation_digest(data),
            floor: 1e-6 * sample_var(&data.all_y()),
        })
    }

    fn j(&self) -> usize {
        self.labels.len()
    }

    pub fn alpha_index(&self, k: usize) -> usize {
        k
    }

    pub fn beta_index(&self, k: usize) -> usize {
        self.j() + k
    }

    pub fn mu_index(&self) -> usize {
        2 * self.j()
    }

    pub fn gamma_index(&self) -> usize {
        2 * self.j() + 1
    }

    pub fn tau2_index(&self) -> usize {
        2 * self.j() + 2
    }

    pub fn zeta2_index(&self) -> usize {
        2 * self.j() + 3
    }

    pub fn rho_ab_index(&self) -> usize {
        2 * self.j() + 4
    }

    pub fn sigma2_index(&self, k: usize) -> usize {
        2 * self.j() + 5 + k
    }

    pub fn rho2_index(&self) -> usize {
        3 * self.j() + 5
    }

    pub fn nu_index(&self) -> usize {
        3 * self.j() + 6
    }

    fn group_loglik(&self, k: usize, alpha: f64, beta: f64, sigma2: f64) -> f64 {
        let g = &self.series[k];
        g.xc.iter()
            .zip(&g.y)
            .map(|(x, y)| residual_ln_pdf(self.likelihood, *y, alpha + beta * x, sigma2))
            .sum()
    }

    fn proposal_cov(&self, k: usize) -> Sym2 {
        if let Some(p) = self.priors.proposal.get(k) {
            let s = Sym2 { a: p[0], b: p[1], c: p[2] };
            if s.cholesky().is_some() {
                return s;
            }
        }
        let st = &self.stats[k];
        let v = st.ols_resid_var().max(self.floor);
        Sym2 {
            a: v / st.n,
            b: 0.0,
            c: v / st.sxx,
        }
    }
}

/// `S` from `(τ², ζ², ρ)`.
pub fn coefficient_cov(tau2: f64, zeta2: f64, rho: f64) -> Sym2 {
    Sym2 {
        a: tau2,
        b: rho * (tau2 * zeta2).sqrt(),
        c: zeta2,
    }
}

/// `Σ_j log N((α_j, β_j); (μ, γ), S)` up to the `2π` constant.
fn coefficient_prior(s: &[f64], j: usize, mu: f64, gamma: f64, cov: Sym2) -> f64 {
    let det = cov.det();
    if !(det > 0.0) {
        return f64::NEG_INFINITY;
    }
    let Some(inv) = cov.inverse() else {
        return f64::NEG_INFINITY;
    };
    let q: f64 = (0..j).map(|k| inv.quad_form((s[k] - mu, s[j + k] - gamma))).sum();
    -0.5 * j as f64 * det.ln() - 0.5 * q
}

struct CoefficientKernel<'a> {
    model: &'a VaryingBoth,
    chol: Vec<(f64, f64, f64)>,
    scales: Vec<AdaptiveScale>,
}

impl Kernel for CoefficientKernel<'_> {
    fn name(&self) -> &str {
        "alpha_beta"
    }

    fn updates(&self) -> Vec<usize> {
        (0..2 * self.model.j()).collect()
    }

    fn step(&mut self, s: &mut [f64], r: &mut RandomStream, phase: Phase) -> Result<()> {
        let m = self.model;
        let j = m.j();
        let cov = coefficient_cov(s[m.tau2_index()], s[m.zeta2_index()], s[m.rho_ab_index()]);
        let inv = cov
            .inverse()
            .ok_or_else(|| Error::InvalidState("coefficient covariance is singular".into()))?;
        let (mu, gamma) = (s[m.mu_index()], s[m.gamma_index()]);
        for k in 0..j {
            let sigma2 = s[m.sigma2_index(k)];
            let target = |a: f64, b: f64| m.group_loglik(k, a, b, sigma2) - 0.5 * inv.quad_form((a - mu, b - gamma));
            let (a, b) = (s[k], s[j + k]);
            let current = target(a, b);
            if !current.is_finite() {
                return Err(Error::InvalidState(format!("alpha_beta[{}]", m.labels[k])));
            }
            let (l11, l21, l22) = self.chol[k];
            let h = self.scales[k].scale();
            let (z1, z2) = (standard_normal(r), standard_normal(r));
            let (pa, pb) = (a + h * l11 * z1, b + h * (l21 * z1 + l22 * z2));
            let lp = target(pa, pb);
            let log_r = lp - current;
            let accepted = log_r >= 0.0 || r.uniform().ln() < log_r;
            if accepted {
                s[k] = pa;
                s[j + k] = pb;
            }
            self.scales[k].record(accepted, phase);
        }
        Ok(())
    }

    fn acceptance(&self) -> Option<f64> {
        let v: Vec<f64> = self.scales.iter().filter_map(|s| s.acceptance()).collect();
        (!v.is_empty()).then(|| mean(&v))
    }
}

impl GibbsModel for VaryingBoth {
    fn tag(&self) -> String {
        "regression:varying-both".into()
    }

    fn param_names(&self) -> Vec<String> {
        let mut n = names_indexed("alpha", &self.labels);
        n.extend(names_indexed("beta", &self.labels));
        n.extend(["mu", "gamma", "tau2", "zeta2", "rho_ab"].map(String::from));
        n.extend(names_indexed("sigma2", &self.labels));
        n.extend(["rho2", "nu"].map(String::from));
        n
    }

    fn domains(&self) -> Vec<Domain> {
        let j = self.j();
        let mut d = vec![Domain::Real; 2 * j + 2];
        d.extend([Domain::Positive, Domain::Positive, Domain::Correlation]);
        d.extend(std::iter::repeat_n(Domain::Positive, j + 2));
        d
    }

    fn init(&self) -> Vec<f64> {
        let j = self.j();
        let mut s: Vec<f64> = self.stats.iter().map(|st| st.ybar).collect();
        s.extend(self.stats.iter().map(|st| st.ols_slope()));
        s.push(mean(&s[..j].to_vec()));
        s.push(mean(&s[j..2 * j].to_vec()));
        s.push(self.priors.tau2_hat);
        s.push(self.priors.zeta2_hat);
        s.push(0.0);
        let vars: Vec<f64> = self
            .stats
            .iter()
            .map(|st| {
                let v = st.ols_resid_var().max(self.floor);
                match self.likelihood {
                    Likelihood::Normal => v,
                    _ => v / 2.0,
                }
            })
            .collect();
        let inv: f64 = vars.iter().map(|v| 1.0 / v).sum();
        s.extend(&vars);
        s.push(j as f64 / inv);
        s.push(self.priors.nu_hat);
        s
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        let j = self.j();
        let p = &self.priors;
        let (mu, gm, t2, z2, rab, rho, nu) = (
            self.mu_index(),
            self.gamma_index(),
            self.tau2_index(),
            self.zeta2_index(),
            self.rho_ab_index(),
            self.rho2_index(),
            self.nu_index(),
        );
        let s0 = self.sigma2_index(0);
        let chol = (0..j)
            .map(|k| {
                let c = self.proposal_cov(k);
                c.cholesky()
                    .ok_or_else(|| Error::Config(format!("proposal covariance for `{}` is not positive definite", self.labels[k])))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ks: Vec<BoxedKernel<'_>> = vec![Box::new(CoefficientKernel {
            model: self,
            chol,
            scales: (0..j).map(|_| AdaptiveScale::new(1.0)).collect(),
        })];
        let p0 = Sym2 {
            a: 1.0 / p.sigma2_mu_hat,
            b: 0.0,
            c: 1.0 / p.sigma2_gamma_hat,
        };
        ks.push(Box::new(FnKernel::new("mu_gamma", vec![mu, gm], move |s: &mut [f64], r: &mut RandomStream| {
            let sinv = coefficient_cov(s[t2], s[z2], s[rab])
                .inverse()
                .ok_or_else(|| Error::InvalidState("coefficient covariance is singular".into()))?;
            let prec = p0.add(&sinv.scale(j as f64));
            let cov = prec
                .inverse()
                .ok_or_else(|| Error::InvalidState("(mu, gamma) precision is singular".into()))?;
            let sum = (s[..j].iter().sum::<f64>(), s[j..2 * j].iter().sum::<f64>());
            let a = sinv.mul_vec(sum);
            let b = p0.mul_vec((p.mu_hat, p.gamma_hat));
            let m = cov.mul_vec((a.0 + b.0, a.1 + b.1));
            let (x, y) = sample_bivariate_normal_cov(r, m, cov)?;
            s[mu] = x;
            s[gm] = y;
            Ok(())
        })));
        let (tau_rate, zeta_rate) = (1.0 / p.tau2_hat, 1.0 / p.zeta2_hat);
        ks.push(Box::new(MetropolisKernel::new("tau2", t2, Transform::Positive, 0.5, move |s: &[f64], v: f64| {
            coefficient_prior(s, j, s[mu], s[gm], coefficient_cov(v, s[z2], s[rab])) - tau_rate * v
        })));
        ks.push(Box::new(MetropolisKernel::new("zeta2", z2, Transform::Positive, 0.5, move |s: &[f64], v: f64| {
            coefficient_prior(s, j, s[mu], s[gm], coefficient_cov(s[t2], v, s[rab])) - zeta_rate * v
        })));
        ks.push(Box::new(MetropolisKernel::new("rho_ab", rab, Transform::Real, 0.3, move |s: &[f64], v: f64| {
            if v.abs() >= 1.0 {
                return f64::NEG_INFINITY;
            }
            coefficient_prior(s, j, s[mu], s[gm], coefficient_cov(s[t2], s[z2], v)) + lkj2_ln_pdf(v, 2.0)
        })));
        for k in 0..j {
            ks.push(Box::new(MetropolisKernel::new(
                format!("sigma2[{}]", self.labels[k]),
                s0 + k,
                Transform::Positive,
                0.3,
                move |s: &[f64], v: f64| {
                    scaled_inv_chi2_ln_pdf(v, s[nu], s[rho]) + self.group_loglik(k, s[k], s[j + k], v)
                },
            )));
        }
        ks.push(Box::new(FnKernel::new("rho2", vec![rho], move |s: &mut [f64], r: &mut RandomStream| {
            s[rho] = draw_rho2(&s[s0..s0 + j], s[nu], r)?;
            Ok(())
        })));
        ks.push(Box::new(NuKernel::new("nu", nu, rho, (s0..s0 + j).collect(), &self.nu_sampler)));
        Ok(ks)
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

pub fn fit_varying_both(
    data: &GroupedData,
    priors: &RegressionPriorPack,
    likelihood: Likelihood,
    config: &ChainConfig,
) -> Result<Fit> {
    fit_varying_both_with(data, priors, likelihood, config, &RunOptions::default())
}

pub fn fit_varying_both_with(
    data: &GroupedData,
    priors: &RegressionPriorPack,
    likelihood: Likelihood,
    config: &ChainConfig,
    options: &RunOptions,
) -> Result<Fit> {
    let model = VaryingBoth::new(data, priors, likelihood)?;
    let (draws, diagnostics) = run_gibbs(&model, config, options)?;
    let j = model.j();
    let lik = RegressionLik::new(
        data,
        &group_centers(data)?,
        ((0..j).collect(), (j..2 * j).collect(), (0..j).map(|k| model.sigma2_index(k)).collect()),
        likelihood,
    )?;
    Ok(Fit {
        spec: ModelSpec::Regression {
            variant: RegressionVariant::VaryingBoth,
        },
        draws,
        diagnostics,
        likelihood: Box::new(lik),
        warnings: priors.warnings.clone(),
    })
}

/// Posterior mean and equal-tailed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn from_draws(draws: &[f64], level: f64) -> Self {
        let mut v = draws.to_vec();
        v.sort_by(f64::total_cmp);
        let a = (1.0 - level) / 2.0;
        Self {
            mean: mean(draws),
            lo: sorted_quantile(&v, a),
            hi: sorted_quantile(&v, 1.0 - a),
        }
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub group: String,
    pub alpha: Interval,
    pub beta: Interval,
}

/// Which regression line to draw bands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandTarget {
    National,
    Group(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub pred_lo: f64,
    pub pred_hi: f64,
}

enum Noise {
    Column(String),
    Fixed(f64),
}

/// Columns of `(α, β)`, the noise variance and the centre for a target.
fn line_columns(
    draws: &PosteriorDraws,
    variant: RegressionVariant,
    data: &GroupedData,
    target: BandTarget,
) -> Result<(String, String, Noise, f64)> {
    let national_center = mean(&data.all_x().ok_or_else(|| Error::Schema("regression needs a covariate".into()))?);
    let mean_sigma2 = || -> Result<Noise> {
        let v = data
            .labels
            .iter()
            .map(|l| draws.mean_named(&format!("sigma2[{l}]")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Noise::Fixed(mean(&v)))
    };
    Ok(match (variant, target) {
        (RegressionVariant::National, _) => ("alpha".into(), "beta".into(), Noise::Column("sigma2".into()), national_center),
        (RegressionVariant::Separate, BandTarget::National) => {
            return Err(Error::Config("separate regressions have no national line".into()))
        }
        (RegressionVariant::VaryingIntercepts, BandTarget::National) => ("mu".into(), "beta".into(), mean_sigma2()?, national_center),
        (RegressionVariant::VaryingBoth, BandTarget::National) => ("mu".into(), "gamma".into(), mean_sigma2()?, national_center),
        (v, BandTarget::Group(k)) => {
            let l = data
                .labels
                .get(k)
                .ok_or_else(|| Error::Config(format!("group index {k} out of range")))?;
            let beta = if v == RegressionVariant::VaryingIntercepts {
                "beta".to_string()
            } else {
                format!("beta[{l}]")
            };
            (format!("alpha[{l}]"), beta, Noise::Column(format!("sigma2[{l}]")), group_centers(data)?[k])
        }
    })
}

pub fn regression_variant(spec: &ModelSpec) -> Result<RegressionVariant> {
    match spec {
        ModelSpec::Regression { variant } => Ok(*variant),
        _ => Err(Error::Config(format!("{} is not a regression fit", spec.tag()))),
    }
}

/// Regression-line and predictive bands at `level` on an ascending grid.
pub fn regression_bands(
    draws: &PosteriorDraws,
    variant: RegressionVariant,
    data: &GroupedData,
    target: BandTarget,
    grid: &[f64],
    likelihood: Likelihood,
    level: f64,
    seed: u64,
) -> Result<Vec<BandPoint>> {
    let (a, b, s, center) = line_columns(draws, variant, data, target)?;
    let alpha = draws.column_named(&a)?;
    let beta = draws.column_named(&b)?;
    let sigma2 = match s {
        Noise::Fixed(v) => vec![v; alpha.len()],
        Noise::Column(c) => draws.column_named(&c)?,
    };
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut r = RandomStream::new(seed, 0xba4d);
    let q = (1.0 - level) / 2.0;
    let mut out = Vec::with_capacity(grid.len());
    for &x in &grid {
        let mut line: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a + b * (x - center)).collect();
        let mut pred: Vec<f64> = line
            .iter()
            .zip(&sigma2)
            .map(|(m, v)| m + residual_noise(likelihood, *v, &mut r))
            .collect();
        let m = mean(&line);
        line.sort_by(f64::total_cmp);
        pred.sort_by(f64::total_cmp);
        out.push(BandPoint {
            x,
            mean: m,
            lo: sorted_quantile(&line, q),
            hi: sorted_quantile(&line, 1.0 - q),
            pred_lo: sorted_quantile(&pred, q),
            pred_hi: sorted_quantile(&pred, 1.0 - q),
        });
    }
    Ok(out)
}

fn residual_noise(likelihood: Likelihood, sigma2: f64, r: &mut RandomStream) -> f64 {
    match likelihood {
        Likelihood::Normal => sigma2.sqrt() * standard_normal(r),
        Likelihood::Laplace => {
            let u = r.uniform() - 0.5;
            -sigma2.sqrt() * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
        Likelihood::AsymmetricLaplace { quantile: q } => {
            let e = -r.uniform().ln();
            let sigma = sigma2.sqrt();
            if r.uniform() < q {
                -sigma * e / (1.0 - q)
            } else {
                sigma * e / q
            }
        }
    }
}

/// Slope and intercept summaries per group, plus the national or hyper-mean
/// line labelled `national` when the variant has one.
pub fn slope_table(
    draws: &PosteriorDraws,
    variant: RegressionVariant,
    data: &GroupedData,
    level: f64,
) -> Result<Vec<SlopeRow>> {
    let mut rows = Vec::new();
    let mut push = |group: &str, a: &str, b: &str| -> Result<()> {
        rows.push(SlopeRow {
            group: group.to_string(),
            alpha: Interval::from_draws(&draws.column_named(a)?, level),
            beta: Interval::from_draws(&draws.column_named(b)?, level),
        });
        Ok(())
    };
    match variant {
        RegressionVariant::National => push("national", "alpha", "beta")?,
        RegressionVariant::Separate => {}
        RegressionVariant::VaryingIntercepts => push("national", "mu", "beta")?,
        RegressionVariant::VaryingBoth => push("national", "mu", "gamma")?,
    }
    if variant != RegressionVariant::National {
        for l in &data.labels {
            let b = if variant == RegressionVariant::VaryingIntercepts {
                "beta".to_string()
            } else {
                format!("beta[{l}]")
            };
            push(l, &format!("alpha[{l}]"), &b)?;
        }
    }
    Ok(rows)
}
