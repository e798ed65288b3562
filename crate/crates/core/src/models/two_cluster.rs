//! Two non-nested clusters: `Y_ijk ~ N(θ_j + λ_k, σ²_jk)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hier::{draw_rho2, fit_hier_varying_with, HierVaryingOptions, NuKernel, NuSampler};
use super::{mean, names_indexed, observation_digest, sample_var, Fit, ModelSpec, NuStrategy, PointwiseLogLik};
use crate::data::{cell_label, CellData};
use crate::dist::{normal_ln_pdf, sample_normal, sample_scaled_inv_chi2, ScaledInvChi2Params};
use crate::error::{Error, Result};
use crate::estimators::moment_estimates;
use crate::mcmc::{run_gibbs, BoxedKernel, ChainConfig, Domain, FnKernel, GibbsModel, Kernel, MetropolisKernel, Phase, RunOptions, Transform};
use crate::random::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoClusterPriorPack {
    pub mu_hat: f64,
    pub sigma2_mu_hat: f64,
    pub tau2_hat: f64,
    pub lambda_hat: Vec<f64>,
    pub xi2_hat: f64,
    pub nu_hat: Vec<f64>,
    pub warnings: Vec<String>,
}

fn check_cells(data: &CellData) -> Result<()> {
    if data.levels.len() < 2 {
        return Err(Error::Insufficient(
            "two-cluster model needs at least 2 second-cluster levels; fit a one-cluster model instead".into(),
        ));
    }
    let empty: Vec<String> = data
        .groups
        .iter()
        .enumerate()
        .flat_map(|(j, g)| {
            data.levels
                .iter()
                .enumerate()
                .filter(move |(k, _)| data.y[j][*k].is_empty())
                .map(move |(_, l)| cell_label(g, l))
        })
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyCells(empty));
    }
    Ok(())
}

/// Builds the priors from one hierarchical fit on all data and one per level.
pub fn build_two_cluster_priors(data: &CellData, config: &ChainConfig) -> Result<TwoClusterPriorPack> {
    check_cells(data)?;
    let k = data.levels.len();
    let opts = HierVaryingOptions::new(NuStrategy::Fixed);
    let subsets: Vec<_> = std::iter::once(data.by_group()).chain((0..k).map(|l| data.level(l))).collect();
    let fits: Vec<Fit> = subsets
        .par_iter()
        .enumerate()
        .map(|(i, d)| fit_hier_varying_with(d, opts, config, &RunOptions::default().with_stream_base((i as u64) << 40)))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    for f in &fits {
        warnings.extend(f.warnings.iter().cloned());
    }
    let mu = fits[0].draws.column_named("mu")?;
    let mu_hat = mean(&mu);
    let sigma2_mu_hat = sample_var(&mu);
    let tau2_hat = fits[0].draws.mean_named("tau2")?;
    let lambda_hat: Vec<f64> = fits[1..]
        .iter()
        .map(|f| f.draws.mean_named("mu").map(|m| m - mu_hat))
        .collect::<Result<_>>()?;
    let mut xi2_hat = sample_var(&lambda_hat);
    let resp_var = sample_var(&data.by_group().all_y());
    let floor = 1e-6 * resp_var;
    if !(xi2_hat > floor) {
        warnings.push(format!("level effects are indistinguishable; xi2_hat floored at {floor}"));
        xi2_hat = floor;
    }
    let nu_hat: Vec<f64> = (0..k)
        .map(|l| {
            let s2: Vec<f64> = data.y.iter().map(|row| sample_var(&row[l])).collect();
            moment_estimates(&s2).map(|m| m.nu_hat)
        })
        .collect::<Result<_>>()?;
    Ok(TwoClusterPriorPack {
        mu_hat,
        sigma2_mu_hat: sigma2_mu_hat.max(floor),
        tau2_hat: tau2_hat.max(floor),
        lambda_hat,
        xi2_hat,
        nu_hat,
        warnings,
    })
}

struct CellStats {
    n: Vec<Vec<f64>>,
    ybar: Vec<Vec<f64>>,
    ss: Vec<Vec<f64>>,
}

impl CellStats {
    fn sq_dev(&self, j: usize, k: usize, m: f64) -> f64 {
        self.ss[j][k] + self.n[j][k] * (self.ybar[j][k] - m).powi(2)
    }
}

/// Parameter layout: `θ[J]`, `λ[K]`, `μ`, `τ²`, `ξ²`, `σ²[J·K]` (group-major),
/// `ρ²[K]`, `ν[K]`.
pub struct TwoCluster {
    groups: Vec<String>,
    levels: Vec<String>,
    stats: CellStats,
    priors: TwoClusterPriorPack,
    nu_samplers: Vec<NuSampler>,
    digest: String,
}

impl TwoCluster {
    pub fn new(data: &CellData, priors: TwoClusterPriorPack) -> Result<Self> {
        check_cells(data)?;
        if data.groups.len() < 2 {
            return Err(Error::Insufficient("two-cluster model needs at least 2 groups".into()));
        }
        if priors.lambda_hat.len() != data.levels.len() || priors.nu_hat.len() != data.levels.len() {
            return Err(Error::Config("prior pack does not match the number of levels".into()));
        }
        for (name, v) in [
            ("sigma2_mu_hat", priors.sigma2_mu_hat),
            ("tau2_hat", priors.tau2_hat),
            ("xi2_hat", priors.xi2_hat),
        ]
        .into_iter()
        .chain(priors.nu_hat.iter().map(|v| ("nu_hat", *v)))
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let mut n = Vec::new();
        let mut ybar = Vec::new();
        let mut ss = Vec::new();
        for row in &data.y {
            let mut nr = Vec::new();
            let mut mr = Vec::new();
            let mut sr = Vec::new();
            for cell in row {
                let c = cell.len() as f64;
                let m = cell.iter().sum::<f64>() / c;
                nr.push(c);
                mr.push(m);
                sr.push(cell.iter().map(|v| (v - m).powi(2)).sum());
            }
            n.push(nr);
            ybar.push(mr);
            ss.push(sr);
        }
        let nu_samplers = priors.nu_hat.iter().map(|&v| NuSampler::exponential(v)).collect();
        Ok(Self {
            groups: data.groups.clone(),
            levels: data.levels.clone(),
            stats: CellStats { n, ybar, ss },
            priors,
            nu_samplers,
            digest: cell_observation_digest(data),
        })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn theta_index(&self, j: usize) -> usize {
        j
    }

    pub fn lambda_index(&self, k: usize) -> usize {
        self.n_groups() + k
    }

    pub fn mu_index(&self) -> usize {
        self.n_groups() + self.n_levels()
    }

    pub fn tau2_index(&self) -> usize {
        self.mu_index() + 1
    }

    pub fn xi2_index(&self) -> usize {
        self.mu_index() + 2
    }

    pub fn sigma2_index(&self, j: usize, k: usize) -> usize {
        self.mu_index() + 3 + j * self.n_levels() + k
    }

    pub fn rho2_index(&self, k: usize) -> usize {
        self.sigma2_index(self.n_groups() - 1, self.n_levels() - 1) + 1 + k
    }

    pub fn nu_index(&self, k: usize) -> usize {
        self.rho2_index(self.n_levels() - 1) + 1 + k
    }

    pub fn cell_labels(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| self.levels.iter().map(move |l| cell_label(g, l)))
            .collect()
    }
}

/// Draws `λ` from its conditional, then applies the exact shift
/// `(θ + c, λ - c, μ + c)` with `c` from its Gaussian conditional.
struct LambdaShiftKernel<'a> {
    model: &'a TwoCluster,
    updates: Vec<usize>,
    moves: Vec<usize>,
    shift: bool,
}

impl Kernel for LambdaShiftKernel<'_> {
    fn name(&self) -> &str {
        "lambda"
    }

    fn updates(&self) -> Vec<usize> {
        self.updates.clone()
    }

    fn also_moves(&self) -> Vec<usize> {
        if self.shift {
            self.moves.clone()
        } else {
            Vec::new()
        }
    }

    fn set_frozen(&mut self, frozen: &[bool]) {
        self.shift = !self.moves.iter().any(|&i| frozen[i]);
    }

    fn step(&mut self, s: &mut [f64], r: &mut RandomStream, _phase: Phase) -> Result<()> {
        let m = self.model;
        let st = &m.stats;
        let (jn, kn) = (m.n_groups(), m.n_levels());
        let xi2 = s[m.xi2_index()];
        for k in 0..kn {
            let (mut num, mut prec) = (0.0, 1.0 / xi2);
            for j in 0..jn {
                let w = st.n[j][k] / s[m.sigma2_index(j, k)];
                num += w * (st.ybar[j][k] - s[j]);
                prec += w;
            }
            s[m.lambda_index(k)] = sample_normal(r, num / prec, 1.0 / prec)?;
        }
        if self.shift {
            let mu = m.mu_index();
            let s2mu = m.priors.sigma2_mu_hat;
            let sum_l: f64 = (0..kn).map(|k| s[m.lambda_index(k)]).sum();
            let prec = kn as f64 / xi2 + 1.0 / s2mu;
            let c = sample_normal(r, (sum_l / xi2 - (s[mu] - m.priors.mu_hat) / s2mu) / prec, 1.0 / prec)?;
            for j in 0..jn {
                s[j] += c;
            }
            for k in 0..kn {
                s[m.lambda_index(k)] -= c;
            }
            s[mu] += c;
        }
        Ok(())
    }
}

fn exp_prior_variance_target(count: f64, ss: f64, v: f64, rate: f64) -> f64 {
    -0.5 * count * v.ln() - ss / (2.0 * v) - rate * v
}

impl GibbsModel for TwoCluster {
    fn tag(&self) -> String {
        "two-cluster".into()
    }

    fn param_names(&self) -> Vec<String> {
        let mut n = names_indexed("theta", &self.groups);
        n.extend(names_indexed("lambda", &self.levels));
        n.extend(["mu".to_string(), "tau2".to_string(), "xi2".to_string()]);
        n.extend(names_indexed("sigma2", &self.cell_labels()));
        n.extend(names_indexed("rho2", &self.levels));
        n.extend(names_indexed("nu", &self.levels));
        n
    }

    fn domains(&self) -> Vec<Domain> {
        let (j, k) = (self.n_groups(), self.n_levels());
        let mut d = vec![Domain::Real; j + k + 1];
        d.extend(std::iter::repeat_n(Domain::Positive, 2 + j * k + 2 * k));
        d
    }

    fn init(&self) -> Vec<f64> {
        let st = &self.stats;
        let (jn, kn) = (self.n_groups(), self.n_levels());
        let p = &self.priors;
        let mut s = Vec::with_capacity(self.nu_index(kn - 1) + 1);
        for j in 0..jn {
            s.push(mean(&(0..kn).map(|k| st.ybar[j][k] - p.lambda_hat[k]).collect::<Vec<_>>()));
        }
        s.extend(&p.lambda_hat);
        s.push(p.mu_hat);
        s.push(p.tau2_hat);
        s.push(p.xi2_hat);
        let mut cell_vars = Vec::new();
        for j in 0..jn {
            for k in 0..kn {
                let v = if st.n[j][k] > 1.0 { st.ss[j][k] / (st.n[j][k] - 1.0) } else { 0.0 };
                cell_vars.push(v);
            }
        }
        let positive: Vec<f64> = cell_vars.iter().copied().filter(|v| *v > 0.0).collect();
        let fallback = if positive.is_empty() { 1.0 } else { mean(&positive) };
        s.extend(cell_vars.iter().map(|&v| if v > 0.0 { v } else { fallback }));
        for k in 0..kn {
            let inv: f64 = (0..jn).map(|j| 1.0 / s[self.sigma2_index(j, k)]).sum();
            s.push(jn as f64 / inv);
        }
        s.extend(&p.nu_hat);
        s
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        let st = &self.stats;
        let (jn, kn) = (self.n_groups(), self.n_levels());
        let (mu, t2, x2) = (self.mu_index(), self.tau2_index(), self.xi2_index());
        let p = &self.priors;
        let mut ks: Vec<BoxedKernel<'_>> = Vec::new();
        ks.push(Box::new(FnKernel::new("theta", (0..jn).collect(), move |s: &mut [f64], r: &mut RandomStream| {
            for j in 0..jn {
                let (mut num, mut prec) = (s[mu] / s[t2], 1.0 / s[t2]);
                for k in 0..kn {
                    let w = st.n[j][k] / s[self.sigma2_index(j, k)];
                    num += w * (st.ybar[j][k] - s[self.lambda_index(k)]);
                    prec += w;
                }
                s[j] = sample_normal(r, num / prec, 1.0 / prec)?;
            }
            Ok(())
        })));
        let mut moves: Vec<usize> = (0..jn).collect();
        moves.push(mu);
        ks.push(Box::new(LambdaShiftKernel {
            model: self,
            updates: (0..kn).map(|k| self.lambda_index(k)).collect(),
            moves,
            shift: true,
        }));
        ks.push(Box::new(FnKernel::new("mu", vec![mu], move |s: &mut [f64], r: &mut RandomStream| {
            let prec = jn as f64 / s[t2] + 1.0 / p.sigma2_mu_hat;
            let num = s[..jn].iter().sum::<f64>() / s[t2] + p.mu_hat / p.sigma2_mu_hat;
            s[mu] = sample_normal(r, num / prec, 1.0 / prec)?;
            Ok(())
        })));
        let tau_rate = 1.0 / p.tau2_hat;
        ks.push(Box::new(MetropolisKernel::new(
            "tau2",
            t2,
            Transform::Positive,
            0.5,
            move |s: &[f64], v: f64| {
                let ss: f64 = s[..jn].iter().map(|t| (t - s[mu]).powi(2)).sum();
                exp_prior_variance_target(jn as f64, ss, v, tau_rate)
            },
        )));
        let xi_rate = 1.0 / p.xi2_hat;
        let l0 = self.lambda_index(0);
        ks.push(Box::new(MetropolisKernel::new(
            "xi2",
            x2,
            Transform::Positive,
            0.5,
            move |s: &[f64], v: f64| {
                let ss: f64 = s[l0..l0 + kn].iter().map(|l| l * l).sum();
                exp_prior_variance_target(kn as f64, ss, v, xi_rate)
            },
        )));
        let s0 = self.sigma2_index(0, 0);
        let rho0 = self.rho2_index(0);
        let nu0 = self.nu_index(0);
        ks.push(Box::new(FnKernel::new(
            "sigma2",
            (s0..s0 + jn * kn).collect(),
            move |s: &mut [f64], r: &mut RandomStream| {
                for j in 0..jn {
                    for k in 0..kn {
                        let (nu, rho2) = (s[nu0 + k], s[rho0 + k]);
                        let njk = st.n[j][k];
                        let dev = st.sq_dev(j, k, s[j] + s[l0 + k]);
                        let scale = (nu * rho2 + dev) / (nu + njk);
                        s[s0 + j * kn + k] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(nu + njk, scale)?)?;
                    }
                }
                Ok(())
            },
        )));
        ks.push(Box::new(FnKernel::new(
            "rho2",
            (rho0..rho0 + kn).collect(),
            move |s: &mut [f64], r: &mut RandomStream| {
                for k in 0..kn {
                    let vars: Vec<f64> = (0..jn).map(|j| s[s0 + j * kn + k]).collect();
                    s[rho0 + k] = draw_rho2(&vars, s[nu0 + k], r)?;
                }
                Ok(())
            },
        )));
        for k in 0..kn {
            ks.push(Box::new(NuKernel::new(
                &format!("nu[{}]", self.levels[k]),
                nu0 + k,
                rho0 + k,
                (0..jn).map(|j| s0 + j * kn + k).collect(),
                &self.nu_samplers[k],
            )));
        }
        Ok(ks)
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

pub fn cell_observation_digest(data: &CellData) -> String {
    let labels: Vec<(String, &Vec<f64>)> = data
        .groups
        .iter()
        .enumerate()
        .flat_map(|(j, g)| data.levels.iter().enumerate().map(move |(k, l)| (cell_label(g, l), &data.y[j][k])))
        .collect();
    observation_digest(
        "cell",
        labels.iter().flat_map(|(l, ys)| ys.iter().map(move |&y| (l.as_str(), y))),
    )
}

/// Normal likelihood per observation, addressed by `(j, k)` cell.
pub struct CellNormalLik {
    obs: Vec<(usize, usize, f64)>,
    theta: Vec<usize>,
    lambda: Vec<usize>,
    sigma2: Vec<Vec<usize>>,
    digest: String,
}

impl PointwiseLogLik for CellNormalLik {
    fn n_obs(&self) -> usize {
        self.obs.len()
    }

    fn log_lik(&self, i: usize, row: &[f64]) -> f64 {
        let (j, k, y) = self.obs[i];
        normal_ln_pdf(y, row[self.theta[j]] + row[self.lambda[k]], row[self.sigma2[j][k]])
    }

    fn observation_kind(&self) -> &'static str {
        "cell"
    }

    fn observation_digest(&self) -> String {
        self.digest.clone()
    }
}

pub fn fit_two_cluster(data: &CellData, priors: &TwoClusterPriorPack, config: &ChainConfig) -> Result<Fit> {
    fit_two_cluster_with(data, priors, config, &RunOptions::default())
}

pub fn fit_two_cluster_with(
    data: &CellData,
    priors: &TwoClusterPriorPack,
    config: &ChainConfig,
    options: &RunOptions,
) -> Result<Fit> {
    let model = TwoCluster::new(data, priors.clone())?;
    let (draws, diagnostics) = run_gibbs(&model, config, options)?;
    let (jn, kn) = (model.n_groups(), model.n_levels());
    let obs = (0..jn)
        .flat_map(|j| (0..kn).flat_map(move |k| data.y[j][k].iter().map(move |&y| (j, k, y))))
        .collect();
    let likelihood = CellNormalLik {
        obs,
        theta: (0..jn).collect(),
        lambda: (0..kn).map(|k| model.lambda_index(k)).collect(),
        sigma2: (0..jn).map(|j| (0..kn).map(|k| model.sigma2_index(j, k)).collect()).collect(),
        digest: model.digest.clone(),
    };
    Ok(Fit {
        spec: ModelSpec::TwoCluster,
        draws,
        diagnostics,
        likelihood: Box::new(likelihood),
        warnings: priors.warnings.clone(),
    })
}

/// Cell means `θ_j + λ_k` per retained draw, group-major.
pub fn cell_mean_draws(fit: &Fit, groups: &[String], levels: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for g in groups {
        let t = fit.draws.column_named(&format!("theta[{g}]"))?;
        for l in levels {
            let lam = fit.draws.column_named(&format!("lambda[{l}]"))?;
            out.push((cell_label(g, l), t.iter().zip(&lam).map(|(a, b)| a + b).collect()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(j: usize, k: usize, n: usize, seed: u64) -> CellData {
        let mut r = RandomStream::new(seed, 0);
        let lam = [-2.0, 0.0, 2.0];
        CellData {
            groups: (0..j).map(|i| format!("g{i}")).collect(),
            levels: (0..k).map(|i| format!("l{i}")).collect(),
            y: (0..j)
                .map(|jj| {
                    (0..k)
                        .map(|kk| (0..n).map(|_| jj as f64 + lam[kk] + sample_normal(&mut r, 0.0, 1.0 + (jj + kk) as f64 * 0.3).unwrap()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn empty_cell_is_named() {
        let mut d = cells(3, 2, 5, 1);
        d.y[1][0].clear();
        match build_two_cluster_priors(&d, &ChainConfig::default()) {
            Err(Error::EmptyCells(c)) => assert_eq!(c, vec!["g1|l0".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_level_is_rejected() {
        let d = cells(3, 1, 5, 1);
        assert!(matches!(build_two_cluster_priors(&d, &ChainConfig::default()), Err(Error::Insufficient(_))));
    }

    #[test]
    fn layout_and_run() {
        let d = cells(4, 3, 20, 2);
        let cfg = ChainConfig::new(2, 1500, 500, 1, 9).forced(true);
        let p = build_two_cluster_priors(&d, &cfg).unwrap();
        let m = TwoCluster::new(&d, p.clone()).unwrap();
        let names = m.param_names();
        assert_eq!(names.len(), m.nu_index(2) + 1);
        assert_eq!(names[m.sigma2_index(1, 2)], "sigma2[g1|l2]");
        assert_eq!(names[m.rho2_index(0)], "rho2[l0]");
        assert_eq!(m.init().len(), names.len());
        let f = fit_two_cluster(&d, &p, &cfg).unwrap();
        f.draws.validate().unwrap();
        assert_eq!(f.likelihood.observation_kind(), "cell");
        assert_eq!(f.likelihood.n_obs(), 4 * 3 * 20);
    }

    #[test]
    fn digest_differs_from_one_cluster() {
        let d = cells(3, 2, 4, 3);
        assert_ne!(cell_observation_digest(&d), super::super::group_observation_digest(&d.by_group()));
    }
}
