//! No pooling (independent per-group normal models) and complete pooling (one
//! shared mean and variance), both under `p(θ, σ²) ∝ 1/σ²`.

use rayon::prelude::*;

use super::{group_observation_digest, names_indexed, Fit, GroupNormalLik, GroupStats, ModelSpec};
use crate::data::{mean_var, GroupedData};
use crate::dist::{sample_normal, sample_scaled_inv_chi2, ScaledInvChi2Params};
use crate::error::{Error, Result};
use crate::mcmc::{run_chains, BoxedKernel, ChainConfig, Diagnostics, Domain, DrawsMeta, FnKernel, GibbsModel, PosteriorDraws, RunOptions};
use crate::random::RandomStream;

/// One group's `(θ, σ²)` sampler: `θ | σ² ~ N(ȳ, σ²/n)`, `σ² | θ ~ Inv-χ²(n, v)`.
pub struct SingleGroupNormal {
    label: String,
    y: Vec<f64>,
    digest: String,
}

impl SingleGroupNormal {
    pub fn new(label: &str, y: &[f64]) -> Result<Self> {
        if y.len() < 2 || y.iter().all(|v| *v == y[0]) {
            return Err(Error::DegenerateVariance {
                group: label.to_string(),
                reason: if y.len() < 2 {
                    format!("{} observation(s); at least 2 are required", y.len())
                } else {
                    "all responses are identical".into()
                },
            });
        }
        let digest = group_observation_digest(&GroupedData::new(vec![label.to_string()], vec![y.to_vec()]));
        Ok(Self {
            label: label.to_string(),
            y: y.to_vec(),
            digest,
        })
    }
}

fn normal_kernels<'a>(y: &'a [f64], tag: &str) -> Vec<BoxedKernel<'a>> {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    vec![
        Box::new(FnKernel::new(format!("theta{tag}"), vec![0], move |s: &mut [f64], r: &mut RandomStream| {
            s[0] = sample_normal(r, ybar, s[1] / n)?;
            Ok(())
        })),
        Box::new(FnKernel::new(format!("sigma2{tag}"), vec![1], move |s: &mut [f64], r: &mut RandomStream| {
            let v = y.iter().map(|x| (x - s[0]).powi(2)).sum::<f64>() / n;
            s[1] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(n, v)?)?;
            Ok(())
        })),
    ]
}

impl GibbsModel for SingleGroupNormal {
    fn tag(&self) -> String {
        "no-pooling".into()
    }

    fn param_names(&self) -> Vec<String> {
        vec![format!("theta[{}]", self.label), format!("sigma2[{}]", self.label)]
    }

    fn domains(&self) -> Vec<Domain> {
        vec![Domain::Real, Domain::Positive]
    }

    fn init(&self) -> Vec<f64> {
        let (m, v) = mean_var(&self.y);
        vec![m, v]
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        Ok(normal_kernels(&self.y, &format!("[{}]", self.label)))
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

/// Stream base used for group `j` when groups are sampled independently.
pub fn group_stream_base(j: usize) -> u64 {
    ((j as u64) + 1) << 32
}

/// Runs independent per-group models and merges them column-wise.
pub(crate) fn run_independent<M: GibbsModel + Send>(
    models: &[M],
    tag: &str,
    digest: String,
    config: &ChainConfig,
) -> Result<(PosteriorDraws, Diagnostics)> {
    let results: Vec<Result<(PosteriorDraws, Diagnostics)>> = models
        .par_iter()
        .enumerate()
        .map(|(j, m)| run_chains(m, config, &RunOptions::default().with_stream_base(group_stream_base(j))))
        .collect();
    let results: Vec<(PosteriorDraws, Diagnostics)> = results.into_iter().collect::<Result<_>>()?;
    let mut names = Vec::new();
    let mut domains = Vec::new();
    let mut diag = Diagnostics::default();
    for (d, g) in &results {
        names.extend(d.names().iter().cloned());
        domains.extend(d.domains().iter().copied());
        diag.params.extend(g.params.iter().cloned());
        diag.acceptance.extend(g.acceptance.clone());
        for w in &g.warnings {
            if !diag.warnings.contains(w) {
                diag.warnings.push(w.clone());
            }
        }
    }
    let n_per = results[0].0.n_per_chain();
    let chains = (0..config.chains)
        .map(|c| {
            let mut out = Vec::with_capacity(n_per * names.len());
            for s in 0..n_per {
                for (d, _) in &results {
                    out.extend_from_slice(d.row(c, s));
                }
            }
            out
        })
        .collect();
    let meta = DrawsMeta {
        model: tag.to_string(),
        seed: config.seed,
        data_digest: digest,
        config: config.clone(),
    };
    Ok((PosteriorDraws::new(names, domains, chains, meta)?, diag))
}

pub fn fit_no_pooling(data: &GroupedData, config: &ChainConfig) -> Result<Fit> {
    let models: Vec<SingleGroupNormal> = data
        .labels
        .iter()
        .zip(&data.y)
        .map(|(l, y)| SingleGroupNormal::new(l, y))
        .collect::<Result<_>>()?;
    let digest = group_observation_digest(data);
    let (draws, diagnostics) = run_independent(&models, "no-pooling", digest, config)?;
    diagnostics.gate(config.force)?;
    let j = data.n_groups();
    let likelihood = GroupNormalLik::new(data, (0..j).map(|k| 2 * k).collect(), (0..j).map(|k| 2 * k + 1).collect());
    Ok(Fit {
        spec: ModelSpec::NoPooling,
        draws,
        diagnostics,
        likelihood: Box::new(likelihood),
        warnings: Vec::new(),
    })
}

/// All groups share `θ` and `σ²`.
pub struct CompletePooling {
    stats: GroupStats,
    digest: String,
    var0: f64,
}

impl CompletePooling {
    pub fn new(data: &GroupedData) -> Result<Self> {
        let all = data.all_y();
        if all.len() < 2 {
            return Err(Error::Insufficient("complete pooling needs at least 2 observations".into()));
        }
        if all.iter().all(|v| *v == all[0]) {
            return Err(Error::DegenerateVariance {
                group: "<pooled>".into(),
                reason: "all responses are identical".into(),
            });
        }
        Ok(Self {
            stats: GroupStats::new(data),
            digest: group_observation_digest(data),
            var0: mean_var(&all).1,
        })
    }
}

impl GibbsModel for CompletePooling {
    fn tag(&self) -> String {
        "complete-pooling".into()
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into(), "sigma2".into()]
    }

    fn domains(&self) -> Vec<Domain> {
        vec![Domain::Real, Domain::Positive]
    }

    fn init(&self) -> Vec<f64> {
        let st = &self.stats;
        let m = (0..st.j()).map(|j| st.n[j] * st.ybar[j]).sum::<f64>() / st.n_total();
        vec![m, self.var0]
    }

    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
        let st = &self.stats;
        let n = st.n_total();
        Ok(vec![
            Box::new(FnKernel::new("theta", vec![0], move |s: &mut [f64], r: &mut RandomStream| {
                let sigma2 = s[1];
                // precision-weighted grand mean with σ̄_j² = σ²/n_j, and φ² = 1/Σ 1/σ̄_j²
                let (mut num, mut prec) = (0.0, 0.0);
                for j in 0..st.j() {
                    let w = st.n[j] / sigma2;
                    num += w * st.ybar[j];
                    prec += w;
                }
                s[0] = sample_normal(r, num / prec, 1.0 / prec)?;
                Ok(())
            })),
            Box::new(FnKernel::new("sigma2", vec![1], move |s: &mut [f64], r: &mut RandomStream| {
                let ss: f64 = (0..st.j()).map(|j| st.sq_dev(j, s[0])).sum();
                s[1] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(n, ss / n)?)?;
                Ok(())
            })),
        ])
    }

    fn data_digest(&self) -> String {
        self.digest.clone()
    }
}

pub fn fit_complete_pooling(data: &GroupedData, config: &ChainConfig) -> Result<Fit> {
    fit_complete_pooling_with(data, config, &RunOptions::default())
}

pub fn fit_complete_pooling_with(data: &GroupedData, config: &ChainConfig, options: &RunOptions) -> Result<Fit> {
    let model = CompletePooling::new(data)?;
    let (draws, diagnostics) = crate::mcmc::run_gibbs(&model, config, options)?;
    let j = data.n_groups();
    Ok(Fit {
        spec: ModelSpec::CompletePooling,
        draws,
        diagnostics,
        likelihood: Box::new(GroupNormalLik::new(data, vec![0; j], vec![1; j])),
        warnings: Vec::new(),
    })
}

/// Parameter names of the no-pooling fit, in draw-column order.
pub fn no_pooling_names(labels: &[String]) -> Vec<String> {
    let t = names_indexed("theta", labels);
    let s = names_indexed("sigma2", labels);
    t.into_iter().zip(s).flat_map(|(a, b)| [a, b]).collect()
}
