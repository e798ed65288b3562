//! Chain orchestration for Gibbs and Metropolis-within-Gibbs samplers.
//!
//! A model supplies parameter names, domains, an initial state and an ordered
//! list of kernels; one sweep applies every kernel once in that order.

pub mod diagnostics;
pub mod draws;
pub mod kernels;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::RandomStream;
pub use diagnostics::{diagnostics, Diagnostics, ParamDiagnostics};
pub use draws::{DrawsMeta, PosteriorDraws};
pub use kernels::{grid_sample, metropolis_block, AdaptiveScale, FnKernel, MetropolisKernel, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Real,
    Positive,
    Correlation,
}

impl Domain {
    pub fn contains(self, v: f64) -> bool {
        match self {
            Domain::Real => v.is_finite(),
            Domain::Positive => v > 0.0 && v.is_finite(),
            Domain::Correlation => v > -1.0 && v < 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Sampling,
}

pub trait Kernel: Send {
    fn name(&self) -> &str;

    /// State indices this kernel is responsible for.
    fn updates(&self) -> Vec<usize>;

    /// Further indices the kernel may move in addition to [`updates`](Self::updates).
    fn also_moves(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Told which indices are frozen before the first sweep.
    fn set_frozen(&mut self, _frozen: &[bool]) {}

    fn step(&mut self, state: &mut [f64], stream: &mut RandomStream, phase: Phase) -> Result<()>;

    /// Sampling-phase acceptance rate, for Metropolis kernels.
    fn acceptance(&self) -> Option<f64> {
        None
    }
}

pub type BoxedKernel<'a> = Box<dyn Kernel + 'a>;

pub trait GibbsModel: Sync {
    /// Model tag recorded in the draws' metadata.
    fn tag(&self) -> String;

    fn param_names(&self) -> Vec<String>;

    fn domains(&self) -> Vec<Domain>;

    fn init(&self) -> Vec<f64>;

    /// Fresh kernels for one chain, in sweep order.
    fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>>;

    fn data_digest(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub force: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 5000,
            burn_in: 2500,
            thin: 1,
            seed: 0,
            force: false,
        }
    }
}

impl ChainConfig {
    pub const MIN_RETAINED: usize = 100;

    pub fn new(chains: usize, iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            chains,
            iterations,
            burn_in,
            thin,
            seed,
            force: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn forced(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.retained() < Self::MIN_RETAINED {
            return Err(Error::Config(format!(
                "only {} retained draws per chain; at least {} are required",
                self.retained(),
                Self::MIN_RETAINED
            )));
        }
        Ok(())
    }
}

/// Per-run overrides on top of a model's defaults.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the model's initial state.
    pub init: Option<Vec<f64>>,
    /// Parameters held at their initial value.
    pub frozen: Vec<String>,
    /// Chain `c` draws from stream `stream_base + c`.
    pub stream_base: u64,
}

impl RunOptions {
    pub fn freeze(mut self, names: &[&str]) -> Self {
        self.frozen.extend(names.iter().map(|s| s.to_string()));
        self
    }

    pub fn with_init(mut self, init: Vec<f64>) -> Self {
        self.init = Some(init);
        self
    }

    pub fn with_stream_base(mut self, base: u64) -> Self {
        self.stream_base = base;
        self
    }
}

struct ChainOutput {
    draws: Vec<f64>,
    acceptance: Vec<(String, Option<f64>)>,
}

fn check_coverage(kernels: &[BoxedKernel<'_>], names: &[String]) -> Result<()> {
    if kernels.is_empty() {
        return Err(Error::Config("model supplied no kernels".into()));
    }
    let mut count = vec![0usize; names.len()];
    for k in kernels {
        for i in k.updates() {
            if i >= names.len() {
                return Err(Error::Config(format!("kernel `{}` updates unknown index {i}", k.name())));
            }
            count[i] += 1;
        }
    }
    let bad: Vec<String> = names
        .iter()
        .zip(&count)
        .filter(|(_, c)| **c != 1)
        .map(|(n, c)| format!("{n} ({c} kernels)"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Config(format!(
            "every parameter must be updated exactly once per sweep: {}",
            bad.join(", ")
        )));
    }
    Ok(())
}

fn run_chain<M: GibbsModel + ?Sized>(
    model: &M,
    config: &ChainConfig,
    init: &[f64],
    frozen: &[bool],
    names: &[String],
    domains: &[Domain],
    stream_id: u64,
) -> Result<ChainOutput> {
    let mut kernels = model.kernels()?;
    check_coverage(&kernels, names)?;
    let mut active = Vec::with_capacity(kernels.len());
    for k in kernels.iter_mut() {
        let upd = k.updates();
        let n_frozen = upd.iter().filter(|&&i| frozen[i]).count();
        if n_frozen == upd.len() {
            active.push(false);
            continue;
        }
        if n_frozen > 0 {
            return Err(Error::Config(format!(
                "kernel `{}` updates a mix of frozen and free parameters",
                k.name()
            )));
        }
        k.set_frozen(frozen);
        active.push(true);
    }
    let mut stream = RandomStream::new(config.seed, stream_id);
    let mut state = init.to_vec();
    let p = names.len();
    let mut draws = Vec::with_capacity(config.retained() * p);
    for iter in 0..config.iterations {
        let phase = if iter < config.burn_in { Phase::Warmup } else { Phase::Sampling };
        for (k, on) in kernels.iter_mut().zip(&active) {
            if !on {
                continue;
            }
            k.step(&mut state, &mut stream, phase)?;
            for i in k.updates().into_iter().chain(k.also_moves()) {
                if !domains[i].contains(state[i]) {
                    return Err(Error::OutOfDomain {
                        parameter: names[i].clone(),
                        iteration: iter,
                        value: state[i],
                    });
                }
            }
        }
        if iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0 {
            draws.extend_from_slice(&state);
        }
    }
    draws.truncate(config.retained() * p);
    let acceptance = kernels
        .iter()
        .map(|k| (k.name().to_string(), k.acceptance()))
        .collect();
    Ok(ChainOutput { draws, acceptance })
}

/// Runs every chain and returns draws plus diagnostics without gating.
pub fn run_chains<M: GibbsModel + ?Sized>(
    model: &M,
    config: &ChainConfig,
    options: &RunOptions,
) -> Result<(PosteriorDraws, Diagnostics)> {
    config.validate()?;
    let names = model.param_names();
    let domains = model.domains();
    let init = options.init.clone().unwrap_or_else(|| model.init());
    if init.len() != names.len() || domains.len() != names.len() {
        return Err(Error::Config(format!(
            "model declares {} parameters but init has {} values",
            names.len(),
            init.len()
        )));
    }
    for (i, v) in init.iter().enumerate() {
        if !domains[i].contains(*v) {
            return Err(Error::OutOfDomain {
                parameter: names[i].clone(),
                iteration: 0,
                value: *v,
            });
        }
    }
    let mut frozen = vec![false; names.len()];
    for f in &options.frozen {
        let i = names
            .iter()
            .position(|n| n == f)
            .ok_or_else(|| Error::Config(format!("cannot freeze unknown parameter `{f}`")))?;
        frozen[i] = true;
    }
    let outputs: Vec<Result<ChainOutput>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            run_chain(
                model,
                config,
                &init,
                &frozen,
                &names,
                &domains,
                options.stream_base + c as u64,
            )
        })
        .collect();
    let outputs: Vec<ChainOutput> = outputs.into_iter().collect::<Result<_>>()?;

    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for o in &outputs {
        for (name, a) in &o.acceptance {
            if let Some(a) = a {
                let e = acc.entry(name.clone()).or_insert((0.0, 0));
                e.0 += a;
                e.1 += 1;
            }
        }
    }
    let meta = DrawsMeta {
        model: model.tag(),
        seed: config.seed,
        data_digest: model.data_digest(),
        config: config.clone(),
    };
    let draws = PosteriorDraws::new(names, domains, outputs.into_iter().map(|o| o.draws).collect(), meta)?;
    let mut diag = diagnostics(&draws);
    diag.acceptance = acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    Ok((draws, diag))
}

/// Runs the chains and applies the convergence gate unless `config.force`.
pub fn run_gibbs<M: GibbsModel + ?Sized>(
    model: &M,
    config: &ChainConfig,
    options: &RunOptions,
) -> Result<(PosteriorDraws, Diagnostics)> {
    let (draws, diag) = run_chains(model, config, options)?;
    diag.gate(config.force)?;
    Ok((draws, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{sample_normal, sample_scaled_inv_chi2, ScaledInvChi2Params};

    /// Normal data with unknown mean and variance under `p(θ, σ²) ∝ 1/σ²`.
    struct Conjugate {
        y: Vec<f64>,
        with_kernels: bool,
    }

    impl GibbsModel for Conjugate {
        fn tag(&self) -> String {
            "conjugate".into()
        }
        fn param_names(&self) -> Vec<String> {
            vec!["theta".into(), "sigma2".into()]
        }
        fn domains(&self) -> Vec<Domain> {
            vec![Domain::Real, Domain::Positive]
        }
        fn init(&self) -> Vec<f64> {
            vec![0.0, 1.0]
        }
        fn data_digest(&self) -> String {
            String::new()
        }
        fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
            if !self.with_kernels {
                return Ok(Vec::new());
            }
            let y = &self.y;
            let n = y.len() as f64;
            let ybar = y.iter().sum::<f64>() / n;
            Ok(vec![
                Box::new(FnKernel::new("theta", vec![0], move |s: &mut [f64], r: &mut RandomStream| {
                    s[0] = sample_normal(r, ybar, s[1] / n)?;
                    Ok(())
                })),
                Box::new(FnKernel::new("sigma2", vec![1], move |s: &mut [f64], r: &mut RandomStream| {
                    let v = y.iter().map(|x| (x - s[0]).powi(2)).sum::<f64>() / n;
                    s[1] = sample_scaled_inv_chi2(r, ScaledInvChi2Params::new(n, v)?)?;
                    Ok(())
                })),
            ])
        }
    }

    fn cfg() -> ChainConfig {
        ChainConfig::new(4, 3000, 500, 1, 99)
    }

    #[test]
    fn posterior_mean_matches_conjugate_value() {
        let m = Conjugate {
            y: vec![1.2, 3.4, 2.2, 0.7, 2.9],
            with_kernels: true,
        };
        let (d, diag) = run_gibbs(&m, &cfg(), &RunOptions::default()).unwrap();
        let theta = d.column(0);
        let mean = hbm_testkit::mean(&theta);
        // marginal is t_{n-1}(ȳ, s²/n)
        let ybar = 2.08;
        let s2 = hbm_testkit::variance(&m.y);
        let sd = (s2 / 5.0 * 4.0 / 2.0).sqrt();
        let mcse = sd / diag.get("theta").unwrap().ess.sqrt();
        assert!((mean - ybar).abs() < 3.0 * mcse, "mean {mean}, mcse {mcse}");
    }

    #[test]
    fn zero_kernels_is_config_error() {
        let m = Conjugate {
            y: vec![1.0, 2.0],
            with_kernels: false,
        };
        assert!(matches!(run_gibbs(&m, &cfg(), &RunOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let m = Conjugate {
            y: vec![1.2, 3.4, 2.2, 0.7, 2.9],
            with_kernels: true,
        };
        let a = run_gibbs(&m, &cfg(), &RunOptions::default()).unwrap().0;
        let b = run_gibbs(&m, &cfg(), &RunOptions::default()).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_parameter_stays_put() {
        let m = Conjugate {
            y: vec![1.2, 3.4, 2.2, 0.7, 2.9],
            with_kernels: true,
        };
        let opts = RunOptions::default().freeze(&["sigma2"]).with_init(vec![0.0, 2.5]);
        let (d, _) = run_gibbs(&m, &cfg(), &opts).unwrap();
        assert!(d.column(1).iter().all(|v| *v == 2.5));
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig::new(0, 1000, 500, 1, 0).validate().is_err());
        assert!(ChainConfig::new(1, 1000, 1000, 1, 0).validate().is_err());
        assert!(ChainConfig::new(1, 1000, 950, 1, 0).validate().is_err());
        assert!(ChainConfig::new(1, 1000, 500, 0, 0).validate().is_err());
        assert_eq!(ChainConfig::new(1, 1000, 500, 3, 0).retained(), 166);
        assert!(ChainConfig::default().validate().is_ok());
    }

    struct Escapes;

    impl GibbsModel for Escapes {
        fn tag(&self) -> String {
            "escapes".into()
        }
        fn param_names(&self) -> Vec<String> {
            vec!["s2".into()]
        }
        fn domains(&self) -> Vec<Domain> {
            vec![Domain::Positive]
        }
        fn init(&self) -> Vec<f64> {
            vec![1.0]
        }
        fn data_digest(&self) -> String {
            String::new()
        }
        fn kernels(&self) -> Result<Vec<BoxedKernel<'_>>> {
            Ok(vec![Box::new(FnKernel::new("s2", vec![0], |s: &mut [f64], _: &mut RandomStream| {
                s[0] -= 0.4;
                Ok(())
            }))])
        }
    }

    #[test]
    fn out_of_domain_names_parameter_and_iteration() {
        match run_chains(&Escapes, &ChainConfig::new(1, 1000, 500, 1, 0), &RunOptions::default()) {
            Err(Error::OutOfDomain { parameter, iteration, .. }) => {
                assert_eq!(parameter, "s2");
                assert_eq!(iteration, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
