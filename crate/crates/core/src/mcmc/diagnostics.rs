//! Split R-hat and multi-chain effective sample size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};

/// Reported when within-chain variance vanishes but chains disagree.
pub const RHAT_DIVERGED: f64 = 1e10;

/// Gate applied by fit operations.
pub const RHAT_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub rhat: Option<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostics>,
    /// Post-warmup acceptance rate per Metropolis block, averaged over chains.
    pub acceptance: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.params.iter().filter_map(|p| p.rhat).reduce(f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Parameters whose R-hat exceeds `threshold`.
    pub fn unconverged(&self, threshold: f64) -> Vec<String> {
        self.params
            .iter()
            .filter(|p| p.rhat.is_some_and(|r| r > threshold))
            .map(|p| format!("{} (R-hat {:.4})", p.name, p.rhat.unwrap_or_default()))
            .collect()
    }

    /// Errors when any R-hat exceeds the gate unless `force` is set.
    pub fn gate(&self, force: bool) -> Result<()> {
        let bad = self.unconverged(RHAT_THRESHOLD);
        if bad.is_empty() || force {
            Ok(())
        } else {
            Err(Error::NotConverged(bad))
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    // the rounded mean of a constant sequence can differ from its value
    if x.iter().all(|v| *v == x[0]) {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split R-hat of per-chain sequences; `None` for a single chain.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    if half < 2 {
        return None;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| var(h)).sum::<f64>() / halves.len() as f64;
    let b = half as f64 * var(&means);
    if w == 0.0 {
        return Some(if b == 0.0 { 1.0 } else { RHAT_DIVERGED });
    }
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Some((var_plus / w).sqrt())
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for t in 0..n - lag {
        s += (x[t] - m) * (x[t + lag] - m);
    }
    s / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let chain_vars: Vec<f64> = chains.iter().map(|c| var(c)).collect();
    let w = mean(&chain_vars);
    if w == 0.0 {
        return total;
    }
    let nf = n as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let var_plus = if m > 1 {
        (nf - 1.0) / nf * w + var(&chain_means)
    } else {
        (nf - 1.0) / nf * w
    };
    let rho = |lag: usize| {
        let ac = chains
            .iter()
            .zip(&chain_means)
            .map(|(c, cm)| autocov(c, *cm, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - ac) / var_plus
    };
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev {
            pair = prev;
        }
        sum_pairs += pair;
        prev = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total * total.log10().max(1.0))
}

pub fn diagnostics(draws: &PosteriorDraws) -> Diagnostics {
    let single = draws.n_chains() < 2;
    let params = (0..draws.n_params())
        .map(|k| {
            let chains = draws.column_by_chain(k);
            ParamDiagnostics {
                name: draws.names()[k].clone(),
                rhat: split_rhat(&chains),
                ess: ess(&chains),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if single {
        warnings.push("single chain: R-hat omitted".to_string());
    }
    Diagnostics {
        params,
        acceptance: BTreeMap::new(),
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::standard_normal;
    use crate::random::RandomStream;

    #[test]
    fn constant_chains() {
        let chains = vec![vec![3.0; 500]; 4];
        assert_eq!(split_rhat(&chains), Some(1.0));
        assert_eq!(ess(&chains), 2000.0);
    }

    #[test]
    fn iid_normal_chains_converge() {
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                let mut s = RandomStream::new(5, c);
                (0..1000).map(|_| standard_normal(&mut s)).collect()
            })
            .collect();
        let r = split_rhat(&chains).unwrap();
        assert!(r < 1.01, "rhat {r}");
        let e = ess(&chains);
        assert!(e > 3000.0 && e < 5500.0, "ess {e}");
    }

    #[test]
    fn separated_constant_chains_fail() {
        let chains = vec![vec![0.0; 200], vec![10.0; 200]];
        assert!(split_rhat(&chains).unwrap() > 1.1);
    }

    #[test]
    fn long_constant_chain_is_cheap_and_capped() {
        let chains = vec![vec![0.1 + 0.2; 100_000]];
        assert_eq!(ess(&chains), 100_000.0);
    }

    #[test]
    fn single_chain_has_no_rhat() {
        assert_eq!(split_rhat(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]), None);
    }

    #[test]
    fn autocorrelated_chain_has_reduced_ess() {
        let mut s = RandomStream::new(9, 0);
        let mut x = 0.0;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                (0..2000)
                    .map(|_| {
                        x = 0.9 * x + standard_normal(&mut s);
                        x
                    })
                    .collect()
            })
            .collect();
        // AR(1) with φ = 0.9 has integrated time (1+φ)/(1-φ) = 19
        let e = ess(&chains);
        assert!(e > 8000.0 / 19.0 * 0.6 && e < 8000.0 / 19.0 * 1.5, "ess {e}");
    }
}
