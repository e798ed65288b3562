//! Retained posterior draws and their CSV/JSON persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainConfig, Domain};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub model: String,
    pub seed: u64,
    pub data_digest: String,
    pub config: ChainConfig,
}

/// Retained draws, one row-major `[draw × parameter]` matrix per chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    domains: Vec<Domain>,
    chains: Vec<Vec<f64>>,
    meta: DrawsMeta,
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, domains: Vec<Domain>, chains: Vec<Vec<f64>>, meta: DrawsMeta) -> Result<Self> {
        let p = names.len();
        if domains.len() != p {
            return Err(Error::Config("names and domains differ in length".into()));
        }
        if chains.is_empty() || chains.iter().any(|c| c.len() % p.max(1) != 0) {
            return Err(Error::Config("draw matrices are ragged".into()));
        }
        let rows = chains[0].len() / p.max(1);
        if chains.iter().any(|c| c.len() / p.max(1) != rows) {
            return Err(Error::Config("chains retain different numbers of draws".into()));
        }
        Ok(Self {
            names,
            domains,
            chains,
            meta,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn meta(&self) -> &DrawsMeta {
        &self.meta
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_per_chain(&self) -> usize {
        self.chains[0].len() / self.n_params().max(1)
    }

    /// Total retained draws over all chains.
    pub fn n_draws(&self) -> usize {
        self.n_chains() * self.n_per_chain()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn chain(&self, c: usize) -> &[f64] {
        &self.chains[c]
    }

    /// Draw `s` of chain `c`.
    pub fn row(&self, c: usize, s: usize) -> &[f64] {
        let p = self.n_params();
        &self.chains[c][s * p..(s + 1) * p]
    }

    /// Every retained row in chain-major order.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let p = self.n_params();
        self.chains.iter().flat_map(move |c| c.chunks_exact(p))
    }

    pub fn column_by_chain(&self, k: usize) -> Vec<Vec<f64>> {
        let p = self.n_params();
        self.chains.iter().map(|c| c.iter().skip(k).step_by(p).copied().collect()).collect()
    }

    /// Column `k` of all chains concatenated in chain order.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.column_by_chain(k).concat()
    }

    pub fn column_named(&self, name: &str) -> Result<Vec<f64>> {
        self.index_of(name)
            .map(|k| self.column(k))
            .ok_or_else(|| Error::Config(format!("no parameter named `{name}`")))
    }

    pub fn mean_named(&self, name: &str) -> Result<f64> {
        let c = self.column_named(name)?;
        Ok(c.iter().sum::<f64>() / c.len() as f64)
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.n_params())
            .map(|k| {
                let c = self.column(k);
                c.iter().sum::<f64>() / c.len() as f64
            })
            .collect()
    }

    /// Appends derived columns computed from each row.
    pub fn with_derived(
        &self,
        names: Vec<String>,
        domains: Vec<Domain>,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let p = self.n_params();
        let chains = self
            .chains
            .iter()
            .map(|c| {
                c.chunks_exact(p)
                    .flat_map(|row| {
                        let mut r = row.to_vec();
                        r.extend(f(row));
                        r
                    })
                    .collect()
            })
            .collect();
        let mut all_names = self.names.clone();
        all_names.extend(names);
        let mut all_domains = self.domains.clone();
        all_domains.extend(domains);
        Self::new(all_names, all_domains, chains, self.meta.clone())
    }

    /// Checks finiteness, positivity of variance-like columns and the
    /// correlation range.
    pub fn validate(&self) -> Result<()> {
        let p = self.n_params();
        for c in &self.chains {
            for (i, v) in c.iter().enumerate() {
                let k = i % p;
                if !self.domains[k].contains(*v) {
                    return Err(Error::OutOfDomain {
                        parameter: self.names[k].clone(),
                        iteration: i / p,
                        value: *v,
                    });
                }
            }
        }
        Ok(())
    }

    /// Writes `draws_chain<k>.csv` for every chain.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        for c in 0..self.n_chains() {
            let path = dir.join(format!("draws_chain{c}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&self.names)?;
            for s in 0..self.n_per_chain() {
                w.write_record(self.row(c, s).iter().map(|v| v.to_string()))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads draws written by [`write_csv`](Self::write_csv).
    pub fn read_csv(dir: &Path, n_chains: usize, domains: Vec<Domain>, meta: DrawsMeta) -> Result<Self> {
        let mut names = Vec::new();
        let mut chains = Vec::new();
        for c in 0..n_chains {
            let path = dir.join(format!("draws_chain{c}.csv"));
            let mut r = csv::Reader::from_path(&path)?;
            names = r.headers()?.iter().map(str::to_string).collect();
            let mut data = Vec::new();
            for (i, rec) in r.records().enumerate() {
                for (k, field) in rec?.iter().enumerate() {
                    data.push(field.parse::<f64>().map_err(|_| Error::Parse {
                        row: i + 2,
                        column: names.get(k).cloned().unwrap_or_default(),
                        message: format!("`{field}` is not a number"),
                    })?);
                }
            }
            chains.push(data);
        }
        Self::new(names, domains, chains, meta)
    }
}
