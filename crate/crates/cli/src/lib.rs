//! The `hbm` command line: estimate, fit, compare, simulate and report.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hbm_core::data::{load_table, save_table, LoadOptions, ObservationTable, Schema};
use hbm_core::estimators::estimate_all;
use hbm_core::ladder::{fit_table, summarize, FitOptions, PriorPack};
use hbm_core::mcmc::{ChainConfig, Diagnostics, Domain, DrawsMeta, PosteriorDraws};
use hbm_core::models::{Likelihood, ModelSpec, NuStrategy};
use hbm_core::report::{write_report, ReportInput};
use hbm_core::synthetic::{generate, GeneratorSpec};
use hbm_core::waic::{compare, fit_waic, WaicReport, WaicScale};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const LEVEL: f64 = 0.95;

/// A command-line mistake; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

/// A fit that ran but failed the convergence gate; exits with code 1.
#[derive(Debug)]
pub struct GateFailure {
    pub diagnostics: PathBuf,
    pub message: String,
}

impl fmt::Display for GateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (diagnostics: {})", self.message, self.diagnostics.display())
    }
}

impl std::error::Error for GateFailure {}

#[derive(Debug, Parser)]
#[command(name = "hbm", version, about = "Bayesian hierarchical models for grouped outcome data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Group summaries and the empirical hyperparameter estimates.
    Estimate(EstimateArgs),
    /// Fit one model of the ladder by MCMC.
    Fit(FitArgs),
    /// Rank fitted models by WAIC.
    Compare(CompareArgs),
    /// Generate a synthetic table from pinned parameters.
    Simulate(SimulateArgs),
    /// Plot-ready CSVs for a fit directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ColumnArgs {
    /// JSON column map; overrides the column flags.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long)]
    pub unit: Option<String>,
    /// Column holding the second, non-nested cluster.
    #[arg(long)]
    pub second_cluster: Option<String>,
    #[arg(long)]
    pub covariate: Option<String>,
    /// Column of education categories (sets years and level).
    #[arg(long)]
    pub education: Option<String>,
    /// Drop rows with a response ≤ 0.
    #[arg(long)]
    pub drop_nonpositive: bool,
    /// Average rows sharing a unit label before fitting.
    #[arg(long)]
    pub aggregate_by_unit: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// fixed, power:<h> or exponential.
    #[arg(long)]
    pub nu_strategy: Option<String>,
    /// Override for the moment estimate of ν.
    #[arg(long)]
    pub nu_hat: Option<f64>,
    /// laplace, normal or asymmetric-laplace:<q> (varying-both only).
    #[arg(long)]
    pub likelihood: Option<String>,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Write results even when R-hat exceeds the threshold.
    #[arg(long)]
    pub force: bool,
    /// JSON fit configuration, or a manifest.json from an earlier fit.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Fit output directories.
    pub dirs: Vec<PathBuf>,
    #[arg(long)]
    pub allow_incomparable: bool,
    /// Report `-(lppd - p_waic)/n` instead of the deviance scale.
    #[arg(long)]
    pub watanabe: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub dir: PathBuf,
    /// Data file; defaults to the path recorded in the manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults to `<dir>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Every setting of a fit. Flags override values read with `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub model: Option<String>,
    pub nu_strategy: Option<String>,
    pub nu_hat: Option<f64>,
    pub likelihood: Option<String>,
    pub schema: Option<Schema>,
    pub drop_nonpositive: bool,
    pub aggregate_by_unit: bool,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub max_rhat: Option<f64>,
    pub min_ess: f64,
    pub converged: bool,
    pub unconverged: Vec<String>,
}

impl DiagnosticsSummary {
    fn new(d: &Diagnostics) -> Self {
        let unconverged = d.unconverged(hbm_core::mcmc::diagnostics::RHAT_THRESHOLD);
        Self {
            max_rhat: d.max_rhat(),
            min_ess: d.min_ess(),
            converged: unconverged.is_empty(),
            unconverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub command_line: Vec<String>,
    pub version: String,
    pub model: String,
    pub seed: u64,
    pub data_path: PathBuf,
    pub data_digest: String,
    pub config_digest: String,
    pub config: FitConfig,
    pub wall_clock_seconds: f64,
    pub diagnostics: DiagnosticsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub spec: ModelSpec,
    pub model: String,
    pub likelihood: Likelihood,
    pub draws: DrawsMeta,
    pub names: Vec<String>,
    pub domains: Vec<Domain>,
    pub n_chains: usize,
    pub priors: Option<PriorPack>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub model: String,
    pub level: f64,
    pub params: Vec<hbm_core::ladder::ParamSummary>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let line: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, &line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<hbm_core::Error>() {
        Some(hbm_core::Error::UnknownModel(_)) => 2,
        _ => 1,
    }
}

pub fn dispatch(cli: Cli, line: &[String]) -> Result<()> {
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Fit(a) => cmd_fit(a, line),
        Command::Compare(a) => cmd_compare(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Applies the column flags on top of `base`.
fn build_schema(base: Option<Schema>, c: &ColumnArgs) -> Result<Schema> {
    let mut s = match &c.schema {
        Some(p) => Schema::from_json_file(p)?,
        None => base.unwrap_or_else(|| Schema::new("group", "response")),
    };
    if let Some(v) = &c.group {
        s.group = v.clone();
    }
    if let Some(v) = &c.response {
        s.response = v.clone();
    }
    if c.unit.is_some() {
        s.unit = c.unit.clone();
    }
    if c.second_cluster.is_some() {
        s.second = c.second_cluster.clone();
    }
    if c.covariate.is_some() {
        s.covariate = c.covariate.clone();
    }
    if c.education.is_some() {
        s.education = c.education.clone();
    }
    Ok(s)
}

fn load(path: &Path, schema: &Schema, drop_nonpositive: bool, aggregate: bool) -> Result<ObservationTable> {
    let t = load_table(path, schema, LoadOptions { drop_nonpositive })
        .with_context(|| format!("loading {}", path.display()))?;
    if t.nonpositive_count() > 0 {
        eprintln!("warning: {} rows have a response <= 0", t.nonpositive_count());
    }
    if t.dropped_count() > 0 {
        eprintln!("warning: dropped {} rows with a response <= 0", t.dropped_count());
    }
    if aggregate {
        if schema.unit.is_none() {
            return usage("--aggregate-by-unit needs a unit column");
        }
        return Ok(t.aggregate_by_unit()?);
    }
    Ok(t)
}

pub fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let schema = build_schema(None, &a.columns)?;
    let t = load(&a.data, &schema, a.columns.drop_nonpositive, a.columns.aggregate_by_unit)?;
    let s = t.grouped(hbm_core::data::Grouping::Group)?.summaries();
    create_dir(&a.out)?;
    write_json(&a.out.join("summaries.json"), &s)?;
    let e = estimate_all(&s);
    for w in &e.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&a.out.join("estimates.json"), &e)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn parse_likelihood(s: &str) -> Result<Likelihood> {
    match s {
        "laplace" => Ok(Likelihood::Laplace),
        "normal" => Ok(Likelihood::Normal),
        _ => {
            let Some(q) = s.strip_prefix("asymmetric-laplace:") else {
                return usage(format!("unknown likelihood `{s}` (expected laplace, normal or asymmetric-laplace:<q>)"));
            };
            match q.parse::<f64>() {
                Ok(q) if q > 0.0 && q < 1.0 => Ok(Likelihood::AsymmetricLaplace { quantile: q }),
                _ => usage(format!("quantile `{q}` must lie in (0, 1)")),
            }
        }
    }
}

fn read_config(path: &Path) -> Result<FitConfig> {
    let v: serde_json::Value = read_json(path)?;
    let v = match v.get("config") {
        Some(c) if v.get("schema_version").is_some() => c.clone(),
        _ => v,
    };
    serde_json::from_value(v).with_context(|| format!("parsing {}", path.display()))
}

/// Merges flags over the config file and fills defaults.
pub fn resolve_fit_config(a: &FitArgs) -> Result<FitConfig> {
    let base = match &a.config {
        Some(p) => read_config(p)?,
        None => FitConfig::default(),
    };
    let d = ChainConfig::default();
    let c = FitConfig {
        data: a.data.clone().or(base.data),
        model: a.model.clone().or(base.model),
        nu_strategy: a.nu_strategy.clone().or(base.nu_strategy),
        nu_hat: a.nu_hat.or(base.nu_hat),
        likelihood: a.likelihood.clone().or(base.likelihood),
        schema: Some(build_schema(base.schema, &a.columns)?),
        drop_nonpositive: a.columns.drop_nonpositive || base.drop_nonpositive,
        aggregate_by_unit: a.columns.aggregate_by_unit || base.aggregate_by_unit,
        seed: a.seed.or(base.seed),
        chains: Some(a.chains.or(base.chains).unwrap_or(d.chains)),
        iterations: Some(a.iterations.or(base.iterations).unwrap_or(d.iterations)),
        burn_in: Some(a.burn_in.or(base.burn_in).unwrap_or(d.burn_in)),
        thin: Some(a.thin.or(base.thin).unwrap_or(d.thin)),
        force: a.force || base.force,
    };
    if c.data.is_none() {
        return usage("no data file given");
    }
    if c.model.is_none() {
        return usage("--model is required");
    }
    if c.seed.is_none() {
        return usage("--seed is required");
    }
    Ok(c)
}

fn model_spec(c: &FitConfig) -> Result<ModelSpec> {
    let tag = c.model.as_deref().unwrap_or_default();
    let nu = match &c.nu_strategy {
        Some(s) => match s.parse::<NuStrategy>() {
            Ok(n) => Some(n),
            Err(e) => return usage(e.to_string()),
        },
        None => None,
    };
    let spec = ModelSpec::parse(tag, nu)?;
    if nu.is_some() && !matches!(spec, ModelSpec::HierVarying { .. }) {
        return usage("--nu-strategy applies to hier-varying only");
    }
    let schema = c.schema.as_ref().expect("resolved");
    match spec {
        ModelSpec::TwoCluster if schema.second.is_none() && schema.education.is_none() => {
            usage("two-cluster needs --second-cluster <column>")
        }
        ModelSpec::Regression { .. } if schema.covariate.is_none() && schema.education.is_none() => {
            usage(format!("{tag} needs --covariate <column>"))
        }
        _ => Ok(spec),
    }
}

fn chain_config(c: &FitConfig) -> ChainConfig {
    ChainConfig::new(
        c.chains.unwrap_or_default(),
        c.iterations.unwrap_or_default(),
        c.burn_in.unwrap_or_default(),
        c.thin.unwrap_or_default(),
        c.seed.unwrap_or_default(),
    )
}

pub fn cmd_fit(a: FitArgs, line: &[String]) -> Result<()> {
    let start = Instant::now();
    let c = resolve_fit_config(&a)?;
    let spec = model_spec(&c)?;
    let likelihood = match &c.likelihood {
        Some(s) => parse_likelihood(s)?,
        None => FitOptions::default().likelihood,
    };
    let config = chain_config(&c);
    if let Err(e) = config.validate() {
        return usage(e.to_string());
    }
    let data_path = c.data.clone().expect("resolved");
    let schema = c.schema.clone().expect("resolved");
    let table = load(&data_path, &schema, c.drop_nonpositive, c.aggregate_by_unit)?;
    let options = FitOptions {
        likelihood,
        nu_hat: c.nu_hat,
    };
    let out = fit_table(&table, spec, &options, &config.clone().forced(true))?;
    let fit = &out.fit;
    create_dir(&a.out)?;
    fit.draws.write_csv(&a.out)?;
    let mut warnings = fit.warnings.clone();
    let meta = FitMeta {
        spec,
        model: spec.tag(),
        likelihood,
        draws: fit.draws.meta().clone(),
        names: fit.draws.names().to_vec(),
        domains: fit.draws.domains().to_vec(),
        n_chains: fit.draws.n_chains(),
        priors: out.priors.clone(),
        warnings: warnings.clone(),
    };
    write_json(&a.out.join("meta.json"), &meta)?;
    write_json(
        &a.out.join("summary.json"),
        &SummaryFile {
            model: spec.tag(),
            level: LEVEL,
            params: summarize(&fit.draws, &fit.diagnostics, LEVEL),
        },
    )?;
    let diag_path = a.out.join("diagnostics.json");
    write_json(&diag_path, &fit.diagnostics)?;
    match fit_waic(fit, WaicScale::Deviance) {
        Ok(w) => write_json(&a.out.join("waic.json"), &w)?,
        Err(e) => {
            warnings.push(format!("WAIC not computed: {e}"));
            eprintln!("warning: WAIC not computed: {e}");
        }
    }
    let config_json = serde_json::to_string(&c)?;
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA,
        command: "fit".into(),
        command_line: line.to_vec(),
        version: env!("CARGO_PKG_VERSION").into(),
        model: spec.tag(),
        seed: config.seed,
        data_path: std::fs::canonicalize(&data_path).unwrap_or(data_path),
        data_digest: table.digest(),
        config_digest: sha256_hex(config_json.as_bytes()),
        config: c.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        diagnostics: DiagnosticsSummary::new(&fit.diagnostics),
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Err(e) = fit.diagnostics.gate(c.force) {
        return Err(GateFailure {
            diagnostics: diag_path,
            message: format!("{e}; rerun with more iterations or --force"),
        }
        .into());
    }
    println!(
        "{}: {} draws x {} parameters, max R-hat {}, wrote {}",
        spec.tag(),
        fit.draws.n_draws(),
        fit.draws.n_params(),
        manifest.diagnostics.max_rhat.map_or("n/a".to_string(), |r| format!("{r:.3}")),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TableRow<'a> {
    model: &'a str,
    lppd: f64,
    p_waic: f64,
    waic: f64,
    se: f64,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Serialize)]
struct PlotRow<'a> {
    x: &'a str,
    y: f64,
    lo: f64,
    hi: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn rescale(r: WaicReport, scale: WaicScale) -> Result<WaicReport> {
    if r.scale == scale {
        return Ok(r);
    }
    Ok(WaicReport::from_pointwise(
        &r.model,
        &r.data_digest,
        &r.observation_kind,
        r.n_draws,
        r.pointwise,
        scale,
    )?)
}

pub fn cmd_compare(a: CompareArgs) -> Result<()> {
    if a.dirs.len() < 2 {
        return usage(format!("compare needs at least 2 fit directories, got {}", a.dirs.len()));
    }
    let scale = if a.watanabe { WaicScale::Watanabe } else { WaicScale::Deviance };
    let reports = a
        .dirs
        .iter()
        .map(|d| {
            let p = d.join("waic.json");
            if !p.exists() {
                bail!("{} has no waic.json", d.display());
            }
            rescale(read_json(&p)?, scale)
        })
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare(&reports, a.allow_incomparable)?;
    let out = a.out.unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;
    let table: Vec<TableRow> = cmp
        .rows
        .iter()
        .map(|r| TableRow {
            model: &r.model,
            lppd: r.lppd,
            p_waic: r.p_waic,
            waic: r.waic,
            se: r.se,
            lo: r.lo,
            hi: r.hi,
        })
        .collect();
    write_csv(&out.join("waic_table.csv"), &table)?;
    let plot: Vec<PlotRow> = cmp
        .rows
        .iter()
        .map(|r| PlotRow {
            x: &r.model,
            y: r.waic,
            lo: r.lo,
            hi: r.hi,
        })
        .collect();
    write_csv(&out.join("waic_intervals.csv"), &plot)?;
    let text = cmp.to_text();
    std::fs::write(out.join("waic_table.txt"), &text)?;
    write_json(&out.join("comparison.json"), &cmp)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = GeneratorSpec::from_json_file(&a.spec)?;
    match a.seed {
        Some(s) => spec.seed = s,
        None => return usage("--seed is required"),
    }
    let (table, truth) = generate(&spec)?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_table(&table, &a.out)?;
    let truth_path = a.truth.unwrap_or_else(|| a.out.with_extension("truth.json"));
    write_json(&truth_path, &truth)?;
    println!("wrote {} rows to {} and truth to {}", table.len(), a.out.display(), truth_path.display());
    Ok(())
}

pub fn cmd_report(a: ReportArgs) -> Result<()> {
    let expected = ["manifest.json", "meta.json"];
    let missing: Vec<&str> = expected.iter().copied().filter(|f| !a.dir.join(f).exists()).collect();
    if !missing.is_empty() {
        bail!("{} is missing {}", a.dir.display(), missing.join(", "));
    }
    let manifest: RunManifest = read_json(&a.dir.join("manifest.json"))?;
    let meta: FitMeta = read_json(&a.dir.join("meta.json"))?;
    let chains: Vec<String> = (0..meta.n_chains).map(|c| format!("draws_chain{c}.csv")).collect();
    let missing: Vec<&String> = chains.iter().filter(|f| !a.dir.join(f).exists()).collect();
    if !missing.is_empty() {
        bail!(
            "{} is missing {}",
            a.dir.display(),
            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    if sha256_hex(serde_json::to_string(&manifest.config)?.as_bytes()) != manifest.config_digest {
        bail!("manifest config digest does not match its config");
    }
    let data_path = a.data.unwrap_or_else(|| manifest.data_path.clone());
    let c = &manifest.config;
    let schema = c.schema.clone().context("manifest has no schema")?;
    let table = load(&data_path, &schema, c.drop_nonpositive, c.aggregate_by_unit)?;
    if table.digest() != manifest.data_digest {
        bail!("{} does not match the data digest recorded in the manifest", data_path.display());
    }
    let draws = PosteriorDraws::read_csv(&a.dir, meta.n_chains, meta.domains.clone(), meta.draws.clone())?;
    let out = a.out.unwrap_or_else(|| a.dir.join("report"));
    let (written, warnings) = write_report(
        &out,
        &ReportInput {
            spec: meta.spec,
            draws: &draws,
            table: &table,
            likelihood: meta.likelihood,
            seed: manifest.seed,
        },
    )?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}
