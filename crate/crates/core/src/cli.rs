//! The `roleplex` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 finished with
//! failed instances recorded in the run log.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{self, report, AnalysisBundle};
use crate::backends::mock::Fallback;
use crate::backends::{
    ChatBackend, Embedder, HashEmbedder, HttpBackend, HttpConfig, HttpEmbedder, MockBackend,
    MockScript, Sampling,
};
use crate::harness::{self, ExecOptions, ExperimentPlan};
use crate::protocol::ProtocolOptions;
use crate::roles::{self, Provenance, RoleFile, RoleLibrary};
use crate::types::{ExpertGroup, Paradigm};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "roleplex",
    version,
    about = "Sequential multi-agent reasoning experiments"
)]
pub struct Cli {
    /// JSON config with backend profiles and directories.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a size-3 roster with an LLM and store it in the roles directory.
    GenRoles(GenRolesArgs),
    /// Grow a stored size-3 roster to 6 or 10 experts.
    AugmentRoles(AugmentArgs),
    /// Execute an experiment plan, appending to its run log.
    Run(RunArgs),
    /// Compute metrics from a run log.
    Analyze(AnalyzeArgs),
    /// Re-render report files from a saved analysis.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenRolesArgs {
    #[arg(long, value_parser = parse_group)]
    pub group: ExpertGroup,
    #[arg(long, value_parser = parse_paradigm)]
    pub paradigm: Paradigm,
    #[arg(long, default_value_t = 3)]
    pub size: usize,
    #[arg(long, default_value = "mock")]
    pub backend: String,
    /// Overwrite an existing role file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Size-3 role file to grow.
    pub file: PathBuf,
    #[arg(long)]
    pub target_size: usize,
    #[arg(long, default_value = "mock")]
    pub backend: String,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub plan: PathBuf,
    /// Run log path; defaults to `<runs_dir>/<plan stem>.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Stop after writing this many new records.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub log: PathBuf,
    /// Output directory; defaults to the configured reports directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub diversity: bool,
    #[arg(long)]
    pub scaling: bool,
    /// Dataset to sample for the relevance matrix.
    #[arg(long)]
    pub relevance: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    pub relevance_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Backend profile used for relevance queries.
    #[arg(long, default_value = "mock")]
    pub backend: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub dir: PathBuf,
}

fn parse_group(s: &str) -> Result<ExpertGroup, String> {
    ExpertGroup::parse(s).map_err(|e| e.to_string())
}

fn parse_paradigm(s: &str) -> Result<Paradigm, String> {
    Paradigm::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendProfile {
    Http {
        endpoint: String,
        model: String,
        /// Environment variable holding the bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    Mock {
        #[serde(default)]
        script: Option<PathBuf>,
        #[serde(default)]
        fallback: Option<Fallback>,
    },
}

fn default_timeout() -> u64 {
    600
}

fn default_in_flight() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderProfile {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

fn default_dim() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub backends: BTreeMap<String, BackendProfile>,
    #[serde(default)]
    pub embedder: Option<EmbedderProfile>,
    #[serde(default = "default_roles_dir")]
    pub roles_dir: PathBuf,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
    #[serde(default = "default_reports_dir")]
    pub reports_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub sampling: Option<Sampling>,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_roles_dir() -> PathBuf {
    "roles".into()
}
fn default_runs_dir() -> PathBuf {
    "runs".into()
}
fn default_reports_dir() -> PathBuf {
    "reports".into()
}
fn default_parallelism() -> usize {
    4
}
fn default_retries() -> u32 {
    1
}

impl Default for Config {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config")
    }
}

impl Config {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Config =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.roles_dir, &mut cfg.runs_dir, &mut cfg.reports_dir] {
            *p = base.join(&*p);
        }
        for profile in cfg.backends.values_mut() {
            if let BackendProfile::Mock {
                script: Some(s), ..
            } = profile
            {
                *s = base.join(&*s);
            }
        }
        if cfg.parallelism == 0 {
            bail!("parallelism must be >= 1");
        }
        Ok(cfg)
    }

    /// Named profile; `mock` falls back to a synthetic mock when not configured.
    pub fn backend(&self, name: &str) -> Result<Box<dyn ChatBackend>> {
        let profile = match self.backends.get(name) {
            Some(p) => p.clone(),
            None if name == "mock" => BackendProfile::Mock {
                script: None,
                fallback: Some(Fallback::Synthetic),
            },
            None => bail!("no backend profile named {name:?}"),
        };
        Ok(match profile {
            BackendProfile::Http {
                endpoint,
                model,
                api_key_env,
                timeout_secs,
                max_in_flight,
            } => {
                let mut cfg = HttpConfig::new(endpoint, model);
                cfg.api_key = read_key(api_key_env.as_deref())?;
                cfg.timeout_secs = timeout_secs;
                cfg.max_in_flight = max_in_flight;
                Box::new(HttpBackend::new(cfg)?)
            }
            BackendProfile::Mock { script, fallback } => {
                let mut s = match script {
                    Some(p) => {
                        let text = fs::read_to_string(&p)
                            .with_context(|| format!("reading mock script {}", p.display()))?;
                        MockScript::from_json(&text)
                            .with_context(|| format!("parsing mock script {}", p.display()))?
                    }
                    None => MockScript::default(),
                };
                if let Some(f) = fallback {
                    s.fallback = f;
                }
                Box::new(MockBackend::new(s))
            }
        })
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>> {
        Ok(
            match self
                .embedder
                .clone()
                .unwrap_or(EmbedderProfile::Hash { dim: default_dim() })
            {
                EmbedderProfile::Hash { dim } => Box::new(HashEmbedder::new(dim)),
                EmbedderProfile::Http {
                    endpoint,
                    model,
                    api_key_env,
                } => Box::new(HttpEmbedder::new(
                    endpoint,
                    model,
                    read_key(api_key_env.as_deref())?,
                )?),
            },
        )
    }

    pub fn library(&self) -> Result<RoleLibrary> {
        if self.roles_dir.is_dir() {
            Ok(RoleLibrary::load_dir(&self.roles_dir)?)
        } else {
            Ok(RoleLibrary::shipped())
        }
    }
}

fn read_key(var: Option<&str>) -> Result<Option<String>> {
    match var {
        None => Ok(None),
        Some(v) => std::env::var(v)
            .map(Some)
            .map_err(|_| anyhow!("environment variable {v} is not set")),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("roleplex=info")),
        )
        .try_init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::GenRoles(a) => gen_roles(&cfg, a),
        Command::AugmentRoles(a) => augment_roles(&cfg, a),
        Command::Run(a) => run_plan(&cfg, a),
        Command::Analyze(a) => analyze(&cfg, a),
        Command::Report(a) => {
            let bundle = AnalysisBundle::load(&a.dir)?;
            for p in report::write_report(&bundle, &a.dir)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(0)
        }
    }
}

fn gen_roles(cfg: &Config, a: GenRolesArgs) -> Result<u8> {
    if a.size != 3 {
        bail!("gen-roles only produces size-3 rosters; use augment-roles for larger ones");
    }
    let backend = cfg.backend(&a.backend)?;
    let roster = roles::generate_roster(backend.as_ref(), a.group, a.paradigm)?;
    let file = RoleFile::from_roster(&roster, Provenance::Generated);
    let path = roles::write_role_file(&cfg.roles_dir, &file, a.force)?;
    println!("{}", path.display());
    Ok(0)
}

fn augment_roles(cfg: &Config, a: AugmentArgs) -> Result<u8> {
    if a.target_size != 6 && a.target_size != 10 {
        bail!("--target-size must be 6 or 10");
    }
    let base = roles::read_role_file(&a.file)?.to_roster()?;
    let backend = cfg.backend(&a.backend)?;
    let grown = roles::augment_roster(backend.as_ref(), &base, a.target_size)?;
    let file = RoleFile::from_roster(&grown, Provenance::Augmented);
    let path = roles::write_role_file(&cfg.roles_dir, &file, a.force)?;
    println!("{}", path.display());
    Ok(0)
}

fn run_plan(cfg: &Config, a: RunArgs) -> Result<u8> {
    let plan = ExperimentPlan::load(&a.plan)?;
    let dataset = if plan.dataset_path.is_relative() {
        a.plan
            .parent()
            .unwrap_or(Path::new(""))
            .join(&plan.dataset_path)
    } else {
        plan.dataset_path.clone()
    };
    let instances = harness::load_dataset(&dataset)?;
    let library = cfg.library()?;
    let backend = cfg.backend(&plan.backend)?;
    let log = a.log.unwrap_or_else(|| {
        let stem = a
            .plan
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or("run".into());
        cfg.runs_dir.join(format!("{stem}.jsonl"))
    });
    let sampling = plan
        .sampling
        .clone()
        .or_else(|| cfg.sampling.clone())
        .unwrap_or_default();
    let opts = ExecOptions {
        backend_profile: plan.backend.clone(),
        protocol: ProtocolOptions {
            sampling,
            retries: cfg.retries,
        },
        parallelism: a.parallelism.unwrap_or(cfg.parallelism).max(1),
        stop_after: a.stop_after,
    };
    let summary =
        harness::execute_plan(&plan, &instances, &library, backend.as_ref(), &log, &opts)?;
    eprintln!(
        "{}: {} jobs, {} already logged, {} written, {} failed",
        log.display(),
        summary.total_jobs,
        summary.skipped,
        summary.written,
        summary.failures
    );
    Ok(if summary.failures > 0 {
        EXIT_PARTIAL
    } else {
        0
    })
}

fn analyze(cfg: &Config, a: AnalyzeArgs) -> Result<u8> {
    if !a.log.is_file() {
        bail!("run log {} does not exist", a.log.display());
    }
    let records = harness::read_run_log(&a.log)?;
    let matrix = analysis::compute_accuracy_matrix(&records)?;
    let mut bundle = AnalysisBundle::default();
    bundle.set_accuracy(&matrix);
    match analysis::compute_alignment_deltas(&matrix, &analysis::default_alignment()) {
        Ok(d) => {
            bundle.contextual_mean = analysis::contextual_mean_delta_rel(&d)
                .into_iter()
                .map(
                    |((paradigm, size), mean_delta_rel)| report::ContextualMean {
                        paradigm,
                        size,
                        mean_delta_rel,
                    },
                )
                .collect();
            bundle.deltas = d;
        }
        Err(e) => bundle.notes.push(format!("alignment deltas skipped: {e}")),
    }
    bundle.paradigms = analysis::compare_paradigms(&matrix);
    if a.scaling {
        match analysis::compute_scaling_report(&matrix, 3) {
            Ok(s) => {
                bundle.notes.extend(s.skipped.iter().map(|k| {
                    format!(
                        "pot skipped for {}/{}/{}/{}: {}",
                        k.cell.task_domain,
                        k.cell.expert_group,
                        k.cell.paradigm,
                        k.cell.size,
                        k.note
                    )
                }));
                bundle.scaling = Some(s);
            }
            Err(e) => bundle.notes.push(format!("scaling skipped: {e}")),
        }
    }
    if a.diversity {
        let embedder = cfg.embedder()?;
        bundle.diversity = Some(analysis::compute_diversity(&records, embedder.as_ref())?);
    }
    if let Some(ds) = &a.relevance {
        let instances = harness::load_dataset(ds)?;
        let backend = cfg.backend(&a.backend)?;
        bundle.relevance = Some(analysis::build_relevance_matrix(
            &instances,
            backend.as_ref(),
            a.relevance_samples,
            a.seed,
        )?);
    }
    let out = a.out.unwrap_or_else(|| cfg.reports_dir.clone());
    bundle.save(&out)?;
    for p in report::write_report(&bundle, &out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(0)
}
