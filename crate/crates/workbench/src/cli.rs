//! The `fomcert` command line.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use fomcert_core::model_ir::{self, Compiled};
use fomcert_core::verifier::{CutMode, Verifier, VerifyError};
use fomcert_milp::Backend;

use crate::baseline;
use crate::config::{ConfigError, ExperimentConfig};
use crate::output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_EPSILON: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fomcert", version, about = "Worst-case fixed-point residuals of first-order methods via MILP")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the verification problems for K = 1..=kmax.
    Verify(CommonArgs),
    /// Compute only the sample-maximum baseline.
    Sample(CommonArgs),
    /// Build the problem family and write it as JSON.
    Generate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub gap: Option<f64>,
    /// Seconds per MILP.
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    /// Exit with code 3 unless the certified residual at kmax is at most this.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "no-obbt")]
    pub no_obbt: bool,
    #[arg(long = "cut-mode")]
    pub cut_mode: Option<CutMode>,
    /// none, contractive:BETA, averaged:D:Q or user:FILE.
    #[arg(long)]
    pub theory: Option<String>,
    /// Main output file (results CSV, samples CSV or family JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write each verification MILP as an LP file into this directory.
    #[arg(long = "dump-model")]
    pub dump_model: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Solver(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Generator(g) => Failure::Solver(g.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        Failure::Solver(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> Failure {
    Failure::Solver(format!("output: {e}"))
}

fn load(args: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let v = &mut cfg.verify;
    if let Some(k) = args.kmax {
        v.kmax = k;
    }
    if let Some(g) = args.gap {
        v.gap = g;
    }
    if let Some(t) = args.time_limit {
        v.time_limit = t;
    }
    if args.no_obbt {
        v.obbt = false;
    }
    if let Some(m) = args.cut_mode {
        v.cut_mode = m;
    }
    if let Some(t) = &args.theory {
        v.theory = (t != "none").then(|| t.clone());
    }
    if let Some(n) = args.samples {
        cfg.baseline.samples = n;
    }
    if args.dump_model.is_some() {
        cfg.output.dump_model = args.dump_model.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

fn compile(cfg: &ExperimentConfig, backend: &dyn Backend) -> Result<Compiled, Failure> {
    let family = cfg.family(backend)?;
    model_ir::validate(&family).map_err(config_err)
}

fn run_generate(args: &CommonArgs, backend: &dyn Backend) -> Result<i32, Failure> {
    let cfg = load(args)?;
    let c = compile(&cfg, backend)?;
    let out = args.out.clone().or(cfg.output.family.clone());
    let text = serde_json::to_string_pretty(&c.family).map_err(io_err)?;
    match out {
        Some(p) => output::write_json(&p, &c.family).map_err(io_err)?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

fn run_sample(args: &CommonArgs, backend: &dyn Backend) -> Result<i32, Failure> {
    let cfg = load(args)?;
    let c = compile(&cfg, backend)?;
    let seed = cfg.baseline.seed.unwrap_or(cfg.seed);
    let sm = baseline::sample_max(&c, cfg.baseline.samples, cfg.verify.kmax, seed).map_err(|e| Failure::Solver(e.to_string()))?;
    match args.out.clone().or(cfg.output.results.clone()) {
        Some(p) => output::write_samples(&p, &sm).map_err(io_err)?,
        None => {
            for (k, v) in sm.iter().enumerate() {
                println!("{} {v:.6e}", k + 1);
            }
        }
    }
    Ok(EXIT_OK)
}

fn run_verify(args: &CommonArgs, backend: Arc<dyn Backend>) -> Result<i32, Failure> {
    let cfg = load(args)?;
    let c = compile(&cfg, backend.as_ref())?;
    let mut vcfg = cfg.verify_config(None)?;
    vcfg.dump_dir = cfg.output.dump_model.clone();
    let seed = cfg.baseline.seed.unwrap_or(cfg.seed);
    let sm = baseline::sample_max(&c, cfg.baseline.samples, vcfg.kmax, seed).map_err(|e| Failure::Solver(e.to_string()))?;
    let mut verifier = Verifier::new(&c, vcfg, backend)?;
    let report = verifier.run_with(|r| {
        eprintln!(
            "K={:>3}  delta={:<12} bound={:<12.6e} sample_max={:<12.6e} {} ({:.2}s)",
            r.k,
            r.delta.map_or("-".into(), |d| format!("{d:.6e}")),
            r.best_bound,
            sm[r.k - 1],
            r.status,
            r.milp_time
        )
    })?;
    let results = args.out.clone().or(cfg.output.results.clone());
    if let Some(p) = &results {
        output::write_results(p, &report, Some(&sm)).map_err(io_err)?;
    }
    if let Some(p) = &cfg.output.cuts {
        output::write_cuts(p, &report.cut_log).map_err(io_err)?;
    }
    if let Some(p) = &cfg.output.bounds {
        output::write_json(p, &verifier.bounds).map_err(io_err)?;
    }
    if let Some(p) = &cfg.output.report {
        output::write_json(p, &report).map_err(io_err)?;
    }
    if let Some(eps) = args.epsilon {
        let last = report.per_k.last().expect("kmax >= 1");
        if last.best_bound > eps {
            let found = last.delta.is_some_and(|d| d > eps);
            eprintln!(
                "residual at K={} {} epsilon = {eps:e} (certified bound {:.6e})",
                last.k,
                if found { "exceeds" } else { "is not certified below" },
                last.best_bound
            );
            return Ok(EXIT_EPSILON);
        }
    }
    Ok(EXIT_OK)
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let backend: Arc<dyn Backend> = Arc::from(fomcert_milp::default_backend());
    let res = match &cli.command {
        Command::Verify(a) => run_verify(a, backend),
        Command::Sample(a) => run_sample(a, backend.as_ref()),
        Command::Generate(a) => run_generate(a, backend.as_ref()),
    };
    match res {
        Ok(code) => code,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            EXIT_SOLVER
        }
    }
}
