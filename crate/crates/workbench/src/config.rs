//! Experiment configuration files.

use std::path::{Path, PathBuf};
use std::time::Duration;

use fomcert_core::bounds::TheoryParams;
use fomcert_core::model_ir::ProblemFamily;
use fomcert_core::verifier::{CutMode, VerifyConfig};
use fomcert_milp::Backend;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{self, FlowParams, FlowVariant, GenError, LassoParams, LassoVariant, StepRule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Generator(#[from] GenError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Lasso(LassoParams),
    NetworkFlow(FlowParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySource {
    Path(PathBuf),
    Inline(Box<ProblemFamily>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: String,
    #[serde(default)]
    pub step: Option<StepRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub kmax: usize,
    pub gap: f64,
    /// Seconds per MILP.
    pub time_limit: f64,
    pub obbt: bool,
    pub obbt_rounds: usize,
    pub obbt_all_args: bool,
    pub cut_mode: CutMode,
    pub cut_rounds: usize,
    /// `none`, `contractive:BETA`, `averaged:D:Q` or `user:FILE`.
    pub theory: Option<String>,
    /// Initial distance bound for the theory sequence; computed from the radius problem when absent.
    pub radius: Option<f64>,
    pub threads: Option<usize>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        let d = VerifyConfig::default();
        Self {
            kmax: d.kmax,
            gap: d.gap,
            time_limit: d.time_limit.as_secs_f64(),
            obbt: d.obbt,
            obbt_rounds: d.obbt_rounds,
            obbt_all_args: d.obbt_all_args,
            cut_mode: d.cut_mode,
            cut_rounds: d.cut_rounds,
            theory: None,
            radius: None,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub samples: usize,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self { samples: 1000, seed: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    /// Per-K results CSV.
    pub results: Option<PathBuf>,
    pub cuts: Option<PathBuf>,
    /// Final bounds as JSON.
    pub bounds: Option<PathBuf>,
    /// Full report as JSON.
    pub report: Option<PathBuf>,
    /// Where `generate` writes the family.
    pub family: Option<PathBuf>,
    pub dump_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub generator: Option<GeneratorSpec>,
    pub family: Option<FamilySource>,
    pub algorithm: Option<AlgorithmSpec>,
    pub verify: VerifySettings,
    pub baseline: BaselineSettings,
    pub output: OutputSettings,
}

fn parse_error(path: &str, e: &serde_json::Error) -> ConfigError {
    ConfigError::Parse { path: path.into(), line: e.line(), column: e.column(), message: e.to_string() }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| parse_error(origin, &e))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_json(&read(path)?, &path.display().to_string())?;
        // Relative family paths are resolved against the config file.
        if let (Some(FamilySource::Path(p)), Some(dir)) = (&mut cfg.family, path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        match (&self.generator, &self.family) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either `generator` or `family`, not both".into())),
            (None, None) => return Err(ConfigError::Invalid("one of `generator` or `family` is required".into())),
            _ => {}
        }
        if self.baseline.samples == 0 {
            return Err(ConfigError::Invalid("baseline.samples must be at least 1".into()));
        }
        if self.verify.kmax == 0 {
            return Err(ConfigError::Invalid("verify.kmax must be at least 1".into()));
        }
        if !(self.verify.gap >= 0.0) || !(self.verify.time_limit > 0.0) {
            return Err(ConfigError::Invalid("verify.gap must be >= 0 and verify.time_limit > 0".into()));
        }
        if let Some(t) = &self.verify.theory {
            parse_theory(t, 1.0)?;
        }
        Ok(())
    }

    /// Builds the problem family, running the generator if one is configured.
    pub fn family(&self, backend: &dyn Backend) -> Result<ProblemFamily, ConfigError> {
        if let Some(src) = &self.family {
            return match src {
                FamilySource::Inline(f) => Ok((**f).clone()),
                FamilySource::Path(p) => {
                    let text = read(p)?;
                    serde_json::from_str(&text).map_err(|e| parse_error(&p.display().to_string(), &e))
                }
            };
        }
        let alg = self.algorithm.as_ref();
        let name = alg.map(|a| a.name.as_str());
        let step = alg.and_then(|a| a.step);
        match self.generator.as_ref().expect("checked") {
            GeneratorSpec::Lasso(p) => {
                let variant = match name.unwrap_or("ista") {
                    "ista" => LassoVariant::Ista,
                    "fista" => LassoVariant::Fista,
                    other => return Err(ConfigError::Invalid(format!("lasso supports ista or fista, not `{other}`"))),
                };
                Ok(generators::gen_lasso(p, self.seed, variant, step.unwrap_or(StepRule::InvLipschitz))?.family)
            }
            GeneratorSpec::NetworkFlow(p) => {
                let variant = match name.unwrap_or("pdhg") {
                    "pdhg" => FlowVariant::Pdhg,
                    "pdhg_momentum" => FlowVariant::PdhgMomentum,
                    other => {
                        return Err(ConfigError::Invalid(format!("network_flow supports pdhg or pdhg_momentum, not `{other}`")))
                    }
                };
                let step = step.unwrap_or(StepRule::HalfInvSpecnorm);
                Ok(generators::gen_network_flow(p, self.seed, variant, step, backend)?.family)
            }
        }
    }

    /// Verifier settings; `radius` fills the theory sequence when the config gives none.
    pub fn verify_config(&self, radius: Option<f64>) -> Result<VerifyConfig, ConfigError> {
        let v = &self.verify;
        let r = v.radius.or(radius).unwrap_or(0.0);
        let theory = match &v.theory {
            Some(t) => parse_theory(t, r)?,
            None => None,
        };
        Ok(VerifyConfig {
            kmax: v.kmax,
            gap: v.gap,
            time_limit: Duration::from_secs_f64(v.time_limit),
            obbt: v.obbt,
            obbt_rounds: v.obbt_rounds,
            obbt_all_args: v.obbt_all_args,
            cut_mode: v.cut_mode,
            cut_rounds: v.cut_rounds,
            compute_r: theory.as_ref().is_some_and(|t| !matches!(t, TheoryParams::User { .. })) && v.radius.is_none(),
            theory,
            threads: v.threads,
            ..VerifyConfig::default()
        })
    }
}

/// Parses `none`, `contractive:BETA`, `averaged:D:Q` or `user:FILE`.
pub fn parse_theory(spec: &str, radius: f64) -> Result<Option<TheoryParams>, ConfigError> {
    let bad = || ConfigError::Invalid(format!("cannot parse theory `{spec}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    match parts.as_slice() {
        ["none"] => Ok(None),
        ["contractive", b] => {
            let beta = num(b)?;
            if !(0.0..1.0).contains(&beta) {
                return Err(ConfigError::Invalid(format!("contraction factor must be in [0, 1), got {beta}")));
            }
            Ok(Some(TheoryParams::Contractive { beta, r: radius }))
        }
        ["averaged", d, q] => Ok(Some(TheoryParams::Averaged { d: num(d)?, q: num(q)?, r: radius })),
        ["user", file] => {
            let text = read(Path::new(file))?;
            let alphas: Vec<f64> = if text.trim_start().starts_with('[') {
                serde_json::from_str(&text).map_err(|e| parse_error(file, &e))?
            } else {
                text.split_whitespace().map(num).collect::<Result<_, _>>()?
            };
            Ok(Some(TheoryParams::User { alphas }))
        }
        _ => Err(bad()),
    }
}
