//! Run configuration: one TOML file drives every stage.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisFilter;
use crate::bank::{load_bank, ValueBank};
use crate::grid::{enumerate_profiles, render_prompts, LevelSets};
use crate::hashing::short_digest;
use crate::jsonl::write_atomic;
use crate::llm::{ApiShape, Clock, CollectOptions, SamplingConfig};
use crate::retry::RetryPolicy;
use crate::rvr::ScoreOptions;
use crate::wvs::{VariableSpec, WvsLayout};

/// The commented example configuration; every value in it is a default.
pub const DEFAULT_RUN_TOML: &str = include_str!("../data/default_run.toml");

pub const FROZEN_CONFIG: &str = "config.frozen.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub api_shape: ApiShape,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub requests_per_second: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_timestamp: Option<String>,
    pub sampling: SamplingConfig,
    pub retry: RetryPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: BackendKind::Stub,
            base_url: None,
            api_shape: ApiShape::Completions,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            concurrency: 8,
            requests_per_second: 0.0,
            fixed_timestamp: None,
            sampling: SamplingConfig::default(),
            retry: RetryPolicy::default(),
        }
    }
}

impl LlmConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn collect_options(&self) -> CollectOptions {
        CollectOptions {
            concurrency: self.concurrency,
            retry: self.retry.clone(),
            requests_per_second: self.requests_per_second,
            clock: match &self.fixed_timestamp {
                Some(t) => Clock::Fixed(t.clone()),
                None => Clock::System,
            },
            ..CollectOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NliConfig {
    pub backend: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for NliConfig {
    fn default() -> Self {
        NliConfig {
            backend: BackendKind::Stub,
            base_url: None,
            model: "roberta-large-mnli".into(),
            timeout_secs: 30,
            concurrency: 8,
            retry: RetryPolicy::default(),
        }
    }
}

impl NliConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            concurrency: self.concurrency,
            retry: self.retry.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WvsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub layout: WvsLayout,
    pub variables: Vec<VariableSpec>,
}

impl Default for WvsConfig {
    fn default() -> Self {
        WvsConfig {
            path: None,
            layout: WvsLayout::default(),
            variables: VariableSpec::defaults(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank: Option<PathBuf>,
    pub levels: LevelSets,
    pub llm: LlmConfig,
    pub nli: NliConfig,
    pub wvs: WvsConfig,
    pub analysis: AnalysisFilter,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("runs"),
            bank: None,
            levels: LevelSets::default(),
            llm: LlmConfig::default(),
            nli: NliConfig::default(),
            wvs: WvsConfig::default(),
            analysis: AnalysisFilter::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Pipeline stages, in run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenPrompts,
    Collect,
    Score,
    Project,
    IngestWvs,
    Compare,
    Ablate,
    Report,
    All,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::GenPrompts,
        Stage::Collect,
        Stage::Score,
        Stage::Project,
        Stage::IngestWvs,
        Stage::Compare,
        Stage::Ablate,
        Stage::Report,
        Stage::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::GenPrompts => "gen-prompts",
            Stage::Collect => "collect",
            Stage::Score => "score",
            Stage::Project => "project",
            Stage::IngestWvs => "ingest-wvs",
            Stage::Compare => "compare",
            Stage::Ablate => "ablate",
            Stage::Report => "report",
            Stage::All => "run",
        }
    }

    fn needs_llm(self) -> bool {
        matches!(self, Stage::Collect | Stage::All)
    }

    fn needs_nli(self) -> bool {
        matches!(self, Stage::Score | Stage::All)
    }

    // `run` skips the survey stages instead.
    fn needs_wvs(self) -> bool {
        matches!(self, Stage::IngestWvs | Stage::Compare)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// One problem found during validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    /// Dotted field path, e.g. `llm.sampling.top_p`.
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn issues_text(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("\n  {i}")).collect()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{} problem(s) in configuration:{}", .0.len(), issues_text(.0))]
    Invalid(Vec<ConfigIssue>),
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = origin
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// The shipped example configuration.
    pub fn shipped() -> Self {
        Self::from_toml_str(DEFAULT_RUN_TOML, Path::new("default_run.toml")).expect("shipped config parses")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn bank_path(&self) -> Option<PathBuf> {
        self.bank.as_deref().map(|p| self.resolve(p))
    }

    pub fn wvs_path(&self) -> Option<PathBuf> {
        self.wvs.path.as_deref().map(|p| self.resolve(p))
    }

    pub fn output_root(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn load_bank(&self) -> Result<ValueBank, ConfigError> {
        match self.bank_path() {
            None => Ok(ValueBank::builtin()),
            Some(p) => load_bank(&p).map_err(|e| ConfigError::Invalid(vec![issue("bank", e.to_string())])),
        }
    }

    /// Every problem that would stop `stage`, not just the first.
    pub fn issues(&self, stage: Stage) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let bank = match self.bank_path() {
            None => Some(ValueBank::builtin()),
            Some(p) if !p.exists() => {
                out.push(issue("bank", format!("{} does not exist", p.display())));
                None
            }
            Some(p) => match load_bank(&p) {
                Ok(b) => Some(b),
                Err(e) => {
                    out.push(issue("bank", e.to_string()));
                    None
                }
            },
        };

        check_levels("levels.ages", &self.levels.ages, &mut out);
        check_levels("levels.nations", &self.levels.nations, &mut out);
        check_levels("levels.sexes", &self.levels.sexes, &mut out);
        for (i, a) in self.levels.ages.iter().enumerate() {
            if *a == 0 || *a > 120 {
                out.push(issue(
                    &format!("levels.ages[{i}]"),
                    format!("{a} is not a plausible age"),
                ));
            }
        }
        for (i, v) in self.levels.nations.iter().chain(&self.levels.sexes).enumerate() {
            if v.trim().is_empty() {
                out.push(issue("levels", format!("level {i} is blank")));
            }
        }

        for (field, reason) in self.llm.sampling.problems() {
            out.push(issue(&format!("llm.sampling.{field}"), reason));
        }
        if self.llm.concurrency == 0 {
            out.push(issue("llm.concurrency", "must be at least 1".into()));
        }
        if !(self.llm.requests_per_second >= 0.0 && self.llm.requests_per_second.is_finite()) {
            out.push(issue("llm.requests_per_second", "must be a finite number >= 0".into()));
        }
        if self.nli.concurrency == 0 {
            out.push(issue("nli.concurrency", "must be at least 1".into()));
        }
        if self.nli.model.trim().is_empty() {
            out.push(issue("nli.model", "must not be empty".into()));
        }
        if stage.needs_llm() && self.llm.backend == BackendKind::Http {
            if self.llm.base_url.is_none() {
                out.push(issue(
                    "llm.base_url",
                    format!("required by stage `{stage}` with the http backend"),
                ));
            }
            if std::env::var_os(&self.llm.api_key_env).is_none() {
                out.push(issue(
                    "llm.api_key_env",
                    format!("environment variable {} is not set", self.llm.api_key_env),
                ));
            }
        }
        if stage.needs_nli() && self.nli.backend == BackendKind::Http && self.nli.base_url.is_none() {
            out.push(issue(
                "nli.base_url",
                format!("required by stage `{stage}` with the http backend"),
            ));
        }

        match self.wvs_path() {
            None if stage.needs_wvs() => {
                out.push(issue("wvs.path", format!("required by stage `{stage}`")));
            }
            Some(p) if !p.exists() => {
                out.push(issue("wvs.path", format!("{} does not exist", p.display())));
            }
            _ => {}
        }
        let mut columns = BTreeSet::new();
        let mut covered = BTreeSet::new();
        for (i, v) in self.wvs.variables.iter().enumerate() {
            let field = format!("wvs.variables[{i}]");
            if let Err(e) = v.options() {
                out.push(issue(&field, e.to_string()));
            }
            if !columns.insert(v.column.as_str()) {
                out.push(issue(
                    &format!("{field}.column"),
                    format!("`{}` listed twice", v.column),
                ));
            }
            if let Some(b) = &bank {
                if b.dimension(&v.dimension_id).is_none() {
                    out.push(issue(
                        &format!("{field}.dimension_id"),
                        format!("`{}` is not a bank dimension", v.dimension_id),
                    ));
                } else if !covered.insert(v.dimension_id.as_str()) {
                    out.push(issue(
                        &format!("{field}.dimension_id"),
                        format!("`{}` has more than one variable", v.dimension_id),
                    ));
                }
            }
        }
        if let Some(b) = &bank {
            for d in b.dimensions() {
                if !covered.contains(d.id.as_str()) {
                    out.push(issue("wvs.variables", format!("no variable for dimension `{}`", d.id)));
                }
            }
        }
        let mut layout_labels = BTreeSet::new();
        for (i, n) in self.wvs.layout.nations.iter().enumerate() {
            if !layout_labels.insert(n.label.as_str()) {
                out.push(issue(
                    &format!("wvs.layout.nations[{i}].label"),
                    format!("`{}` listed twice", n.label),
                ));
            }
        }

        if let Some(nations) = &self.analysis.nations {
            for (i, n) in nations.iter().enumerate() {
                if !self.levels.nations.contains(n) {
                    out.push(issue(
                        &format!("analysis.nations[{i}]"),
                        format!(
                            "unknown nation `{n}`; levels.nations has {}",
                            self.levels.nations.join(", ")
                        ),
                    ));
                }
            }
        }
        out
    }

    pub fn validate(&self, stage: Stage) -> Result<(), ConfigError> {
        let issues = self.issues(stage);
        if issues.is_empty() {
            for n in &self.levels.nations {
                if self.wvs.layout.nations.iter().all(|c| &c.label != n) {
                    log::warn!("nation `{n}` has no survey country code; it will be missing from comparisons");
                }
            }
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// The effective configuration with every path made absolute, so it can
    /// be reloaded from anywhere.
    pub fn frozen(&self) -> RunConfig {
        let abs = |p: PathBuf| std::path::absolute(&p).unwrap_or(p);
        let mut c = self.clone();
        c.output_dir = abs(self.output_root());
        c.bank = self.bank_path().map(abs);
        c.wvs.path = self.wvs_path().map(abs);
        c
    }

    /// Content-derived identifier: same effective settings, bank and survey
    /// bytes give the same id.
    pub fn run_id(&self) -> Result<String, ConfigError> {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.bank = None;
        canonical.wvs.path = None;
        let mut material = toml::to_string(&canonical).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<effective config>"),
            message: e.to_string(),
        })?;
        material.push('\u{1f}');
        material.push_str(
            &self
                .load_bank()?
                .to_toml()
                .map_err(|e| ConfigError::Invalid(vec![issue("bank", e.to_string())]))?,
        );
        material.push('\u{1f}');
        if let Some(p) = self.wvs_path() {
            let bytes = std::fs::read(&p).map_err(|source| ConfigError::Io { path: p, source })?;
            material.push_str(&short_digest(&bytes));
        }
        Ok(short_digest(material.as_bytes())[..12].to_string())
    }

    /// Validates, creates `<output_dir>/<run id>/` and writes the frozen config there.
    pub fn prepare_run_dir(&self, stage: Stage) -> Result<PathBuf, ConfigError> {
        self.validate(stage)?;
        let dir = self.output_root().join(self.run_id()?);
        let text = toml::to_string(&self.frozen()).map_err(|e| ConfigError::Parse {
            path: dir.join(FROZEN_CONFIG),
            message: e.to_string(),
        })?;
        write_atomic(&dir.join(FROZEN_CONFIG), text.as_bytes()).map_err(|e| ConfigError::Io {
            path: dir.join(FROZEN_CONFIG),
            source: std::io::Error::other(e.to_string()),
        })?;
        Ok(dir)
    }

    /// Profile and prompt counts implied by the level sets and bank.
    pub fn grid_size(&self) -> Result<(usize, usize), ConfigError> {
        let profiles =
            enumerate_profiles(&self.levels).map_err(|e| ConfigError::Invalid(vec![issue("levels", e.to_string())]))?;
        let prompts = render_prompts(&profiles, &self.load_bank()?).len();
        Ok((profiles.len(), prompts))
    }
}

fn issue(field: &str, reason: String) -> ConfigIssue {
    ConfigIssue {
        field: field.into(),
        reason,
    }
}

fn check_levels<T: Ord + fmt::Debug>(field: &str, values: &[T], out: &mut Vec<ConfigIssue>) {
    if values.is_empty() {
        out.push(issue(field, "must not be empty".into()));
    }
    let mut seen = BTreeSet::new();
    for v in values {
        if !seen.insert(v) {
            out.push(issue(field, format!("{v:?} listed twice")));
        }
    }
}

/// Loads and validates a config file for `stage`.
pub fn validate(path: &Path, stage: Stage) -> Result<RunConfig, ConfigError> {
    let cfg = RunConfig::load(path)?;
    cfg.validate(stage)?;
    Ok(cfg)
}
