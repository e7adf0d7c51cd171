//! Stage runners over a run directory.
//!
//! Each stage reads the previous stage's files from the run directory and
//! writes its own; file names are the `*_FILE` constants below.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    ablate, fixed_effects_regression, group_means, summarize, AblationReport, AnalysisError, GroupKey, GroupSummary,
    PooledFit, RegressionReport, Slice,
};
use crate::bank::ValueBank;
use crate::config::{BackendKind, ConfigError, RunConfig, Stage};
use crate::grid::{enumerate_profiles, render_prompts, GridError, PromptRecord};
use crate::jsonl::{read_json, read_jsonl, write_atomic, write_json, write_jsonl, JsonlError};
use crate::llm::{
    collect, CollectError, CollectReport, CompletionBackend, HttpCompletionBackend, PremiseRecord, PremiseStore,
    StubCompletionBackend,
};
use crate::projection::{project_scores, Mode, ProjectScoresError, ProjectionRecord};
use crate::report::{default_figures, parse_manifest, render_all, IndexEntry, ReportError};
use crate::rvr::{
    score_dataset, waterfall_stats, HttpNliBackend, NliBackend, ScoreCache, ScoreError, ScoreRecord, ScoringReport,
    StubNliBackend, WaterfallError,
};
use crate::wvs::{ingest_path, DropReport, WvsError, WvsRespondent};

pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const PREMISES_FILE: &str = "premises.jsonl";
pub const COLLECT_REPORT_FILE: &str = "collect_report.json";
pub const SCORE_CACHE_FILE: &str = "score_cache.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const SCORING_REPORT_FILE: &str = "scoring_report.json";
pub const WATERFALL_FILE: &str = "waterfall.csv";
pub const PROJECTIONS_FILE: &str = "projections.jsonl";
pub const RESPONDENTS_FILE: &str = "wvs_respondents.jsonl";
pub const DROPS_FILE: &str = "wvs_drops.json";
pub const GROUP_MEANS_FILE: &str = "group_means.csv";
pub const REGRESSION_FILE: &str = "regression_per_nation.csv";
pub const POOLED_FILE: &str = "regression_pooled.json";
pub const COMPARE_DIAGNOSTICS_FILE: &str = "compare_diagnostics.json";
pub const ABLATION_SUMMARY_FILE: &str = "ablation_summary.csv";
pub const ABLATION_FILE: &str = "ablation.json";

pub fn summary_file(slice: Slice) -> String {
    format!("group_summaries_{slice}.csv")
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} is missing; run `{stage}` first", .path.display())]
    MissingInput { path: PathBuf, stage: Stage },
    #[error(transparent)]
    Data(#[from] JsonlError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Project(#[from] ProjectScoresError),
    #[error(transparent)]
    Wvs(#[from] WvsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Waterfall(#[from] WaterfallError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("writing {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

/// A configured run bound to its output directory.
pub struct Run {
    pub config: RunConfig,
    pub bank: ValueBank,
    pub dir: PathBuf,
}

/// Shortest round-trip decimal, with negative zero folded into zero.
pub fn fmt_f64(v: f64) -> String {
    format!("{}", v + 0.0)
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), PipelineError> {
    let csv_err = |e: csv::Error| PipelineError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_atomic(path, &bytes)?;
    Ok(())
}

fn key_cells(k: &GroupKey) -> [String; 3] {
    [
        k.nation.clone().unwrap_or_default(),
        k.age_bracket.map(|a| a.label().to_string()).unwrap_or_default(),
        k.sex.clone().unwrap_or_default(),
    ]
}

fn summary_rows(groups: &[GroupSummary]) -> Vec<Vec<String>> {
    groups
        .iter()
        .map(|g| {
            let s = &g.stats;
            let mut row: Vec<String> = key_cells(&g.group_key).into();
            row.push(g.source.as_str().into());
            row.push(s.n.to_string());
            row.extend(
                [s.mean, s.median, s.q1, s.q3, s.whisker_low, s.whisker_high]
                    .into_iter()
                    .map(fmt_f64),
            );
            row
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 11] = [
    "nation",
    "age_bracket",
    "sex",
    "source",
    "n",
    "mean",
    "median",
    "q1",
    "q3",
    "whisker_low",
    "whisker_high",
];

#[derive(Debug, Serialize)]
struct CompareDiagnostics<'a> {
    filter: &'a crate::analysis::AnalysisFilter,
    groups_compared: usize,
    llm_only: &'a [GroupKey],
    wvs_only: &'a [GroupKey],
    degenerate_nations: Vec<(&'a str, &'a str)>,
    pooled: &'a PooledFit,
}

impl Run {
    /// Validates the config for `stage` and prepares its run directory.
    pub fn open(config: RunConfig, stage: Stage) -> Result<Run, PipelineError> {
        let dir = config.prepare_run_dir(stage)?;
        let bank = config.load_bank()?;
        Ok(Run { config, bank, dir })
    }

    /// Uses `dir` as is, without validation or a frozen config.
    pub fn at(config: RunConfig, dir: PathBuf) -> Result<Run, PipelineError> {
        let bank = config.load_bank()?;
        Ok(Run { config, bank, dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn input(&self, name: &str, stage: Stage) -> Result<PathBuf, PipelineError> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(PipelineError::MissingInput { path: p, stage })
        }
    }

    pub fn gen_prompts(&self) -> Result<Vec<PromptRecord>, PipelineError> {
        let profiles = enumerate_profiles(&self.config.levels)?;
        let prompts = render_prompts(&profiles, &self.bank);
        write_jsonl(&self.path(PROMPTS_FILE), &prompts)?;
        log::info!("{} profiles, {} prompts", profiles.len(), prompts.len());
        Ok(prompts)
    }

    pub fn completion_backend(&self) -> Box<dyn CompletionBackend> {
        let llm = &self.config.llm;
        match llm.backend {
            BackendKind::Stub => Box::new(StubCompletionBackend::new(&self.bank, self.config.seed)),
            BackendKind::Http => Box::new(HttpCompletionBackend::new(
                llm.base_url.as_deref().unwrap_or_default(),
                std::env::var(&llm.api_key_env).ok(),
                llm.api_shape,
                llm.timeout(),
            )),
        }
    }

    pub fn nli_backend(&self) -> Box<dyn NliBackend> {
        let nli = &self.config.nli;
        match nli.backend {
            BackendKind::Stub => Box::new(StubNliBackend::new(&self.bank)),
            BackendKind::Http => Box::new(HttpNliBackend::new(
                nli.base_url.as_deref().unwrap_or_default(),
                &nli.model,
                nli.timeout(),
            )),
        }
    }

    pub fn collect(&self) -> Result<CollectReport, PipelineError> {
        self.collect_with(self.completion_backend().as_ref())
    }

    /// Collects missing samples, then rewrites the premise file in
    /// (prompt, sample) order so its bytes do not depend on thread timing.
    pub fn collect_with(&self, backend: &dyn CompletionBackend) -> Result<CollectReport, PipelineError> {
        let prompts: Vec<PromptRecord> = read_jsonl(&self.input(PROMPTS_FILE, Stage::GenPrompts)?)?;
        let path = self.path(PREMISES_FILE);
        let report = {
            let store = PremiseStore::open(&path)?;
            collect(
                &prompts,
                &self.config.llm.sampling,
                backend,
                &store,
                &self.config.llm.collect_options(),
            )?
        };
        let mut premises: Vec<PremiseRecord> = read_jsonl(&path)?;
        premises.sort_by(|a, b| (&a.prompt_id, a.sample_index).cmp(&(&b.prompt_id, b.sample_index)));
        write_jsonl(&path, &premises)?;
        write_json(&self.path(COLLECT_REPORT_FILE), &report)?;
        log::info!(
            "{} premises written, {} already present, {} failed",
            report.written,
            report.already_present,
            report.failures.len()
        );
        Ok(report)
    }

    pub fn score(&self) -> Result<ScoringReport, PipelineError> {
        self.score_with(self.nli_backend().as_ref())
    }

    pub fn score_with(&self, backend: &dyn NliBackend) -> Result<ScoringReport, PipelineError> {
        let premises: Vec<PremiseRecord> = read_jsonl(&self.input(PREMISES_FILE, Stage::Collect)?)?;
        let cache = ScoreCache::open(&self.path(SCORE_CACHE_FILE))?;
        let (scores, report) = score_dataset(&premises, &self.bank, backend, &cache, &self.config.nli.score_options())?;
        write_jsonl(&self.path(SCORES_FILE), &scores)?;
        write_json(&self.path(SCORING_REPORT_FILE), &report)?;
        let rows = waterfall_stats(&scores, &self.bank)?
            .into_iter()
            .map(|r| {
                vec![
                    r.dimension_id,
                    r.polarity.as_str().into(),
                    r.hypothesis,
                    r.total.to_string(),
                    r.resonance.to_string(),
                    r.conflict.to_string(),
                    r.neutral.to_string(),
                    fmt_f64(r.resonance_fraction),
                    fmt_f64(r.conflict_fraction),
                    fmt_f64(r.neutral_fraction),
                ]
            })
            .collect();
        write_csv(
            &self.path(WATERFALL_FILE),
            &[
                "dimension_id",
                "polarity",
                "hypothesis",
                "total",
                "resonance",
                "conflict",
                "neutral",
                "resonance_fraction",
                "conflict_fraction",
                "neutral_fraction",
            ],
            rows,
        )?;
        Ok(report)
    }

    pub fn project(&self) -> Result<Vec<ProjectionRecord>, PipelineError> {
        let scores: Vec<ScoreRecord> = read_jsonl(&self.input(SCORES_FILE, Stage::Score)?)?;
        let premises: Vec<PremiseRecord> = read_jsonl(&self.input(PREMISES_FILE, Stage::Collect)?)?;
        let out = project_scores(&scores, &premises, &self.bank, &Mode::ALL)?;
        write_jsonl(&self.path(PROJECTIONS_FILE), &out)?;
        Ok(out)
    }

    pub fn ingest_wvs(&self) -> Result<DropReport, PipelineError> {
        let path = self.config.wvs_path().ok_or_else(|| {
            ConfigError::Invalid(vec![crate::config::ConfigIssue {
                field: "wvs.path".into(),
                reason: "required by stage `ingest-wvs`".into(),
            }])
        })?;
        let out = ingest_path(&path, &self.config.wvs.variables, &self.config.wvs.layout, &self.bank)?;
        write_jsonl(&self.path(RESPONDENTS_FILE), &out.respondents)?;
        write_json(&self.path(DROPS_FILE), &out.report)?;
        log::info!(
            "{} of {} survey rows retained",
            out.report.retained,
            out.report.rows_read
        );
        Ok(out.report)
    }

    pub fn compare(&self) -> Result<RegressionReport, PipelineError> {
        let llm: Vec<ProjectionRecord> = read_jsonl(&self.input(PROJECTIONS_FILE, Stage::Project)?)?;
        let wvs: Vec<WvsRespondent> = read_jsonl(&self.input(RESPONDENTS_FILE, Stage::IngestWvs)?)?;
        let filter = &self.config.analysis;

        for slice in Slice::ALL {
            let groups = summarize(&llm, &wvs, slice, filter)?;
            write_csv(&self.path(&summary_file(slice)), &SUMMARY_HEADER, summary_rows(&groups))?;
        }

        let table = group_means(&llm, &wvs, filter)?;
        let rows = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.nation.clone(),
                    r.age_bracket.label().into(),
                    r.sex.clone(),
                    r.n_llm.to_string(),
                    r.n_wvs.to_string(),
                    fmt_f64(r.mean_llm),
                    fmt_f64(r.mean_wvs),
                ]
            })
            .collect();
        write_csv(
            &self.path(GROUP_MEANS_FILE),
            &["nation", "age_bracket", "sex", "n_llm", "n_wvs", "mean_llm", "mean_wvs"],
            rows,
        )?;

        let reg = fixed_effects_regression(&table)?;
        let rows = reg
            .per_nation
            .iter()
            .map(|f| {
                vec![
                    f.nation.clone(),
                    f.n_groups.to_string(),
                    fmt_f64(f.slope),
                    fmt_f64(f.intercept),
                    fmt_f64(f.r_squared),
                    fmt_f64(f.rmse),
                    fmt_f64(f.p_value),
                    f.stars().into(),
                    f.degenerate.clone().unwrap_or_default(),
                ]
            })
            .collect();
        write_csv(
            &self.path(REGRESSION_FILE),
            &[
                "nation",
                "n_groups",
                "slope",
                "intercept",
                "r_squared",
                "rmse",
                "p_value",
                "significance",
                "degenerate",
            ],
            rows,
        )?;
        write_json(&self.path(POOLED_FILE), &reg.pooled)?;
        write_json(
            &self.path(COMPARE_DIAGNOSTICS_FILE),
            &CompareDiagnostics {
                filter,
                groups_compared: table.rows.len(),
                llm_only: &table.llm_only,
                wvs_only: &table.wvs_only,
                degenerate_nations: reg
                    .per_nation
                    .iter()
                    .filter_map(|f| f.degenerate.as_deref().map(|d| (f.nation.as_str(), d)))
                    .collect(),
                pooled: &reg.pooled,
            },
        )?;
        Ok(reg)
    }

    pub fn ablate(&self) -> Result<AblationReport, PipelineError> {
        let scores: Vec<ScoreRecord> = read_jsonl(&self.input(SCORES_FILE, Stage::Score)?)?;
        let report = ablate(&scores, &self.bank)?;
        let rows = report
            .series
            .iter()
            .map(|s| {
                let b = &s.stats;
                let mut row = vec![s.mode.as_str().to_string(), b.n.to_string()];
                row.extend(
                    [s.variance, b.mean, b.median, b.q1, b.q3, b.whisker_low, b.whisker_high]
                        .into_iter()
                        .map(fmt_f64),
                );
                row
            })
            .collect();
        write_csv(
            &self.path(ABLATION_SUMMARY_FILE),
            &[
                "mode",
                "n",
                "variance",
                "mean",
                "median",
                "q1",
                "q3",
                "whisker_low",
                "whisker_high",
            ],
            rows,
        )?;
        write_json(&self.path(ABLATION_FILE), &report)?;
        Ok(report)
    }

    /// Renders the figures in `manifest`, or the default set.
    pub fn report(&self, manifest: Option<&Path>) -> Result<Vec<IndexEntry>, PipelineError> {
        let specs = match manifest {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ReportError::Manifest {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?;
                parse_manifest(&text, p)?
            }
            None => default_figures(),
        };
        Ok(render_all(&specs, &self.dir, &self.config.analysis)?)
    }

    /// Every stage in order. Survey-facing stages run when a survey path is set.
    pub fn run_all(&self) -> Result<(), PipelineError> {
        self.gen_prompts()?;
        self.collect()?;
        self.score()?;
        self.project()?;
        self.ablate()?;
        if self.config.wvs.path.is_some() {
            self.ingest_wvs()?;
            self.compare()?;
            self.report(None)?;
        } else {
            log::warn!("no survey extract configured; skipping ingest-wvs, compare and report");
        }
        Ok(())
    }

    pub fn read_pooled(&self) -> Result<PooledFit, PipelineError> {
        Ok(read_json(&self.input(POOLED_FILE, Stage::Compare)?)?)
    }
}
