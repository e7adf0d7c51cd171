//! Measures the implicit traditional-secular value profile of generated text
//! and compares it with World Values Survey respondents.
//!
//! Stages, in order: build the demographic prompt grid ([`grid`]), collect
//! completions ([`llm`]), score them against the value bank with an NLI
//! backend ([`rvr`]), project onto the traditional-secular axis
//! ([`projection`]), recode survey respondents ([`wvs`]), then compare
//! ([`analysis`]) and plot ([`report`]). [`pipeline`] runs the stages over a
//! run directory configured by [`config`].

pub mod analysis;
pub mod bank;
pub mod config;
pub mod grid;
pub mod hashing;
pub mod jsonl;
pub mod llm;
pub mod pipeline;
pub mod projection;
pub mod report;
pub mod retry;
pub mod rvr;
pub mod wvs;

pub use analysis::{
    ablate, box_stats, fixed_effects_regression, group_means, summarize, AblationReport, AnalysisError, AnalysisFilter,
    BoxStats, GroupKey, GroupMeanRow, GroupMeansTable, GroupSummary, PooledFit, RegressionFit, RegressionReport, Slice,
    Source,
};
pub use bank::{load_bank, BankError, HypothesisEntry, Polarity, ValueBank, ValueDimension};
pub use config::{validate, ConfigError, ConfigIssue, RunConfig, Stage};
pub use grid::{enumerate_profiles, render_prompts, DemographicProfile, LevelSets, PromptRecord, Shape};
pub use llm::{
    collect, CompletionBackend, HttpCompletionBackend, PremiseRecord, PremiseStore, SamplingConfig,
    StubCompletionBackend,
};
pub use pipeline::{PipelineError, Run};
pub use projection::{project_labels, project_premise, AxisProjection, Mode, ProjectionRecord};
pub use report::{render, render_from_sidecar, FigureData, FigureKind, FigureSpec};
pub use rvr::{
    score_dataset, HttpNliBackend, NliBackend, ResonanceLabel, ScoreCache, ScoreRecord, StubNliBackend, WaterfallRow,
};
pub use wvs::{ingest, recode_variable, AgeBracket, VariableSpec, WvsLayout, WvsRespondent};
