#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rvr_core::config::RunConfig;
use rvr_core::pipeline::Run;
use sha2::{Digest, Sha256};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn fixture_csv() -> PathBuf {
    data_dir().join("synthetic_wvs.csv")
}

/// Stub backends, fixed clock, bundled survey fixture, three samples per prompt.
pub fn golden_config(out: &Path) -> RunConfig {
    let text = format!(
        "seed = 1\noutput_dir = {:?}\n[llm]\nfixed_timestamp = \"2024-01-01T00:00:00Z\"\n\
         [llm.sampling]\nsamples_per_prompt = 3\n[wvs]\npath = {:?}\n",
        out.display().to_string(),
        fixture_csv().display().to_string()
    );
    RunConfig::from_toml_str(&text, &out.join("run.toml")).unwrap()
}

pub fn golden_run(out: &Path) -> Run {
    let run = Run::open(golden_config(out), rvr_core::Stage::All).unwrap();
    run.run_all().unwrap();
    run
}

/// Files whose bytes must not change between runs or platforms.
pub const GOLDEN_FILES: &[&str] = &[
    "prompts.jsonl",
    "premises.jsonl",
    "scores.jsonl",
    "waterfall.csv",
    "projections.jsonl",
    "wvs_respondents.jsonl",
    "wvs_drops.json",
    "group_summaries_nation.csv",
    "group_summaries_age.csv",
    "group_summaries_sex.csv",
    "group_means.csv",
    "regression_per_nation.csv",
    "regression_pooled.json",
    "compare_diagnostics.json",
    "ablation_summary.csv",
    "ablation.json",
    "figures/index.json",
    "figures/waterfall.json",
    "figures/waterfall.svg",
    "figures/box_nation.json",
    "figures/box_nation.svg",
    "figures/box_age.json",
    "figures/box_age.svg",
    "figures/box_sex.json",
    "figures/box_sex.svg",
    "figures/scatter.json",
    "figures/scatter.svg",
    "figures/ablation.json",
    "figures/ablation.svg",
];

pub fn sha256_file(p: &Path) -> String {
    let bytes = std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    hex::encode(Sha256::digest(&bytes))
}

pub fn digests(run_dir: &Path) -> String {
    GOLDEN_FILES
        .iter()
        .map(|f| format!("{}  {f}\n", sha256_file(&run_dir.join(f))))
        .collect()
}

pub const GOLDEN_DIGESTS: &str = "golden.sha256";
