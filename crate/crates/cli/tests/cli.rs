use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rvr-audit"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/synthetic_wvs.csv")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(
        &p,
        format!(
            "seed = 1\n[llm]\nfixed_timestamp = \"2024-01-01T00:00:00Z\"\n[llm.sampling]\nsamples_per_prompt = 2\n[wvs]\npath = {:?}\n",
            fixture().canonicalize().unwrap()
        ),
    )
    .unwrap();
    p
}

#[test]
fn init_writes_a_config_that_validates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["init"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = run_in(dir.path(), &["init"]);
    assert!(!again.status.success());
    let o = run_in(dir.path(), &["validate", "-c", "rvr.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("188 profiles, 1128 prompts, 56400 premises"));
}

#[test]
fn validate_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "[llm.sampling]\nsamples_per_prompt = 0\ntemperature = -1.0\n",
    )
    .unwrap();
    let o = run_in(dir.path(), &["validate", "-c", "bad.toml", "--stage", "compare"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("samples_per_prompt"), "{err}");
    assert!(err.contains("temperature"), "{err}");
    assert!(err.contains("wvs.path"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.toml"), "sed = 3\n").unwrap();
    let o = run_in(dir.path(), &["validate", "-c", "typo.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sed"), "{}", stderr(&o));
}

#[test]
fn stage_out_of_order_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run_in(dir.path(), &["score", "-c", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("collect"), "{}", stderr(&o));
}

#[test]
fn full_run_then_stages_rerun_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let o = run_in(dir.path(), &["run", "-c", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = dir.path().join(stdout(&o).trim());
    for f in [
        "prompts.jsonl",
        "premises.jsonl",
        "scores.jsonl",
        "projections.jsonl",
        "group_means.csv",
        "regression_per_nation.csv",
        "regression_pooled.json",
        "figures/index.json",
        "config.frozen.toml",
    ] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }

    let o = run_in(dir.path(), &["collect", "-c", c]);
    assert!(stdout(&o).contains("written 0"), "{}", stdout(&o));

    let o = run_in(dir.path(), &["compare", "-c", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 10, "{out}");
    assert!(out.contains("pooled: slope"));

    let o = run_in(dir.path(), &["ablate", "-c", c]);
    let out = stdout(&o);
    for m in ["traditional_only", "secular_only", "combined"] {
        assert!(out.contains(m), "{out}");
    }

    let o = run_in(dir.path(), &["report", "-c", c]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let svgs: Vec<&str> = out.lines().collect();
    assert_eq!(svgs.len(), 6);
    assert!(svgs.iter().all(|s| dir.path().join(s).exists()));
}

#[test]
fn run_without_survey_skips_survey_stages() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("nosurvey.toml"),
        "[llm.sampling]\nsamples_per_prompt = 1\n",
    )
    .unwrap();
    let o = run_in(dir.path(), &["run", "-c", "nosurvey.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = dir.path().join(stdout(&o).trim());
    assert!(run_dir.join("ablation.json").exists());
    assert!(!run_dir.join("group_means.csv").exists());
}
