mod common;

use std::collections::BTreeMap;

use common::*;
use rvr_core::analysis::Slice;
use rvr_core::config::Stage;
use rvr_core::jsonl::read_jsonl;
use rvr_core::llm::PremiseRecord;
use rvr_core::pipeline::{self, PipelineError, Run};
use rvr_core::report::{render_from_sidecar, FigureData};
use rvr_core::rvr::ScoreRecord;

#[test]
fn golden_run_matches_frozen_digests() {
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(dir.path());
    let got = digests(&run.dir);
    let path = data_dir().join(GOLDEN_DIGESTS);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).expect("golden digests; regenerate with UPDATE_GOLDEN=1");
    assert_eq!(got, want);
}

#[test]
fn two_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (golden_run(a.path()), golden_run(b.path()));
    assert_eq!(ra.dir.file_name(), rb.dir.file_name(), "run id depends on content only");
    assert_eq!(digests(&ra.dir), digests(&rb.dir));
}

#[test]
fn rerun_in_place_resumes_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(dir.path());
    let before = digests(&run.dir);
    let report = run.collect().unwrap();
    assert_eq!(report.written, 0);
    assert_eq!(report.already_present, 1128 * 3);
    run.score().unwrap();
    run.project().unwrap();
    run.compare().unwrap();
    run.ablate().unwrap();
    run.report(None).unwrap();
    assert_eq!(digests(&run.dir), before);
}

#[test]
fn stage_outputs_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(dir.path());
    let premises: Vec<PremiseRecord> = read_jsonl(&run.path(pipeline::PREMISES_FILE)).unwrap();
    assert_eq!(premises.len(), 1128 * 3);
    let scores: Vec<ScoreRecord> = read_jsonl(&run.path(pipeline::SCORES_FILE)).unwrap();
    assert_eq!(scores.len(), premises.len() * 10);

    let drops: rvr_core::wvs::DropReport = rvr_core::jsonl::read_json(&run.path(pipeline::DROPS_FILE)).unwrap();
    assert_eq!(drops.rows_read, 582);
    assert_eq!(drops.retained, 576);

    let means = std::fs::read_to_string(run.path(pipeline::GROUP_MEANS_FILE)).unwrap();
    assert_eq!(means.lines().count(), 1 + 96);
    let reg = std::fs::read_to_string(run.path(pipeline::REGRESSION_FILE)).unwrap();
    assert_eq!(reg.lines().count(), 1 + 8);
    for slice in Slice::ALL {
        assert!(run.path(&pipeline::summary_file(slice)).exists());
    }
    let pooled = run.read_pooled().unwrap();
    assert_eq!(pooled.nation_intercepts.len(), 8);
    assert_eq!(pooled.n_groups, 96);
}

#[test]
fn sidecars_rerender_identically() {
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(dir.path());
    for entry in run.report(None).unwrap() {
        let svg = std::fs::read_to_string(run.dir.join(&entry.svg)).unwrap();
        assert_eq!(
            render_from_sidecar(&run.dir.join(&entry.sidecar)).unwrap(),
            svg,
            "{}",
            entry.svg.display()
        );
    }
}

#[test]
fn scatter_slopes_equal_regression_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(dir.path());
    let fits = run.compare().unwrap().per_nation;
    let data: FigureData = rvr_core::jsonl::read_json(&run.path("figures/scatter.json")).unwrap();
    let FigureData::Scatter { fits: drawn, .. } = data else {
        panic!("not a scatter")
    };
    assert_eq!(drawn.len(), 8);
    let by_nation: BTreeMap<_, _> = fits.iter().map(|f| (f.nation.clone(), f.slope)).collect();
    for f in drawn {
        assert_eq!(f.slope.to_bits(), by_nation[&f.nation].to_bits());
    }
}

#[test]
fn missing_inputs_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::open(golden_config(dir.path()), Stage::All).unwrap();
    match run.score() {
        Err(PipelineError::MissingInput { stage, .. }) => assert_eq!(stage, Stage::Collect),
        other => panic!("{other:?}"),
    }
    match run.compare() {
        Err(e @ PipelineError::MissingInput { .. }) => assert!(e.to_string().contains("run `project` first")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn compare_without_survey_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = golden_config(dir.path());
    cfg.wvs.path = None;
    let err = Run::open(cfg, Stage::Compare).err().unwrap();
    let text = err.to_string();
    assert!(text.contains("wvs.path") && text.contains("compare"), "{text}");
}
