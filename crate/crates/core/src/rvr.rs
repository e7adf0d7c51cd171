//! Value-resonance scoring of premises against bank hypotheses.
//!
//! Any NLI backend can serve: entailment counts as resonance (+1),
//! contradiction as conflict (-1), neutral as 0.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{HypothesisEntry, Polarity, ValueBank};
use crate::hashing::{premise_key, short_digest};
use crate::jsonl::{AppendLog, JsonlError};
use crate::llm::PremiseRecord;
use crate::retry::RetryPolicy;

/// Resonance label: -1 conflict, 0 neutral, +1 resonance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum ResonanceLabel {
    Conflict,
    Neutral,
    Resonance,
}

impl ResonanceLabel {
    pub fn value(self) -> i8 {
        match self {
            ResonanceLabel::Conflict => -1,
            ResonanceLabel::Neutral => 0,
            ResonanceLabel::Resonance => 1,
        }
    }

    pub const ALL: [ResonanceLabel; 3] = [
        ResonanceLabel::Conflict,
        ResonanceLabel::Neutral,
        ResonanceLabel::Resonance,
    ];
}

impl From<ResonanceLabel> for i8 {
    fn from(l: ResonanceLabel) -> i8 {
        l.value()
    }
}

impl TryFrom<i8> for ResonanceLabel {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            -1 => Ok(ResonanceLabel::Conflict),
            0 => Ok(ResonanceLabel::Neutral),
            1 => Ok(ResonanceLabel::Resonance),
            other => Err(format!("resonance label must be -1, 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for ResonanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliClass {
    Entailment,
    Neutral,
    Contradiction,
}

impl NliClass {
    /// Order of the `scores` array on the wire.
    pub const WIRE_ORDER: [NliClass; 3] = [NliClass::Entailment, NliClass::Neutral, NliClass::Contradiction];

    pub fn label(self) -> ResonanceLabel {
        match self {
            NliClass::Entailment => ResonanceLabel::Resonance,
            NliClass::Neutral => ResonanceLabel::Neutral,
            NliClass::Contradiction => ResonanceLabel::Conflict,
        }
    }
}

/// Wire request: `{"premise": ..., "hypothesis": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliRequest {
    pub premise: String,
    pub hypothesis: String,
}

/// Wire reply: `{"label": ..., "scores": [entailment, neutral, contradiction]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliReply {
    pub label: String,
    pub scores: Vec<f64>,
}

impl NliReply {
    pub fn one_hot(class: NliClass) -> Self {
        let scores = NliClass::WIRE_ORDER
            .iter()
            .map(|c| if *c == class { 0.9 } else { 0.05 })
            .collect();
        let label = match class {
            NliClass::Entailment => "entailment",
            NliClass::Neutral => "neutral",
            NliClass::Contradiction => "contradiction",
        };
        NliReply {
            label: label.into(),
            scores,
        }
    }
}

/// Maps a wire reply to a label using the argmax of `scores`.
///
/// A tie for the top score yields neutral. A reply whose label names a class
/// other than a unique argmax is malformed.
pub fn label_from_reply(reply: &NliReply) -> Result<ResonanceLabel, String> {
    let named: NliClass = serde_json::from_value(serde_json::Value::String(reply.label.clone()))
        .map_err(|_| format!("unknown label `{}`", reply.label))?;
    if reply.scores.len() != 3 {
        return Err(format!("expected 3 scores, got {}", reply.scores.len()));
    }
    if reply.scores.iter().any(|s| !s.is_finite()) {
        return Err("non-finite score".into());
    }
    let max = reply.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<usize> = (0..3).filter(|&i| reply.scores[i] == max).collect();
    if top.len() > 1 {
        return Ok(ResonanceLabel::Neutral);
    }
    let argmax = NliClass::WIRE_ORDER[top[0]];
    if argmax != named {
        return Err(format!(
            "label `{}` disagrees with argmax of scores {:?}",
            reply.label, reply.scores
        ));
    }
    Ok(argmax.label())
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NliError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
}

pub trait NliBackend: Send + Sync {
    /// Backend identity including model version; part of every cache key.
    fn name(&self) -> &str;
    fn classify(&self, request: &NliRequest) -> Result<NliReply, NliError>;
}

/// Offline backend driven by marker tokens in the premise.
///
/// `[RES:<dim>_<t|s>]` gives entailment and `[CON:<dim>_<t|s>]` contradiction
/// for the matching hypothesis; a premise equal to the hypothesis entails it;
/// everything else is neutral.
pub struct StubNliBackend {
    bank: ValueBank,
}

impl StubNliBackend {
    pub fn new(bank: &ValueBank) -> Self {
        StubNliBackend { bank: bank.clone() }
    }
}

impl NliBackend for StubNliBackend {
    fn name(&self) -> &str {
        "stub-nli/v1"
    }

    fn classify(&self, request: &NliRequest) -> Result<NliReply, NliError> {
        let premise = request.premise.trim();
        let hypothesis = request.hypothesis.trim();
        let class = if let Some((dim, pol)) = self.bank.lookup_hypothesis(&request.hypothesis) {
            let tag = format!("{}_{}]", dim.id, pol.short());
            if premise.contains(&format!("[RES:{tag}")) {
                NliClass::Entailment
            } else if premise.contains(&format!("[CON:{tag}")) {
                NliClass::Contradiction
            } else if premise == hypothesis {
                NliClass::Entailment
            } else {
                NliClass::Neutral
            }
        } else if premise == hypothesis {
            NliClass::Entailment
        } else {
            NliClass::Neutral
        };
        Ok(NliReply::one_hot(class))
    }
}

/// Client for `POST {base}/score`.
pub struct HttpNliBackend {
    name: String,
    url: String,
    agent: ureq::Agent,
}

impl HttpNliBackend {
    pub fn new(base_url: &str, model: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpNliBackend {
            name: format!("http-nli:{model}"),
            url: format!("{}/score", base_url.trim_end_matches('/')),
            agent,
        }
    }
}

impl NliBackend for HttpNliBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn classify(&self, request: &NliRequest) -> Result<NliReply, NliError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| NliError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| NliError::Unreachable(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&body).map_err(|e| NliError::Malformed(e.to_string())),
            408 | 429 | 500..=599 => Err(NliError::Unreachable(format!("HTTP {status}"))),
            _ => Err(NliError::Malformed(format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub premise_key: String,
    pub prompt_id: String,
    pub sample_index: u32,
    pub dimension_id: String,
    pub polarity: Polarity,
    pub label: ResonanceLabel,
    pub backend_name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    label: ResonanceLabel,
}

/// Label cache keyed by backend identity, premise and hypothesis.
///
/// Concurrent readers; writes are serialized and, when file-backed, appended.
pub struct ScoreCache {
    map: RwLock<HashMap<String, ResonanceLabel>>,
    log: Option<Mutex<AppendLog>>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        ScoreCache {
            map: RwLock::new(HashMap::new()),
            log: None,
        }
    }

    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let (log, entries) = AppendLog::open::<CacheEntry>(path)?;
        Ok(ScoreCache {
            map: RwLock::new(entries.into_iter().map(|e| (e.key, e.label)).collect()),
            log: Some(Mutex::new(log)),
        })
    }

    pub fn key(backend: &str, premise_key: &str, hypothesis: &str) -> String {
        short_digest(format!("{backend}\u{1f}{premise_key}\u{1f}{hypothesis}").as_bytes())
    }

    pub fn get(&self, key: &str) -> Option<ResonanceLabel> {
        self.map.read().expect("cache lock").get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: String, label: ResonanceLabel) -> Result<(), JsonlError> {
        let mut map = self.map.write().expect("cache lock");
        if map.contains_key(&key) {
            return Ok(());
        }
        if let Some(log) = &self.log {
            log.lock().expect("cache log lock").append(&CacheEntry {
                key: key.clone(),
                label,
            })?;
        }
        map.insert(key, label);
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("premise text is empty")]
    EmptyPremise,
    #[error("no hypotheses to score against")]
    NoHypotheses,
    #[error("backend unreachable after {attempts} attempts: {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error(transparent)]
    Cache(#[from] JsonlError),
}

fn classify_with_retry(
    backend: &dyn NliBackend,
    request: &NliRequest,
    retry: &RetryPolicy,
) -> Result<ResonanceLabel, ScoreError> {
    let mut attempt = 0;
    loop {
        match backend.classify(request) {
            Ok(reply) => return label_from_reply(&reply).map_err(ScoreError::Malformed),
            Err(NliError::Malformed(m)) => return Err(ScoreError::Malformed(m)),
            Err(NliError::Unreachable(m)) => {
                if attempt >= retry.max_retries {
                    return Err(ScoreError::Unreachable {
                        attempts: attempt + 1,
                        message: m,
                    });
                }
                thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
        }
    }
}

/// Scores one premise against every hypothesis, consulting the cache first.
pub fn score_premise(
    premise: &PremiseRecord,
    hypotheses: &[HypothesisEntry],
    backend: &dyn NliBackend,
    cache: &ScoreCache,
    retry: &RetryPolicy,
) -> Result<Vec<ScoreRecord>, ScoreError> {
    if premise.text.trim().is_empty() {
        return Err(ScoreError::EmptyPremise);
    }
    if hypotheses.is_empty() {
        return Err(ScoreError::NoHypotheses);
    }
    let pkey = premise_key(&premise.text);
    let mut labels = Vec::with_capacity(hypotheses.len());
    for h in hypotheses {
        let ckey = ScoreCache::key(backend.name(), &pkey, &h.text);
        let label = match cache.get(&ckey) {
            Some(l) => l,
            None => {
                let request = NliRequest {
                    premise: premise.text.clone(),
                    hypothesis: h.text.clone(),
                };
                classify_with_retry(backend, &request, retry)?
            }
        };
        labels.push((ckey, label));
    }
    // Only cache once the whole premise scored, so a failed premise leaves no partial trace.
    let mut out = Vec::with_capacity(hypotheses.len());
    for (h, (ckey, label)) in hypotheses.iter().zip(labels) {
        cache.insert(ckey, label)?;
        out.push(ScoreRecord {
            premise_key: pkey.clone(),
            prompt_id: premise.prompt_id.clone(),
            sample_index: premise.sample_index,
            dimension_id: h.dimension_id.clone(),
            polarity: h.polarity,
            label,
            backend_name: backend.name().to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringFailure {
    pub prompt_id: String,
    pub sample_index: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ScoringReport {
    pub premises_total: usize,
    pub premises_scored: usize,
    pub unreachable: usize,
    pub malformed: usize,
    pub other_errors: usize,
    pub failures: Vec<ScoringFailure>,
}

#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            concurrency: 8,
            retry: RetryPolicy::default(),
        }
    }
}

/// Scores every premise. Output is sorted by prompt, sample, then bank order.
///
/// Premises that fail are excluded and counted; the run carries on.
pub fn score_dataset(
    premises: &[PremiseRecord],
    bank: &ValueBank,
    backend: &dyn NliBackend,
    cache: &ScoreCache,
    opts: &ScoreOptions,
) -> Result<(Vec<ScoreRecord>, ScoringReport), ScoreError> {
    let hypotheses = bank.hypothesis_pairs();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Vec<ScoreRecord>, ScoreError>)>> = Mutex::new(Vec::new());
    thread::scope(|scope| {
        for _ in 0..opts.concurrency.max(1).min(premises.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(p) = premises.get(i) else { break };
                let r = score_premise(p, &hypotheses, backend, cache, &opts.retry);
                results.lock().expect("lock").push((i, r));
            });
        }
    });

    let mut results = results.into_inner().expect("lock");
    results.sort_by_key(|(i, _)| *i);
    let mut report = ScoringReport {
        premises_total: premises.len(),
        ..ScoringReport::default()
    };
    let mut records = Vec::new();
    for (i, r) in results {
        match r {
            Ok(recs) => {
                report.premises_scored += 1;
                records.extend(recs);
            }
            Err(ScoreError::Cache(e)) => return Err(ScoreError::Cache(e)),
            Err(e) => {
                match e {
                    ScoreError::Unreachable { .. } => report.unreachable += 1,
                    ScoreError::Malformed(_) => report.malformed += 1,
                    _ => report.other_errors += 1,
                }
                report.failures.push(ScoringFailure {
                    prompt_id: premises[i].prompt_id.clone(),
                    sample_index: premises[i].sample_index,
                    reason: e.to_string(),
                });
            }
        }
    }
    let excluded = report.premises_total - report.premises_scored;
    if excluded > 0 {
        log::warn!("{excluded} premises excluded from analysis after scoring errors");
    }
    let order: HashMap<&str, usize> = bank
        .dimensions()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    records.sort_by(|a, b| {
        (
            &a.prompt_id,
            a.sample_index,
            order.get(a.dimension_id.as_str()),
            a.polarity,
        )
            .cmp(&(
                &b.prompt_id,
                b.sample_index,
                order.get(b.dimension_id.as_str()),
                b.polarity,
            ))
    });
    report
        .failures
        .sort_by(|a, b| (&a.prompt_id, a.sample_index).cmp(&(&b.prompt_id, b.sample_index)));
    Ok((records, report))
}

/// Per-hypothesis share of premises that resonate, conflict, or stay neutral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallRow {
    pub dimension_id: String,
    pub polarity: Polarity,
    pub hypothesis: String,
    pub total: usize,
    pub resonance: usize,
    pub conflict: usize,
    pub neutral: usize,
    pub resonance_fraction: f64,
    pub conflict_fraction: f64,
    pub neutral_fraction: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum WaterfallError {
    #[error("no scores to summarize")]
    Empty,
}

/// Rows follow bank order; hypotheses with no scored premises are omitted.
pub fn waterfall_stats(scores: &[ScoreRecord], bank: &ValueBank) -> Result<Vec<WaterfallRow>, WaterfallError> {
    if scores.is_empty() {
        return Err(WaterfallError::Empty);
    }
    let mut counts: HashMap<(&str, Polarity), [usize; 3]> = HashMap::new();
    for s in scores {
        let c = counts.entry((s.dimension_id.as_str(), s.polarity)).or_default();
        c[(s.label.value() + 1) as usize] += 1;
    }
    let mut rows = Vec::new();
    for entry in bank.hypothesis_pairs() {
        let Some(&[conflict, neutral, resonance]) = counts.get(&(entry.dimension_id.as_str(), entry.polarity)) else {
            continue;
        };
        let total = conflict + neutral + resonance;
        let n = total as f64;
        rows.push(WaterfallRow {
            dimension_id: entry.dimension_id,
            polarity: entry.polarity,
            hypothesis: entry.text,
            total,
            resonance,
            conflict,
            neutral,
            resonance_fraction: resonance as f64 / n,
            conflict_fraction: conflict as f64 / n,
            neutral_fraction: neutral as f64 / n,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DemographicProfile;
    use std::sync::atomic::AtomicU32;

    fn premise(text: &str) -> PremiseRecord {
        PremiseRecord {
            prompt_id: "p".into(),
            sample_index: 0,
            text: text.into(),
            model_name: "m".into(),
            backend: "stub".into(),
            collected_at: "t".into(),
            profile: DemographicProfile::new(Some(20), None, None),
            dimension_id: "general".into(),
        }
    }

    fn god_hypotheses() -> Vec<HypothesisEntry> {
        ValueBank::builtin().hypothesis_pairs()[..2].to_vec()
    }

    #[test]
    fn label_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&ResonanceLabel::Conflict).unwrap(), "-1");
        assert_eq!(
            serde_json::from_str::<ResonanceLabel>("1").unwrap(),
            ResonanceLabel::Resonance
        );
        assert!(serde_json::from_str::<ResonanceLabel>("2").is_err());
    }

    #[test]
    fn reply_mapping() {
        let r = |label: &str, scores: Vec<f64>| {
            label_from_reply(&NliReply {
                label: label.into(),
                scores,
            })
        };
        assert_eq!(r("entailment", vec![0.8, 0.1, 0.1]), Ok(ResonanceLabel::Resonance));
        assert_eq!(r("contradiction", vec![0.1, 0.1, 0.8]), Ok(ResonanceLabel::Conflict));
        assert_eq!(r("neutral", vec![0.1, 0.8, 0.1]), Ok(ResonanceLabel::Neutral));
        // ties resolve to neutral
        assert_eq!(r("entailment", vec![0.45, 0.1, 0.45]), Ok(ResonanceLabel::Neutral));
        assert!(r("entailment", vec![0.1, 0.1, 0.8]).is_err());
        assert!(r("maybe", vec![0.8, 0.1, 0.1]).is_err());
        assert!(r("entailment", vec![0.8, 0.2]).is_err());
        assert!(r("entailment", vec![f64::NAN, 0.1, 0.1]).is_err());
    }

    #[test]
    fn self_entailment() {
        let bank = ValueBank::builtin();
        let backend = StubNliBackend::new(&bank);
        let recs = score_premise(
            &premise("God is very important in my life."),
            &god_hypotheses(),
            &backend,
            &ScoreCache::in_memory(),
            &RetryPolicy::immediate(0),
        )
        .unwrap();
        assert_eq!(recs[0].label, ResonanceLabel::Resonance);
        assert_eq!(recs[1].label, ResonanceLabel::Neutral);
    }

    #[test]
    fn stub_markers() {
        let bank = ValueBank::builtin();
        let backend = StubNliBackend::new(&bank);
        let recs = score_premise(
            &premise("Faith guides me. [RES:god_t] [CON:god_s]"),
            &god_hypotheses(),
            &backend,
            &ScoreCache::in_memory(),
            &RetryPolicy::immediate(0),
        )
        .unwrap();
        assert_eq!(recs[0].label, ResonanceLabel::Resonance);
        assert_eq!(recs[1].label, ResonanceLabel::Conflict);
        assert_eq!(recs[0].polarity, Polarity::Traditional);
    }

    /// Stands in for a model that reads a moderate statement as contradicting
    /// both extreme hypotheses.
    struct ContradictsAll;
    impl NliBackend for ContradictsAll {
        fn name(&self) -> &str {
            "contradicts-all"
        }
        fn classify(&self, _: &NliRequest) -> Result<NliReply, NliError> {
            Ok(NliReply::one_hot(NliClass::Contradiction))
        }
    }

    #[test]
    fn moderate_premise_conflicts_both() {
        let recs = score_premise(
            &premise("God is moderately important to me."),
            &god_hypotheses(),
            &ContradictsAll,
            &ScoreCache::in_memory(),
            &RetryPolicy::immediate(0),
        )
        .unwrap();
        let labels: Vec<i8> = recs.iter().map(|r| r.label.value()).collect();
        assert_eq!(labels, vec![-1, -1]);
    }

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
    }
    impl NliBackend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn classify(&self, _: &NliRequest) -> Result<NliReply, NliError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < self.fail_first {
                Err(NliError::Unreachable("down".into()))
            } else {
                Ok(NliReply::one_hot(NliClass::Neutral))
            }
        }
    }

    #[test]
    fn cache_hits_skip_backend() {
        let cache = ScoreCache::in_memory();
        let backend = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 0,
        };
        let p = premise("anything");
        let a = score_premise(&p, &god_hypotheses(), &backend, &cache, &RetryPolicy::immediate(0)).unwrap();
        let b = score_premise(&p, &god_hypotheses(), &backend, &cache, &RetryPolicy::immediate(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn unreachable_fails_premise_not_run() {
        let bank = ValueBank::builtin();
        let backend = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 100,
        };
        let (recs, report) = score_dataset(
            &[premise("x")],
            &bank,
            &backend,
            &ScoreCache::in_memory(),
            &ScoreOptions {
                concurrency: 1,
                retry: RetryPolicy::immediate(2),
            },
        )
        .unwrap();
        assert!(recs.is_empty());
        assert_eq!(report.unreachable, 1);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_premise_rejected() {
        let r = score_premise(
            &premise("  "),
            &god_hypotheses(),
            &ContradictsAll,
            &ScoreCache::in_memory(),
            &RetryPolicy::immediate(0),
        );
        assert!(matches!(r, Err(ScoreError::EmptyPremise)));
    }

    fn rec(i: u32, label: ResonanceLabel) -> ScoreRecord {
        ScoreRecord {
            premise_key: format!("k{i}"),
            prompt_id: "p".into(),
            sample_index: i,
            dimension_id: "god".into(),
            polarity: Polarity::Traditional,
            label,
            backend_name: "b".into(),
        }
    }

    #[test]
    fn waterfall_counting() {
        use ResonanceLabel::*;
        let bank = ValueBank::builtin();
        let labels = [
            Resonance, Resonance, Resonance, Resonance, Resonance, Resonance, Conflict, Conflict, Neutral, Neutral,
        ];
        let scores: Vec<_> = labels.iter().enumerate().map(|(i, l)| rec(i as u32, *l)).collect();
        let rows = waterfall_stats(&scores, &bank).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].resonance_fraction, rows[0].conflict_fraction), (0.6, 0.2));

        let rows = waterfall_stats(&[rec(0, Neutral), rec(1, Neutral)], &bank).unwrap();
        assert_eq!((rows[0].resonance_fraction, rows[0].conflict_fraction), (0.0, 0.0));
        let rows = waterfall_stats(&[rec(0, Resonance)], &bank).unwrap();
        assert_eq!((rows[0].resonance_fraction, rows[0].conflict_fraction), (1.0, 0.0));
        assert_eq!(waterfall_stats(&[], &bank), Err(WaterfallError::Empty));
    }
}
