//! Completion collection: N sampled responses per prompt, persisted as an
//! append-only JSON-lines dataset that can be resumed after interruption.

use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::bank::{Polarity, ValueBank, GENERAL_ID};
use crate::grid::{DemographicProfile, PromptRecord};
use crate::hashing::{seed_from, short_digest};
use crate::jsonl::{AppendLog, JsonlError};
use crate::retry::{Pacer, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub samples_per_prompt: u32,
    pub model_name: String,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            max_tokens: 200,
            temperature: 1.0,
            top_p: 0.5,
            samples_per_prompt: 50,
            model_name: "text-davinci-003".into(),
        }
    }
}

impl SamplingConfig {
    /// Every violated bound as `(field, reason)`.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.max_tokens == 0 {
            out.push(("max_tokens", "must be at least 1".to_string()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            out.push(("temperature", format!("{} is not >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            out.push(("top_p", format!("{} is outside (0, 1]", self.top_p)));
        }
        if self.samples_per_prompt == 0 {
            out.push(("samples_per_prompt", "must be at least 1".to_string()));
        }
        if self.model_name.trim().is_empty() {
            out.push(("model_name", "must not be empty".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<(), CollectError> {
        match self.problems().into_iter().next() {
            None => Ok(()),
            Some((field, reason)) => Err(CollectError::InvalidConfig(format!("{field}: {reason}"))),
        }
    }
}

/// One generated response together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseRecord {
    pub prompt_id: String,
    pub sample_index: u32,
    pub text: String,
    pub model_name: String,
    pub backend: String,
    pub collected_at: String,
    pub profile: DemographicProfile,
    pub dimension_id: String,
}

pub struct CompletionRequest<'a> {
    pub prompt: &'a PromptRecord,
    pub sample_index: u32,
    pub sampling: &'a SamplingConfig,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("quota exhausted: {message}")]
    Quota {
        retry_after: Option<Duration>,
        message: String,
    },
    #[error("request rejected: {0}")]
    Rejected(String),
}

pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
}

/// Deterministic offline backend.
///
/// Output depends only on the seed, prompt id and sample index. Each response
/// carries `[RES:<dim>_<t|s>]` / `[CON:<dim>_<t|s>]` markers that the stub NLI
/// backend reads back, with a persona-dependent lean toward the traditional pole.
pub struct StubCompletionBackend {
    seed: u64,
    dimension_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stance {
    Traditional,
    LeanTraditional,
    Secular,
    LeanSecular,
    Moderate,
    Silent,
}

impl StubCompletionBackend {
    pub fn new(bank: &ValueBank, seed: u64) -> Self {
        StubCompletionBackend {
            seed,
            dimension_ids: bank.dimensions().iter().map(|d| d.id.clone()).collect(),
        }
    }

    /// Probability mass on the traditional side for this persona, in [0.1, 0.9].
    fn traditional_propensity(profile: &DemographicProfile) -> f64 {
        let mut p = 0.55;
        if let Some(n) = &profile.nationality {
            let byte = u8::from_str_radix(&short_digest(n.as_bytes())[..2], 16).unwrap_or(128);
            p = 0.3 + 0.5 * f64::from(byte) / 255.0;
        }
        if let Some(age) = profile.age {
            p += 0.004 * (f64::from(age) - 45.0);
        }
        if profile.sex.as_deref() == Some("man") {
            p -= 0.03;
        }
        p.clamp(0.1, 0.9)
    }

    fn draw_stance(rng: &mut ChaCha8Rng, p_trad: f64) -> Stance {
        let u: f64 = rng.random();
        let polar = 0.8;
        if u < 0.1 {
            Stance::Moderate
        } else if u < 0.2 {
            Stance::Silent
        } else {
            let v = (u - 0.2) / polar;
            let lean: f64 = rng.random();
            if v < p_trad {
                if lean < 0.7 {
                    Stance::Traditional
                } else {
                    Stance::LeanTraditional
                }
            } else if lean < 0.7 {
                Stance::Secular
            } else {
                Stance::LeanSecular
            }
        }
    }
}

fn marker(kind: &str, dim: &str, pol: Polarity) -> String {
    format!("[{kind}:{dim}_{}]", pol.short())
}

impl CompletionBackend for StubCompletionBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let prompt = request.prompt;
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from(&[
            &self.seed.to_le_bytes(),
            prompt.prompt_id.as_bytes(),
            &request.sample_index.to_le_bytes(),
        ]));
        let p_trad = Self::traditional_propensity(&prompt.profile);
        let dims: Vec<&str> = if prompt.dimension_id == GENERAL_ID {
            self.dimension_ids.iter().map(String::as_str).collect()
        } else {
            vec![prompt.dimension_id.as_str()]
        };

        let mut sentences = Vec::with_capacity(dims.len());
        for dim in dims {
            use Polarity::{Secular as S, Traditional as T};
            let (phrase, markers) = match Self::draw_stance(&mut rng, p_trad) {
                Stance::Traditional => (
                    "I hold firmly to the traditional view",
                    vec![marker("RES", dim, T), marker("CON", dim, S)],
                ),
                Stance::LeanTraditional => ("I lean traditional", vec![marker("RES", dim, T)]),
                Stance::Secular => (
                    "I hold firmly to the secular view",
                    vec![marker("RES", dim, S), marker("CON", dim, T)],
                ),
                Stance::LeanSecular => ("I lean secular", vec![marker("RES", dim, S)]),
                Stance::Moderate => (
                    "my view sits somewhere in between",
                    vec![marker("CON", dim, T), marker("CON", dim, S)],
                ),
                Stance::Silent => ("I have little to say", Vec::new()),
            };
            let mut s = format!("On {dim}, {phrase}.");
            for m in markers {
                s.push(' ');
                s.push_str(&m);
            }
            sentences.push(s);
        }
        Ok(sentences.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApiShape {
    /// `POST {base}/completions`, text in `choices[0].text`.
    #[default]
    Completions,
    /// `POST {base}/chat/completions`, text in `choices[0].message.content`.
    Chat,
}

/// HTTP JSON completion API client.
pub struct HttpCompletionBackend {
    name: String,
    base_url: String,
    api_key: Option<String>,
    shape: ApiShape,
    agent: ureq::Agent,
}

impl HttpCompletionBackend {
    pub fn new(base_url: &str, api_key: Option<String>, shape: ApiShape, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpCompletionBackend {
            name: format!("http:{}", base_url.trim_end_matches('/')),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            shape,
            agent,
        }
    }

    fn body(&self, req: &CompletionRequest<'_>) -> (String, serde_json::Value) {
        let s = req.sampling;
        match self.shape {
            ApiShape::Completions => (
                format!("{}/completions", self.base_url),
                json!({
                    "model": s.model_name,
                    "prompt": req.prompt.rendered_prompt,
                    "max_tokens": s.max_tokens,
                    "temperature": s.temperature,
                    "top_p": s.top_p,
                }),
            ),
            ApiShape::Chat => (
                format!("{}/chat/completions", self.base_url),
                json!({
                    "model": s.model_name,
                    "messages": [{"role": "user", "content": req.prompt.rendered_prompt}],
                    "max_tokens": s.max_tokens,
                    "temperature": s.temperature,
                    "top_p": s.top_p,
                }),
            ),
        }
    }

    fn extract(&self, reply: &serde_json::Value) -> Option<String> {
        let choice = reply.get("choices")?.get(0)?;
        let text = match self.shape {
            ApiShape::Completions => choice.get("text")?,
            ApiShape::Chat => choice.get("message")?.get("content")?,
        };
        text.as_str().map(str::to_owned)
    }
}

impl CompletionBackend for HttpCompletionBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let (url, body) = self.body(request);
        let mut builder = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = builder
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => {
                let reply: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| BackendError::Rejected(format!("malformed reply: {e}")))?;
                self.extract(&reply)
                    .ok_or_else(|| BackendError::Rejected("reply has no completion text".into()))
            }
            401 | 403 => Err(BackendError::Auth(format!("HTTP {status}"))),
            429 => Err(BackendError::Quota {
                retry_after,
                message: format!("HTTP 429: {}", snippet(&text)),
            }),
            408 | 500..=599 => Err(BackendError::Transport(format!("HTTP {status}"))),
            _ => Err(BackendError::Rejected(format!("HTTP {status}: {}", snippet(&text)))),
        }
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("authentication failed, aborting collection: {0}")]
    Auth(String),
    #[error(transparent)]
    Store(#[from] JsonlError),
}

/// Append-only premise dataset keyed by `(prompt_id, sample_index)`.
pub struct PremiseStore {
    inner: Mutex<StoreInner>,
}

struct StoreInner {
    log: AppendLog,
    keys: HashSet<(String, u32)>,
}

impl PremiseStore {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let (log, existing) = AppendLog::open::<PremiseRecord>(path)?;
        let keys = existing.into_iter().map(|r| (r.prompt_id, r.sample_index)).collect();
        Ok(PremiseStore {
            inner: Mutex::new(StoreInner { log, keys }),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("store lock").keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, prompt_id: &str, sample_index: u32) -> bool {
        self.inner
            .lock()
            .expect("store lock")
            .keys
            .contains(&(prompt_id.to_string(), sample_index))
    }

    /// Returns false without writing when the key is already present.
    pub fn append(&self, record: &PremiseRecord) -> Result<bool, JsonlError> {
        let mut inner = self.inner.lock().expect("store lock");
        let key = (record.prompt_id.clone(), record.sample_index);
        if inner.keys.contains(&key) {
            return Ok(false);
        }
        inner.log.append(record)?;
        inner.keys.insert(key);
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    #[default]
    System,
    /// Every record gets this timestamp; used for reproducible runs.
    Fixed(String),
}

impl Clock {
    pub fn now(&self) -> String {
        match self {
            Clock::System => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            Clock::Fixed(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CollectOptions {
    /// Maximum requests in flight.
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Extra attempts when the backend returns blank text.
    pub empty_retries: u32,
    /// Pause applied after a quota response without `Retry-After`.
    pub quota_pause: Duration,
    pub max_quota_pauses: u32,
    pub requests_per_second: f64,
    pub clock: Clock,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            concurrency: 8,
            retry: RetryPolicy::default(),
            empty_retries: 3,
            quota_pause: Duration::from_secs(30),
            max_quota_pauses: 10,
            requests_per_second: 0.0,
            clock: Clock::System,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionFailure {
    pub prompt_id: String,
    pub sample_index: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CollectReport {
    pub requested: usize,
    pub already_present: usize,
    pub written: usize,
    pub failures: Vec<CollectionFailure>,
}

enum Outcome {
    Text(String),
    Failed(String),
    Fatal(CollectError),
}

fn fetch_one(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest<'_>,
    opts: &CollectOptions,
    pacer: &Pacer,
) -> Outcome {
    let (mut transport, mut empty, mut quota) = (0u32, 0u32, 0u32);
    loop {
        pacer.acquire();
        match backend.complete(request) {
            Ok(text) if text.trim().is_empty() => {
                if empty >= opts.empty_retries {
                    return Outcome::Failed(format!("empty completion after {} attempts", empty + 1));
                }
                empty += 1;
            }
            Ok(text) => return Outcome::Text(text.trim().to_string()),
            Err(BackendError::Transport(msg)) => {
                if transport >= opts.retry.max_retries {
                    return Outcome::Failed(format!("transport failure after {} attempts: {msg}", transport + 1));
                }
                thread::sleep(opts.retry.delay(transport));
                transport += 1;
            }
            Err(BackendError::Auth(msg)) => return Outcome::Fatal(CollectError::Auth(msg)),
            Err(BackendError::Quota { retry_after, message }) => {
                if quota >= opts.max_quota_pauses {
                    return Outcome::Failed(format!("quota still exhausted: {message}"));
                }
                log::warn!("quota exhausted, pausing collection: {message}");
                pacer.pause(retry_after.unwrap_or(opts.quota_pause));
                quota += 1;
            }
            Err(BackendError::Rejected(msg)) => return Outcome::Failed(msg),
        }
    }
}

/// Collects `samples_per_prompt` responses for every prompt, skipping pairs
/// already present in `store`.
///
/// Failed requests are reported, never written, so a later run retries them.
pub fn collect(
    prompts: &[PromptRecord],
    sampling: &SamplingConfig,
    backend: &dyn CompletionBackend,
    store: &PremiseStore,
    opts: &CollectOptions,
) -> Result<CollectReport, CollectError> {
    sampling.validate()?;
    let mut work = Vec::new();
    let mut already_present = 0;
    for prompt in prompts {
        for sample_index in 0..sampling.samples_per_prompt {
            if store.contains(&prompt.prompt_id, sample_index) {
                already_present += 1;
            } else {
                work.push((prompt, sample_index));
            }
        }
    }

    let pacer = Pacer::per_second(opts.requests_per_second);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let written = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    let fatal: Mutex<Option<CollectError>> = Mutex::new(None);

    thread::scope(|scope| {
        for _ in 0..opts.concurrency.max(1).min(work.len().max(1)) {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(prompt, sample_index)) = work.get(i) else {
                    break;
                };
                let request = CompletionRequest {
                    prompt,
                    sample_index,
                    sampling,
                };
                let outcome = fetch_one(backend, &request, opts, &pacer);
                let fail = |reason: String| {
                    failures.lock().expect("lock").push(CollectionFailure {
                        prompt_id: prompt.prompt_id.clone(),
                        sample_index,
                        reason,
                    })
                };
                match outcome {
                    Outcome::Text(text) => {
                        let record = PremiseRecord {
                            prompt_id: prompt.prompt_id.clone(),
                            sample_index,
                            text,
                            model_name: sampling.model_name.clone(),
                            backend: backend.name().to_string(),
                            collected_at: opts.clock.now(),
                            profile: prompt.profile.clone(),
                            dimension_id: prompt.dimension_id.clone(),
                        };
                        match store.append(&record) {
                            Ok(true) => {
                                written.fetch_add(1, Ordering::SeqCst);
                            }
                            Ok(false) => {}
                            Err(e) => {
                                abort.store(true, Ordering::SeqCst);
                                fatal.lock().expect("lock").get_or_insert(e.into());
                            }
                        }
                    }
                    Outcome::Failed(reason) => fail(reason),
                    Outcome::Fatal(e) => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().expect("lock").get_or_insert(e);
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().expect("lock") {
        return Err(e);
    }
    let mut failures = failures.into_inner().expect("lock");
    failures.sort_by(|a, b| (&a.prompt_id, a.sample_index).cmp(&(&b.prompt_id, b.sample_index)));
    if !failures.is_empty() {
        log::warn!("{} completions failed and were not recorded", failures.len());
    }
    Ok(CollectReport {
        requested: prompts.len() * sampling.samples_per_prompt as usize,
        already_present,
        written: written.into_inner(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{enumerate_profiles, render_prompts, LevelSets};
    use crate::jsonl::read_jsonl;
    use std::sync::atomic::AtomicU32;

    fn prompts(n: usize) -> Vec<PromptRecord> {
        let profiles = enumerate_profiles(&LevelSets::default()).unwrap();
        let mut all = render_prompts(&profiles, &ValueBank::builtin());
        all.truncate(n);
        all
    }

    fn opts() -> CollectOptions {
        CollectOptions {
            retry: RetryPolicy::immediate(5),
            quota_pause: Duration::ZERO,
            clock: Clock::Fixed("2024-01-01T00:00:00.000Z".into()),
            ..CollectOptions::default()
        }
    }

    fn sampling(n: u32) -> SamplingConfig {
        SamplingConfig {
            samples_per_prompt: n,
            ..SamplingConfig::default()
        }
    }

    #[test]
    fn stub_is_deterministic() {
        let bank = ValueBank::builtin();
        let backend = StubCompletionBackend::new(&bank, 7);
        let p = prompts(6);
        let cfg = sampling(1);
        let req = |i| CompletionRequest {
            prompt: &p[5],
            sample_index: i,
            sampling: &cfg,
        };
        let a = backend.complete(&req(0)).unwrap();
        assert_eq!(a, backend.complete(&req(0)).unwrap());
        assert_eq!(p[5].dimension_id, "general");
        assert!(a.contains("On god,") && a.contains("On authority,"));
        let single = CompletionRequest {
            prompt: &p[0],
            sample_index: 0,
            sampling: &cfg,
        };
        let text = backend.complete(&single).unwrap();
        assert!(text.starts_with("On god,") && !text.contains("On child"));
    }

    #[test]
    fn single_prompt_single_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("premises.jsonl");
        let store = PremiseStore::open(&path).unwrap();
        let backend = StubCompletionBackend::new(&ValueBank::builtin(), 1);
        let report = collect(&prompts(1), &sampling(1), &backend, &store, &opts()).unwrap();
        assert_eq!(report.written, 1);
        let recs: Vec<PremiseRecord> = read_jsonl(&path).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].model_name, "text-davinci-003");
        assert_eq!(recs[0].collected_at, "2024-01-01T00:00:00.000Z");
    }

    #[test]
    fn invalid_sampling_rejected() {
        let mut cfg = sampling(1);
        cfg.top_p = 0.0;
        cfg.temperature = -1.0;
        assert_eq!(cfg.problems().len(), 2);
        assert!(cfg.validate().is_err());
    }

    struct Scripted {
        calls: AtomicU32,
        script: Vec<Result<String, BackendError>>,
    }

    impl CompletionBackend for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, BackendError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            self.script[i.min(self.script.len() - 1)].clone()
        }
    }

    fn run_scripted(script: Vec<Result<String, BackendError>>) -> (Result<CollectReport, CollectError>, u32) {
        let dir = tempfile::tempdir().unwrap();
        let store = PremiseStore::open(&dir.path().join("p.jsonl")).unwrap();
        let backend = Scripted {
            calls: AtomicU32::new(0),
            script,
        };
        let r = collect(&prompts(1), &sampling(1), &backend, &store, &opts());
        (r, backend.calls.load(Ordering::SeqCst))
    }

    #[test]
    fn transport_errors_retried_then_succeed() {
        let t = || Err(BackendError::Transport("reset".into()));
        let (r, calls) = run_scripted(vec![t(), t(), Ok("fine".into())]);
        assert_eq!(r.unwrap().written, 1);
        assert_eq!(calls, 3);
    }

    #[test]
    fn transport_budget_is_bounded() {
        let (r, calls) = run_scripted(vec![Err(BackendError::Transport("down".into()))]);
        let r = r.unwrap();
        assert_eq!(r.written, 0);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(calls, 6);
    }

    #[test]
    fn empty_completions_become_failures() {
        let (r, calls) = run_scripted(vec![Ok("   ".into())]);
        let r = r.unwrap();
        assert_eq!(r.written, 0);
        assert!(r.failures[0].reason.contains("empty completion"));
        assert_eq!(calls, 4);
        let (r, _) = run_scripted(vec![Ok("".into()), Ok(" ok ".into())]);
        assert_eq!(r.unwrap().written, 1);
    }

    #[test]
    fn auth_failure_is_fatal() {
        let (r, calls) = run_scripted(vec![Err(BackendError::Auth("bad key".into()))]);
        assert!(matches!(r, Err(CollectError::Auth(_))));
        assert_eq!(calls, 1);
    }

    #[test]
    fn quota_pauses_then_resumes() {
        let q = || {
            Err(BackendError::Quota {
                retry_after: Some(Duration::from_millis(5)),
                message: "slow down".into(),
            })
        };
        let (r, calls) = run_scripted(vec![q(), q(), Ok("done".into())]);
        assert_eq!(r.unwrap().written, 1);
        assert_eq!(calls, 3);
    }
}
