//! Call/response interfaces for the learned components (entity and relation
//! detectors, sentence embedder, language model), their deterministic mocks,
//! and an HTTP client for chat-completion endpoints.
//!
//! Every call made through [`Oracles`] is appended to a shared [`Transcript`].

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, OracleError, Result};
use crate::graph::BaseGraph;
use crate::symbol::{fold, normalize};

pub type OracleResult<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredText {
    pub text: String,
    pub score: f64,
}

impl ScoredText {
    pub fn new(text: impl Into<String>, score: f64) -> Self {
        Self {
            text: text.into(),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub s: String,
    pub r: String,
    pub o: String,
    pub score: f64,
}

pub trait DetectorOracle: Send + Sync {
    /// Entity candidates with scores in `[0, 1]`, in detector order.
    fn detect_entities(&self, text: &str) -> OracleResult<Vec<ScoredText>>;
    /// Best relation guess for `text`, if any.
    fn detect_relation(&self, text: &str) -> OracleResult<Option<ScoredText>>;
    /// Structured `(s, r, o)` extractions from a natural-language edit, best first.
    fn extract_triple(&self, text: &str) -> OracleResult<Vec<ScoredTriple>>;
}

pub trait EmbedderOracle: Send + Sync {
    fn embed(&self, text: &str) -> OracleResult<Vec<f64>>;
}

pub trait LlmOracle: Send + Sync {
    fn complete(&self, prompt: &str) -> OracleResult<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    DetectEntities,
    DetectRelation,
    ExtractTriple,
    Embed,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: OracleKind,
    pub prompt_or_query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub response: String,
    #[serde(skip)]
    pub latency: Duration,
}

/// Append-only audit log shared by clones.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    entries: Arc<Mutex<Vec<TranscriptEntry>>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, entry: TranscriptEntry) {
        self.entries.lock().push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().clone()
    }

    pub fn clear(&self) {
        self.entries.lock().clear();
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.entries.lock().iter() {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}

fn render<T: Serialize>(res: &OracleResult<T>) -> String {
    match res {
        Ok(v) => serde_json::to_string(v).unwrap_or_default(),
        Err(e) => format!("error: {e}"),
    }
}

/// The three oracles plus the transcript every call is logged to.
#[derive(Clone)]
pub struct Oracles {
    detector: Arc<dyn DetectorOracle>,
    embedder: Arc<dyn EmbedderOracle>,
    llm: Arc<dyn LlmOracle>,
    transcript: Transcript,
}

impl fmt::Debug for Oracles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracles")
            .field("transcript_len", &self.transcript.len())
            .finish_non_exhaustive()
    }
}

impl Oracles {
    pub fn new(
        detector: Arc<dyn DetectorOracle>,
        embedder: Arc<dyn EmbedderOracle>,
        llm: Arc<dyn LlmOracle>,
    ) -> Self {
        Self {
            detector,
            embedder,
            llm,
            transcript: Transcript::new(),
        }
    }

    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.transcript = transcript;
        self
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn record<T: Serialize>(
        &self,
        role: OracleKind,
        query: &str,
        context: Option<&str>,
        call: impl FnOnce() -> OracleResult<T>,
    ) -> OracleResult<T> {
        let start = Instant::now();
        let res = call();
        self.transcript.push(TranscriptEntry {
            role,
            prompt_or_query: query.to_string(),
            context: context.map(str::to_string),
            response: render(&res),
            latency: start.elapsed(),
        });
        res
    }

    pub fn detect_entities(&self, text: &str) -> OracleResult<Vec<ScoredText>> {
        self.record(OracleKind::DetectEntities, text, None, || {
            self.detector.detect_entities(text)
        })
    }

    pub fn detect_relation(&self, text: &str) -> OracleResult<Option<ScoredText>> {
        self.record(OracleKind::DetectRelation, text, None, || {
            self.detector.detect_relation(text)
        })
    }

    pub fn extract_triple(&self, text: &str) -> OracleResult<Vec<ScoredTriple>> {
        self.record(OracleKind::ExtractTriple, text, None, || {
            self.detector.extract_triple(text)
        })
    }

    pub fn embed(&self, text: &str) -> OracleResult<Vec<f64>> {
        self.record(OracleKind::Embed, text, None, || self.embedder.embed(text))
    }

    pub fn complete(&self, prompt: &str) -> OracleResult<String> {
        self.complete_with_context(prompt, None)
    }

    /// `context` is the injected edited-triple text, logged alongside the prompt.
    pub fn complete_with_context(&self, prompt: &str, context: Option<&str>) -> OracleResult<String> {
        self.record(OracleKind::Complete, prompt, context, || {
            self.llm.complete(prompt)
        })
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn jaccard(a: &[String], b: &[String]) -> f64 {
    let mut inter = 0usize;
    let mut union: Vec<&String> = Vec::with_capacity(a.len() + b.len());
    for t in a.iter().chain(b) {
        if !union.contains(&t) {
            union.push(t);
        }
    }
    let mut seen: Vec<&String> = Vec::new();
    for t in a {
        if b.contains(t) && !seen.contains(&t) {
            seen.push(t);
            inter += 1;
        }
    }
    if union.is_empty() {
        0.0
    } else {
        inter as f64 / union.len() as f64
    }
}

/// Best token-set Jaccard between `entry` and any window of `query` with the
/// same token length. A verbatim mention scores 1.0.
pub fn window_jaccard(query: &[String], entry: &[String]) -> f64 {
    if entry.is_empty() || query.is_empty() {
        return 0.0;
    }
    if query.len() <= entry.len() {
        return jaccard(query, entry);
    }
    query
        .windows(entry.len())
        .map(|w| jaccard(w, entry))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
struct LexEntry {
    label: String,
    forms: Vec<Vec<String>>,
}

impl LexEntry {
    fn score(&self, query: &[String]) -> f64 {
        self.forms
            .iter()
            .map(|f| window_jaccard(query, f))
            .fold(0.0, f64::max)
    }

    /// Token offset of the first verbatim mention, if any.
    fn mention_at(&self, query: &[String]) -> Option<usize> {
        self.forms
            .iter()
            .filter(|f| !f.is_empty() && f.len() <= query.len())
            .filter_map(|f| query.windows(f.len()).position(|w| w == f.as_slice()))
            .min()
    }
}

/// Stand-in detector scoring lexicon entries by windowed token Jaccard.
#[derive(Debug, Clone, Default)]
pub struct LexiconDetector {
    entities: Vec<LexEntry>,
    relations: Vec<LexEntry>,
}

impl LexiconDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, label: &str) {
        let label = normalize(label);
        if label.is_empty() || self.entities.iter().any(|e| e.label == label) {
            return;
        }
        let forms = vec![tokenize(&label)];
        self.entities.push(LexEntry { label, forms });
    }

    /// Relation labels match on their own tokens (`origin_country` reads as
    /// "origin country") plus any aliases.
    pub fn add_relation(&mut self, label: &str, aliases: &[&str]) {
        let label = normalize(label);
        if label.is_empty() {
            return;
        }
        let mut forms = vec![tokenize(&label)];
        forms.extend(aliases.iter().map(|a| tokenize(a)));
        if let Some(existing) = self.relations.iter_mut().find(|e| e.label == label) {
            for f in forms {
                if !existing.forms.contains(&f) {
                    existing.forms.push(f);
                }
            }
            return;
        }
        self.relations.push(LexEntry { label, forms });
    }

    pub fn with_entities<'a>(mut self, labels: impl IntoIterator<Item = &'a str>) -> Self {
        for l in labels {
            self.add_entity(l);
        }
        self
    }

    pub fn with_relations<'a>(mut self, labels: impl IntoIterator<Item = &'a str>) -> Self {
        for l in labels {
            self.add_relation(l, &[]);
        }
        self
    }

    /// Lexicon of every entity and relation in `base`, in first-seen order.
    pub fn from_base(base: &BaseGraph) -> Self {
        let mut det = Self::new();
        det.extend_from_base(base);
        det
    }

    pub fn extend_from_base(&mut self, base: &BaseGraph) {
        let symbols = base.symbols();
        for t in base.triples() {
            self.add_entity(&symbols.text(t.s));
            self.add_entity(&symbols.text(t.o));
            self.add_relation(&symbols.text(t.r), &[]);
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }
}

impl DetectorOracle for LexiconDetector {
    fn detect_entities(&self, text: &str) -> OracleResult<Vec<ScoredText>> {
        let q = tokenize(text);
        Ok(self
            .entities
            .iter()
            .filter_map(|e| {
                let score = e.score(&q);
                (score > 0.0).then(|| ScoredText::new(e.label.clone(), score))
            })
            .collect())
    }

    fn detect_relation(&self, text: &str) -> OracleResult<Option<ScoredText>> {
        let q = tokenize(text);
        let mut best: Option<ScoredText> = None;
        for rel in &self.relations {
            let score = rel.score(&q);
            if score > 0.0 && best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(ScoredText::new(rel.label.clone(), score));
            }
        }
        Ok(best)
    }

    /// Subject is the first verbatim entity mention, object the last distinct
    /// one; the score is the relation's.
    fn extract_triple(&self, text: &str) -> OracleResult<Vec<ScoredTriple>> {
        let q = tokenize(text);
        let Some(rel) = self.detect_relation(text)? else {
            return Ok(Vec::new());
        };
        let mut mentions: Vec<(usize, &str)> = self
            .entities
            .iter()
            .filter_map(|e| e.mention_at(&q).map(|at| (at, e.label.as_str())))
            .collect();
        mentions.sort_by_key(|(at, _)| *at);
        let (Some(first), Some(last)) = (mentions.first(), mentions.last()) else {
            return Ok(Vec::new());
        };
        if first.1 == last.1 {
            return Ok(Vec::new());
        }
        Ok(vec![ScoredTriple {
            s: first.1.to_string(),
            r: rel.text,
            o: last.1.to_string(),
            score: rel.score,
        }])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorScript {
    #[serde(default)]
    pub entities: Vec<ScoredText>,
    #[serde(default)]
    pub relation: Option<ScoredText>,
    #[serde(default)]
    pub triples: Vec<ScoredTriple>,
}

/// Fixture detector: exact responses keyed by normalized, case-folded query,
/// delegating unkeyed queries to a fallback (or answering empty).
#[derive(Clone, Default)]
pub struct ScriptedDetector {
    scripts: HashMap<String, DetectorScript>,
    fallback: Option<Arc<dyn DetectorOracle>>,
}

impl ScriptedDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn DetectorOracle>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn insert(&mut self, query: &str, script: DetectorScript) {
        self.scripts.insert(fold(query), script);
    }

    pub fn is_empty(&self) -> bool {
        self.scripts.is_empty()
    }
}

impl DetectorOracle for ScriptedDetector {
    fn detect_entities(&self, text: &str) -> OracleResult<Vec<ScoredText>> {
        match (self.scripts.get(&fold(text)), &self.fallback) {
            (Some(s), _) => Ok(s.entities.clone()),
            (None, Some(f)) => f.detect_entities(text),
            (None, None) => Ok(Vec::new()),
        }
    }

    fn detect_relation(&self, text: &str) -> OracleResult<Option<ScoredText>> {
        match (self.scripts.get(&fold(text)), &self.fallback) {
            (Some(s), _) => Ok(s.relation.clone()),
            (None, Some(f)) => f.detect_relation(text),
            (None, None) => Ok(None),
        }
    }

    fn extract_triple(&self, text: &str) -> OracleResult<Vec<ScoredTriple>> {
        match (self.scripts.get(&fold(text)), &self.fallback) {
            (Some(s), _) => Ok(s.triples.clone()),
            (None, Some(f)) => f.extract_triple(text),
            (None, None) => Ok(Vec::new()),
        }
    }
}

/// L2-normalized term-frequency vector over a hashed vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dims: usize,
    seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self {
            dims: 4096,
            seed: 0,
        }
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashEmbedder {
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(dims > 0, "embedding needs at least one dimension");
        Self { dims, seed }
    }
}

impl EmbedderOracle for HashEmbedder {
    fn embed(&self, text: &str) -> OracleResult<Vec<f64>> {
        let mut v = vec![0.0; self.dims];
        for tok in tokenize(text) {
            let slot = (fnv1a(self.seed, tok.as_bytes()) % self.dims as u64) as usize;
            v[slot] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Cosine similarity; zero when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub pattern: String,
    pub response: String,
}

/// Mock language model: the longest registered pattern contained in the
/// prompt wins; ties go to the earliest registration.
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    rules: Vec<ScriptRule>,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.push(pattern, response);
        self
    }

    pub fn push(&mut self, pattern: impl Into<String>, response: impl Into<String>) {
        self.rules.push(ScriptRule {
            pattern: pattern.into(),
            response: response.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl LlmOracle for ScriptedLlm {
    fn complete(&self, prompt: &str) -> OracleResult<String> {
        let mut best: Option<&ScriptRule> = None;
        for rule in &self.rules {
            if prompt.contains(&rule.pattern)
                && best.is_none_or(|b| rule.pattern.len() > b.pattern.len())
            {
                best = Some(rule);
            }
        }
        best.map(|r| r.response.clone()).ok_or_else(|| {
            let head: String = prompt.chars().take(80).collect();
            OracleError::ScriptMiss(head)
        })
    }
}

pub const ENV_BASE_URL: &str = "CAPEKG_LLM_BASE_URL";
pub const ENV_MODEL: &str = "CAPEKG_LLM_MODEL";
pub const ENV_API_KEY: &str = "CAPEKG_LLM_API_KEY";

struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock();
        while *active >= self.limit {
            self.freed.wait(&mut active);
        }
        *active += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.active.lock() -= 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completion client (`POST {base}/chat/completions`, bearer auth,
/// temperature 0) with a bound on concurrent in-flight requests.
pub struct HttpLlm {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    api_key: Option<String>,
    in_flight: InFlight,
}

impl fmt::Debug for HttpLlm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpLlm")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpLlm {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            in_flight: InFlight {
                limit: 4,
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.in_flight.limit = limit.max(1);
        self
    }

    /// `None` unless base URL and model are both set.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ENV_BASE_URL).ok().filter(|v| !v.is_empty())?;
        let model = std::env::var(ENV_MODEL).ok().filter(|v| !v.is_empty())?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|v| !v.is_empty());
        Some(Self::new(base, model, key))
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        })
    }
}

/// First choice's message text from a chat-completion response.
pub fn parse_chat_response(body: &serde_json::Value) -> OracleResult<String> {
    body.pointer("/choices/0/message/content")
        .or_else(|| body.pointer("/choices/0/text"))
        .and_then(|v| v.as_str())
        .map(|s| s.trim().to_string())
        .ok_or_else(|| OracleError::Unavailable("response has no choices[0] message".into()))
}

impl LlmOracle for HttpLlm {
    fn complete(&self, prompt: &str) -> OracleResult<String> {
        let _slot = self.in_flight.acquire();
        let mut req = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(self.request_body(prompt))
            .map_err(|e| OracleError::Unavailable(e.to_string()))?;
        let body: serde_json::Value = resp
            .into_json()
            .map_err(|e| OracleError::Unavailable(e.to_string()))?;
        parse_chat_response(&body)
    }
}

/// Decomposition script / demo pool line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub question: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct DetectorFixture {
    query: String,
    #[serde(flatten)]
    script: DetectorScript,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum FixtureLine {
    Llm(ScriptRule),
    Decomposition(DemoRecord),
    Detector(DetectorFixture),
}

/// Mixed JSONL fixture file: LLM rules `{"match","response"}`,
/// decompositions `{"question","steps"}` and detector scripts
/// `{"query","entities","relation","triples"}`.
#[derive(Clone, Default)]
pub struct MockFixtures {
    pub llm: ScriptedLlm,
    pub decompositions: Vec<DemoRecord>,
    pub detector: ScriptedDetector,
}

impl MockFixtures {
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut out = Self::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            match parsed {
                FixtureLine::Llm(rule) => out.llm.rules.push(rule),
                FixtureLine::Decomposition(d) => out.decompositions.push(d),
                FixtureLine::Detector(d) => out.detector.insert(&d.query, d.script),
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }
}
