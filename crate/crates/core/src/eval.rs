//! MQuAKE-style evaluation: ingest cases, register each batch's edits,
//! answer every case through the reasoner, and score final answers (M-Acc)
//! and full hop chains (H-Acc).

use std::fmt;
use std::fs;
use std::num::NonZeroUsize;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RetrievalConfig;
use crate::edit::{EditInput, ImpactSurface};
use crate::error::{Error, OracleError, Result};
use crate::graph::{BaseGraph, BaseGraphBuilder, KnowledgeStore, LayeredView, RawTriple, Triple};
use crate::oracle::{DemoRecord, LexiconDetector, Oracles};
use crate::reasoner::{run_chain_with, AnswerRecord, Decomposer, HopMode, PLACEHOLDER};
use crate::symbol::{fold, Interner};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewrite {
    pub subject: String,
    pub relation: String,
    pub target_true: Option<String>,
    pub target_new: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub rewrites: Vec<Rewrite>,
    pub questions: Vec<String>,
    pub new_answer: String,
    pub new_answer_aliases: Vec<String>,
    pub gold_new_chain: Vec<RawTriple>,
    /// Unedited facts: the original chain plus the unedited part of the new chain.
    pub facts: Vec<RawTriple>,
    /// Per-hop sub-questions with [`PLACEHOLDER`] for carried entities, when
    /// the record annotates single-hop questions.
    pub hop_steps: Option<Vec<String>>,
}

fn field_err(index: usize, field: impl Into<String>) -> Error {
    Error::Schema {
        index,
        field: field.into(),
    }
}

fn str_or_label(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Object(m) => m.get("str").and_then(Value::as_str).map(str::to_string),
        _ => None,
    }
}

fn parse_triples(v: &Value, index: usize, field: &str) -> Result<Vec<RawTriple>> {
    let arr = v.as_array().ok_or_else(|| field_err(index, field))?;
    arr.iter()
        .enumerate()
        .map(|(j, t)| {
            let bad = || field_err(index, format!("{field}[{j}]"));
            match t {
                Value::Array(parts) if parts.len() == 3 => {
                    let p = |k: usize| parts[k].as_str().map(str::to_string).ok_or_else(bad);
                    Ok(RawTriple::new(p(0)?, p(1)?, p(2)?))
                }
                Value::Object(_) => serde_json::from_value(t.clone()).map_err(|_| bad()),
                _ => Err(bad()),
            }
        })
        .collect()
}

fn lookup<'a>(rec: &'a Value, paths: &[&str]) -> Option<&'a Value> {
    paths.iter().find_map(|p| rec.pointer(p))
}

fn parse_record(rec: &Value, index: usize) -> Result<CaseRecord> {
    if !rec.is_object() {
        return Err(field_err(index, "<record>"));
    }
    let case_id = match rec.get("case_id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => (index + 1).to_string(),
    };

    let questions: Vec<String> = rec
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| field_err(index, "questions"))?
        .iter()
        .map(|q| q.as_str().map(str::to_string))
        .collect::<Option<_>>()
        .ok_or_else(|| field_err(index, "questions"))?;
    if questions.is_empty() {
        return Err(field_err(index, "questions"));
    }

    let new_answer = rec
        .get("new_answer")
        .and_then(Value::as_str)
        .ok_or_else(|| field_err(index, "new_answer"))?
        .to_string();
    let new_answer_aliases = rec
        .get("new_answer_alias")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
        .unwrap_or_default();

    let chain_val = lookup(rec, &["/orig/new_triples_labeled", "/new_triples_labeled", "/new_triples"])
        .ok_or_else(|| field_err(index, "new_triples"))?;
    let gold_new_chain = parse_triples(chain_val, index, "new_triples")?;
    if gold_new_chain.is_empty() {
        return Err(field_err(index, "new_triples"));
    }
    let orig_chain = match lookup(rec, &["/orig/triples_labeled", "/triples_labeled", "/triples"]) {
        Some(v) => parse_triples(v, index, "triples")?,
        None => Vec::new(),
    };

    let rw_val = rec
        .get("requested_rewrite")
        .and_then(Value::as_array)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| field_err(index, "requested_rewrite"))?;
    let mut rewrites = Vec::with_capacity(rw_val.len());
    for (j, rw) in rw_val.iter().enumerate() {
        let f = |name: &str| format!("requested_rewrite[{j}].{name}");
        let subject = rw
            .get("subject")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err(index, f("subject")))?
            .to_string();
        let target_new = rw
            .get("target_new")
            .and_then(str_or_label)
            .ok_or_else(|| field_err(index, f("target_new")))?;
        let target_true = rw.get("target_true").and_then(str_or_label);
        let relation = match rw.get("relation").and_then(Value::as_str) {
            Some(r) => r.to_string(),
            // labeled relation from the gold chain triple this rewrite produces
            None => gold_new_chain
                .iter()
                .find(|t| fold(&t.s) == fold(&subject) && fold(&t.o) == fold(&target_new))
                .map(|t| t.r.clone())
                .or_else(|| rw.get("relation_id").and_then(Value::as_str).map(str::to_string))
                .ok_or_else(|| field_err(index, f("relation")))?,
        };
        rewrites.push(Rewrite {
            subject,
            relation,
            target_true,
            target_new,
        });
    }

    let is_edit = |t: &RawTriple| {
        rewrites
            .iter()
            .any(|rw| fold(&rw.subject) == fold(&t.s) && fold(&rw.relation) == fold(&t.r))
    };
    let mut facts = orig_chain;
    facts.extend(gold_new_chain.iter().filter(|t| !is_edit(t)).cloned());

    let hop_steps = hop_steps(rec, &gold_new_chain);

    Ok(CaseRecord {
        case_id,
        rewrites,
        questions,
        new_answer,
        new_answer_aliases,
        gold_new_chain,
        facts,
        hop_steps,
    })
}

/// Per-hop questions from `new_single_hops`, with each later hop's subject
/// replaced by the placeholder.
fn hop_steps(rec: &Value, chain: &[RawTriple]) -> Option<Vec<String>> {
    let hops = rec.get("new_single_hops")?.as_array()?;
    if hops.len() != chain.len() {
        return None;
    }
    hops.iter()
        .zip(chain)
        .enumerate()
        .map(|(i, (h, t))| {
            let q = h.get("question")?.as_str()?;
            if i == 0 {
                Some(q.to_string())
            } else if q.contains(t.s.as_str()) {
                Some(q.replacen(t.s.as_str(), PLACEHOLDER, 1))
            } else {
                None
            }
        })
        .collect()
}

/// Parses a JSON array of MQuAKE records. Unknown fields are ignored.
pub fn ingest(json: &str) -> Result<Vec<CaseRecord>> {
    let value: Value = serde_json::from_str(json)?;
    let arr = value.as_array().ok_or_else(|| field_err(0, "<top-level array>"))?;
    arr.iter().enumerate().map(|(i, r)| parse_record(r, i)).collect()
}

pub fn ingest_file(path: &Path) -> Result<Vec<CaseRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest(&text)
}

/// Number of cases whose edits share one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSetting {
    Size(NonZeroUsize),
    All,
}

impl BatchSetting {
    pub fn size(k: usize) -> Self {
        BatchSetting::Size(NonZeroUsize::new(k).expect("batch size must be positive"))
    }

    /// Contiguous groups of the given size; the last may be smaller.
    pub fn partition(&self, n: usize) -> Vec<Range<usize>> {
        let k = match self {
            BatchSetting::Size(k) => k.get(),
            BatchSetting::All => n.max(1),
        };
        (0..n).step_by(k).map(|start| start..(start + k).min(n)).collect()
    }
}

impl fmt::Display for BatchSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSetting::Size(k) => write!(f, "{k}"),
            BatchSetting::All => f.write_str("all"),
        }
    }
}

impl FromStr for BatchSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(BatchSetting::All);
        }
        s.parse::<usize>()
            .ok()
            .and_then(NonZeroUsize::new)
            .map(BatchSetting::Size)
            .ok_or_else(|| format!("batch must be a positive integer or `all`, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// One graph per batch holding facts and every batch edit; no base/overlay split.
    pub disable_construction: bool,
    /// Hops are answered by the language model directly.
    pub disable_retrieval: bool,
    /// All batch edits go into one shared overlay.
    pub disable_update: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub setting: BatchSetting,
    pub flags: AblationFlags,
    pub retrieval: RetrievalConfig,
    /// Worker threads per batch; 0 uses every available core.
    pub jobs: usize,
    /// Shuffle case order before batching.
    pub shuffle_seed: Option<u64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            setting: BatchSetting::size(1),
            flags: AblationFlags::default(),
            retrieval: RetrievalConfig::default(),
            jobs: 0,
            shuffle_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseScore {
    pub m_hit: bool,
    pub h_hit: bool,
    /// Run whose hops were scored for H-Acc.
    pub scored_run: Option<usize>,
}

fn answer_matches(answer: Option<&str>, rec: &CaseRecord) -> bool {
    let Some(a) = answer else { return false };
    let a = fold(a);
    fold(&rec.new_answer) == a || rec.new_answer_aliases.iter().any(|al| fold(al) == a)
}

/// M-Acc hit if any paraphrase run matches the new answer or an alias.
/// H-Acc is scored on the first matching run (or the first run) and needs
/// every hop to match the gold chain, in order and count.
pub fn score_case(runs: &[AnswerRecord], rec: &CaseRecord) -> CaseScore {
    let hit = runs
        .iter()
        .position(|r| answer_matches(r.final_answer.as_deref(), rec));
    let scored_run = hit.or((!runs.is_empty()).then_some(0));
    let h_hit = scored_run.is_some_and(|i| {
        let hops = &runs[i].hops;
        hops.len() == rec.gold_new_chain.len()
            && hops
                .iter()
                .zip(&rec.gold_new_chain)
                .all(|(h, g)| h.answer.as_deref().is_some_and(|a| fold(a) == fold(&g.o)))
    });
    CaseScore {
        m_hit: hit.is_some(),
        h_hit,
        scored_run,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub question: String,
    #[serde(flatten)]
    pub answer: AnswerRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseTrace {
    pub case_id: String,
    pub batch: usize,
    pub m_hit: bool,
    pub h_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub runs: Vec<RunTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub m_acc: f64,
    pub h_acc: f64,
    pub setting: String,
    pub flags: AblationFlags,
    pub n_cases: usize,
    pub m_hits: usize,
    pub h_hits: usize,
    pub batches: usize,
    /// False when some case aborted on an oracle transport failure.
    pub complete: bool,
    pub failed_cases: usize,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: MetricsReport,
    pub traces: Vec<CaseTrace>,
}

impl EvalRun {
    pub fn traces_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.traces {
            out.push_str(&serde_json::to_string(t).expect("trace serializes"));
            out.push('\n');
        }
        out
    }
}

/// Base graph from every case's unedited facts plus any extra facts.
pub fn build_eval_base(
    cases: &[CaseRecord],
    extra_facts: &[RawTriple],
    symbols: Arc<Interner>,
) -> Result<BaseGraph> {
    let mut builder = BaseGraphBuilder::new(symbols);
    for t in extra_facts.iter().chain(cases.iter().flat_map(|c| c.facts.iter())) {
        builder.insert(t)?;
    }
    Ok(builder.seal())
}

/// Mock detector lexicon: every base atom plus rewrite targets and answers.
pub fn default_detector(cases: &[CaseRecord], base: &BaseGraph) -> LexiconDetector {
    let mut det = LexiconDetector::from_base(base);
    for c in cases {
        for rw in &c.rewrites {
            det.add_entity(&rw.subject);
            det.add_entity(&rw.target_new);
            det.add_relation(&rw.relation, &[]);
        }
        for t in &c.gold_new_chain {
            det.add_entity(&t.s);
            det.add_entity(&t.o);
            det.add_relation(&t.r, &[]);
        }
    }
    det
}

/// Decompositions derived from each case's annotated single-hop questions,
/// registered under every paraphrase.
pub fn case_decompositions(cases: &[CaseRecord]) -> Vec<DemoRecord> {
    cases
        .iter()
        .filter_map(|c| c.hop_steps.as_ref().map(|steps| (c, steps)))
        .flat_map(|(c, steps)| {
            c.questions.iter().map(move |q| DemoRecord {
                question: q.clone(),
                steps: steps.clone(),
            })
        })
        .collect()
}

const SHARED_CASE: &str = "__shared__";

fn edit_input(case_id: &str, rw: &Rewrite) -> EditInput {
    EditInput::Structured {
        case_id: case_id.to_string(),
        s: rw.subject.clone(),
        r: rw.relation.clone(),
        o_true: rw.target_true.clone(),
        o_new: rw.target_new.clone(),
    }
}

struct CaseOutcome {
    runs: Vec<RunTrace>,
    error: Option<String>,
}

fn answer_case(
    rec: &CaseRecord,
    view: &LayeredView<'_>,
    surface: &ImpactSurface,
    oracles: &Oracles,
    decomposer: &Decomposer,
    opts: &EvalOptions,
) -> CaseOutcome {
    let mode = if opts.flags.disable_retrieval {
        HopMode::Direct
    } else {
        HopMode::Retrieval
    };
    let symbols = view.symbols();
    let mut runs = Vec::new();
    for q in &rec.questions {
        let attempt = decomposer
            .decompose(q, oracles)
            .and_then(|d| run_chain_with(&d, view, surface, oracles, &opts.retrieval, mode));
        let answer = match attempt {
            Ok(a) => a.to_record(symbols),
            Err(Error::Oracle(e @ OracleError::Unavailable(_))) => {
                return CaseOutcome {
                    runs,
                    error: Some(e.to_string()),
                }
            }
            // an unparseable decomposition is an unanswered run
            Err(_) => AnswerRecord {
                final_answer: None,
                hops: Vec::new(),
            },
        };
        let hit = answer_matches(answer.final_answer.as_deref(), rec);
        runs.push(RunTrace {
            question: q.clone(),
            answer,
        });
        if hit {
            break;
        }
    }
    CaseOutcome { runs, error: None }
}

/// Evaluates `cases` under one batch setting and ablation configuration.
pub fn run_eval(
    cases: &[CaseRecord],
    base: Arc<BaseGraph>,
    oracles: &Oracles,
    decomposer: &Decomposer,
    opts: &EvalOptions,
) -> Result<EvalRun> {
    opts.retrieval.validate()?;
    let mut order: Vec<usize> = (0..cases.len()).collect();
    if let Some(seed) = opts.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if opts.jobs > 0 {
        builder = builder.num_threads(opts.jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let batches = opts.setting.partition(order.len());
    let mut traces: Vec<CaseTrace> = Vec::with_capacity(cases.len());
    for (batch_no, range) in batches.iter().enumerate() {
        let batch: Vec<&CaseRecord> = order[range.clone()].iter().map(|&i| &cases[i]).collect();
        let store = build_batch_store(&batch, &base, opts.flags)?;
        let results: Vec<(String, CaseOutcome)> = pool.install(|| {
            batch
                .par_iter()
                .map(|rec| -> Result<(String, CaseOutcome)> {
                    let case_key = if opts.flags.disable_update && !opts.flags.disable_construction {
                        SHARED_CASE
                    } else {
                        rec.case_id.as_str()
                    };
                    let view = store.view(case_key)?;
                    let surface = store.impact_surface(case_key)?;
                    Ok((
                        rec.case_id.clone(),
                        answer_case(rec, &view, &surface, oracles, decomposer, opts),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (rec, (case_id, outcome)) in batch.iter().zip(results) {
            let answers: Vec<AnswerRecord> = outcome.runs.iter().map(|r| r.answer.clone()).collect();
            let score = score_case(&answers, rec);
            let failed = outcome.error.is_some();
            traces.push(CaseTrace {
                case_id,
                batch: batch_no,
                m_hit: score.m_hit && !failed,
                h_hit: score.h_hit && !failed,
                error: outcome.error,
                runs: outcome.runs,
            });
        }
    }

    let n = traces.len();
    let m_hits = traces.iter().filter(|t| t.m_hit).count();
    let h_hits = traces.iter().filter(|t| t.h_hit).count();
    let failed_cases = traces.iter().filter(|t| t.error.is_some()).count();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(EvalRun {
        report: MetricsReport {
            m_acc: frac(m_hits),
            h_acc: frac(h_hits),
            setting: opts.setting.to_string(),
            flags: opts.flags,
            n_cases: n,
            m_hits,
            h_hits,
            batches: batches.len(),
            complete: failed_cases == 0,
            failed_cases,
        },
        traces,
    })
}

fn build_batch_store(batch: &[&CaseRecord], base: &Arc<BaseGraph>, flags: AblationFlags) -> Result<KnowledgeStore> {
    let floor = RetrievalConfig::default().tau;
    if flags.disable_construction {
        // single graph: batch edits first (earliest case wins a shared key), then facts
        let symbols = base.symbols().clone();
        let mut merged = BaseGraphBuilder::new(symbols.clone());
        for rec in batch {
            for rw in &rec.rewrites {
                merged.insert(&RawTriple::new(&*rw.subject, &*rw.relation, &*rw.target_new))?;
            }
        }
        for t in base.triples() {
            merged.insert_triple(Triple { s: t.s, r: t.r, o: t.o });
        }
        let mut store = KnowledgeStore::new(Arc::new(merged.seal()));
        for rec in batch {
            store.create_overlay(&rec.case_id)?;
        }
        return Ok(store);
    }
    let mut store = KnowledgeStore::new(base.clone());
    if flags.disable_update {
        store.create_overlay(SHARED_CASE)?;
        for rec in batch {
            for rw in &rec.rewrites {
                store.submit(&edit_input(SHARED_CASE, rw), None, floor)?;
            }
        }
    } else {
        for rec in batch {
            store.create_overlay(&rec.case_id)?;
            for rw in &rec.rewrites {
                store.submit(&edit_input(&rec.case_id, rw), None, floor)?;
            }
        }
    }
    Ok(store)
}
