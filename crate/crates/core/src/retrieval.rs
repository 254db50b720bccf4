//! Edit-aware answering of a single sub-question.
//!
//! A sub-question is first routed: to the case overlay when its subject or
//! relation was touched by one of the case's edits, to the base otherwise.
//! Entity candidates are then scored, edited entities the question never
//! mentions are down-weighted, and three stages run in order:
//!
//! * high confidence: candidates at or above `tau` that also clear the
//!   `mean - lambda * sd` outlier cutoff are resolved in score order;
//! * low confidence: nothing reached `tau`, so the language model picks an
//!   entity from the unsuppressed pool and that entity is resolved;
//! * failure: nothing resolved; the language model answers, with the case's
//!   edited triples injected into the prompt when the relation is in scope.

use serde::{Deserialize, Serialize};

use crate::config::RetrievalConfig;
use crate::edit::ImpactSurface;
use crate::error::{OracleError, Result};
use crate::graph::{Layer, LayeredView, RawTriple, Triple};
use crate::oracle::{OracleResult, Oracles};
use crate::symbol::{fold, Interner, Symbol};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubQuestion {
    pub text: String,
    /// Entity carried over from the previous hop, if any.
    pub subject_hint: Option<Symbol>,
    pub position: usize,
}

impl SubQuestion {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            subject_hint: None,
            position: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub entity: Symbol,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    HighConfidence,
    LowConfidence,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub answer: Option<Symbol>,
    pub layer: Layer,
    pub stage: Stage,
    pub resolved_triple: Option<Triple>,
    /// Scored pool after suppression, in detector order.
    pub candidates_considered: Vec<Candidate>,
}

/// Route a sub-question given the detector's subject and relation guesses.
/// A missing guess never counts as membership.
pub fn route(subject: Option<Symbol>, relation: Option<Symbol>, surface: &ImpactSurface) -> Layer {
    let subject_hit = subject.is_some_and(|s| surface.has_subject(s));
    let relation_hit = relation.is_some_and(|r| surface.has_relation(r));
    if subject_hit || relation_hit {
        Layer::Overlay
    } else {
        Layer::Base
    }
}

/// Population statistics of the scores that reached `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffStats {
    pub mean: f64,
    pub std_dev: f64,
    pub cutoff: f64,
}

pub fn cutoff_stats(scores: &[f64], cfg: &RetrievalConfig) -> Option<CutoffStats> {
    let kept: Vec<f64> = scores.iter().copied().filter(|&g| g >= cfg.tau).collect();
    if kept.is_empty() {
        return None;
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = kept.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
    let std_dev = var.sqrt();
    Some(CutoffStats {
        mean,
        std_dev,
        cutoff: mean - cfg.lambda * std_dev,
    })
}

/// Slack for the `>= cutoff` comparison. A score sitting exactly one standard
/// deviation below the mean (two-element pools always do) must not be lost to
/// rounding in the mean and deviation.
pub const CUTOFF_SLACK: f64 = 1e-12;

/// Threshold at `tau`, drop low outliers, sort by score descending with ties
/// kept in input order.
pub fn filter_high_confidence(cands: &[Candidate], cfg: &RetrievalConfig) -> Vec<Candidate> {
    let scores: Vec<f64> = cands.iter().map(|c| c.score).collect();
    let Some(stats) = cutoff_stats(&scores, cfg) else {
        return Vec::new();
    };
    let mut kept: Vec<Candidate> = cands
        .iter()
        .copied()
        .filter(|c| c.score >= cfg.tau && c.score >= stats.cutoff - CUTOFF_SLACK)
        .collect();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score));
    kept
}

/// True when the normalized entity text occurs in the question, ignoring case.
pub fn mentioned(entity_text: &str, question: &str) -> bool {
    fold(question).contains(&fold(entity_text))
}

/// Multiply by `alpha` the score of every edited subject the question does
/// not mention. Everything else passes through unchanged.
pub fn suppress_irrelevant(
    cands: &[Candidate],
    q: &SubQuestion,
    surface: &ImpactSurface,
    symbols: &Interner,
    cfg: &RetrievalConfig,
) -> Vec<Candidate> {
    cands
        .iter()
        .map(|c| {
            if surface.has_subject(c.entity) && !mentioned(&symbols.text(c.entity), &q.text) {
                Candidate {
                    entity: c.entity,
                    score: c.score * cfg.suppression_alpha,
                }
            } else {
                *c
            }
        })
        .collect()
}

/// Triple rendered as `(s, r, o)` for prompts and logs.
pub fn triple_text(symbols: &Interner, t: &Triple) -> String {
    format!(
        "({}, {}, {})",
        symbols.text(t.s),
        symbols.text(t.r),
        symbols.text(t.o)
    )
}

pub fn raw_triple(symbols: &Interner, t: &Triple) -> RawTriple {
    RawTriple::new(&*symbols.text(t.s), &*symbols.text(t.r), &*symbols.text(t.o))
}

pub fn low_confidence_prompt(question: &str, pool: &[String]) -> String {
    format!(
        "Question: {question}\nCandidate entities: {}\nWhich candidate entity is this question about? Reply with the entity name only.\nEntity:",
        pool.join("; ")
    )
}

pub fn edit_injected_prompt(question: &str, edited: &[String]) -> String {
    format!(
        "The following edited facts override anything you know:\n{}\nAnswer the question using the edited facts above. Reply with the answer entity only.\nQuestion: {question}\nAnswer:",
        edited.join("\n")
    )
}

pub fn plain_prompt(question: &str) -> String {
    format!("Answer the question with the answer entity only.\nQuestion: {question}\nAnswer:")
}

/// A scripted miss degrades to "no answer"; transport failures propagate.
fn tolerate_miss(res: OracleResult<String>) -> Result<Option<String>> {
    match res {
        Ok(text) => {
            let text = text.trim().trim_end_matches('.').trim().to_string();
            Ok((!text.is_empty()).then_some(text))
        }
        Err(OracleError::ScriptMiss(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Answers one sub-question against one case's view.
pub fn answer_subquestion(
    q: &SubQuestion,
    view: &LayeredView<'_>,
    surface: &ImpactSurface,
    oracles: &Oracles,
    cfg: &RetrievalConfig,
) -> Result<RetrievalOutcome> {
    let symbols = view.symbols();

    let mut pool: Vec<Candidate> = Vec::new();
    for st in oracles.detect_entities(&q.text)? {
        if let Ok(entity) = symbols.resolve_or_intern(&st.text) {
            pool.push(Candidate {
                entity,
                score: st.score.clamp(0.0, 1.0),
            });
        }
    }
    let relation = oracles
        .detect_relation(&q.text)?
        .and_then(|r| symbols.lookup(&r.text));

    // subject guess: the carried entity, else the first top-scoring candidate
    let subject = q.subject_hint.or_else(|| {
        pool.iter()
            .fold(None::<Candidate>, |best, c| match best {
                Some(b) if b.score >= c.score => Some(b),
                _ => Some(*c),
            })
            .map(|c| c.entity)
    });
    let layer = route(subject, relation, surface);

    let suppressed = suppress_irrelevant(&pool, q, surface, symbols, cfg);
    let survivors = filter_high_confidence(&suppressed, cfg);

    let resolve = |entity: Symbol| -> Option<Triple> {
        let r = relation?;
        view.resolve_in(layer, entity, r).map(|res| Triple {
            s: entity,
            r,
            o: res.object,
        })
    };
    let hit = |stage: Stage, t: Triple| RetrievalOutcome {
        answer: Some(t.o),
        layer,
        stage,
        resolved_triple: Some(t),
        candidates_considered: suppressed.clone(),
    };

    if !survivors.is_empty() {
        if let Some(t) = survivors.iter().find_map(|c| resolve(c.entity)) {
            return Ok(hit(Stage::HighConfidence, t));
        }
    } else if !pool.is_empty() {
        let names: Vec<String> = pool.iter().map(|c| symbols.text(c.entity).to_string()).collect();
        let prompt = low_confidence_prompt(&q.text, &names);
        if let Some(choice) = tolerate_miss(oracles.complete(&prompt))? {
            let picked = pool
                .iter()
                .find(|c| fold(&symbols.text(c.entity)) == fold(&choice));
            if let Some(t) = picked.and_then(|c| resolve(c.entity)) {
                return Ok(hit(Stage::LowConfidence, t));
            }
        }
    }

    // failure stage
    let in_scope = relation.is_some_and(|r| surface.has_relation(r));
    let answer_text = if in_scope {
        let r = relation.expect("in scope implies relation");
        let edited: Vec<Triple> = view
            .overlay()
            .delta()
            .filter(|((_, er), _)| *er == r)
            .map(|((s, r), o)| Triple { s, r, o })
            .collect();
        let about_subject: Vec<Triple> = edited
            .iter()
            .copied()
            .filter(|t| Some(t.s) == subject)
            .collect();
        let chosen = if about_subject.is_empty() { edited } else { about_subject };
        let lines: Vec<String> = chosen.iter().map(|t| triple_text(symbols, t)).collect();
        let prompt = edit_injected_prompt(&q.text, &lines);
        tolerate_miss(oracles.complete_with_context(&prompt, Some(&lines.join("\n"))))?
    } else {
        tolerate_miss(oracles.complete(&plain_prompt(&q.text)))?
    };
    let answer = answer_text.and_then(|t| symbols.resolve_or_intern(&t).ok());
    Ok(RetrievalOutcome {
        answer,
        layer,
        stage: Stage::Failure,
        resolved_triple: None,
        candidates_considered: suppressed,
    })
}

/// Retrieval disabled: the language model answers the sub-question directly.
pub fn answer_directly(q: &SubQuestion, symbols: &Interner, oracles: &Oracles) -> Result<RetrievalOutcome> {
    let answer = tolerate_miss(oracles.complete(&plain_prompt(&q.text)))?
        .and_then(|t| symbols.resolve_or_intern(&t).ok());
    Ok(RetrievalOutcome {
        answer,
        layer: Layer::Base,
        stage: Stage::Failure,
        resolved_triple: None,
        candidates_considered: Vec::new(),
    })
}
