//! Multi-hop question decomposition and hop-chain execution.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RetrievalConfig;
use crate::edit::ImpactSurface;
use crate::error::{Error, OracleError, Result};
use crate::graph::{Layer, LayeredView, RawTriple};
use crate::oracle::{cosine, DemoRecord, Oracles};
use crate::retrieval::{answer_directly, answer_subquestion, raw_triple, RetrievalOutcome, Stage, SubQuestion};
use crate::symbol::{fold, Interner, Symbol};

/// Token replaced by the previous hop's answer.
pub const PLACEHOLDER: &str = "{prev}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub question: String,
    pub steps: Vec<String>,
}

impl Decomposition {
    pub fn new(question: impl Into<String>, steps: Vec<String>) -> Result<Self> {
        let d = Self {
            question: question.into(),
            steps,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn identity(question: &str) -> Self {
        Self {
            question: question.to_string(),
            steps: vec![question.to_string()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.steps.first() {
            None => Err(Error::DecompositionParse("no steps".into())),
            Some(first) if first.contains(PLACEHOLDER) => Err(Error::DecompositionParse(
                "first step references a previous answer".into(),
            )),
            Some(_) if self.steps.iter().any(|s| s.trim().is_empty()) => {
                Err(Error::DecompositionParse("empty step".into()))
            }
            Some(_) => Ok(()),
        }
    }
}

/// Stable 64-bit key of a question's folded text.
pub fn question_key(question: &str) -> u64 {
    let digest = Sha256::digest(fold(question).as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Parses `1. ...` / `2) ...` lines. Numbering must start at 1 and increase by one.
pub fn parse_numbered_steps(reply: &str) -> Result<Vec<String>> {
    let mut steps = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        let digits: String = line.chars().take_while(char::is_ascii_digit).collect();
        if digits.is_empty() {
            continue;
        }
        let rest = &line[digits.len()..];
        let Some(body) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) else {
            continue;
        };
        let n: usize = digits
            .parse()
            .map_err(|_| Error::DecompositionParse(line.to_string()))?;
        if n != steps.len() + 1 {
            if n == 1 && !steps.is_empty() {
                // a second numbered list starts; the first one is the answer
                break;
            }
            return Err(Error::DecompositionParse(format!(
                "expected step {}, found {n}",
                steps.len() + 1
            )));
        }
        let body = body.trim();
        if body.is_empty() {
            return Err(Error::DecompositionParse(format!("step {n} is empty")));
        }
        steps.push(body.to_string());
    }
    if steps.is_empty() {
        return Err(Error::DecompositionParse(format!(
            "no numbered steps in reply: {:?}",
            reply.chars().take(80).collect::<String>()
        )));
    }
    Ok(steps)
}

#[derive(Debug, Clone)]
pub enum Decomposer {
    /// Every question is a single hop.
    Identity,
    /// Fixed decompositions keyed by question; unknown questions are single hops.
    Scripted(HashMap<u64, Vec<String>>),
    /// Few-shot prompting with the `k` demos most similar to the question.
    FewShot { demos: Vec<DemoRecord>, k: usize },
}

impl Decomposer {
    pub fn scripted(records: impl IntoIterator<Item = DemoRecord>) -> Self {
        let mut map = HashMap::new();
        for r in records {
            map.entry(question_key(&r.question)).or_insert(r.steps);
        }
        Decomposer::Scripted(map)
    }

    /// Adds scripts to a scripted decomposer; other variants are left as is.
    pub fn extend(&mut self, records: impl IntoIterator<Item = DemoRecord>) {
        if let Decomposer::Scripted(map) = self {
            for r in records {
                map.entry(question_key(&r.question)).or_insert(r.steps);
            }
        }
    }

    pub fn decompose(&self, question: &str, oracles: &Oracles) -> Result<Decomposition> {
        match self {
            Decomposer::Identity => Ok(Decomposition::identity(question)),
            Decomposer::Scripted(map) => match map.get(&question_key(question)) {
                Some(steps) => Decomposition::new(question, steps.clone()),
                None => Ok(Decomposition::identity(question)),
            },
            Decomposer::FewShot { demos, k } => {
                let chosen = select_demos(question, demos, *k, oracles)?;
                let picked: Vec<&DemoRecord> = chosen.iter().map(|&i| &demos[i]).collect();
                let reply = oracles
                    .complete(&few_shot_prompt(question, &picked))
                    .map_err(|e| match e {
                        OracleError::ScriptMiss(m) => Error::DecompositionParse(m),
                        other => other.into(),
                    })?;
                Decomposition::new(question, parse_numbered_steps(&reply)?)
            }
        }
    }
}

/// Indices of the `k` demos with highest cosine similarity to `question`;
/// ties keep pool order.
pub fn select_demos(question: &str, demos: &[DemoRecord], k: usize, oracles: &Oracles) -> Result<Vec<usize>> {
    let q = oracles.embed(question)?;
    let mut scored = Vec::with_capacity(demos.len());
    for (i, d) in demos.iter().enumerate() {
        scored.push((i, cosine(&q, &oracles.embed(&d.question)?)));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored.into_iter().take(k).map(|(i, _)| i).collect())
}

pub fn few_shot_prompt(question: &str, demos: &[&DemoRecord]) -> String {
    let mut out = String::from(
        "Break the question into numbered sub-questions. Refer to the answer of the previous sub-question as {prev}.\n\n",
    );
    for d in demos {
        out.push_str(&format!("Question: {}\n", d.question));
        for (i, s) in d.steps.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, s));
        }
        out.push('\n');
    }
    out.push_str(&format!("Question: {question}\n"));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopTrace {
    pub index: usize,
    pub sub_question: String,
    pub outcome: RetrievalOutcome,
    pub carried_entity: Option<Symbol>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseAnswer {
    pub final_answer: Option<Symbol>,
    pub hops: Vec<HopTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopRecord {
    pub index: usize,
    pub sub_question: String,
    pub layer: Layer,
    pub stage: Stage,
    pub triple: Option<RawTriple>,
    pub answer: Option<String>,
}

/// Text form of a [`CaseAnswer`] for trace files and CLI output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub final_answer: Option<String>,
    pub hops: Vec<HopRecord>,
}

impl CaseAnswer {
    pub fn to_record(&self, symbols: &Interner) -> AnswerRecord {
        AnswerRecord {
            final_answer: self.final_answer.map(|s| symbols.text(s).to_string()),
            hops: self
                .hops
                .iter()
                .map(|h| HopRecord {
                    index: h.index,
                    sub_question: h.sub_question.clone(),
                    layer: h.outcome.layer,
                    stage: h.outcome.stage,
                    triple: h.outcome.resolved_triple.map(|t| raw_triple(symbols, &t)),
                    answer: h.carried_entity.map(|s| symbols.text(s).to_string()),
                })
                .collect(),
        }
    }
}

/// How each hop is answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HopMode {
    #[default]
    Retrieval,
    /// Language model only; routing and progressive stages are skipped.
    Direct,
}

/// Runs the hop chain, feeding each hop's answer into the next step. Stops
/// at the first unanswered hop.
pub fn run_chain(
    decomp: &Decomposition,
    view: &LayeredView<'_>,
    surface: &ImpactSurface,
    oracles: &Oracles,
    cfg: &RetrievalConfig,
) -> Result<CaseAnswer> {
    run_chain_with(decomp, view, surface, oracles, cfg, HopMode::Retrieval)
}

pub fn run_chain_with(
    decomp: &Decomposition,
    view: &LayeredView<'_>,
    surface: &ImpactSurface,
    oracles: &Oracles,
    cfg: &RetrievalConfig,
    mode: HopMode,
) -> Result<CaseAnswer> {
    decomp.validate()?;
    let symbols = view.symbols();
    let mut hops = Vec::with_capacity(decomp.steps.len());
    let mut carried: Option<Symbol> = None;
    for (index, step) in decomp.steps.iter().enumerate() {
        let text = match carried {
            Some(prev) => step.replace(PLACEHOLDER, &symbols.text(prev)),
            None => step.clone(),
        };
        let q = SubQuestion {
            text: text.clone(),
            subject_hint: carried,
            position: index,
        };
        let outcome = match mode {
            HopMode::Retrieval => answer_subquestion(&q, view, surface, oracles, cfg)?,
            HopMode::Direct => answer_directly(&q, symbols, oracles)?,
        };
        let answer = outcome.answer;
        hops.push(HopTrace {
            index,
            sub_question: text,
            outcome,
            carried_entity: answer,
        });
        match answer {
            Some(a) => carried = Some(a),
            None => {
                return Ok(CaseAnswer {
                    final_answer: None,
                    hops,
                })
            }
        }
    }
    Ok(CaseAnswer {
        final_answer: carried,
        hops,
    })
}
