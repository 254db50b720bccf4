//! Edit extraction, case-scoped application and conflict arbitration.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeStore, Overlay};
use crate::oracle::Oracles;
use crate::symbol::{Interner, Symbol};

/// A case-scoped rewrite `(s, r, o_true -> o_new)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub case_id: String,
    pub s: Symbol,
    pub r: Symbol,
    /// Informational only; arbitration never compares it to the base.
    pub o_true: Option<Symbol>,
    pub o_new: Symbol,
    /// Arrival order within the case, starting at 1.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditStatement {
    pub case_id: String,
    pub raw_text: String,
}

/// One line of an edits file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EditInput {
    Structured {
        case_id: String,
        s: String,
        r: String,
        #[serde(default)]
        o_true: Option<String>,
        #[serde(alias = "target_new")]
        o_new: String,
    },
    Text {
        case_id: String,
        text: String,
    },
}

impl EditInput {
    pub fn structured(
        case_id: impl Into<String>,
        s: impl Into<String>,
        r: impl Into<String>,
        o_new: impl Into<String>,
    ) -> Self {
        EditInput::Structured {
            case_id: case_id.into(),
            s: s.into(),
            r: r.into(),
            o_true: None,
            o_new: o_new.into(),
        }
    }

    pub fn case_id(&self) -> &str {
        match self {
            EditInput::Structured { case_id, .. } | EditInput::Text { case_id, .. } => case_id,
        }
    }
}

/// Per-case sets of edited subjects and edited relations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpactSurface {
    pub case_id: String,
    pub subjects: BTreeSet<Symbol>,
    pub relations: BTreeSet<Symbol>,
}

impl ImpactSurface {
    pub fn empty(case_id: impl Into<String>) -> Self {
        Self {
            case_id: case_id.into(),
            subjects: BTreeSet::new(),
            relations: BTreeSet::new(),
        }
    }

    /// Recomputes the surface from an edit log.
    pub fn from_edits(case_id: impl Into<String>, log: &[Edit]) -> Self {
        Self {
            case_id: case_id.into(),
            subjects: log.iter().map(|e| e.s).collect(),
            relations: log.iter().map(|e| e.r).collect(),
        }
    }

    pub fn has_subject(&self, s: Symbol) -> bool {
        self.subjects.contains(&s)
    }

    pub fn has_relation(&self, r: Symbol) -> bool {
        self.relations.contains(&r)
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty() && self.relations.is_empty()
    }
}

/// What an applied edit added to its case's surface.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SurfaceDelta {
    pub added_subject: Option<Symbol>,
    pub added_relation: Option<Symbol>,
    /// The object this edit replaced in the overlay, if the key was already edited.
    pub superseded: Option<Symbol>,
}

/// Turns an edit record into an [`Edit`]. Structured records bypass the
/// detector; free-text records take the detector's best extraction, which
/// must score at least `floor`.
pub fn extract_edit(
    input: &EditInput,
    seq: u64,
    symbols: &Interner,
    detector: Option<&Oracles>,
    floor: f64,
) -> Result<Edit> {
    match input {
        EditInput::Structured {
            case_id,
            s,
            r,
            o_true,
            o_new,
        } => Ok(Edit {
            case_id: case_id.clone(),
            s: symbols.resolve_or_intern(s)?,
            r: symbols.resolve_or_intern(r)?,
            o_true: o_true
                .as_deref()
                .filter(|t| !t.trim().is_empty())
                .map(|t| symbols.resolve_or_intern(t))
                .transpose()?,
            o_new: symbols.resolve_or_intern(o_new)?,
            seq,
        }),
        EditInput::Text { case_id, text } => {
            let stmt = EditStatement {
                case_id: case_id.clone(),
                raw_text: text.clone(),
            };
            let oracles = detector.ok_or_else(|| Error::ExtractionFailed(stmt.raw_text.clone()))?;
            extract_statement(&stmt, seq, symbols, oracles, floor)
        }
    }
}

pub fn extract_statement(
    stmt: &EditStatement,
    seq: u64,
    symbols: &Interner,
    oracles: &Oracles,
    floor: f64,
) -> Result<Edit> {
    if stmt.raw_text.trim().is_empty() {
        return Err(Error::ExtractionFailed(stmt.raw_text.clone()));
    }
    let mut found = oracles.extract_triple(&stmt.raw_text)?;
    // stable: first of equally scored extractions wins
    found.sort_by(|a, b| b.score.total_cmp(&a.score));
    let best = found
        .into_iter()
        .find(|t| t.score >= floor)
        .ok_or_else(|| Error::ExtractionFailed(stmt.raw_text.clone()))?;
    let sym = |t: &str| {
        symbols
            .resolve_or_intern(t)
            .map_err(|_| Error::ExtractionFailed(stmt.raw_text.clone()))
    };
    Ok(Edit {
        case_id: stmt.case_id.clone(),
        s: sym(&best.s)?,
        r: sym(&best.r)?,
        o_true: None,
        o_new: sym(&best.o)?,
        seq,
    })
}

/// Writes `edit` into its own case's overlay. Validation happens before any
/// mutation, so a rejected edit leaves the overlay untouched.
pub fn apply_edit(overlay: &mut Overlay, edit: Edit) -> Result<SurfaceDelta> {
    if edit.case_id != overlay.case_id {
        return Err(Error::CaseMismatch {
            overlay: overlay.case_id.clone(),
            edit: edit.case_id,
        });
    }
    let last = overlay.last_seq();
    if edit.seq <= last {
        return Err(Error::SeqOutOfOrder {
            case_id: edit.case_id,
            seq: edit.seq,
            last,
        });
    }
    let delta = SurfaceDelta {
        added_subject: overlay.surface.subjects.insert(edit.s).then_some(edit.s),
        added_relation: overlay.surface.relations.insert(edit.r).then_some(edit.r),
        superseded: overlay.delta.insert((edit.s, edit.r), edit.o_new),
    };
    overlay.log.push(edit);
    Ok(delta)
}

/// For every `(s, r)` the edit with the highest seq wins. Keys come out in
/// first-appearance order.
pub fn arbitrate(log: &[Edit]) -> IndexMap<(Symbol, Symbol), Symbol> {
    let mut best: IndexMap<(Symbol, Symbol), (u64, Symbol)> = IndexMap::new();
    for e in log {
        let slot = best.entry((e.s, e.r)).or_insert((e.seq, e.o_new));
        if e.seq >= slot.0 {
            *slot = (e.seq, e.o_new);
        }
    }
    best.into_iter().map(|(k, (_, o))| (k, o)).collect()
}

impl KnowledgeStore {
    /// Extracts and applies one edit record, creating the case's overlay on
    /// first use.
    pub fn submit(
        &mut self,
        input: &EditInput,
        detector: Option<&Oracles>,
        floor: f64,
    ) -> Result<SurfaceDelta> {
        let symbols = self.symbols().clone();
        let overlay = self.overlay_or_create(input.case_id());
        let edit = extract_edit(input, overlay.last_seq() + 1, &symbols, detector, floor)?;
        apply_edit(overlay, edit)
    }

    pub fn impact_surface(&self, case_id: &str) -> Result<ImpactSurface> {
        Ok(self.overlay(case_id)?.surface.clone())
    }
}

pub fn read_edits<R: BufRead>(reader: R) -> Result<Vec<EditInput>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_edits(path: &Path) -> Result<Vec<EditInput>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_edits(BufReader::new(file))
}
