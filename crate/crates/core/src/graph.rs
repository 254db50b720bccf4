//! Layered knowledge graph: a sealed base of factual triples plus per-case
//! copy-on-write overlays.
//!
//! The base never sees edited content. Each overlay stores only the `(s, r)`
//! keys its case rewrote, so an overlay with no edits allocates nothing beyond
//! its case id. A [`LayeredView`] binds the base to exactly one overlay, which
//! is the only way resolution can observe edited knowledge.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edit::{Edit, ImpactSurface};
use crate::error::{Error, Result};
use crate::symbol::{Interner, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub s: Symbol,
    pub r: Symbol,
    pub o: Symbol,
}

/// A triple as it appears on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTriple {
    pub s: String,
    pub r: String,
    pub o: String,
}

impl RawTriple {
    pub fn new(s: impl Into<String>, r: impl Into<String>, o: impl Into<String>) -> Self {
        Self {
            s: s.into(),
            r: r.into(),
            o: o.into(),
        }
    }
}

/// Which layer answered a lookup, or which layer a query is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    Base,
    Overlay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub object: Symbol,
    pub provenance: Layer,
}

/// Accumulates facts; [`BaseGraphBuilder::seal`] freezes them.
pub struct BaseGraphBuilder {
    symbols: Arc<Interner>,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    duplicates: usize,
}

impl BaseGraphBuilder {
    pub fn new(symbols: Arc<Interner>) -> Self {
        Self {
            symbols,
            triples: Vec::new(),
            seen: HashSet::new(),
            duplicates: 0,
        }
    }

    pub fn symbols(&self) -> &Arc<Interner> {
        &self.symbols
    }

    /// Returns false when the triple was already present.
    pub fn insert(&mut self, raw: &RawTriple) -> Result<bool> {
        let triple = Triple {
            s: self.symbols.intern(&raw.s)?,
            r: self.symbols.intern(&raw.r)?,
            o: self.symbols.intern(&raw.o)?,
        };
        Ok(self.insert_triple(triple))
    }

    pub fn insert_triple(&mut self, triple: Triple) -> bool {
        if self.seen.insert(triple) {
            self.triples.push(triple);
            true
        } else {
            self.duplicates += 1;
            false
        }
    }

    /// Parses JSONL `{"s","r","o"}` records. Blank lines are skipped; line
    /// numbers in errors are 1-based.
    pub fn extend_jsonl<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawTriple = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            self.insert(&raw).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn seal(self) -> BaseGraph {
        BaseGraph::from_parts(self.symbols, self.triples, self.duplicates)
    }
}

/// Immutable graph of factual triples with `(s, r)` and subject indices.
#[derive(Debug)]
pub struct BaseGraph {
    symbols: Arc<Interner>,
    triples: Vec<Triple>,
    sp_index: HashMap<(Symbol, Symbol), Vec<Symbol>>,
    subject_index: HashMap<Symbol, Vec<(Symbol, Symbol)>>,
    duplicates_removed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseSummary {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub duplicates_removed: usize,
}

type Indices = (
    HashMap<(Symbol, Symbol), Vec<Symbol>>,
    HashMap<Symbol, Vec<(Symbol, Symbol)>>,
);

fn build_indices(triples: &[Triple]) -> Indices {
    let mut sp: HashMap<(Symbol, Symbol), Vec<Symbol>> = HashMap::new();
    let mut subj: HashMap<Symbol, Vec<(Symbol, Symbol)>> = HashMap::new();
    for t in triples {
        sp.entry((t.s, t.r)).or_default().push(t.o);
        subj.entry(t.s).or_default().push((t.r, t.o));
    }
    (sp, subj)
}

impl BaseGraph {
    fn from_parts(symbols: Arc<Interner>, triples: Vec<Triple>, duplicates_removed: usize) -> Self {
        let (sp_index, subject_index) = build_indices(&triples);
        Self {
            symbols,
            triples,
            sp_index,
            subject_index,
            duplicates_removed,
        }
    }

    pub fn empty(symbols: Arc<Interner>) -> Self {
        BaseGraphBuilder::new(symbols).seal()
    }

    pub fn from_raw<'a>(
        symbols: Arc<Interner>,
        facts: impl IntoIterator<Item = &'a RawTriple>,
    ) -> Result<Self> {
        let mut builder = BaseGraphBuilder::new(symbols);
        for raw in facts {
            builder.insert(raw)?;
        }
        Ok(builder.seal())
    }

    pub fn from_jsonl<R: BufRead>(symbols: Arc<Interner>, reader: R) -> Result<Self> {
        let mut builder = BaseGraphBuilder::new(symbols);
        builder.extend_jsonl(reader)?;
        Ok(builder.seal())
    }

    pub fn symbols(&self) -> &Arc<Interner> {
        &self.symbols
    }

    /// Triples in insertion order, duplicates removed.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// All base objects for `(s, r)` in insertion order.
    pub fn objects(&self, s: Symbol, r: Symbol) -> &[Symbol] {
        self.sp_index.get(&(s, r)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn outgoing(&self, s: Symbol) -> &[(Symbol, Symbol)] {
        self.subject_index.get(&s).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn summary(&self) -> BaseSummary {
        let mut entities = HashSet::new();
        let mut relations = HashSet::new();
        for t in &self.triples {
            entities.insert(t.s);
            entities.insert(t.o);
            relations.insert(t.r);
        }
        BaseSummary {
            triples: self.triples.len(),
            entities: entities.len(),
            relations: relations.len(),
            duplicates_removed: self.duplicates_removed,
        }
    }

    /// Rebuilds both indices from `triples` and compares.
    pub fn indices_consistent(&self) -> bool {
        let (sp, subj) = build_indices(&self.triples);
        sp == self.sp_index && subj == self.subject_index
    }

    pub fn raw_triples(&self) -> Vec<RawTriple> {
        self.triples
            .iter()
            .map(|t| RawTriple {
                s: self.symbols.text(t.s).to_string(),
                r: self.symbols.text(t.r).to_string(),
                o: self.symbols.text(t.o).to_string(),
            })
            .collect()
    }

    /// Canonical JSONL form: one triple per line, insertion order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for raw in self.raw_triples() {
            out.push_str(&serde_json::to_string(&raw).expect("triple serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical JSONL form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// Per-case delta container.
///
/// `delta` holds the arbitrated object for every rewritten `(s, r)` key and
/// is always a function of `log`. Fields are kept crate-private so the edit
/// engine is the only writer.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub(crate) case_id: String,
    pub(crate) delta: IndexMap<(Symbol, Symbol), Symbol>,
    pub(crate) log: Vec<Edit>,
    pub(crate) surface: ImpactSurface,
}

impl Overlay {
    pub fn new(case_id: impl Into<String>) -> Self {
        let case_id = case_id.into();
        Self {
            surface: ImpactSurface::empty(case_id.clone()),
            case_id,
            delta: IndexMap::new(),
            log: Vec::new(),
        }
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn get(&self, s: Symbol, r: Symbol) -> Option<Symbol> {
        self.delta.get(&(s, r)).copied()
    }

    /// `((s, r), o_new)` pairs in first-write order.
    pub fn delta(&self) -> impl Iterator<Item = ((Symbol, Symbol), Symbol)> + '_ {
        self.delta.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn edits(&self) -> &[Edit] {
        &self.log
    }

    pub fn surface(&self) -> &ImpactSurface {
        &self.surface
    }

    pub fn last_seq(&self) -> u64 {
        self.log.last().map(|e| e.seq).unwrap_or(0)
    }
}

/// Read handle binding a sealed base to one overlay.
#[derive(Debug, Clone, Copy)]
pub struct LayeredView<'a> {
    base: &'a BaseGraph,
    overlay: &'a Overlay,
}

impl<'a> LayeredView<'a> {
    pub fn new(base: &'a BaseGraph, overlay: &'a Overlay) -> Self {
        Self { base, overlay }
    }

    pub fn base(&self) -> &'a BaseGraph {
        self.base
    }

    pub fn overlay(&self) -> &'a Overlay {
        self.overlay
    }

    pub fn case_id(&self) -> &'a str {
        &self.overlay.case_id
    }

    pub fn symbols(&self) -> &'a Arc<Interner> {
        &self.base.symbols
    }

    /// The case's edit wins; otherwise the first base object in insertion order.
    pub fn resolve(&self, s: Symbol, r: Symbol) -> Option<Resolution> {
        if let Some(object) = self.overlay.get(s, r) {
            return Some(Resolution {
                object,
                provenance: Layer::Overlay,
            });
        }
        self.base.objects(s, r).first().map(|&object| Resolution {
            object,
            provenance: Layer::Base,
        })
    }

    /// Like [`resolve`](Self::resolve) but returns every base object when no
    /// edit applies. An edit supersedes all base values for its key.
    pub fn resolve_multi(&self, s: Symbol, r: Symbol) -> Vec<Resolution> {
        if let Some(object) = self.overlay.get(s, r) {
            return vec![Resolution {
                object,
                provenance: Layer::Overlay,
            }];
        }
        self.base
            .objects(s, r)
            .iter()
            .map(|&object| Resolution {
                object,
                provenance: Layer::Base,
            })
            .collect()
    }

    /// Resolution restricted to a routed layer: overlay routing consults the
    /// delta first, base routing consults the base only.
    pub fn resolve_in(&self, layer: Layer, s: Symbol, r: Symbol) -> Option<Resolution> {
        match layer {
            Layer::Overlay => self.resolve(s, r),
            Layer::Base => self.base.objects(s, r).first().map(|&object| Resolution {
                object,
                provenance: Layer::Base,
            }),
        }
    }
}

/// One overlay line of the debug dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayRecord {
    pub case_id: String,
    pub s: String,
    pub r: String,
    pub o_new: String,
}

/// Session registry: one shared base plus overlays keyed by case id.
#[derive(Debug)]
pub struct KnowledgeStore {
    base: Arc<BaseGraph>,
    overlays: BTreeMap<String, Overlay>,
}

impl KnowledgeStore {
    pub fn new(base: Arc<BaseGraph>) -> Self {
        Self {
            base,
            overlays: BTreeMap::new(),
        }
    }

    pub fn base(&self) -> &Arc<BaseGraph> {
        &self.base
    }

    pub fn symbols(&self) -> &Arc<Interner> {
        self.base.symbols()
    }

    pub fn create_overlay(&mut self, case_id: &str) -> Result<&mut Overlay> {
        if self.overlays.contains_key(case_id) {
            return Err(Error::DuplicateCase(case_id.to_string()));
        }
        Ok(self
            .overlays
            .entry(case_id.to_string())
            .or_insert_with(|| Overlay::new(case_id)))
    }

    pub fn overlay_or_create(&mut self, case_id: &str) -> &mut Overlay {
        self.overlays
            .entry(case_id.to_string())
            .or_insert_with(|| Overlay::new(case_id))
    }

    pub fn overlay(&self, case_id: &str) -> Result<&Overlay> {
        self.overlays
            .get(case_id)
            .ok_or_else(|| Error::UnknownCase(case_id.to_string()))
    }

    pub fn overlay_mut(&mut self, case_id: &str) -> Result<&mut Overlay> {
        self.overlays
            .get_mut(case_id)
            .ok_or_else(|| Error::UnknownCase(case_id.to_string()))
    }

    pub fn contains_case(&self, case_id: &str) -> bool {
        self.overlays.contains_key(case_id)
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.overlays.keys().map(String::as_str)
    }

    pub fn view(&self, case_id: &str) -> Result<LayeredView<'_>> {
        Ok(LayeredView::new(&self.base, self.overlay(case_id)?))
    }

    /// Debug dump of every overlay, cases in id order, keys in first-write order.
    pub fn overlay_records(&self) -> Vec<OverlayRecord> {
        let symbols = self.symbols();
        self.overlays
            .values()
            .flat_map(|ov| {
                ov.delta().map(move |((s, r), o)| OverlayRecord {
                    case_id: ov.case_id.clone(),
                    s: symbols.text(s).to_string(),
                    r: symbols.text(r).to_string(),
                    o_new: symbols.text(o).to_string(),
                })
            })
            .collect()
    }

    pub fn overlays_to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in self.overlay_records() {
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}
