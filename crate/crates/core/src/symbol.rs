//! Symbol interning for entity and relation names.
//!
//! Every atom that enters the graph is normalized (NFC, trimmed, internal
//! whitespace collapsed) and mapped to a dense `u32` id. Lookups try the exact
//! normalized text first and fall back to a case-insensitive pass.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Interned identifier of a normalized entity or relation name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol(u32);

impl Symbol {
    pub fn id(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Unicode NFC, trim, collapse runs of whitespace to a single space.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key used by the case-insensitive fallback pass and by answer matching.
pub fn fold(text: &str) -> String {
    normalize(text).to_lowercase()
}

#[derive(Default)]
struct Table {
    ids: HashMap<Arc<str>, Symbol>,
    folded: HashMap<String, Symbol>,
    texts: Vec<Arc<str>>,
}

/// Thread-safe, append-only symbol table.
///
/// Ids are handed out in first-intern order, so identical input streams
/// produce identical ids.
#[derive(Default)]
pub struct Interner {
    table: RwLock<Table>,
}

impl fmt::Debug for Interner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Interner").field("len", &self.len()).finish()
    }
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&self, text: &str) -> Result<Symbol> {
        let norm = normalize(text);
        if norm.is_empty() {
            return Err(Error::EmptySymbol);
        }
        if let Some(sym) = self.table.read().ids.get(norm.as_str()) {
            return Ok(*sym);
        }
        let mut table = self.table.write();
        if let Some(sym) = table.ids.get(norm.as_str()) {
            return Ok(*sym);
        }
        let sym = Symbol(table.texts.len() as u32);
        let text: Arc<str> = Arc::from(norm.as_str());
        table.texts.push(text.clone());
        table.ids.insert(text, sym);
        table.folded.entry(norm.to_lowercase()).or_insert(sym);
        Ok(sym)
    }

    /// Exact normalized match, then case-insensitive fallback. Never interns.
    pub fn lookup(&self, text: &str) -> Option<Symbol> {
        let norm = normalize(text);
        if norm.is_empty() {
            return None;
        }
        let table = self.table.read();
        table
            .ids
            .get(norm.as_str())
            .or_else(|| table.folded.get(&norm.to_lowercase()))
            .copied()
    }

    /// Resolve to an existing symbol when possible, otherwise intern.
    pub fn resolve_or_intern(&self, text: &str) -> Result<Symbol> {
        match self.lookup(text) {
            Some(sym) => Ok(sym),
            None => self.intern(text),
        }
    }

    pub fn text(&self, sym: Symbol) -> Arc<str> {
        self.table.read().texts[sym.0 as usize].clone()
    }

    pub fn len(&self) -> usize {
        self.table.read().texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
