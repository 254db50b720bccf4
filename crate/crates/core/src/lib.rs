//! Case-aware editable knowledge graph: an immutable base graph, one
//! copy-on-write overlay per edit case, layer routing by impact surface,
//! progressive retrieval and a multi-hop reasoner.

pub mod config;
pub mod edit;
pub mod error;
pub mod eval;
pub mod graph;
pub mod oracle;
pub mod reasoner;
pub mod retrieval;
pub mod session;
pub mod symbol;
pub mod synthetic;

pub use config::{Config, ReasonerConfig, RetrievalConfig};
pub use edit::{Edit, EditInput, ImpactSurface};
pub use error::{Error, OracleError, Result};
pub use graph::{BaseGraph, KnowledgeStore, Layer, LayeredView, Overlay, RawTriple, Resolution, Triple};
pub use oracle::Oracles;
pub use symbol::{Interner, Symbol};
