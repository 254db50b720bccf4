//! Oracle and decomposer assembly shared by the command line and the C ABI.

use std::sync::Arc;

use crate::edit::EditInput;
use crate::graph::{BaseGraph, KnowledgeStore};
use crate::oracle::{DemoRecord, DetectorOracle, HashEmbedder, LexiconDetector, LlmOracle, MockFixtures, Oracles};
use crate::reasoner::Decomposer;

pub struct Session {
    pub oracles: Oracles,
    pub decomposer: Decomposer,
}

/// Lexicon over base atoms plus the atoms of structured edits.
pub fn lexicon_for(base: &BaseGraph, edits: &[EditInput]) -> LexiconDetector {
    let mut lex = LexiconDetector::from_base(base);
    for e in edits {
        if let EditInput::Structured { s, r, o_new, .. } = e {
            lex.add_entity(s);
            lex.add_entity(o_new);
            lex.add_relation(r, &[]);
        }
    }
    lex
}

/// Lexicon over base atoms plus every atom already written to an overlay.
pub fn lexicon_for_store(store: &KnowledgeStore) -> LexiconDetector {
    let mut lex = LexiconDetector::from_base(store.base());
    for rec in store.overlay_records() {
        lex.add_entity(&rec.s);
        lex.add_entity(&rec.o_new);
        lex.add_relation(&rec.r, &[]);
    }
    lex
}

/// Fixture detector scripts fall back to `lexicon`.
pub fn detector_with(fixtures: &MockFixtures, lexicon: LexiconDetector) -> Arc<dyn DetectorOracle> {
    if fixtures.detector.is_empty() {
        Arc::new(lexicon)
    } else {
        Arc::new(fixtures.detector.clone().with_fallback(Arc::new(lexicon)))
    }
}

/// Deterministic mocks: fixture LLM rules and scripted decompositions
/// (fixture scripts take precedence over `extra_scripts`).
pub fn mock_session(fixtures: &MockFixtures, lexicon: LexiconDetector, extra_scripts: Vec<DemoRecord>) -> Session {
    let mut decomposer = Decomposer::scripted(fixtures.decompositions.clone());
    decomposer.extend(extra_scripts);
    let llm: Arc<dyn LlmOracle> = Arc::new(fixtures.llm.clone());
    Session {
        oracles: Oracles::new(detector_with(fixtures, lexicon), Arc::new(HashEmbedder::default()), llm),
        decomposer,
    }
}
