//! Deterministic MQuAKE-shaped datasets for tests and benchmarks.
//!
//! Cases come in pairs sharing one edited `(subject, relation)` key with
//! different new objects, so any leak between cases in a batch changes the
//! answer of at least one of them.

use serde_json::{json, Value};

const RELATIONS: [&str; 10] = [
    "capital", "founder", "currency", "mascot", "anthem", "sponsor", "architect", "rival", "patron",
    "emblem",
];

struct Chain {
    triples: Vec<[String; 3]>,
}

impl Chain {
    fn hop_questions(&self) -> Vec<Value> {
        self.triples
            .iter()
            .map(|[s, r, o]| json!({"question": format!("What is the {r} of {s}?"), "answer": o}))
            .collect()
    }

    fn labeled(&self) -> Value {
        json!(self.triples)
    }
}

/// `n` cases (rounded up to even) over 2- and 3-hop chains.
pub fn mquake_dataset(n: usize) -> Value {
    let pairs = n.div_ceil(2);
    let mut next_node = 0usize;
    let mut node = || {
        next_node += 1;
        format!("Node {next_node}")
    };
    let mut cases = Vec::with_capacity(pairs * 2);
    for p in 0..pairs {
        let len = 2 + p % 2;
        let edit_at = p % len;
        let rel = |i: usize| RELATIONS[(p + 3 * i) % RELATIONS.len()].to_string();
        let hub = format!("Hub {p}");
        let mut orig = vec![hub.clone()];
        for _ in 0..len {
            orig.push(node());
        }
        let orig_chain = Chain {
            triples: (0..len).map(|i| [orig[i].clone(), rel(i), orig[i + 1].clone()]).collect(),
        };
        for side in 0..2 {
            let case_id = 2 * p + side;
            let mut path = orig[..=edit_at].to_vec();
            for _ in edit_at..len {
                path.push(node());
            }
            let new_chain = Chain {
                triples: (0..len).map(|i| [path[i].clone(), rel(i), path[i + 1].clone()]).collect(),
            };
            let rels: Vec<String> = (0..len).map(rel).collect();
            let route = rels.join(" then ");
            cases.push(json!({
                "case_id": case_id,
                "requested_rewrite": [{
                    "subject": path[edit_at],
                    "relation": rel(edit_at),
                    "target_true": {"str": orig[edit_at + 1]},
                    "target_new": {"str": path[edit_at + 1]},
                }],
                "questions": [
                    format!("Starting from {hub}, follow {route}. Where do you land? (case {case_id})"),
                    format!("Which entity is reached from {hub} via {route}? (case {case_id})"),
                    format!("Take {hub} and apply {route}: what results? (case {case_id})"),
                ],
                "answer": orig[len],
                "new_answer": path[len],
                "new_answer_alias": [],
                "new_single_hops": new_chain.hop_questions(),
                "orig": {
                    "triples_labeled": orig_chain.labeled(),
                    "new_triples_labeled": new_chain.labeled(),
                },
            }));
        }
    }
    Value::Array(cases)
}
