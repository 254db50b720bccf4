use std::sync::Arc;

use proptest::prelude::*;

use capekg_core::eval::{
    build_eval_base, case_decompositions, default_detector, ingest, run_eval, AblationFlags, BatchSetting,
    CaseRecord, EvalOptions, MetricsReport,
};
use capekg_core::graph::BaseGraph;
use capekg_core::oracle::{MockFixtures, ScriptedLlm};
use capekg_core::session::{mock_session, Session};
use capekg_core::symbol::Interner;
use capekg_core::synthetic::mquake_dataset;

fn setup(n: usize, fixtures: &MockFixtures) -> (Vec<CaseRecord>, Arc<BaseGraph>, Session) {
    let cases = ingest(&mquake_dataset(n).to_string()).unwrap();
    let base = Arc::new(build_eval_base(&cases, &[], Arc::new(Interner::new())).unwrap());
    let session = mock_session(fixtures, default_detector(&cases, &base), case_decompositions(&cases));
    (cases, base, session)
}

fn report(
    env: &(Vec<CaseRecord>, Arc<BaseGraph>, Session),
    setting: BatchSetting,
    flags: AblationFlags,
    shuffle_seed: Option<u64>,
) -> MetricsReport {
    let opts = EvalOptions {
        setting,
        flags,
        shuffle_seed,
        jobs: 2,
        ..EvalOptions::default()
    };
    run_eval(&env.0, env.1.clone(), &env.2.oracles, &env.2.decomposer, &opts).unwrap().report
}

#[test]
fn full_pipeline_dominates_single_ablations() {
    let env = setup(20, &MockFixtures::default());
    for setting in [BatchSetting::size(1), BatchSetting::size(10), BatchSetting::All] {
        let full = report(&env, setting, AblationFlags::default(), None);
        for flags in [
            AblationFlags { disable_construction: true, ..Default::default() },
            AblationFlags { disable_retrieval: true, ..Default::default() },
            AblationFlags { disable_update: true, ..Default::default() },
        ] {
            let ablated = report(&env, setting, flags, None);
            assert!(full.m_acc >= ablated.m_acc, "{setting} {flags:?}: {} < {}", full.m_acc, ablated.m_acc);
            assert!(full.h_acc >= ablated.h_acc, "{setting} {flags:?}");
        }
    }
}

#[test]
fn shared_session_ablations_lose_conflicting_pairs() {
    let env = setup(20, &MockFixtures::default());
    let full = report(&env, BatchSetting::All, AblationFlags::default(), None);
    assert_eq!(full.m_acc, 1.0);
    let update = report(&env, BatchSetting::All, AblationFlags { disable_update: true, ..Default::default() }, None);
    let construction =
        report(&env, BatchSetting::All, AblationFlags { disable_construction: true, ..Default::default() }, None);
    // every pair shares one edited key, so exactly one side of each pair is overwritten
    assert_eq!(update.m_hits, 10);
    assert_eq!(construction.m_hits, 10);
    // alone in a batch there is nothing to collide with
    let single = report(&env, BatchSetting::size(1), AblationFlags { disable_update: true, ..Default::default() }, None);
    assert_eq!(single.m_acc, 1.0);
}

#[test]
fn retrieval_ablation_uses_llm_only() {
    let env = setup(4, &MockFixtures::default());
    let r = report(&env, BatchSetting::size(1), AblationFlags { disable_retrieval: true, ..Default::default() }, None);
    // the mock LLM knows nothing
    assert_eq!(r.m_hits, 0);
    assert!(r.complete);

    let cases = ingest(&mquake_dataset(2).to_string()).unwrap();
    let mut llm = ScriptedLlm::new();
    for t in &cases[0].gold_new_chain {
        llm.push(format!("of {}?", t.s), t.o.clone());
    }
    let fixtures = MockFixtures { llm, ..MockFixtures::default() };
    let env = setup(2, &fixtures);
    let r = report(&env, BatchSetting::size(1), AblationFlags { disable_retrieval: true, ..Default::default() }, None);
    assert_eq!(r.m_hits, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_independent_of_batching(k in 1usize..=24, seed in any::<u64>()) {
        let env = setup(24, &MockFixtures::default());
        let one = report(&env, BatchSetting::size(1), AblationFlags::default(), Some(seed));
        let other = report(&env, BatchSetting::size(k), AblationFlags::default(), Some(seed));
        prop_assert_eq!(one.m_hits, other.m_hits);
        prop_assert_eq!(one.h_hits, other.h_hits);
        prop_assert_eq!(one.m_acc, other.m_acc);
        prop_assert_eq!(one.h_acc, other.h_acc);
    }
}
