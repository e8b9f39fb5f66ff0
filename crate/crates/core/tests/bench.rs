use std::collections::BTreeSet;
use std::time::Duration;

use chaincheck_core::bench::{
    gen_chain, gen_privacy_chain, generate_pool, run_benchmark, sample_corpus, summarize, to_csv, BenchConfig,
    BenchEngine, GenSpec, PoolSpec, PHASES,
};
use chaincheck_core::engine::Mode;
use chaincheck_core::model::{AttributeKind, Policy};
use chaincheck_core::oracle::{self, OracleConfig};
use chaincheck_core::pipeline::{run_check, CheckOptions};
use chaincheck_core::GenError;

fn small(len: usize, negative: bool, seed: u64) -> GenSpec {
    GenSpec { chain_length: len, distractors: 5, negative, seed, extra_attributes: 4, domain_size: 3 }
}

#[test]
fn chain_generation_is_deterministic() {
    let a = gen_chain(&small(4, false, 9)).unwrap();
    let b = gen_chain(&small(4, false, 9)).unwrap();
    assert_eq!(a.model.to_json_string(), b.model.to_json_string());
    let c = gen_chain(&small(4, false, 10)).unwrap();
    assert_ne!(a.model.to_json_string(), c.model.to_json_string());
}

#[test]
fn shortest_chain_positive_and_negative() {
    let pos = gen_chain(&small(2, false, 1)).unwrap();
    assert!(pos.expect_attack);
    assert_eq!(pos.chain, ["R1", "R2"]);
    let out = run_check(&pos.model, &CheckOptions::default()).unwrap();
    assert!(out.verdict.is_attack());

    let neg = gen_chain(&small(2, true, 1)).unwrap();
    assert!(!neg.expect_attack);
    assert!(neg.model.rules.iter().all(|r| r.id.starts_with('R')));
    let out = run_check(&neg.model, &CheckOptions::default()).unwrap();
    assert!(out.verdict.is_secure());
}

#[test]
fn generated_chains_agree_with_oracle() {
    for seed in 0..6 {
        for len in [2, 3, 5] {
            for negative in [false, true] {
                let inst = gen_chain(&small(len, negative, seed)).unwrap();
                let fast = run_check(&inst.model, &CheckOptions::default()).unwrap();
                assert_eq!(fast.verdict.is_attack(), inst.expect_attack, "seed {seed} len {len}");
                let reduced = chaincheck_core::pruning::prune_for_escalation(
                    &inst.model,
                    &inst.model.combined_escalation().unwrap(),
                );
                let o = oracle::brute_check_escalation(&reduced.model, &OracleConfig::default());
                assert_eq!(o.verdict.is_attack(), inst.expect_attack);
                if let Some(t) = fast.verdict.trace() {
                    // one injection, then one step per chain rule
                    assert_eq!(t.len(), len + 1);
                }
            }
        }
    }
}

#[test]
fn privacy_chains() {
    for seed in 0..4 {
        let pos = gen_privacy_chain(&small(3, false, seed)).unwrap();
        let opts = CheckOptions { mode: Mode::Privacy, ..CheckOptions::default() };
        assert!(run_check(&pos.model, &opts).unwrap().verdict.is_attack());
        let neg = gen_privacy_chain(&small(3, true, seed)).unwrap();
        assert!(run_check(&neg.model, &opts).unwrap().verdict.is_secure());
    }
}

#[test]
fn infeasible_specs() {
    for spec in [
        GenSpec { chain_length: 1, ..GenSpec::default() },
        GenSpec { chain_length: 9, ..GenSpec::default() },
        GenSpec { domain_size: 2, negative: true, ..GenSpec::default() },
        GenSpec { domain_size: 1, ..GenSpec::default() },
        GenSpec { extra_attributes: 1, distractors: 3, ..GenSpec::default() },
    ] {
        assert!(matches!(gen_chain(&spec), Err(GenError::Infeasible(_))), "{spec:?}");
    }
}

#[test]
fn default_spec_places_all_distractors() {
    let inst = gen_chain(&GenSpec::default()).unwrap();
    assert_eq!(inst.model.rules.len(), 3 + 50);
}

#[test]
fn pool_shape() {
    let pool = generate_pool(&PoolSpec::default()).unwrap();
    assert_eq!(pool.attributes.len(), 190);
    assert_eq!(pool.rules.len(), 1000);
    let sensors = pool.attributes.iter().filter(|a| a.kind == AttributeKind::Sensor).count();
    assert!((80..=130).contains(&sensors), "{sensors} sensors");
    let mut used = BTreeSet::new();
    for r in &pool.rules {
        used.extend(r.trigger.attributes().into_iter().map(String::from));
        used.extend(r.action.iter().map(|(a, _)| a.clone()));
    }
    assert_eq!(used.len(), 190);
}

#[test]
fn full_sample_keeps_pool() {
    let spec = PoolSpec { attributes: 30, rules: 60, seed: 3 };
    let pool = generate_pool(&spec).unwrap();
    let s = sample_corpus(&pool, 60, 1).unwrap();
    assert_eq!(s.rules, pool.rules);
    assert_eq!(s.attributes.len(), pool.attributes.len());
    assert_eq!(s.attributes.iter().filter(|a| a.vulnerable).count(), 1);
    assert!(matches!(sample_corpus(&pool, 61, 1), Err(GenError::Infeasible(_))));
}

#[test]
fn samples_are_secure() {
    let pool = generate_pool(&PoolSpec::default()).unwrap();
    for seed in 0..5 {
        let s = sample_corpus(&pool, 8, seed).unwrap();
        assert!(matches!(s.policies[..], [Policy::Escalation { .. }]));
        let out = run_check(&s, &CheckOptions::default()).unwrap();
        assert!(out.verdict.is_secure(), "seed {seed}: {}", out.verdict.name());
    }
}

#[test]
fn harness_rows_and_csv() {
    let cfg = BenchConfig {
        sizes: vec![3, 5],
        trials: 2,
        seed: 7,
        timeout: Duration::from_secs(1),
        max_states: 1_000_000,
        pool: PoolSpec::default(),
        engines: vec![BenchEngine::Optimized, BenchEngine::Baseline],
    };
    let rows = run_benchmark(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2 * PHASES.len());
    let csv = to_csv(&rows);
    assert!(csv.starts_with("size,trial,engine,phase,millis,verdict\n"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
    let summary = summarize(&rows);
    assert_eq!(summary.len(), 4);
    assert!(summary.iter().all(|s| s.runs == 2));
    // a run either finishes secure or is censored by the budget
    assert!(rows.iter().all(|r| r.verdict == "secure" || r.verdict == "unknown"));
    assert!(rows.iter().filter(|r| r.engine == "optimized").all(|r| r.verdict == "secure"));
}
