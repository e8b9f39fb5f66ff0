use std::collections::BTreeSet;

use chaincheck_core::bench::{gen_chain, gen_privacy_chain, GenSpec};
use chaincheck_core::engine::Mode;
use chaincheck_core::mitigation::{enumerate_attacks, exact_min_hitting_set, greedy_watchlist, mitigate, Status};
use chaincheck_core::model::Label;
use chaincheck_core::pipeline::{run_check, CheckOptions};
use chaincheck_core::{fixtures, CheckError, ModelSpec};
use proptest::prelude::*;

fn spec(len: usize, seed: u64) -> GenSpec {
    GenSpec { chain_length: len, distractors: 20, seed, ..GenSpec::default() }
}

fn ids(xs: &[String]) -> BTreeSet<String> {
    xs.iter().cloned().collect()
}

#[test]
fn every_chain_rule_is_needed() {
    for seed in 0..4 {
        for (mode, inst) in [
            (Mode::Escalation, gen_chain(&spec(4, seed)).unwrap()),
            (Mode::Privacy, gen_privacy_chain(&spec(3, seed)).unwrap()),
        ] {
            let opts = CheckOptions { mode, ..CheckOptions::default() };
            for r in &inst.chain {
                let m = inst.model.without_rules(&ids(std::slice::from_ref(r)));
                let out = run_check(&m, &opts).unwrap();
                assert!(out.verdict.is_secure(), "{mode:?} seed {seed}: still {} without {r}", out.verdict.name());
            }
        }
    }
}

#[test]
fn single_chain_yields_its_rules() {
    for seed in 0..4 {
        let inst = gen_chain(&spec(3, seed)).unwrap();
        let (sets, complete) = enumerate_attacks(&inst.model, &CheckOptions::default(), 8).unwrap();
        assert!(complete);
        assert_eq!(sets, vec![ids(&inst.chain)]);
    }
}

/// Two generated chains side by side, with the second one's names suffixed.
fn two_chains() -> (ModelSpec, Vec<String>, Vec<String>) {
    let a = gen_chain(&GenSpec { distractors: 0, seed: 1, ..GenSpec::default() }).unwrap();
    let b = gen_chain(&GenSpec { distractors: 0, seed: 2, chain_length: 2, ..GenSpec::default() }).unwrap();
    let mut text = b.model.to_json_string();
    for attr in &b.model.attributes {
        text = text.replace(&format!("\"{}\"", attr.name), &format!("\"{}_b\"", attr.name));
    }
    for r in &b.model.rules {
        text = text.replace(&format!("\"{}\"", r.id), &format!("\"{}_b\"", r.id));
    }
    let b2 = chaincheck_core::parse_model(&text).unwrap();
    let mut attributes = a.model.attributes.clone();
    attributes.extend(b2.attributes.iter().cloned());
    let mut rules = a.model.rules.clone();
    for mut r in b2.rules.iter().cloned() {
        r.priority += a.model.rules.len();
        rules.push(r);
    }
    let policy = chaincheck_core::TriggerExpr::Or(vec![
        a.model.combined_escalation().unwrap(),
        b2.combined_escalation().unwrap(),
    ]);
    let m = ModelSpec::new(attributes, rules, vec![chaincheck_core::Policy::Escalation { never: policy }]).unwrap();
    let chain_b = b.chain.iter().map(|r| format!("{r}_b")).collect();
    (m, a.chain, chain_b)
}

#[test]
fn disjoint_chains_give_disjoint_sets() {
    let (m, a, b) = two_chains();
    let (sets, complete) = enumerate_attacks(&m, &CheckOptions::default(), 8).unwrap();
    assert!(complete);
    assert_eq!(sets.len(), 2);
    assert!(sets[0].is_disjoint(&sets[1]));
    let got: BTreeSet<BTreeSet<String>> = sets.into_iter().collect();
    assert_eq!(got, BTreeSet::from([ids(&a), ids(&b)]));

    let r = mitigate(&m, &CheckOptions::default(), 8).unwrap();
    assert_eq!(r.status, Status::Secure);
    assert_eq!(r.watchlist.rules.len(), 2);
}

#[test]
fn privacy_without_labels_is_a_config_error() {
    let mut m = fixtures::smart_home_privacy();
    for a in &mut m.attributes {
        a.label = Label::Other;
    }
    let opts = CheckOptions { mode: Mode::Privacy, ..CheckOptions::default() };
    assert!(matches!(mitigate(&m, &opts, 4), Err(CheckError::Config(_))));
    assert!(matches!(mitigate(&fixtures::smart_home(), &CheckOptions::default(), 0), Err(CheckError::Config(_))));
}

fn rule_sets() -> impl Strategy<Value = Vec<BTreeSet<String>>> {
    prop::collection::vec(prop::collection::btree_set((0..8u8).prop_map(|i| format!("R{}", i + 1)), 1..4), 0..6)
}

proptest! {
    #[test]
    fn greedy_hits_every_set(sets in rule_sets()) {
        let wl = greedy_watchlist(&sets, &fixtures::smart_home());
        let chosen: BTreeSet<String> = wl.rules.iter().cloned().collect();
        for s in &sets {
            prop_assert!(!s.is_disjoint(&chosen));
        }
        let exact = exact_min_hitting_set(&sets).unwrap();
        prop_assert!(exact.len() <= chosen.len());
        for s in &sets {
            prop_assert!(!s.is_disjoint(&exact));
        }
    }
}
