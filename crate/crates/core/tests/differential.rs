//! Randomized agreement between the reduced pipeline, the fast engine and
//! the brute-force oracle on small models.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chaincheck_core::bench::{random_model, RandomModelSpec};
use chaincheck_core::engine::{CompiledModel, Mode, Verdict};
use chaincheck_core::grouping::{group_model, state_space_size, GroupingTarget};
use chaincheck_core::model::{parse_model, ModelSpec, Value, ValueDomain};
use chaincheck_core::oracle::{self, OracleConfig};
use chaincheck_core::pipeline::{run_check, CheckOptions, EngineKind, Order};

const CASES: u32 = 256;

fn model(seed: u64, mode: Mode) -> ModelSpec {
    let mut spec = RandomModelSpec::for_mode(mode);
    if mode == Mode::Privacy {
        spec.max_space = 1 << 8;
    }
    random_model(&mut ChaCha8Rng::seed_from_u64(seed), mode, &spec)
}

fn configs(mode: Mode) -> Vec<CheckOptions> {
    let base = CheckOptions { mode, ..CheckOptions::default() };
    vec![
        base.clone(),
        CheckOptions { order: Order::PruneThenGroup, ..base.clone() },
        CheckOptions { group: false, ..base.clone() },
        CheckOptions { prune: false, ..base.clone() },
        base.unoptimized(),
    ]
}

fn oracle_verdict(m: &ModelSpec, mode: Mode, attacker: bool) -> Verdict {
    let cfg = OracleConfig { attacker_enabled: attacker, ..OracleConfig::default() };
    match mode {
        Mode::Escalation => oracle::brute_check_escalation(m, &cfg).verdict,
        Mode::Privacy => oracle::brute_check_privacy(m, &cfg).verdict,
    }
}

fn replay(m: &ModelSpec, mode: Mode, v: &Verdict, attacker: bool) -> Result<(), String> {
    match (mode, v.trace()) {
        (_, None) => Ok(()),
        (Mode::Escalation, Some(t)) => oracle::replay_escalation(m, t, attacker),
        (Mode::Privacy, Some(t)) => oracle::replay_privacy(m, t, attacker),
    }
}

fn agree(seed: u64, mode: Mode) -> Result<(), TestCaseError> {
    let m = model(seed, mode);
    let truth = oracle_verdict(&m, mode, true);
    prop_assert!(!matches!(truth, Verdict::Unknown(_)));
    for opts in configs(mode) {
        let out = run_check(&m, &opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(out.verdict.name(), truth.name(), "group={} prune={}", opts.group, opts.prune);
        if let (Some(t), Some(o)) = (out.verdict.trace(), truth.trace()) {
            prop_assert_eq!(t.len(), o.len(), "shortest trace");
            prop_assert!(replay(&m, mode, &out.verdict, true).is_ok());
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        for mode in [Mode::Escalation, Mode::Privacy] {
            let m = model(seed, mode);
            prop_assert_eq!(parse_model(&m.to_json_string()).unwrap(), m);
        }
    }

    #[test]
    fn escalation_matches_oracle(seed in any::<u64>()) {
        agree(seed, Mode::Escalation)?;
    }

    #[test]
    fn privacy_matches_oracle(seed in any::<u64>()) {
        agree(seed, Mode::Privacy)?;
    }

    #[test]
    fn oracle_engine_through_pipeline(seed in any::<u64>()) {
        let m = model(seed, Mode::Escalation);
        let fast = run_check(&m, &CheckOptions::default()).unwrap();
        let slow = run_check(&m, &CheckOptions { engine: EngineKind::Oracle, ..CheckOptions::default() }).unwrap();
        prop_assert_eq!(fast.verdict.name(), slow.verdict.name());
    }

    #[test]
    fn successor_sets_agree(seed in any::<u64>(), attacker in any::<bool>()) {
        let m = model(seed, Mode::Escalation);
        let cm = CompiledModel::new(&m);
        let mut frontier = vec![m.initial_state()];
        for _ in 0..3 {
            let mut next = Vec::new();
            for s in &frontier {
                let fast: BTreeSet<Vec<Value>> =
                    cm.successors(&cm.encode(s), attacker).iter().map(|t| cm.decode(t).0).collect();
                let slow: BTreeSet<Vec<Value>> =
                    oracle::successors(&m, s, attacker).into_iter().map(|t| t.0).collect();
                prop_assert_eq!(&fast, &slow);
                next.extend(oracle::successors(&m, s, attacker).into_iter().take(4));
            }
            frontier = next;
        }
    }

    #[test]
    fn attacker_only_adds_attacks(seed in any::<u64>()) {
        let m = model(seed, Mode::Escalation);
        let off = oracle_verdict(&m, Mode::Escalation, false);
        let on = oracle_verdict(&m, Mode::Escalation, true);
        if off.is_attack() {
            prop_assert!(on.is_attack());
            prop_assert!(on.trace().unwrap().len() <= off.trace().unwrap().len());
        }
        let opts = CheckOptions { attacker_enabled: false, ..CheckOptions::default() };
        prop_assert_eq!(run_check(&m, &opts).unwrap().verdict.name(), off.name());
    }

    #[test]
    fn pinned_model_is_deterministic(seed in any::<u64>()) {
        let mut m = model(seed, Mode::Escalation);
        for a in &mut m.attributes {
            a.vulnerable = false;
            if a.is_sensor() {
                a.window = Some(match &a.initial {
                    Value::Int(i) => ValueDomain::IntRange { lo: *i, hi: *i },
                    Value::Sym(s) => ValueDomain::Enum(vec![s.clone()]),
                });
            }
        }
        let mut s = m.initial_state();
        for _ in 0..6 {
            let succ = oracle::successors(&m, &s, true);
            prop_assert_eq!(succ.len(), 1);
            s = succ.into_iter().next().unwrap();
        }
    }

    #[test]
    fn equal_copies_stay_equal(seed in any::<u64>(), attacker in any::<bool>()) {
        let m = model(seed, Mode::Privacy);
        let cm = CompiledModel::new(&m);
        let s = cm.encode(&m.initial_state());
        for (l, r) in cm.product_successors(&s, &s, attacker) {
            prop_assert_eq!(&l, &r);
            prop_assert!(cm.public_difference(&l, &r).is_empty());
        }
    }

    #[test]
    fn grouping_never_grows_the_space(seed in any::<u64>()) {
        let m = model(seed, Mode::Escalation);
        let policy = m.combined_escalation().unwrap();
        let g = group_model(&m, GroupingTarget::Escalation(&policy)).unwrap();
        prop_assert!(state_space_size(&g.model) <= state_space_size(&m));
    }

    #[test]
    fn small_budget_is_never_wrong(seed in any::<u64>(), budget in 1usize..64) {
        let m = model(seed, Mode::Escalation);
        let truth = oracle_verdict(&m, Mode::Escalation, true);
        let out = run_check(&m, &CheckOptions { max_states: budget, ..CheckOptions::default() }).unwrap();
        if !matches!(out.verdict, Verdict::Unknown(_)) {
            prop_assert_eq!(out.verdict.name(), truth.name());
        }
    }
}
