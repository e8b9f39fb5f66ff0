//! Watchlist synthesis.
//!
//! Attacks are collected one counterexample at a time. After each one the
//! current greedy hitting set of all collected rule sets is removed from the
//! model and the check is repeated, so the loop ends exactly when gating the
//! watchlist leaves no attack.

use std::collections::{BTreeMap, BTreeSet};

use tracing::debug;

use crate::engine::{CompiledModel, Mode, Trace, Verdict};
use crate::error::CheckError;
use crate::model::{Label, ModelSpec};
use crate::pipeline::{run_check, CheckOptions};
use crate::pruning::{backtrace, build_dependency_graph};

#[derive(Debug, Clone)]
pub struct AttackSet {
    pub rules: BTreeSet<String>,
    pub trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Gating the watchlist makes the model secure.
    Secure,
    /// The iteration limit was hit while attacks remained.
    Incomplete,
    /// An attack needs no rule at all; gating cannot stop it.
    Unmitigable,
    /// A re-check ran out of budget.
    Unknown,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Secure => "secure",
            Status::Incomplete => "incomplete",
            Status::Unmitigable => "unmitigable",
            Status::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Watchlist {
    /// Selected rule ids in selection order.
    pub rules: Vec<String>,
    /// For each selected rule, indices of the attack sets containing it.
    pub blocks: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Mitigation {
    pub attacks: Vec<AttackSet>,
    pub watchlist: Watchlist,
    pub status: Status,
    /// Verdict of the last check, on the model without the watchlist.
    pub residual: Verdict,
}

/// Rules that changed some attribute along the trace: each one won priority
/// for its attribute, was not overridden by the attacker or environment, and
/// wrote a value different from the current one. Only rules that can
/// influence the property are kept.
pub fn effective_rules(model: &ModelSpec, trace: &Trace, mode: Mode, attacker: bool) -> BTreeSet<String> {
    let cm = CompiledModel::new(model);
    let mut out = BTreeSet::new();
    let lanes: Vec<Vec<Vec<u16>>> = trace
        .steps
        .iter()
        .map(|s| {
            let mut v = vec![cm.encode(&s.state)];
            if let Some(r) = &s.right {
                v.push(cm.encode(r));
            }
            v
        })
        .collect();
    for w in lanes.windows(2) {
        for s in &w[0] {
            let mut claimed = vec![false; cm.len()];
            for r in cm.satisfied(s) {
                for &(a, v) in &cm.rules[r].assign {
                    if claimed[a] {
                        continue;
                    }
                    claimed[a] = true;
                    if !cm.is_free(a, attacker) && s[a] != v {
                        out.insert(cm.rules[r].id.clone());
                    }
                }
            }
        }
    }
    let cone = property_cone(model, mode);
    out.retain(|r| cone.contains(r));
    out
}

/// Rules writing an attribute the property depends on.
fn property_cone(model: &ModelSpec, mode: Mode) -> BTreeSet<String> {
    let seeds: BTreeSet<String> = match mode {
        Mode::Escalation => model
            .escalation_policies()
            .flat_map(|p| p.attributes().into_iter().map(String::from).collect::<Vec<_>>())
            .collect(),
        Mode::Privacy => model.attributes.iter().filter(|a| a.label == Label::Public).map(|a| a.name.clone()).collect(),
    };
    let bt = backtrace(&build_dependency_graph(model), &seeds);
    model
        .rules
        .iter()
        .filter(|r| r.action.iter().any(|(a, _)| bt.attributes.contains(a)))
        .map(|r| r.id.clone())
        .collect()
}

/// Classic greedy hitting set; ties go to the rule with the lowest priority
/// index in `model`.
pub fn greedy_watchlist(sets: &[BTreeSet<String>], model: &ModelSpec) -> Watchlist {
    let priority = |id: &str| model.rule(id).map_or(usize::MAX, |r| r.priority);
    let mut hit = vec![false; sets.len()];
    let mut wl = Watchlist::default();
    while hit.iter().any(|h| !h) {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, s) in sets.iter().enumerate() {
            if !hit[i] {
                for r in s {
                    *counts.entry(r.as_str()).or_default() += 1;
                }
            }
        }
        let Some((&best, _)) = counts
            .iter()
            .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| priority(b).cmp(&priority(a))).then_with(|| b.cmp(a)))
        else {
            // only empty sets remain
            break;
        };
        let covered: Vec<usize> = (0..sets.len()).filter(|&i| sets[i].contains(best)).collect();
        for &i in &covered {
            hit[i] = true;
        }
        wl.rules.push(best.to_string());
        wl.blocks.insert(best.to_string(), covered);
    }
    wl
}

/// Smallest hitting set by exhaustive search over subsets of the rules that
/// occur in `sets`, smallest first. Meant for small instances.
pub fn exact_min_hitting_set(sets: &[BTreeSet<String>]) -> Option<BTreeSet<String>> {
    let universe: Vec<&String> = sets.iter().flatten().collect::<BTreeSet<_>>().into_iter().collect();
    assert!(universe.len() <= 24, "exhaustive hitting set is limited to 24 rules");
    let n = universe.len();
    let mut best: Option<u32> = None;
    for mask in 0u32..(1u32 << n) {
        if best.is_some_and(|b| mask.count_ones() >= b.count_ones()) {
            continue;
        }
        let hits = sets.iter().all(|s| (0..n).any(|i| mask & (1 << i) != 0 && s.contains(universe[i])));
        if hits {
            best = Some(mask);
        }
    }
    best.map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| universe[i].clone()).collect())
}

/// Collects attack rule sets until the model minus the greedy hitting set
/// of the collected sets is secure, or `limit` sets have been collected.
pub fn mitigate(model: &ModelSpec, opts: &CheckOptions, limit: usize) -> Result<Mitigation, CheckError> {
    if limit == 0 {
        return Err(CheckError::Config("attack limit must be at least 1".into()));
    }
    let mut attacks: Vec<AttackSet> = Vec::new();
    let mut watchlist = Watchlist::default();
    loop {
        let removed: BTreeSet<String> = watchlist.rules.iter().cloned().collect();
        let residual = model.without_rules(&removed);
        let outcome = run_check(&residual, opts)?;
        let status = match &outcome.verdict {
            Verdict::Secure => Some(Status::Secure),
            Verdict::Unknown(_) => Some(Status::Unknown),
            Verdict::Attack(_) if attacks.len() >= limit => Some(Status::Incomplete),
            Verdict::Attack(_) => None,
        };
        if let Some(status) = status {
            return Ok(Mitigation { attacks, watchlist, status, residual: outcome.verdict });
        }
        let Verdict::Attack(trace) = outcome.verdict else { unreachable!() };
        let rules = effective_rules(&residual, &trace, opts.mode, opts.attacker_enabled);
        debug!(attack = attacks.len(), rules = ?rules, "collected attack");
        if rules.is_empty() {
            attacks.push(AttackSet { rules, trace: trace.clone() });
            return Ok(Mitigation {
                attacks,
                watchlist,
                status: Status::Unmitigable,
                residual: Verdict::Attack(trace),
            });
        }
        attacks.push(AttackSet { rules, trace });
        let sets: Vec<BTreeSet<String>> = attacks.iter().map(|a| a.rules.clone()).collect();
        watchlist = greedy_watchlist(&sets, model);
    }
}

/// The rule sets of [`mitigate`]'s collected attacks.
pub fn enumerate_attacks(
    model: &ModelSpec,
    opts: &CheckOptions,
    limit: usize,
) -> Result<(Vec<BTreeSet<String>>, bool), CheckError> {
    let m = mitigate(model, opts, limit)?;
    let complete = m.status == Status::Secure;
    Ok((m.attacks.into_iter().map(|a| a.rules).collect(), complete))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn greedy_examples() {
        let m = fixtures::smart_home();
        assert_eq!(greedy_watchlist(&[set(&["R2"]), set(&["R2", "R5"])], &m).rules, ["R2"]);
        assert_eq!(greedy_watchlist(&[set(&["R1"]), set(&["R3"])], &m).rules, ["R1", "R3"]);
        // tie between R5 and R2 goes to the earlier rule
        assert_eq!(greedy_watchlist(&[set(&["R5", "R2"])], &m).rules, ["R2"]);
    }

    #[test]
    fn exact_search() {
        let sets = [set(&["a", "b"]), set(&["b", "c"]), set(&["c", "d"])];
        assert_eq!(exact_min_hitting_set(&sets).unwrap().len(), 2);
        assert_eq!(exact_min_hitting_set(&[]).unwrap(), BTreeSet::new());
    }

    #[test]
    fn smart_home_watchlist() {
        let m = fixtures::smart_home();
        let r = mitigate(&m, &CheckOptions::default(), 20).unwrap();
        assert_eq!(r.status, Status::Secure);
        assert!(!r.watchlist.rules.is_empty());
        let removed: BTreeSet<String> = r.watchlist.rules.iter().cloned().collect();
        let again = run_check(&m.without_rules(&removed), &CheckOptions::default()).unwrap();
        assert!(again.verdict.is_secure());
    }

    #[test]
    fn secure_model_needs_nothing() {
        let r = mitigate(&fixtures::smart_home_closed(), &CheckOptions::default(), 5).unwrap();
        assert!(r.attacks.is_empty());
        assert!(r.watchlist.rules.is_empty());
        assert_eq!(r.status, Status::Secure);
    }
}
