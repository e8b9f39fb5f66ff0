//! Group, prune, check, and map counterexamples back to the input model.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use tracing::debug;

use crate::engine::{self, CompiledModel, EngineConfig, Mode, Trace, Verdict};
use crate::error::CheckError;
use crate::grouping::{group_model, state_space_size, GroupedDomain, GroupingTarget};
use crate::model::{detect_conflicts, ModelSpec, Policy, TriggerExpr, Value};
use crate::oracle::{self, OracleConfig};
use crate::pruning::{prune_for_escalation, prune_for_privacy, PruneResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Fast,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    GroupThenPrune,
    PruneThenGroup,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub mode: Mode,
    pub group: bool,
    pub prune: bool,
    pub order: Order,
    pub engine: EngineKind,
    pub attacker_enabled: bool,
    pub max_states: usize,
    pub time_budget: Option<Duration>,
    pub oracle_cap: u128,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            mode: Mode::Escalation,
            group: true,
            prune: true,
            order: Order::GroupThenPrune,
            engine: EngineKind::Fast,
            attacker_enabled: true,
            max_states: EngineConfig::default().max_states,
            time_budget: None,
            oracle_cap: oracle::DEFAULT_CAP,
        }
    }
}

impl CheckOptions {
    pub fn unoptimized(mut self) -> Self {
        self.group = false;
        self.prune = false;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub attributes_before: usize,
    pub rules_before: usize,
    pub attributes_after: usize,
    pub rules_after: usize,
    /// Product of domain sizes before and after reduction.
    pub state_space_before: u128,
    pub state_space_after: u128,
    pub states_explored: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Timings {
    pub grouping: Duration,
    pub pruning: Duration,
    pub checking: Duration,
    pub lifting: Duration,
}

impl Timings {
    pub fn total(&self) -> Duration {
        self.grouping + self.pruning + self.checking + self.lifting
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: Verdict,
    pub stats: Stats,
    pub timings: Timings,
    pub warnings: Vec<String>,
    pub dropped_attributes: Vec<String>,
    pub dropped_rules: Vec<String>,
}

/// Runs the configured reductions and the selected engine. Attack traces are
/// expressed over the input model and have been replayed against it.
pub fn run_check(model: &ModelSpec, opts: &CheckOptions) -> Result<Outcome, CheckError> {
    let mut warnings: Vec<String> = detect_conflicts(&model.rules)
        .into_iter()
        .map(|c| format!("rules {} and {} conflict on {}; {} takes precedence", c.first, c.second, c.attr, c.first))
        .collect();
    if opts.prune {
        warnings
            .push("pruning follows rule dependencies only; physical coupling between devices is not modeled".into());
    }
    let mut timings = Timings::default();
    let mut stats = Stats {
        attributes_before: model.attributes.len(),
        rules_before: model.rules.len(),
        state_space_before: state_space_size(model),
        ..Stats::default()
    };

    let policy = match opts.mode {
        Mode::Escalation => Some(
            model.combined_escalation().ok_or_else(|| CheckError::Config("model has no escalation policy".into()))?,
        ),
        Mode::Privacy => {
            crate::pruning::check_labels(model)?;
            None
        }
    };
    let mut current = ModelSpec {
        policies: vec![match &policy {
            Some(p) => Policy::Escalation { never: p.clone() },
            None => Policy::Privacy,
        }],
        ..model.clone()
    };
    let mut groups: Option<Vec<GroupedDomain>> = None;
    let mut dropped_attributes = Vec::new();
    let mut dropped_rules = Vec::new();

    let steps: &[bool] = match opts.order {
        Order::GroupThenPrune => &[true, false],
        Order::PruneThenGroup => &[false, true],
    };
    for &is_group in steps {
        if is_group && opts.group {
            let t = Instant::now();
            let target_policy = current_policy(&current);
            let target = match &target_policy {
                Some(p) => GroupingTarget::Escalation(p),
                None => GroupingTarget::Privacy,
            };
            let g = group_model(&current, target)?;
            current = g.model;
            groups = Some(g.domains);
            timings.grouping = t.elapsed();
        } else if !is_group && opts.prune {
            let t = Instant::now();
            let pruned = match current_policy(&current) {
                Some(p) => prune_for_escalation(&current, &p),
                None => match prune_for_privacy(&current)? {
                    PruneResult::Reduced(p) => p,
                    PruneResult::TriviallySecure => {
                        timings.pruning = t.elapsed();
                        warnings.push("no public attribute depends on a private one".into());
                        stats.attributes_after = 0;
                        stats.rules_after = 0;
                        stats.state_space_after = 1;
                        return Ok(Outcome {
                            verdict: Verdict::Secure,
                            stats,
                            timings,
                            warnings,
                            dropped_attributes: model.attributes.iter().map(|a| a.name.clone()).collect(),
                            dropped_rules: model.rules.iter().map(|r| r.id.clone()).collect(),
                        });
                    }
                },
            };
            current = pruned.model;
            dropped_attributes = pruned.dropped_attributes;
            dropped_rules = pruned.dropped_rules;
            timings.pruning = t.elapsed();
        }
    }
    stats.attributes_after = current.attributes.len();
    stats.rules_after = current.rules.len();
    stats.state_space_after = state_space_size(&current);
    debug!(attributes = stats.attributes_after, rules = stats.rules_after, "reduced model ready");

    let t = Instant::now();
    let (verdict, explored) = match opts.engine {
        EngineKind::Fast => {
            let cm = CompiledModel::new(&current);
            let cfg = EngineConfig {
                mode: opts.mode,
                attacker_enabled: opts.attacker_enabled,
                max_states: opts.max_states,
                time_budget: opts.time_budget,
            };
            let r = engine::check(&cm, &cfg)?;
            (r.verdict, r.states)
        }
        EngineKind::Oracle => {
            let cfg = OracleConfig { cap: opts.oracle_cap, attacker_enabled: opts.attacker_enabled };
            let r = match opts.mode {
                Mode::Escalation => oracle::brute_check_escalation(&current, &cfg),
                Mode::Privacy => oracle::brute_check_privacy(&current, &cfg),
            };
            (r.verdict, r.states)
        }
    };
    timings.checking = t.elapsed();
    stats.states_explored = explored;

    let verdict = match verdict {
        Verdict::Attack(abstract_trace) => {
            let t = Instant::now();
            let lifted = lift_trace(model, &abstract_trace, groups.as_deref(), opts.attacker_enabled)?;
            let replay = match opts.mode {
                Mode::Escalation => {
                    oracle::replay_escalation(&current_with(model, &policy), &lifted, opts.attacker_enabled)
                }
                Mode::Privacy => oracle::replay_privacy(model, &lifted, opts.attacker_enabled),
            };
            replay.map_err(|e| CheckError::Internal(format!("counterexample does not replay: {e}")))?;
            timings.lifting = t.elapsed();
            Verdict::Attack(lifted)
        }
        other => other,
    };
    Ok(Outcome { verdict, stats, timings, warnings, dropped_attributes, dropped_rules })
}

fn current_policy(m: &ModelSpec) -> Option<TriggerExpr> {
    m.combined_escalation()
}

fn current_with(model: &ModelSpec, policy: &Option<TriggerExpr>) -> ModelSpec {
    match policy {
        Some(p) => ModelSpec { policies: vec![Policy::Escalation { never: p.clone() }], ..model.clone() },
        None => model.clone(),
    }
}

/// Turns a trace over a reduced model into one over `original`. Rule-driven
/// attributes are recomputed from the original rules; free attributes take
/// a concrete member of the reported group, staying put when possible.
/// Every kept attribute is checked against the reduced trace.
pub fn lift_trace(
    original: &ModelSpec,
    reduced: &Trace,
    groups: Option<&[GroupedDomain]>,
    attacker: bool,
) -> Result<Trace, CheckError> {
    let cm = CompiledModel::new(original);
    let by_name: BTreeMap<&str, &GroupedDomain> =
        groups.unwrap_or(&[]).iter().map(|g| (g.attribute.as_str(), g)).collect();
    let kept: BTreeMap<&str, usize> = reduced.attributes.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let fail = |msg: String| CheckError::Internal(format!("cannot map counterexample: {msg}"));

    // concrete value indices compatible with the reduced value of attribute `a`
    let members = |a: usize, v: &Value| -> Result<Vec<u16>, CheckError> {
        let name = cm.names[a].as_str();
        let vals: Vec<Value> = match by_name.get(name) {
            Some(g) => g
                .meta_values
                .iter()
                .find(|m| m.name == v.to_string())
                .ok_or_else(|| fail(format!("unknown group {v} for {name}")))?
                .members
                .clone(),
            None => vec![v.clone()],
        };
        Ok(vals.iter().filter_map(|x| cm.domains[a].index_of(x).map(|i| i as u16)).collect())
    };
    let reduced_value = |step: usize, right: bool, a: usize| -> Option<&Value> {
        let i = *kept.get(cm.names[a].as_str())?;
        let s = &reduced.steps[step];
        let st = if right { s.right.as_ref()? } else { &s.state };
        Some(&st.0[i])
    };

    let paired = reduced.is_paired();
    let lanes = if paired { 2 } else { 1 };
    let mut states: Vec<Vec<Vec<u16>>> = Vec::with_capacity(reduced.steps.len());

    let left0 = cm.initial.clone();
    let mut first = vec![left0.clone()];
    if paired {
        let mut r = left0.clone();
        for a in 0..cm.len() {
            if let Some(v) = reduced_value(0, true, a) {
                let opts = members(a, v)?;
                r[a] = if opts.contains(&left0[a]) {
                    left0[a]
                } else {
                    *opts.first().ok_or_else(|| fail(format!("empty group for {}", cm.names[a])))?
                };
            }
        }
        first.push(r);
    }
    states.push(first);

    for step in 1..reduced.steps.len() {
        let prev = states.last().unwrap();
        let dets: Vec<Vec<u16>> = prev.iter().map(|s| cm.rule_step(s)).collect();
        let mut next = dets.clone();
        for a in 0..cm.len() {
            if let Some(free) = cm.free_values(a, attacker) {
                let candidates: Vec<u16> = match reduced_value(step, false, a) {
                    Some(v) => members(a, v)?.into_iter().filter(|x| free.contains(x)).collect(),
                    None => free,
                };
                let pick = if candidates.contains(&prev[0][a]) {
                    prev[0][a]
                } else {
                    *candidates
                        .iter()
                        .min()
                        .ok_or_else(|| fail(format!("no admissible value for {} at step {step}", cm.names[a])))?
                };
                for s in next.iter_mut() {
                    s[a] = pick;
                }
            }
        }
        states.push(next);
    }

    for (step, lanes_states) in states.iter().enumerate() {
        for (lane, s) in lanes_states.iter().enumerate().take(lanes) {
            for (a, &x) in s.iter().enumerate() {
                if let Some(v) = reduced_value(step, lane == 1, a) {
                    if !members(a, v)?.contains(&x) {
                        return Err(fail(format!(
                            "step {step}: {} = {} does not match {v}",
                            cm.names[a],
                            cm.value(a, x)
                        )));
                    }
                }
            }
        }
    }

    let pairs: Vec<(Vec<u16>, Option<Vec<u16>>)> = states
        .into_iter()
        .map(|mut l| {
            let right = (l.len() == 2).then(|| l.pop().unwrap());
            (l.pop().unwrap(), right)
        })
        .collect();
    Ok(Trace::from_states(&cm, attacker, &pairs))
}
