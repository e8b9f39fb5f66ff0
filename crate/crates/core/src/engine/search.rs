//! Breadth-first reachability.
//!
//! Attributes whose next value does not depend on the current state (secure
//! sensors and, with the attacker enabled, vulnerable attributes) are
//! "free". After the first step every combination of free values is
//! reachable together with each reachable configuration of the remaining
//! attributes, so the search stores only the latter and enumerates free
//! values while expanding a node. Only free attributes read by some trigger
//! or by the property are enumerated; the rest cannot matter.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::compiled::{for_each_choice, CompiledModel};
use super::trace::{Trace, Verdict};
use crate::error::CheckError;
use crate::model::Label;

pub const BUDGET_EXHAUSTED: &str = "budget-exhausted";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Escalation,
    Privacy,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: Mode,
    pub attacker_enabled: bool,
    /// Upper bound on stored search nodes.
    pub max_states: usize,
    pub time_budget: Option<Duration>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { mode: Mode::Escalation, attacker_enabled: true, max_states: 5_000_000, time_budget: None }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub verdict: Verdict,
    /// Search nodes stored, initial states included.
    pub states: usize,
}

pub fn check(cm: &CompiledModel, cfg: &EngineConfig) -> Result<SearchResult, CheckError> {
    match cfg.mode {
        Mode::Escalation => Ok(check_escalation(cm, cfg)),
        Mode::Privacy => check_privacy(cm, cfg),
    }
}

/// Searches for a reachable state satisfying the forbidden predicate.
/// A model without escalation policy is trivially secure.
pub fn check_escalation(cm: &CompiledModel, cfg: &EngineConfig) -> SearchResult {
    if cm.forbidden.is_none() {
        return SearchResult { verdict: Verdict::Secure, states: 0 };
    }
    Search::new(cm, cfg, 1).run(vec![vec![cm.initial.clone()]])
}

/// Searches the product of the model with itself for a pair of runs that
/// agree on everything but private data and end with different public values.
pub fn check_privacy(cm: &CompiledModel, cfg: &EngineConfig) -> Result<SearchResult, CheckError> {
    for (label, what) in [(Label::Private, "private"), (Label::Public, "public")] {
        if !cm.labels.contains(&label) {
            return Err(CheckError::Config(format!("privacy check needs at least one {what} attribute")));
        }
    }
    let count = initial_pair_count(cm);
    if count > cfg.max_states as u128 {
        return Ok(SearchResult { verdict: Verdict::Unknown(BUDGET_EXHAUSTED.into()), states: 0 });
    }
    let roots = initial_pairs(cm).into_iter().map(|(l, r)| vec![l, r]).collect();
    Ok(Search::new(cm, cfg, 2).run(roots))
}

/// Product of the private attributes' domain sizes.
pub fn initial_pair_count(cm: &CompiledModel) -> u128 {
    (0..cm.len())
        .filter(|&a| cm.labels[a] == Label::Private)
        .fold(1u128, |acc, a| acc.saturating_mul(cm.size(a) as u128))
}

/// Initial states of the product machine: the concrete initial state paired
/// with every state that differs from it only in private attributes
/// (including itself).
pub fn initial_pairs(cm: &CompiledModel) -> Vec<(Vec<u16>, Vec<u16>)> {
    let private: Vec<(usize, Vec<u16>)> = (0..cm.len())
        .filter(|&a| cm.labels[a] == Label::Private)
        .map(|a| (a, (0..cm.size(a) as u16).collect()))
        .collect();
    let mut out = Vec::new();
    for_each_choice(&private, |choice| {
        let mut r = cm.initial.clone();
        for (k, (a, _)) in private.iter().enumerate() {
            r[*a] = choice[k];
        }
        out.push((cm.initial.clone(), r));
    });
    out
}

#[derive(Clone, Copy)]
enum Parent {
    Root(u32),
    Node(u32),
}

struct NodeInfo {
    parent: Parent,
    /// Enumerated free values of the parent state that produced this node.
    sigma: Option<Box<[u16]>>,
}

struct Search<'a> {
    cm: &'a CompiledModel,
    cfg: &'a EngineConfig,
    lanes: usize,
    free: Vec<usize>,
    free_sets: Vec<Vec<u16>>,
    /// Positions in `free` that are enumerated.
    varied: Vec<usize>,
    det: Vec<usize>,
    static_rules: Vec<usize>,
    dynamic_rules: Vec<usize>,
    /// Per det position, `(rule, value)` writers in priority order.
    writers: Vec<Vec<(usize, u16)>>,
    policy_free: bool,
    det_public: Vec<usize>,
    keys: HashMap<Box<[u16]>, u32>,
    flat: Vec<u16>,
    nodes: Vec<NodeInfo>,
    roots: Vec<Vec<Vec<u16>>>,
    start: Instant,
    ticks: u64,
}

impl<'a> Search<'a> {
    fn new(cm: &'a CompiledModel, cfg: &'a EngineConfig, lanes: usize) -> Self {
        let attacker = cfg.attacker_enabled;
        let mut free = Vec::new();
        let mut free_sets = Vec::new();
        let mut det = Vec::new();
        for a in 0..cm.len() {
            match cm.free_values(a, attacker) {
                Some(mut v) => {
                    // try the current reading first so traces move as little as possible
                    if let Some(i) = v.iter().position(|&x| x == cm.initial[a]) {
                        v[..=i].rotate_right(1);
                    }
                    free.push(a);
                    free_sets.push(v);
                }
                None => det.push(a),
            }
        }
        let mut policy_reads = Vec::new();
        if lanes == 1 {
            if let Some(f) = &cm.forbidden {
                f.reads(&mut policy_reads);
            }
        }
        let is_free = |a: &usize| cm.is_free(*a, attacker);
        let mut varied = Vec::new();
        for (k, a) in free.iter().enumerate() {
            let read = cm.rules.iter().any(|r| r.reads.contains(a)) || policy_reads.contains(a);
            if read {
                varied.push(k);
            }
        }
        let (dynamic_rules, static_rules): (Vec<usize>, Vec<usize>) =
            (0..cm.rules.len()).partition(|&r| cm.rules[r].reads.iter().any(is_free));
        let mut writers = vec![Vec::new(); det.len()];
        for (r, rule) in cm.rules.iter().enumerate() {
            for &(a, v) in &rule.assign {
                if let Some(j) = det.iter().position(|&d| d == a) {
                    writers[j].push((r, v));
                }
            }
        }
        let det_public = (0..det.len()).filter(|&j| cm.labels[det[j]] == Label::Public).collect();
        Search {
            cm,
            cfg,
            lanes,
            policy_free: policy_reads.iter().any(is_free),
            free,
            free_sets,
            varied,
            det,
            static_rules,
            dynamic_rules,
            writers,
            det_public,
            keys: HashMap::new(),
            flat: Vec::new(),
            nodes: Vec::new(),
            roots: Vec::new(),
            start: Instant::now(),
            ticks: 0,
        }
    }

    fn stored(&self) -> usize {
        self.roots.len() + self.nodes.len()
    }

    fn out_of_time(&mut self) -> bool {
        self.ticks += 1;
        if self.ticks & 1023 != 0 {
            return false;
        }
        self.cfg.time_budget.is_some_and(|b| self.start.elapsed() > b)
    }

    fn result(&self, verdict: Verdict) -> SearchResult {
        SearchResult { verdict, states: self.stored() }
    }

    fn run(mut self, roots: Vec<Vec<Vec<u16>>>) -> SearchResult {
        let cm = self.cm;
        self.roots = roots;
        let mut truncated = false;
        if self.lanes == 1 && cm.violates(&self.roots[0][0]) {
            let trace = Trace::from_states(cm, self.cfg.attacker_enabled, &[(self.roots[0][0].clone(), None)]);
            return self.result(Verdict::Attack(trace));
        }
        for i in 0..self.roots.len() {
            let key: Vec<u16> = self.roots[i]
                .iter()
                .flat_map(|s| {
                    let next = cm.rule_step(s);
                    self.det.iter().map(move |&a| next[a]).collect::<Vec<_>>()
                })
                .collect();
            truncated |= !self.insert(key, Parent::Root(i as u32), None);
        }

        let d = self.det.len();
        let width = d * self.lanes;
        let mut bufs = vec![vec![0u16; cm.len()]; self.lanes];
        let mut fired = vec![false; cm.rules.len()];
        let mut key = vec![0u16; width];
        let mut n = 0usize;
        while n < self.nodes.len() {
            let base = n * width;
            for (lane, buf) in bufs.iter_mut().enumerate() {
                for (j, &a) in self.det.iter().enumerate() {
                    buf[a] = self.flat[base + lane * d + j];
                }
                for (k, &a) in self.free.iter().enumerate() {
                    buf[a] = self.free_sets[k][0];
                }
            }
            if self.lanes == 2 {
                if self.det_public.iter().any(|&j| self.flat[base + j] != self.flat[base + d + j]) {
                    let trace = self.trace(n, None);
                    return self.result(Verdict::Attack(trace));
                }
            } else if !self.policy_free && cm.violates(&bufs[0]) {
                let trace = self.trace(n, None);
                return self.result(Verdict::Attack(trace));
            }
            let mut static_fired: Vec<Vec<bool>> = Vec::with_capacity(self.lanes);
            for buf in &bufs {
                let mut f = vec![false; cm.rules.len()];
                for &r in &self.static_rules {
                    f[r] = cm.rules[r].trigger.eval(buf);
                }
                static_fired.push(f);
            }

            let sets: Vec<(usize, Vec<u16>)> = self.varied.iter().map(|&k| (k, self.free_sets[k].clone())).collect();
            let mut odo = Odometer::new(&sets);
            while let Some(sigma) = odo.current() {
                if self.out_of_time() {
                    return self.result(Verdict::Unknown(BUDGET_EXHAUSTED.into()));
                }
                for buf in bufs.iter_mut() {
                    for (i, &k) in self.varied.iter().enumerate() {
                        buf[self.free[k]] = sigma[i];
                    }
                }
                if self.lanes == 1 && self.policy_free && cm.violates(&bufs[0]) {
                    let sigma: Box<[u16]> = sigma.into();
                    let trace = self.trace(n, Some(&sigma));
                    return self.result(Verdict::Attack(trace));
                }
                for (lane, buf) in bufs.iter().enumerate() {
                    fired.copy_from_slice(&static_fired[lane]);
                    for &r in &self.dynamic_rules {
                        fired[r] = cm.rules[r].trigger.eval(buf);
                    }
                    for (j, ws) in self.writers.iter().enumerate() {
                        let cur = self.flat[base + lane * d + j];
                        key[lane * d + j] = ws.iter().find(|(r, _)| fired[*r]).map_or(cur, |&(_, v)| v);
                    }
                }
                if !self.keys.contains_key(key.as_slice()) {
                    let sigma = (!sigma.is_empty()).then(|| Box::from(sigma));
                    truncated |= !self.insert(key.clone(), Parent::Node(n as u32), sigma);
                }
                odo.advance();
            }
            n += 1;
        }
        if truncated {
            self.result(Verdict::Unknown(BUDGET_EXHAUSTED.into()))
        } else {
            self.result(Verdict::Secure)
        }
    }

    /// Stores a new node; returns false when the state budget is spent.
    fn insert(&mut self, key: Vec<u16>, parent: Parent, sigma: Option<Box<[u16]>>) -> bool {
        if self.keys.contains_key(key.as_slice()) {
            return true;
        }
        if self.stored() >= self.cfg.max_states {
            return false;
        }
        let id = self.nodes.len() as u32;
        self.flat.extend_from_slice(&key);
        self.keys.insert(key.into_boxed_slice(), id);
        self.nodes.push(NodeInfo { parent, sigma });
        true
    }

    /// Reconstructs concrete states from the root to node `n`; `witness`
    /// holds the enumerated free values of the final state.
    fn trace(&self, n: usize, witness: Option<&[u16]>) -> Trace {
        let cm = self.cm;
        let d = self.det.len();
        let width = d * self.lanes;
        let mut path = vec![n];
        let root = loop {
            match self.nodes[*path.last().unwrap()].parent {
                Parent::Node(p) => path.push(p as usize),
                Parent::Root(r) => break r as usize,
            }
        };
        path.reverse();
        let mut states: Vec<Vec<Vec<u16>>> = vec![self.roots[root].clone()];
        for (i, &node) in path.iter().enumerate() {
            let sigma: Option<&[u16]> = match path.get(i + 1) {
                Some(&child) => self.nodes[child].sigma.as_deref(),
                None => witness,
            };
            let prev = states.last().unwrap();
            let mut lanes = Vec::with_capacity(self.lanes);
            for lane in 0..self.lanes {
                let mut s = vec![0u16; cm.len()];
                for (j, &a) in self.det.iter().enumerate() {
                    s[a] = self.flat[node * width + lane * d + j];
                }
                for (k, &a) in self.free.iter().enumerate() {
                    let set = &self.free_sets[k];
                    let carried = if set.contains(&prev[0][a]) { prev[0][a] } else { set[0] };
                    s[a] = match (sigma, self.varied.iter().position(|&v| v == k)) {
                        (Some(sig), Some(i)) => sig[i],
                        _ => carried,
                    };
                }
                lanes.push(s);
            }
            states.push(lanes);
        }
        let pairs: Vec<(Vec<u16>, Option<Vec<u16>>)> = states
            .into_iter()
            .map(|mut l| {
                let right = (l.len() == 2).then(|| l.pop().unwrap());
                (l.pop().unwrap(), right)
            })
            .collect();
        Trace::from_states(cm, self.cfg.attacker_enabled, &pairs)
    }
}

/// Mixed-radix counter over value lists. An empty list of positions yields
/// exactly one (empty) choice.
struct Odometer<'s> {
    sets: &'s [(usize, Vec<u16>)],
    pos: Vec<usize>,
    cur: Vec<u16>,
    done: bool,
}

impl<'s> Odometer<'s> {
    fn new(sets: &'s [(usize, Vec<u16>)]) -> Self {
        let done = sets.iter().any(|(_, v)| v.is_empty());
        let cur = if done { Vec::new() } else { sets.iter().map(|(_, v)| v[0]).collect() };
        Odometer { sets, pos: vec![0; sets.len()], cur, done }
    }

    fn current(&self) -> Option<&[u16]> {
        (!self.done).then_some(self.cur.as_slice())
    }

    fn advance(&mut self) {
        let mut k = self.sets.len();
        loop {
            if k == 0 {
                self.done = true;
                return;
            }
            k -= 1;
            self.pos[k] += 1;
            if self.pos[k] < self.sets[k].1.len() {
                self.cur[k] = self.sets[k].1[self.pos[k]];
                return;
            }
            self.pos[k] = 0;
            self.cur[k] = self.sets[k].1[0];
        }
    }
}
