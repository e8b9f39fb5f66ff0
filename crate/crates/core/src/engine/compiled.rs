use crate::model::{Label, ModelSpec, State, TriggerExpr, Value, ValueDomain};

/// Trigger compiled to per-attribute membership masks over value indices.
#[derive(Debug, Clone)]
pub enum Cond {
    In { attr: usize, allowed: Vec<bool> },
    And(Vec<Cond>),
    Or(Vec<Cond>),
    Not(Box<Cond>),
}

impl Cond {
    fn compile(model: &ModelSpec, expr: &TriggerExpr) -> Cond {
        match expr {
            TriggerExpr::Atom(a) => {
                let attr = model.index_of(&a.attr).expect("validated");
                let allowed = model.attributes[attr].domain.values().iter().map(|v| a.holds(v)).collect();
                Cond::In { attr, allowed }
            }
            TriggerExpr::And(xs) => Cond::And(xs.iter().map(|x| Cond::compile(model, x)).collect()),
            TriggerExpr::Or(xs) => Cond::Or(xs.iter().map(|x| Cond::compile(model, x)).collect()),
            TriggerExpr::Not(x) => Cond::Not(Box::new(Cond::compile(model, x))),
        }
    }

    #[inline]
    pub fn eval(&self, s: &[u16]) -> bool {
        match self {
            Cond::In { attr, allowed } => allowed[s[*attr] as usize],
            Cond::And(xs) => xs.iter().all(|x| x.eval(s)),
            Cond::Or(xs) => xs.iter().any(|x| x.eval(s)),
            Cond::Not(x) => !x.eval(s),
        }
    }

    pub fn reads(&self, out: &mut Vec<usize>) {
        match self {
            Cond::In { attr, .. } => {
                if !out.contains(attr) {
                    out.push(*attr)
                }
            }
            Cond::And(xs) | Cond::Or(xs) => xs.iter().for_each(|x| x.reads(out)),
            Cond::Not(x) => x.reads(out),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub id: String,
    pub trigger: Cond,
    pub assign: Vec<(usize, u16)>,
    /// Attributes read by the trigger.
    pub reads: Vec<usize>,
}

/// Index-based form of a model. Rules are stored in priority order, so the
/// first satisfied rule writing an attribute is the one that wins.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub names: Vec<String>,
    pub domains: Vec<ValueDomain>,
    pub rules: Vec<CompiledRule>,
    pub initial: Vec<u16>,
    pub vulnerable: Vec<bool>,
    pub sensor: Vec<bool>,
    /// Value indices inside each attribute's window (whole domain when absent).
    pub window: Vec<Vec<u16>>,
    pub labels: Vec<Label>,
    /// Disjunction of the escalation predicates, if any.
    pub forbidden: Option<Cond>,
}

impl CompiledModel {
    pub fn new(model: &ModelSpec) -> CompiledModel {
        let mut order: Vec<usize> = (0..model.rules.len()).collect();
        order.sort_by_key(|&i| (model.rules[i].priority, i));
        let rules = order
            .into_iter()
            .map(|i| {
                let r = &model.rules[i];
                let trigger = Cond::compile(model, &r.trigger);
                let mut reads = Vec::new();
                trigger.reads(&mut reads);
                let assign = r
                    .action
                    .iter()
                    .map(|(a, v)| {
                        let idx = model.index_of(a).expect("validated");
                        (idx, model.attributes[idx].domain.index_of(v).expect("validated") as u16)
                    })
                    .collect();
                CompiledRule { id: r.id.clone(), trigger, assign, reads }
            })
            .collect();
        let attrs = &model.attributes;
        CompiledModel {
            names: attrs.iter().map(|a| a.name.clone()).collect(),
            domains: attrs.iter().map(|a| a.domain.clone()).collect(),
            rules,
            initial: attrs.iter().map(|a| a.domain.index_of(&a.initial).expect("validated") as u16).collect(),
            vulnerable: attrs.iter().map(|a| a.vulnerable).collect(),
            sensor: attrs.iter().map(|a| a.is_sensor()).collect(),
            window: attrs
                .iter()
                .map(|a| {
                    (0..a.domain.size()).filter(|&i| a.in_window(&a.domain.value_at(i))).map(|i| i as u16).collect()
                })
                .collect(),
            labels: attrs.iter().map(|a| a.label).collect(),
            forbidden: model.combined_escalation().map(|e| Cond::compile(model, &e)),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn size(&self, attr: usize) -> usize {
        self.domains[attr].size()
    }

    /// Values the next state may hold regardless of the current one, or
    /// `None` when the attribute is driven by rules.
    pub fn free_values(&self, attr: usize, attacker: bool) -> Option<Vec<u16>> {
        if self.vulnerable[attr] && attacker {
            Some((0..self.size(attr) as u16).collect())
        } else if self.sensor[attr] {
            Some(self.window[attr].clone())
        } else {
            None
        }
    }

    pub fn is_free(&self, attr: usize, attacker: bool) -> bool {
        (self.vulnerable[attr] && attacker) || self.sensor[attr]
    }

    pub fn encode(&self, s: &State) -> Vec<u16> {
        s.0.iter().zip(&self.domains).map(|(v, d)| d.index_of(v).expect("value in domain") as u16).collect()
    }

    pub fn decode(&self, s: &[u16]) -> State {
        State(s.iter().zip(&self.domains).map(|(&i, d)| d.value_at(i as usize)).collect())
    }

    pub fn value(&self, attr: usize, idx: u16) -> Value {
        self.domains[attr].value_at(idx as usize)
    }

    /// Indices of the satisfied rules, in priority order.
    pub fn satisfied(&self, s: &[u16]) -> Vec<usize> {
        (0..self.rules.len()).filter(|&r| self.rules[r].trigger.eval(s)).collect()
    }

    /// Resolved assignments of the satisfied rules: the first rule writing an
    /// attribute wins.
    pub fn fired_rules(&self, s: &[u16]) -> Vec<(usize, u16)> {
        let mut out: Vec<(usize, u16)> = Vec::new();
        for r in self.satisfied(s) {
            for &(a, v) in &self.rules[r].assign {
                if !out.iter().any(|(b, _)| *b == a) {
                    out.push((a, v));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The rule-determined part of the successor: frame values overwritten
    /// by resolved assignments. Free attributes keep their current value.
    pub fn rule_step(&self, s: &[u16]) -> Vec<u16> {
        let mut next = s.to_vec();
        for (a, v) in self.fired_rules(s) {
            next[a] = v;
        }
        next
    }

    /// Every successor of `s`, enumerated explicitly.
    pub fn successors(&self, s: &[u16], attacker: bool) -> Vec<Vec<u16>> {
        let base = self.det_part(s, attacker);
        let free: Vec<(usize, Vec<u16>)> =
            (0..self.len()).filter_map(|a| self.free_values(a, attacker).map(|v| (a, v))).collect();
        let mut out = Vec::new();
        for_each_choice(&free, |choice| {
            let mut t = base.clone();
            for (k, (a, _)) in free.iter().enumerate() {
                t[*a] = choice[k];
            }
            out.push(t);
        });
        out
    }

    /// Synchronized successors of a pair of states: both copies receive the
    /// same free choices.
    pub fn product_successors(&self, l: &[u16], r: &[u16], attacker: bool) -> Vec<(Vec<u16>, Vec<u16>)> {
        let (bl, br) = (self.det_part(l, attacker), self.det_part(r, attacker));
        let free: Vec<(usize, Vec<u16>)> =
            (0..self.len()).filter_map(|a| self.free_values(a, attacker).map(|v| (a, v))).collect();
        let mut out = Vec::new();
        for_each_choice(&free, |choice| {
            let (mut tl, mut tr) = (bl.clone(), br.clone());
            for (k, (a, _)) in free.iter().enumerate() {
                tl[*a] = choice[k];
                tr[*a] = choice[k];
            }
            out.push((tl, tr));
        });
        out
    }

    /// Number of successors `successors` would produce.
    pub fn branching(&self, attacker: bool) -> u128 {
        (0..self.len())
            .filter_map(|a| self.free_values(a, attacker))
            .fold(1u128, |acc, v| acc.saturating_mul(v.len() as u128))
    }

    fn det_part(&self, s: &[u16], attacker: bool) -> Vec<u16> {
        let mut t = self.rule_step(s);
        for (a, v) in t.iter_mut().enumerate() {
            if self.is_free(a, attacker) {
                *v = s[a];
            }
        }
        t
    }

    pub fn is_successor(&self, s: &[u16], t: &[u16], attacker: bool) -> bool {
        let det = self.rule_step(s);
        (0..self.len()).all(|a| match self.free_values(a, attacker) {
            Some(vals) => vals.contains(&t[a]),
            None => det[a] == t[a],
        })
    }

    pub fn is_product_successor(&self, s: (&[u16], &[u16]), t: (&[u16], &[u16]), attacker: bool) -> bool {
        self.is_successor(s.0, t.0, attacker)
            && self.is_successor(s.1, t.1, attacker)
            && (0..self.len()).all(|a| !self.is_free(a, attacker) || t.0[a] == t.1[a])
    }

    pub fn violates(&self, s: &[u16]) -> bool {
        self.forbidden.as_ref().is_some_and(|c| c.eval(s))
    }

    /// Public attributes that differ between the two copies.
    pub fn public_difference(&self, l: &[u16], r: &[u16]) -> Vec<usize> {
        (0..self.len()).filter(|&a| self.labels[a] == Label::Public && l[a] != r[a]).collect()
    }
}

/// Calls `f` with every element of the cartesian product of the value
/// lists, last position varying fastest.
pub fn for_each_choice(sets: &[(usize, Vec<u16>)], mut f: impl FnMut(&[u16])) {
    if sets.iter().any(|(_, v)| v.is_empty()) {
        return;
    }
    let mut pos = vec![0usize; sets.len()];
    let mut cur: Vec<u16> = sets.iter().map(|(_, v)| v[0]).collect();
    loop {
        f(&cur);
        let mut k = sets.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            pos[k] += 1;
            if pos[k] < sets[k].1.len() {
                cur[k] = sets[k].1[pos[k]];
                break;
            }
            pos[k] = 0;
            cur[k] = sets[k].1[0];
        }
    }
}
