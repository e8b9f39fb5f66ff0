//! Synthetic rule corpus and random small models.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::Mode;
use crate::error::GenError;
use crate::model::{AttributeDecl, CmpOp, Label, ModelSpec, Policy, Rule, TriggerExpr, Value, ValueDomain};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSpec {
    pub attributes: usize,
    pub rules: usize,
    pub seed: u64,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec { attributes: 190, rules: 1000, seed: 0x1f77 }
    }
}

fn enum_of(n: usize) -> ValueDomain {
    ValueDomain::Enum((0..n).map(|i| format!("V{i}")).collect())
}

fn random_value(rng: &mut impl Rng, d: &ValueDomain) -> Value {
    d.value_at(rng.gen_range(0..d.size()))
}

fn random_atom(rng: &mut impl Rng, a: &AttributeDecl) -> TriggerExpr {
    let v = random_value(rng, &a.domain);
    let op = if a.domain.is_int() {
        [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][rng.gen_range(0..6)]
    } else if rng.gen_bool(0.8) {
        CmpOp::Eq
    } else {
        CmpOp::Ne
    };
    TriggerExpr::atom(a.name.clone(), op, v)
}

/// A rule pool shaped like a home-automation corpus: about half the
/// attributes are sensors, most domains are two-valued, triggers mostly read
/// sensors and a fifth of them are two-atom conjunctions. Every attribute
/// is used by at least one rule.
pub fn generate_pool(spec: &PoolSpec) -> Result<ModelSpec, GenError> {
    if spec.attributes < 2 {
        return Err(GenError::Infeasible("pool needs at least two attributes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut attrs = Vec::with_capacity(spec.attributes);
    for i in 0..spec.attributes {
        let r: f64 = rng.gen();
        let domain = if r < 0.6 {
            enum_of(2)
        } else if r < 0.8 {
            enum_of(rng.gen_range(3..=5))
        } else {
            ValueDomain::IntRange { lo: 0, hi: rng.gen_range(10..=30) }
        };
        let initial = random_value(&mut rng, &domain);
        // first two fixed so both kinds exist
        let sensor = match i {
            0 => true,
            1 => false,
            _ => rng.gen_bool(0.55),
        };
        attrs.push(if sensor {
            AttributeDecl::sensor(format!("s{i:03}"), domain, initial)
        } else {
            AttributeDecl::actuator(format!("a{i:03}"), domain, initial)
        });
    }
    let sensors: Vec<usize> = (0..attrs.len()).filter(|&i| attrs[i].is_sensor()).collect();
    let actuators: Vec<usize> = (0..attrs.len()).filter(|&i| !attrs[i].is_sensor()).collect();
    let needed = sensors.len().max(actuators.len());
    if spec.rules < needed {
        return Err(GenError::Infeasible(format!("pool needs at least {needed} rules to use every attribute")));
    }

    let mut rules: Vec<Rule> = Vec::with_capacity(spec.rules);
    for k in 0..spec.rules {
        // the first rules cover every attribute once
        let src = if k < sensors.len() {
            sensors[k]
        } else if rng.gen_bool(0.9) {
            sensors[rng.gen_range(0..sensors.len())]
        } else {
            actuators[rng.gen_range(0..actuators.len())]
        };
        let dst = if k < actuators.len() { actuators[k] } else { actuators[rng.gen_range(0..actuators.len())] };
        let mut trigger = random_atom(&mut rng, &attrs[src]);
        if rng.gen_bool(0.2) {
            let other = sensors[rng.gen_range(0..sensors.len())];
            if other != src {
                trigger = TriggerExpr::And(vec![trigger, random_atom(&mut rng, &attrs[other])]);
            }
        }
        let mut action = vec![(attrs[dst].name.clone(), random_value(&mut rng, &attrs[dst].domain))];
        if rng.gen_bool(0.15) {
            let second = actuators[rng.gen_range(0..actuators.len())];
            if second != dst {
                action.push((attrs[second].name.clone(), random_value(&mut rng, &attrs[second].domain)));
            }
        }
        rules.push(Rule { id: String::new(), priority: 0, trigger, action });
    }
    // spread the covering rules through the pool
    for i in (1..rules.len()).rev() {
        let j = rng.gen_range(0..=i);
        rules.swap(i, j);
    }
    for (i, r) in rules.iter_mut().enumerate() {
        r.id = format!("P{i:04}");
        r.priority = i;
    }
    Ok(ModelSpec::new(attrs, rules, vec![])?)
}

/// Samples `n` pool rules without replacement, keeps the attributes they
/// mention, marks one of them attacker-controlled and attaches a policy that
/// can never be violated (`a = v OR a != v` always holds), so the checker has
/// to cover every reachable state.
pub fn sample_corpus(pool: &ModelSpec, n: usize, seed: u64) -> Result<ModelSpec, GenError> {
    if n > pool.rules.len() {
        return Err(GenError::Infeasible(format!("cannot sample {n} rules from a pool of {}", pool.rules.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, pool.rules.len(), n).into_vec();
    picked.sort_unstable();
    let rules: Vec<Rule> =
        picked.iter().enumerate().map(|(i, &k)| Rule { priority: i, ..pool.rules[k].clone() }).collect();
    let mut used: BTreeSet<&str> = BTreeSet::new();
    for r in &rules {
        used.extend(r.trigger.attributes());
        used.extend(r.action.iter().map(|(a, _)| a.as_str()));
    }
    if used.is_empty() {
        used.insert(&pool.attributes[rng.gen_range(0..pool.attributes.len())].name);
    }
    let mut attributes: Vec<AttributeDecl> =
        pool.attributes.iter().filter(|a| used.contains(a.name.as_str())).cloned().collect();
    let target = &attributes[rng.gen_range(0..attributes.len())];
    let v = random_value(&mut rng, &target.domain);
    let always = TriggerExpr::Or(vec![
        TriggerExpr::atom(target.name.clone(), CmpOp::Eq, v.clone()),
        TriggerExpr::atom(target.name.clone(), CmpOp::Ne, v),
    ]);
    let never = TriggerExpr::Not(Box::new(always));
    let k = rng.gen_range(0..attributes.len());
    attributes[k].vulnerable = true;
    Ok(ModelSpec::new(attributes, rules, vec![Policy::Escalation { never }])?)
}

/// Bounds for [`random_model`].
#[derive(Debug, Clone)]
pub struct RandomModelSpec {
    pub max_attributes: usize,
    pub max_domain: usize,
    pub max_rules: usize,
    /// Upper bound on the product of domain sizes.
    pub max_space: u128,
}

impl RandomModelSpec {
    pub fn for_mode(mode: Mode) -> Self {
        let max_space = match mode {
            Mode::Escalation => 1 << 16,
            // the product machine squares the space
            Mode::Privacy => 1 << 11,
        };
        RandomModelSpec { max_attributes: 8, max_domain: 6, max_rules: 15, max_space }
    }
}

fn random_expr(rng: &mut impl Rng, attrs: &[AttributeDecl], depth: usize) -> TriggerExpr {
    if depth == 0 || rng.gen_bool(0.6) {
        let i = rng.gen_range(0..attrs.len());
        return random_atom(rng, &attrs[i]);
    }
    match rng.gen_range(0..3) {
        0 => TriggerExpr::And((0..2).map(|_| random_expr(rng, attrs, depth - 1)).collect()),
        1 => TriggerExpr::Or((0..2).map(|_| random_expr(rng, attrs, depth - 1)).collect()),
        _ => TriggerExpr::Not(Box::new(random_expr(rng, attrs, depth - 1))),
    }
}

/// A small random model for differential testing. Privacy models get at
/// least one private and one public attribute.
pub fn random_model(rng: &mut impl Rng, mode: Mode, spec: &RandomModelSpec) -> ModelSpec {
    let n = rng.gen_range(2..=spec.max_attributes.max(2));
    let mut sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=spec.max_domain.max(2))).collect();
    while sizes.iter().map(|&s| s as u128).product::<u128>() > spec.max_space {
        let i = (0..n).max_by_key(|&i| sizes[i]).unwrap();
        if sizes[i] == 2 {
            break;
        }
        sizes[i] -= 1;
    }
    let mut attrs = Vec::with_capacity(n);
    for (i, &size) in sizes.iter().enumerate() {
        let domain = if rng.gen_bool(0.5) {
            enum_of(size)
        } else {
            let lo = rng.gen_range(-2..=3);
            ValueDomain::IntRange { lo, hi: lo + size as i64 - 1 }
        };
        let initial = random_value(rng, &domain);
        let sensor = i != 0 && rng.gen_bool(0.35);
        let mut a = if sensor {
            AttributeDecl::sensor(format!("x{i}"), domain.clone(), initial)
        } else {
            AttributeDecl::actuator(format!("x{i}"), domain.clone(), initial)
        };
        if sensor && rng.gen_bool(0.5) {
            a.window = Some(match &domain {
                ValueDomain::IntRange { lo, hi } => {
                    let a0 = rng.gen_range(*lo..=*hi);
                    let b0 = rng.gen_range(a0..=*hi);
                    ValueDomain::IntRange { lo: a0, hi: b0 }
                }
                ValueDomain::Enum(vals) => {
                    let keep: Vec<String> = vals.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
                    ValueDomain::Enum(if keep.is_empty() { vec![vals[0].clone()] } else { keep })
                }
            });
        }
        a.vulnerable = rng.gen_bool(0.1);
        if mode == Mode::Privacy {
            a.label = [Label::Private, Label::Public, Label::Other][rng.gen_range(0..3)];
        }
        attrs.push(a);
    }
    if mode == Mode::Privacy {
        let p = rng.gen_range(0..n);
        let mut q = rng.gen_range(0..n - 1);
        if q >= p {
            q += 1;
        }
        attrs[p].label = Label::Private;
        attrs[q].label = Label::Public;
    }
    let actuators: Vec<usize> = (0..n).filter(|&i| !attrs[i].is_sensor()).collect();
    let nrules = rng.gen_range(0..=spec.max_rules);
    let mut rules = Vec::with_capacity(nrules);
    for k in 0..nrules {
        let trigger = random_expr(rng, &attrs, 1);
        let mut action = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            let t = actuators[rng.gen_range(0..actuators.len())];
            if !action.iter().any(|(a, _): &(String, Value)| *a == attrs[t].name) {
                action.push((attrs[t].name.clone(), random_value(rng, &attrs[t].domain)));
            }
        }
        rules.push(Rule { id: format!("r{k}"), priority: k, trigger, action });
    }
    let mut model = ModelSpec::new(attrs, rules, vec![]).expect("random model is valid");
    model.policies = match mode {
        Mode::Escalation => {
            // over actuators, and preferably not violated initially
            let init = model.initial_state();
            let targets: Vec<AttributeDecl> = model.attributes.iter().filter(|a| !a.is_sensor()).cloned().collect();
            let mut never = random_expr(rng, &targets, 1);
            for _ in 0..16 {
                if !model.eval(&never, &init) {
                    break;
                }
                never = random_expr(rng, &targets, 1);
            }
            vec![Policy::Escalation { never }]
        }
        Mode::Privacy => vec![Policy::Privacy],
    };
    model
}
