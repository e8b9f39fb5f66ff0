//! Seeded attack-chain instances with known ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::Mode;
use crate::error::GenError;
use crate::model::{AttributeDecl, Label, ModelSpec, Policy, Rule, TriggerExpr, Value, ValueDomain};
use crate::oracle::{self, OracleConfig};
use crate::pruning::{prune_for_escalation, prune_for_privacy, PruneResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSpec {
    /// Number of chain rules, 2 to 8.
    pub chain_length: usize,
    pub distractors: usize,
    /// Break every link of the chain (no attack exists).
    pub negative: bool,
    pub seed: u64,
    /// Attributes besides the chain ones, used by distractor rules.
    pub extra_attributes: usize,
    /// Values per chain attribute.
    pub domain_size: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { chain_length: 3, distractors: 50, negative: false, seed: 0, extra_attributes: 20, domain_size: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub model: ModelSpec,
    /// Whether an attack (or leak) exists.
    pub expect_attack: bool,
    /// Ids of the chain rules, in chain order.
    pub chain: Vec<String>,
}

fn validate(spec: &GenSpec) -> Result<(), GenError> {
    if !(2..=8).contains(&spec.chain_length) {
        return Err(GenError::Infeasible(format!("chain length {} is outside 2..=8", spec.chain_length)));
    }
    let min = if spec.negative { 3 } else { 2 };
    if spec.domain_size < min || spec.domain_size > 64 {
        return Err(GenError::Infeasible(format!(
            "domain size {} (need {min}..=64 values per chain attribute)",
            spec.domain_size
        )));
    }
    if spec.distractors > 0 && !spec.negative && spec.extra_attributes < 2 {
        return Err(GenError::Infeasible("distractors need at least two extra attributes".into()));
    }
    Ok(())
}

fn enum_domain(n: usize) -> ValueDomain {
    ValueDomain::Enum((0..n).map(|i| format!("V{i}")).collect())
}

/// A positive instance is an attack via the chain; a negative one has every
/// link's trigger on a value its predecessor never writes.
pub fn gen_chain(spec: &GenSpec) -> Result<Instance, GenError> {
    generate(spec, Mode::Escalation)
}

/// Same chain with the first attribute private, the last public and the
/// rest unlabelled.
pub fn gen_privacy_chain(spec: &GenSpec) -> Result<Instance, GenError> {
    generate(spec, Mode::Privacy)
}

fn generate(spec: &GenSpec, mode: Mode) -> Result<Instance, GenError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let l = spec.chain_length;
    let d = spec.domain_size;
    let dom = enum_domain(d);
    let sym = |i: usize| Value::sym(format!("V{i}"));

    // chain values: X[i] is written by R_i (X[0] is the trigger value of R_1),
    // Y[i] is the broken trigger value in the negative variant
    let mut x = Vec::with_capacity(l + 1);
    let mut y = Vec::with_capacity(l + 1);
    let mut init = Vec::with_capacity(l + 1);
    for _ in 0..=l {
        let mut vals: Vec<usize> = (0..d).collect();
        vals.shuffle(&mut rng);
        x.push(vals[0]);
        y.push(vals[1]);
        init.push(if spec.negative { vals[2] } else { vals[1] });
    }

    let extra = if spec.negative { 0 } else { spec.extra_attributes };
    let total = l + 1 + extra;
    let mut names: Vec<String> = (0..total).map(|i| format!("d{i:02}")).collect();
    names.shuffle(&mut rng);
    let (chain_names, extra_names) = names.split_at(l + 1);

    let mut attributes: Vec<AttributeDecl> = Vec::with_capacity(total);
    for (i, name) in chain_names.iter().enumerate() {
        let mut a = if i == 0 {
            AttributeDecl::sensor(name.clone(), dom.clone(), sym(init[0]))
        } else {
            AttributeDecl::actuator(name.clone(), dom.clone(), sym(init[i]))
        };
        match mode {
            Mode::Escalation => a.vulnerable = i == 0,
            Mode::Privacy => {
                a.label = match i {
                    0 => Label::Private,
                    _ if i == l => Label::Public,
                    _ => Label::Other,
                }
            }
        }
        attributes.push(a);
    }
    let mut extra_actuators = Vec::new();
    for (k, name) in extra_names.iter().enumerate() {
        let size = rng.gen_range(2..=4);
        let domain =
            if rng.gen_bool(0.3) { ValueDomain::IntRange { lo: 0, hi: size as i64 * 5 } } else { enum_domain(size) };
        let initial = domain.value_at(rng.gen_range(0..domain.size()));
        // at least one actuator so distractors have somewhere to write
        if k == 0 || rng.gen_bool(0.5) {
            extra_actuators.push(attributes.len());
            attributes.push(AttributeDecl::actuator(name.clone(), domain, initial));
        } else {
            attributes.push(AttributeDecl::sensor(name.clone(), domain, initial));
        }
    }

    let mut rules = Vec::new();
    for i in 0..l {
        let trig_val = if spec.negative && i > 0 { y[i] } else { x[i] };
        rules.push(Rule {
            id: format!("R{}", i + 1),
            priority: i,
            trigger: TriggerExpr::eq(chain_names[i].clone(), sym(trig_val)),
            action: vec![(chain_names[i + 1].clone(), sym(x[i + 1]))],
        });
    }
    let chain: Vec<String> = rules.iter().map(|r| r.id.clone()).collect();
    let policies = match mode {
        Mode::Escalation => vec![Policy::Escalation { never: TriggerExpr::eq(chain_names[l].clone(), sym(x[l])) }],
        Mode::Privacy => vec![Policy::Privacy],
    };

    if !spec.negative {
        let mut tries = 0;
        let mut kept = 0;
        while kept < spec.distractors {
            tries += 1;
            if tries > spec.distractors * 20 + 100 {
                return Err(GenError::Infeasible("could not place distractor rules".into()));
            }
            let rule = distractor(&mut rng, &attributes, &extra_actuators, kept, l + kept);
            let candidate = ModelSpec::new(attributes.clone(), vec![rule.clone()], policies.clone())?;
            if distractor_is_safe(&candidate, &rules[l..], mode) {
                rules.push(rule);
                kept += 1;
            }
        }
    }
    let model = ModelSpec::new(attributes, rules, policies)?;
    Ok(Instance { model, expect_attack: !spec.negative, chain })
}

fn random_atom(rng: &mut ChaCha8Rng, a: &AttributeDecl) -> TriggerExpr {
    let v = a.domain.value_at(rng.gen_range(0..a.domain.size()));
    if a.domain.is_int() && rng.gen_bool(0.5) {
        let op = [crate::model::CmpOp::Ge, crate::model::CmpOp::Le][rng.gen_range(0..2)];
        TriggerExpr::atom(a.name.clone(), op, v)
    } else {
        TriggerExpr::eq(a.name.clone(), v)
    }
}

fn distractor(rng: &mut ChaCha8Rng, attrs: &[AttributeDecl], targets: &[usize], n: usize, priority: usize) -> Rule {
    let src = &attrs[rng.gen_range(0..attrs.len())];
    let dst = &attrs[targets[rng.gen_range(0..targets.len())]];
    Rule {
        id: format!("D{}", n + 1),
        priority,
        trigger: random_atom(rng, src),
        action: vec![(dst.name.clone(), dst.domain.value_at(rng.gen_range(0..dst.domain.size())))],
    }
}

/// Distractors never write chain attributes. On top of that, the model
/// built from the accepted distractors plus the candidate must not violate
/// the property on its own; the oracle checks the part of it that can reach
/// the property.
fn distractor_is_safe(candidate: &ModelSpec, accepted: &[Rule], mode: Mode) -> bool {
    let mut rules: Vec<Rule> = accepted.to_vec();
    rules.extend(candidate.rules.iter().cloned());
    let Ok(only) = ModelSpec::new(candidate.attributes.clone(), rules, candidate.policies.clone()) else {
        return false;
    };
    let cfg = OracleConfig::default();
    let verdict = match mode {
        Mode::Escalation => {
            let policy = only.combined_escalation().expect("escalation policy");
            oracle::brute_check_escalation(&prune_for_escalation(&only, &policy).model, &cfg).verdict
        }
        Mode::Privacy => match prune_for_privacy(&only) {
            Ok(PruneResult::TriviallySecure) => return true,
            Ok(PruneResult::Reduced(p)) => oracle::brute_check_privacy(&p.model, &cfg).verdict,
            Err(_) => return false,
        },
    };
    verdict.is_secure()
}
