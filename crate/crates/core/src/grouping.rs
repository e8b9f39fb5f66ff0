//! Value grouping.
//!
//! Two values of an attribute are interchangeable when they satisfy exactly
//! the same trigger and policy atoms: no rule and no policy can tell them
//! apart. Each attribute's effective domain is partitioned into such classes
//! (meta-values) and the model is rewritten over them. The rewritten model is
//! an exact abstraction, so checking it yields the same verdict.

use std::collections::BTreeMap;

use crate::error::CheckError;
use crate::model::{
    Atom, AttributeDecl, AttributeKind, CmpOp, Label, ModelSpec, Policy, Rule, TriggerExpr, Value, ValueDomain,
};

/// What the grouped model will be checked for. Policy atoms take part in the
/// partition, and privacy checks keep public attributes at full resolution.
#[derive(Debug, Clone, Copy)]
pub enum GroupingTarget<'a> {
    Escalation(&'a TriggerExpr),
    Privacy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaValue {
    pub id: usize,
    pub name: String,
    /// Original values, in domain order.
    pub members: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupedDomain {
    pub attribute: String,
    pub meta_values: Vec<MetaValue>,
    pub to_meta: BTreeMap<Value, usize>,
}

impl GroupedDomain {
    pub fn meta_of(&self, v: &Value) -> Option<&MetaValue> {
        self.to_meta.get(v).map(|&i| &self.meta_values[i])
    }

    pub fn by_name(&self, name: &str) -> Option<&MetaValue> {
        self.meta_values.iter().find(|m| m.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.meta_values.iter().map(|m| m.name.as_str()).collect()
    }

    /// Member lists, useful for comparing partitions without caring about names.
    pub fn partition(&self) -> Vec<Vec<Value>> {
        self.meta_values.iter().map(|m| m.members.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GroupedModel {
    /// The rewritten model; every domain is an enum of meta-value names.
    pub model: ModelSpec,
    /// One entry per attribute, in declaration order.
    pub domains: Vec<GroupedDomain>,
}

impl GroupedModel {
    pub fn domain(&self, attr: &str) -> Option<&GroupedDomain> {
        self.domains.iter().find(|d| d.attribute == attr)
    }
}

/// Every atom of every trigger and of the escalation predicate, filed under
/// its attribute. Duplicates are dropped; attributes never tested map to an
/// empty list.
pub fn collect_constraints(model: &ModelSpec, target: GroupingTarget<'_>) -> BTreeMap<String, Vec<Atom>> {
    let mut out: BTreeMap<String, Vec<Atom>> = model.attributes.iter().map(|a| (a.name.clone(), Vec::new())).collect();
    let mut push = |atom: &Atom| {
        let list = out.get_mut(&atom.attr).expect("validated attribute");
        if !list.contains(atom) {
            list.push(atom.clone());
        }
    };
    for rule in &model.rules {
        rule.trigger.atoms().into_iter().for_each(&mut push);
    }
    if let GroupingTarget::Escalation(policy) = target {
        policy.atoms().into_iter().for_each(&mut push);
    }
    out
}

/// Values the attribute can actually hold during a check. Secure sensors are
/// confined to their window (plus the current reading); attacker-controlled,
/// private and actuator attributes range over the whole domain.
pub fn effective_domain(attr: &AttributeDecl, target: GroupingTarget<'_>) -> Vec<Value> {
    let full = attr.vulnerable
        || attr.kind == AttributeKind::Actuator
        || (matches!(target, GroupingTarget::Privacy) && attr.label == Label::Private);
    if full {
        return attr.domain.values();
    }
    attr.domain.values().into_iter().filter(|v| attr.in_window(v) || *v == attr.initial).collect()
}

pub fn group_attribute(attr: &AttributeDecl, constraints: &[Atom], target: GroupingTarget<'_>) -> GroupedDomain {
    let values = effective_domain(attr, target);
    let identity = matches!(target, GroupingTarget::Privacy) && attr.label == Label::Public;

    // signature -> member list, in order of first appearance
    let mut classes: Vec<(Vec<bool>, Vec<Value>)> = Vec::new();
    for (i, v) in values.into_iter().enumerate() {
        let sig: Vec<bool> = if identity {
            // one class per value
            (0..=i).map(|k| k == i).collect()
        } else {
            constraints.iter().map(|c| c.holds(&v)).collect()
        };
        match classes.iter_mut().find(|(s, _)| *s == sig) {
            Some((_, members)) => members.push(v),
            None => classes.push((sig, vec![v])),
        }
    }

    let single = classes.len() == 1;
    let mut meta_values: Vec<MetaValue> = classes
        .into_iter()
        .enumerate()
        .map(|(id, (sig, members))| {
            let name = if single && members.len() > 1 {
                "ALL".to_string()
            } else {
                meta_name(&attr.domain, &members, sig.iter().all(|b| !b))
            };
            MetaValue { id, name, members }
        })
        .collect();

    let mut seen = BTreeMap::new();
    for m in &mut meta_values {
        if seen.insert(m.name.clone(), m.id).is_some() {
            m.name = format!("{}#{}", m.name, m.id);
        }
    }
    let to_meta = meta_values.iter().flat_map(|m| m.members.iter().map(move |v| (v.clone(), m.id))).collect();
    GroupedDomain { attribute: attr.name.clone(), meta_values, to_meta }
}

fn meta_name(domain: &ValueDomain, members: &[Value], unconstrained: bool) -> String {
    if members.len() == 1 {
        return members[0].to_string();
    }
    match domain {
        ValueDomain::Enum(_) if unconstrained => "OTHERS".to_string(),
        ValueDomain::Enum(_) => members.iter().map(Value::to_string).collect::<Vec<_>>().join("|"),
        ValueDomain::IntRange { .. } => {
            let ints: Vec<i64> = members
                .iter()
                .map(|v| match v {
                    Value::Int(i) => *i,
                    Value::Sym(_) => unreachable!("int domain"),
                })
                .collect();
            let mut parts = Vec::new();
            let mut start = ints[0];
            let mut prev = ints[0];
            for &x in &ints[1..] {
                if x != prev + 1 {
                    parts.push(interval(start, prev));
                    start = x;
                }
                prev = x;
            }
            parts.push(interval(start, prev));
            parts.join("|")
        }
    }
}

fn interval(lo: i64, hi: i64) -> String {
    if lo == hi {
        lo.to_string()
    } else {
        format!("{lo}..{hi}")
    }
}

fn rewrite_atom(atom: &Atom, domain: &GroupedDomain) -> Result<TriggerExpr, CheckError> {
    let mut hits = Vec::new();
    for m in &domain.meta_values {
        let sat = m.members.iter().filter(|v| atom.holds(v)).count();
        if sat == m.members.len() {
            hits.push(m);
        } else if sat != 0 {
            return Err(CheckError::Internal(format!(
                "meta-value {} of `{}` splits atom `{atom}`",
                m.name, domain.attribute
            )));
        }
    }
    let eq = |m: &MetaValue| TriggerExpr::atom(atom.attr.clone(), CmpOp::Eq, Value::Sym(m.name.clone()));
    Ok(match hits.as_slice() {
        [one] => eq(one),
        _ => TriggerExpr::Or(hits.into_iter().map(eq).collect()),
    })
}

/// Rewrites an expression over meta-values. Each atom becomes the
/// disjunction of the meta-values that satisfy it (a single equality when
/// only one does, the empty disjunction when none does).
pub fn rewrite_expr(expr: &TriggerExpr, grouped: &[GroupedDomain]) -> Result<TriggerExpr, CheckError> {
    let mut err = None;
    let out = expr.map_atoms(&mut |atom| {
        let domain = grouped.iter().find(|d| d.attribute == atom.attr).expect("grouped attribute");
        rewrite_atom(atom, domain).unwrap_or_else(|e| {
            err.get_or_insert(e);
            TriggerExpr::Or(vec![])
        })
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

pub fn rewrite_rules(rules: &[Rule], grouped: &[GroupedDomain]) -> Result<Vec<Rule>, CheckError> {
    rules
        .iter()
        .map(|r| {
            let trigger = rewrite_expr(&r.trigger, grouped)?;
            let action = r
                .action
                .iter()
                .map(|(attr, v)| {
                    let domain = grouped.iter().find(|d| d.attribute == *attr).expect("grouped attribute");
                    let meta = domain.meta_of(v).ok_or_else(|| {
                        CheckError::Internal(format!(
                            "rule {}: `{attr} <- {v}` lies outside the effective domain",
                            r.id
                        ))
                    })?;
                    Ok((attr.clone(), Value::Sym(meta.name.clone())))
                })
                .collect::<Result<_, CheckError>>()?;
            Ok(Rule { id: r.id.clone(), priority: r.priority, trigger, action })
        })
        .collect()
}

/// Groups every attribute and rewrites rules and the target policy.
pub fn group_model(model: &ModelSpec, target: GroupingTarget<'_>) -> Result<GroupedModel, CheckError> {
    let constraints = collect_constraints(model, target);
    let domains: Vec<GroupedDomain> =
        model.attributes.iter().map(|a| group_attribute(a, &constraints[&a.name], target)).collect();

    let attributes = model
        .attributes
        .iter()
        .zip(&domains)
        .map(|(a, g)| {
            let names: Vec<String> = g.meta_values.iter().map(|m| m.name.clone()).collect();
            let window = if a.is_sensor() {
                let inside: Vec<String> = g
                    .meta_values
                    .iter()
                    .filter(|m| m.members.iter().any(|v| a.in_window(v)))
                    .map(|m| m.name.clone())
                    .collect();
                (inside.len() != names.len()).then_some(ValueDomain::Enum(inside))
            } else {
                None
            };
            let initial = g
                .meta_of(&a.initial)
                .map(|m| Value::Sym(m.name.clone()))
                .expect("initial value lies in the effective domain");
            AttributeDecl {
                name: a.name.clone(),
                domain: ValueDomain::Enum(names),
                kind: a.kind,
                vulnerable: a.vulnerable,
                label: a.label,
                window,
                initial,
            }
        })
        .collect();

    let rules = rewrite_rules(&model.rules, &domains)?;
    let policies = match target {
        GroupingTarget::Escalation(p) => vec![Policy::Escalation { never: rewrite_expr(p, &domains)? }],
        GroupingTarget::Privacy => vec![Policy::Privacy],
    };
    let model = ModelSpec::new(attributes, rules, policies)?;
    Ok(GroupedModel { model, domains })
}

/// Product of domain sizes, saturating.
pub fn state_space_size(model: &ModelSpec) -> u128 {
    model.attributes.iter().fold(1u128, |acc, a| acc.saturating_mul(a.domain.size() as u128))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ints(lo: i64, hi: i64) -> Vec<Value> {
        (lo..=hi).map(Value::Int).collect()
    }

    #[test]
    fn temperature_thresholds() {
        let m = fixtures::smart_home();
        let policy = fixtures::smart_home_policy();
        let c = collect_constraints(&m, GroupingTarget::Escalation(&policy));
        let temp: Vec<String> = c["temperature"].iter().map(|a| a.to_string()).collect();
        assert_eq!(temp, ["temperature >= 28", "temperature >= 32", "temperature <= 25"]);
        assert!(c["fan"].is_empty());

        let g = group_attribute(
            m.attribute("temperature").unwrap(),
            &c["temperature"],
            GroupingTarget::Escalation(&policy),
        );
        assert_eq!(g.partition(), vec![ints(23, 25), ints(26, 27), ints(28, 31), ints(32, 33)]);
        assert_eq!(g.names(), ["23..25", "26..27", "28..31", "32..33"]);
    }

    #[test]
    fn policy_atoms_are_collected() {
        let m = fixtures::smart_home();
        let policy = fixtures::smart_home_policy();
        let c = collect_constraints(&m, GroupingTarget::Escalation(&policy));
        assert!(c["lock"].contains(&Atom::new("lock", CmpOp::Eq, "UNLOCKED")));
        assert!(c["lock"].contains(&Atom::new("lock", CmpOp::Eq, "LOCKED")));
    }

    #[test]
    fn location_and_unconstrained() {
        let m = fixtures::smart_home();
        let policy = fixtures::smart_home_policy();
        let t = GroupingTarget::Escalation(&policy);
        let c = collect_constraints(&m, t);
        // location is attacker-controlled in the fixture; a secure GPS keeps its window
        let mut loc = m.attribute("location").unwrap().clone();
        loc.vulnerable = false;
        let g = group_attribute(&loc, &c["location"], t);
        assert_eq!(g.partition(), vec![vec![Value::Int(0)], ints(1, 10)]);

        let fan = group_attribute(m.attribute("fan").unwrap(), &c["fan"], t);
        assert_eq!(fan.names(), ["ALL"]);
    }

    #[test]
    fn public_attributes_keep_identity_in_privacy_mode() {
        let m = fixtures::smart_home();
        let c = collect_constraints(&m, GroupingTarget::Privacy);
        let light2 = group_attribute(m.attribute("light2").unwrap(), &c["light2"], GroupingTarget::Privacy);
        assert_eq!(light2.names(), ["ON", "OFF"]);
        let fan = group_attribute(m.attribute("fan").unwrap(), &c["fan"], GroupingTarget::Privacy);
        assert_eq!(fan.names(), ["ALL"]);
    }

    #[test]
    fn enum_groups_referenced_values_and_others() {
        let attr = AttributeDecl::actuator(
            "mode",
            ValueDomain::Enum(vec!["A".into(), "B".into(), "C".into(), "D".into()]),
            Value::sym("A"),
        );
        let cs = [Atom::new("mode", CmpOp::Eq, "B")];
        let policy = TriggerExpr::And(vec![]);
        let g = group_attribute(&attr, &cs, GroupingTarget::Escalation(&policy));
        assert_eq!(g.names(), ["OTHERS", "B"]);
        assert_eq!(g.meta_values[0].members, vec![Value::sym("A"), Value::sym("C"), Value::sym("D")]);
    }

    #[test]
    fn rewrites_match_table() {
        let m = fixtures::smart_home();
        let policy = fixtures::smart_home_policy();
        let g = group_model(&m, GroupingTarget::Escalation(&policy)).unwrap();
        let show = |id: &str| {
            let r = g.model.rule(id).unwrap();
            let acts: Vec<String> = r.action.iter().map(|(a, v)| format!("{a} <- {v}")).collect();
            (r.trigger.to_string(), acts.join(", "))
        };
        assert_eq!(show("R10"), ("temperature = 28..31 OR temperature = 32..33".into(), "fan <- ALL".into()));
        assert_eq!(show("R11"), ("temperature = 32..33".into(), "ac <- ALL".into()));
        assert_eq!(show("R12"), ("temperature = 23..25".into(), "fan <- ALL, ac <- ALL".into()));
        assert_eq!(show("R6").0, "occupancy = TRUE");
    }

    #[test]
    fn boolean_model_groups_to_identity() {
        let m = fixtures::smart_home();
        let policy = TriggerExpr::Or(vec![
            TriggerExpr::eq("tv", "ON"),
            TriggerExpr::eq("tv", "OFF"),
            TriggerExpr::eq("occupancy", "TRUE"),
            TriggerExpr::eq("occupancy", "FALSE"),
        ]);
        let g = group_model(&m, GroupingTarget::Escalation(&policy)).unwrap();
        assert_eq!(g.domain("tv").unwrap().names(), ["ON", "OFF"]);
        assert_eq!(g.domain("occupancy").unwrap().names(), ["TRUE", "FALSE"]);
        assert!(state_space_size(&g.model) <= state_space_size(&m));
    }
}
