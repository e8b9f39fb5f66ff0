//! Dependency-graph pruning.
//!
//! An edge `u -> v` means some rule reads `u` in its trigger and writes `v`.
//! Only attributes with a path into the property can influence it, so
//! everything else is dropped before the search.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::CheckError;
use crate::model::{Label, ModelSpec, Policy, Rule, TriggerExpr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    /// Attribute names in declaration order.
    pub nodes: Vec<String>,
    /// `(from, to)` node indices to the ids of the rules inducing the edge.
    pub edges: BTreeMap<(usize, usize), BTreeSet<String>>,
}

impl DependencyGraph {
    fn index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Edges as name triples, sorted.
    pub fn labeled_edges(&self) -> Vec<(String, String, String)> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .flat_map(|(&(u, v), ids)| {
                ids.iter().map(move |r| (self.nodes[u].clone(), self.nodes[v].clone(), r.clone()))
            })
            .collect();
        out.sort();
        out
    }

    fn neighbours(&self, reverse: bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(u, v) in self.edges.keys() {
            if reverse {
                adj[v].push(u);
            } else {
                adj[u].push(v);
            }
        }
        adj
    }

    /// Attributes reachable from `seeds` along edges (seeds included).
    pub fn forward_reach(&self, seeds: &BTreeSet<String>) -> BTreeSet<String> {
        let reached = reach(&self.neighbours(false), seeds.iter().filter_map(|s| self.index(s)));
        reached.into_iter().map(|i| self.nodes[i].clone()).collect()
    }
}

fn reach(adj: &[Vec<usize>], seeds: impl Iterator<Item = usize>) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for s in seeds {
        if seen.insert(s) {
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}

pub fn build_dependency_graph(model: &ModelSpec) -> DependencyGraph {
    let nodes: Vec<String> = model.attributes.iter().map(|a| a.name.clone()).collect();
    let mut edges: BTreeMap<(usize, usize), BTreeSet<String>> = BTreeMap::new();
    for rule in &model.rules {
        for src in rule.trigger.attributes() {
            let u = model.index_of(src).expect("validated");
            for (dst, _) in &rule.action {
                let v = model.index_of(dst).expect("validated");
                edges.entry((u, v)).or_default().insert(rule.id.clone());
            }
        }
    }
    DependencyGraph { nodes, edges }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Backtrace {
    pub attributes: BTreeSet<String>,
    pub rules: BTreeSet<String>,
}

/// Reverse reachability from `seeds`, with the labels of every edge between
/// reached attributes.
pub fn backtrace(graph: &DependencyGraph, seeds: &BTreeSet<String>) -> Backtrace {
    let kept = reach(&graph.neighbours(true), seeds.iter().filter_map(|s| graph.index(s)));
    let rules =
        graph.edges.iter().filter(|((_, v), _)| kept.contains(v)).flat_map(|(_, ids)| ids.iter().cloned()).collect();
    Backtrace { attributes: kept.into_iter().map(|i| graph.nodes[i].clone()).collect(), rules }
}

/// A model restricted to the attributes that can influence a property.
#[derive(Debug, Clone)]
pub struct PrunedModel {
    pub model: ModelSpec,
    pub dropped_attributes: Vec<String>,
    pub dropped_rules: Vec<String>,
}

/// Keeps the attributes in `keep` and every rule writing one of them, with
/// actions on dropped attributes removed. Rules that write a kept attribute
/// from a constant trigger have no edge but still matter, hence the
/// action-based selection.
pub fn restrict(model: &ModelSpec, keep: &BTreeSet<String>, policies: Vec<Policy>) -> PrunedModel {
    let attributes = model.attributes.iter().filter(|a| keep.contains(&a.name)).cloned().collect();
    let mut rules = Vec::new();
    let mut dropped_rules = Vec::new();
    for r in &model.rules {
        let action: Vec<_> = r.action.iter().filter(|(a, _)| keep.contains(a)).cloned().collect();
        if action.is_empty() {
            dropped_rules.push(r.id.clone());
        } else {
            rules.push(Rule { action, ..r.clone() });
        }
    }
    let dropped_attributes =
        model.attributes.iter().filter(|a| !keep.contains(&a.name)).map(|a| a.name.clone()).collect();
    let model = ModelSpec::new(attributes, rules, policies).expect("restriction of a valid model");
    PrunedModel { model, dropped_attributes, dropped_rules }
}

/// Keeps the backward cone of the policy's attributes. A policy that reads
/// no attribute is constant; the first attribute is kept so the reduced
/// model stays non-empty.
pub fn prune_for_escalation(model: &ModelSpec, policy: &TriggerExpr) -> PrunedModel {
    let mut seeds: BTreeSet<String> = policy.attributes().into_iter().map(String::from).collect();
    if seeds.is_empty() {
        seeds.insert(model.attributes[0].name.clone());
    }
    let graph = build_dependency_graph(model);
    let bt = backtrace(&graph, &seeds);
    restrict(model, &bt.attributes, vec![Policy::Escalation { never: policy.clone() }])
}

#[derive(Debug, Clone)]
pub enum PruneResult {
    /// No public attribute is reachable from a private one.
    TriviallySecure,
    Reduced(PrunedModel),
}

/// Forward reach from the private attributes; if it touches a public
/// attribute, keep the backward cone of the touched public attributes.
pub fn prune_for_privacy(model: &ModelSpec) -> Result<PruneResult, CheckError> {
    check_labels(model)?;
    let private: BTreeSet<String> = labelled(model, Label::Private);
    let public: BTreeSet<String> = labelled(model, Label::Public);
    let graph = build_dependency_graph(model);
    let reached: BTreeSet<String> = graph.forward_reach(&private).intersection(&public).cloned().collect();
    if reached.is_empty() {
        return Ok(PruneResult::TriviallySecure);
    }
    let bt = backtrace(&graph, &reached);
    Ok(PruneResult::Reduced(restrict(model, &bt.attributes, vec![Policy::Privacy])))
}

fn labelled(model: &ModelSpec, label: Label) -> BTreeSet<String> {
    model.attributes.iter().filter(|a| a.label == label).map(|a| a.name.clone()).collect()
}

/// A privacy check needs something to protect and something observable.
pub fn check_labels(model: &ModelSpec) -> Result<(), CheckError> {
    for (label, what) in [(Label::Private, "private"), (Label::Public, "public")] {
        if !model.attributes.iter().any(|a| a.label == label) {
            return Err(CheckError::Config(format!("privacy check needs at least one {what} attribute")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{AttributeDecl, Value, ValueDomain};

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn onoff() -> ValueDomain {
        ValueDomain::Enum(vec!["ON".into(), "OFF".into()])
    }

    #[test]
    fn location_edges() {
        let g = build_dependency_graph(&fixtures::smart_home());
        let e = g.labeled_edges();
        assert!(e.contains(&("location".into(), "light1".into(), "R1".into())));
        assert!(e.contains(&("location".into(), "camera".into(), "R1".into())));
        assert_eq!(e.iter().filter(|x| x.2 == "R1").count(), 2);
    }

    #[test]
    fn self_loop_and_empty() {
        let x = AttributeDecl::actuator("x", onoff(), Value::sym("ON"));
        let r = Rule {
            id: "r".into(),
            priority: 0,
            trigger: TriggerExpr::eq("x", "ON"),
            action: vec![("x".into(), Value::sym("OFF"))],
        };
        let m = ModelSpec::new(vec![x.clone()], vec![r], vec![]).unwrap();
        assert_eq!(build_dependency_graph(&m).labeled_edges(), vec![("x".into(), "x".into(), "r".into())]);
        let m = ModelSpec::new(vec![x], vec![], vec![]).unwrap();
        let g = build_dependency_graph(&m);
        assert!(g.edges.is_empty());
        assert_eq!(g.nodes, ["x"]);
    }

    #[test]
    fn lock_camera_cone() {
        let g = build_dependency_graph(&fixtures::smart_home());
        let bt = backtrace(&g, &set(&["lock", "camera"]));
        assert_eq!(bt.attributes, set(&["camera", "light1", "location", "lock"]));
        assert_eq!(bt.rules, set(&["R1", "R2", "R3", "R4", "R5"]));
        assert_eq!(backtrace(&g, &BTreeSet::new()), Backtrace::default());
    }

    #[test]
    fn escalation_keeps_four_attributes() {
        let m = fixtures::smart_home();
        let p = prune_for_escalation(&m, &fixtures::smart_home_policy());
        let names: Vec<_> = p.model.attributes.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["camera", "lock", "light1", "location"]);
        let ids: Vec<_> = p.model.rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["R1", "R2", "R3", "R4", "R5"]);
        assert_eq!(p.dropped_rules.len(), 7);
    }

    #[test]
    fn isolated_policy_attribute() {
        let m = fixtures::smart_home();
        let p = prune_for_escalation(&m, &TriggerExpr::eq("ac", "ON"));
        // ac is written by R11 and R12, both reading temperature
        assert_eq!(p.model.attributes.len(), 2);
        let p = prune_for_escalation(&m, &TriggerExpr::eq("occupancy", "TRUE"));
        assert_eq!(p.model.attributes.len(), 1);
        assert!(p.model.rules.is_empty());
    }

    #[test]
    fn privacy_keeps_three_attributes() {
        let m = fixtures::smart_home_privacy();
        let PruneResult::Reduced(p) = prune_for_privacy(&m).unwrap() else { panic!("expected reduction") };
        let names: BTreeSet<_> = p.model.attributes.iter().map(|a| a.name.clone()).collect();
        assert_eq!(names, set(&["occupancy", "tv", "light2"]));
        let ids: Vec<_> = p.model.rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["R6", "R7", "R8", "R9"]);
    }

    #[test]
    fn privacy_trivially_secure_and_labels() {
        let m = fixtures::occupancy_temperature();
        assert!(matches!(prune_for_privacy(&m).unwrap(), PruneResult::TriviallySecure));
        let mut m = fixtures::smart_home();
        for a in &mut m.attributes {
            a.label = Label::Other;
        }
        assert!(matches!(prune_for_privacy(&m), Err(CheckError::Config(_))));
    }

    #[test]
    fn privacy_chain_drops_disconnected_component() {
        let priv_ = AttributeDecl { label: Label::Private, ..AttributeDecl::sensor("p", onoff(), Value::sym("OFF")) };
        let mid = AttributeDecl::actuator("m", onoff(), Value::sym("OFF"));
        let publ = AttributeDecl { label: Label::Public, ..AttributeDecl::actuator("o", onoff(), Value::sym("OFF")) };
        let s = AttributeDecl::sensor("s", onoff(), Value::sym("OFF"));
        let t = AttributeDecl::actuator("t", onoff(), Value::sym("OFF"));
        let rule = |id: &str, from: &str, to: &str| Rule {
            id: id.into(),
            priority: 0,
            trigger: TriggerExpr::eq(from, "ON"),
            action: vec![(to.into(), Value::sym("ON"))],
        };
        let rules = vec![rule("a", "p", "m"), rule("b", "m", "o"), rule("c", "s", "t")];
        let m = ModelSpec::new(vec![priv_, mid, publ, s, t], rules, vec![Policy::Privacy]).unwrap();
        let PruneResult::Reduced(p) = prune_for_privacy(&m).unwrap() else { panic!() };
        assert_eq!(p.model.attributes.len(), 3);
        assert_eq!(p.dropped_attributes, ["s", "t"]);
        assert_eq!(p.dropped_rules, ["c"]);
    }
}
