//! Smart-space specification: attributes, trigger-action rules and policies.
//!
//! A model is read from a JSON document, validated once, and is immutable
//! afterwards. Every cross reference (attribute names in triggers, actions and
//! policies, literal values) is checked at construction time so that the
//! evaluation functions below are total.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde_json::{json, Map, Value as Json};

use crate::error::ModelError;

/// Largest number of values a single attribute domain may hold.
pub const MAX_DOMAIN_SIZE: usize = u16::MAX as usize;

/// A single attribute value: either a symbolic enum member or an integer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Sym(String),
    Int(i64),
}

impl Value {
    pub fn sym(s: impl Into<String>) -> Self {
        Value::Sym(s.into())
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Sym(s) => Json::String(s.clone()),
            Value::Int(i) => json!(i),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Sym(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Sym(v.to_string())
    }
}

/// Finite set of values an attribute may take.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueDomain {
    /// Ordered, duplicate-free list of symbolic values.
    Enum(Vec<String>),
    /// Inclusive integer interval.
    IntRange { lo: i64, hi: i64 },
}

impl ValueDomain {
    pub fn size(&self) -> usize {
        match self {
            ValueDomain::Enum(vals) => vals.len(),
            ValueDomain::IntRange { lo, hi } => (hi - lo + 1) as usize,
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        self.index_of(v).is_some()
    }

    /// Position of `v` in the domain's canonical order.
    pub fn index_of(&self, v: &Value) -> Option<usize> {
        match (self, v) {
            (ValueDomain::Enum(vals), Value::Sym(s)) => vals.iter().position(|x| x == s),
            (ValueDomain::IntRange { lo, hi }, Value::Int(i)) if lo <= i && i <= hi => Some((i - lo) as usize),
            _ => None,
        }
    }

    pub fn value_at(&self, idx: usize) -> Value {
        match self {
            ValueDomain::Enum(vals) => Value::Sym(vals[idx].clone()),
            ValueDomain::IntRange { lo, .. } => Value::Int(lo + idx as i64),
        }
    }

    pub fn values(&self) -> Vec<Value> {
        (0..self.size()).map(|i| self.value_at(i)).collect()
    }

    pub fn is_int(&self) -> bool {
        matches!(self, ValueDomain::IntRange { .. })
    }

    fn is_subset_of(&self, other: &ValueDomain) -> bool {
        match (self, other) {
            (ValueDomain::Enum(a), ValueDomain::Enum(b)) => a.iter().all(|x| b.contains(x)),
            (ValueDomain::IntRange { lo: a, hi: b }, ValueDomain::IntRange { lo: c, hi: d }) => c <= a && b <= d,
            _ => false,
        }
    }

    fn to_json(&self) -> Json {
        match self {
            ValueDomain::Enum(vals) => json!({ "enum": vals }),
            ValueDomain::IntRange { lo, hi } => json!({ "range": [lo, hi] }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttributeKind {
    Sensor,
    Actuator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Private,
    Public,
    Other,
}

impl Label {
    fn as_str(self) -> &'static str {
        match self {
            Label::Private => "private",
            Label::Public => "public",
            Label::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDecl {
    pub name: String,
    pub domain: ValueDomain,
    pub kind: AttributeKind,
    pub vulnerable: bool,
    pub label: Label,
    /// Predicted near-future range for a sensor; `None` means the whole domain.
    pub window: Option<ValueDomain>,
    pub initial: Value,
}

impl AttributeDecl {
    /// An actuator with default flags.
    pub fn actuator(name: impl Into<String>, domain: ValueDomain, initial: Value) -> Self {
        AttributeDecl {
            name: name.into(),
            domain,
            kind: AttributeKind::Actuator,
            vulnerable: false,
            label: Label::Other,
            window: None,
            initial,
        }
    }

    /// A sensor with default flags and a full-domain window.
    pub fn sensor(name: impl Into<String>, domain: ValueDomain, initial: Value) -> Self {
        AttributeDecl { kind: AttributeKind::Sensor, ..AttributeDecl::actuator(name, domain, initial) }
    }

    pub fn is_sensor(&self) -> bool {
        self.kind == AttributeKind::Sensor
    }

    /// The set of values the environment may move this sensor to.
    pub fn window_domain(&self) -> &ValueDomain {
        self.window.as_ref().unwrap_or(&self.domain)
    }

    pub fn in_window(&self, v: &Value) -> bool {
        self.window_domain().contains(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "=" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn is_order(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn holds(self, lhs: &Value, rhs: &Value) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            _ => match (lhs, rhs) {
                (Value::Int(a), Value::Int(b)) => match self {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Eq | CmpOp::Ne => unreachable!(),
                },
                _ => false,
            },
        }
    }
}

/// `attr OP literal`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub attr: String,
    pub op: CmpOp,
    pub value: Value,
}

impl Atom {
    pub fn new(attr: impl Into<String>, op: CmpOp, value: impl Into<Value>) -> Self {
        Atom { attr: attr.into(), op, value: value.into() }
    }

    pub fn holds(&self, v: &Value) -> bool {
        self.op.holds(v, &self.value)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.attr, self.op.symbol(), self.value)
    }
}

/// Boolean combination of atoms. An empty `And` is true, an empty `Or` false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerExpr {
    Atom(Atom),
    And(Vec<TriggerExpr>),
    Or(Vec<TriggerExpr>),
    Not(Box<TriggerExpr>),
}

impl TriggerExpr {
    pub fn atom(attr: impl Into<String>, op: CmpOp, value: impl Into<Value>) -> Self {
        TriggerExpr::Atom(Atom::new(attr, op, value))
    }

    pub fn eq(attr: impl Into<String>, value: impl Into<Value>) -> Self {
        Self::atom(attr, CmpOp::Eq, value)
    }

    /// Atoms in left-to-right order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            TriggerExpr::Atom(a) => out.push(a),
            TriggerExpr::And(xs) | TriggerExpr::Or(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
            TriggerExpr::Not(x) => x.collect_atoms(out),
        }
    }

    /// Distinct attribute names referenced, in first-occurrence order.
    pub fn attributes(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.atoms().into_iter().map(|a| a.attr.as_str()).filter(|n| seen.insert(*n)).collect()
    }

    /// Evaluates with `lookup` supplying the current value of each attribute.
    pub fn eval_with<'v>(&self, lookup: &impl Fn(&str) -> &'v Value) -> bool {
        match self {
            TriggerExpr::Atom(a) => a.holds(lookup(&a.attr)),
            TriggerExpr::And(xs) => xs.iter().all(|x| x.eval_with(lookup)),
            TriggerExpr::Or(xs) => xs.iter().any(|x| x.eval_with(lookup)),
            TriggerExpr::Not(x) => !x.eval_with(lookup),
        }
    }

    /// Rewrites every atom through `f`, keeping the connective structure.
    pub fn map_atoms(&self, f: &mut impl FnMut(&Atom) -> TriggerExpr) -> TriggerExpr {
        match self {
            TriggerExpr::Atom(a) => f(a),
            TriggerExpr::And(xs) => TriggerExpr::And(xs.iter().map(|x| x.map_atoms(f)).collect()),
            TriggerExpr::Or(xs) => TriggerExpr::Or(xs.iter().map(|x| x.map_atoms(f)).collect()),
            TriggerExpr::Not(x) => TriggerExpr::Not(Box::new(x.map_atoms(f))),
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            TriggerExpr::Atom(a) => {
                json!({ "op": a.op.symbol(), "attr": a.attr, "value": a.value.to_json() })
            }
            TriggerExpr::And(xs) => {
                json!({ "op": "and", "args": xs.iter().map(|x| x.to_json()).collect::<Vec<_>>() })
            }
            TriggerExpr::Or(xs) => {
                json!({ "op": "or", "args": xs.iter().map(|x| x.to_json()).collect::<Vec<_>>() })
            }
            TriggerExpr::Not(x) => json!({ "op": "not", "args": [x.to_json()] }),
        }
    }
}

impl fmt::Display for TriggerExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, xs: &[TriggerExpr], sep: &str, empty: &str) -> fmt::Result {
            if xs.is_empty() {
                return f.write_str(empty);
            }
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                match x {
                    TriggerExpr::And(ys) | TriggerExpr::Or(ys) if ys.len() > 1 => write!(f, "({x})")?,
                    _ => write!(f, "{x}")?,
                }
            }
            Ok(())
        }
        match self {
            TriggerExpr::Atom(a) => write!(f, "{a}"),
            TriggerExpr::And(xs) => join(f, xs, " AND ", "TRUE"),
            TriggerExpr::Or(xs) => join(f, xs, " OR ", "FALSE"),
            TriggerExpr::Not(x) => write!(f, "NOT ({x})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub id: String,
    /// Position in the source document; lower wins conflicts.
    pub priority: usize,
    pub trigger: TriggerExpr,
    /// Assignments in source order.
    pub action: Vec<(String, Value)>,
}

impl Rule {
    pub fn assigns(&self, attr: &str) -> Option<&Value> {
        self.action.iter().find(|(a, _)| a == attr).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// The predicate must never hold in a reachable state.
    Escalation { never: TriggerExpr },
    /// Noninterference over the attribute labels.
    Privacy,
}

/// One value per attribute, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State(pub Vec<Value>);

impl State {
    pub fn get(&self, idx: usize) -> &Value {
        &self.0[idx]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub attributes: Vec<AttributeDecl>,
    pub rules: Vec<Rule>,
    pub policies: Vec<Policy>,
}

impl ModelSpec {
    /// Validates and assembles a model.
    pub fn new(attributes: Vec<AttributeDecl>, rules: Vec<Rule>, policies: Vec<Policy>) -> Result<Self, ModelError> {
        if attributes.is_empty() {
            return Err(ModelError::Invalid {
                entity: "model".into(),
                reason: "at least one attribute is required".into(),
            });
        }
        let mut names = HashSet::new();
        for a in &attributes {
            validate_attribute(a)?;
            if !names.insert(a.name.as_str()) {
                return Err(ModelError::DuplicateName { kind: "attribute", name: a.name.clone() });
            }
        }
        let mut ids = HashSet::new();
        for r in &rules {
            if !ids.insert(r.id.as_str()) {
                return Err(ModelError::DuplicateName { kind: "rule", name: r.id.clone() });
            }
        }
        let position = |n: &str| attributes.iter().position(|a| a.name == n);
        for r in &rules {
            let ctx = format!("rule {}", r.id);
            validate_expr(&attributes, &r.trigger, &ctx)?;
            if r.action.is_empty() {
                return Err(ModelError::Invalid { entity: ctx, reason: "action map is empty".into() });
            }
            let mut seen = HashSet::new();
            for (attr, value) in &r.action {
                let decl = position(attr)
                    .map(|i| &attributes[i])
                    .ok_or_else(|| ModelError::UnknownAttribute { entity: ctx.clone(), attr: attr.clone() })?;
                if decl.kind != AttributeKind::Actuator {
                    return Err(ModelError::Invalid {
                        entity: ctx.clone(),
                        reason: format!("assigns sensor attribute `{attr}`"),
                    });
                }
                if !seen.insert(attr.as_str()) {
                    return Err(ModelError::Invalid { entity: ctx.clone(), reason: format!("assigns `{attr}` twice") });
                }
                if !decl.domain.contains(value) {
                    return Err(ModelError::LiteralOutsideDomain {
                        entity: ctx.clone(),
                        attr: attr.clone(),
                        value: value.to_string(),
                    });
                }
            }
        }
        for (i, p) in policies.iter().enumerate() {
            if let Policy::Escalation { never } = p {
                validate_expr(&attributes, never, &format!("policy #{i}"))?;
            }
        }
        Ok(ModelSpec { attributes, rules, policies })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn initial_state(&self) -> State {
        State(self.attributes.iter().map(|a| a.initial.clone()).collect())
    }

    /// The escalation predicates, if any.
    pub fn escalation_policies(&self) -> impl Iterator<Item = &TriggerExpr> {
        self.policies.iter().filter_map(|p| match p {
            Policy::Escalation { never } => Some(never),
            Policy::Privacy => None,
        })
    }

    /// Disjunction of every escalation predicate, or `None` when there is none.
    pub fn combined_escalation(&self) -> Option<TriggerExpr> {
        let all: Vec<_> = self.escalation_policies().cloned().collect();
        match all.len() {
            0 => None,
            1 => all.into_iter().next(),
            _ => Some(TriggerExpr::Or(all)),
        }
    }

    /// Same model without the listed rules; priorities are kept.
    pub fn without_rules(&self, removed: &BTreeSet<String>) -> ModelSpec {
        ModelSpec {
            attributes: self.attributes.clone(),
            rules: self.rules.iter().filter(|r| !removed.contains(&r.id)).cloned().collect(),
            policies: self.policies.clone(),
        }
    }

    pub fn eval(&self, expr: &TriggerExpr, state: &State) -> bool {
        eval_trigger(self, expr, state)
    }

    pub fn to_json(&self) -> Json {
        let attributes: Vec<Json> = self
            .attributes
            .iter()
            .map(|a| {
                let mut m = Map::new();
                m.insert("name".into(), json!(a.name));
                m.insert("kind".into(), json!(if a.is_sensor() { "sensor" } else { "actuator" }));
                m.insert("domain".into(), a.domain.to_json());
                m.insert("vulnerable".into(), json!(a.vulnerable));
                m.insert("label".into(), json!(a.label.as_str()));
                if let Some(w) = &a.window {
                    m.insert("window".into(), w.to_json());
                }
                m.insert("initial".into(), a.initial.to_json());
                Json::Object(m)
            })
            .collect();
        let rules: Vec<Json> = self
            .rules
            .iter()
            .map(|r| {
                let then: Map<String, Json> = r.action.iter().map(|(a, v)| (a.clone(), v.to_json())).collect();
                json!({ "id": r.id, "if": r.trigger.to_json(), "then": then })
            })
            .collect();
        let policies: Vec<Json> = self
            .policies
            .iter()
            .map(|p| match p {
                Policy::Escalation { never } => json!({ "type": "escalation", "never": never.to_json() }),
                Policy::Privacy => json!({ "type": "privacy" }),
            })
            .collect();
        json!({ "attributes": attributes, "rules": rules, "policies": policies })
    }

    /// Pretty JSON document terminated by a newline.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("model serializes");
        s.push('\n');
        s
    }
}

fn validate_domain(d: &ValueDomain, entity: &str) -> Result<(), ModelError> {
    let bad = |reason: &str| ModelError::InvalidDomain { attr: entity.to_string(), reason: reason.into() };
    match d {
        ValueDomain::Enum(vals) => {
            if vals.is_empty() {
                return Err(bad("enum domain is empty"));
            }
            let mut seen = HashSet::new();
            if let Some(dup) = vals.iter().find(|v| !seen.insert(v.as_str())) {
                return Err(bad(&format!("duplicate enum value `{dup}`")));
            }
        }
        ValueDomain::IntRange { lo, hi } => {
            if lo > hi {
                return Err(bad("range has lo > hi"));
            }
        }
    }
    if d.size() > MAX_DOMAIN_SIZE {
        return Err(bad(&format!("domain has more than {MAX_DOMAIN_SIZE} values")));
    }
    Ok(())
}

fn validate_attribute(a: &AttributeDecl) -> Result<(), ModelError> {
    validate_domain(&a.domain, &a.name)?;
    if let Some(w) = &a.window {
        if a.kind == AttributeKind::Actuator {
            return Err(ModelError::Invalid {
                entity: format!("attribute {}", a.name),
                reason: "actuators cannot declare a window".into(),
            });
        }
        validate_domain(w, &a.name)?;
        if !w.is_subset_of(&a.domain) {
            return Err(ModelError::WindowNotSubset { attr: a.name.clone() });
        }
    }
    if !a.domain.contains(&a.initial) {
        return Err(ModelError::LiteralOutsideDomain {
            entity: format!("attribute {}", a.name),
            attr: a.name.clone(),
            value: a.initial.to_string(),
        });
    }
    Ok(())
}

fn validate_expr(attrs: &[AttributeDecl], e: &TriggerExpr, ctx: &str) -> Result<(), ModelError> {
    for atom in e.atoms() {
        let decl = attrs
            .iter()
            .find(|a| a.name == atom.attr)
            .ok_or_else(|| ModelError::UnknownAttribute { entity: ctx.to_string(), attr: atom.attr.clone() })?;
        if atom.op.is_order() && !decl.domain.is_int() {
            return Err(ModelError::Invalid {
                entity: ctx.to_string(),
                reason: format!("order comparison `{}` on non-integer attribute `{}`", atom.op.symbol(), atom.attr),
            });
        }
        if !decl.domain.contains(&atom.value) {
            return Err(ModelError::LiteralOutsideDomain {
                entity: ctx.to_string(),
                attr: atom.attr.clone(),
                value: atom.value.to_string(),
            });
        }
    }
    Ok(())
}

/// Evaluates `expr` on `state`, a state of `model`.
pub fn eval_trigger(model: &ModelSpec, expr: &TriggerExpr, state: &State) -> bool {
    expr.eval_with(&|name: &str| {
        let idx = model.index_of(name).expect("validated attribute reference");
        &state.0[idx]
    })
}

/// Two rules assigning different values to the same attribute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Conflict {
    pub first: String,
    pub second: String,
    pub attr: String,
}

/// Every pair of rules that assign different literals to one attribute,
/// regardless of whether their triggers can hold together. `first` is the
/// rule with the lower priority index.
pub fn detect_conflicts(rules: &[Rule]) -> Vec<Conflict> {
    let mut out = Vec::new();
    for (i, a) in rules.iter().enumerate() {
        for b in &rules[i + 1..] {
            let (hi, lo) = if (a.priority, &a.id) <= (b.priority, &b.id) { (a, b) } else { (b, a) };
            for (attr, v) in &hi.action {
                if let Some(w) = lo.assigns(attr) {
                    if v != w {
                        out.push(Conflict { first: hi.id.clone(), second: lo.id.clone(), attr: attr.clone() });
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Parsing

/// Parses and validates a JSON model document.
pub fn parse_model(text: &str) -> Result<ModelSpec, ModelError> {
    let doc: Json = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let root = doc.as_object().ok_or_else(|| shape("document", "top level must be an object"))?;

    let attrs_json = root
        .get("attributes")
        .and_then(Json::as_array)
        .ok_or_else(|| shape("document", "missing `attributes` array"))?;
    let attributes =
        attrs_json.iter().enumerate().map(|(i, a)| parse_attribute(i, a)).collect::<Result<Vec<_>, _>>()?;

    let empty = Vec::new();
    let rules_json = match root.get("rules") {
        None => &empty,
        Some(r) => r.as_array().ok_or_else(|| shape("document", "`rules` must be an array"))?,
    };
    let mut rules = Vec::with_capacity(rules_json.len());
    for (i, r) in rules_json.iter().enumerate() {
        rules.push(parse_rule(i, r, &attributes)?);
    }

    let policies_json = match root.get("policies") {
        None => &empty,
        Some(p) => p.as_array().ok_or_else(|| shape("document", "`policies` must be an array"))?,
    };
    let mut policies = Vec::new();
    for (i, p) in policies_json.iter().enumerate() {
        let ctx = format!("policy #{i}");
        let obj = p.as_object().ok_or_else(|| shape(&ctx, "must be an object"))?;
        match obj.get("type").and_then(Json::as_str) {
            Some("escalation") => {
                let e = obj.get("never").ok_or_else(|| shape(&ctx, "missing `never`"))?;
                policies.push(Policy::Escalation { never: parse_expr(e, &attributes, &ctx)? });
            }
            Some("privacy") => policies.push(Policy::Privacy),
            _ => return Err(shape(&ctx, "`type` must be \"escalation\" or \"privacy\"")),
        }
    }

    ModelSpec::new(attributes, rules, policies)
}

fn shape(entity: &str, reason: &str) -> ModelError {
    ModelError::Invalid { entity: entity.to_string(), reason: reason.to_string() }
}

fn parse_domain(j: &Json, ctx: &str) -> Result<ValueDomain, ModelError> {
    let obj = j.as_object().ok_or_else(|| shape(ctx, "domain must be an object"))?;
    if let Some(vals) = obj.get("enum") {
        let vals = vals.as_array().ok_or_else(|| shape(ctx, "`enum` must be an array"))?;
        let names = vals
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| shape(ctx, "enum values must be strings")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ValueDomain::Enum(names))
    } else if let Some(r) = obj.get("range") {
        let bounds = r.as_array().filter(|b| b.len() == 2).ok_or_else(|| shape(ctx, "`range` must be [lo, hi]"))?;
        let lo = bounds[0].as_i64().ok_or_else(|| shape(ctx, "range bounds must be integers"))?;
        let hi = bounds[1].as_i64().ok_or_else(|| shape(ctx, "range bounds must be integers"))?;
        Ok(ValueDomain::IntRange { lo, hi })
    } else {
        Err(shape(ctx, "domain needs `enum` or `range` (unbounded domains are not supported)"))
    }
}

fn parse_value(j: &Json, ctx: &str) -> Result<Value, ModelError> {
    match j {
        Json::String(s) => Ok(Value::Sym(s.clone())),
        Json::Number(n) => {
            n.as_i64().map(Value::Int).ok_or_else(|| shape(ctx, &format!("value {n} is not an integer")))
        }
        Json::Object(o) if o.contains_key("attr") => {
            Err(shape(ctx, "attribute-vs-attribute comparison is not supported; compare against a literal"))
        }
        other => Err(shape(ctx, &format!("unsupported value {other}"))),
    }
}

fn parse_attribute(i: usize, j: &Json) -> Result<AttributeDecl, ModelError> {
    let obj = j.as_object().ok_or_else(|| shape(&format!("attribute #{i}"), "must be an object"))?;
    let name = obj
        .get("name")
        .and_then(Json::as_str)
        .ok_or_else(|| shape(&format!("attribute #{i}"), "missing `name`"))?
        .to_string();
    let ctx = format!("attribute {name}");
    let kind = match obj.get("kind").and_then(Json::as_str) {
        Some("sensor") => AttributeKind::Sensor,
        Some("actuator") => AttributeKind::Actuator,
        _ => return Err(shape(&ctx, "`kind` must be \"sensor\" or \"actuator\"")),
    };
    let domain = parse_domain(obj.get("domain").ok_or_else(|| shape(&ctx, "missing `domain`"))?, &ctx)?;
    let vulnerable = match obj.get("vulnerable") {
        None => false,
        Some(v) => v.as_bool().ok_or_else(|| shape(&ctx, "`vulnerable` must be a boolean"))?,
    };
    let label = match obj.get("label").map(|l| l.as_str()) {
        None | Some(Some("other")) => Label::Other,
        Some(Some("private")) => Label::Private,
        Some(Some("public")) => Label::Public,
        _ => return Err(shape(&ctx, "`label` must be \"private\", \"public\" or \"other\"")),
    };
    let window = obj.get("window").map(|w| parse_domain(w, &ctx)).transpose()?;
    let initial = parse_value(obj.get("initial").ok_or_else(|| shape(&ctx, "missing `initial`"))?, &ctx)?;
    Ok(AttributeDecl { name, domain, kind, vulnerable, label, window, initial })
}

fn parse_rule(i: usize, j: &Json, attrs: &[AttributeDecl]) -> Result<Rule, ModelError> {
    let obj = j.as_object().ok_or_else(|| shape(&format!("rule #{i}"), "must be an object"))?;
    let id =
        obj.get("id").and_then(Json::as_str).ok_or_else(|| shape(&format!("rule #{i}"), "missing `id`"))?.to_string();
    let ctx = format!("rule {id}");
    let trigger = parse_expr(obj.get("if").ok_or_else(|| shape(&ctx, "missing `if`"))?, attrs, &ctx)?;
    let then = obj.get("then").and_then(Json::as_object).ok_or_else(|| shape(&ctx, "`then` must be an object"))?;
    let action =
        then.iter().map(|(k, v)| Ok((k.clone(), parse_value(v, &ctx)?))).collect::<Result<Vec<_>, ModelError>>()?;
    Ok(Rule { id, priority: i, trigger, action })
}

fn parse_expr(j: &Json, attrs: &[AttributeDecl], ctx: &str) -> Result<TriggerExpr, ModelError> {
    let obj = j.as_object().ok_or_else(|| shape(ctx, "expression must be an object"))?;
    let op = obj.get("op").and_then(Json::as_str).ok_or_else(|| shape(ctx, "expression missing `op`"))?;
    let args = || -> Result<Vec<TriggerExpr>, ModelError> {
        obj.get("args")
            .and_then(Json::as_array)
            .ok_or_else(|| shape(ctx, &format!("`{op}` needs an `args` array")))?
            .iter()
            .map(|a| parse_expr(a, attrs, ctx))
            .collect()
    };
    match op {
        "and" => Ok(TriggerExpr::And(args()?)),
        "or" => Ok(TriggerExpr::Or(args()?)),
        "not" => {
            let mut xs = args()?;
            if xs.len() != 1 {
                return Err(shape(ctx, "`not` takes exactly one argument"));
            }
            Ok(TriggerExpr::Not(Box::new(xs.pop().unwrap())))
        }
        _ => {
            let cmp = CmpOp::parse(op).ok_or_else(|| shape(ctx, &format!("unknown operator `{op}`")))?;
            if obj.contains_key("args") {
                return Err(shape(
                    ctx,
                    "attribute-vs-attribute comparison is not supported; compare against a literal",
                ));
            }
            let attr = obj.get("attr").and_then(Json::as_str).ok_or_else(|| shape(ctx, "comparison missing `attr`"))?;
            if !attrs.iter().any(|a| a.name == attr) {
                return Err(ModelError::UnknownAttribute { entity: ctx.to_string(), attr: attr.to_string() });
            }
            let value = parse_value(obj.get("value").ok_or_else(|| shape(ctx, "comparison missing `value`"))?, ctx)?;
            Ok(TriggerExpr::atom(attr, cmp, value))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_threshold_rule() {
        let m = fixtures::smart_home();
        let r11 = m.rule("R11").unwrap();
        assert_eq!(r11.trigger, TriggerExpr::atom("temperature", CmpOp::Ge, 32));
        assert_eq!(r11.action, vec![("ac".to_string(), Value::sym("ON"))]);
    }

    #[test]
    fn zero_rules_is_valid() {
        let doc =
            r#"{"attributes":[{"name":"x","kind":"actuator","domain":{"enum":["A","B"]},"initial":"A"}],"rules":[]}"#;
        let m = parse_model(doc).unwrap();
        assert!(m.rules.is_empty());
        assert_eq!(m.attributes[0].label, Label::Other);
        assert!(!m.attributes[0].vulnerable);
    }

    #[test]
    fn assignment_outside_domain_is_rejected() {
        let doc = r#"{"attributes":[{"name":"lock","kind":"actuator","domain":{"enum":["LOCKED","UNLOCKED"]},"initial":"LOCKED"}],
            "rules":[{"id":"R","if":{"op":"=","attr":"lock","value":"LOCKED"},"then":{"lock":"OPEN"}}]}"#;
        let err = parse_model(doc).unwrap_err();
        assert!(matches!(err, ModelError::LiteralOutsideDomain { ref entity, .. } if entity == "rule R"), "{err}");
        assert!(err.to_string().contains("literal outside domain"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_model("{\n  \"attributes\": [,\n}").unwrap_err();
        match err {
            ModelError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn structural_errors() {
        let base = |attrs: &str, rules: &str| format!(r#"{{"attributes":[{attrs}],"rules":[{rules}]}}"#);
        let x = r#"{"name":"x","kind":"sensor","domain":{"range":[0,5]},"initial":0}"#;
        let cases = [
            (base(&format!("{x},{x}"), ""), "duplicate"),
            (base(x, r#"{"id":"R","if":{"op":"=","attr":"y","value":1},"then":{"x":1}}"#), "unknown attribute"),
            (
                base(
                    r#"{"name":"x","kind":"sensor","domain":{"range":[0,5]},"window":{"range":[3,9]},"initial":0}"#,
                    "",
                ),
                "window",
            ),
            (
                base(
                    r#"{"name":"x","kind":"actuator","domain":{"enum":["A"]},"initial":"A"}"#,
                    r#"{"id":"R","if":{"op":"<","attr":"x","value":"A"},"then":{"x":"A"}}"#,
                ),
                "order comparison",
            ),
            (
                base(x, r#"{"id":"R","if":{"op":"=","attr":"x","value":{"attr":"x"}},"then":{}}"#),
                "attribute-vs-attribute",
            ),
            (base(x, r#"{"id":"R","if":{"op":"=","attr":"x","value":1},"then":{"x":2}}"#), "sensor"),
            (base(r#"{"name":"x","kind":"sensor","domain":{},"initial":0}"#, ""), "unbounded"),
            (base(r#"{"name":"x","kind":"actuator","domain":{"enum":["A","A"]},"initial":"A"}"#, ""), "duplicate enum"),
        ];
        for (doc, needle) in cases {
            let err = parse_model(&doc).unwrap_err().to_string();
            assert!(err.contains(needle), "expected `{needle}` in `{err}`");
        }
    }

    #[test]
    fn eval_examples() {
        let m = fixtures::smart_home();
        let mut s = m.initial_state();
        s.0[m.index_of("temperature").unwrap()] = Value::Int(30);
        assert!(m.eval(&m.rule("R10").unwrap().trigger, &s));

        let x = TriggerExpr::Not(Box::new(TriggerExpr::eq("tv", "OFF")));
        assert!(!m.eval(&x, &s));

        s.0[m.index_of("occupancy").unwrap()] = Value::sym("TRUE");
        let both = TriggerExpr::And(vec![TriggerExpr::eq("occupancy", "TRUE"), TriggerExpr::eq("tv", "OFF")]);
        assert!(m.eval(&both, &s));
    }

    #[test]
    fn conflicts() {
        let m = fixtures::smart_home();
        let c = detect_conflicts(&m.rules);
        assert!(c.contains(&Conflict { first: "R10".into(), second: "R12".into(), attr: "fan".into() }));
        assert!(detect_conflicts(&m.rules[..1]).is_empty());

        let same = vec![m.rule("R6").unwrap().clone(), {
            let mut r = m.rule("R6").unwrap().clone();
            r.id = "R6b".into();
            r.priority = 99;
            r
        }];
        assert!(detect_conflicts(&same).is_empty());
    }

    #[test]
    fn serialization_round_trips_fixture() {
        let m = fixtures::smart_home();
        let again = parse_model(&m.to_json_string()).unwrap();
        assert_eq!(m, again);
    }
}
