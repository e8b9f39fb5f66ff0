//! Small models used by tests, examples and the acceptance suite.

use crate::model::{parse_model, AttributeDecl, Label, ModelSpec, Policy, TriggerExpr, Value, ValueDomain};

/// The smart-home example: ten attributes, twelve rules, and the
/// "unlocked while the camera is off" escalation policy.
pub const SMART_HOME_JSON: &str = include_str!("../fixtures/smart_home.json");

pub fn smart_home() -> ModelSpec {
    parse_model(SMART_HOME_JSON).expect("bundled fixture parses")
}

/// `lock = UNLOCKED AND camera = OFF`.
pub fn smart_home_policy() -> TriggerExpr {
    TriggerExpr::And(vec![TriggerExpr::eq("lock", "UNLOCKED"), TriggerExpr::eq("camera", "OFF")])
}

/// The smart home without an attacker and with every sensor pinned to its
/// current reading.
pub fn smart_home_closed() -> ModelSpec {
    let mut m = smart_home();
    for a in &mut m.attributes {
        a.vulnerable = false;
        if a.is_sensor() {
            a.window = Some(match &a.initial {
                Value::Int(i) => ValueDomain::IntRange { lo: *i, hi: *i },
                Value::Sym(s) => ValueDomain::Enum(vec![s.clone()]),
            });
        }
    }
    m
}

/// The smart home with a privacy policy instead of the escalation policy.
pub fn smart_home_privacy() -> ModelSpec {
    let mut m = smart_home();
    m.policies = vec![Policy::Privacy];
    m
}

/// Two sensors and no rules: a private occupancy reading and a public
/// temperature pinned at 25.
pub fn occupancy_temperature() -> ModelSpec {
    let bool_dom = ValueDomain::Enum(vec!["TRUE".into(), "FALSE".into()]);
    let occupancy =
        AttributeDecl { label: Label::Private, ..AttributeDecl::sensor("occupancy", bool_dom, Value::sym("FALSE")) };
    let temperature = AttributeDecl {
        label: Label::Public,
        window: Some(ValueDomain::IntRange { lo: 25, hi: 25 }),
        ..AttributeDecl::sensor("temperature", ValueDomain::IntRange { lo: 0, hi: 100 }, Value::Int(25))
    };
    ModelSpec::new(vec![occupancy, temperature], vec![], vec![Policy::Privacy]).expect("valid fixture")
}
