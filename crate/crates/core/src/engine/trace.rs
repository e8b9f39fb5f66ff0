use serde_json::{json, Map, Value as Json};

use super::compiled::CompiledModel;
use crate::model::{State, Value};

/// One position of a counterexample. Privacy traces fill `right` with the
/// state of the second copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub state: State,
    pub right: Option<State>,
    /// Rules satisfied in the previous state, in priority order.
    pub fired: Vec<String>,
    /// Same for the second copy of a privacy trace.
    pub fired_right: Vec<String>,
    /// Attacker-controlled attributes whose value changed entering this step.
    pub injected: Vec<(String, Value)>,
    /// Sensor readings that changed entering this step.
    pub env: Vec<(String, Value)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub attributes: Vec<String>,
    pub steps: Vec<Step>,
}

impl Trace {
    /// Builds an annotated trace from concrete index states. `pairs[i].1`
    /// is the second copy for privacy traces.
    pub fn from_states(cm: &CompiledModel, attacker: bool, pairs: &[(Vec<u16>, Option<Vec<u16>>)]) -> Trace {
        let ids = |s: &[u16]| -> Vec<String> { cm.satisfied(s).into_iter().map(|r| cm.rules[r].id.clone()).collect() };
        let mut steps = Vec::with_capacity(pairs.len());
        for (i, (l, r)) in pairs.iter().enumerate() {
            let mut step = Step {
                state: cm.decode(l),
                right: r.as_ref().map(|r| cm.decode(r)),
                fired: Vec::new(),
                fired_right: Vec::new(),
                injected: Vec::new(),
                env: Vec::new(),
            };
            if i > 0 {
                let (pl, pr) = &pairs[i - 1];
                step.fired = ids(pl);
                if let Some(pr) = pr {
                    step.fired_right = ids(pr);
                }
                for a in 0..cm.len() {
                    if pl[a] == l[a] {
                        continue;
                    }
                    let entry = (cm.names[a].clone(), cm.value(a, l[a]));
                    if cm.vulnerable[a] && attacker {
                        step.injected.push(entry);
                    } else if cm.sensor[a] {
                        step.env.push(entry);
                    }
                }
            }
            steps.push(step);
        }
        Trace { attributes: cm.names.clone(), steps }
    }

    pub fn is_paired(&self) -> bool {
        self.steps.first().is_some_and(|s| s.right.is_some())
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> &Step {
        self.steps.last().expect("trace has at least the initial state")
    }

    /// Rule ids fired along the trace, step by step.
    pub fn fired_sequence(&self) -> Vec<&str> {
        self.steps.iter().flat_map(|s| s.fired.iter().map(String::as_str)).collect()
    }

    fn state_json(&self, s: &State) -> Json {
        Json::Object(self.attributes.iter().cloned().zip(s.0.iter().map(Value::to_json)).collect())
    }

    pub fn to_json(&self) -> Json {
        let pairs = |xs: &[(String, Value)]| -> Json {
            xs.iter().map(|(a, v)| json!({ "attr": a, "value": v.to_json() })).collect()
        };
        self.steps
            .iter()
            .map(|s| {
                let mut m = Map::new();
                match &s.right {
                    None => {
                        m.insert("state".into(), self.state_json(&s.state));
                        m.insert("fired".into(), json!(s.fired));
                    }
                    Some(r) => {
                        m.insert("left".into(), self.state_json(&s.state));
                        m.insert("right".into(), self.state_json(r));
                        m.insert("fired".into(), json!(s.fired));
                        m.insert("fired_right".into(), json!(s.fired_right));
                    }
                }
                m.insert("injected".into(), pairs(&s.injected));
                m.insert("env".into(), pairs(&s.env));
                Json::Object(m)
            })
            .collect()
    }

    /// Multi-line listing; only attributes that changed are shown after the
    /// first step.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let show = |s: &State, prev: Option<&State>| -> String {
            self.attributes
                .iter()
                .enumerate()
                .filter(|(i, _)| prev.is_none_or(|p| p.0[*i] != s.0[*i]))
                .map(|(i, a)| format!("{a}={}", s.0[i]))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for (i, s) in self.steps.iter().enumerate() {
            let prev = i.checked_sub(1).map(|p| &self.steps[p]);
            out.push_str(&format!("  step {i}:"));
            if !s.fired.is_empty() {
                out.push_str(&format!(" fired [{}]", s.fired.join(", ")));
            }
            if s.right.is_some() && !s.fired_right.is_empty() {
                out.push_str(&format!(" fired' [{}]", s.fired_right.join(", ")));
            }
            let inj: Vec<String> = s.injected.iter().map(|(a, v)| format!("{a}={v}")).collect();
            if !inj.is_empty() {
                out.push_str(&format!(" injected [{}]", inj.join(", ")));
            }
            out.push('\n');
            out.push_str(&format!("    {}\n", show(&s.state, prev.map(|p| &p.state))));
            if let Some(r) = &s.right {
                out.push_str(&format!("    ' {}\n", show(r, prev.and_then(|p| p.right.as_ref()))));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Secure,
    Attack(Trace),
    /// The search stopped before covering the reachable states.
    Unknown(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Secure => "secure",
            Verdict::Attack(_) => "attack",
            Verdict::Unknown(_) => "unknown",
        }
    }

    pub fn is_attack(&self) -> bool {
        matches!(self, Verdict::Attack(_))
    }

    pub fn is_secure(&self) -> bool {
        matches!(self, Verdict::Secure)
    }

    pub fn trace(&self) -> Option<&Trace> {
        match self {
            Verdict::Attack(t) => Some(t),
            _ => None,
        }
    }

    /// Process exit status for this verdict.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Secure => 0,
            Verdict::Attack(_) => 2,
            Verdict::Unknown(_) => 3,
        }
    }
}
