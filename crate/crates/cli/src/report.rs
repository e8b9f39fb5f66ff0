//! Reports printed by the commands.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use chaincheck_core::engine::{Mode, Verdict};
use chaincheck_core::pipeline::{CheckOptions, EngineKind, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub attributes_before: usize,
    pub rules_before: usize,
    pub attributes_after: usize,
    pub rules_after: usize,
    /// Product of domain sizes; may exceed the exact integer range of JSON
    /// numbers.
    pub state_space_before: f64,
    pub state_space_after: f64,
    pub states_explored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTimings {
    pub grouping_ms: f64,
    pub pruning_ms: f64,
    pub checking_ms: f64,
    pub lifting_ms: f64,
    pub total_ms: f64,
}

/// Context of a re-check in watch mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchInfo {
    pub seq: usize,
    /// Milliseconds since the Unix epoch when the check started.
    pub timestamp_ms: u64,
    /// `start`, `interval`, `update` or `window-violation`.
    pub trigger: String,
    /// The observed state the check ran from.
    pub state: Map<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub mode: String,
    pub engine: String,
    /// `secure`, `attack` or `unknown`.
    pub verdict: String,
    /// Why the verdict is unknown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Counterexample steps; present only for attacks.
    pub trace: Option<Json>,
    pub stats: ReportStats,
    pub timings: ReportTimings,
    pub warnings: Vec<String>,
    pub dropped_attributes: Vec<String>,
    pub dropped_rules: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watch: Option<WatchInfo>,
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Escalation => "escalation",
        Mode::Privacy => "privacy",
    }
}

impl RunReport {
    pub fn new(model: &str, opts: &CheckOptions, out: &Outcome) -> RunReport {
        let reason = match &out.verdict {
            Verdict::Unknown(r) => Some(r.clone()),
            _ => None,
        };
        RunReport {
            model: model.to_string(),
            mode: mode_name(opts.mode).into(),
            engine: match opts.engine {
                EngineKind::Fast => "fast",
                EngineKind::Oracle => "oracle",
            }
            .into(),
            verdict: out.verdict.name().into(),
            reason,
            trace: out.verdict.trace().map(|t| t.to_json()),
            stats: ReportStats {
                attributes_before: out.stats.attributes_before,
                rules_before: out.stats.rules_before,
                attributes_after: out.stats.attributes_after,
                rules_after: out.stats.rules_after,
                state_space_before: out.stats.state_space_before as f64,
                state_space_after: out.stats.state_space_after as f64,
                states_explored: out.stats.states_explored,
            },
            timings: ReportTimings {
                grouping_ms: ms(out.timings.grouping),
                pruning_ms: ms(out.timings.pruning),
                checking_ms: ms(out.timings.checking),
                lifting_ms: ms(out.timings.lifting),
                total_ms: ms(out.timings.total()),
            },
            warnings: out.warnings.clone(),
            dropped_attributes: out.dropped_attributes.clone(),
            dropped_rules: out.dropped_rules.clone(),
            watch: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        verdict_exit_code(&self.verdict)
    }

    /// Pretty JSON followed by one newline.
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Single-line JSON followed by one newline.
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(w) = &self.watch {
            let _ = writeln!(out, "[#{} at {} ms, {}]", w.seq, w.timestamp_ms, w.trigger);
        }
        let _ = write!(out, "verdict: {}", self.verdict);
        if let Some(r) = &self.reason {
            let _ = write!(out, " ({r})");
        }
        out.push('\n');
        if let Some(Json::Array(steps)) = &self.trace {
            let _ = writeln!(out, "trace ({} transitions):", steps.len().saturating_sub(1));
            out.push_str(&render_steps(steps));
        }
        let s = &self.stats;
        let _ = writeln!(
            out,
            "model: {} attributes, {} rules; checked: {} attributes, {} rules; {} states explored",
            s.attributes_before, s.rules_before, s.attributes_after, s.rules_after, s.states_explored
        );
        let t = &self.timings;
        let _ = writeln!(
            out,
            "time: grouping {:.2} ms, pruning {:.2} ms, checking {:.2} ms, total {:.2} ms",
            t.grouping_ms, t.pruning_ms, t.checking_ms, t.total_ms
        );
        if !self.dropped_attributes.is_empty() {
            let _ = writeln!(out, "pruned attributes: {}", self.dropped_attributes.join(", "));
        }
        if !self.dropped_rules.is_empty() {
            let _ = writeln!(out, "pruned rules: {}", self.dropped_rules.join(", "));
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

pub fn verdict_exit_code(verdict: &str) -> i32 {
    match verdict {
        "secure" => 0,
        "attack" => 2,
        _ => 3,
    }
}

fn assignments(v: &Json) -> String {
    v.as_array()
        .map(|xs| {
            xs.iter()
                .map(|x| format!("{}={}", x["attr"].as_str().unwrap_or("?"), scalar(&x["value"])))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .unwrap_or_default()
}

fn scalar(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn state_line(state: &Json, prev: Option<&Json>) -> String {
    let Some(obj) = state.as_object() else { return String::new() };
    let changed: Vec<String> = obj
        .iter()
        .filter(|(k, v)| prev.and_then(|p| p.get(k.as_str())) != Some(*v))
        .map(|(k, v)| format!("{k}={}", scalar(v)))
        .collect();
    if changed.is_empty() {
        "(unchanged)".into()
    } else {
        changed.join(" ")
    }
}

/// Text form of serialized trace steps; after the first step only changed
/// attributes are listed.
pub fn render_steps(steps: &[Json]) -> String {
    let mut out = String::new();
    for (i, s) in steps.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| &steps[p]);
        let _ = write!(out, "  step {i}:");
        let fired = s["fired"].as_array().map(|f| f.iter().filter_map(Json::as_str).collect::<Vec<_>>().join(", "));
        if let Some(f) = fired.filter(|f| !f.is_empty()) {
            let _ = write!(out, " fired [{f}]");
        }
        let fired_right =
            s["fired_right"].as_array().map(|f| f.iter().filter_map(Json::as_str).collect::<Vec<_>>().join(", "));
        if let Some(f) = fired_right.filter(|f| !f.is_empty()) {
            let _ = write!(out, " fired' [{f}]");
        }
        let inj = assignments(&s["injected"]);
        if !inj.is_empty() {
            let _ = write!(out, " injected [{inj}]");
        }
        let env = assignments(&s["env"]);
        if !env.is_empty() {
            let _ = write!(out, " env [{env}]");
        }
        out.push('\n');
        if s.get("state").is_some() {
            let _ = writeln!(out, "    {}", state_line(&s["state"], prev.map(|p| &p["state"])));
        } else {
            let _ = writeln!(out, "    {}", state_line(&s["left"], prev.map(|p| &p["left"])));
            let _ = writeln!(out, "    ' {}", state_line(&s["right"], prev.map(|p| &p["right"])));
        }
    }
    out
}
