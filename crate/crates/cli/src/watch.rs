//! Continuous re-checking against observed states.
//!
//! A reader thread forwards feed lines over a channel. The main loop runs one
//! check at a time: on every interval tick, after state updates, and right
//! away when a sensor reading leaves its window. Events that arrive while a
//! check runs are drained together and trigger a single re-check.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use tracing::{debug, warn};

use chaincheck_core::model::{AttributeDecl, Value, ValueDomain};
use chaincheck_core::pipeline::{run_check, CheckOptions};
use chaincheck_core::ModelSpec;

use crate::args::{Format, WatchCmd};
use crate::commands::load_model;
use crate::report::{verdict_exit_code, RunReport, WatchInfo};

enum Event {
    Line(String),
    Closed,
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Trigger {
    Interval,
    Update,
    WindowViolation,
}

impl Trigger {
    fn name(self) -> &'static str {
        match self {
            Trigger::Interval => "interval",
            Trigger::Update => "update",
            Trigger::WindowViolation => "window-violation",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchSummary {
    pub checks: usize,
    pub secure: usize,
    pub attack: usize,
    pub unknown: usize,
    pub updates: usize,
    pub skipped: usize,
    pub window_violations: usize,
    /// Verdict of the last check.
    pub last: String,
}

fn spawn_reader(feed: &str) -> Result<Receiver<Event>> {
    let reader: Box<dyn BufRead + Send> = if feed == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(feed).with_context(|| format!("cannot open feed {feed}"))?))
    };
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in reader.lines() {
            let ev = match line {
                Ok(l) => Event::Line(l),
                Err(e) => Event::Failed(e.to_string()),
            };
            let failed = matches!(ev, Event::Failed(_));
            if tx.send(ev).is_err() || failed {
                return;
            }
        }
        let _ = tx.send(Event::Closed);
    });
    Ok(rx)
}

fn json_value(v: &Json) -> Option<Value> {
    match v {
        Json::String(s) => Some(Value::sym(s.clone())),
        Json::Number(n) => n.as_i64().map(Value::Int),
        _ => None,
    }
}

/// Integer window of `width` values around `v`, shifted to fit the domain.
pub fn recenter(domain: &ValueDomain, v: i64, width: u32) -> Option<ValueDomain> {
    let ValueDomain::IntRange { lo, hi } = *domain else { return None };
    let w = i64::from(width.max(1)).min(hi - lo + 1);
    let mut a = v - (w - 1) / 2;
    a = a.clamp(lo, hi - w + 1);
    Some(ValueDomain::IntRange { lo: a, hi: a + w - 1 })
}

/// Smallest change to the window of `a` that admits `v`.
fn widen(a: &AttributeDecl, v: &Value) -> ValueDomain {
    match (a.window_domain(), v) {
        (ValueDomain::IntRange { lo, hi }, Value::Int(x)) => {
            ValueDomain::IntRange { lo: (*lo).min(*x), hi: (*hi).max(*x) }
        }
        (ValueDomain::Enum(vals), Value::Sym(s)) => {
            // keep domain order
            let ValueDomain::Enum(all) = &a.domain else { unreachable!("value checked against domain") };
            ValueDomain::Enum(all.iter().filter(|x| vals.contains(x) || *x == s).cloned().collect())
        }
        _ => a.domain.clone(),
    }
}

struct Watcher<'a> {
    model: ModelSpec,
    name: String,
    opts: CheckOptions,
    format: Format,
    window_width: Option<u32>,
    out: &'a mut dyn Write,
    warnings: Vec<String>,
    summary: WatchSummary,
}

impl Watcher<'_> {
    /// Applies one feed line; returns the strongest trigger it causes.
    fn apply(&mut self, line: &str) -> Option<Trigger> {
        if line.trim().is_empty() {
            return None;
        }
        let obj = match serde_json::from_str::<Json>(line) {
            Ok(Json::Object(o)) => o,
            Ok(_) => {
                self.warn("feed line is not a JSON object; skipped".into());
                return None;
            }
            Err(e) => {
                self.warn(format!("unreadable feed line ({e}); skipped"));
                return None;
            }
        };
        let mut trigger = None;
        for (attr, raw) in obj {
            let Some(i) = self.model.index_of(&attr) else {
                self.warn(format!("unknown attribute `{attr}` in feed; update skipped"));
                continue;
            };
            let decl = &self.model.attributes[i];
            let Some(v) = json_value(&raw).filter(|v| decl.domain.contains(v)) else {
                self.warn(format!("value {raw} is outside the domain of `{attr}`; update skipped"));
                continue;
            };
            self.summary.updates += 1;
            let mut t = Trigger::Update;
            if decl.is_sensor() {
                if !decl.in_window(&v) {
                    t = Trigger::WindowViolation;
                    self.summary.window_violations += 1;
                    debug!(attr, value = %v, "reading outside window");
                }
                let window = match (self.window_width, &v) {
                    (Some(w), Value::Int(x)) => recenter(&decl.domain, *x, w),
                    _ => None,
                };
                let window = match window {
                    Some(w) => Some(w),
                    None if t == Trigger::WindowViolation => Some(widen(decl, &v)),
                    None => None,
                };
                if let Some(w) = window {
                    self.model.attributes[i].window = Some(w);
                }
            }
            self.model.attributes[i].initial = v;
            trigger = trigger.max(Some(t));
        }
        trigger
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.summary.skipped += 1;
        self.warnings.push(msg);
    }

    fn check(&mut self, trigger: &str) -> Result<()> {
        let timestamp_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
        let state: Map<String, Json> =
            self.model.attributes.iter().map(|a| (a.name.clone(), a.initial.to_json())).collect();
        let snapshot =
            ModelSpec::new(self.model.attributes.clone(), self.model.rules.clone(), self.model.policies.clone())?;
        let outcome = run_check(&snapshot, &self.opts)?;
        let mut report = RunReport::new(&self.name, &self.opts, &outcome);
        report.warnings.splice(0..0, self.warnings.drain(..));
        self.summary.checks += 1;
        report.watch = Some(WatchInfo { seq: self.summary.checks, timestamp_ms, trigger: trigger.into(), state });
        match report.verdict.as_str() {
            "secure" => self.summary.secure += 1,
            "attack" => self.summary.attack += 1,
            _ => self.summary.unknown += 1,
        }
        self.summary.last = report.verdict.clone();
        let text = match self.format {
            Format::Json => report.to_json_line(),
            Format::Text => report.render_text(),
        };
        self.out.write_all(text.as_bytes())?;
        self.out.flush()?;
        Ok(())
    }
}

/// Runs until the feed closes. The exit status follows the last verdict.
pub fn cmd_watch(cmd: &WatchCmd, out: &mut dyn Write) -> Result<i32> {
    anyhow::ensure!(cmd.interval > 0, "--interval must be positive");
    let model = load_model(&cmd.model)?;
    let opts = cmd.flags.options()?;
    let rx = spawn_reader(&cmd.feed)?;
    let interval = Duration::from_millis(cmd.interval);
    let mut w = Watcher {
        model,
        name: cmd.model.display().to_string(),
        opts,
        format: cmd.flags.format,
        window_width: cmd.window_width,
        out,
        warnings: Vec::new(),
        summary: WatchSummary::default(),
    };

    w.check("start")?;
    let mut next_tick = Instant::now() + interval;
    let mut open = true;
    while open {
        let first = match rx.recv_timeout(next_tick.saturating_duration_since(Instant::now())) {
            Ok(ev) => ev,
            Err(RecvTimeoutError::Timeout) => {
                w.check(Trigger::Interval.name())?;
                next_tick = Instant::now() + interval;
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        };
        // coalesce everything already queued into one re-check
        let mut trigger = None;
        let mut pending = vec![first];
        while let Ok(ev) = rx.try_recv() {
            pending.push(ev);
        }
        for ev in pending {
            match ev {
                Event::Line(l) => trigger = trigger.max(w.apply(&l)),
                Event::Closed => open = false,
                Event::Failed(e) => {
                    w.warn(format!("feed read error: {e}"));
                    open = false;
                }
            }
        }
        if let Some(t) = trigger {
            w.check(t.name())?;
            next_tick = Instant::now() + interval;
        }
    }

    let summary = std::mem::take(&mut w.summary);
    match w.format {
        Format::Json => {
            let mut s = serde_json::to_string(&serde_json::json!({ "summary": summary }))?;
            s.push('\n');
            w.out.write_all(s.as_bytes())?;
        }
        Format::Text => writeln!(
            w.out,
            "watch finished: {} checks ({} secure, {} attack, {} unknown), {} updates, {} skipped, {} window violations",
            summary.checks,
            summary.secure,
            summary.attack,
            summary.unknown,
            summary.updates,
            summary.skipped,
            summary.window_violations
        )?,
    }
    Ok(verdict_exit_code(&summary.last))
}
