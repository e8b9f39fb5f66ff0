use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value as Json;

use chaincheck_core::bench::{self, BenchConfig, BenchEngine, GenSpec, PoolSpec};
use chaincheck_core::engine::Mode;
use chaincheck_core::mitigation::{mitigate, Status};
use chaincheck_core::pipeline::run_check;
use chaincheck_core::{parse_model, ModelSpec};

use crate::args::{BenchCmd, BenchEngineArg, CheckCmd, Format, GenCmd, MitigateCmd};
use crate::report::{mode_name, render_steps, RunReport};

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_model(&text).with_context(|| format!("invalid model {}", path.display()))
}

pub fn cmd_check(cmd: &CheckCmd, out: &mut dyn Write) -> Result<i32> {
    let model = load_model(&cmd.model)?;
    let opts = cmd.flags.options()?;
    let outcome = run_check(&model, &opts)?;
    let report = RunReport::new(&cmd.model.display().to_string(), &opts, &outcome);
    match cmd.flags.format {
        Format::Json => out.write_all(report.to_json_pretty().as_bytes())?,
        Format::Text => out.write_all(report.render_text().as_bytes())?,
    }
    Ok(report.exit_code())
}

#[derive(Debug, Serialize)]
struct WatchEntry {
    rule: String,
    /// Indices into `attacks` of the attacks this rule blocks.
    blocks: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct AttackEntry {
    rules: Vec<String>,
    trace: Json,
}

#[derive(Debug, Serialize)]
struct MitigationReport {
    model: String,
    mode: String,
    status: String,
    watchlist: Vec<WatchEntry>,
    attacks: Vec<AttackEntry>,
    /// Verdict after removing the watchlist rules.
    residual: String,
}

pub fn cmd_mitigate(cmd: &MitigateCmd, out: &mut dyn Write) -> Result<i32> {
    let model = load_model(&cmd.model)?;
    let opts = cmd.flags.options()?;
    let m = mitigate(&model, &opts, cmd.limit)?;
    let report = MitigationReport {
        model: cmd.model.display().to_string(),
        mode: mode_name(opts.mode).into(),
        status: m.status.name().into(),
        watchlist: m
            .watchlist
            .rules
            .iter()
            .map(|r| WatchEntry { rule: r.clone(), blocks: m.watchlist.blocks.get(r).cloned().unwrap_or_default() })
            .collect(),
        attacks: m
            .attacks
            .iter()
            .map(|a| AttackEntry { rules: a.rules.iter().cloned().collect(), trace: a.trace.to_json() })
            .collect(),
        residual: m.residual.name().into(),
    };
    match cmd.flags.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report)?;
            s.push('\n');
            out.write_all(s.as_bytes())?;
        }
        Format::Text => out.write_all(render_mitigation(&report).as_bytes())?,
    }
    Ok(match m.status {
        Status::Secure => 0,
        Status::Incomplete | Status::Unmitigable => 2,
        Status::Unknown => 3,
    })
}

fn render_mitigation(r: &MitigationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "status: {}", r.status);
    if r.watchlist.is_empty() {
        let _ = writeln!(out, "watchlist: empty");
    } else {
        let _ = writeln!(out, "watchlist:");
        for w in &r.watchlist {
            let ids: Vec<String> = w.blocks.iter().map(|i| format!("#{}", i + 1)).collect();
            let _ = writeln!(out, "  {} blocks attack {}", w.rule, ids.join(", "));
        }
    }
    for (i, a) in r.attacks.iter().enumerate() {
        let _ = writeln!(out, "attack #{} via [{}]:", i + 1, a.rules.join(", "));
        if let Json::Array(steps) = &a.trace {
            out.push_str(&render_steps(steps));
        }
    }
    let _ = writeln!(out, "without the watchlist: {}", r.residual);
    out
}

pub fn cmd_gen(cmd: &GenCmd, out: &mut dyn Write) -> Result<i32> {
    let spec = GenSpec {
        chain_length: cmd.length,
        distractors: cmd.distractors,
        negative: cmd.negative,
        seed: cmd.seed,
        extra_attributes: cmd.extra_attributes,
        domain_size: cmd.domain_size,
    };
    let inst = match Mode::from(cmd.mode) {
        Mode::Escalation => bench::gen_chain(&spec)?,
        Mode::Privacy => bench::gen_privacy_chain(&spec)?,
    };
    let text = inst.model.to_json_string();
    match &cmd.output {
        Some(p) => fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    tracing::info!(expect_attack = inst.expect_attack, chain = ?inst.chain, "generated model");
    Ok(0)
}

#[derive(Debug, Serialize)]
struct BenchSummary {
    size: usize,
    engine: String,
    runs: usize,
    mean_ms: f64,
    p50_ms: f64,
    p90_ms: f64,
    censored: usize,
}

#[derive(Debug, Serialize)]
struct Speedup {
    size: usize,
    /// Baseline mean over optimized mean.
    ratio: f64,
    /// The baseline hit its budget at least once, so the ratio is a lower
    /// bound.
    lower_bound: bool,
}

pub fn cmd_bench(cmd: &BenchCmd, out: &mut dyn Write) -> Result<i32> {
    if cmd.trials == 0 || cmd.sizes.is_empty() || cmd.engines.is_empty() {
        bail!("bench needs at least one size, one trial and one engine");
    }
    if !(cmd.timeout.is_finite() && cmd.timeout > 0.0) {
        bail!("--timeout must be a positive number of seconds");
    }
    let mut engines = Vec::new();
    for e in &cmd.engines {
        let e = match e {
            BenchEngineArg::Optimized => BenchEngine::Optimized,
            BenchEngineArg::Baseline => BenchEngine::Baseline,
        };
        if !engines.contains(&e) {
            engines.push(e);
        }
    }
    let cfg = BenchConfig {
        sizes: cmd.sizes.clone(),
        trials: cmd.trials,
        seed: cmd.seed,
        timeout: Duration::from_secs_f64(cmd.timeout),
        max_states: cmd.max_states,
        pool: PoolSpec { attributes: cmd.pool_attributes, rules: cmd.pool_rules, ..PoolSpec::default() },
        engines,
    };
    let rows = bench::run_benchmark(&cfg)?;
    let summary = bench::summarize(&rows);
    let speedups = speedups(&summary);
    for s in &summary {
        tracing::info!(size = s.size, engine = s.engine, mean_ms = s.mean_ms, censored = s.censored, "bench");
    }
    let text = match cmd.format {
        Format::Text => bench::to_csv(&rows),
        Format::Json => {
            let rows: Vec<Json> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "size": r.size, "trial": r.trial, "engine": r.engine,
                        "phase": r.phase, "millis": r.millis, "verdict": r.verdict,
                    })
                })
                .collect();
            let summary: Vec<BenchSummary> = summary
                .iter()
                .map(|s| BenchSummary {
                    size: s.size,
                    engine: s.engine.into(),
                    runs: s.runs,
                    mean_ms: s.mean_ms,
                    p50_ms: s.p50_ms,
                    p90_ms: s.p90_ms,
                    censored: s.censored,
                })
                .collect();
            let mut s = serde_json::to_string_pretty(
                &serde_json::json!({ "rows": rows, "summary": summary, "speedup": speedups }),
            )?;
            s.push('\n');
            s
        }
    };
    match &cmd.output {
        Some(p) => fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}

fn speedups(summary: &[bench::Summary]) -> Vec<Speedup> {
    let sizes: BTreeSet<usize> = summary.iter().map(|s| s.size).collect();
    sizes
        .into_iter()
        .filter_map(|size| {
            let find = |e: &str| summary.iter().find(|s| s.size == size && s.engine == e);
            let (opt, base) = (find("optimized")?, find("baseline")?);
            Some(Speedup { size, ratio: base.mean_ms / opt.mean_ms.max(1e-6), lower_bound: base.censored > 0 })
        })
        .collect()
}
