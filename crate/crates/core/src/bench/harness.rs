//! Timing runs over corpus samples.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{generate_pool, sample_corpus, PoolSpec};
use crate::error::GenError;
use crate::model::parse_model;
use crate::pipeline::{run_check, CheckOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchEngine {
    /// Grouping and pruning enabled.
    Optimized,
    /// Same engine with both reductions disabled.
    Baseline,
}

impl BenchEngine {
    pub fn name(self) -> &'static str {
        match self {
            BenchEngine::Optimized => "optimized",
            BenchEngine::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Per-run budget; runs that hit it are reported as `unknown`.
    pub timeout: Duration,
    pub max_states: usize,
    pub pool: PoolSpec,
    pub engines: Vec<BenchEngine>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![10, 50, 100],
            trials: 3,
            seed: 0,
            timeout: Duration::from_secs(30),
            max_states: 5_000_000,
            pool: PoolSpec::default(),
            engines: vec![BenchEngine::Optimized, BenchEngine::Baseline],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub trial: usize,
    pub engine: &'static str,
    pub phase: &'static str,
    pub millis: f64,
    pub verdict: String,
}

pub const PHASES: [&str; 5] = ["parse", "grouping", "pruning", "checking", "total"];

/// Seed for trial `trial`: each trial draws from its own stream of the
/// master generator.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

/// Runs every engine on `trials` samples of each size. Each run yields one
/// row per phase.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>, GenError> {
    let pool = generate_pool(&cfg.pool)?;
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        for trial in 0..cfg.trials {
            let sample = sample_corpus(&pool, size, trial_seed(cfg.seed ^ size as u64, trial))?;
            let text = sample.to_json_string();
            for &engine in &cfg.engines {
                let t = Instant::now();
                let model = parse_model(&text)?;
                let parse = t.elapsed();
                let mut opts = CheckOptions {
                    max_states: cfg.max_states,
                    time_budget: Some(cfg.timeout),
                    ..CheckOptions::default()
                };
                if engine == BenchEngine::Baseline {
                    opts = opts.unoptimized();
                }
                let (verdict, timings) = match run_check(&model, &opts) {
                    Ok(out) => (out.verdict.name().to_string(), out.timings),
                    Err(e) => (format!("error: {e}"), Default::default()),
                };
                let phases = [parse, timings.grouping, timings.pruning, timings.checking, parse + timings.total()];
                for (phase, d) in PHASES.iter().zip(phases) {
                    rows.push(BenchRow {
                        size,
                        trial,
                        engine: engine.name(),
                        phase,
                        millis: d.as_secs_f64() * 1e3,
                        verdict: verdict.clone(),
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("size,trial,engine,phase,millis,verdict\n");
    for r in rows {
        let verdict = if r.verdict.contains([',', '"']) {
            format!("\"{}\"", r.verdict.replace('"', "\"\""))
        } else {
            r.verdict.clone()
        };
        let _ = writeln!(out, "{},{},{},{},{:.3},{}", r.size, r.trial, r.engine, r.phase, r.millis, verdict);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub size: usize,
    pub engine: &'static str,
    pub runs: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    /// Runs that did not finish within budget; their time is a lower bound.
    pub censored: usize,
}

/// Per size and engine statistics of the `total` phase.
pub fn summarize(rows: &[BenchRow]) -> Vec<Summary> {
    let mut keys: Vec<(usize, &'static str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.size, r.engine)) {
            keys.push((r.size, r.engine));
        }
    }
    keys.into_iter()
        .map(|(size, engine)| {
            let sel: Vec<&BenchRow> =
                rows.iter().filter(|r| r.size == size && r.engine == engine && r.phase == "total").collect();
            let mut ms: Vec<f64> = sel.iter().map(|r| r.millis).collect();
            ms.sort_by(f64::total_cmp);
            let q = |p: f64| ms.get(((ms.len() as f64 - 1.0) * p).round() as usize).copied().unwrap_or(0.0);
            Summary {
                size,
                engine,
                runs: ms.len(),
                mean_ms: ms.iter().sum::<f64>() / ms.len().max(1) as f64,
                p50_ms: q(0.5),
                p90_ms: q(0.9),
                censored: sel.iter().filter(|r| r.verdict != "secure" && r.verdict != "attack").count(),
            }
        })
        .collect()
}
