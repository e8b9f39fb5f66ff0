use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use chaincheck_core::engine::Mode;
use chaincheck_core::pipeline::{CheckOptions, EngineKind};

#[derive(Debug, Parser)]
#[command(name = "chaincheck", version, about = "Find attack chains in trigger-action smart home rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model for privilege escalation (or leaks with --mode privacy).
    Check(CheckCmd),
    /// Shorthand for `check --mode privacy`.
    Privacy(CheckCmd),
    /// Build a watchlist of rules whose gating blocks every attack found.
    Mitigate(MitigateCmd),
    /// Re-check continuously against a feed of observed states.
    Watch(WatchCmd),
    /// Write a synthetic attack-chain model.
    Gen(GenCmd),
    /// Time the optimized pipeline against the unreduced baseline.
    Bench(BenchCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Escalation,
    Privacy,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Escalation => Mode::Escalation,
            ModeArg::Privacy => Mode::Privacy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Fast,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct CheckFlags {
    #[arg(long, value_enum, default_value_t = ModeArg::Escalation)]
    pub mode: ModeArg,
    /// Skip value grouping.
    #[arg(long)]
    pub no_group: bool,
    /// Skip dependency pruning.
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long, value_enum, default_value_t = EngineArg::Fast)]
    pub engine: EngineArg,
    /// Give up (verdict unknown) after this many explored states.
    #[arg(long, default_value_t = 5_000_000)]
    pub max_states: usize,
    /// Give up (verdict unknown) after this many seconds of search.
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<f64>,
    /// Disable the attacker: vulnerable attributes follow rules like any other.
    #[arg(long)]
    pub no_attacker: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

impl CheckFlags {
    pub fn options(&self) -> anyhow::Result<CheckOptions> {
        let time_budget = match self.timeout {
            Some(s) if !(s.is_finite() && s > 0.0) => anyhow::bail!("--timeout must be a positive number of seconds"),
            Some(s) => Some(Duration::from_secs_f64(s)),
            None => None,
        };
        Ok(CheckOptions {
            mode: self.mode.into(),
            group: !self.no_group,
            prune: !self.no_prune,
            engine: match self.engine {
                EngineArg::Fast => EngineKind::Fast,
                EngineArg::Oracle => EngineKind::Oracle,
            },
            attacker_enabled: !self.no_attacker,
            max_states: self.max_states,
            time_budget,
            ..CheckOptions::default()
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct CheckCmd {
    /// Model file in the JSON spec format.
    pub model: PathBuf,
    #[command(flatten)]
    pub flags: CheckFlags,
}

#[derive(Debug, Clone, Args)]
pub struct MitigateCmd {
    pub model: PathBuf,
    #[command(flatten)]
    pub flags: CheckFlags,
    /// Maximum number of attacks to collect.
    #[arg(long, default_value_t = 32)]
    pub limit: usize,
}

#[derive(Debug, Clone, Args)]
pub struct WatchCmd {
    pub model: PathBuf,
    #[command(flatten)]
    pub flags: CheckFlags,
    /// Line-delimited JSON state updates; `-` reads standard input.
    #[arg(long, default_value = "-")]
    pub feed: String,
    /// Milliseconds between periodic re-checks.
    #[arg(long, default_value_t = 1000)]
    pub interval: u64,
    /// Recenter integer sensor windows on each observed value, keeping this
    /// many values.
    #[arg(long)]
    pub window_width: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct GenCmd {
    /// Number of rules in the chain (2 to 8).
    #[arg(long, default_value_t = 3)]
    pub length: usize,
    #[arg(long, default_value_t = 50)]
    pub distractors: usize,
    /// Break every link so that no attack exists.
    #[arg(long)]
    pub negative: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Escalation)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub extra_attributes: usize,
    #[arg(long, default_value_t = 3)]
    pub domain_size: usize,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchEngineArg {
    Optimized,
    Baseline,
}

#[derive(Debug, Clone, Args)]
pub struct BenchCmd {
    /// Rule counts to sample.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-run budget in seconds; slower runs are reported as unknown.
    #[arg(long, value_name = "SECS", default_value_t = 30.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 5_000_000)]
    pub max_states: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [BenchEngineArg::Optimized, BenchEngineArg::Baseline])]
    pub engines: Vec<BenchEngineArg>,
    #[arg(long, default_value_t = 190)]
    pub pool_attributes: usize,
    #[arg(long, default_value_t = 1000)]
    pub pool_rules: usize,
    /// `text` writes CSV.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}
