//! Explicit-state checking of escalation and privacy properties.

mod compiled;
mod search;
mod trace;

pub use compiled::{for_each_choice, CompiledModel, CompiledRule, Cond};
pub use search::{
    check, check_escalation, check_privacy, initial_pair_count, initial_pairs, EngineConfig, Mode, SearchResult,
    BUDGET_EXHAUSTED,
};
pub use trace::{Step, Trace, Verdict};
