//! Synthetic instances and timing runs.

mod chain;
mod corpus;
mod harness;

pub use chain::{gen_chain, gen_privacy_chain, GenSpec, Instance};
pub use corpus::{generate_pool, random_model, sample_corpus, PoolSpec, RandomModelSpec};
pub use harness::{run_benchmark, summarize, to_csv, trial_seed, BenchConfig, BenchEngine, BenchRow, Summary, PHASES};
