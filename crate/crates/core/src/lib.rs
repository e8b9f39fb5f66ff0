//! Detection of trigger-action attack chains in smart-space automation rules.
//!
//! A [`model::ModelSpec`] describes devices, rules and policies. The
//! [`pipeline`] groups and prunes it, runs the explicit-state [`engine`] and
//! maps any counterexample back onto the input model. The [`oracle`] is a
//! slow reference checker used for differential testing.

pub mod bench;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod grouping;
pub mod mitigation;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod pruning;

pub use error::{CheckError, GenError, ModelError};
pub use model::{parse_model, ModelSpec, Policy, State, TriggerExpr, Value};
