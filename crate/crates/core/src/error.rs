use thiserror::Error;

/// Problems found while reading or validating a model document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("{entity}: unknown attribute `{attr}`")]
    UnknownAttribute { entity: String, attr: String },

    #[error("{entity}: literal outside domain: `{value}` is not a value of `{attr}`")]
    LiteralOutsideDomain { entity: String, attr: String, value: String },

    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },

    #[error("attribute {attr}: window is not a subset of the domain")]
    WindowNotSubset { attr: String },

    #[error("attribute {attr}: invalid domain: {reason}")]
    InvalidDomain { attr: String, reason: String },

    #[error("{entity}: {reason}")]
    Invalid { entity: String, reason: String },
}

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("configuration error: {0}")]
    Config(String),

    /// A counterexample could not be mapped back onto the input model.
    #[error("internal error: {0}")]
    Internal(String),
}

/// Errors raised by the synthetic generators.
#[derive(Debug, Error)]
pub enum GenError {
    #[error("infeasible generator settings: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Model(#[from] ModelError),
}
