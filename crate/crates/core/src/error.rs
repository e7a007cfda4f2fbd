//! Error type shared by every module.

use thiserror::Error;

use crate::pauli::SiteId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("site {0} is not part of this system")]
    UnknownSite(SiteId),

    #[error("cannot parse Pauli string {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error(
        "invalid X string from {from} to {to}: endpoints must satisfy from <= to with equal parity"
    )]
    InvalidXString { from: SiteId, to: SiteId },

    #[error("density terms {0} and {1} commute; closed-form modular Hamiltonian does not apply")]
    NotAnticommuting(String, String),

    #[error("density is not positive: sum of squared coefficients is {0}")]
    NotPositive(f64),

    #[error("density is not normalized: {0}")]
    NotNormalized(String),

    #[error("density is singular (delta = {0}) and no regulator was supplied")]
    SingularDensity(f64),

    #[error("generator supports are not chain ordered: {0}")]
    NonChainStructure(String),

    #[error("symbolic expansion exceeded the term budget of {0}")]
    TermBudgetExceeded(usize),

    #[error("gate {0} has no symbolic representation")]
    UnsupportedSymbolic(String),

    #[error("dense representation needs {needed} qubits but the ceiling is {limit}")]
    TooLarge { needed: usize, limit: usize },

    #[error("modular commutator varies by {deviation:e} across the regulator sweep")]
    EpsilonSensitive {
        deviation: f64,
        values: Vec<(f64, f64)>,
    },

    #[error("modular commutator trace has imaginary part {0:e}")]
    NonReal(f64),

    #[error("matrix is not unitary: ||U^dag U - 1|| = {0:e}")]
    NotUnitary(f64),

    #[error("invalid generator set: {0}")]
    InvalidGenerators(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("region D is empty; the modular commutator is only defined with a nonempty complement of ABC")]
    EmptyComplement,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
