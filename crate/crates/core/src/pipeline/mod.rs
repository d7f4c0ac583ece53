//! R-SCORE, clustering error, rate exponents and condition diagnostics.

mod conditions;
mod hamming;
mod rates;
mod rscore;

pub use conditions::{check_conditions, ConditionReport};
pub use hamming::{confusion, hamming_assignment, hamming_error, hamming_exhaustive, EXHAUSTIVE_MAX_K};
pub use rates::{rate_curves, rate_grid};
pub use rscore::{
    oracle_score, r_score, renormalize, IterationRecord, RScoreConfig, RScoreTrace, StopReason, TRACE_HEADER,
};
