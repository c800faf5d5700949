//! Exact answers for tiny instances: closed-form critical-time laws, full
//! absorption analysis of the announcement chain, and exhaustive checks of
//! the Boolean structure of announcements.

mod absorption;
mod boolean;
mod distributions;

pub use absorption::{
    exact_absorption, exact_absorption_cached, AbsorptionResult, AssignmentAbsorption,
    ABSORPTION_TOLERANCE, MAX_EXACT_NODES,
};
pub use boolean::{exhaustive_boolean_check, BooleanVerdict, MAX_BOOLEAN_NODES};
pub use distributions::{geometric_pmf, negbinom_cdf, negbinom_pmf};
