//! Independent reference oracles and the randomized functional suite.

pub mod exact;
pub mod oracle;
pub mod suite;

pub use exact::{exact_dot, same_value, ExactSum};
pub use suite::{conv_precision_check, run_functional_suite, strided_sweep, PrecisionReport, SuiteOptions, SuiteReport};
