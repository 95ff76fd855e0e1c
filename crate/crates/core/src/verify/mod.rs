//! Identity suite with mutation hooks, and a brute-force exterior-algebra
//! oracle for the `∂∂̄` kernel.

pub mod oracle;
mod suite;

pub use suite::{
    check_names, random_form, random_metric, renormalize_determinant, run_suite, CheckResult,
    Mutation, Relation, SuiteConfig, SuiteReport,
};
