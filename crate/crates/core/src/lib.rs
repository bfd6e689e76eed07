//! Steady periodic water waves with constant vorticity: spectral solver,
//! branch continuation and a posteriori verification.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod config;
pub mod continuation;
pub mod equations;
pub mod error;
pub mod kernel;
pub mod reconstruction;
pub mod spectral;

pub use equations::{
    condition_suite, identity_add_check, residual_ef, residual_system, to_f_form, BranchSign,
    ConditionEntry, ConditionReport, FFormView, PhysicalParams, SolutionPoint,
};
pub use error::{Error, Result};
pub use spectral::{GridSpec, Parity, PeriodicField};
