//! Hybrid multi-observer for nonlinear state estimation.
//!
//! A nominal observer runs in parallel with additional modes that share its
//! structure but use other output-injection gains. Monitoring variables score
//! every mode from output errors, a supervisor selects the best mode and can
//! reset the others, and the whole scheme is simulated as a hybrid system.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod gain_design;
pub mod hybrid;
pub mod metrics;
pub mod observer;
pub mod plant;
pub mod scenario;
pub mod supervisor;
