//! Closed-loop simulation of a cross-configuration quadrotor under Lyapunov
//! backstepping or PID control, with tracking metrics, numerical Lyapunov
//! verification, CSV traces and SVG plots.

// Negated comparisons in this crate deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod backstepping;
pub mod dynamics;
pub mod error;
pub mod guidance;
pub mod pid;
pub mod plot;
pub mod scenario;
pub mod simulation;
pub mod trace_csv;

pub use error::{Result, SimError};
