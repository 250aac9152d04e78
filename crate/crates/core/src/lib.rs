//! Phase sensitivity of lossy, multi-path light-pulse atom interferometers fed
//! with one-axis-twisted spin states.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bragg;
pub mod ode;
pub mod search;
pub mod interferometer;
pub mod spin_io;
pub mod states;
pub mod oracle;
pub mod optimize;
