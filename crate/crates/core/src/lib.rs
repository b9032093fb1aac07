//! Control stack for a pneumatic sculpture driven by a myoelectric armband.
//!
//! Data flows armband → [`myo`] codec → [`gesture`] engine → [`homeostasis`]
//! controllers → [`bridge`] serial frames → actuation device → simulated
//! [`plant`]; [`pipeline`] wires the loop together and runs it on a fixed
//! tick.

// `!(x < y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod gesture;
pub mod homeostasis;
pub mod myo;
pub mod pipeline;
pub mod plant;
