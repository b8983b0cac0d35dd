//! Analytic gradients of the multi-scale loss and Adam-based direct
//! optimization of pose and inverse depth.

mod adam;
mod direct;
mod gradcheck;
mod gradients;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use direct::{format_trace_csv, optimize_direct, OptimizeOptions, OptimizeResult, INV_DEPTH_RANGE};
pub use gradcheck::{gradcheck, random_configuration, ComponentCheck, GradcheckConfig, GradcheckReport};
pub use gradients::{loss_and_gradients, loss_and_gradients_prepared, GradientBundle};
