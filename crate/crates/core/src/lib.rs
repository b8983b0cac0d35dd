#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN
pub mod cli;
pub mod error;
pub mod eval;
pub mod field;
pub mod fivepoint;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod optim;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
