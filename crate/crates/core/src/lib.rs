// NaN-rejecting guards such as `!(x > 0.0)` are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod conic;
pub mod cutting;
pub mod error;
pub mod experiments;
pub mod formulations;
pub mod instance;
pub mod penalty;

pub use error::{Error, Result};
pub use instance::{HyperParams, RegressionInstance};
