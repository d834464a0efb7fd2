// Index loops mirror the stencil formulas; negated comparisons reject NaN on purpose.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod error;
pub mod functions;
pub mod grid;
pub mod linalg;
pub mod logistic;
pub mod perturb;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
