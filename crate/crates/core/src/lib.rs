//! Estimation for the two-parameter Weibull distribution under Type-I
//! progressively hybrid censoring.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod censoring;
pub mod error;
pub mod likelihood;
pub mod ml;
pub mod numeric;
pub mod shrinkage;
pub mod simbench;
pub mod weibull;

pub use censoring::{Case, CensoringScheme, PhcsSample};
pub use error::{Error, Result};
pub use weibull::WeibullParams;
