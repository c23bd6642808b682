//! Fractional-order gradients for linear layers.
//!
//! Implements a reverse-mode tape whose linear layers differentiate their
//! weights to a fractional order `alpha` in (0, 1], reducing exactly to the
//! ordinary gradient at `alpha = 1`. Ships with a dense matrix kernel set,
//! a gamma-function module, a fractional SGD training loop for time-series
//! regression, and demo surfaces for the scalar-level identities.

pub mod autograd;
pub mod cli;
pub mod data;
pub mod demos;
pub mod error;
pub mod fracdiff;
pub mod linalg;
pub mod optim;
pub mod special;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use special::FracOrder;
