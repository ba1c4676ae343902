//! Dense linear algebra, a reverse-mode autodiff tape, and the adaptive
//! moment optimizer. Everything is `f64`: the filter's covariance-like
//! quantities get ill-conditioned at small observation noise, and single
//! precision would mask algorithmic errors.

mod matrix;
mod optim;
mod tape;

pub use matrix::Matrix;
pub use optim::Adam;
pub use tape::{Gradients, Tape, Var};

/// 10 * log10(x) — the reporting unit for all MSE tables.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
