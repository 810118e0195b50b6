//! Periodic homogenization of elliptic operators, low-cost optimal control
//! on oscillating media, and ε-sweeps that check the limit behaviour.

pub mod control;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod homogenize;
pub mod lab;
pub mod measure;
pub mod tensor;

pub use error::{Error, Result};
