//! Ruijsenaars difference operators, their kernel functions and exact
//! Koornwinder polynomials.

pub mod cli;
pub mod config;
pub mod error;
pub mod kernels;
pub mod koornwinder;
pub mod laurent;
pub mod operators;
pub mod sigma;
pub mod verify;

pub use error::{Error, Result};
