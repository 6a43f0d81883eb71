//! Core of the stochastic six vertex simulator.
//!
//! `no_std` with `alloc`. The `std` feature only adds `std::error::Error` impls.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod aj;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod hydro;
pub mod jump;
pub mod lattice;
pub mod sampler;
pub mod scalar;
pub mod ybe;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
