//! File formats, verification reports, replicate experiments and the `sixv`
//! command line on top of `sixv-core`.

pub mod checks;
pub mod cli;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod num;

pub use sixv_core as core;
