//! Filesystem, dataset, training-loop, and evaluation layer over the
//! `sod-core` model stack, shared by the `sod` binary and the test suite.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evalcsv;
pub mod pnm;
pub mod synth;
pub mod train;
