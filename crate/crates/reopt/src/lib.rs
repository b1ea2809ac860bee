//! File formats, experiment harness and command-line plumbing around
//! `reopt-core`.

pub mod cvrplib;
pub mod formats;
pub mod harness;
