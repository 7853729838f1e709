//! Configuration and command plumbing for the `cutfem` binary.

pub mod config;
