//! Command-line front end: problem files in, solutions, certificates and
//! plot data out. Stdout carries only JSON; diagnostics go to stderr.

pub mod commands;
pub mod schema;
