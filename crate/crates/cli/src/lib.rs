//! Library surface of the benchmark CLI, exposed so integration tests can
//! drive the same code paths as the binary.

pub mod config;
pub mod csv_out;
pub mod oracle_cmd;
pub mod runner;
