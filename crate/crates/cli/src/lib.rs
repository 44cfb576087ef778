//! Library half of the command-line front end: the benchmark harness, CSV
//! interchange, and the published reference data reports compare against.

pub mod bench;
pub mod csvio;
pub mod reference;
