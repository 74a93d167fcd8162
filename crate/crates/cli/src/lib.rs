//! Library surface of the experiment CLI, shared with the acceptance test
//! suite.

pub mod config;
pub mod experiment;
pub mod verify;
