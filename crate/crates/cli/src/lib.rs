//! Library surface of the experiment runner: configuration parsing,
//! validation, pipelines and CSV writers. The `wiplab` binary is a thin
//! wrapper over [`config`] and [`experiments`].

pub mod config;
pub mod experiments;
