//! File formats, configuration, parallel study execution and reporting on
//! top of `rocmi-core`.

pub mod commands;
pub mod config;
pub mod data_io;
pub mod report;
pub mod runner;

pub use rocmi_core as core;
