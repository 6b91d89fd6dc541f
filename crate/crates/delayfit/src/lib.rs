//! Std companion to `delayfit-core`: CSV ingestion, run configuration,
//! the parallel ensemble driver, report files and the command-line tool.

pub mod cli;
pub mod config;
pub mod data;
pub mod fmt;
pub mod report;
pub mod runner;
