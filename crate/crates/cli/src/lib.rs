//! Command-line pipeline: configuration, staged execution with manifests and
//! a synthetic fixture generator.

pub mod config;
pub mod error;
pub mod fixture;
pub mod manifest;
pub mod stages;
