//! Configuration, scenario presets and output formats.

pub mod config;
pub mod output;
pub mod presets;
