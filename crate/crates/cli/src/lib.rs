//! Configuration, orchestration and result files for `microfrac-core`
//! experiments.

pub mod app;
pub mod config;
pub mod output;
pub mod run;
pub mod svg;
