//! Host-side companion to `fewparam-core`: JSON documents, CSV summaries,
//! multi-threaded certification and the pieces behind the `fewparam`
//! command-line tool.

pub mod config;
pub mod json;
pub mod parallel;
pub mod run;
pub mod summary;

pub use config::{RunConfig, Settings};
pub use parallel::Pool;
