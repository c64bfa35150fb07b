//! IO, HTTP backends, orchestration, and the CLI for the meme-dialogue
//! pipeline. The algorithmic core lives in `memecmd-core`.

pub mod cli;
pub mod config;
pub mod evaluate;
pub mod http;
pub mod jobs;
pub mod ops;
pub mod persist;
pub mod pipeline;

pub use cli::run;
