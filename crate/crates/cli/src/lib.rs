//! `archstyle` command-line pipeline: segmentation masks split each image
//! into foreground and background, each branch is translated by its own
//! checkpoint, the branches are composited and optionally blended back onto
//! the source.

pub mod app;
pub mod commands;
pub mod error;
pub mod pipeline;
pub mod settings;

pub use app::run;
pub use error::CliError;
