//! File formats, dataset layout, configuration and the subcommands of the
//! `vsor` tool, on top of `vsor-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod layout;
pub mod pgm;
pub mod ranks;
pub mod tensor_file;

pub use error::{Error, Result};
