//! Companion crate to `dnr-core`: file formats, multi-threaded ranking, the
//! pipelined trainer, the evaluation protocol and the `dnr` command line.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod protocol;

pub use error::{DnrError, ExitKind, Result};
