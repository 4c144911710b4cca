//! Unsupervised domain adaptation for small dense classifiers: a
//! reverse-mode autodiff engine, an MLP extractor/classifier pair, the
//! adaptation losses, synthetic and CSV datasets, and a training loop.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod train;

pub use error::{Error, ErrorCategory, Result};
