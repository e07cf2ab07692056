//! Detection of machine-generated text from three feature levels (semantic,
//! syntactic, statistical) combined by an attention-and-gating fusion network.

pub mod corpus;
pub mod detector;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod ngram;
pub mod text;
pub mod training;

pub use error::{Error, Result};
