//! The three feature levels. Each extractor produces a fixed-layout vector.

pub mod conllu;
pub mod semantic;
pub mod statistical;
pub mod syntactic;
