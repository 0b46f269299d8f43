//! IRTree models for discrete rating data and their mapping to fuzzy numbers.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`tree`] decomposes each rating into binary node decisions.
//! 2. [`fit`] estimates item easiness and the latent-trait covariance by
//!    marginal maximum likelihood, then predicts person traits.
//! 3. [`fuzzy`] turns each person × item category distribution into a beta
//!    (or triangular) fuzzy number and summarizes it.
//! 4. [`sim`] and [`eval`] generate rating data with response times and
//!    score how well fuzzy precision predicts fast responses.
//!
//! [`io`] and [`pipeline`] hold the file formats and command implementations.

pub mod eval;
pub mod fit;
pub mod fuzzy;
pub mod io;
pub mod numeric;
pub mod pipeline;
pub mod ratings;
pub mod sim;
pub mod tree;

pub use ratings::Ratings;
pub use tree::{builtin_tree, expand, BinaryExpansion, BinaryRow, BuiltinTree, TreeSpec};
