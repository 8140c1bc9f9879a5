//! Refinement and reduction of bag-of-visual-words image representations.
//!
//! Tags attached to images drive an L1-graph over the collection; the visual
//! histograms are diffused over that graph and the refined vocabulary is then
//! compressed by spectral clustering of visual words.

pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod l1solve;
pub mod laplacian;
pub mod linalg;
pub mod matrix;
pub mod neighbors;
pub mod reduce;
pub mod refine;

pub use error::{Error, Result};
