//! Numerical laboratory for Boutet de Monvel operators and their conjugation by
//! boundary-preserving Fourier integral operators.

pub mod bdm;
pub mod error;
pub mod geometry;
pub mod halfline;
pub mod index_lab;
pub mod normal_ops;
pub mod numerics;
pub mod symbols;

pub use error::{Error, Result};
