//! Permutation-invariant graph classification with attention pooling.
//!
//! The crate is self-contained: dense graphs ([`graph`]), a reverse-mode
//! autodiff tape ([`autodiff`]), propagation matrices ([`propagation`]),
//! PiNet and two GCN baselines ([`model`]), training and cross-validation
//! ([`train`]), and dataset generation and I/O ([`data`]).
//!
//! A guide with runnable examples lives in `book/`; its code blocks are
//! compiled as doctests of this crate.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod optim;
pub mod propagation;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/pinet.md")]
    mod pinet {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
}
