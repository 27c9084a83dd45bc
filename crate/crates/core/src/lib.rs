//! Operator-learning engine without the standard library.
//!
//! The crate carries everything numerical: a dense real/complex [`Tensor`]
//! with a reverse-mode [`Graph`], radix-2 Fourier transforms, Fourier and
//! graph-kernel neural operators, reference PDE solvers used as data
//! generators, physics-informed training and the experiment harnesses.
//! File formats, configuration parsing and the command line live in the
//! `neurop` companion crate.
#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod gradcheck;
pub mod grid;
pub mod math;
pub mod operator;
pub mod pde;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autodiff::{ContractSpec, Gradients, Graph, Padding, Var};
pub use error::{Error, Result};
pub use grid::{GridFunction, PointCloudFunction};
pub use operator::{ModelConfig, NeuralOperatorModel, Normalization};
pub use tensor::Tensor;
