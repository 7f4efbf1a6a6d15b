//! Micro deep-learning engine for the SRNet salient object detector.
//!
//! The crate is layered bottom-up: [`tensor`] holds dense NCHW arrays,
//! [`autograd`] records and differentiates computations, [`nnops`] defines the
//! operator set, [`srnet`] assembles the network variants, [`training`] and
//! [`eval`] fit and score them, and [`cost`] audits parameters, mult-adds and
//! receptive fields from the network manifest.

pub mod autograd;
pub mod cost;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod nnops;
pub mod srnet;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
