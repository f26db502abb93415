//! Contrastive multiview coding at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`autodiff`], [`gradcheck`]: dense `f64` tensors, a
//!   per-pass reverse-mode tape and a central-difference gradient oracle.
//! - [`views`]: colorspace splits, patch pairs and synthetic multiview
//!   generators with known mutual information, plus the dataset container.
//! - [`critic`]: per-view MLP encoders and the temperature-scaled cosine
//!   score.
//! - [`losses`]: (k+1)-way contrast, symmetric two-view, NCE, sub-patch
//!   and predictive objectives.
//! - [`multiview`]: core-view and full-graph pair schedules and their
//!   information-diagram weights.
//! - [`memory_bank`]: momentum-updated per-sample embedding store.
//! - [`train`], [`probe`], [`diagnostics`], [`experiments`]: the training
//!   loop, linear evaluation, bound/density-ratio diagnostics and the
//!   experiment drivers.
//! - [`config`]: INI experiment manifests.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod autodiff;
pub mod config;
pub mod critic;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod memory_bank;
pub mod multiview;
pub mod probe;
pub mod tensor;
pub mod train;
pub mod views;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
