//! Diffusion-transformer generation of multichannel 1-D signals and the
//! generated-original reassembly augmentation, with the classifier and
//! Fréchet-distance/spectral evaluation used to measure both.

pub mod augment;
pub mod checkpoint;
pub mod classifier;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod fft;
pub mod model;
pub mod nn;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
