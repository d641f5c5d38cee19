//! Differentiable distributional distances between sample sets, and a small
//! GAN trainer that minimizes them in a discriminator's feature space.
//!
//! * [`linalg`] dense kernels and a Jacobi symmetric eigensolver
//! * [`matsqrt`] principal matrix square roots and Sylvester-equation gradients
//! * [`stats`] Gaussian moment estimation
//! * [`distances`] Fréchet, exact optimal transport, sliced and max-sliced Wasserstein
//! * [`nn`] MLPs with manual backpropagation and Adam
//! * [`data`] seeded synthetic 2D datasets
//! * [`train`] the adversarial training loop
//! * [`bench`] per-batch timing of the generator losses

pub mod bench;
pub mod data;
pub mod distances;
pub mod error;
pub mod linalg;
pub mod matsqrt;
pub mod nn;
pub mod random;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
