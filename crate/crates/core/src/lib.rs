//! Particle-based variational inference.
//!
//! Preconditioned functional gradient flow (PFG) with a trainable vector
//! field, SVGD and unadjusted Langevin baselines, closed-form Gaussian
//! dynamics for checking them, and particle-cloud quality metrics.

pub mod analytic;
pub mod error;
pub mod field;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod particles;
pub mod rng;
pub mod samplers;
pub mod targets;

pub use error::{Error, Result};
pub use linalg::{sample_gaussian, SpdMatrix};
pub use par::ExecPolicy;
pub use particles::ParticleSet;
pub use rng::RngHandle;
