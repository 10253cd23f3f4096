//! Trainable vector fields f_θ: ℝ^d → ℝ^d and the PFG objective.
//!
//! A [`FieldModel`] exposes its parameters as one flat slice plus the
//! hand-derived pieces needed for backpropagation: the output, the exact
//! divergence, Hutchinson probes ξᵀ(∇f)ξ, and the parameter gradients of
//! all three.

mod affine;
mod loss;
mod mlp;
mod train;

pub use affine::AffineModel;
pub use loss::{particle_scores, pfg_loss, pfg_loss_with_scores, DivergenceMode, PfgLossReport};
pub use mlp::{Activation, MlpParams};
pub use train::{inner_train, InnerTrainReport, Optimizer, OptimizerKind};

use crate::error::{check_dim, Error, Result};
use crate::particles::ParticleSet;
use crate::rng::RngHandle;
use crate::targets::Target;

pub trait FieldModel: Clone + Send + Sync {
    /// Forward-pass intermediates reused by the backward methods.
    type Cache: Send;

    fn dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Coefficient c of the base shift f₀ = c·∇ln p*.
    fn base_shift(&self) -> f64;

    /// Writes f_θ(x) into `out` and returns the cache for `x`.
    fn forward_cached(&self, x: &[f64], out: &mut [f64]) -> Self::Cache;

    /// ∇·f_θ(x).
    fn divergence_cached(&self, x: &[f64], cache: &Self::Cache) -> f64;

    /// Writes the Jacobian-vector product (∇f_θ(x))·v into `out`.
    fn jvp_cached(&self, x: &[f64], cache: &Self::Cache, v: &[f64], out: &mut [f64]);

    /// grad += (∂f_θ(x)/∂θ)ᵀ·upstream.
    fn backprop_output(&self, x: &[f64], cache: &Self::Cache, upstream: &[f64], grad: &mut [f64]);

    /// grad += scale·∂(∇·f_θ(x))/∂θ.
    fn backprop_divergence(&self, x: &[f64], cache: &Self::Cache, scale: f64, grad: &mut [f64]);

    /// grad += scale·∂(ξᵀ∇f_θ(x)ξ)/∂θ.
    fn backprop_probe(&self, x: &[f64], cache: &Self::Cache, probe: &[f64], scale: f64, grad: &mut [f64]);

    /// Closed-form minimizer of the exact-divergence PFG loss, for classes
    /// where the loss is a quadratic in θ. `scores` is n×d row-major ∇ln p*.
    fn exact_fit(&self, _particles: &ParticleSet, _scores: &[f64], _h: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.forward_cached(x, &mut out);
        out
    }

    fn divergence(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; self.dim()];
        let c = self.forward_cached(x, &mut out);
        self.divergence_cached(x, &c)
    }

    /// ξᵀ(∇f_θ(x))ξ via one Jacobian-vector product.
    fn probe_quadratic_cached(&self, x: &[f64], cache: &Self::Cache, probe: &[f64]) -> f64 {
        let mut jv = vec![0.0; self.dim()];
        self.jvp_cached(x, cache, probe, &mut jv);
        jv.iter().zip(probe).map(|(a, b)| a * b).sum()
    }
}

fn check_shift<'a, M: FieldModel>(model: &M, target: Option<&'a dyn Target>) -> Result<Option<&'a dyn Target>> {
    match target {
        None if model.base_shift() > 0.0 => Err(Error::MissingTarget),
        None => Ok(None),
        Some(t) => {
            check_dim(model.dim(), t.dim())?;
            Ok(Some(t))
        }
    }
}

/// The realized field f₀(x) + f_θ(x).
pub fn field_value<M: FieldModel>(model: &M, x: &[f64], target: Option<&dyn Target>) -> Result<Vec<f64>> {
    check_dim(model.dim(), x.len())?;
    let target = check_shift(model, target)?;
    let mut out = model.forward(x);
    let c = model.base_shift();
    if let (Some(t), true) = (target, c > 0.0) {
        let mut s = vec![0.0; x.len()];
        t.grad_log_density(x, &mut s)?;
        for (o, si) in out.iter_mut().zip(&s) {
            *o += c * si;
        }
    }
    Ok(out)
}

/// Exact ∇·(f₀ + f_θ)(x). The base-shift part needs Δln p* from the target.
pub fn field_divergence<M: FieldModel>(model: &M, x: &[f64], target: Option<&dyn Target>) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    let target = check_shift(model, target)?;
    let mut div = model.divergence(x);
    let c = model.base_shift();
    if c > 0.0 {
        let lap = target
            .and_then(|t| t.laplacian_log_density(x))
            .ok_or(Error::UnsupportedBaseShiftTarget)?;
        div += c * lap;
    }
    Ok(div)
}

/// Hutchinson estimate (1/K)Σ_j ξ_jᵀ(∇f_θ(x))ξ_j with Rademacher probes.
pub fn hutchinson_divergence<M: FieldModel>(model: &M, x: &[f64], rng: &mut RngHandle, probes: usize) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    if probes == 0 {
        return Err(Error::InvalidInput("need at least one probe".into()));
    }
    let mut out = vec![0.0; model.dim()];
    let cache = model.forward_cached(x, &mut out);
    let mut xi = vec![0.0; model.dim()];
    let mut acc = 0.0;
    for _ in 0..probes {
        for v in xi.iter_mut() {
            *v = rng.rademacher();
        }
        acc += model.probe_quadratic_cached(x, &cache, &xi);
    }
    Ok(acc / probes as f64)
}

#[cfg(test)]
mod tests;
