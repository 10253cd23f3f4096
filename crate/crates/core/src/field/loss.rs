use super::FieldModel;
use crate::error::{check_dim, Error, Result};
use crate::par::{chunked_reduce, map_indices, ExecPolicy};
use crate::particles::ParticleSet;
use crate::rng::RngHandle;
use crate::targets::Target;

/// How the divergence term of the loss is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DivergenceMode {
    Exact,
    /// Rademacher probes; particle i draws from stream i of `seed`.
    Hutchinson { probes: usize, seed: u64 },
}

/// Value and parameter gradient of
/// L(θ) = (1/n)Σ_i [½|f_θ(x_i)+f₀(x_i)|²_H + f_θ(x_i)·∇U(x_i) - ∇·f_θ(x_i)].
#[derive(Clone, Debug, PartialEq)]
pub struct PfgLossReport {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// (1/n)Σ ½|f_θ+f₀|²_H
    pub regularizer: f64,
    /// (1/n)Σ f_θ·∇U
    pub drift: f64,
    /// -(1/n)Σ ∇·f_θ
    pub divergence: f64,
}

struct Acc {
    reg: f64,
    drift: f64,
    div: f64,
    grad: Vec<f64>,
}

/// Loss with scores ∇ln p*(x_i) precomputed (n×d row-major); this is the
/// form used inside the training loop where particles are fixed.
pub fn pfg_loss_with_scores<M: FieldModel>(
    model: &M,
    particles: &ParticleSet,
    scores: &[f64],
    h: &[f64],
    mode: DivergenceMode,
    policy: ExecPolicy,
) -> Result<PfgLossReport> {
    let d = model.dim();
    let n = particles.n();
    check_dim(d, particles.dim())?;
    check_dim(d, h.len())?;
    check_dim(n * d, scores.len())?;
    if h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositivePreconditioner);
    }
    if let DivergenceMode::Hutchinson { probes: 0, .. } = mode {
        return Err(Error::InvalidInput("need at least one probe".into()));
    }
    let p = model.n_params();
    let c = model.base_shift();
    let acc = chunked_reduce(
        policy,
        n,
        || Acc {
            reg: 0.0,
            drift: 0.0,
            div: 0.0,
            grad: vec![0.0; p],
        },
        |acc, i| {
            let x = particles.row(i);
            let s = &scores[i * d..(i + 1) * d];
            let mut f = vec![0.0; d];
            let cache = model.forward_cached(x, &mut f);
            // upstream = H(f + f₀) + ∇U, ∇U = -s
            let mut up = vec![0.0; d];
            for j in 0..d {
                let shifted = f[j] + c * s[j];
                acc.reg += 0.5 * h[j] * shifted * shifted;
                acc.drift -= f[j] * s[j];
                up[j] = h[j] * shifted - s[j];
            }
            model.backprop_output(x, &cache, &up, &mut acc.grad);
            match mode {
                DivergenceMode::Exact => {
                    acc.div -= model.divergence_cached(x, &cache);
                    model.backprop_divergence(x, &cache, -1.0, &mut acc.grad);
                }
                DivergenceMode::Hutchinson { probes, seed } => {
                    let mut rng = RngHandle::from_stream(seed, i as u64);
                    let mut xi = vec![0.0; d];
                    let w = 1.0 / probes as f64;
                    for _ in 0..probes {
                        for v in xi.iter_mut() {
                            *v = rng.rademacher();
                        }
                        acc.div -= w * model.probe_quadratic_cached(x, &cache, &xi);
                        model.backprop_probe(x, &cache, &xi, -w, &mut acc.grad);
                    }
                }
            }
        },
        |a, b| {
            a.reg += b.reg;
            a.drift += b.drift;
            a.div += b.div;
            for (x, y) in a.grad.iter_mut().zip(&b.grad) {
                *x += y;
            }
        },
    );
    let inv = 1.0 / n as f64;
    let (reg, drift, div) = (acc.reg * inv, acc.drift * inv, acc.div * inv);
    let grad = acc.grad.into_iter().map(|g| g * inv).collect();
    Ok(PfgLossReport {
        loss: reg + drift + div,
        grad,
        regularizer: reg,
        drift,
        divergence: div,
    })
}

/// Scores of every particle under the full-batch target, n×d row-major.
pub fn particle_scores(target: &dyn Target, particles: &ParticleSet, policy: ExecPolicy) -> Result<Vec<f64>> {
    let d = particles.dim();
    check_dim(target.dim(), d)?;
    let rows = map_indices(policy, particles.n(), |i| {
        let mut s = vec![0.0; d];
        target.grad_log_density(particles.row(i), &mut s).map(|_| s)
    });
    let mut out = Vec::with_capacity(particles.n() * d);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// PFG loss for `particles` under `target` with diagonal preconditioner `h`.
pub fn pfg_loss<M: FieldModel>(
    model: &M,
    particles: &ParticleSet,
    target: &dyn Target,
    h: &[f64],
    mode: DivergenceMode,
) -> Result<PfgLossReport> {
    let scores = particle_scores(target, particles, ExecPolicy::default())?;
    pfg_loss_with_scores(model, particles, &scores, h, mode, ExecPolicy::default())
}
