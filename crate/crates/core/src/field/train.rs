use super::loss::{pfg_loss_with_scores, DivergenceMode};
use super::FieldModel;
use crate::error::{check_dim, Error, Result};
use crate::par::ExecPolicy;
use crate::particles::ParticleSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    /// Heavy-ball momentum: v ← μv + g, θ ← θ - lr·v.
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd_momentum() -> Self {
        OptimizerKind::Sgd { momentum: 0.9 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer with persistent state across inner loops.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        Self {
            kind,
            lr,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t = self.t.saturating_add(1);
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(self.m.iter_mut()) {
                    *v = momentum * *v + g;
                    *p -= self.lr * *v;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mh = if c1 > 0.0 { *m / c1 } else { *g };
                    *p -= self.lr * mh / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InnerTrainReport {
    /// Loss before each update.
    pub losses: Vec<f64>,
}

/// `steps` optimizer updates of the PFG loss on a fixed particle set.
///
/// With Hutchinson probes, inner step k uses a seed derived from the mode's
/// seed and k, so every step sees fresh probes.
pub fn inner_train<M: FieldModel>(
    model: &mut M,
    particles: &ParticleSet,
    scores: &[f64],
    h: &[f64],
    steps: usize,
    opt: &mut Optimizer,
    mode: DivergenceMode,
    policy: ExecPolicy,
) -> Result<InnerTrainReport> {
    check_dim(model.n_params(), opt.m.len())?;
    let mut losses = Vec::with_capacity(steps);
    for k in 0..steps {
        let step_mode = match mode {
            DivergenceMode::Exact => DivergenceMode::Exact,
            DivergenceMode::Hutchinson { probes, seed } => DivergenceMode::Hutchinson {
                probes,
                seed: seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            },
        };
        let rep = pfg_loss_with_scores(model, particles, scores, h, step_mode, policy)?;
        if !rep.loss.is_finite() || rep.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::DivergentLoss { step: k });
        }
        losses.push(rep.loss);
        opt.step(model.params_mut(), &rep.grad);
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::DivergentLoss { step: k });
        }
    }
    Ok(InnerTrainReport { losses })
}
