use super::{batch_scores, check_finite, check_step_size, drive, Monitor, Preconditioner, RecordConfig, RunTrace, Stepper};
use crate::error::{Error, Result};
use crate::field::{inner_train, DivergenceMode, FieldModel, Optimizer, OptimizerKind};
use crate::par::{for_each_row_mut, ExecPolicy};
use crate::particles::ParticleSet;
use crate::rng::RngHandle;
use crate::targets::Target;

/// How θ is fitted to the current particles in each outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InnerSolver {
    /// Warm-started first-order optimization for T′ steps.
    #[default]
    Gradient,
    /// Closed-form minimizer, for field classes where one exists.
    Exact,
}

#[derive(Clone, Debug)]
pub struct PfgConfig {
    /// Outer iterations T.
    pub outer_steps: usize,
    /// Inner steps T′ per outer iteration.
    pub inner_steps: usize,
    /// Inner steps in the first outer iteration; `None` means 10·T′.
    pub first_inner_steps: Option<usize>,
    /// Particle step size η.
    pub eta: f64,
    /// Inner learning rate η′.
    pub inner_lr: f64,
    pub optimizer: OptimizerKind,
    pub divergence: DivergenceMode,
    pub solver: InnerSolver,
    pub record: RecordConfig,
    pub policy: ExecPolicy,
}

impl Default for PfgConfig {
    fn default() -> Self {
        Self {
            outer_steps: 100,
            inner_steps: 5,
            first_inner_steps: None,
            eta: 0.1,
            inner_lr: 1e-3,
            optimizer: OptimizerKind::sgd_momentum(),
            divergence: DivergenceMode::Exact,
            solver: InnerSolver::Gradient,
            record: RecordConfig::default(),
            policy: ExecPolicy::default(),
        }
    }
}

impl PfgConfig {
    pub fn resolved_first_inner_steps(&self) -> usize {
        self.first_inner_steps.unwrap_or(10 * self.inner_steps)
    }
}

pub struct PfgSampler<'t, M: FieldModel> {
    particles: ParticleSet,
    target: &'t dyn Target,
    model: M,
    opt: Optimizer,
    precond: Preconditioner,
    cfg: PfgConfig,
    rng: RngHandle,
    outer: usize,
    losses: Vec<f64>,
}

impl<'t, M: FieldModel> PfgSampler<'t, M> {
    pub fn new(
        particles: ParticleSet,
        target: &'t dyn Target,
        model: M,
        precond: Preconditioner,
        cfg: PfgConfig,
        rng: RngHandle,
    ) -> Result<Self> {
        let d = particles.dim();
        crate::error::check_dim(d, target.dim())?;
        crate::error::check_dim(d, model.dim())?;
        precond.check(d)?;
        check_step_size(cfg.eta)?;
        if cfg.solver == InnerSolver::Gradient && !(cfg.inner_lr > 0.0) {
            return Err(Error::InvalidInput(format!("inner learning rate must be positive, got {}", cfg.inner_lr)));
        }
        if cfg.solver == InnerSolver::Exact && cfg.divergence != DivergenceMode::Exact {
            return Err(Error::InvalidInput("the exact inner solver needs the exact divergence".into()));
        }
        let opt = Optimizer::new(cfg.optimizer, cfg.inner_lr, model.n_params());
        Ok(Self { particles, target, model, opt, precond, cfg, rng, outer: 0, losses: Vec::new() })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn preconditioner(&self) -> &Preconditioner {
        &self.precond
    }

    /// Final inner loss of every completed outer iteration.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    fn fit(&mut self, scores: &[f64], h: &[f64]) -> Result<()> {
        match self.cfg.solver {
            InnerSolver::Exact => {
                let theta = self
                    .model
                    .exact_fit(&self.particles, scores, h)
                    .ok_or_else(|| Error::InvalidInput("field class has no closed-form inner solution".into()))??;
                self.model.params_mut().copy_from_slice(&theta);
                let rep = crate::field::pfg_loss_with_scores(
                    &self.model,
                    &self.particles,
                    scores,
                    h,
                    DivergenceMode::Exact,
                    self.cfg.policy,
                )?;
                self.losses.push(rep.loss);
            }
            InnerSolver::Gradient => {
                let steps = if self.outer == 0 { self.cfg.resolved_first_inner_steps() } else { self.cfg.inner_steps };
                let mode = match self.cfg.divergence {
                    DivergenceMode::Exact => DivergenceMode::Exact,
                    DivergenceMode::Hutchinson { probes, .. } => {
                        DivergenceMode::Hutchinson { probes, seed: self.rng.fork_seed() }
                    }
                };
                let rep = inner_train(&mut self.model, &self.particles, scores, h, steps, &mut self.opt, mode, self.cfg.policy)
                    .map_err(|e| match e {
                        Error::DivergentLoss { .. } => Error::DivergentLoss { step: self.outer },
                        e => e,
                    })?;
                if let Some(l) = rep.losses.last() {
                    self.losses.push(*l);
                }
            }
        }
        Ok(())
    }

    pub fn into_output(self, trace: RunTrace) -> PfgOutput<M> {
        PfgOutput { particles: self.particles, model: self.model, precond: self.precond, losses: self.losses, trace }
    }
}

impl<M: FieldModel> Stepper for PfgSampler<'_, M> {
    fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    fn step(&mut self) -> Result<()> {
        let d = self.particles.dim();
        let scores = batch_scores(self.target, &self.particles, &mut self.rng, self.cfg.policy)?;
        if self.precond.is_adaptive() {
            let grad_u: Vec<f64> = scores.iter().map(|s| -s).collect();
            self.precond.update(&grad_u)?;
        }
        let h = self.precond.materialize();
        self.fit(&scores, &h)?;

        let (eta, c) = (self.cfg.eta, self.model.base_shift());
        let model = &self.model;
        for_each_row_mut(self.cfg.policy, self.particles.as_mut_slice(), d, |i, x| {
            let f = model.forward(x);
            for k in 0..d {
                x[k] += eta * (f[k] + c * scores[i * d + k]);
            }
        });
        self.particles.advance();
        self.outer += 1;
        check_finite(&self.particles)
    }
}

pub struct PfgOutput<M> {
    pub particles: ParticleSet,
    pub model: M,
    pub precond: Preconditioner,
    pub losses: Vec<f64>,
    pub trace: RunTrace,
}

/// T outer PFG iterations: refit the field to the current particles, then
/// move every particle by η·(f₀ + f_θ).
pub fn pfg_run<M: FieldModel>(
    particles: ParticleSet,
    target: &dyn Target,
    model: M,
    precond: Preconditioner,
    cfg: PfgConfig,
    rng: RngHandle,
    monitors: Vec<&mut dyn Monitor>,
) -> Result<PfgOutput<M>> {
    let (steps, record) = (cfg.outer_steps, cfg.record);
    let mut s = PfgSampler::new(particles, target, model, precond, cfg, rng)?;
    let trace = drive(&mut s, steps, record, monitors)?;
    Ok(s.into_output(trace))
}
