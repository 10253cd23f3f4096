use super::{batch_scores, check_finite, check_step_size, drive, Monitor, RecordConfig, RunTrace, Stepper};
use crate::error::Result;
use crate::par::{for_each_row_with_state, ExecPolicy};
use crate::particles::ParticleSet;
use crate::rng::RngHandle;
use crate::targets::Target;

#[derive(Clone, Debug)]
pub struct UlaConfig {
    pub steps: usize,
    pub eta: f64,
    /// Multiplier on the injected noise; 1 is Langevin, 0 is gradient ascent.
    pub noise_scale: f64,
    pub record: RecordConfig,
    pub policy: ExecPolicy,
}

impl Default for UlaConfig {
    fn default() -> Self {
        Self { steps: 1000, eta: 1e-3, noise_scale: 1.0, record: RecordConfig::default(), policy: ExecPolicy::default() }
    }
}

/// Unadjusted Langevin. Each particle owns a noise stream, so results do not
/// depend on the execution policy.
pub struct UlaSampler<'t> {
    particles: ParticleSet,
    target: &'t dyn Target,
    cfg: UlaConfig,
    rng: RngHandle,
    noise: Vec<RngHandle>,
}

impl<'t> UlaSampler<'t> {
    pub fn new(particles: ParticleSet, target: &'t dyn Target, cfg: UlaConfig, mut rng: RngHandle) -> Result<Self> {
        crate::error::check_dim(particles.dim(), target.dim())?;
        check_step_size(cfg.eta)?;
        let noise_seed = rng.fork_seed();
        let noise = (0..particles.n() as u64).map(|i| RngHandle::from_stream(noise_seed, i)).collect();
        Ok(Self { particles, target, cfg, rng, noise })
    }

    pub fn into_particles(self) -> ParticleSet {
        self.particles
    }
}

impl Stepper for UlaSampler<'_> {
    fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    fn step(&mut self) -> Result<()> {
        let d = self.particles.dim();
        let scores = batch_scores(self.target, &self.particles, &mut self.rng, self.cfg.policy)?;
        let eta = self.cfg.eta;
        let amp = self.cfg.noise_scale * (2.0 * eta).sqrt();
        for_each_row_with_state(self.cfg.policy, self.particles.as_mut_slice(), d, &mut self.noise, |i, x, r| {
            for k in 0..d {
                x[k] += eta * scores[i * d + k] + amp * r.normal();
            }
        });
        self.particles.advance();
        check_finite(&self.particles)
    }
}

/// T steps of x ← x + η∇ln p*(x) + √(2η)·z.
pub fn ula_run(
    particles: ParticleSet,
    target: &dyn Target,
    cfg: UlaConfig,
    rng: RngHandle,
    monitors: Vec<&mut dyn Monitor>,
) -> Result<(ParticleSet, RunTrace)> {
    let (steps, record) = (cfg.steps, cfg.record);
    let mut s = UlaSampler::new(particles, target, cfg, rng)?;
    let trace = drive(&mut s, steps, record, monitors)?;
    Ok((s.into_particles(), trace))
}
