use super::{batch_scores, check_finite, check_step_size, drive, Monitor, RecordConfig, RunTrace, Stepper};
use crate::error::Result;
use crate::kernels::{svgd_direction_with_scores, KernelSpec};
use crate::par::ExecPolicy;
use crate::particles::ParticleSet;
use crate::rng::RngHandle;
use crate::targets::Target;

#[derive(Clone, Debug)]
pub struct SvgdConfig {
    pub steps: usize,
    pub eta: f64,
    pub kernel: KernelSpec,
    pub record: RecordConfig,
    pub policy: ExecPolicy,
}

impl Default for SvgdConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            eta: 0.01,
            kernel: KernelSpec::rbf_median(),
            record: RecordConfig::default(),
            policy: ExecPolicy::default(),
        }
    }
}

pub struct SvgdSampler<'t> {
    particles: ParticleSet,
    target: &'t dyn Target,
    cfg: SvgdConfig,
    rng: RngHandle,
}

impl<'t> SvgdSampler<'t> {
    pub fn new(particles: ParticleSet, target: &'t dyn Target, cfg: SvgdConfig, rng: RngHandle) -> Result<Self> {
        crate::error::check_dim(particles.dim(), target.dim())?;
        check_step_size(cfg.eta)?;
        Ok(Self { particles, target, cfg, rng })
    }

    pub fn into_particles(self) -> ParticleSet {
        self.particles
    }
}

impl Stepper for SvgdSampler<'_> {
    fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    fn step(&mut self) -> Result<()> {
        let scores = batch_scores(self.target, &self.particles, &mut self.rng, self.cfg.policy)?;
        // the median bandwidth is re-resolved against the current cloud
        let kernel = self.cfg.kernel.resolve(&self.particles)?;
        let phi = svgd_direction_with_scores(&self.particles, &scores, &kernel, self.cfg.policy)?;
        let eta = self.cfg.eta;
        for (x, p) in self.particles.as_mut_slice().iter_mut().zip(&phi) {
            *x += eta * p;
        }
        self.particles.advance();
        check_finite(&self.particles)
    }
}

/// T steps of x ← x + η·φ(x).
pub fn svgd_run(
    particles: ParticleSet,
    target: &dyn Target,
    cfg: SvgdConfig,
    rng: RngHandle,
    monitors: Vec<&mut dyn Monitor>,
) -> Result<(ParticleSet, RunTrace)> {
    let (steps, record) = (cfg.steps, cfg.record);
    let mut s = SvgdSampler::new(particles, target, cfg, rng)?;
    let trace = drive(&mut s, steps, record, monitors)?;
    Ok((s.into_particles(), trace))
}
