//! Outer-loop particle dynamics: PFG, SVGD and unadjusted Langevin.
//!
//! Each sampler is a stepper struct that advances the cloud by one outer
//! iteration; the `*_run` functions drive a stepper with a [`RunTrace`].

mod pfg;
mod precond;
mod svgd;
mod timing;
mod trace;
mod ula;

pub use pfg::{pfg_run, InnerSolver, PfgConfig, PfgOutput, PfgSampler};
pub use precond::{PrecondMode, Preconditioner, DEFAULT_EMA_DECAY, DEFAULT_EMA_FLOOR};
pub use svgd::{svgd_run, SvgdConfig, SvgdSampler};
pub use timing::{timing_probe, TimingRow, TimingSampler};
pub use trace::{FnMonitor, Monitor, RecordConfig, RunTrace, TraceRecord};
pub use ula::{ula_run, UlaConfig, UlaSampler};

use crate::error::{check_dim, Error, Result};
use crate::par::{map_indices, ExecPolicy};
use crate::particles::ParticleSet;
use crate::rng::RngHandle;
use crate::targets::Target;

/// A sampler that advances a particle cloud one iteration at a time.
pub trait Stepper {
    fn particles(&self) -> &ParticleSet;
    fn step(&mut self) -> Result<()>;
}

/// Scores of every particle, all using one minibatch drawn from `rng` when
/// the target subsamples.
pub(crate) fn batch_scores(
    target: &dyn Target,
    particles: &ParticleSet,
    rng: &mut RngHandle,
    policy: ExecPolicy,
) -> Result<Vec<f64>> {
    let d = particles.dim();
    check_dim(target.dim(), d)?;
    let batch = target.draw_batch(rng);
    let rows = map_indices(policy, particles.n(), |i| {
        let mut s = vec![0.0; d];
        let x = particles.row(i);
        match &batch {
            Some(b) => target.grad_log_density_batch(x, b, &mut s),
            None => target.grad_log_density(x, &mut s),
        }
        .map(|_| s)
    });
    let mut out = Vec::with_capacity(particles.n() * d);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub(crate) fn check_finite(particles: &ParticleSet) -> Result<()> {
    match particles.first_non_finite() {
        Some(particle) => Err(Error::NonFiniteParticle { step: particles.step(), particle }),
        None => Ok(()),
    }
}

pub(crate) fn check_step_size(eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidInput(format!("step size must be positive, got {eta}")));
    }
    Ok(())
}

/// Runs `steps` iterations of `s`, recording as configured.
pub(crate) fn drive<S: Stepper>(
    s: &mut S,
    steps: usize,
    record: RecordConfig,
    monitors: Vec<&mut dyn Monitor>,
) -> Result<RunTrace> {
    let mut rec = trace::Recorder::new(record, monitors);
    rec.observe(s.particles(), steps == 0)?;
    for k in 0..steps {
        s.step()?;
        rec.observe(s.particles(), k + 1 == steps)?;
    }
    Ok(rec.finish())
}
