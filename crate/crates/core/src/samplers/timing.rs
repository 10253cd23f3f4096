use std::time::Instant;

use nalgebra::DVector;

use super::{PfgConfig, PfgSampler, Preconditioner, Stepper, SvgdConfig, SvgdSampler};
use crate::error::{Error, Result};
use crate::field::MlpParams;
use crate::linalg::{sample_gaussian, SpdMatrix};
use crate::rng::RngHandle;
use crate::targets::Target;

/// Sampler and fixed settings whose per-iteration cost is measured.
#[derive(Clone, Debug)]
pub enum TimingSampler {
    Pfg { model: MlpParams, precond: Preconditioner, cfg: PfgConfig },
    Svgd { cfg: SvgdConfig },
}

impl TimingSampler {
    pub fn name(&self) -> &'static str {
        match self {
            TimingSampler::Pfg { .. } => "pfg",
            TimingSampler::Svgd { .. } => "svgd",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    pub iterations: usize,
    /// Median wall time of one outer iteration, milliseconds.
    pub median_ms: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) }
}

fn time_steps<S: Stepper>(s: &mut S, warmup: usize, iterations: usize) -> Result<Vec<f64>> {
    for _ in 0..warmup {
        s.step()?;
    }
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t = Instant::now();
        s.step()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(times)
}

/// Median per-iteration wall time for each particle count in `ns`, from
/// N(0, I) starting clouds. At least 100 timed iterations per row.
pub fn timing_probe(
    sampler: &TimingSampler,
    ns: &[usize],
    target: &dyn Target,
    iterations: usize,
    rng: &mut RngHandle,
) -> Result<Vec<TimingRow>> {
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns.first() == Some(&0) {
        return Err(Error::InvalidInput("particle counts must be positive and ascending".into()));
    }
    let iterations = iterations.max(100);
    let d = target.dim();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let init = sample_gaussian(rng, &DVector::zeros(d), &SpdMatrix::identity(d), n)?;
        let run_rng = RngHandle::new(rng.fork_seed());
        let times = match sampler {
            TimingSampler::Pfg { model, precond, cfg } => {
                let mut s = PfgSampler::new(init, target, model.clone(), precond.clone(), cfg.clone(), run_rng)?;
                // the first outer iteration runs the longer warm-up inner loop
                time_steps(&mut s, 1, iterations)?
            }
            TimingSampler::Svgd { cfg } => {
                let mut s = SvgdSampler::new(init, target, cfg.clone(), run_rng)?;
                time_steps(&mut s, 1, iterations)?
            }
        };
        rows.push(TimingRow { n, iterations, median_ms: median(times) });
    }
    Ok(rows)
}
