//! Builds targets, samplers and monitors from a config and writes the
//! resulting traces.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use pfg_core::analytic::{euler_trajectory, gaussian_kl, write_trajectory_csv, FieldKind, GaussianState};
use pfg_core::field::{Activation, AffineModel, DivergenceMode, MlpParams, OptimizerKind};
use pfg_core::kernels::KernelSpec;
use pfg_core::metrics::{
    dim_avg_variance, energy_distance, kde_elbo, mmd_rbf, KdeBandwidth, MmdBandwidth, MmdVariant,
};
use pfg_core::samplers::{
    pfg_run, svgd_run, timing_probe, ula_run, InnerSolver, Monitor, PfgConfig, Preconditioner,
    RecordConfig, RunTrace, SvgdConfig, TimingRow, TimingSampler, UlaConfig, DEFAULT_EMA_DECAY, DEFAULT_EMA_FLOOR,
};
use pfg_core::targets::{make_paper_mixture, Dataset, GaussianTarget, LogisticRegressionTarget, MixtureTarget, Target};
use pfg_core::{sample_gaussian, ExecPolicy, ParticleSet, RngHandle, SpdMatrix};

use crate::config::{
    AnalyticConfig, FieldClass, KernelKind, OracleField, PrecondKind, SamplerConfig, SamplerKind, ScenarioConfig,
    ScenarioKind,
};
use crate::error::{HarnessError, Result};
use crate::manifest::{ArtifactWriter, RunManifest};
use crate::sonar::{sonar_dataset, BUILTIN_SONAR};

// RNG stream layout per run seed.
const STREAM_TARGET: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_REFERENCE: u64 = 2;
const STREAM_SAMPLER: u64 = 100;
const STREAM_MODEL: u64 = 200;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub policy: ExecPolicy,
}

/// Final monitor values of one sampler run.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSummary {
    pub name: String,
    pub final_values: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub manifest: RunManifest,
    pub samplers: Vec<SamplerSummary>,
    pub timing: Vec<(String, Vec<TimingRow>)>,
}

pub enum BuiltTarget {
    Gaussian(GaussianTarget),
    Mixture(MixtureTarget),
    Logistic(LogisticRegressionTarget),
}

impl BuiltTarget {
    pub fn as_dyn(&self) -> &dyn Target {
        match self {
            BuiltTarget::Gaussian(t) => t,
            BuiltTarget::Mixture(t) => t,
            BuiltTarget::Logistic(t) => t,
        }
    }

    fn gaussian(&self) -> Option<&GaussianTarget> {
        match self {
            BuiltTarget::Gaussian(t) => Some(t),
            _ => None,
        }
    }
}

fn diag_gaussian(mean: &[f64], cov_diag: &[f64]) -> Result<GaussianTarget> {
    Ok(GaussianTarget::new(DVector::from_column_slice(mean), SpdMatrix::from_diagonal(cov_diag)?)?)
}

pub fn build_target(cfg: &ScenarioConfig, seed: u64, manifest: &mut RunManifest) -> Result<BuiltTarget> {
    let t = &cfg.target;
    match cfg.scenario {
        ScenarioKind::AnalyticGaussian | ScenarioKind::IllConditioned => {
            let (m, c) = (t.mean.as_ref(), t.cov_diag.as_ref());
            let (m, c) = m.zip(c).ok_or_else(|| HarnessError::validation("target", "needs mean and cov_diag"))?;
            Ok(BuiltTarget::Gaussian(diag_gaussian(m, c)?))
        }
        ScenarioKind::VarianceCollapse => {
            let d = t.dim.unwrap_or_else(|| {
                manifest.default_used("target.dim", 20);
                20
            });
            Ok(BuiltTarget::Gaussian(GaussianTarget::standard(d)))
        }
        ScenarioKind::Mixture => {
            let k = t.clusters.unwrap_or_else(|| {
                manifest.default_used("target.clusters", 10);
                10
            });
            let d = t.dim.unwrap_or_else(|| {
                manifest.default_used("target.dim", 2);
                2
            });
            let mut rng = RngHandle::from_stream(seed, STREAM_TARGET);
            Ok(BuiltTarget::Mixture(make_paper_mixture(&mut rng, k, d)))
        }
        ScenarioKind::Logistic | ScenarioKind::Timing => match &t.dataset {
            Some(path) => Ok(BuiltTarget::Logistic(logistic_target(cfg, path, manifest)?)),
            None => {
                let d = t.dim.unwrap_or(2);
                manifest.default_used("target", format!("standard Gaussian, dim {d}"));
                Ok(BuiltTarget::Gaussian(GaussianTarget::standard(d)))
            }
        },
    }
}

fn logistic_target(cfg: &ScenarioConfig, path: &Path, manifest: &mut RunManifest) -> Result<LogisticRegressionTarget> {
    let t = &cfg.target;
    let mut data = if path.as_os_str() == BUILTIN_SONAR { sonar_dataset()? } else { Dataset::from_csv(path)? };
    if t.standardize.unwrap_or_else(|| {
        manifest.default_used("target.standardize", true);
        true
    }) {
        data.standardize();
    }
    if t.intercept.unwrap_or_else(|| {
        manifest.default_used("target.intercept", true);
        true
    }) {
        data.add_intercept();
    }
    let prior = t.prior_precision.unwrap_or_else(|| {
        manifest.default_used("target.prior_precision", 1.0);
        1.0
    });
    let batch = t.batch_size.unwrap_or_else(|| {
        manifest.default_used("target.batch_size", "full batch");
        0
    });
    Ok(LogisticRegressionTarget::new(data, prior, batch)?)
}

fn initial_particles(cfg: &ScenarioConfig, d: usize, seed: u64, manifest: &mut RunManifest) -> Result<ParticleSet> {
    let n = cfg.init.n.unwrap_or_else(|| {
        manifest.default_used("init.n", 1000);
        1000
    });
    let mean = cfg.init.mean.clone().unwrap_or_else(|| {
        manifest.default_used("init.mean", "zeros");
        vec![0.0; d]
    });
    let cov = cfg.init.cov_diag.clone().unwrap_or_else(|| {
        manifest.default_used("init.cov_diag", "ones");
        vec![1.0; d]
    });
    if mean.len() != d || cov.len() != d {
        return Err(HarnessError::validation("init", format!("mean and cov_diag must have length {d}")));
    }
    let mut rng = RngHandle::from_stream(seed, STREAM_INIT);
    Ok(sample_gaussian(&mut rng, &DVector::from_vec(mean), &SpdMatrix::from_diagonal(&cov)?, n)?)
}

/// Samples the metrics compare against: exact draws where the target allows
/// it, otherwise a long Langevin run.
pub fn reference_samples(
    target: &BuiltTarget,
    cfg: &ScenarioConfig,
    seed: u64,
    policy: ExecPolicy,
    manifest: &mut RunManifest,
) -> Result<ParticleSet> {
    let m = &cfg.metrics;
    let mut rng = RngHandle::from_stream(seed, STREAM_REFERENCE);
    match target {
        BuiltTarget::Gaussian(t) => {
            let n = m.reference_samples.unwrap_or_else(|| {
                manifest.default_used("metrics.reference_samples", 2000);
                2000
            });
            Ok(sample_gaussian(&mut rng, t.mean(), t.cov(), n)?)
        }
        BuiltTarget::Mixture(t) => {
            let n = m.reference_samples.unwrap_or_else(|| {
                manifest.default_used("metrics.reference_samples", 2000);
                2000
            });
            Ok(t.sample(&mut rng, n))
        }
        BuiltTarget::Logistic(t) => {
            let n = m.reference_samples.unwrap_or_else(|| {
                manifest.default_used("metrics.reference_samples", 1000);
                1000
            });
            let steps = m.reference_steps.unwrap_or_else(|| {
                manifest.default_used("metrics.reference_steps", 20000);
                20000
            });
            let eta = m.reference_eta.unwrap_or_else(|| {
                manifest.default_used("metrics.reference_eta", 1e-3);
                1e-3
            });
            Ok(langevin_reference(t, n, steps, eta, &mut rng, policy)?)
        }
    }
}

/// Independent ULA chains from N(0, I), one sample per chain.
pub fn langevin_reference(
    target: &dyn Target,
    n: usize,
    steps: usize,
    eta: f64,
    rng: &mut RngHandle,
    policy: ExecPolicy,
) -> pfg_core::Result<ParticleSet> {
    let d = target.dim();
    let init = sample_gaussian(rng, &DVector::zeros(d), &SpdMatrix::identity(d), n)?;
    let cfg = UlaConfig {
        steps,
        eta,
        noise_scale: 1.0,
        record: RecordConfig { every: steps.max(1), snapshot_every: None, wall_clock: false },
        policy,
    };
    let (p, _) = ula_run(init, target, cfg, RngHandle::new(rng.fork_seed()), Vec::new())?;
    Ok(p)
}

fn default_columns(kind: ScenarioKind) -> Vec<String> {
    let names: &[&str] = match kind {
        ScenarioKind::AnalyticGaussian | ScenarioKind::IllConditioned => &["kl", "mean_err_sq"],
        ScenarioKind::VarianceCollapse => &["dim_var"],
        ScenarioKind::Mixture => &["energy"],
        ScenarioKind::Logistic => &["mean_err_sq", "mmd", "elbo"],
        ScenarioKind::Timing => &[],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Evaluates the configured metric columns plus `t = step·η`.
struct MetricMonitor<'a> {
    names: Vec<String>,
    eta: f64,
    target: &'a dyn Target,
    gaussian: Option<&'a GaussianTarget>,
    reference: Option<&'a ParticleSet>,
    reference_mean: Option<DVector<f64>>,
    policy: ExecPolicy,
}

impl Monitor for MetricMonitor<'_> {
    fn columns(&self) -> Vec<String> {
        let mut c = vec!["t".to_string()];
        c.extend(self.names.iter().cloned());
        c
    }

    fn observe(&mut self, step: usize, p: &ParticleSet) -> pfg_core::Result<Vec<f64>> {
        let mut out = vec![step as f64 * self.eta];
        for name in &self.names {
            let v = match name.as_str() {
                "mean_err_sq" => {
                    let m = p.mean();
                    match (self.gaussian, &self.reference_mean) {
                        (Some(g), _) => (&m - g.mean()).norm_squared(),
                        (None, Some(r)) => (&m - r).norm_squared(),
                        _ => f64::NAN,
                    }
                }
                "kl" => match self.gaussian {
                    Some(g) => particle_kl(p, g),
                    None => f64::NAN,
                },
                "energy" => match self.reference {
                    Some(r) => energy_distance(p, r, self.policy)?,
                    None => f64::NAN,
                },
                "mmd" => match self.reference {
                    Some(r) => mmd_rbf(p, r, MmdBandwidth::PooledMedian, MmdVariant::Unbiased, self.policy)?,
                    None => f64::NAN,
                },
                "elbo" => kde_elbo(p, self.target, KdeBandwidth::Scott, self.policy)?,
                "dim_var" => dim_avg_variance(p)?,
                _ => f64::NAN,
            };
            out.push(v);
        }
        Ok(out)
    }
}

/// KL from the Gaussian fitted to the particles' (biased) moments to the
/// target; NaN when the empirical covariance is singular.
pub fn particle_kl(p: &ParticleSet, target: &GaussianTarget) -> f64 {
    let cov = match SpdMatrix::from_symmetrized(p.covariance(false)) {
        Ok(c) => c,
        Err(_) => return f64::NAN,
    };
    GaussianState::new(p.mean(), cov)
        .and_then(|s| gaussian_kl(&s, &GaussianState::of_target(target)))
        .unwrap_or(f64::NAN)
}

fn sampler_name(s: &SamplerConfig, index: usize, all: &[SamplerConfig]) -> String {
    if let Some(n) = &s.name {
        return n.clone();
    }
    let base = match s.kind {
        SamplerKind::Pfg => "pfg",
        SamplerKind::Svgd => "svgd",
        SamplerKind::Ula => "ula",
    };
    if all.iter().filter(|o| o.kind == s.kind && o.name.is_none()).count() > 1 {
        format!("{base}_{index}")
    } else {
        base.to_string()
    }
}

pub fn build_preconditioner(
    s: &SamplerConfig,
    target: &BuiltTarget,
    d: usize,
    manifest: &mut RunManifest,
) -> Result<Preconditioner> {
    let kind = s.preconditioner.unwrap_or_else(|| {
        manifest.default_used("sampler.preconditioner", "identity");
        PrecondKind::Identity
    });
    let p = match kind {
        PrecondKind::Identity => return Ok(Preconditioner::identity(d)),
        PrecondKind::Fixed => {
            let h = s.h.clone().ok_or_else(|| HarnessError::validation("sampler.h", "missing"))?;
            if h.len() != d {
                return Err(HarnessError::validation("sampler.h", format!("expected length {d}")));
            }
            Preconditioner::fixed_diag(h)?
        }
        PrecondKind::TargetPrecision => {
            let g = target
                .gaussian()
                .ok_or_else(|| HarnessError::validation("sampler.preconditioner", "target-precision needs a Gaussian target"))?;
            Preconditioner::fixed_diag(g.cov().diagonal().iter().map(|v| 1.0 / v).collect())?
        }
        PrecondKind::Fisher => {
            let decay = s.ema_decay.unwrap_or_else(|| {
                manifest.default_used("sampler.ema_decay (beta)", DEFAULT_EMA_DECAY);
                DEFAULT_EMA_DECAY
            });
            let floor = s.ema_floor.unwrap_or_else(|| {
                manifest.default_used("sampler.ema_floor (eps_H)", DEFAULT_EMA_FLOOR);
                DEFAULT_EMA_FLOOR
            });
            manifest.default_used("sampler.ema_first_update", "v initialized to the first batch mean");
            Preconditioner::fisher_ema(d, decay, floor)?
        }
    };
    let alpha = s.alpha.unwrap_or_else(|| {
        manifest.default_used("sampler.alpha", 1.0);
        1.0
    });
    Ok(p.with_alpha(alpha)?)
}

pub fn pfg_config(s: &SamplerConfig, seed: u64, record: RecordConfig, policy: ExecPolicy, manifest: &mut RunManifest) -> PfgConfig {
    let inner = s.inner_steps.unwrap_or_else(|| {
        manifest.default_used("sampler.inner_steps (T')", 5);
        5
    });
    if s.first_inner_steps.is_none() {
        manifest.default_used("sampler.first_inner_steps (T0')", format!("10*T' = {}", 10 * inner));
    }
    let inner_lr = s.inner_lr.unwrap_or_else(|| {
        manifest.default_used("sampler.inner_lr", 1e-3);
        1e-3
    });
    let optimizer = match s.optimizer.as_deref() {
        Some("adam") => OptimizerKind::adam(),
        Some(_) => match s.momentum {
            Some(m) => OptimizerKind::Sgd { momentum: m },
            None => OptimizerKind::sgd_momentum(),
        },
        None => {
            manifest.default_used("sampler.optimizer", "sgd, momentum 0.9");
            OptimizerKind::sgd_momentum()
        }
    };
    let divergence = match s.probes {
        Some(k) if k > 0 => DivergenceMode::Hutchinson { probes: k, seed: RngHandle::from_stream(seed, STREAM_MODEL + 50).fork_seed() },
        _ => DivergenceMode::Exact,
    };
    let solver = match s.solver.as_deref() {
        Some("exact") => InnerSolver::Exact,
        _ => InnerSolver::Gradient,
    };
    PfgConfig {
        outer_steps: s.steps,
        inner_steps: inner,
        first_inner_steps: s.first_inner_steps,
        eta: s.eta,
        inner_lr,
        optimizer,
        divergence,
        solver,
        record,
        policy,
    }
}

pub fn svgd_kernel(s: &SamplerConfig, d: usize, manifest: &mut RunManifest) -> Result<KernelSpec> {
    match s.kernel.unwrap_or_else(|| {
        manifest.default_used("sampler.kernel", "rbf-median");
        KernelKind::RbfMedian
    }) {
        KernelKind::RbfMedian => {
            manifest.default_used("bandwidth rule", "median sq-dist / (2 ln(n+1)), floor 1e-12");
            Ok(KernelSpec::rbf_median())
        }
        KernelKind::Rbf => {
            let b = s.bandwidth.ok_or_else(|| HarnessError::validation("sampler.bandwidth", "rbf kernel needs a bandwidth"))?;
            Ok(KernelSpec::rbf_fixed(b)?)
        }
        KernelKind::Linear => {
            let k = match &s.kernel_diag {
                Some(v) if v.len() == d => SpdMatrix::from_diagonal(v)?,
                Some(_) => return Err(HarnessError::validation("sampler.kernel_diag", format!("expected length {d}"))),
                None => SpdMatrix::identity(d),
            };
            Ok(KernelSpec::linear(k))
        }
    }
}

pub fn mlp_model(s: &SamplerConfig, d: usize, seed: u64, index: usize, manifest: &mut RunManifest) -> Result<MlpParams> {
    let hidden = s.hidden.unwrap_or_else(|| {
        manifest.default_used("sampler.hidden", 32);
        32
    });
    let act: Activation = match &s.activation {
        Some(a) => a.parse().map_err(|_| HarnessError::validation("sampler.activation", a.clone()))?,
        None => {
            manifest.default_used("sampler.activation", "sigmoid");
            Activation::Sigmoid
        }
    };
    let scale = s.init_scale.unwrap_or_else(|| {
        manifest.default_used("sampler.init_scale", 1.0);
        1.0
    });
    let mut rng = RngHandle::from_stream(seed, STREAM_MODEL + index as u64);
    Ok(MlpParams::init(&mut rng, d, hidden, act, scale).with_base_shift(s.base_shift.unwrap_or(0.0)))
}

struct SamplerRun {
    particles: ParticleSet,
    trace: RunTrace,
    losses: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_sampler(
    s: &SamplerConfig,
    index: usize,
    init: ParticleSet,
    target: &BuiltTarget,
    seed: u64,
    record: RecordConfig,
    policy: ExecPolicy,
    monitor: &mut dyn Monitor,
    manifest: &mut RunManifest,
) -> Result<SamplerRun> {
    let tgt = target.as_dyn();
    let d = tgt.dim();
    let rng = RngHandle::from_stream(seed, STREAM_SAMPLER + index as u64);
    match s.kind {
        SamplerKind::Pfg => {
            let precond = build_preconditioner(s, target, d, manifest)?;
            let cfg = pfg_config(s, seed, record, policy, manifest);
            match s.field.unwrap_or(FieldClass::Mlp) {
                FieldClass::Mlp => {
                    let model = mlp_model(s, d, seed, index, manifest)?;
                    let out = pfg_run(init, tgt, model, precond, cfg, rng, vec![monitor])?;
                    Ok(SamplerRun { particles: out.particles, trace: out.trace, losses: out.losses })
                }
                FieldClass::Affine => {
                    let model = AffineModel::zeros(d).with_base_shift(s.base_shift.unwrap_or(0.0));
                    let out = pfg_run(init, tgt, model, precond, cfg, rng, vec![monitor])?;
                    Ok(SamplerRun { particles: out.particles, trace: out.trace, losses: out.losses })
                }
            }
        }
        SamplerKind::Svgd => {
            let kernel = svgd_kernel(s, d, manifest)?;
            let cfg = SvgdConfig { steps: s.steps, eta: s.eta, kernel, record, policy };
            let (particles, trace) = svgd_run(init, tgt, cfg, rng, vec![monitor])?;
            Ok(SamplerRun { particles, trace, losses: Vec::new() })
        }
        SamplerKind::Ula => {
            let cfg = UlaConfig { steps: s.steps, eta: s.eta, noise_scale: 1.0, record, policy };
            let (particles, trace) = ula_run(init, tgt, cfg, rng, vec![monitor])?;
            Ok(SamplerRun { particles, trace, losses: Vec::new() })
        }
    }
}

fn oracle_kind(f: OracleField, a: &AnalyticConfig, d: usize) -> Result<FieldKind> {
    Ok(match f {
        OracleField::LinearSvgd => FieldKind::LinearSvgd(match &a.kernel_diag {
            Some(k) => SpdMatrix::from_diagonal(k)?,
            None => SpdMatrix::identity(d),
        }),
        OracleField::L2 => FieldKind::L2,
        OracleField::Mahalanobis => FieldKind::Mahalanobis,
        OracleField::OptimalTransport => FieldKind::OptimalTransport,
    })
}

fn run_analytic(
    a: &AnalyticConfig,
    cfg: &ScenarioConfig,
    tgt: &GaussianTarget,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<()> {
    let d = tgt.dim();
    let mean = DVector::from_vec(cfg.init.mean.clone().unwrap_or_else(|| vec![0.0; d]));
    let cov = SpdMatrix::from_diagonal(&cfg.init.cov_diag.clone().unwrap_or_else(|| vec![1.0; d]))?;
    let init = GaussianState::new(mean, cov)?;
    let steps = (a.horizon / a.eta).round() as usize;
    let every = a.record_every.unwrap_or_else(|| {
        manifest.default_used("analytic.record_every", 1);
        1
    });
    for &f in &a.fields {
        let kind = oracle_kind(f, a, d)?;
        let (_, rows) = euler_trajectory(&init, tgt, &kind, a.eta, steps, every)?;
        writer.write(&format!("oracle_{}.csv", kind.name()), |w| Ok(write_trajectory_csv(&rows, w)?))?;
    }
    Ok(())
}

fn resolve_out(cfg: &ScenarioConfig, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.scenario.name()))
}

/// Runs every part of a scenario and writes its artifacts and manifest into
/// the output directory.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let seed = opts.seed.unwrap_or(cfg.seed);
    let out = resolve_out(cfg, opts);
    let mut manifest = RunManifest::new(cfg, seed, opts.policy.is_parallel());
    let mut writer = ArtifactWriter::new(&out, seed, &manifest.config_sha256)?;
    let policy = opts.policy;

    let target = build_target(cfg, seed, &mut manifest)?;
    let d = target.as_dyn().dim();
    let mut summary = RunSummary { out: out.clone(), manifest: manifest.clone(), samplers: Vec::new(), timing: Vec::new() };

    if let (Some(a), Some(g)) = (&cfg.analytic, target.gaussian()) {
        run_analytic(a, cfg, g, &mut writer, &mut manifest)?;
    }

    if cfg.scenario == ScenarioKind::Timing {
        summary.timing = run_timing(cfg, &target, seed, policy, &mut writer, &mut manifest)?;
    } else if !cfg.samplers.is_empty() {
        let columns = if cfg.metrics.columns.is_empty() {
            let c = default_columns(cfg.scenario);
            manifest.default_used("metrics.columns", c.join(","));
            c
        } else {
            cfg.metrics.columns.clone()
        };
        if columns.iter().any(|c| c == "kl") && target.gaussian().is_none() {
            return Err(HarnessError::validation("metrics.columns", "kl needs a Gaussian target"));
        }
        let needs_reference = columns.iter().any(|c| c == "energy" || c == "mmd")
            || (columns.iter().any(|c| c == "mean_err_sq") && target.gaussian().is_none());
        let reference = if needs_reference {
            let r = reference_samples(&target, cfg, seed, policy, &mut manifest)?;
            if columns.iter().any(|c| c == "mmd") {
                manifest.default_used("mmd", "unbiased U-statistic, sigma^2 = pooled median sq-dist (subsample 1000)");
            }
            Some(r)
        } else {
            None
        };
        if columns.iter().any(|c| c == "elbo") {
            manifest.default_used("elbo.kde_bandwidth", "Scott's rule per coordinate");
        }
        let init = initial_particles(cfg, d, seed, &mut manifest)?;
        let record = RecordConfig {
            every: cfg.metrics.record_every,
            snapshot_every: cfg.metrics.snapshot_every,
            wall_clock: cfg.metrics.wall_clock,
        };
        for (i, s) in cfg.samplers.iter().enumerate() {
            let name = sampler_name(s, i, &cfg.samplers);
            let mut monitor = MetricMonitor {
                names: columns.clone(),
                eta: s.eta,
                target: target.as_dyn(),
                gaussian: target.gaussian(),
                reference: reference.as_ref(),
                reference_mean: reference.as_ref().map(|r| r.mean()),
                policy,
            };
            let run = run_sampler(s, i, init.clone(), &target, seed, record, policy, &mut monitor, &mut manifest)?;
            writer.write(&format!("trace_{name}.csv"), |w| Ok(run.trace.write_csv(w)?))?;
            writer.write(&format!("final_{name}.csv"), |w| Ok(run.particles.write_csv(w)?))?;
            for snap in &run.trace.snapshots {
                writer.write(&format!("snapshots_{name}/snap_{}.csv", snap.step()), |w| Ok(snap.write_csv(w)?))?;
            }
            if !run.losses.is_empty() {
                writer.write(&format!("losses_{name}.csv"), |w| {
                    writeln!(w, "step,loss")?;
                    for (k, l) in run.losses.iter().enumerate() {
                        writeln!(w, "{},{l:e}", k + 1)?;
                    }
                    Ok(())
                })?;
            }
            let last = run.trace.records.last();
            let final_values = run
                .trace
                .columns
                .iter()
                .enumerate()
                .map(|(k, c)| (c.clone(), last.map_or(f64::NAN, |r| r.values[k])))
                .collect();
            summary.samplers.push(SamplerSummary { name, final_values });
        }
    }

    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.artifacts = writer.written().to_vec();
    manifest.write(&out)?;
    summary.manifest = manifest;
    Ok(summary)
}

fn run_timing(
    cfg: &ScenarioConfig,
    target: &BuiltTarget,
    seed: u64,
    policy: ExecPolicy,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<Vec<(String, Vec<TimingRow>)>> {
    let t = cfg.timing.as_ref().ok_or_else(|| HarnessError::validation("timing", "missing"))?;
    let d = target.as_dyn().dim();
    let record = RecordConfig { every: usize::MAX, snapshot_every: None, wall_clock: false };
    let mut results = Vec::new();
    for (i, s) in cfg.samplers.iter().enumerate() {
        let sampler = match s.kind {
            SamplerKind::Pfg => TimingSampler::Pfg {
                model: mlp_model(s, d, seed, i, manifest)?,
                precond: build_preconditioner(s, target, d, manifest)?,
                cfg: pfg_config(s, seed, record, policy, manifest),
            },
            SamplerKind::Svgd => TimingSampler::Svgd {
                cfg: SvgdConfig { steps: s.steps, eta: s.eta, kernel: svgd_kernel(s, d, manifest)?, record, policy },
            },
            SamplerKind::Ula => {
                return Err(HarnessError::validation(format!("samplers[{i}].kind"), "timing supports pfg and svgd"))
            }
        };
        let mut rng = RngHandle::from_stream(seed, STREAM_SAMPLER + i as u64);
        let rows = timing_probe(&sampler, &t.particles, target.as_dyn(), t.iterations, &mut rng)?;
        results.push((sampler_name(s, i, &cfg.samplers), rows));
    }
    writer.write("timing.csv", |w| {
        writeln!(w, "sampler,n,iterations,median_ms")?;
        for (name, rows) in &results {
            for r in rows {
                writeln!(w, "{name},{},{},{:.6}", r.n, r.iterations, r.median_ms)?;
            }
        }
        Ok(())
    })?;
    Ok(results)
}

/// t(n_max)/t(n_min) for one timing series.
pub fn timing_ratio(rows: &[TimingRow]) -> Option<f64> {
    let (a, b) = (rows.first()?, rows.last()?);
    (a.median_ms > 0.0).then(|| b.median_ms / a.median_ms)
}
