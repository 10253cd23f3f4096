//! The acceptance suite: twelve criteria, each producing a report entry with
//! its measured values, verdict and runtime.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pfg_core::analytic::{
    c0_bound, discrete_gaussian_step, euler_trajectory, field_l2, field_mahalanobis, field_rbf_svgd, gaussian_kl,
    linear_class_minimizer, AffineField, FieldKind, GaussianState,
};
use pfg_core::field::{
    hutchinson_divergence, particle_scores, pfg_loss_with_scores, Activation, AffineModel, DivergenceMode,
    FieldModel, MlpParams, OptimizerKind,
};
use pfg_core::kernels::{feature_map_svgd, svgd_direction_at, KernelSpec, LinearFeatures};
use pfg_core::metrics::{dim_avg_variance, energy_distance, kde_elbo, mmd_rbf, KdeBandwidth, MmdBandwidth, MmdVariant};
use pfg_core::samplers::{
    pfg_run, svgd_run, timing_probe, FnMonitor, InnerSolver, PfgConfig, Preconditioner, RecordConfig, SvgdConfig,
    TimingSampler,
};
use pfg_core::targets::{make_paper_mixture, GaussianTarget, LogisticRegressionTarget, Target};
use pfg_core::{sample_gaussian, ExecPolicy, ParticleSet, RngHandle, SpdMatrix};
use serde::Serialize;

use crate::scenario::{langevin_reference, timing_ratio};
use crate::sonar::sonar_dataset;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Measured values behind the verdict.
    pub detail: String,
    pub runtime_s: f64,
    pub budget_s: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {} ({:.2}s of {:.0}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.runtime_s,
            self.budget_s,
            self.detail
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceReport {
    pub version: &'static str,
    pub seeds: [u64; 3],
    pub parallel: bool,
    pub results: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AcceptanceOptions {
    /// Seeds of the three repetitions used by stochastic criteria.
    pub seeds: [u64; 3],
    pub policy: ExecPolicy,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self { seeds: [1, 2, 3], policy: ExecPolicy::default() }
    }
}

impl AcceptanceOptions {
    pub fn with_base_seed(seed: u64) -> Self {
        Self { seeds: [seed, seed + 1, seed + 2], ..Self::default() }
    }
}

/// Verdict and measured values of one criterion.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

type Check = fn(&AcceptanceOptions) -> pfg_core::Result<Outcome>;

pub const CRITERIA: [(u8, &str, f64, Check); 12] = [
    (1, "contraction with H = inverse target covariance", 1.0, contraction_preconditioned),
    (2, "contraction with H = I", 1.0, contraction_identity),
    (3, "closed-form linear minimizer", 30.0, linear_minimizer_oracle),
    (4, "feature-map SVGD equals kernel SVGD", 5.0, feature_map_equivalence),
    (5, "derivative correctness", 60.0, derivative_checks_clean),
    (6, "particle runs track closed-form trajectories", 120.0, particle_oracle_agreement),
    (7, "RBF SVGD field vanishes far from the particles", 1.0, rbf_vanishing),
    (8, "KL decreases along L2 and Mahalanobis flows", 5.0, kl_descent),
    (9, "variance collapse in 20 dimensions", 300.0, variance_collapse),
    (10, "mixture energy distance", 600.0, mixture_quality),
    (11, "per-iteration time scaling", 300.0, timing_scaling),
    (12, "logistic regression posterior quality", 900.0, logistic_quality),
];

pub fn run_criterion(id: u8, opts: &AcceptanceOptions) -> Option<CriterionResult> {
    let &(id, name, budget_s, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let outcome = check(opts).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    let runtime_s = start.elapsed().as_secs_f64();
    let within = runtime_s <= budget_s;
    let detail = if within { outcome.detail } else { format!("{}; over the time budget", outcome.detail) };
    Some(CriterionResult { id, name, passed: outcome.passed && within, detail, runtime_s, budget_s })
}

/// Runs the criteria in `ids` (all when empty), calling `on_result` as each
/// one finishes.
pub fn run_acceptance(opts: &AcceptanceOptions, ids: &[u8], mut on_result: impl FnMut(&CriterionResult)) -> AcceptanceReport {
    let mut results = Vec::new();
    for &(id, ..) in &CRITERIA {
        if !ids.is_empty() && !ids.contains(&id) {
            continue;
        }
        let r = run_criterion(id, opts).expect("criterion id from the table");
        on_result(&r);
        results.push(r);
    }
    AcceptanceReport { version: env!("CARGO_PKG_VERSION"), seeds: opts.seeds, parallel: opts.policy.is_parallel(), results }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// N((20, 20), diag(100, 1)).
pub fn ill_conditioned_target() -> GaussianTarget {
    GaussianTarget::new(v(&[20.0, 20.0]), SpdMatrix::from_diagonal(&[100.0, 1.0]).expect("positive")).expect("valid")
}

fn majority(passes: &[bool]) -> bool {
    passes.iter().filter(|&&p| p).count() * 2 > passes.len()
}

// ---------------------------------------------------------------- 1, 2

/// First t in 1..=steps where KL(state_t) > rate^t·C₀, iterating the exact
/// discrete recursion from N(0, I).
fn contraction_violations(h: &[f64], eta: f64, rate: f64, steps: usize) -> pfg_core::Result<(f64, Vec<(usize, f64, f64)>)> {
    let tgt = ill_conditioned_target();
    let mut s = GaussianState::standard(2);
    let c0 = c0_bound(&s.mean, &s.cov, &tgt)?;
    let q = GaussianState::of_target(&tgt);
    let h = SpdMatrix::from_diagonal(h)?;
    let mut bad = Vec::new();
    for t in 1..=steps {
        s = discrete_gaussian_step(&s, &tgt, &h, eta)?;
        let kl = gaussian_kl(&s, &q)?;
        let bound = rate.powi(t as i32) * c0;
        if kl > bound {
            bad.push((t, kl, bound));
        }
    }
    Ok((c0, bad))
}

fn contraction_outcome(c0: f64, bad: &[(usize, f64, f64)], steps: usize) -> Outcome {
    if bad.is_empty() {
        return Outcome::new(true, format!("C0 = {c0:.4}; KL below the bound for all {steps} steps"));
    }
    let list: Vec<String> = bad.iter().take(5).map(|(t, kl, b)| format!("t={t}: {kl:.4} > {b:.4}")).collect();
    Outcome::new(false, format!("C0 = {c0:.4}; {} violations ({})", bad.len(), list.join(", ")))
}

fn contraction_preconditioned(_: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let (c0, bad) = contraction_violations(&[0.01, 1.0], 0.5, 0.25, 30)?;
    Ok(contraction_outcome(c0, &bad, 30))
}

fn contraction_identity(_: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let r = 1.0 - 1.0 / 200.0;
    let (c0, bad) = contraction_violations(&[1.0, 1.0], 0.5, r * r, 1000)?;
    Ok(contraction_outcome(c0, &bad, 1000))
}

// ---------------------------------------------------------------- 3

fn field_gap(a: &AffineField, b: &AffineField) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(1.0);
    (&a.a - &b.a).amax().max((&a.b - &b.b).amax()) / scale
}

fn random_state(rng: &mut RngHandle, d: usize) -> pfg_core::Result<GaussianState> {
    let mut mean = DVector::zeros(d);
    rng.fill_normal(mean.as_mut_slice());
    let mut b = DMatrix::zeros(d, d);
    rng.fill_normal(b.as_mut_slice());
    let cov = SpdMatrix::from_symmetrized(&b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5)?;
    GaussianState::new(mean * 3.0, cov)
}

fn linear_minimizer_oracle(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let tgt = ill_conditioned_target();
    let mut rng = RngHandle::new(opts.seeds[0]);
    let mut states = vec![GaussianState::standard(2)];
    for _ in 0..9 {
        states.push(random_state(&mut rng, 2)?);
    }
    let h_inv_cov = tgt.precision().clone();
    let (mut gap_l2, mut gap_maha) = (0.0f64, 0.0f64);
    for s in &states {
        gap_l2 = gap_l2.max(field_gap(&linear_class_minimizer(s, &tgt, &SpdMatrix::identity(2))?, &field_l2(s, &tgt)?));
        gap_maha = gap_maha.max(field_gap(&linear_class_minimizer(s, &tgt, &h_inv_cov)?, &field_mahalanobis(s, &tgt)?));
    }

    // empirical minimizer of the objective over affine maps on 1e5 particles
    let state = GaussianState::new(v(&[1.0, 2.0]), SpdMatrix::from_diagonal(&[3.0, 0.5])?)?;
    let xs = sample_gaussian(&mut rng, &state.mean, &state.cov, 100_000)?;
    let scores = particle_scores(&tgt, &xs, opts.policy)?;
    let mut worst = 0.0f64;
    for h in [[1.0, 1.0], [0.01, 1.0]] {
        let theta = AffineModel::zeros(2)
            .exact_fit(&xs, &scores, &h)
            .expect("affine class has a closed form")?;
        let mut m = AffineModel::zeros(2);
        m.params_mut().copy_from_slice(&theta);
        let want = linear_class_minimizer(&state, &tgt, &SpdMatrix::from_diagonal(&h)?)?;
        let probe = sample_gaussian(&mut rng, &state.mean, &state.cov, 2000)?;
        let (mut err, mut norm) = (0.0, 0.0);
        for x in probe.rows() {
            let w = want.eval(&v(x));
            err += (v(&m.forward(x)) - &w).norm_squared();
            norm += w.norm_squared();
        }
        worst = worst.max((err / norm).sqrt());
    }
    let passed = gap_l2 <= 1e-12 && gap_maha <= 1e-12 && worst < 0.02;
    Ok(Outcome::new(
        passed,
        format!("max gap vs L2 field {gap_l2:.2e}, vs Mahalanobis field {gap_maha:.2e}; empirical fit relative error {:.3}%", 100.0 * worst),
    ))
}

// ---------------------------------------------------------------- 4

fn feature_map_equivalence(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let mut rng = RngHandle::new(opts.seeds[0]);
    let mut worst = 0.0f64;
    for cloud in 0..10 {
        let d = 1 + cloud % 4;
        let n = 10 + 5 * cloud;
        let xs = sample_gaussian(&mut rng, &DVector::zeros(d), &SpdMatrix::identity(d), n)?;
        let mut b = DMatrix::zeros(d, d);
        rng.fill_normal(b.as_mut_slice());
        let k = SpdMatrix::from_symmetrized(&b * b.transpose() + DMatrix::identity(d, d) * 0.1)?;
        let mut mu = DVector::zeros(d);
        rng.fill_normal(mu.as_mut_slice());
        let tgt = GaussianTarget::new(mu, SpdMatrix::identity(d))?;
        let spec = KernelSpec::linear(k);
        let kernel = spec.resolve(&xs)?;
        let psi = LinearFeatures::for_kernel(&spec)?;
        let scores = particle_scores(&tgt, &xs, opts.policy)?;
        for _ in 0..20 {
            let mut x = vec![0.0; d];
            rng.fill_normal(&mut x);
            let a = feature_map_svgd(&xs, &tgt, &psi, &x)?;
            let b = svgd_direction_at(&xs, &scores, &kernel, &x)?;
            for (p, q) in a.iter().zip(&b) {
                worst = worst.max((p - q).abs() / q.abs().max(1.0));
            }
        }
    }
    Ok(Outcome::new(worst <= 1e-10, format!("max relative difference {worst:.2e} over 200 probes")))
}

// ---------------------------------------------------------------- 5

/// A model whose divergence backpropagation has the wrong sign; the
/// gradient check has to reject it.
#[derive(Clone, Debug)]
pub struct FlippedDivergenceGrad<M>(pub M);

impl<M: FieldModel> FieldModel for FlippedDivergenceGrad<M> {
    type Cache = M::Cache;

    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn params(&self) -> &[f64] {
        self.0.params()
    }
    fn params_mut(&mut self) -> &mut [f64] {
        self.0.params_mut()
    }
    fn base_shift(&self) -> f64 {
        self.0.base_shift()
    }
    fn forward_cached(&self, x: &[f64], out: &mut [f64]) -> Self::Cache {
        self.0.forward_cached(x, out)
    }
    fn divergence_cached(&self, x: &[f64], cache: &Self::Cache) -> f64 {
        self.0.divergence_cached(x, cache)
    }
    fn jvp_cached(&self, x: &[f64], cache: &Self::Cache, v: &[f64], out: &mut [f64]) {
        self.0.jvp_cached(x, cache, v, out)
    }
    fn backprop_output(&self, x: &[f64], cache: &Self::Cache, upstream: &[f64], grad: &mut [f64]) {
        self.0.backprop_output(x, cache, upstream, grad)
    }
    fn backprop_divergence(&self, x: &[f64], cache: &Self::Cache, scale: f64, grad: &mut [f64]) {
        self.0.backprop_divergence(x, cache, -scale, grad)
    }
    fn backprop_probe(&self, x: &[f64], cache: &Self::Cache, probe: &[f64], scale: f64, grad: &mut [f64]) {
        self.0.backprop_probe(x, cache, probe, scale, grad)
    }
}

/// Which model the derivative checks exercise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    None,
    FlipDivergenceGrad,
}

fn random_mlp(rng: &mut RngHandle, d: usize, h: usize, act: Activation) -> MlpParams {
    let mut p = MlpParams::init(rng, d, h, act, 1.5);
    for w in p.params_mut().iter_mut() {
        if *w == 0.0 {
            *w = 0.3 * rng.normal();
        }
    }
    p
}

fn fd_trace<M: FieldModel>(m: &M, x: &[f64]) -> f64 {
    let eps = 1e-5;
    (0..x.len())
        .map(|j| {
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            xp[j] += eps;
            xm[j] -= eps;
            (m.forward(&xp)[j] - m.forward(&xm)[j]) / (2.0 * eps)
        })
        .sum()
}

/// Largest |fd - analytic| / max(|analytic|, 1) over every parameter.
pub fn loss_gradient_error<M: FieldModel>(
    model: &M,
    xs: &ParticleSet,
    scores: &[f64],
    h: &[f64],
    mode: DivergenceMode,
) -> pfg_core::Result<f64> {
    let pol = ExecPolicy::Sequential;
    let g = pfg_loss_with_scores(model, xs, scores, h, mode, pol)?.grad;
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..model.n_params() {
        let (mut mp, mut mm) = (model.clone(), model.clone());
        mp.params_mut()[k] += eps;
        mm.params_mut()[k] -= eps;
        let lp = pfg_loss_with_scores(&mp, xs, scores, h, mode, pol)?.loss;
        let lm = pfg_loss_with_scores(&mm, xs, scores, h, mode, pol)?.loss;
        let fd = (lp - lm) / (2.0 * eps);
        worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1.0));
    }
    Ok(worst)
}

fn derivative_checks_clean(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    derivative_checks(opts, Mutation::None)
}

pub fn derivative_checks(opts: &AcceptanceOptions, mutation: Mutation) -> pfg_core::Result<Outcome> {
    let mut rng = RngHandle::new(opts.seeds[0].wrapping_add(500));

    // (a) exact divergence against the finite-difference Jacobian trace
    let mut div_err = 0.0f64;
    for act in [Activation::Sigmoid, Activation::Tanh] {
        for d in [1, 2, 5, 10] {
            for h in [1, 8, 64] {
                let m = random_mlp(&mut rng, d, h, act);
                let mut x = vec![0.0; d];
                rng.fill_normal(&mut x);
                let exact = m.divergence(&x);
                div_err = div_err.max((exact - fd_trace(&m, &x)).abs() / exact.abs().max(1.0));
            }
        }
    }

    // (b) loss gradient against central differences, ten random instances
    let mut grad_err = 0.0f64;
    for inst in 0..10 {
        let d = 1 + inst % 4;
        let hidden = 2 + 3 * (inst % 3);
        let n = 12 + 4 * inst;
        let act = if inst % 2 == 0 { Activation::Sigmoid } else { Activation::Tanh };
        let mut mu = DVector::zeros(d);
        rng.fill_normal(mu.as_mut_slice());
        let tgt = GaussianTarget::new(mu, SpdMatrix::from_diagonal(&vec![0.7; d])?)?;
        let xs = sample_gaussian(&mut rng, &DVector::zeros(d), &SpdMatrix::identity(d), n)?;
        let scores = particle_scores(&tgt, &xs, ExecPolicy::Sequential)?;
        let h: Vec<f64> = (0..d).map(|_| 0.5 + rng.uniform()).collect();
        let mut model = random_mlp(&mut rng, d, hidden, act);
        if inst % 3 == 2 {
            model = model.with_base_shift(0.2);
        }
        let mode = DivergenceMode::Exact;
        let err = match mutation {
            Mutation::None => loss_gradient_error(&model, &xs, &scores, &h, mode)?,
            Mutation::FlipDivergenceGrad => loss_gradient_error(&FlippedDivergenceGrad(model), &xs, &scores, &h, mode)?,
        };
        grad_err = grad_err.max(err);
    }

    // (c) Hutchinson with 1e4 probes; tied output weights give a PSD Jacobian
    // so the exact divergence is well away from zero
    let (d, hidden) = (3, 16);
    let mut m = random_mlp(&mut rng, d, hidden, Activation::Sigmoid);
    let p = m.params_mut();
    for i in 0..d {
        for k in 0..hidden {
            p[hidden * d + hidden + i * hidden + k] = p[k * d + i];
        }
    }
    let mut x = vec![0.0; d];
    rng.fill_normal(&mut x);
    let exact = m.divergence(&x);
    let est = hutchinson_divergence(&m, &x, &mut rng, 10_000)?;
    let hutch_err = (est - exact).abs() / exact.abs();

    let passed = div_err <= 1e-6 && grad_err <= 1e-5 && hutch_err < 0.02;
    Ok(Outcome::new(
        passed,
        format!(
            "divergence vs FD trace {div_err:.2e}; loss gradient vs FD {grad_err:.2e}; Hutchinson relative error {:.2}%",
            100.0 * hutch_err
        ),
    ))
}

// ---------------------------------------------------------------- 6

fn particle_oracle_agreement(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let tgt = ill_conditioned_target();
    let (n, eta, steps, every) = (2000, 1e-3, 1000, 100);
    let mut rng = RngHandle::new(opts.seeds[0]);
    let p0 = sample_gaussian(&mut rng, &DVector::zeros(2), &SpdMatrix::identity(2), n)?;
    let init = GaussianState::standard(2);
    let record = RecordConfig { every, snapshot_every: None, wall_clock: false };

    let mut svgd_means = Vec::new();
    let mut mon = FnMonitor::new(&[], |_, p: &ParticleSet| {
        svgd_means.push(p.mean());
        Ok(vec![])
    });
    let k = SpdMatrix::identity(2);
    let cfg = SvgdConfig { steps, eta, kernel: KernelSpec::linear(k.clone()), record, policy: opts.policy };
    svgd_run(p0.clone(), &tgt, cfg, RngHandle::new(opts.seeds[0]), vec![&mut mon])?;
    drop(mon);
    let (_, svgd_oracle) = euler_trajectory(&init, &tgt, &FieldKind::LinearSvgd(k), eta, steps, every)?;

    let mut pfg_means = Vec::new();
    let mut mon = FnMonitor::new(&[], |_, p: &ParticleSet| {
        pfg_means.push(p.mean());
        Ok(vec![])
    });
    let cfg = PfgConfig { outer_steps: steps, eta, solver: InnerSolver::Exact, record, policy: opts.policy, ..PfgConfig::default() };
    let pre = Preconditioner::fixed_diag(vec![0.01, 1.0])?;
    pfg_run(p0, &tgt, AffineModel::zeros(2), pre, cfg, RngHandle::new(opts.seeds[0]), vec![&mut mon])?;
    drop(mon);
    let (_, maha_oracle) = euler_trajectory(&init, &tgt, &FieldKind::Mahalanobis, eta, steps, every)?;

    let worst = |means: &[DVector<f64>], oracle: &[pfg_core::analytic::TrajectoryRow]| {
        means
            .iter()
            .zip(oracle)
            .skip(1)
            .map(|(m, r)| (m - &r.mean).norm() / r.mean.norm())
            .fold(0.0f64, f64::max)
    };
    let (e_svgd, e_pfg) = (worst(&svgd_means, &svgd_oracle), worst(&pfg_means, &maha_oracle));
    Ok(Outcome::new(
        e_svgd < 0.05 && e_pfg < 0.05,
        format!("max relative mean error: linear SVGD {:.2}%, affine PFG {:.2}%", 100.0 * e_svgd, 100.0 * e_pfg),
    ))
}

// ---------------------------------------------------------------- 7

fn rbf_vanishing(_: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let tgt = ill_conditioned_target();
    let s = GaussianState::standard(2);
    let at_mean = field_rbf_svgd(&s, &tgt, 1.0, &s.mean)?.norm();
    let mut worst = 0.0f64;
    for k in 0..16 {
        let a = k as f64 * std::f64::consts::TAU / 16.0;
        let x = &s.mean + v(&[20.0 * a.cos(), 20.0 * a.sin()]);
        worst = worst.max(field_rbf_svgd(&s, &tgt, 1.0, &x)?.norm() / at_mean);
    }
    Ok(Outcome::new(worst < 1e-8, format!("|g(radius 20)| / |g(mean)| at most {worst:.2e}")))
}

// ---------------------------------------------------------------- 8

fn kl_descent(_: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let tgt = ill_conditioned_target();
    let q = GaussianState::of_target(&tgt);
    let eta = 0.01;
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in [FieldKind::Mahalanobis, FieldKind::L2] {
        let mut s = GaussianState::standard(2);
        let mut kl = gaussian_kl(&s, &q)?;
        let mut steps = 0usize;
        let mut monotone = true;
        while kl >= 1e-10 && steps < 2_000_000 {
            let g = kind.field(&s, &tgt)?;
            s = pfg_core::analytic::affine_pushforward(&s, &g, eta)?;
            let next = gaussian_kl(&s, &q)?;
            if next >= kl {
                monotone = false;
                break;
            }
            kl = next;
            steps += 1;
        }
        let reached = kl < 1e-10;
        ok &= monotone && reached;
        parts.push(format!(
            "{}: {} after {steps} steps (KL {kl:.2e})",
            kind.name(),
            if !monotone { "KL increased" } else if reached { "strictly decreasing" } else { "did not converge" }
        ));
    }
    Ok(Outcome::new(ok, parts.join("; ")))
}

// ---------------------------------------------------------------- 9

fn variance_collapse(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let d = 20;
    let tgt = GaussianTarget::standard(d);
    let record = RecordConfig { every: usize::MAX, snapshot_every: None, wall_clock: false };
    let mut passes = Vec::new();
    let mut rows = Vec::new();
    for &seed in &opts.seeds {
        let mut rng = RngHandle::new(seed);
        let p0 = sample_gaussian(&mut rng, &DVector::zeros(d), &SpdMatrix::identity(d), 50)?;
        let cfg = SvgdConfig { steps: 2000, eta: 0.1, kernel: KernelSpec::rbf_median(), record, policy: opts.policy };
        let (ps, _) = svgd_run(p0.clone(), &tgt, cfg, RngHandle::new(seed), vec![])?;
        let v_svgd = dim_avg_variance(&ps)?;
        let cfg = PfgConfig { outer_steps: 2000, eta: 0.1, solver: InnerSolver::Exact, record, policy: opts.policy, ..PfgConfig::default() };
        let out = pfg_run(p0, &tgt, AffineModel::zeros(d), Preconditioner::identity(d), cfg, RngHandle::new(seed), vec![])?;
        let v_pfg = dim_avg_variance(&out.particles)?;
        passes.push(v_svgd < 0.6 && (0.85..=1.15).contains(&v_pfg));
        rows.push(format!("seed {seed}: SVGD-RBF {v_svgd:.3}, PFG-affine {v_pfg:.3}"));
    }
    Ok(Outcome::new(majority(&passes), rows.join("; ")))
}

// ---------------------------------------------------------------- 10

/// Settings of the mixture comparison.
#[derive(Clone, Debug)]
pub struct MixtureSettings {
    pub particles: usize,
    pub iterations: usize,
    pub reference: usize,
    pub svgd_eta: f64,
    pub pfg_eta: f64,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub hidden: usize,
    pub alpha: f64,
}

impl Default for MixtureSettings {
    fn default() -> Self {
        Self {
            particles: 500,
            iterations: 1000,
            reference: 2000,
            svgd_eta: 0.01,
            pfg_eta: 0.003,
            inner_steps: 10,
            inner_lr: 1e-3,
            hidden: 32,
            alpha: 0.5,
        }
    }
}

/// Energy distances (SVGD, PFG) after equal iteration budgets.
pub fn mixture_energy(seed: u64, s: &MixtureSettings, policy: ExecPolicy) -> pfg_core::Result<(f64, f64)> {
    let mut rng = RngHandle::new(seed);
    let tgt = make_paper_mixture(&mut rng, 10, 2);
    let reference = tgt.sample(&mut rng, s.reference);
    let p0 = sample_gaussian(&mut rng, &DVector::zeros(2), &SpdMatrix::identity(2), s.particles)?;
    let record = RecordConfig { every: usize::MAX, snapshot_every: None, wall_clock: false };
    let cfg = SvgdConfig { steps: s.iterations, eta: s.svgd_eta, kernel: KernelSpec::rbf_median(), record, policy };
    let (ps, _) = svgd_run(p0.clone(), &tgt, cfg, RngHandle::new(seed ^ 0x5eed), vec![])?;
    let model = MlpParams::init(&mut rng, 2, s.hidden, Activation::Tanh, 0.577);
    let pre = Preconditioner::fisher_ema(2, 0.9, 1e-8)?.with_alpha(s.alpha)?;
    let cfg = PfgConfig {
        outer_steps: s.iterations,
        inner_steps: s.inner_steps,
        eta: s.pfg_eta,
        inner_lr: s.inner_lr,
        optimizer: OptimizerKind::sgd_momentum(),
        record,
        policy,
        ..PfgConfig::default()
    };
    let out = pfg_run(p0, &tgt, model, pre, cfg, RngHandle::new(seed ^ 0x5eed), vec![])?;
    Ok((energy_distance(&ps, &reference, policy)?, energy_distance(&out.particles, &reference, policy)?))
}

fn mixture_quality(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let s = MixtureSettings::default();
    let mut passes = Vec::new();
    let mut rows = Vec::new();
    for &seed in &opts.seeds {
        let (e_svgd, e_pfg) = mixture_energy(seed, &s, opts.policy)?;
        passes.push(e_pfg < e_svgd && e_pfg < 0.05);
        rows.push(format!("seed {seed}: SVGD {e_svgd:.4}, PFG {e_pfg:.4}"));
    }
    Ok(Outcome::new(majority(&passes), rows.join("; ")))
}

// ---------------------------------------------------------------- 11

pub fn sonar_target() -> pfg_core::Result<LogisticRegressionTarget> {
    let mut data = sonar_dataset()?;
    data.standardize();
    data.add_intercept();
    LogisticRegressionTarget::new(data, 1.0, 0)
}

fn timing_scaling(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let tgt = sonar_target()?;
    let d = tgt.dim();
    let record = RecordConfig { every: usize::MAX, snapshot_every: None, wall_clock: false };
    let mut rng = RngHandle::new(opts.seeds[0]);
    let pfg = TimingSampler::Pfg {
        model: MlpParams::init(&mut rng, d, 32, Activation::Sigmoid, 1.0),
        precond: Preconditioner::identity(d),
        cfg: PfgConfig { inner_steps: 1, first_inner_steps: Some(1), eta: 0.01, record, policy: opts.policy, ..PfgConfig::default() },
    };
    let svgd = TimingSampler::Svgd { cfg: SvgdConfig { eta: 0.01, record, policy: opts.policy, ..SvgdConfig::default() } };
    let ns = [100, 2000];
    let rp = timing_probe(&pfg, &ns, &tgt, 100, &mut rng)?;
    let rs = timing_probe(&svgd, &ns, &tgt, 100, &mut rng)?;
    let (r_pfg, r_svgd) = (timing_ratio(&rp).unwrap_or(f64::NAN), timing_ratio(&rs).unwrap_or(f64::NAN));
    Ok(Outcome::new(
        r_svgd > 2.0 * r_pfg,
        format!(
            "t(2000)/t(100): SVGD {r_svgd:.1} ({:.3} -> {:.3} ms), PFG {r_pfg:.1} ({:.3} -> {:.3} ms)",
            rs[0].median_ms, rs[1].median_ms, rp[0].median_ms, rp[1].median_ms
        ),
    ))
}

// ---------------------------------------------------------------- 12

/// Settings of the logistic-regression comparison.
#[derive(Clone, Debug)]
pub struct LogisticSettings {
    pub particles: usize,
    pub iterations: usize,
    pub checkpoint_every: usize,
    /// Checkpoints at or before this iteration are burn-in.
    pub burn_in: usize,
    pub eta: f64,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub hidden: usize,
    pub alpha: f64,
    pub reference_chains: usize,
    pub reference_steps: usize,
    pub reference_eta: f64,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        Self {
            particles: 200,
            iterations: 1000,
            checkpoint_every: 100,
            burn_in: 500,
            eta: 0.01,
            inner_steps: 5,
            inner_lr: 1e-3,
            hidden: 32,
            alpha: 0.5,
            reference_chains: 500,
            reference_steps: 5000,
            reference_eta: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LogisticRun {
    pub elbo_checkpoints: Vec<(usize, f64)>,
    pub mmd_pfg: f64,
    pub mmd_svgd: f64,
}

pub fn logistic_reference(s: &LogisticSettings, policy: ExecPolicy) -> pfg_core::Result<ParticleSet> {
    let tgt = sonar_target()?;
    let mut rng = RngHandle::new(0x01a7);
    langevin_reference(&tgt, s.reference_chains, s.reference_steps, s.reference_eta, &mut rng, policy)
}

pub fn logistic_run(seed: u64, s: &LogisticSettings, reference: &ParticleSet, policy: ExecPolicy) -> pfg_core::Result<LogisticRun> {
    let tgt = sonar_target()?;
    let d = tgt.dim();
    let mut rng = RngHandle::new(seed);
    let p0 = sample_gaussian(&mut rng, &DVector::zeros(d), &SpdMatrix::identity(d), s.particles)?;
    let record = RecordConfig { every: s.checkpoint_every, snapshot_every: None, wall_clock: false };
    let mut elbo = Vec::new();
    let mut mon = FnMonitor::new(&["elbo"], |step, p: &ParticleSet| {
        let e = kde_elbo(p, &tgt, KdeBandwidth::Scott, policy)?;
        elbo.push((step, e));
        Ok(vec![e])
    });
    let model = MlpParams::init(&mut rng, d, s.hidden, Activation::Sigmoid, 1.0);
    let pre = Preconditioner::fisher_ema(d, 0.9, 1e-8)?.with_alpha(s.alpha)?;
    let cfg = PfgConfig {
        outer_steps: s.iterations,
        inner_steps: s.inner_steps,
        eta: s.eta,
        inner_lr: s.inner_lr,
        record,
        policy,
        ..PfgConfig::default()
    };
    let out = pfg_run(p0.clone(), &tgt, model, pre, cfg, RngHandle::new(seed ^ 0x5eed), vec![&mut mon])?;
    drop(mon);
    let cfg = SvgdConfig { steps: s.iterations, eta: s.eta, kernel: KernelSpec::rbf_median(), record, policy };
    let (ps, _) = svgd_run(p0, &tgt, cfg, RngHandle::new(seed ^ 0x5eed), vec![])?;
    let mmd = |p: &ParticleSet| mmd_rbf(p, reference, MmdBandwidth::PooledMedian, MmdVariant::Unbiased, policy);
    Ok(LogisticRun { elbo_checkpoints: elbo, mmd_pfg: mmd(&out.particles)?, mmd_svgd: mmd(&ps)? })
}

fn logistic_quality(opts: &AcceptanceOptions) -> pfg_core::Result<Outcome> {
    let s = LogisticSettings::default();
    let reference = logistic_reference(&s, opts.policy)?;
    let mut passes = Vec::new();
    let mut rows = Vec::new();
    for &seed in &opts.seeds {
        let r = logistic_run(seed, &s, &reference, opts.policy)?;
        let after: Vec<f64> = r.elbo_checkpoints.iter().filter(|(k, _)| *k > s.burn_in).map(|(_, e)| *e).collect();
        let drops = after.windows(2).filter(|w| w[1] < w[0]).count();
        let ok = drops == 0 && r.mmd_pfg <= r.mmd_svgd;
        passes.push(ok);
        let elbo: Vec<String> = after.iter().map(|e| format!("{e:.2}")).collect();
        rows.push(format!(
            "seed {seed}: ELBO after burn-in [{}] ({drops} drops), MMD PFG {:.4} vs SVGD {:.4}",
            elbo.join(", "),
            r.mmd_pfg,
            r.mmd_svgd
        ));
    }
    Ok(Outcome::new(majority(&passes), rows.join("; ")))
}
