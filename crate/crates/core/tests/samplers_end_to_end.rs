use nalgebra::DVector;
use pfg_core::field::{Activation, AffineModel, MlpParams};
use pfg_core::samplers::{pfg_run, svgd_run, InnerSolver, PfgConfig, Preconditioner, SvgdConfig};
use pfg_core::targets::{Dataset, GaussianTarget, LogisticRegressionTarget, Target};
use pfg_core::{sample_gaussian, ExecPolicy, RngHandle, SpdMatrix};

fn target() -> GaussianTarget {
    GaussianTarget::new(DVector::from_vec(vec![2.0, -1.0]), SpdMatrix::from_diagonal(&[4.0, 0.5]).unwrap()).unwrap()
}

#[test]
fn affine_pfg_recovers_gaussian_moments() {
    let tgt = target();
    let mut rng = RngHandle::new(5);
    let p0 = sample_gaussian(&mut rng, &DVector::zeros(2), &SpdMatrix::identity(2), 400).unwrap();
    let cfg = PfgConfig { outer_steps: 400, eta: 0.05, solver: InnerSolver::Exact, ..PfgConfig::default() };
    let out = pfg_run(p0, &tgt, AffineModel::zeros(2), Preconditioner::identity(2), cfg, RngHandle::new(6), vec![]).unwrap();
    let m = out.particles.mean();
    let c = out.particles.covariance(false);
    assert!((m[0] - 2.0).abs() < 0.05 && (m[1] + 1.0).abs() < 0.05, "{m}");
    assert!((c[(0, 0)] - 4.0).abs() < 0.1 && (c[(1, 1)] - 0.5).abs() < 0.02, "{c}");
}

#[test]
fn mlp_pfg_moves_mean_towards_target() {
    let tgt = target();
    let mut rng = RngHandle::new(8);
    let p0 = sample_gaussian(&mut rng, &DVector::zeros(2), &SpdMatrix::identity(2), 100).unwrap();
    let before = (p0.mean() - tgt.mean()).norm();
    let model = MlpParams::init(&mut rng, 2, 32, Activation::Sigmoid, 1.0);
    let pre = Preconditioner::fisher_ema(2, 0.9, 1e-8).unwrap().with_alpha(0.5).unwrap();
    let cfg = PfgConfig { outer_steps: 300, inner_steps: 5, eta: 0.05, inner_lr: 1e-3, ..PfgConfig::default() };
    let out = pfg_run(p0, &tgt, model, pre, cfg, RngHandle::new(9), vec![]).unwrap();
    let after = (out.particles.mean() - tgt.mean()).norm();
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn svgd_fits_logistic_posterior_better_than_prior() {
    let mut rng = RngHandle::new(1);
    let n = 60;
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let x = [rng.normal(), rng.normal()];
        feats.extend_from_slice(&x);
        labels.push(if 1.5 * x[0] - x[1] + 0.3 * rng.normal() > 0.0 { 1.0 } else { -1.0 });
    }
    let tgt = LogisticRegressionTarget::new(Dataset::new(feats, labels, 2).unwrap(), 1.0, 0).unwrap();
    let p0 = sample_gaussian(&mut rng, &DVector::zeros(2), &SpdMatrix::identity(2), 50).unwrap();
    let acc = |p: &pfg_core::ParticleSet| p.rows().map(|r| tgt.accuracy(r)).sum::<f64>() / p.n() as f64;
    let lp = |p: &pfg_core::ParticleSet| p.rows().map(|r| tgt.log_density(r).unwrap()).sum::<f64>() / p.n() as f64;
    let cfg = SvgdConfig { steps: 300, eta: 0.05, policy: ExecPolicy::default(), ..SvgdConfig::default() };
    let (p, _) = svgd_run(p0.clone(), &tgt, cfg, RngHandle::new(2), vec![]).unwrap();
    assert!(acc(&p) > 0.85 && acc(&p) > acc(&p0));
    assert!(lp(&p) > lp(&p0));
}
