use nalgebra::DVector;

use super::*;
use crate::analytic::{linear_class_minimizer, AffineField, GaussianState};
use crate::linalg::{sample_gaussian, SpdMatrix};
use crate::par::ExecPolicy;
use crate::targets::{GaussianTarget, MixtureTarget};

fn random_vec(rng: &mut RngHandle, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

fn random_mlp(rng: &mut RngHandle, d: usize, h: usize, act: Activation) -> MlpParams {
    let mut p = MlpParams::init(rng, d, h, act, 1.5);
    // non-zero biases so every code path is exercised
    for v in p.params_mut().iter_mut() {
        if *v == 0.0 {
            *v = 0.3 * rng.normal();
        }
    }
    p
}

fn fd_jacobian_trace<M: FieldModel>(m: &M, x: &[f64]) -> f64 {
    let eps = 1e-5;
    (0..x.len())
        .map(|j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += eps;
            xm[j] -= eps;
            (m.forward(&xp)[j] - m.forward(&xm)[j]) / (2.0 * eps)
        })
        .sum()
}

#[test]
fn exact_divergence_matches_finite_difference_trace() {
    let mut rng = RngHandle::new(100);
    for act in [Activation::Sigmoid, Activation::Tanh] {
        for d in [1, 2, 5, 10] {
            for h in [1, 8, 64] {
                let m = random_mlp(&mut rng, d, h, act);
                let x = random_vec(&mut rng, d, 1.0);
                let exact = m.divergence(&x);
                let fd = fd_jacobian_trace(&m, &x);
                let scale = exact.abs().max(1.0);
                assert!((exact - fd).abs() <= 1e-6 * scale, "{act:?} d={d} h={h}: {exact} vs {fd}");
            }
        }
    }
}

#[test]
fn jvp_matches_finite_differences() {
    let mut rng = RngHandle::new(7);
    let m = random_mlp(&mut rng, 4, 9, Activation::Tanh);
    let x = random_vec(&mut rng, 4, 1.0);
    let v = random_vec(&mut rng, 4, 1.0);
    let mut out = vec![0.0; 4];
    let mut f = vec![0.0; 4];
    let c = m.forward_cached(&x, &mut f);
    m.jvp_cached(&x, &c, &v, &mut out);
    let eps = 1e-6;
    let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
    let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
    let (fp, fm) = (m.forward(&xp), m.forward(&xm));
    for i in 0..4 {
        assert!(((fp[i] - fm[i]) / (2.0 * eps) - out[i]).abs() < 1e-7);
    }
}

#[test]
fn hutchinson_exact_for_diagonal_jacobian_and_zero_for_zero_params() {
    let field = AffineField {
        a: nalgebra::DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, -0.5, 2.0])),
        b: DVector::from_vec(vec![0.1, 0.2, 0.3]),
    };
    let m = AffineModel::from_field(&field);
    let mut rng = RngHandle::new(1);
    for _ in 0..10 {
        let est = hutchinson_divergence(&m, &[0.3, 0.1, -1.0], &mut rng, 1).unwrap();
        assert_eq!(est, 3.0);
    }
    let z = MlpParams::zeros(3, 4, Activation::Tanh);
    assert_eq!(hutchinson_divergence(&z, &[1.0, 2.0, 3.0], &mut rng, 5).unwrap(), 0.0);
}

#[test]
fn hutchinson_converges_to_exact_divergence() {
    let mut rng = RngHandle::new(2024);
    // tied weights W2 = W1ᵀ give a positive semidefinite Jacobian, so the
    // divergence is bounded away from zero relative to the probe variance
    let mut m = random_mlp(&mut rng, 3, 16, Activation::Sigmoid);
    let (d, h) = (3, 16);
    let p = m.params_mut();
    for i in 0..d {
        for k in 0..h {
            p[h * d + h + i * h + k] = p[k * d + i];
        }
    }
    let x = random_vec(&mut rng, 3, 1.0);
    let exact = m.divergence(&x);
    let est = hutchinson_divergence(&m, &x, &mut rng, 10_000).unwrap();
    assert!((est - exact).abs() < 0.02 * exact.abs(), "{est} vs {exact}");
}

#[test]
fn forward_and_divergence_with_base_shift() {
    let tgt = GaussianTarget::new(
        DVector::from_vec(vec![1.0, -2.0]),
        SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap(),
    )
    .unwrap();
    let z = MlpParams::zeros(2, 3, Activation::Tanh);
    assert_eq!(field_value(&z, &[0.3, 0.4], None).unwrap(), vec![0.0, 0.0]);
    let shifted = z.clone().with_base_shift(1.0);
    let x = [0.3, 0.4];
    let mut s = vec![0.0; 2];
    tgt.grad_log_density(&x, &mut s).unwrap();
    assert_eq!(field_value(&shifted, &x, Some(&tgt)).unwrap(), s);
    assert!(matches!(field_value(&shifted, &x, None), Err(Error::MissingTarget)));
    let div = field_divergence(&shifted, &x, Some(&tgt)).unwrap();
    assert!((div - (-(0.5 + 2.0))).abs() < 1e-15);

    let mix = MixtureTarget::new(
        vec![0.5, 0.5],
        vec![DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![1.0, 0.0])],
        vec![SpdMatrix::identity(2), SpdMatrix::identity(2)],
    )
    .unwrap();
    assert!(field_divergence(&shifted, &x, Some(&mix)).unwrap().is_finite());
}

#[test]
fn base_shift_divergence_needs_laplacian() {
    use crate::targets::{Dataset, LogisticRegressionTarget};
    let ds = Dataset::new(vec![1.0, 0.0, 0.0, 1.0], vec![1.0, -1.0], 2).unwrap();
    let t = LogisticRegressionTarget::new(ds, 1.0, 0).unwrap();
    let m = MlpParams::zeros(2, 2, Activation::Tanh).with_base_shift(0.5);
    assert!(matches!(
        field_divergence(&m, &[0.0, 0.0], Some(&t)),
        Err(Error::UnsupportedBaseShiftTarget)
    ));
}

fn gaussian_cloud(rng: &mut RngHandle, n: usize, d: usize) -> (ParticleSet, GaussianTarget) {
    let mut mu = DVector::zeros(d);
    rng.fill_normal(mu.as_mut_slice());
    let mut b = nalgebra::DMatrix::zeros(d, d);
    rng.fill_normal(b.as_mut_slice());
    let cov = SpdMatrix::new(&b * b.transpose() / d as f64 + nalgebra::DMatrix::identity(d, d) * 0.5).unwrap();
    let tgt = GaussianTarget::new(mu, cov).unwrap();
    let xs = sample_gaussian(rng, &DVector::zeros(d), &SpdMatrix::identity(d), n).unwrap();
    (xs, tgt)
}

fn fd_loss_check<M: FieldModel>(model: &M, xs: &ParticleSet, tgt: &dyn Target, h: &[f64], mode: DivergenceMode) {
    let rep = pfg_loss(model, xs, tgt, h, mode).unwrap();
    let eps = 1e-6;
    for k in 0..model.n_params() {
        let mut mp = model.clone();
        mp.params_mut()[k] += eps;
        let mut mm = model.clone();
        mm.params_mut()[k] -= eps;
        let lp = pfg_loss(&mp, xs, tgt, h, mode).unwrap().loss;
        let lm = pfg_loss(&mm, xs, tgt, h, mode).unwrap().loss;
        let fd = (lp - lm) / (2.0 * eps);
        let g = rep.grad[k];
        assert!(
            (fd - g).abs() <= 1e-5 * g.abs().max(1.0),
            "param {k}: analytic {g} vs fd {fd} ({mode:?})"
        );
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = RngHandle::new(55);
    for act in [Activation::Sigmoid, Activation::Tanh] {
        let (xs, tgt) = gaussian_cloud(&mut rng, 32, 4);
        let m = random_mlp(&mut rng, 4, 8, act);
        let h: Vec<f64> = (0..4).map(|i| 0.5 + i as f64 * 0.3).collect();
        fd_loss_check(&m, &xs, &tgt, &h, DivergenceMode::Exact);
        fd_loss_check(&m, &xs, &tgt, &h, DivergenceMode::Hutchinson { probes: 3, seed: 9 });
        fd_loss_check(&m.clone().with_base_shift(0.2), &xs, &tgt, &h, DivergenceMode::Exact);
    }
    let (xs, tgt) = gaussian_cloud(&mut rng, 16, 3);
    let a = AffineModel::from_field(&AffineField {
        a: nalgebra::DMatrix::from_fn(3, 3, |i, j| 0.1 * (i as f64 - j as f64) + if i == j { 0.5 } else { 0.0 }),
        b: DVector::from_vec(vec![0.2, -0.1, 0.3]),
    });
    fd_loss_check(&a, &xs, &tgt, &[1.0, 2.0, 0.5], DivergenceMode::Exact);
}

#[test]
fn zero_field_has_zero_loss_and_terms_sum() {
    let mut rng = RngHandle::new(3);
    let (xs, tgt) = gaussian_cloud(&mut rng, 10, 2);
    let z = MlpParams::zeros(2, 4, Activation::Sigmoid);
    let rep = pfg_loss(&z, &xs, &tgt, &[1.0, 1.0], DivergenceMode::Exact).unwrap();
    assert_eq!(rep.loss, 0.0);
    let m = random_mlp(&mut rng, 2, 4, Activation::Sigmoid);
    let rep = pfg_loss(&m, &xs, &tgt, &[1.0, 3.0], DivergenceMode::Exact).unwrap();
    assert!((rep.regularizer + rep.drift + rep.divergence - rep.loss).abs() < 1e-12);
    assert_eq!(rep.grad.len(), m.n_params());
    assert!(matches!(
        pfg_loss(&m, &xs, &tgt, &[1.0, 0.0], DivergenceMode::Exact),
        Err(Error::NonPositivePreconditioner)
    ));
}

#[test]
fn loss_is_policy_independent() {
    let mut rng = RngHandle::new(8);
    let (xs, tgt) = gaussian_cloud(&mut rng, 200, 3);
    let m = random_mlp(&mut rng, 3, 8, Activation::Tanh);
    let scores = loss::particle_scores(&tgt, &xs, ExecPolicy::Sequential).unwrap();
    let mode = DivergenceMode::Hutchinson { probes: 2, seed: 4 };
    let a = pfg_loss_with_scores(&m, &xs, &scores, &[1.0; 3], mode, ExecPolicy::Sequential).unwrap();
    let b = pfg_loss_with_scores(&m, &xs, &scores, &[1.0; 3], mode, ExecPolicy::Parallel).unwrap();
    assert_eq!(a, b);
}

/// ½E_{N(m,C)}|e(x)|²_H for the affine field e.
fn gaussian_h_energy(e: &AffineField, s: &GaussianState, h: &[f64]) -> f64 {
    let hm = nalgebra::DMatrix::from_diagonal(&DVector::from_column_slice(h));
    let mean = e.eval(&s.mean);
    0.5 * ((&hm * &e.a * s.cov.matrix() * e.a.transpose()).trace() + mean.dot(&(&hm * &mean)))
}

#[test]
fn loss_differences_match_projection_objective() {
    let mut rng = RngHandle::new(77);
    let tgt = GaussianTarget::new(
        DVector::from_vec(vec![1.0, -1.0]),
        SpdMatrix::from_diagonal(&[4.0, 0.5]).unwrap(),
    )
    .unwrap();
    let xs = sample_gaussian(&mut rng, &DVector::from_vec(vec![0.2, 0.1]), &SpdMatrix::from_diagonal(&[1.5, 0.7]).unwrap(), 100_000).unwrap();
    let h = [1.0, 1.0];
    let f1 = AffineField {
        a: nalgebra::DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.5]),
        b: DVector::from_vec(vec![0.4, -0.3]),
    };
    let f2 = AffineField {
        a: nalgebra::DMatrix::from_row_slice(2, 2, &[-0.1, 0.0, 0.2, 0.8]),
        b: DVector::from_vec(vec![-0.2, 0.5]),
    };
    let l1 = pfg_loss(&AffineModel::from_field(&f1), &xs, &tgt, &h, DivergenceMode::Exact).unwrap().loss;
    let l2 = pfg_loss(&AffineModel::from_field(&f2), &xs, &tgt, &h, DivergenceMode::Exact).unwrap().loss;
    let hm = SpdMatrix::from_diagonal(&h).unwrap();
    let diff_of = |s: &GaussianState| {
        let w = linear_class_minimizer(s, &tgt, &hm).unwrap();
        let e1 = AffineField { a: &f1.a - &w.a, b: &f1.b - &w.b };
        let e2 = AffineField { a: &f2.a - &w.a, b: &f2.b - &w.b };
        gaussian_h_energy(&e1, s, &h) - gaussian_h_energy(&e2, s, &h)
    };
    // With the cloud's own moments the identity is exact.
    let emp = GaussianState::new(xs.mean(), SpdMatrix::new(xs.covariance(false)).unwrap()).unwrap();
    assert!(((l1 - l2) - diff_of(&emp)).abs() < 1e-10 * (l1 - l2).abs().max(1.0));
    // Against the sampling distribution's moments it holds up to Monte-Carlo error.
    let pop = GaussianState::new(DVector::from_vec(vec![0.2, 0.1]), SpdMatrix::from_diagonal(&[1.5, 0.7]).unwrap()).unwrap();
    let closed = diff_of(&pop);
    assert!(((l1 - l2) - closed).abs() < 1e-2 * closed.abs(), "{} vs {closed}", l1 - l2);
}

#[test]
fn affine_exact_fit_recovers_minimizer() {
    let mut rng = RngHandle::new(12);
    let tgt = GaussianTarget::new(
        DVector::from_vec(vec![20.0, 20.0]),
        SpdMatrix::from_diagonal(&[100.0, 1.0]).unwrap(),
    )
    .unwrap();
    let state = GaussianState::new(DVector::from_vec(vec![1.0, 2.0]), SpdMatrix::from_diagonal(&[3.0, 0.5]).unwrap()).unwrap();
    let xs = sample_gaussian(&mut rng, &state.mean, &state.cov, 100_000).unwrap();
    let scores = loss::particle_scores(&tgt, &xs, ExecPolicy::default()).unwrap();
    let h = [1.0, 1.0];
    let theta = AffineModel::zeros(2).exact_fit(&xs, &scores, &h).unwrap().unwrap();
    let mut m = AffineModel::zeros(2);
    m.params_mut().copy_from_slice(&theta);
    let w = linear_class_minimizer(&state, &tgt, &SpdMatrix::from_diagonal(&h).unwrap()).unwrap();
    let probe = sample_gaussian(&mut rng, &state.mean, &state.cov, 1000).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for x in probe.rows() {
        let got = DVector::from_vec(m.forward(x));
        let want = w.eval(&DVector::from_column_slice(x));
        err += (&got - &want).norm_squared();
        norm += want.norm_squared();
    }
    assert!((err / norm).sqrt() < 0.02, "relative field error {}", (err / norm).sqrt());
    // the fitted parameters are a stationary point of the empirical loss
    let rep = pfg_loss_with_scores(&m, &xs, &scores, &h, DivergenceMode::Exact, ExecPolicy::default()).unwrap();
    assert!(rep.grad.iter().all(|g| g.abs() < 1e-8), "{:?}", rep.grad);
}

#[test]
fn zero_learning_rate_leaves_params() {
    let mut rng = RngHandle::new(4);
    let (xs, tgt) = gaussian_cloud(&mut rng, 20, 2);
    let scores = loss::particle_scores(&tgt, &xs, ExecPolicy::default()).unwrap();
    let mut m = random_mlp(&mut rng, 2, 5, Activation::Tanh);
    let before = m.clone();
    let mut opt = Optimizer::new(OptimizerKind::sgd_momentum(), 0.0, m.n_params());
    inner_train(&mut m, &xs, &scores, &[1.0, 1.0], 10, &mut opt, DivergenceMode::Exact, ExecPolicy::default()).unwrap();
    assert_eq!(m, before);
}

#[test]
fn small_steps_decrease_loss() {
    let mut rng = RngHandle::new(5);
    let (xs, tgt) = gaussian_cloud(&mut rng, 64, 3);
    let scores = loss::particle_scores(&tgt, &xs, ExecPolicy::default()).unwrap();
    let mut m = random_mlp(&mut rng, 3, 16, Activation::Tanh);
    let mut opt = Optimizer::new(OptimizerKind::Sgd { momentum: 0.0 }, 1e-4, m.n_params());
    let rep = inner_train(&mut m, &xs, &scores, &[1.0; 3], 200, &mut opt, DivergenceMode::Exact, ExecPolicy::default()).unwrap();
    for w in rep.losses.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn divergent_training_is_reported() {
    let mut rng = RngHandle::new(6);
    let (xs, tgt) = gaussian_cloud(&mut rng, 16, 2);
    let scores = loss::particle_scores(&tgt, &xs, ExecPolicy::default()).unwrap();
    let mut m = AffineModel::zeros(2);
    let mut opt = Optimizer::new(OptimizerKind::Sgd { momentum: 0.9 }, 1e3, m.n_params());
    let err = inner_train(&mut m, &xs, &scores, &[1.0; 2], 500, &mut opt, DivergenceMode::Exact, ExecPolicy::default());
    assert!(matches!(err, Err(Error::DivergentLoss { .. })));
}

#[test]
fn sgd_training_approaches_affine_minimizer() {
    let mut rng = RngHandle::new(15);
    let tgt = GaussianTarget::new(
        DVector::from_vec(vec![0.5, -0.5]),
        SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap(),
    )
    .unwrap();
    let state = GaussianState::standard(2);
    let xs = sample_gaussian(&mut rng, &state.mean, &state.cov, 4000).unwrap();
    let scores = loss::particle_scores(&tgt, &xs, ExecPolicy::default()).unwrap();
    let mut m = AffineModel::zeros(2);
    let mut opt = Optimizer::new(OptimizerKind::sgd_momentum(), 0.05, m.n_params());
    inner_train(&mut m, &xs, &scores, &[1.0, 1.0], 500, &mut opt, DivergenceMode::Exact, ExecPolicy::default()).unwrap();
    let w = linear_class_minimizer(&state, &tgt, &SpdMatrix::identity(2)).unwrap();
    for _ in 0..10 {
        let x = random_vec(&mut rng, 2, 1.0);
        let got = DVector::from_vec(m.forward(&x));
        let want = w.eval(&DVector::from_column_slice(&x));
        assert!((&got - &want).norm() < 0.1 * want.norm().max(0.1));
    }
    // and the tanh network near the origin behaves like the affine class
    let mut net = MlpParams::init(&mut rng, 2, 16, Activation::Tanh, 0.1);
    let mut opt = Optimizer::new(OptimizerKind::adam(), 0.01, net.n_params());
    inner_train(&mut net, &xs, &scores, &[1.0, 1.0], 500, &mut opt, DivergenceMode::Exact, ExecPolicy::default()).unwrap();
    let mut err = 0.0;
    let mut norm = 0.0;
    for _ in 0..50 {
        let x = random_vec(&mut rng, 2, 0.5);
        let got = DVector::from_vec(net.forward(&x));
        let want = w.eval(&DVector::from_column_slice(&x));
        err += (&got - &want).norm_squared();
        norm += want.norm_squared();
    }
    assert!((err / norm).sqrt() < 0.1, "relative field error {}", (err / norm).sqrt());
}
