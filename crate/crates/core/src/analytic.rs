//! Closed-form Gaussian dynamics.
//!
//! When p_t = N(μ_t, Σ_t) and p* = N(μ*, Σ*), every regularized functional
//! gradient over the linear function class is affine in x, and the
//! pushforward of a Gaussian by an affine Euler step stays Gaussian. This
//! module evaluates those fields, advances the moments exactly, and provides
//! the KL quantities used to check convergence rates.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;
use crate::targets::GaussianTarget;

/// Moments of a Gaussian particle distribution at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
    pub t: f64,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        check_dim(mean.len(), cov.dim())?;
        Ok(Self { mean, cov, t: 0.0 })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: SpdMatrix::identity(d),
            t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The target viewed as a state (for KL computations).
    pub fn of_target(tgt: &GaussianTarget) -> Self {
        Self {
            mean: tgt.mean().clone(),
            cov: tgt.cov().clone(),
            t: 0.0,
        }
    }
}

/// g(x) = A·x + b.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineField {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineField {
    pub fn zeros(d: usize) -> Self {
        Self {
            a: DMatrix::zeros(d, d),
            b: DVector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }

    /// Frobenius norm of (A - Aᵀ)/2, the rotational part of the field.
    pub fn antisymmetric_norm(&self) -> f64 {
        ((&self.a - self.a.transpose()) * 0.5).norm()
    }

    /// max(|A|, |b|) entrywise.
    pub fn max_abs(&self) -> f64 {
        self.a.amax().max(self.b.amax())
    }

    /// M·g, i.e. the field x ↦ M(Ax + b).
    pub fn left_mul(&self, m: &DMatrix<f64>) -> AffineField {
        AffineField {
            a: m * &self.a,
            b: m * &self.b,
        }
    }
}

fn check_pair(s: &GaussianState, tgt: &GaussianTarget) -> Result<usize> {
    let d = s.dim();
    check_dim(d, tgt.mean().len())?;
    Ok(d)
}

/// SVGD population field for the kernel k(x, y) = xᵀKy + 1.
pub fn field_linear_svgd(s: &GaussianState, tgt: &GaussianTarget, k: &SpdMatrix) -> Result<AffineField> {
    let d = check_pair(s, tgt)?;
    check_dim(d, k.dim())?;
    let p = tgt.precision().matrix();
    let gap = &s.mean - tgt.mean();
    let second = s.cov.matrix() + &gap * s.mean.transpose();
    let a = -(p * second * k.matrix()) + k.matrix();
    let b = -(p * gap);
    Ok(AffineField { a, b })
}

/// SVGD population field for the Gaussian kernel
/// k(x, y) = σ^{-d} exp(-|x - y|² / 2σ²), evaluated at `x`.
///
/// With this normalization the kernel integral has the closed form
/// C_x·((Σ_t⁻¹ - Σ*⁻¹)μ_x + Σ*⁻¹(μ* - μ_t)) where
/// μ_x = (I + σ²Σ_t⁻¹)⁻¹(x - μ_t) and
/// C_x = |σ²I + Σ_t|^{-1/2} exp(-(x-μ_t)ᵀ(σ²I + Σ_t)⁻¹(x-μ_t)/2).
pub fn field_rbf_svgd(
    s: &GaussianState,
    tgt: &GaussianTarget,
    bandwidth: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = check_pair(s, tgt)?;
    check_dim(d, x.len())?;
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::NonPositiveBandwidth(bandwidth));
    }
    let s2 = bandwidth * bandwidth;
    let cov = s.cov.matrix();
    let widened = SpdMatrix::from_symmetrized(cov + DMatrix::identity(d, d) * s2)?;
    let r = x - &s.mean;
    let wr = widened.solve(&r);
    let log_c = -0.5 * widened.logdet() - 0.5 * r.dot(&wr);
    // (I + σ²Σ⁻¹)⁻¹ r = Σ (Σ + σ²I)⁻¹ r
    let mu_x = cov * &wr;
    let prec_t = s.cov.inverse();
    let p_star = tgt.precision().matrix();
    let inner = (prec_t.matrix() - p_star) * mu_x + p_star * (tgt.mean() - &s.mean);
    Ok(inner * log_c.exp())
}

/// Linear class with L2 regularization: ∇ln(p*/p_t) = Σ_t⁻¹(x-μ_t) - Σ*⁻¹(x-μ*).
pub fn field_l2(s: &GaussianState, tgt: &GaussianTarget) -> Result<AffineField> {
    linear_class_minimizer(s, tgt, &SpdMatrix::identity(s.dim()))
}

/// Linear class with Mahalanobis regularization ½E|f|²_{Σ*⁻¹}.
pub fn field_mahalanobis(s: &GaussianState, tgt: &GaussianTarget) -> Result<AffineField> {
    check_pair(s, tgt)?;
    let sig = tgt.cov().matrix();
    let m = sig * s.cov.inverse().matrix();
    let d = s.dim();
    let a = &m - DMatrix::identity(d, d);
    let b = tgt.mean() - &m * &s.mean;
    Ok(AffineField { a, b })
}

/// Displacement field of the optimal transport map from N(μ_t, Σ_t) to the target.
pub fn field_optimal_transport(s: &GaussianState, tgt: &GaussianTarget) -> Result<AffineField> {
    let d = check_pair(s, tgt)?;
    let root = s.cov.sqrt();
    let inv_root = s.cov.inv_sqrt();
    let middle = SpdMatrix::from_symmetrized(root.matrix() * tgt.cov().matrix() * root.matrix())?.sqrt();
    let m = inv_root.matrix() * middle.matrix() * inv_root.matrix();
    let a = &m - DMatrix::identity(d, d);
    let b = tgt.mean() - &m * &s.mean;
    Ok(AffineField { a, b })
}

/// Minimizer over affine maps of E_{p_t}[½|f|²_H - f·∇ln p* - ∇·f]:
/// H⁻¹∇ln(p*/p_t).
pub fn linear_class_minimizer(s: &GaussianState, tgt: &GaussianTarget, h: &SpdMatrix) -> Result<AffineField> {
    let d = check_pair(s, tgt)?;
    check_dim(d, h.dim())?;
    let hinv = h.inverse();
    let pt = s.cov.inverse();
    let ps = tgt.precision().matrix();
    let a = hinv.matrix() * (pt.matrix() - ps);
    let b = hinv.matrix() * (ps * tgt.mean() - pt.matrix() * &s.mean);
    Ok(AffineField { a, b })
}

/// Exact moments after x ← x + η·g(x) for affine g.
pub fn affine_pushforward(s: &GaussianState, g: &AffineField, eta: f64) -> Result<GaussianState> {
    let d = s.dim();
    check_dim(d, g.dim())?;
    let m = DMatrix::identity(d, d) + &g.a * eta;
    let mean = &s.mean + g.eval(&s.mean) * eta;
    let cov = SpdMatrix::from_symmetrized(&m * s.cov.matrix() * m.transpose())?;
    Ok(GaussianState {
        mean,
        cov,
        t: s.t + eta,
    })
}

/// One step of the discrete preconditioned recursion in diagonal coordinates.
///
/// Requires diagonal Σ_t, Σ*, H and η ≤ min_i h_i σ_i² / 2.
pub fn discrete_gaussian_step(
    s: &GaussianState,
    tgt: &GaussianTarget,
    h: &SpdMatrix,
    eta: f64,
) -> Result<GaussianState> {
    let d = check_pair(s, tgt)?;
    check_dim(d, h.dim())?;
    if !s.cov.is_diagonal() {
        return Err(Error::NonDiagonalInput("current covariance"));
    }
    if !tgt.cov().is_diagonal() {
        return Err(Error::NonDiagonalInput("target covariance"));
    }
    if !h.is_diagonal() {
        return Err(Error::NonDiagonalInput("preconditioner"));
    }
    let hd = h.diagonal();
    let sig = tgt.cov().diagonal();
    let max = step_size_bound(&hd, &sig);
    if !(eta > 0.0) || eta > max * (1.0 + 1e-12) {
        return Err(Error::StepSizeTooLarge { eta, max });
    }
    let s2 = s.cov.diagonal();
    let mut mean = s.mean.clone();
    let mut next = vec![0.0; d];
    for i in 0..d {
        let r = eta / (hd[i] * sig[i]);
        mean[i] = (1.0 - r) * s.mean[i] + r * tgt.mean()[i];
        let factor = 1.0 + eta / hd[i] * (1.0 / s2[i] - 1.0 / sig[i]);
        next[i] = s2[i] * factor * factor;
    }
    Ok(GaussianState {
        mean,
        cov: SpdMatrix::from_diagonal(&next)?,
        t: s.t + eta,
    })
}

/// min_i h_i σ_i² / 2.
pub fn step_size_bound(h: &[f64], sigma2: &[f64]) -> f64 {
    h.iter()
        .zip(sigma2)
        .map(|(h, s)| h * s / 2.0)
        .fold(f64::INFINITY, f64::min)
}

/// max_i |1 - η/(h_i σ_i²)|.
pub fn contraction_factor(h: &[f64], sigma2: &[f64], eta: f64) -> f64 {
    h.iter()
        .zip(sigma2)
        .map(|(h, s)| (1.0 - eta / (h * s)).abs())
        .fold(0.0, f64::max)
}

/// KL(p ‖ q) between Gaussians.
///
/// The trace/log-determinant part is evaluated on the eigenvalues λ of the
/// whitened covariance L_q⁻¹Σ_pL_q⁻ᵀ as Σ(λ - 1 - ln λ), using ln_1p so the
/// value stays accurate as p → q.
pub fn gaussian_kl(p: &GaussianState, q: &GaussianState) -> Result<f64> {
    let d = p.dim();
    check_dim(d, q.dim())?;
    let lq = q.cov.cholesky();
    let gap = &q.mean - &p.mean;
    let w = lq.solve_lower_triangular(&gap).expect("positive diagonal");
    let maha = w.norm_squared();
    let x = lq
        .solve_lower_triangular(p.cov.matrix())
        .expect("positive diagonal");
    let whitened = lq
        .solve_lower_triangular(&x.transpose())
        .expect("positive diagonal");
    let sym = (&whitened + whitened.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let spectral: f64 = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            let u = l - 1.0;
            u - u.ln_1p()
        })
        .sum();
    Ok(0.5 * (spectral + maha))
}

/// ½(|μ₀ - μ*|²_{Σ*⁻¹} + ½Σ_i((s_i²(0) - σ_i²)/σ_i²)²) for diagonal Σ₀, Σ*.
pub fn c0_bound(mean0: &DVector<f64>, cov0: &SpdMatrix, tgt: &GaussianTarget) -> Result<f64> {
    let d = mean0.len();
    check_dim(d, tgt.mean().len())?;
    check_dim(d, cov0.dim())?;
    if !cov0.is_diagonal() {
        return Err(Error::NonDiagonalInput("initial covariance"));
    }
    if !tgt.cov().is_diagonal() {
        return Err(Error::NonDiagonalInput("target covariance"));
    }
    let sig = tgt.cov().diagonal();
    let s0 = cov0.diagonal();
    let mut maha = 0.0;
    let mut var = 0.0;
    for i in 0..d {
        maha += (mean0[i] - tgt.mean()[i]).powi(2) / sig[i];
        var += ((s0[i] - sig[i]) / sig[i]).powi(2);
    }
    Ok(0.5 * (maha + 0.5 * var))
}

/// Which closed-form affine field drives a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldKind {
    LinearSvgd(SpdMatrix),
    L2,
    Mahalanobis,
    OptimalTransport,
    Preconditioned(SpdMatrix),
}

impl FieldKind {
    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::LinearSvgd(_) => "svgd_linear",
            FieldKind::L2 => "l2",
            FieldKind::Mahalanobis => "mahalanobis",
            FieldKind::OptimalTransport => "optimal_transport",
            FieldKind::Preconditioned(_) => "preconditioned",
        }
    }

    pub fn field(&self, s: &GaussianState, tgt: &GaussianTarget) -> Result<AffineField> {
        match self {
            FieldKind::LinearSvgd(k) => field_linear_svgd(s, tgt, k),
            FieldKind::L2 => field_l2(s, tgt),
            FieldKind::Mahalanobis => field_mahalanobis(s, tgt),
            FieldKind::OptimalTransport => field_optimal_transport(s, tgt),
            FieldKind::Preconditioned(h) => linear_class_minimizer(s, tgt, h),
        }
    }
}

/// One recorded point of a moment trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub kl: f64,
    pub mean_err_sq: f64,
    /// Diagonal of Σ_t.
    pub s2: Vec<f64>,
    pub mean: DVector<f64>,
}

impl TrajectoryRow {
    pub fn of(s: &GaussianState, tgt: &GaussianTarget) -> Result<Self> {
        Ok(Self {
            t: s.t,
            kl: gaussian_kl(s, &GaussianState::of_target(tgt))?,
            mean_err_sq: (&s.mean - tgt.mean()).norm_squared(),
            s2: s.cov.diagonal(),
            mean: s.mean.clone(),
        })
    }
}

/// Forward-Euler integration of a closed-form field with exact moment
/// pushforward, recording every `record_every` steps (and the first/last).
pub fn euler_trajectory(
    init: &GaussianState,
    tgt: &GaussianTarget,
    kind: &FieldKind,
    eta: f64,
    steps: usize,
    record_every: usize,
) -> Result<(GaussianState, Vec<TrajectoryRow>)> {
    let every = record_every.max(1);
    let mut s = init.clone();
    let mut rows = vec![TrajectoryRow::of(&s, tgt)?];
    for k in 1..=steps {
        let g = kind.field(&s, tgt)?;
        s = affine_pushforward(&s, &g, eta)?;
        s.t = init.t + k as f64 * eta;
        if k % every == 0 || k == steps {
            rows.push(TrajectoryRow::of(&s, tgt)?);
        }
    }
    Ok((s, rows))
}

/// Trajectory CSV: `t,kl,mean_err_sq,s2_0,...`.
pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let d = rows.first().map_or(0, |r| r.s2.len());
    let mut header = vec!["t".to_string(), "kl".into(), "mean_err_sq".into()];
    header.extend((0..d).map(|i| format!("s2_{i}")));
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![format!("{}", r.t), format!("{:e}", r.kl), format!("{:e}", r.mean_err_sq)];
        rec.extend(r.s2.iter().map(|v| format!("{v:e}")));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
