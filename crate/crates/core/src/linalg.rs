//! Symmetric positive-definite matrices and Gaussian sampling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::particles::ParticleSet;
use crate::rng::RngHandle;

/// Relative Frobenius asymmetry accepted before symmetrization.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive-definite matrix. Construction symmetrizes the input
/// as (A + Aᵀ)/2 and proves definiteness with a Cholesky factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        let norm = a.norm();
        let asym = (&a - a.transpose()).norm();
        if norm > 0.0 && asym > SYMMETRY_TOL * norm {
            return Err(Error::NotSymmetric(asym / norm));
        }
        Self::from_symmetrized(a)
    }

    /// Skips the symmetry tolerance check; used for matrices produced by
    /// recursions that are symmetric up to accumulated rounding.
    pub fn from_symmetrized(a: DMatrix<f64>) -> Result<Self> {
        let m = (&a + a.transpose()) * 0.5;
        let chol = cholesky_lower(&m)?;
        Ok(Self { m, chol })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
            chol: DMatrix::identity(d, d),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Lower-triangular L with L·Lᵀ = A.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal().iter().copied().collect()
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.m[(i, j)] == 0.0))
    }

    pub fn inverse(&self) -> SpdMatrix {
        let d = self.dim();
        let linv = self
            .chol
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .expect("cholesky factor has a positive diagonal");
        let inv = linv.transpose() * linv;
        // The inverse of an SPD matrix is SPD; only rounding can break this.
        SpdMatrix::from_symmetrized(inv).expect("inverse of an SPD matrix")
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|x| x.ln()).sum::<f64>()
    }

    /// Symmetric square root via eigendecomposition.
    pub fn sqrt(&self) -> SpdMatrix {
        self.map_eigenvalues(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.map_eigenvalues(|l| 1.0 / l.sqrt())
    }

    /// V·diag(f(λ))·Vᵀ. `f` must map positive reals to positive reals.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let eig = SymmetricEigen::new(self.m.clone());
        let vals = eig.eigenvalues.map(|l| f(l.max(f64::MIN_POSITIVE)));
        let v = &eig.eigenvectors;
        let out = v * DMatrix::from_diagonal(&vals) * v.transpose();
        SpdMatrix::from_symmetrized(out).expect("positive spectrum")
    }

    /// A·x.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x
    }

    /// Solves A·y = b through the Cholesky factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .chol
            .solve_lower_triangular(b)
            .expect("positive diagonal");
        self.chol
            .transpose()
            .solve_upper_triangular(&y)
            .expect("positive diagonal")
    }
}

fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: s });
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// `n` draws of μ + L·z, z ~ N(0, I).
pub fn sample_gaussian(
    rng: &mut RngHandle,
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    n: usize,
) -> Result<ParticleSet> {
    let d = mean.len();
    check_dim(d, cov.dim())?;
    let l = cov.cholesky();
    let mut data = Vec::with_capacity(n * d);
    let mut z = DVector::zeros(d);
    for _ in 0..n {
        rng.fill_normal(z.as_mut_slice());
        let x = mean + l * &z;
        data.extend(x.iter());
    }
    ParticleSet::new(n, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(rng: &mut RngHandle, d: usize) -> SpdMatrix {
        let mut b = DMatrix::zeros(d, d);
        rng.fill_normal(b.as_mut_slice());
        SpdMatrix::new(&b * b.transpose() + DMatrix::identity(d, d) * 0.5).unwrap()
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn cholesky_of_simple_matrices() {
        let i3 = SpdMatrix::identity(3);
        assert_eq!(i3.cholesky(), &DMatrix::identity(3, 3));
        let a = SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        assert_eq!(a.cholesky(), &DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            SpdMatrix::new(a),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        let z = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(SpdMatrix::new(z).is_err());
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 2.0]);
        assert!(matches!(SpdMatrix::new(a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = SpdMatrix::from_diagonal(&[100.0, 1.0]).unwrap().sqrt();
        assert!((s.matrix()[(0, 0)] - 10.0).abs() < 1e-12);
        assert!((s.matrix()[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(s.matrix()[(0, 1)].abs() < 1e-12);
        let i = SpdMatrix::identity(2).sqrt();
        assert!(rel_err(i.matrix(), &DMatrix::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn inverse_and_logdet_small() {
        let a = SpdMatrix::from_diagonal(&[2.0]).unwrap();
        assert!((a.inverse().matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((a.logdet() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(SpdMatrix::identity(4).logdet(), 0.0);
        assert_eq!(SpdMatrix::identity(4).inverse().matrix(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn random_spd_reconstructions() {
        let mut rng = RngHandle::new(11);
        for d in [1, 2, 5, 20, 60] {
            let a = random_spd(&mut rng, d);
            let l = a.cholesky();
            assert!(rel_err(&(l * l.transpose()), a.matrix()) < 1e-10);
            let s = a.sqrt();
            assert!(rel_err(&(s.matrix() * s.matrix()), a.matrix()) < 1e-9);
            let inv = a.inverse();
            assert!((a.matrix() * inv.matrix() - DMatrix::identity(d, d)).norm() < 1e-9);
            let eig_logdet: f64 = SymmetricEigen::new(a.matrix().clone())
                .eigenvalues
                .iter()
                .map(|l| l.ln())
                .sum();
            assert!((a.logdet() - eig_logdet).abs() < 1e-9 * (1.0 + eig_logdet.abs()));
        }
    }

    #[test]
    fn sampling_single_row_and_determinism() {
        let mut r1 = RngHandle::new(3);
        let mut r2 = RngHandle::new(3);
        let cov = SpdMatrix::identity(2);
        let mu = DVector::zeros(2);
        let a = sample_gaussian(&mut r1, &mu, &cov, 1).unwrap();
        assert_eq!(a.n(), 1);
        let b = sample_gaussian(&mut r2, &mu, &cov, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_mean_converges() {
        let mut rng = RngHandle::new(5);
        let cov = SpdMatrix::from_diagonal(&[100.0, 1.0]).unwrap();
        let mu = DVector::from_vec(vec![20.0, 20.0]);
        let p = sample_gaussian(&mut rng, &mu, &cov, 100_000).unwrap();
        let m = p.mean();
        assert!((m[0] - 20.0).abs() < 0.3 && (m[1] - 20.0).abs() < 0.3);
    }

    proptest! {
        #[test]
        fn cholesky_roundtrip(seed in 0u64..1000, d in 1usize..8) {
            let mut rng = RngHandle::new(seed);
            let a = random_spd(&mut rng, d);
            let l = a.cholesky();
            prop_assert!(rel_err(&(l * l.transpose()), a.matrix()) < 1e-10);
            prop_assert!(SpdMatrix::new(a.inverse().into_matrix()).is_ok());
        }
    }
}
