use nalgebra::{DMatrix, DVector};

use super::FieldModel;
use crate::analytic::AffineField;
use crate::error::{check_dim, Result};
use crate::linalg::SpdMatrix;
use crate::particles::ParticleSet;

/// The linear function class f(x) = A·x + b, parameters `[A (row-major) | b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineModel {
    d: usize,
    base_shift: f64,
    theta: Vec<f64>,
}

impl AffineModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            base_shift: 0.0,
            theta: vec![0.0; d * d + d],
        }
    }

    pub fn from_field(f: &AffineField) -> Self {
        let d = f.dim();
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.theta[i * d + j] = f.a[(i, j)];
            }
            m.theta[d * d + i] = f.b[i];
        }
        m
    }

    pub fn with_base_shift(mut self, c: f64) -> Self {
        assert!(c >= 0.0 && c.is_finite(), "base shift must be a finite non-negative number");
        self.base_shift = c;
        self
    }

    pub fn to_field(&self) -> AffineField {
        let d = self.d;
        AffineField {
            a: DMatrix::from_row_slice(d, d, &self.theta[..d * d]),
            b: DVector::from_column_slice(&self.theta[d * d..]),
        }
    }
}

impl FieldModel for AffineModel {
    type Cache = ();

    fn dim(&self) -> usize {
        self.d
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn base_shift(&self) -> f64 {
        self.base_shift
    }

    fn forward_cached(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            let row = &self.theta[i * d..(i + 1) * d];
            out[i] = self.theta[d * d + i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn divergence_cached(&self, _x: &[f64], _c: &()) -> f64 {
        (0..self.d).map(|i| self.theta[i * self.d + i]).sum()
    }

    fn jvp_cached(&self, _x: &[f64], _c: &(), v: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = self.theta[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    fn backprop_output(&self, x: &[f64], _c: &(), up: &[f64], grad: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                grad[i * d + j] += up[i] * x[j];
            }
            grad[d * d + i] += up[i];
        }
    }

    fn backprop_divergence(&self, _x: &[f64], _c: &(), scale: f64, grad: &mut [f64]) {
        for i in 0..self.d {
            grad[i * self.d + i] += scale;
        }
    }

    fn backprop_probe(&self, _x: &[f64], _c: &(), xi: &[f64], scale: f64, grad: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                grad[i * d + j] += scale * xi[i] * xi[j];
            }
        }
    }

    /// Stationarity of the quadratic loss in W = [A b] with x̃ = (x, 1):
    /// H·W·E[x̃x̃ᵀ] + H·E[f₀x̃ᵀ] - E[s x̃ᵀ] - [I 0] = 0, s = ∇ln p*.
    fn exact_fit(&self, particles: &ParticleSet, scores: &[f64], h: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(affine_exact_fit(self.d, self.base_shift, particles, scores, h))
    }
}

fn affine_exact_fit(d: usize, c: f64, particles: &ParticleSet, scores: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    check_dim(d, particles.dim())?;
    check_dim(d, h.len())?;
    check_dim(particles.n() * d, scores.len())?;
    let n = particles.n() as f64;
    let mut second = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut cross = DMatrix::<f64>::zeros(d, d + 1);
    for (x, s) in particles.rows().zip(scores.chunks_exact(d)) {
        let xt: Vec<f64> = x.iter().copied().chain(std::iter::once(1.0)).collect();
        for a in 0..=d {
            for b in a..=d {
                second[(a, b)] += xt[a] * xt[b] / n;
            }
        }
        // E[s x̃ᵀ]/h - E[f₀ x̃ᵀ], f₀ = c·s
        for i in 0..d {
            let w = s[i] * (1.0 / h[i] - c);
            for b in 0..=d {
                cross[(i, b)] += w * xt[b] / n;
            }
        }
    }
    for a in 0..=d {
        for b in 0..a {
            second[(a, b)] = second[(b, a)];
        }
    }
    for i in 0..d {
        cross[(i, i)] += 1.0 / h[i];
    }
    let m = SpdMatrix::from_symmetrized(second)?;
    let mut theta = vec![0.0; d * d + d];
    for i in 0..d {
        let row = DVector::from_iterator(d + 1, cross.row(i).iter().copied());
        let w = m.solve(&row);
        theta[i * d..(i + 1) * d].copy_from_slice(&w.as_slice()[..d]);
        theta[d * d + i] = w[d];
    }
    Ok(theta)
}
