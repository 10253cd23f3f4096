use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An n×d cloud of particles stored row-major, plus the sampler step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
    step: usize,
}

impl ParticleSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "particle set needs n >= 1 and d >= 1, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteParticle {
                step: 0,
                particle: pos / d,
            });
        }
        Ok(Self { data, n, d, step: 0 })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(n, d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + DoubleEndedIterator {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw storage. Callers must keep entries finite;
    /// samplers check this with [`ParticleSet::first_non_finite`].
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|p| p / self.d)
    }

    pub(crate) fn advance(&mut self) {
        self.step += 1;
    }

    pub fn with_step(mut self, step: usize) -> Self {
        self.step = step;
        self
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        for r in self.rows() {
            for (mj, x) in m.iter_mut().zip(r) {
                *mj += x;
            }
        }
        m / self.n as f64
    }

    /// Covariance with divisor `n` (biased) or `n - 1`.
    pub fn covariance(&self, unbiased: bool) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.d, self.d);
        for r in self.rows() {
            for a in 0..self.d {
                let da = r[a] - m[a];
                for b in a..self.d {
                    c[(a, b)] += da * (r[b] - m[b]);
                }
            }
        }
        let div = if unbiased && self.n > 1 {
            (self.n - 1) as f64
        } else {
            self.n as f64
        };
        for a in 0..self.d {
            for b in a..self.d {
                let v = c[(a, b)] / div;
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        c
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.data)
    }

    /// One particle per row, comma separated, no header.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in self.rows() {
            wr.write_record(r.iter().map(|x| format!("{x:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}
