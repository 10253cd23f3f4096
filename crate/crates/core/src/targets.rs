//! Unnormalized target densities p* = exp(-U) with scores.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;
use crate::rng::RngHandle;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A target distribution known up to normalization.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    /// ln p*(x) up to an additive constant fixed per instance.
    fn log_density(&self, x: &[f64]) -> Result<f64>;

    /// Writes ∇ln p*(x) = -∇U(x) into `out`.
    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Draws a minibatch of data indices, or `None` for full-batch targets.
    fn draw_batch(&self, _rng: &mut RngHandle) -> Option<Vec<usize>> {
        None
    }

    /// Unbiased score estimate restricted to `batch`.
    fn grad_log_density_batch(&self, x: &[f64], _batch: &[usize], out: &mut [f64]) -> Result<()> {
        self.grad_log_density(x, out)
    }

    /// Δ ln p*(x), when available in closed form.
    fn laplacian_log_density(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Diagonal of -∇² ln p*(x), when available.
    fn diag_curvature(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Score at `x`, using a fresh minibatch from `rng` when the target supports it.
pub fn grad_log_density(
    target: &dyn Target,
    x: &[f64],
    rng: Option<&mut RngHandle>,
) -> Result<Vec<f64>> {
    check_dim(target.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    match rng.and_then(|r| target.draw_batch(r)) {
        Some(batch) => target.grad_log_density_batch(x, &batch, &mut out)?,
        None => target.grad_log_density(x, &mut out)?,
    }
    Ok(out)
}

fn sub(x: &[f64], m: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(m.iter()).map(|(a, b)| a - b))
}

/// N(μ*, Σ*).
#[derive(Clone, Debug)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    cov: SpdMatrix,
    precision: SpdMatrix,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        check_dim(mean.len(), cov.dim())?;
        let precision = cov.inverse();
        Ok(Self {
            mean,
            cov,
            precision,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), SpdMatrix::identity(d)).expect("identity covariance")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn precision(&self) -> &SpdMatrix {
        &self.precision
    }
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let r = sub(x, &self.mean);
        Ok(-0.5 * r.dot(&(self.precision.matrix() * &r)))
    }

    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        check_dim(d, x.len())?;
        let p = self.precision.matrix();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += p[(i, j)] * (x[j] - self.mean[j]);
            }
            out[i] = -s;
        }
        Ok(())
    }

    fn laplacian_log_density(&self, _x: &[f64]) -> Option<f64> {
        Some(-self.precision.matrix().trace())
    }

    fn diag_curvature(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(self.precision.diagonal())
    }
}

#[derive(Clone, Debug)]
struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

/// Finite Gaussian mixture Σ_k w_k N(μ_k, Σ_k).
#[derive(Clone, Debug)]
pub struct MixtureTarget {
    weights: Vec<f64>,
    covs: Vec<SpdMatrix>,
    comps: Vec<Component>,
    d: usize,
}

impl MixtureTarget {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covs: Vec<SpdMatrix>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidInput("mixture needs at least one component".into()));
        }
        check_dim(k, means.len())?;
        check_dim(k, covs.len())?;
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidInput("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let d = means[0].len();
        let mut comps = Vec::with_capacity(k);
        for ((w, m), c) in weights.iter().zip(&means).zip(&covs) {
            check_dim(d, m.len())?;
            check_dim(d, c.dim())?;
            comps.push(Component {
                log_weight: w.ln(),
                mean: m.clone(),
                precision: c.inverse().into_matrix(),
                log_norm: -0.5 * (d as f64 * LN_2PI + c.logdet()),
            });
        }
        Ok(Self {
            weights,
            covs,
            comps,
            d,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.comps.iter().map(|c| &c.mean)
    }

    pub fn covs(&self) -> &[SpdMatrix] {
        &self.covs
    }

    /// Per-component log joint ln w_k + ln N_k(x), and per-component scores.
    fn component_terms(&self, x: &[f64]) -> (Vec<f64>, Vec<DVector<f64>>) {
        let mut logs = Vec::with_capacity(self.comps.len());
        let mut scores = Vec::with_capacity(self.comps.len());
        for c in &self.comps {
            let r = sub(x, &c.mean);
            let pr = &c.precision * &r;
            logs.push(c.log_weight + c.log_norm - 0.5 * r.dot(&pr));
            scores.push(-pr);
        }
        (logs, scores)
    }

    /// Posterior component probabilities at `x` (max-subtracted softmax).
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        let (logs, _) = self.component_terms(x);
        Ok(softmax(&logs))
    }

    /// Exact draws from the mixture.
    pub fn sample(&self, rng: &mut RngHandle, n: usize) -> crate::particles::ParticleSet {
        let mut data = Vec::with_capacity(n * self.d);
        let mut z = DVector::zeros(self.d);
        for _ in 0..n {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut k = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            rng.fill_normal(z.as_mut_slice());
            let x = &self.comps[k].mean + self.covs[k].cholesky() * &z;
            data.extend(x.iter());
        }
        crate::particles::ParticleSet::new(n, self.d, data).expect("finite draws")
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

impl Target for MixtureTarget {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        let (logs, _) = self.component_terms(x);
        Ok(log_sum_exp(&logs))
    }

    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.d, x.len())?;
        let (logs, scores) = self.component_terms(x);
        let r = softmax(&logs);
        out.fill(0.0);
        for (ri, s) in r.iter().zip(&scores) {
            for (o, sj) in out.iter_mut().zip(s.iter()) {
                *o += ri * sj;
            }
        }
        Ok(())
    }

    fn laplacian_log_density(&self, x: &[f64]) -> Option<f64> {
        if x.len() != self.d {
            return None;
        }
        // Δ ln p = Σ r_k (-tr P_k + |s_k|²) - |Σ r_k s_k|²
        let (logs, scores) = self.component_terms(x);
        let r = softmax(&logs);
        let mut mean_score = DVector::zeros(self.d);
        let mut acc = 0.0;
        for ((rk, s), c) in r.iter().zip(&scores).zip(&self.comps) {
            acc += rk * (s.norm_squared() - c.precision.trace());
            mean_score += s * *rk;
        }
        Some(acc - mean_score.norm_squared())
    }
}

/// Ten (by default) equal-weight clusters with N(0, I) means and 0.1² I covariances.
pub fn make_paper_mixture(rng: &mut RngHandle, k: usize, d: usize) -> MixtureTarget {
    let means: Vec<DVector<f64>> = (0..k)
        .map(|_| {
            let mut m = DVector::zeros(d);
            rng.fill_normal(m.as_mut_slice());
            m
        })
        .collect();
    let cov = SpdMatrix::from_diagonal(&vec![0.01; d]).expect("positive diagonal");
    MixtureTarget::new(vec![1.0 / k as f64; k], means, vec![cov; k])
        .expect("well-formed mixture")
}

/// Per-column affine transform applied to features at load time.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// A binary classification data set with labels in {-1, +1}.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Row-major m×p.
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
    pub n_features: usize,
    pub standardization: Option<Standardization>,
    pub has_header: bool,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, n_features: usize) -> Result<Self> {
        if n_features == 0 || labels.is_empty() {
            return Err(Error::InvalidInput("empty data set".into()));
        }
        check_dim(labels.len() * n_features, features.len())?;
        if labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
            return Err(Error::InvalidInput("labels must be -1 or +1".into()));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            standardization: None,
            has_header: false,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Numeric feature columns followed by one label column in {-1, +1} or
    /// {0, 1}. A header row is detected by a non-numeric first row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(std::io::BufReader::new(f))
    }

    /// As [`Dataset::from_csv`], reading from any byte stream.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        let mut has_header = false;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(str::parse::<f64>).collect();
            let vals = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => {
                    has_header = true;
                    continue;
                }
                Err(_) => {
                    return Err(Error::InvalidInput(format!(
                        "non-numeric value on line {}",
                        line + 1
                    )))
                }
            };
            if vals.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "line {} needs at least one feature and a label",
                    line + 1
                )));
            }
            let w = *width.get_or_insert(vals.len());
            if vals.len() != w {
                return Err(Error::InvalidInput(format!(
                    "line {} has {} columns, expected {w}",
                    line + 1,
                    vals.len()
                )));
            }
            let y = vals[w - 1];
            let y = match y {
                v if v == 1.0 => 1.0,
                v if v == 0.0 || v == -1.0 => -1.0,
                v => {
                    return Err(Error::InvalidInput(format!(
                        "label {v} on line {} is not in {{-1, 0, 1}}",
                        line + 1
                    )))
                }
            };
            features.extend_from_slice(&vals[..w - 1]);
            labels.push(y);
        }
        let p = width.ok_or_else(|| Error::InvalidInput("no data rows".into()))? - 1;
        let mut ds = Self::new(features, labels, p)?;
        ds.has_header = has_header;
        Ok(ds)
    }

    /// Rescales every column to zero mean and unit (population) variance.
    /// Constant columns are only centered.
    pub fn standardize(&mut self) {
        let m = self.len();
        let p = self.n_features;
        let mut means = vec![0.0; p];
        let mut stds = vec![0.0; p];
        for row in self.features.chunks_exact(p) {
            for (mu, x) in means.iter_mut().zip(row) {
                *mu += x / m as f64;
            }
        }
        for row in self.features.chunks_exact(p) {
            for j in 0..p {
                stds[j] += (row[j] - means[j]).powi(2) / m as f64;
            }
        }
        for s in &mut stds {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        for row in self.features.chunks_exact_mut(p) {
            for j in 0..p {
                row[j] = (row[j] - means[j]) / stds[j];
            }
        }
        self.standardization = Some(Standardization { means, stds });
    }

    /// Appends a constant-one column.
    pub fn add_intercept(&mut self) {
        let p = self.n_features;
        let mut out = Vec::with_capacity(self.len() * (p + 1));
        for row in self.features.chunks_exact(p) {
            out.extend_from_slice(row);
            out.push(1.0);
        }
        self.features = out;
        self.n_features = p + 1;
    }
}

/// Bayesian logistic regression with an isotropic Gaussian prior.
#[derive(Clone, Debug)]
pub struct LogisticRegressionTarget {
    data: Dataset,
    prior_precision: f64,
    batch_size: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln σ(z) without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

impl LogisticRegressionTarget {
    /// `batch_size == 0` selects full-batch scores.
    pub fn new(data: Dataset, prior_precision: f64, batch_size: usize) -> Result<Self> {
        if !(prior_precision > 0.0) {
            return Err(Error::InvalidInput("prior precision must be positive".into()));
        }
        if batch_size > data.len() {
            return Err(Error::InvalidInput(format!(
                "batch size {batch_size} exceeds data size {}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            prior_precision,
            batch_size,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn feature(&self, i: usize) -> &[f64] {
        let p = self.data.n_features;
        &self.data.features[i * p..(i + 1) * p]
    }

    fn accumulate_likelihood_grad(&self, x: &[f64], idx: impl Iterator<Item = usize>, scale: f64, out: &mut [f64]) {
        for i in idx {
            let f = self.feature(i);
            let y = self.data.labels[i];
            let z: f64 = f.iter().zip(x).map(|(a, b)| a * b).sum();
            let w = scale * y * sigmoid(-y * z);
            for (o, fj) in out.iter_mut().zip(f) {
                *o += w * fj;
            }
        }
    }

    /// Fraction of correctly classified rows under the mean prediction.
    pub fn accuracy(&self, x: &[f64]) -> f64 {
        let hits = (0..self.data.len())
            .filter(|&i| {
                let z: f64 = self.feature(i).iter().zip(x).map(|(a, b)| a * b).sum();
                z * self.data.labels[i] > 0.0
            })
            .count();
        hits as f64 / self.data.len() as f64
    }
}

impl Target for LogisticRegressionTarget {
    fn dim(&self) -> usize {
        self.data.n_features
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut s = 0.0;
        for i in 0..self.data.len() {
            let z: f64 = self.feature(i).iter().zip(x).map(|(a, b)| a * b).sum();
            s += log_sigmoid(self.data.labels[i] * z);
        }
        let prior: f64 = x.iter().map(|v| v * v).sum::<f64>();
        Ok(s - 0.5 * self.prior_precision * prior)
    }

    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -self.prior_precision * xi;
        }
        self.accumulate_likelihood_grad(x, 0..self.data.len(), 1.0, out);
        Ok(())
    }

    fn draw_batch(&self, rng: &mut RngHandle) -> Option<Vec<usize>> {
        if self.batch_size == 0 {
            return None;
        }
        let mut v = sample_indices(rng, self.data.len(), self.batch_size).into_vec();
        v.sort_unstable();
        Some(v)
    }

    fn grad_log_density_batch(&self, x: &[f64], batch: &[usize], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -self.prior_precision * xi;
        }
        let scale = self.data.len() as f64 / batch.len() as f64;
        self.accumulate_likelihood_grad(x, batch.iter().copied(), scale, out);
        Ok(())
    }

    fn diag_curvature(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut h = vec![self.prior_precision; self.dim()];
        for i in 0..self.data.len() {
            let f = self.feature(i);
            let z: f64 = f.iter().zip(x).map(|(a, b)| a * b).sum();
            let s = sigmoid(z);
            for (hj, fj) in h.iter_mut().zip(f) {
                *hj += s * (1.0 - s) * fj * fj;
            }
        }
        Some(h)
    }
}
