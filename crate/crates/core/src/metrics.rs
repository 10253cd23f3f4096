//! Quality measures for particle clouds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par::{sum, ExecPolicy};
use crate::particles::ParticleSet;
use crate::targets::Target;

/// Largest pooled sample used for the median-distance bandwidth.
pub const MEDIAN_SUBSAMPLE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MmdVariant {
    /// U-statistic; can be slightly negative.
    #[default]
    Unbiased,
    /// V-statistic; always ≥ 0.
    Biased,
}

/// Squared bandwidth σ² of the MMD kernel exp(-|x-y|²/(2σ²)).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum MmdBandwidth {
    /// Median pairwise squared distance of X ∪ Y.
    #[default]
    PooledMedian,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum KdeBandwidth {
    /// h_j = sd_j · n^{-1/(d+4)} per coordinate.
    #[default]
    Scott,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MetricConfig {
    pub mmd_bandwidth: MmdBandwidth,
    pub mmd_variant: MmdVariant,
    pub kde_bandwidth: KdeBandwidth,
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    let m = v.len();
    let hi = *v.select_nth_unstable_by(m / 2, f64::total_cmp).1;
    if m % 2 == 1 {
        hi
    } else {
        let lo = v[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Median pairwise squared distance over X ∪ Y, using an evenly strided
/// subsample of at most [`MEDIAN_SUBSAMPLE`] points.
pub fn pooled_median_sq_dist(x: &ParticleSet, y: &ParticleSet) -> f64 {
    let total = x.n() + y.n();
    let take = total.min(MEDIAN_SUBSAMPLE);
    let pts: Vec<&[f64]> = (0..take)
        .map(|k| {
            let idx = k * total / take;
            if idx < x.n() { x.row(idx) } else { y.row(idx - x.n()) }
        })
        .collect();
    let mut d = Vec::with_capacity(take * take.saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(sq_dist(pts[i], pts[j]));
        }
    }
    if d.is_empty() { 0.0 } else { median(d) }
}

fn check_same_dim(x: &ParticleSet, y: &ParticleSet) -> Result<()> {
    crate::error::check_dim(x.dim(), y.dim())
}

/// Σ_{i,j} k(a_i, b_j), optionally skipping i == j.
fn kernel_sum(a: &ParticleSet, b: &ParticleSet, sigma2: f64, skip_diag: bool, policy: ExecPolicy) -> f64 {
    sum(policy, a.n(), |i| {
        let ai = a.row(i);
        let mut acc = 0.0;
        for j in 0..b.n() {
            if skip_diag && i == j {
                continue;
            }
            acc += (-sq_dist(ai, b.row(j)) / (2.0 * sigma2)).exp();
        }
        acc
    })
}

/// Squared MMD with a Gaussian kernel.
pub fn mmd_rbf(
    x: &ParticleSet,
    y: &ParticleSet,
    bandwidth: MmdBandwidth,
    variant: MmdVariant,
    policy: ExecPolicy,
) -> Result<f64> {
    check_same_dim(x, y)?;
    let needed = match variant {
        MmdVariant::Unbiased => 2,
        MmdVariant::Biased => 1,
    };
    let got = x.n().min(y.n());
    if got < needed {
        return Err(Error::TooFewSamples { needed, got });
    }
    let sigma2 = match bandwidth {
        MmdBandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
        MmdBandwidth::Fixed(s) => return Err(Error::NonPositiveBandwidth(s)),
        MmdBandwidth::PooledMedian => pooled_median_sq_dist(x, y).max(1e-12),
    };
    let (n, m) = (x.n() as f64, y.n() as f64);
    let kxy = kernel_sum(x, y, sigma2, false, policy) / (n * m);
    Ok(match variant {
        MmdVariant::Unbiased => {
            kernel_sum(x, x, sigma2, true, policy) / (n * (n - 1.0))
                + kernel_sum(y, y, sigma2, true, policy) / (m * (m - 1.0))
                - 2.0 * kxy
        }
        MmdVariant::Biased => {
            let v = kernel_sum(x, x, sigma2, false, policy) / (n * n)
                + kernel_sum(y, y, sigma2, false, policy) / (m * m)
                - 2.0 * kxy;
            v.max(0.0)
        }
    })
}

fn mean_dist(a: &ParticleSet, b: &ParticleSet, policy: ExecPolicy) -> f64 {
    let s = sum(policy, a.n(), |i| {
        let ai = a.row(i);
        (0..b.n()).map(|j| sq_dist(ai, b.row(j)).sqrt()).sum()
    });
    s / (a.n() * b.n()) as f64
}

/// 2E|x-y| - E|x-x'| - E|y-y'| (V-statistic).
pub fn energy_distance(x: &ParticleSet, y: &ParticleSet, policy: ExecPolicy) -> Result<f64> {
    check_same_dim(x, y)?;
    let v = 2.0 * mean_dist(x, y, policy) - mean_dist(x, x, policy) - mean_dist(y, y, policy);
    Ok(v.max(0.0))
}

/// Per-coordinate KDE bandwidths for `particles`.
pub fn kde_bandwidths(particles: &ParticleSet, rule: KdeBandwidth) -> Result<Vec<f64>> {
    let (n, d) = (particles.n(), particles.dim());
    let h = match rule {
        KdeBandwidth::Fixed(h) => vec![h; d],
        KdeBandwidth::Scott => {
            if n < 2 {
                return Err(Error::TooFewSamples { needed: 2, got: n });
            }
            let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
            coordinate_variances(particles).into_iter().map(|v| v.sqrt() * factor).collect()
        }
    };
    if h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Degenerate("KDE bandwidth is zero; particles coincide along a coordinate"));
    }
    Ok(h)
}

/// (1/n)Σ_i [ln p*(x_i) - ln p̂_{-i}(x_i)] with a leave-one-out Gaussian KDE.
/// Only differences between clouds under one target are meaningful.
pub fn kde_elbo(particles: &ParticleSet, target: &dyn Target, rule: KdeBandwidth, policy: ExecPolicy) -> Result<f64> {
    let (n, d) = (particles.n(), particles.dim());
    crate::error::check_dim(target.dim(), d)?;
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let h = kde_bandwidths(particles, rule)?;
    let log_norm: f64 = h.iter().map(|hj| -(hj * (2.0 * std::f64::consts::PI).sqrt()).ln()).sum();
    let log_q: Vec<f64> = crate::par::map_indices(policy, n, |i| {
        let xi = particles.row(i);
        let terms: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let xj = particles.row(j);
                -0.5 * (0..d).map(|c| ((xi[c] - xj[c]) / h[c]).powi(2)).sum::<f64>()
            })
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
        m + s.ln() - ((n - 1) as f64).ln() + log_norm
    });
    let mut total = 0.0;
    for (i, lq) in log_q.iter().enumerate() {
        total += target.log_density(particles.row(i))? - lq;
    }
    Ok(total / n as f64)
}

fn coordinate_variances(particles: &ParticleSet) -> Vec<f64> {
    let (n, d) = (particles.n(), particles.dim());
    let mean = particles.mean();
    let mut v = vec![0.0; d];
    for x in particles.rows() {
        for c in 0..d {
            v[c] += (x[c] - mean[c]).powi(2);
        }
    }
    v.iter().map(|s| s / (n as f64 - 1.0)).collect()
}

/// (1/d)Σ_j var_j with unbiased per-coordinate variances.
pub fn dim_avg_variance(particles: &ParticleSet) -> Result<f64> {
    let n = particles.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let v = coordinate_variances(particles);
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample mean and unbiased sample covariance.
pub fn empirical_moments(particles: &ParticleSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = particles.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    Ok((particles.mean(), particles.covariance(true)))
}
