use crate::error::{check_dim, Error, Result};

pub const DEFAULT_EMA_DECAY: f64 = 0.9;
pub const DEFAULT_EMA_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum PrecondMode {
    Identity,
    /// H = diag(v^α) for a fixed v.
    FixedDiag(Vec<f64>),
    /// Moving average of the squared potential gradient,
    /// H = diag((v + floor)^α).
    FisherEma { decay: f64, floor: f64 },
}

/// Diagonal preconditioner H = Ĥ^α.
#[derive(Clone, Debug, PartialEq)]
pub struct Preconditioner {
    mode: PrecondMode,
    alpha: f64,
    state: Vec<f64>,
    updates: usize,
}

impl Preconditioner {
    pub fn identity(d: usize) -> Self {
        Self { mode: PrecondMode::Identity, alpha: 1.0, state: vec![0.0; d], updates: 0 }
    }

    pub fn fixed_diag(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::NonPositivePreconditioner);
        }
        Ok(Self { mode: PrecondMode::FixedDiag(v.clone()), alpha: 1.0, state: v, updates: 0 })
    }

    pub fn fisher_ema(d: usize, decay: f64, floor: f64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidInput(format!("EMA decay must lie in (0, 1), got {decay}")));
        }
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::InvalidInput(format!("EMA floor must be positive, got {floor}")));
        }
        Ok(Self { mode: PrecondMode::FisherEma { decay, floor }, alpha: 1.0, state: vec![0.0; d], updates: 0 })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("exponent alpha must lie in [0, 1], got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn mode(&self) -> &PrecondMode {
        &self.mode
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Current v.
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self.mode, PrecondMode::FisherEma { .. })
    }

    /// v ← βv + (1-β)·mean_i(∇U(x_i)⊙∇U(x_i)) for n×d row-major `grads`.
    ///
    /// The first update sets v to the batch mean, so the average is not
    /// biased toward its zero initial state.
    pub fn update(&mut self, grads: &[f64]) -> Result<()> {
        let PrecondMode::FisherEma { decay, .. } = self.mode else {
            return Err(Error::ModeMismatch);
        };
        let d = self.state.len();
        if grads.is_empty() || grads.len() % d != 0 {
            return Err(Error::DimensionMismatch { expected: d, got: grads.len() });
        }
        let n = grads.len() / d;
        let mut mean = vec![0.0; d];
        for row in grads.chunks_exact(d) {
            for (m, g) in mean.iter_mut().zip(row) {
                *m += g * g;
            }
        }
        let beta = if self.updates == 0 { 0.0 } else { decay };
        for (v, m) in self.state.iter_mut().zip(&mean) {
            *v = beta * *v + (1.0 - beta) * m / n as f64;
        }
        self.updates += 1;
        Ok(())
    }

    /// Diagonal of H; every entry is strictly positive.
    pub fn materialize(&self) -> Vec<f64> {
        if self.alpha == 0.0 {
            return vec![1.0; self.state.len()];
        }
        match &self.mode {
            PrecondMode::Identity => vec![1.0; self.state.len()],
            PrecondMode::FixedDiag(v) => v.iter().map(|x| x.powf(self.alpha)).collect(),
            PrecondMode::FisherEma { floor, .. } => self.state.iter().map(|v| (v + floor).powf(self.alpha)).collect(),
        }
    }

    pub(crate) fn check(&self, d: usize) -> Result<()> {
        check_dim(d, self.state.len())
    }
}
