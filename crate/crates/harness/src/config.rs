//! Scenario configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::sonar::BUILTIN_SONAR;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    AnalyticGaussian,
    IllConditioned,
    Mixture,
    Logistic,
    VarianceCollapse,
    Timing,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::AnalyticGaussian => "analytic-gaussian",
            ScenarioKind::IllConditioned => "ill-conditioned",
            ScenarioKind::Mixture => "mixture",
            ScenarioKind::Logistic => "logistic",
            ScenarioKind::VarianceCollapse => "variance-collapse",
            ScenarioKind::Timing => "timing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the CLI `--out` flag overrides it.
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub init: InitConfig,
    /// Particle samplers to run. Analytic scenarios may leave this empty.
    #[serde(default)]
    pub samplers: Vec<SamplerConfig>,
    #[serde(default)]
    pub analytic: Option<AnalyticConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub timing: Option<TimingConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// Gaussian targets.
    pub mean: Option<Vec<f64>>,
    pub cov_diag: Option<Vec<f64>>,
    /// Standard-normal target dimension (variance-collapse).
    pub dim: Option<usize>,
    /// Mixture targets.
    pub clusters: Option<usize>,
    /// Logistic regression: a CSV path, or "builtin:sonar".
    pub dataset: Option<PathBuf>,
    pub prior_precision: Option<f64>,
    pub batch_size: Option<usize>,
    pub standardize: Option<bool>,
    pub intercept: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub n: Option<usize>,
    pub mean: Option<Vec<f64>>,
    pub cov_diag: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Pfg,
    Svgd,
    Ula,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldClass {
    Mlp,
    Affine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecondKind {
    Identity,
    Fixed,
    Fisher,
    /// Fixed H equal to the inverse target covariance (Gaussian targets).
    TargetPrecision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    RbfMedian,
    Rbf,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Label used for output file names; defaults to the kind.
    pub name: Option<String>,
    pub eta: f64,
    pub steps: usize,
    // PFG
    pub inner_steps: Option<usize>,
    pub first_inner_steps: Option<usize>,
    pub inner_lr: Option<f64>,
    /// "sgd" (momentum 0.9) or "adam".
    pub optimizer: Option<String>,
    pub momentum: Option<f64>,
    pub field: Option<FieldClass>,
    pub hidden: Option<usize>,
    pub activation: Option<String>,
    pub init_scale: Option<f64>,
    pub base_shift: Option<f64>,
    /// "gradient" or "exact".
    pub solver: Option<String>,
    /// Hutchinson probes; 0 or absent means the exact divergence.
    pub probes: Option<usize>,
    pub preconditioner: Option<PrecondKind>,
    pub h: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub ema_decay: Option<f64>,
    pub ema_floor: Option<f64>,
    // SVGD
    pub kernel: Option<KernelKind>,
    pub bandwidth: Option<f64>,
    pub kernel_diag: Option<Vec<f64>>,
    /// Accept T′, hidden width or α outside the validation grids.
    #[serde(default)]
    pub allow_off_grid: bool,
}

/// Validation grids for PFG hyperparameters.
pub const INNER_STEPS_GRID: [usize; 4] = [1, 2, 5, 10];
pub const HIDDEN_GRID: [usize; 5] = [32, 64, 128, 256, 512];
pub const ALPHA_GRID: [f64; 5] = [0.0, 0.1, 0.2, 0.5, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleField {
    LinearSvgd,
    L2,
    Mahalanobis,
    OptimalTransport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticConfig {
    pub fields: Vec<OracleField>,
    pub eta: f64,
    /// Integration horizon in time units.
    pub horizon: f64,
    /// Record every this many Euler steps.
    pub record_every: Option<usize>,
    /// Kernel diagonal for linear-kernel SVGD (identity when absent).
    pub kernel_diag: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub snapshot_every: Option<usize>,
    /// Names from: mean_err_sq, kl, energy, mmd, elbo, dim_var.
    #[serde(default)]
    pub columns: Vec<String>,
    /// Reference sample size for energy distance and MMD.
    pub reference_samples: Option<usize>,
    /// Langevin steps and step size for posterior reference samples.
    pub reference_steps: Option<usize>,
    pub reference_eta: Option<f64>,
    /// Record wall time in trace CSVs. Off by default so that a fixed seed
    /// reproduces the CSVs byte for byte; the manifest always has timing.
    #[serde(default)]
    pub wall_clock: bool,
}

fn default_record_every() -> usize {
    10
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            record_every: default_record_every(),
            snapshot_every: None,
            columns: Vec::new(),
            reference_samples: None,
            reference_steps: None,
            reference_eta: None,
            wall_clock: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub particles: Vec<usize>,
    pub iterations: usize,
}

pub const METRIC_NAMES: [&str; 6] = ["mean_err_sq", "kl", "energy", "mmd", "elbo", "dim_var"];

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative dataset paths resolve
    /// against the config file's directory.
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(ds) = cfg.target.dataset.as_mut() {
            if ds.is_relative() && ds.as_os_str() != BUILTIN_SONAR {
                if let Some(dir) = path.parent() {
                    *ds = dir.join(&*ds);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        fn v(field: impl Into<String>, reason: impl Into<String>) -> HarnessError {
            HarnessError::validation(field, reason)
        }
        if let (Some(m), Some(c)) = (&self.target.mean, &self.target.cov_diag) {
            if m.len() != c.len() {
                return Err(v("target.cov_diag", "length differs from target.mean"));
            }
        }
        if let Some(c) = &self.target.cov_diag {
            if c.iter().any(|x| !(*x > 0.0)) {
                return Err(v("target.cov_diag", "entries must be positive"));
            }
        }
        match self.scenario {
            ScenarioKind::AnalyticGaussian | ScenarioKind::IllConditioned => {
                if self.target.mean.is_none() || self.target.cov_diag.is_none() {
                    return Err(v("target", "Gaussian scenarios need target.mean and target.cov_diag"));
                }
                if self.analytic.is_none() && self.samplers.is_empty() {
                    return Err(v("analytic", "nothing to run: give [analytic] or at least one sampler"));
                }
            }
            ScenarioKind::Logistic => match &self.target.dataset {
                None => return Err(v("target.dataset", "logistic scenario needs a dataset path")),
                Some(p) if p.as_os_str() != BUILTIN_SONAR && !p.exists() => {
                    return Err(v("target.dataset", format!("file {} does not exist", p.display())))
                }
                _ => {}
            },
            ScenarioKind::VarianceCollapse if self.target.dim == Some(0) => {
                return Err(v("target.dim", "must be positive"));
            }
            ScenarioKind::Timing if self.timing.is_none() => {
                return Err(v("timing", "timing scenario needs a [timing] table"));
            }
            _ => {}
        }
        if let Some(t) = &self.timing {
            if t.particles.is_empty() || t.particles.windows(2).any(|w| w[0] >= w[1]) {
                return Err(v("timing.particles", "must be a non-empty ascending list"));
            }
        }
        if let Some(a) = &self.analytic {
            if !(a.eta > 0.0) || !(a.horizon > 0.0) {
                return Err(v("analytic", "eta and horizon must be positive"));
            }
        }
        for (i, s) in self.samplers.iter().enumerate() {
            let f = |k: &str| format!("samplers[{i}].{k}");
            if !(s.eta > 0.0) || !s.eta.is_finite() {
                return Err(v(f("eta"), "must be positive"));
            }
            if let Some(a) = s.alpha {
                if !(0.0..=1.0).contains(&a) {
                    return Err(v(f("alpha"), "must lie in [0, 1]"));
                }
            }
            if let Some(o) = &s.optimizer {
                if o != "sgd" && o != "adam" {
                    return Err(v(f("optimizer"), "expected \"sgd\" or \"adam\""));
                }
            }
            if let Some(o) = &s.solver {
                if o != "gradient" && o != "exact" {
                    return Err(v(f("solver"), "expected \"gradient\" or \"exact\""));
                }
            }
            if let Some(a) = &s.activation {
                if a.parse::<pfg_core::field::Activation>().is_err() {
                    return Err(v(f("activation"), "expected \"tanh\" or \"sigmoid\""));
                }
            }
            if s.kind == SamplerKind::Pfg && !s.allow_off_grid {
                let grid = "outside the validation grid; set allow_off_grid = true to override";
                if s.inner_steps.is_some_and(|t| !INNER_STEPS_GRID.contains(&t)) {
                    return Err(v(f("inner_steps"), format!("{grid} {INNER_STEPS_GRID:?}")));
                }
                if s.hidden.is_some_and(|h| !HIDDEN_GRID.contains(&h)) {
                    return Err(v(f("hidden"), format!("{grid} {HIDDEN_GRID:?}")));
                }
                if s.alpha.is_some_and(|a| !ALPHA_GRID.contains(&a)) {
                    return Err(v(f("alpha"), format!("{grid} {ALPHA_GRID:?}")));
                }
            }
            if s.preconditioner == Some(PrecondKind::Fixed) && s.h.is_none() {
                return Err(v(f("h"), "fixed preconditioner needs h"));
            }
            if s.kind == SamplerKind::Pfg && s.field == Some(FieldClass::Mlp) && s.solver.as_deref() == Some("exact") {
                return Err(v(f("solver"), "the exact solver needs the affine field class"));
            }
        }
        for c in &self.metrics.columns {
            if !METRIC_NAMES.contains(&c.as_str()) {
                return Err(v("metrics.columns", format!("unknown metric {c:?}; expected one of {METRIC_NAMES:?}")));
            }
        }
        Ok(())
    }

    /// Canonical JSON of the config, used for the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
