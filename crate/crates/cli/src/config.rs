use std::path::{Path, PathBuf};

use declab_core::harness::{scenario, BallShape, Measure, ScenarioSpec};
use declab_core::norms::{SamplerSpec, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;
const MIN_BUDGET: usize = 1000;

fn default_budget() -> usize {
    10_000
}

/// A measurement run. Every emitted byte is a function of this value and the
/// crate version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub v: u32,
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Replace Monte Carlo sampling by a lattice of this spacing.
    #[serde(default)]
    pub lattice_spacing: Option<f64>,
    #[serde(default)]
    pub ball: BallShape,
    /// Record wall-clock times; breaks byte reproducibility of the outputs.
    #[serde(default)]
    pub timing: bool,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Output paths, relative to the config file. Command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub slopes: Option<PathBuf>,
    pub plotdata: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Other(anyhow::Error::new(e).context(format!("reading {}", path.display()))))?;
        Self::from_json(&text)
    }

    pub fn measure(&self) -> Measure {
        let strategy = match self.lattice_spacing {
            Some(spacing) => Strategy::Lattice { spacing },
            None => Strategy::Mc,
        };
        Measure {
            sampler: SamplerSpec { strategy, budget: self.budget, seed: self.seed },
            ball: self.ball.clone(),
            timing: self.timing,
        }
    }

    /// Reject anything that would only fail once sampling has started.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Schema(msg));
        if self.v != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.v));
        }
        if self.budget < MIN_BUDGET {
            return bad(format!("budget {} below the minimum of {MIN_BUDGET}", self.budget));
        }
        if let Some(h) = self.lattice_spacing {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("lattice spacing {h} must be positive"));
            }
        }
        if self.scenarios.is_empty() {
            return bad("no scenarios".into());
        }
        self.ball.ball(4, 1.0).map_err(|e| CliError::Schema(format!("ball: {e}")))?;
        for (k, spec) in self.scenarios.iter().enumerate() {
            if spec.n.is_empty() || spec.p.is_empty() {
                return bad(format!("scenario {k} ({}) has an empty N or p list", spec.kind.name()));
            }
            if let Some(&p) = spec.p.iter().find(|p| !(**p >= 1.0) || p.is_nan()) {
                return bad(format!("scenario {k}: exponent p = {p} must be at least 1"));
            }
            if let Some(&n) = spec.n.iter().find(|n| !(**n >= 1.0 && n.is_finite())) {
                return bad(format!("scenario {k}: scale N = {n} must be finite and at least 1"));
            }
            for &p in &spec.p {
                for &n in &spec.n {
                    if let Err(e) = scenario(spec, n, p) {
                        return bad(format!("scenario {k} ({}) at N = {n}, p = {p}: {e}", spec.kind.name()));
                    }
                }
            }
        }
        Ok(())
    }
}
