//! JSON experiment configuration.
//!
//! A config names one experiment, the master seed, the replica count, the
//! resolution and a per-experiment `params` object. Every level rejects
//! unknown keys. A run manifest is accepted in place of a config: its
//! top-level `"config"` object is the resolved config of that run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{field, LabError, Result};
use crate::experiments::{continuity, fbm, flow, fracalc, gain, ito, peano, transport, yde};

pub const DEFAULT_SEED: u64 = 20_240_917;
/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "REGNOISE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FbmCheck,
    Gain,
    ItoTanaka,
    Yde,
    Flow,
    Peano,
    Transport,
    Continuity,
    FracalcCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        Self::FbmCheck,
        Self::Gain,
        Self::ItoTanaka,
        Self::Yde,
        Self::Flow,
        Self::Peano,
        Self::Transport,
        Self::Continuity,
        Self::FracalcCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FbmCheck => "fbm-check",
            Self::Gain => "gain",
            Self::ItoTanaka => "ito-tanaka",
            Self::Yde => "yde",
            Self::Flow => "flow",
            Self::Peano => "peano",
            Self::Transport => "transport",
            Self::Continuity => "continuity",
            Self::FracalcCheck => "fracalc-check",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::FbmCheck => {
                "fBm covariance against the closed form, and the conditional variance of the independent part"
            }
            Self::Gain => "spatial regularity of the averaged drift along fBm versus the predicted gain",
            Self::ItoTanaka => {
                "averaged drift against the two terms of its Ito-Tanaka decomposition, with one time refinement"
            }
            Self::Yde => {
                "Young ODE solver against closed forms and a classical ODE, a-priori constants, sewing convergence"
            }
            Self::Flow => "flow property, variational equations and Jacobian identity",
            Self::Peano => "branch selection by fBm for the non-Lipschitz drift sign(x)|x|^kappa",
            Self::Transport => {
                "transport by characteristics: constancy, weak residual with negative control, commutator sweep"
            }
            Self::Continuity => "continuity equation by particle pushforward: mass, densities and duality",
            Self::FracalcCheck => {
                "fractional integral/derivative round trip, K_H covariance, Girsanov martingale check"
            }
        }
    }

    /// `(seeds, n_time, m_space)` used when the config omits them.
    pub fn defaults(self) -> (usize, Resolution) {
        let r = |n_time, m_space| Resolution { n_time, m_space };
        match self {
            Self::FbmCheck => (10_000, r(512, 64)),
            Self::Gain => (20, r(1 << 20, 1024)),
            Self::ItoTanaka => (1, r(1 << 12, 256)),
            Self::Yde => (20, r(1 << 12, 64)),
            Self::Flow => (1, r(1 << 10, 32)),
            Self::Peano => (50, r(1 << 12, 64)),
            Self::Transport => (1, r(1 << 10, 128)),
            Self::Continuity => (1, r(1 << 9, 64)),
            Self::FracalcCheck => (10_000, r(1 << 12, 64)),
        }
    }

    /// Documented parameters as `(key, description)`.
    pub fn param_docs(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Self::FbmCheck => fbm::PARAM_DOCS,
            Self::Gain => gain::PARAM_DOCS,
            Self::ItoTanaka => ito::PARAM_DOCS,
            Self::Yde => yde::PARAM_DOCS,
            Self::Flow => flow::PARAM_DOCS,
            Self::Peano => peano::PARAM_DOCS,
            Self::Transport => transport::PARAM_DOCS,
            Self::Continuity => continuity::PARAM_DOCS,
            Self::FracalcCheck => fracalc::PARAM_DOCS,
        }
    }

    pub fn default_params(self) -> Params {
        match self {
            Self::FbmCheck => Params::FbmCheck(Default::default()),
            Self::Gain => Params::Gain(Default::default()),
            Self::ItoTanaka => Params::ItoTanaka(Default::default()),
            Self::Yde => Params::Yde(Default::default()),
            Self::Flow => Params::Flow(Default::default()),
            Self::Peano => Params::Peano(Default::default()),
            Self::Transport => Params::Transport(Default::default()),
            Self::Continuity => Params::Continuity(Default::default()),
            Self::FracalcCheck => Params::FracalcCheck(Default::default()),
        }
    }

    fn parse_params(self, map: Map<String, Value>) -> std::result::Result<Params, serde_json::Error> {
        let v = Value::Object(map);
        Ok(match self {
            Self::FbmCheck => Params::FbmCheck(serde_json::from_value(v)?),
            Self::Gain => Params::Gain(serde_json::from_value(v)?),
            Self::ItoTanaka => Params::ItoTanaka(serde_json::from_value(v)?),
            Self::Yde => Params::Yde(serde_json::from_value(v)?),
            Self::Flow => Params::Flow(serde_json::from_value(v)?),
            Self::Peano => Params::Peano(serde_json::from_value(v)?),
            Self::Transport => Params::Transport(serde_json::from_value(v)?),
            Self::Continuity => Params::Continuity(serde_json::from_value(v)?),
            Self::FracalcCheck => Params::FracalcCheck(serde_json::from_value(v)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    pub n_time: usize,
    pub m_space: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    FbmCheck(fbm::FbmCheckParams),
    Gain(gain::GainParams),
    ItoTanaka(ito::ItoTanakaParams),
    Yde(yde::YdeParams),
    Flow(flow::FlowParams),
    Peano(peano::PeanoParams),
    Transport(transport::TransportParams),
    Continuity(continuity::ContinuityParams),
    FracalcCheck(fracalc::FracalcParams),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResolution {
    n_time: Option<usize>,
    m_space: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentKind,
    seed: Option<u64>,
    seeds: Option<usize>,
    resolution: Option<RawResolution>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    params: Map<String, Value>,
}

/// A fully resolved experiment configuration (defaults filled in).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Master seed; replica seeds are derived from it.
    pub seed: u64,
    pub seeds: usize,
    pub resolution: Resolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub params: Params,
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Collects diagnostics during validation.
#[derive(Debug, Default)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic { field: field.into(), message: message.into() });
    }

    pub fn hurst(&mut self, field: &str, h: f64) {
        if !(h > 0.0 && h < 1.0) {
            self.push(field, format!("H out of (0,1): {h}"));
        }
    }

    /// `lo ≤ v ≤ hi`.
    pub fn range(&mut self, field: &str, v: f64, lo: f64, hi: f64) {
        if !(v >= lo && v <= hi) {
            self.push(field, format!("{v} outside [{lo}, {hi}]"));
        }
    }

    pub fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(field, format!("must be positive, got {v}"));
        }
    }

    pub fn young(&mut self, field: &str, gamma: f64, nu: f64) {
        if !(gamma * (1.0 + nu) > 1.0) {
            self.push(field, format!("Young condition violated: gamma (1 + nu) = {} <= 1", gamma * (1.0 + nu)));
        }
    }
}

impl ExperimentConfig {
    /// Default config of an experiment.
    pub fn new(experiment: ExperimentKind) -> Self {
        let (seeds, resolution) = experiment.defaults();
        Self {
            experiment,
            seed: DEFAULT_SEED,
            seeds,
            resolution,
            output_dir: None,
            params: experiment.default_params(),
        }
    }

    /// Parses a config (or a run manifest) from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let raw: RawConfig = match value.get("config") {
            Some(cfg) => serde_json::from_value(cfg.clone()).map_err(|e| field("config", e.to_string()))?,
            // Re-parse the text so that errors carry line and column.
            None => serde_json::from_str(text)?,
        };
        let kind = raw.experiment;
        let (seeds, res) = kind.defaults();
        let resolution = match raw.resolution {
            Some(r) => Resolution { n_time: r.n_time.unwrap_or(res.n_time), m_space: r.m_space.unwrap_or(res.m_space) },
            None => res,
        };
        let params = kind.parse_params(raw.params).map_err(|e| field("params", e.to_string()))?;
        Ok(Self {
            experiment: kind,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            seeds: raw.seeds.unwrap_or(seeds),
            resolution,
            output_dir: raw.output_dir,
            params,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Read { path: path.to_owned(), source })?;
        Self::from_json(&text)
    }

    /// Applies `REGNOISE_SEED` if set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| field(SEED_ENV, format!("not an unsigned integer: {v:?}")))?;
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Schema and physics checks; empty when the config is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Diagnostics::default();
        if self.seeds == 0 {
            d.push("seeds", "must be at least 1");
        }
        for (name, v) in
            [("resolution.n_time", self.resolution.n_time), ("resolution.m_space", self.resolution.m_space)]
        {
            if v < 8 || !v.is_power_of_two() {
                d.push(name, format!("must be a power of two >= 8, got {v}"));
            }
        }
        match &self.params {
            Params::FbmCheck(p) => p.validate(self, &mut d),
            Params::Gain(p) => p.validate(self, &mut d),
            Params::ItoTanaka(p) => p.validate(self, &mut d),
            Params::Yde(p) => p.validate(self, &mut d),
            Params::Flow(p) => p.validate(self, &mut d),
            Params::Peano(p) => p.validate(self, &mut d),
            Params::Transport(p) => p.validate(self, &mut d),
            Params::Continuity(p) => p.validate(self, &mut d),
            Params::FracalcCheck(p) => p.validate(self, &mut d),
        }
        d.0
    }
}
