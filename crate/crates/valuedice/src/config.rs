//! Experiment configuration: one JSON file, optionally patched by
//! dotted-path flags such as `--training.batch-size 32`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use valuedice_core::baselines::DEFAULT_BC_PENALTY;
use valuedice_core::environments::{RING_GAMMA, RING_STATES};
use valuedice_core::valuedice::{MixConfig, TrainingConfig};

use crate::error::{HarnessError, Result};

/// Which environment and demonstration source to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    RingSparse,
    RingStochastic,
    RandomSweep,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RingSparse => "ring-sparse",
            Self::RingStochastic => "ring-stochastic",
            Self::RandomSweep => "random-sweep",
        }
    }
}

/// Trainer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    ValueDiceExact,
    ValueDiceEmpirical,
    Bc,
    Gail,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::ValueDiceExact, Self::ValueDiceEmpirical, Self::Bc, Self::Gail];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ValueDiceExact => "valuedice-exact",
            Self::ValueDiceEmpirical => "valuedice-empirical",
            Self::Bc => "bc",
            Self::Gail => "gail",
        }
    }

    pub fn is_valuedice(self) -> bool {
        matches!(self, Self::ValueDiceExact | Self::ValueDiceEmpirical)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            let known: Vec<&str> = Self::ALL.iter().map(|a| a.as_str()).collect();
            format!("unknown algorithm `{s}` (expected one of {})", known.join(", "))
        })
    }
}

impl TryFrom<String> for Algorithm {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> Self {
        a.as_str().to_owned()
    }
}

/// Environment knobs. Unset ring values fall back to 8 states and gamma 0.95.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub gamma: Option<f64>,
    pub n_states: Option<usize>,
    /// Action count for random-sweep MDPs (the ring always has 2).
    pub n_actions: usize,
    /// Successors per pair for random-sweep MDPs.
    pub branching: usize,
    pub p_forward: f64,
    pub n_trajectories: usize,
    pub horizon: usize,
    /// Optional MDP JSON file replacing the generated random-sweep MDP.
    pub mdp_file: Option<PathBuf>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            n_states: None,
            n_actions: 3,
            branching: 3,
            p_forward: 0.75,
            n_trajectories: 10,
            horizon: 50,
            mdp_file: None,
        }
    }
}

impl EnvironmentConfig {
    pub fn ring_states(&self) -> usize {
        self.n_states.unwrap_or(RING_STATES)
    }

    pub fn ring_gamma(&self) -> f64 {
        self.gamma.unwrap_or(RING_GAMMA)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    pub algorithm: Algorithm,
    pub mix: MixConfig,
    pub training: TrainingConfig,
    pub environment: EnvironmentConfig,
    pub bc_penalty: f64,
    pub seeds: Vec<u64>,
    /// Metrics CSV path; the JSON summary goes next to it.
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentName::RingStochastic,
            algorithm: Algorithm::ValueDiceExact,
            mix: MixConfig::default(),
            training: TrainingConfig::default(),
            environment: EnvironmentConfig::default(),
            bc_penalty: DEFAULT_BC_PENALTY,
            seeds: vec![0],
            output: PathBuf::from("metrics.csv"),
        }
    }
}

fn config_error(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

/// Deserializes with the failing field's path in the error.
fn from_value(value: Value) -> Result<ExperimentConfig> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path == "." { String::from("config") } else { path }, e.into_inner().to_string())
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| config_error("config", e.to_string()))?;
        from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Applies `(path, value)` overrides; dashes in path segments map to
    /// underscores and values parse as JSON when possible, else as strings.
    pub fn with_overrides<'a>(self, overrides: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut value = serde_json::to_value(&self).map_err(|e| config_error("config", e.to_string()))?;
        for (path, raw) in overrides {
            let keys: Vec<String> = path.split('.').map(|k| k.replace('-', "_")).collect();
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
            set_path(&mut value, &keys, parsed).ok_or_else(|| config_error(path, "no such field"))?;
        }
        from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_error("seeds", "seed list must be nonempty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_error("seeds", "seeds must be distinct"));
        }
        self.mix
            .validate()
            .map_err(|e| config_error("mix.alpha", e.to_string()))?;
        self.training.validate().map_err(|e| match e {
            valuedice_core::Error::InvalidConfig(msg) => {
                let field = msg.split_whitespace().next().unwrap_or("training").to_owned();
                config_error(field, msg)
            }
            other => config_error("training", other.to_string()),
        })?;
        if !(self.bc_penalty >= 0.0 && self.bc_penalty.is_finite()) {
            return Err(config_error("bc_penalty", "must be a nonnegative number"));
        }
        let env = &self.environment;
        if let Some(g) = env.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(config_error("environment.gamma", "must lie in [0, 1)"));
            }
        }
        if !(env.p_forward > 0.0 && env.p_forward < 1.0) {
            return Err(config_error("environment.p_forward", "must lie in (0, 1)"));
        }
        for (field, v) in [
            ("environment.n_trajectories", env.n_trajectories),
            ("environment.horizon", env.horizon),
            ("environment.n_actions", env.n_actions),
            ("environment.branching", env.branching),
        ] {
            if v == 0 {
                return Err(config_error(field, "must be positive"));
            }
        }
        match self.experiment {
            ExperimentName::RingSparse | ExperimentName::RingStochastic => {
                if env.ring_states() < 3 {
                    return Err(config_error("environment.n_states", "the ring needs at least 3 states"));
                }
            }
            ExperimentName::RandomSweep => {
                let ns = env.n_states.unwrap_or(RANDOM_SWEEP_STATES);
                if ns == 0 {
                    return Err(config_error("environment.n_states", "must be positive"));
                }
                if env.branching > ns {
                    return Err(config_error("environment.branching", "cannot exceed n_states"));
                }
            }
        }
        Ok(())
    }
}

/// Default state count for random-sweep MDPs.
pub const RANDOM_SWEEP_STATES: usize = 10;

fn set_path(value: &mut Value, keys: &[String], new: Value) -> Option<()> {
    let (last, parents) = keys.split_last()?;
    let mut cur = value;
    for k in parents {
        cur = cur.as_object_mut()?.get_mut(k)?;
    }
    let obj = cur.as_object_mut()?;
    // Unset optional fields serialize as null and are still valid targets.
    let slot = obj.get_mut(last)?;
    *slot = new;
    Some(())
}

/// Splits `--a.b value` / `--a.b=value` pairs out of an argument list.
///
/// Returns the remaining arguments and the extracted overrides.
pub fn split_override_args(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_owned())),
            None => (body, None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let key = key.to_owned();
        match inline.or_else(|| it.next()) {
            Some(v) => overrides.push((key, v)),
            None => overrides.push((key, String::new())),
        }
    }
    (rest, overrides)
}
