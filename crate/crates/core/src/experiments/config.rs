//! Experiment configuration: JSON with fields `model`, `seed`, `n_traj`,
//! `n_steps`, `burn_in`, `checkpoints`, `initial`, `output_dir`, plus
//! optional tuning knobs with defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::DensityMatrix;
use crate::error::{Error, Result};
use crate::kraus::KrausMeasure;
use crate::numerics::{C64, CMatrix, CVector};
use crate::projective::ProjectivePoint;
use crate::trajectory::StartState;
use crate::transport::DEFAULT_W1_BUDGET;

/// Model reference: a builtin name with parameters, or a model file path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin {
        builtin: String,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        params: BTreeMap<String, f64>,
    },
    File { path: PathBuf },
}

impl ModelSpec {
    pub fn builtin(name: &str) -> Self {
        ModelSpec::Builtin {
            builtin: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn builtin_with(name: &str, params: BTreeMap<String, f64>) -> Self {
        ModelSpec::Builtin {
            builtin: name.to_string(),
            params,
        }
    }

    pub fn resolve(&self) -> Result<KrausMeasure> {
        match self {
            ModelSpec::Builtin { builtin, params } => {
                KrausMeasure::builtin_model(builtin, params)
            }
            ModelSpec::File { path } => KrausMeasure::load(path),
        }
    }

    /// Parse a CLI model argument: an existing path, or
    /// `name[:key=value,key=value]`.
    pub fn parse_cli(arg: &str) -> Result<Self> {
        if Path::new(arg).exists() {
            return Ok(ModelSpec::File { path: PathBuf::from(arg) });
        }
        let (name, rest) = match arg.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (arg, None),
        };
        let mut params = BTreeMap::new();
        if let Some(rest) = rest {
            for pair in rest.split(',').filter(|s| !s.is_empty()) {
                let (key, value) = pair.split_once('=').ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "malformed model parameter '{pair}' (expected key=value)"
                    ))
                })?;
                let value: f64 = value.parse().map_err(|_| {
                    Error::InvalidInput(format!("parameter '{key}' has non-numeric value '{value}'"))
                })?;
                params.insert(key.trim().to_string(), value);
            }
        }
        Ok(ModelSpec::Builtin {
            builtin: name.trim().to_string(),
            params,
        })
    }
}

/// Initial distribution of the chain.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialSpec {
    #[default]
    FubiniStudy,
    Pure {
        vector: Vec<[f64; 2]>,
    },
    Density {
        matrix: Vec<Vec<[f64; 2]>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub seed: u64,
    pub n_traj: usize,
    pub n_steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    #[serde(default)]
    pub initial: InitialSpec,
    pub output_dir: PathBuf,
    /// Thread count; omit for the global default. Results do not depend on
    /// this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Hard cap on W1 support size per side.
    #[serde(default = "default_w1_budget")]
    pub w1_budget: usize,
    /// Subsample size used for the per-checkpoint W1 evaluations.
    #[serde(default = "default_w1_subsample")]
    pub w1_subsample: usize,
    /// Estimator-window offsets for the estimator-decay experiment.
    #[serde(default = "default_offsets")]
    pub offsets: Vec<usize>,
    /// Block length for the ergodicity experiment (capped at 3).
    #[serde(default = "default_block_len")]
    pub block_len: usize,
}

fn default_w1_budget() -> usize {
    DEFAULT_W1_BUDGET
}

fn default_w1_subsample() -> usize {
    2000
}

fn default_offsets() -> Vec<usize> {
    vec![0]
}

fn default_block_len() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        cfg.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.n_traj < 1 || self.n_steps < 1 {
            return Err(Error::InvalidInput(
                "n_traj and n_steps must be at least 1".into(),
            ));
        }
        if self.checkpoints.iter().any(|&c| c > self.n_steps) {
            return Err(Error::InvalidInput(
                "checkpoints must lie within [0, n_steps]".into(),
            ));
        }
        Ok(self)
    }

    pub fn resolve_model(&self) -> Result<KrausMeasure> {
        self.model.resolve()
    }

    pub fn initial_start(&self, measure: &KrausMeasure) -> Result<StartState> {
        let k = measure.dim();
        Ok(match &self.initial {
            InitialSpec::FubiniStudy => StartState::FubiniStudy,
            InitialSpec::Pure { vector } => {
                if vector.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: vector.len(),
                    });
                }
                let v = CVector::from_iterator(k, vector.iter().map(|&[re, im]| C64::new(re, im)));
                StartState::Pure(ProjectivePoint::from_vector(v)?)
            }
            InitialSpec::Density { matrix } => {
                if matrix.len() != k || matrix.iter().any(|row| row.len() != k) {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: matrix.len(),
                    });
                }
                let flat: Vec<C64> = matrix
                    .iter()
                    .flat_map(|row| row.iter().map(|&[re, im]| C64::new(re, im)))
                    .collect();
                StartState::Density(DensityMatrix::new(CMatrix::from_row_slice(k, k, &flat))?)
            }
        })
    }
}
