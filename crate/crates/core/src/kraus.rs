//! Finite Kraus measures: weighted families {(w_i, v_i)} subject to the
//! stochasticity condition `sum_i w_i v_i^H v_i = Id`, transition
//! probabilities of the induced Markov kernel, built-in models, and the JSON
//! model-file format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, C64, CMatrix};
use crate::projective::ProjectivePoint;

/// Default tolerance for the stochasticity check.
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-9;

/// Auto-repair is only attempted when the defect is below this bound, so a
/// modeling error is never silently rescaled away.
pub const REPAIR_DEFECT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct KrausElement {
    pub weight: f64,
    pub matrix: CMatrix,
}

/// A finite measure on matrices: weighted Kraus family with at least one
/// element. Weights need not sum to one; only the stochasticity condition is
/// enforced (by `validate`).
#[derive(Debug, Clone)]
pub struct KrausMeasure {
    dim: usize,
    elements: Vec<KrausElement>,
    name: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Frobenius norm of `sum w_i v_i^H v_i - Id`.
    pub defect: f64,
    /// Second moment `sum w_i ||v_i||_F^2`.
    pub second_moment: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Outcome probabilities `p_i = w_i ||v_i x||^2` at a given ray.
#[derive(Debug, Clone)]
pub struct TransitionDistribution {
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub tolerance: f64,
    /// Skip the stochasticity check entirely (override flag).
    pub skip_validation: bool,
    /// Rescale all weights by k / tr(sum w v^H v) when the defect is small
    /// (below `REPAIR_DEFECT_LIMIT`) but above tolerance.
    pub auto_repair: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_VALIDATION_TOL,
            skip_validation: false,
            auto_repair: false,
        }
    }
}

impl KrausMeasure {
    pub fn new(
        dim: usize,
        elements: Vec<KrausElement>,
        name: Option<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if elements.is_empty() {
            return Err(Error::InvalidModel("empty Kraus family".into()));
        }
        for (i, el) in elements.iter().enumerate() {
            if !(el.weight >= 0.0 && el.weight.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "element {i}: weight {} is not a non-negative real",
                    el.weight
                )));
            }
            if el.matrix.nrows() != dim || el.matrix.ncols() != dim {
                return Err(Error::InvalidModel(format!(
                    "element {i}: matrix is {}x{}, expected {dim}x{dim}",
                    el.matrix.nrows(),
                    el.matrix.ncols()
                )));
            }
            if !numerics::is_finite(&el.matrix) {
                return Err(Error::InvalidModel(format!(
                    "element {i}: matrix has non-finite entries"
                )));
            }
        }
        Ok(Self { dim, elements, name })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[KrausElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// `sum_i w_i v_i^H v_i`.
    pub fn stochasticity_sum(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.dim, self.dim);
        for el in &self.elements {
            s += el.matrix.adjoint() * &el.matrix * C64::new(el.weight, 0.0);
        }
        s
    }

    /// Check the stochasticity condition at tolerance `tol` and report the
    /// defect together with the second moment.
    pub fn validate(&self, tol: f64) -> Result<ValidationReport> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        let defect = (self.stochasticity_sum() - numerics::identity(self.dim)).norm();
        let second_moment = self
            .elements
            .iter()
            .map(|el| el.weight * el.matrix.norm_squared())
            .sum();
        Ok(ValidationReport {
            defect,
            second_moment,
            tolerance: tol,
            passed: defect <= tol,
        })
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.validate(tol).map(|r| r.passed).unwrap_or(false)
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = self.validate(DEFAULT_VALIDATION_TOL)?;
        if !report.passed {
            return Err(Error::InvalidModel(format!(
                "stochasticity defect {:.3e} exceeds tolerance {:.1e}",
                report.defect, DEFAULT_VALIDATION_TOL
            )));
        }
        Ok(())
    }

    /// Outcome distribution of the kernel at the ray `x`:
    /// `p_i = w_i ||v_i x||^2`, which sums to one for a valid measure.
    pub fn transition_probabilities(&self, x: &ProjectivePoint) -> Result<TransitionDistribution> {
        self.ensure_valid()?;
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(TransitionDistribution {
            probabilities: self.transition_probabilities_unchecked(x),
        })
    }

    /// Same as `transition_probabilities` but without re-validating the
    /// measure; used in sampling loops on pre-validated models.
    pub(crate) fn transition_probabilities_unchecked(&self, x: &ProjectivePoint) -> Vec<f64> {
        self.elements
            .iter()
            .map(|el| el.weight * (&el.matrix * x.coeffs()).norm_squared())
            .collect()
    }

    /// Weight-rescaled copy: all weights multiplied by k / tr(sum w v^H v).
    /// Only allowed when the defect is below `REPAIR_DEFECT_LIMIT`.
    pub fn repaired(&self) -> Result<KrausMeasure> {
        let report = self.validate(DEFAULT_VALIDATION_TOL)?;
        if report.defect >= REPAIR_DEFECT_LIMIT {
            return Err(Error::InvalidModel(format!(
                "defect {:.3e} too large for auto-repair (limit {:.1e})",
                report.defect, REPAIR_DEFECT_LIMIT
            )));
        }
        let mean_eig = {
            let s = self.stochasticity_sum();
            let tr: C64 = (0..self.dim).map(|i| s[(i, i)]).sum();
            tr.re / self.dim as f64
        };
        let mut m = self.clone();
        for el in &mut m.elements {
            el.weight /= mean_eig;
        }
        Ok(m)
    }

    /// Construct one of the built-in models. Unknown names and out-of-range
    /// parameters are rejected.
    pub fn builtin_model(name: &str, params: &BTreeMap<String, f64>) -> Result<KrausMeasure> {
        let allow = |allowed: &[&str]| -> Result<()> {
            for key in params.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::InvalidParameter(format!(
                        "model '{name}' does not take parameter '{key}'"
                    )));
                }
            }
            Ok(())
        };
        let c = C64::new;
        match name {
            "appc_example1" => {
                allow(&[])?;
                let (s1, c1) = 1.0f64.sin_cos();
                let v1 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(c1, s1), c(0.0, 0.0), c(0.0, 0.0), c(c1, -s1)],
                );
                let v2 =
                    CMatrix::from_row_slice(2, 2, &[c(c1, 0.0), c(0.0, s1), c(0.0, s1), c(c1, 0.0)]);
                KrausMeasure::new(
                    2,
                    vec![
                        KrausElement { weight: 0.5, matrix: v1 },
                        KrausElement { weight: 0.5, matrix: v2 },
                    ],
                    Some(name.into()),
                )
            }
            "appc_example2" => {
                allow(&[])?;
                let v1 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)],
                );
                let v2 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 0.0)],
                );
                KrausMeasure::new(
                    2,
                    vec![
                        KrausElement { weight: 0.5, matrix: v1 },
                        KrausElement { weight: 0.5, matrix: v2 },
                    ],
                    Some(name.into()),
                )
            }
            "flip_flop" => {
                allow(&[])?;
                let v1 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
                );
                let v2 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
                );
                KrausMeasure::new(
                    2,
                    vec![
                        KrausElement { weight: 1.0, matrix: v1 },
                        KrausElement { weight: 1.0, matrix: v2 },
                    ],
                    Some(name.into()),
                )
            }
            "amplitude_damping" => {
                allow(&["p"])?;
                let p = *params.get("p").ok_or_else(|| {
                    Error::InvalidParameter("amplitude_damping requires parameter 'p'".into())
                })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!(
                        "amplitude_damping: p = {p} outside [0, 1]"
                    )));
                }
                let k0 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - p).sqrt(), 0.0)],
                );
                let k1 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0.0, 0.0), c(p.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)],
                );
                KrausMeasure::new(
                    2,
                    vec![
                        KrausElement { weight: 1.0, matrix: k0 },
                        KrausElement { weight: 1.0, matrix: k1 },
                    ],
                    Some(format!("amplitude_damping(p={p})")),
                )
            }
            "rotating_damping" => {
                allow(&["theta", "a", "b"])?;
                let theta = params
                    .get("theta")
                    .copied()
                    .unwrap_or(std::f64::consts::PI / 5.0);
                let a = params.get("a").copied().unwrap_or(0.9);
                let b = params.get("b").copied().unwrap_or(0.45);
                if !theta.is_finite() {
                    return Err(Error::InvalidParameter("rotating_damping: theta must be finite".into()));
                }
                if a.abs() > 1.0 || b.abs() > 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "rotating_damping: |a| and |b| must be <= 1 (got a={a}, b={b})"
                    )));
                }
                let v1 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(a, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(b, 0.0)],
                );
                let (st, ct) = theta.sin_cos();
                let rot = CMatrix::from_row_slice(2, 2, &[c(ct, 0.0), c(-st, 0.0), c(st, 0.0), c(ct, 0.0)]);
                let damp = CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        c((1.0 - a * a).sqrt(), 0.0),
                        c(0.0, 0.0),
                        c(0.0, 0.0),
                        c((1.0 - b * b).sqrt(), 0.0),
                    ],
                );
                KrausMeasure::new(
                    2,
                    vec![
                        KrausElement { weight: 1.0, matrix: v1 },
                        KrausElement { weight: 1.0, matrix: rot * damp },
                    ],
                    Some(format!("rotating_damping(theta={theta},a={a},b={b})")),
                )
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown builtin model '{other}' \
                 (expected one of appc_example1, appc_example2, flip_flop, \
                 amplitude_damping, rotating_damping)"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<KrausMeasure> {
        Self::load_with(path, &LoadOptions::default())
    }

    pub fn load_with(path: &Path, opts: &LoadOptions) -> Result<KrausMeasure> {
        let text = fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let measure = file.into_measure(path)?;
        if opts.skip_validation {
            return Ok(measure);
        }
        let report = measure.validate(opts.tolerance)?;
        if report.passed {
            return Ok(measure);
        }
        if opts.auto_repair && report.defect < REPAIR_DEFECT_LIMIT {
            let repaired = measure.repaired()?;
            let recheck = repaired.validate(opts.tolerance)?;
            if recheck.passed {
                return Ok(repaired);
            }
        }
        Err(Error::InvalidModel(format!(
            "{}: stochasticity defect {:.6e} exceeds tolerance {:.1e}",
            path.display(),
            report.defect,
            opts.tolerance
        )))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile::from_measure(self);
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::InvalidModel(format!("serialization failed: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }
}

// JSON schema: complex numbers are [re, im]; matrices are row-major arrays of
// rows of such pairs.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    elements: Vec<ElementFile>,
}

#[derive(Serialize, Deserialize)]
struct ElementFile {
    weight: f64,
    matrix: Vec<Vec<[f64; 2]>>,
}

impl ModelFile {
    fn into_measure(self, path: &Path) -> Result<KrausMeasure> {
        let k = self.dim;
        let mut elements = Vec::with_capacity(self.elements.len());
        for (idx, el) in self.elements.into_iter().enumerate() {
            if el.matrix.len() != k || el.matrix.iter().any(|row| row.len() != k) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    detail: format!(
                        "elements[{idx}].matrix: expected a {k}x{k} matrix, got {}x{}",
                        el.matrix.len(),
                        el.matrix.first().map(|r| r.len()).unwrap_or(0)
                    ),
                });
            }
            let flat: Vec<C64> = el
                .matrix
                .iter()
                .flat_map(|row| row.iter().map(|&[re, im]| C64::new(re, im)))
                .collect();
            elements.push(KrausElement {
                weight: el.weight,
                matrix: CMatrix::from_row_slice(k, k, &flat),
            });
        }
        KrausMeasure::new(k, elements, self.name)
    }

    fn from_measure(m: &KrausMeasure) -> ModelFile {
        ModelFile {
            dim: m.dim,
            name: m.name.clone(),
            elements: m
                .elements
                .iter()
                .map(|el| ElementFile {
                    weight: el.weight,
                    matrix: (0..m.dim)
                        .map(|i| {
                            (0..m.dim)
                                .map(|j| [el.matrix[(i, j)].re, el.matrix[(i, j)].im])
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Convenience constructor with no parameters.
pub fn builtin(name: &str) -> Result<KrausMeasure> {
    KrausMeasure::builtin_model(name, &BTreeMap::new())
}

/// Convenience constructor for `amplitude_damping(p)`.
pub fn amplitude_damping(p: f64) -> Result<KrausMeasure> {
    let mut params = BTreeMap::new();
    params.insert("p".to_string(), p);
    KrausMeasure::builtin_model("amplitude_damping", &params)
}
