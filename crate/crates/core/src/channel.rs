//! The averaged evolution map `phi(rho) = sum_i w_i v_i rho v_i^H`, its
//! superoperator on vectorized density matrices, spectral analysis (period,
//! gap, invariant state, minimal invariant subspace), and the uniqueness
//! check for the fixed point.

use serde_json::json;

use crate::error::{Error, Result};
use crate::kraus::KrausMeasure;
use crate::numerics::{self, C64, CMatrix, CVector};
use crate::projective::ProjectivePoint;

/// Modulus threshold separating peripheral from decaying spectrum:
/// eigenvalues with `|z| >= 1 - tol` count as peripheral.
pub const DEFAULT_PERIPHERAL_TOL: f64 = 1e-9;

/// Singular-value threshold when computing the dimension of the fixed-point
/// space as the numerical null space of (superoperator - Id).
const NULL_SPACE_TOL: f64 = 1e-8;

/// Hermitian positive semidefinite matrix with unit trace.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validate Hermiticity (1e-10), positivity (min eigenvalue >= -1e-10)
    /// and unit trace (1e-10).
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.is_empty() {
            return Err(Error::InvalidInput("density matrix must be square and non-empty".into()));
        }
        if !numerics::is_finite(&matrix) {
            return Err(Error::InvalidInput("density matrix has non-finite entries".into()));
        }
        let herm_dev = (&matrix - matrix.adjoint()).norm();
        if herm_dev > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "density matrix is not Hermitian (deviation {herm_dev:.3e})"
            )));
        }
        let tr: C64 = (0..matrix.nrows()).map(|i| matrix[(i, i)]).sum();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let (evs, _) = numerics::herm_eig(&matrix)?;
        if evs[0] < -1e-10 {
            return Err(Error::InvalidInput(format!(
                "density matrix has negative eigenvalue {:.3e}",
                evs[0]
            )));
        }
        Ok(Self { matrix })
    }

    /// `Id/k`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: numerics::identity(dim) * C64::new(1.0 / dim as f64, 0.0),
        }
    }

    /// Rank-one state corresponding to a ray.
    pub fn from_pure(x: &ProjectivePoint) -> Self {
        Self { matrix: x.projector() }
    }

    /// Hermitize, clip negative eigenvalues at zero, renormalize the trace.
    pub fn project(matrix: &CMatrix) -> Result<Self> {
        let h = numerics::hermitize(matrix);
        let (evs, vecs) = numerics::herm_eig(&h)?;
        let k = h.nrows();
        let clipped: Vec<f64> = evs.iter().map(|&e| e.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return Err(Error::NumericalFailure(
                "cannot project to a density matrix: no positive part".into(),
            ));
        }
        let mut m = CMatrix::zeros(k, k);
        for i in 0..k {
            let v = vecs.column(i);
            m += CMatrix::from_fn(k, k, |r, s| v[r] * v[s].conj()) * C64::new(clipped[i] / total, 0.0);
        }
        DensityMatrix::new(numerics::hermitize(&m))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Trace-norm distance `|| self - other ||_1 = tr |self - other|`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        numerics::trace_norm(&(&self.matrix - &other.matrix))
    }

    /// Eigenvalues ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        numerics::herm_eig(&self.matrix).map(|(e, _)| e).unwrap_or_default()
    }

    /// Second-largest eigenvalue, clamped at zero.
    pub fn second_eigenvalue(&self) -> f64 {
        let evs = self.eigenvalues();
        if evs.len() < 2 {
            0.0
        } else {
            evs[evs.len() - 2].max(0.0)
        }
    }

    /// Orthonormal basis of the range (eigenvalue above `tol`).
    pub fn range_basis(&self, tol: f64) -> Vec<CVector> {
        let (evs, vecs) = match numerics::herm_eig(&self.matrix) {
            Ok(r) => r,
            Err(_) => return vec![],
        };
        (0..evs.len())
            .filter(|&i| evs[i] > tol)
            .map(|i| vecs.column(i).clone_owned())
            .collect()
    }
}

/// k^2 x k^2 matrix of the channel acting on column-vectorized matrices.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    matrix: CMatrix,
    dim: usize,
}

impl SuperOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Apply to a k x k matrix by vectorizing, multiplying, devectorizing.
    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let v = vectorize(x);
        devectorize(&(&self.matrix * v), self.dim)
    }
}

/// Column-stacked vectorization.
pub(crate) fn vectorize(x: &CMatrix) -> CVector {
    let (r, c) = x.shape();
    CVector::from_iterator(r * c, x.iter().copied())
}

pub(crate) fn devectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_iterator(dim, dim, v.iter().copied())
}

/// `vec(v X v^H) = (conj(v) (x) v) vec(X)` for column-stacked vec.
pub fn build_superoperator(m: &KrausMeasure) -> Result<SuperOperator> {
    m.validate(crate::kraus::DEFAULT_VALIDATION_TOL).and_then(|r| {
        if r.passed {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "stochasticity defect {:.3e}",
                r.defect
            )))
        }
    })?;
    let k = m.dim();
    let mut s = CMatrix::zeros(k * k, k * k);
    for el in m.elements() {
        let conj = el.matrix.map(|z| z.conj());
        s += conj.kronecker(&el.matrix) * C64::new(el.weight, 0.0);
    }
    Ok(SuperOperator { matrix: s, dim: k })
}

/// Direct Kraus action `sum_i w_i v_i X v_i^H` on an arbitrary matrix.
pub fn apply_kraus(m: &KrausMeasure, x: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(m.dim(), m.dim());
    for el in m.elements() {
        out += &el.matrix * x * el.matrix.adjoint() * C64::new(el.weight, 0.0);
    }
    out
}

/// One step of the averaged evolution on a density matrix.
pub fn apply_channel(m: &KrausMeasure, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: rho.dim(),
        });
    }
    let out = apply_kraus(m, rho.matrix());
    DensityMatrix::new(numerics::hermitize(&out))
}

/// Result of the uniqueness check for the channel fixed point.
#[derive(Debug, Clone)]
pub struct PhiErgReport {
    /// True when the fixed-point space is one-dimensional, i.e. there is a
    /// unique minimal invariant subspace.
    pub holds: bool,
    /// Orthonormal basis of the minimal invariant subspace E (support of the
    /// invariant state). Empty when `holds` is false.
    pub subspace: Vec<CVector>,
    pub e_is_full: bool,
    /// Dimension of the fixed-point space of the superoperator.
    pub fixed_point_dim: usize,
    /// Supports of the extremal invariant states (one subspace when `holds`).
    pub extremal_supports: Vec<Vec<CVector>>,
}

/// Spectral data of the channel under a unique fixed point.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Superoperator eigenvalues sorted by modulus descending.
    pub eigenvalues: Vec<C64>,
    /// Number of peripheral eigenvalues; under a unique fixed point these are
    /// exactly the m-th roots of unity.
    pub period_m: usize,
    /// Largest modulus among non-peripheral eigenvalues.
    pub gap_lambda: f64,
    pub rho_inv: DensityMatrix,
    /// Orthonormal basis of the minimal invariant subspace.
    pub invariant_subspace: Vec<CVector>,
    pub e_is_full: bool,
    pub fixed_point_dim: usize,
}

impl SpectralReport {
    pub fn to_json(&self) -> serde_json::Value {
        let k = self.rho_inv.dim();
        json!({
            "eigenvalues": self.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "m": self.period_m,
            "lambda": self.gap_lambda,
            "rho_inv": matrix_to_json(self.rho_inv.matrix()),
            "invariant_subspace": self.invariant_subspace.iter()
                .map(|v| (0..k).map(|i| [v[i].re, v[i].im]).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "e_is_full": self.e_is_full,
            "fixed_point_dimension": self.fixed_point_dim,
        })
    }
}

pub fn matrix_to_json(m: &CMatrix) -> serde_json::Value {
    json!((0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

/// Null space of (S - Id): dimension and an orthonormal set of null vectors.
fn fixed_space(sop: &SuperOperator) -> Result<(usize, Vec<CVector>)> {
    let n = sop.matrix.nrows();
    let shifted = &sop.matrix - numerics::identity(n);
    let dec = numerics::svd(&shifted)?;
    let mut vectors = Vec::new();
    for i in 0..n {
        if dec.singular_values[i] < NULL_SPACE_TOL {
            vectors.push(dec.right.column(i).clone_owned());
        }
    }
    Ok((vectors.len(), vectors))
}

/// The unique trace-one PSD fixed point, extracted from a null vector of
/// (S - Id) and re-checked against the Kraus action.
fn invariant_state(m: &KrausMeasure, null_vec: &CVector) -> Result<DensityMatrix> {
    let k = m.dim();
    let x = devectorize(null_vec, k);
    let tr: C64 = (0..k).map(|i| x[(i, i)]).sum();
    if tr.norm() < 1e-12 {
        return Err(Error::NumericalFailure(
            "fixed-point candidate has zero trace".into(),
        ));
    }
    let rho = DensityMatrix::project(&(x / tr))?;
    let residual = numerics::trace_norm(&(apply_kraus(m, rho.matrix()) - rho.matrix()));
    if residual > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "invariant state residual {residual:.3e} exceeds 1e-8"
        )));
    }
    Ok(rho)
}

/// Cesaro averages of channel iterates applied to a Hermitian basis.
/// Returns (numerical rank of the averaged images, achieved residual).
fn cesaro_fixed_dim(m: &KrausMeasure, max_iter: usize) -> Result<(usize, f64)> {
    let k = m.dim();
    let mut basis: Vec<CMatrix> = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let mut b = CMatrix::zeros(k, k);
            if i == j {
                b[(i, i)] = C64::new(1.0, 0.0);
            } else if i < j {
                b[(i, j)] = C64::new(0.5, 0.0);
                b[(j, i)] = C64::new(0.5, 0.0);
            } else {
                b[(j, i)] = C64::new(0.0, 0.5);
                b[(i, j)] = C64::new(0.0, -0.5);
            }
            basis.push(b);
        }
    }
    let mut iterates = basis.clone();
    let mut averages = basis.clone();
    let mut prev_snapshot: Option<Vec<CMatrix>> = None;
    let mut count = 1usize;
    let mut residual = f64::INFINITY;
    let mut next_check = 64usize;
    while count < max_iter {
        for (it, avg) in iterates.iter_mut().zip(averages.iter_mut()) {
            *it = apply_kraus(m, it);
            *avg += &*it;
        }
        count += 1;
        if count >= next_check {
            let snapshot: Vec<CMatrix> = averages
                .iter()
                .map(|a| a / C64::new(count as f64, 0.0))
                .collect();
            if let Some(prev) = &prev_snapshot {
                residual = snapshot
                    .iter()
                    .zip(prev.iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                if residual < 1e-7 {
                    prev_snapshot = Some(snapshot);
                    break;
                }
            }
            prev_snapshot = Some(snapshot);
            next_check *= 2;
        }
    }
    let snapshot = prev_snapshot.ok_or_else(|| {
        Error::NumericalFailure("Cesaro averaging produced no snapshot".into())
    })?;
    if residual > 1e-4 {
        return Err(Error::NumericalFailure(format!(
            "Cesaro averaging did not stabilize within {max_iter} iterations \
             (residual {residual:.3e})"
        )));
    }
    // numerical rank of the span of the averaged images
    let mut stack = CMatrix::zeros(k * k, k * k);
    for (j, a) in snapshot.iter().enumerate() {
        stack.set_column(j, &vectorize(a));
    }
    let sv = stack.singular_values();
    let cut = (1e-3 * sv[0].max(1e-30)).max(10.0 * residual);
    let rank = sv.iter().filter(|&&s| s > cut).count();
    Ok((rank, residual))
}

/// Smallest subspace containing `start` and invariant under every Kraus
/// matrix, as an orthonormal basis.
fn invariant_closure(m: &KrausMeasure, start: &CVector) -> Vec<CVector> {
    let mut basis: Vec<CVector> = Vec::new();
    let push = |basis: &mut Vec<CVector>, v: &CVector| -> bool {
        let mut w = v.clone();
        for b in basis.iter() {
            let coef = b.dotc(&w);
            w -= b * coef;
        }
        let n = w.norm();
        if n > 1e-10 {
            basis.push(w / C64::new(n, 0.0));
            true
        } else {
            false
        }
    };
    push(&mut basis, start);
    let mut frontier = basis.clone();
    while !frontier.is_empty() && basis.len() < m.dim() {
        let mut next = Vec::new();
        for v in &frontier {
            for el in m.elements() {
                if el.weight == 0.0 {
                    continue;
                }
                let image = &el.matrix * v;
                if image.norm() > 1e-12 && push(&mut basis, &image) {
                    next.push(basis.last().unwrap().clone());
                }
            }
        }
        frontier = next;
    }
    basis
}

fn subspace_contains(big: &[CVector], small: &[CVector]) -> bool {
    small.iter().all(|v| {
        let mut w = v.clone();
        for b in big {
            let coef = b.dotc(&w);
            w -= b * coef;
        }
        w.norm() < 1e-8
    })
}

/// Minimal invariant subspaces reachable from the standard basis and from
/// the ranges of the Cesaro fixed points. Best-effort list, capped at k.
fn minimal_invariant_subspaces(m: &KrausMeasure, seeds: &[CVector]) -> Vec<Vec<CVector>> {
    let k = m.dim();
    let mut closures: Vec<Vec<CVector>> = Vec::new();
    let mut starts: Vec<CVector> = Vec::new();
    for i in 0..k {
        let mut e = CVector::zeros(k);
        e[i] = C64::new(1.0, 0.0);
        starts.push(e);
    }
    starts.extend_from_slice(seeds);
    for s in &starts {
        if s.norm() < 1e-12 {
            continue;
        }
        closures.push(invariant_closure(m, s));
    }
    // keep only minimal closures, dedupe
    let mut minimal: Vec<Vec<CVector>> = Vec::new();
    closures.sort_by_key(|c| c.len());
    for c in closures {
        let redundant = minimal.iter().any(|kept| subspace_contains(&c, kept));
        if !redundant {
            minimal.push(c);
        }
        if minimal.len() >= k {
            break;
        }
    }
    minimal
}

/// Check whether the channel has a unique fixed point (equivalently a unique
/// minimal invariant subspace). The fixed-point dimension is the null-space
/// dimension of (superoperator - Id), cross-checked by Cesaro averaging.
pub fn check_phi_erg(m: &KrausMeasure) -> Result<PhiErgReport> {
    let sop = build_superoperator(m)?;
    let (d_null, null_vectors) = fixed_space(&sop)?;
    if d_null == 0 {
        return Err(Error::NumericalFailure(
            "no eigenvalue near 1: the superoperator has an empty numerical \
             null space for (S - Id)"
                .into(),
        ));
    }
    let (d_cesaro, residual) = cesaro_fixed_dim(m, 200_000)?;
    if d_cesaro != d_null {
        return Err(Error::NumericalFailure(format!(
            "fixed-point dimension estimates disagree: null space gives {d_null}, \
             Cesaro averaging gives {d_cesaro} (residual {residual:.3e})"
        )));
    }
    let holds = d_null == 1;
    if holds {
        let rho = invariant_state(m, &null_vectors[0])?;
        let subspace = rho.range_basis(1e-8);
        let e_is_full = subspace.len() == m.dim();
        return Ok(PhiErgReport {
            holds,
            e_is_full,
            fixed_point_dim: d_null,
            extremal_supports: vec![subspace.clone()],
            subspace,
        });
    }
    // multiple fixed points: report the minimal invariant subspaces found
    let seeds: Vec<CVector> = null_vectors
        .iter()
        .flat_map(|nv| {
            let x = devectorize(nv, m.dim());
            let h = numerics::hermitize(&x);
            match numerics::herm_eig(&h) {
                Ok((evs, vecs)) => (0..evs.len())
                    .filter(|&i| evs[i].abs() > 1e-6)
                    .map(|i| vecs.column(i).clone_owned())
                    .collect::<Vec<_>>(),
                Err(_) => vec![],
            }
        })
        .collect();
    let supports = minimal_invariant_subspaces(m, &seeds);
    Ok(PhiErgReport {
        holds: false,
        subspace: vec![],
        e_is_full: false,
        fixed_point_dim: d_null,
        extremal_supports: supports,
    })
}

/// Full spectral analysis. Requires a unique fixed point; otherwise fails
/// with the fixed-point dimension attached.
pub fn analyze(m: &KrausMeasure, peripheral_tol: f64) -> Result<SpectralReport> {
    if !(peripheral_tol > 0.0 && peripheral_tol < 1.0) {
        return Err(Error::InvalidParameter(
            "peripheral tolerance must lie in (0, 1)".into(),
        ));
    }
    let sop = build_superoperator(m)?;
    let eigenvalues = numerics::eigenvalues(&sop.matrix)?;
    let top = eigenvalues[0].norm();
    if (top - 1.0).abs() > 1e-7 {
        return Err(Error::NumericalFailure(format!(
            "no eigenvalue near 1: largest modulus is {top}"
        )));
    }
    let erg = check_phi_erg(m)?;
    if !erg.holds {
        return Err(Error::MultipleFixedPoints {
            dim: erg.fixed_point_dim,
        });
    }
    let period_m = eigenvalues
        .iter()
        .filter(|z| z.norm() >= 1.0 - peripheral_tol)
        .count()
        .max(1);
    let gap_lambda = eigenvalues
        .iter()
        .map(|z| z.norm())
        .filter(|&n| n < 1.0 - peripheral_tol)
        .fold(0.0, f64::max);
    let (_, null_vectors) = fixed_space(&sop)?;
    let rho_inv = invariant_state(m, &null_vectors[0])?;
    Ok(SpectralReport {
        eigenvalues,
        period_m,
        gap_lambda,
        rho_inv,
        invariant_subspace: erg.subspace,
        e_is_full: erg.e_is_full,
        fixed_point_dim: erg.fixed_point_dim,
    })
}
