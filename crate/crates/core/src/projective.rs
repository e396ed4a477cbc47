//! Points of the complex projective space P(C^k), the metric
//! `d(x,y) = sqrt(1 - |<x,y>|^2)`, matrix action on rays, and sampling from
//! the unitarily invariant (Fubini-Study) measure.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{phase_fix_vector, C64, CMatrix, CVector};

/// Norm threshold below which a vector counts as annihilated. Far below any
/// norm reachable under the renormalized product scheme.
pub const ANNIHILATION_THRESHOLD: f64 = 1e-150;

/// A ray in C^k, stored as a unit vector whose first nonzero component is
/// real positive.
#[derive(Debug, Clone)]
pub struct ProjectivePoint {
    vector: CVector,
}

impl ProjectivePoint {
    /// Normalize a nonzero vector and fix its phase.
    pub fn from_vector(x: CVector) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidInput("empty vector".into()));
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("vector has non-finite entries".into()));
        }
        let norm = x.norm();
        if norm <= ANNIHILATION_THRESHOLD {
            return Err(Error::ZeroVector);
        }
        let mut v = x / C64::new(norm, 0.0);
        phase_fix_vector(&mut v);
        Ok(Self { vector: v })
    }

    pub fn from_slice(components: &[C64]) -> Result<Self> {
        Self::from_vector(CVector::from_row_slice(components))
    }

    /// Standard basis ray e_i.
    pub fn basis(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut v = CVector::zeros(dim);
        v[i] = C64::new(1.0, 0.0);
        Self { vector: v }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// The stored unit representative.
    pub fn coeffs(&self) -> &CVector {
        &self.vector
    }

    /// Rank-one projector onto the ray.
    pub fn projector(&self) -> CMatrix {
        let v = &self.vector;
        CMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }

    /// The metric `d(x,y) = sqrt(1 - |<x,y>|^2)`, in [0, 1].
    pub fn distance(&self, other: &ProjectivePoint) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(distance_unchecked(self, other))
    }
}

/// For unit representatives the metric equals the norm of the wedge product,
/// `d = (sum_{i<j} |x_i y_j - x_j y_i|^2)^(1/2)`, which does not lose
/// precision near coincident rays the way `sqrt(1 - |<x,y>|^2)` does.
/// Distances below 1e-15 collapse to zero: representatives are unit vectors
/// carrying O(eps) rounding, so rays that close are the same ray.
#[inline]
pub(crate) fn distance_unchecked(a: &ProjectivePoint, b: &ProjectivePoint) -> f64 {
    let x = &a.vector;
    let y = &b.vector;
    let k = x.len();
    let mut acc = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            acc += (x[i] * y[j] - x[j] * y[i]).norm_sqr();
        }
    }
    let d = acc.sqrt();
    if d < 1e-15 {
        0.0
    } else {
        d.min(1.0)
    }
}

/// Action of a matrix on a ray: the ray of `A x`.
pub fn apply(a: &CMatrix, x: &ProjectivePoint) -> Result<ProjectivePoint> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.ncols() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: a.ncols(),
        });
    }
    let y = a * x.coeffs();
    if y.norm() <= ANNIHILATION_THRESHOLD {
        return Err(Error::Annihilation);
    }
    ProjectivePoint::from_vector(y)
}

/// Draw a ray from the unitarily invariant measure on P(C^k): the ray of a
/// standard complex Gaussian vector.
pub fn sample_fubini_study<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ProjectivePoint {
    assert!(dim >= 1, "projective space needs dimension >= 1");
    loop {
        let v = CVector::from_fn(dim, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        if let Ok(p) = ProjectivePoint::from_vector(v) {
            return p;
        }
    }
}
