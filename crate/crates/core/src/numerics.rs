//! Dense complex linear algebra on small matrices (k <= ~16).
//!
//! Thin layer over nalgebra's complex decompositions with the phase and
//! ordering conventions the rest of the crate relies on: singular values
//! non-increasing, Hermitian eigenvalues ascending, and right singular
//! vectors / eigenvectors phase-fixed so that the first nonzero component
//! is real positive.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance budget for decompositions at k <= 16.
pub const DECOMP_TOL: f64 = 1e-10;

/// Floor applied to singular values before taking logarithms downstream.
pub const SV_LOG_FLOOR: f64 = 1e-300;

/// Singular value decomposition `A = left * diag(singular_values) * right^H`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Unitary matrix of left singular vectors (columns).
    pub left: CMatrix,
    /// Non-increasing, non-negative singular values.
    pub singular_values: Vec<f64>,
    /// Unitary matrix of right singular vectors (columns), phase-fixed.
    pub right: CMatrix,
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_square_finite(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if !is_finite(a) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Multiply `v` by the phase that makes its first component of modulus
/// above `1e-12` real positive. No-op on the zero vector.
pub fn phase_fix_vector(v: &mut CVector) {
    let pivot = v.iter().find(|z| z.norm() > 1e-12).copied();
    let pivot = match pivot {
        Some(z) => z,
        None => match v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
            Some(z) if z.norm() > 0.0 => *z,
            _ => return,
        },
    };
    let phase = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// SVD of a square matrix with sorted singular values.
///
/// Column phases are fixed on the right singular vectors; the matching left
/// columns absorb the conjugate phase so `left * diag * right^H` still
/// reconstructs `A`.
pub fn svd(a: &CMatrix) -> Result<SvdResult> {
    check_square_finite(a)?;
    let k = a.nrows();
    let dec = a.clone().svd(true, true);
    let mut left = dec.u.ok_or_else(|| Error::NumericalFailure("svd: no U".into()))?;
    let mut right = dec
        .v_t
        .ok_or_else(|| Error::NumericalFailure("svd: no V".into()))?
        .adjoint();
    let singular_values: Vec<f64> = dec.singular_values.iter().copied().collect();
    debug_assert!(singular_values.windows(2).all(|w| w[0] >= w[1]));
    for j in 0..k {
        // fix the phase on the right column and replay the same multiplier on
        // the left column, so left * diag * right^H is unchanged
        let pivot = {
            let col = right.column(j);
            col[find_pivot(&col.clone_owned())]
        };
        if pivot.norm() == 0.0 {
            continue;
        }
        let mult = pivot.conj() / pivot.norm();
        let rcol = right.column(j) * mult;
        right.set_column(j, &rcol);
        let lcol = left.column(j) * mult;
        left.set_column(j, &lcol);
    }
    Ok(SvdResult {
        left,
        singular_values,
        right,
    })
}

fn find_pivot(v: &CVector) -> usize {
    v.iter()
        .position(|z| z.norm() > 1e-12)
        .unwrap_or_else(|| {
            v.iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.norm().total_cmp(&b.norm()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
}

/// Polar decomposition `A = U * P` with `P = (A^H A)^{1/2}` positive
/// semidefinite. For singular `A` the unitary factor is the canonical
/// completion `U = U_svd * V_svd^H`.
pub fn polar(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let dec = svd(a)?;
    let u = &dec.left * dec.right.adjoint();
    let sigma = CMatrix::from_diagonal(&DVector::from_iterator(
        dec.singular_values.len(),
        dec.singular_values.iter().map(|&s| C64::new(s, 0.0)),
    ));
    let p = &dec.right * sigma * dec.right.adjoint();
    Ok((u, hermitize(&p)))
}

/// Largest two singular values `(a1, a2)`; their product is the norm of the
/// induced operator on antisymmetric 2-forms.
pub fn top_two_singular_values(a: &CMatrix) -> Result<(f64, f64)> {
    check_square_finite(a)?;
    if a.nrows() < 2 {
        return Err(Error::InvalidInput(
            "top_two_singular_values requires k >= 2".into(),
        ));
    }
    let sv = a.clone().singular_values();
    Ok((sv[0], sv[1]))
}

/// Operator norm (largest singular value).
pub fn operator_norm(a: &CMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if a.nrows() == 2 && a.ncols() == 2 {
        // closed form from the eigenvalues of A^H A
        let g00 = a[(0, 0)].norm_sqr() + a[(1, 0)].norm_sqr();
        let g11 = a[(0, 1)].norm_sqr() + a[(1, 1)].norm_sqr();
        let g01 = a[(0, 0)].conj() * a[(0, 1)] + a[(1, 0)].conj() * a[(1, 1)];
        let mean = 0.5 * (g00 + g11);
        let disc = (0.5 * (g00 - g11)).powi(2) + g01.norm_sqr();
        return (mean + disc.sqrt()).max(0.0).sqrt();
    }
    a.clone().singular_values()[0]
}

/// Trace norm `tr |A|` (sum of singular values).
pub fn trace_norm(a: &CMatrix) -> f64 {
    a.clone().singular_values().iter().sum()
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending,
/// eigenvector columns unitary and phase-fixed.
pub fn herm_eig(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    check_square_finite(h)?;
    let dev = (h - h.adjoint()).norm();
    if dev > 1e-10 * h.norm().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "herm_eig: matrix is not Hermitian (deviation {dev:.3e})"
        )));
    }
    let k = h.nrows();
    let dec = nalgebra::SymmetricEigen::new(hermitize(h));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[i].total_cmp(&dec.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = dec.eigenvectors.column(src).clone_owned();
        phase_fix_vector(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok((eigenvalues, vectors))
}

/// Eigenvalues of a general square complex matrix, sorted by modulus
/// descending (ties broken by real then imaginary part, descending).
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    check_square_finite(a)?;
    let (_, t) = a.clone().schur().unpack();
    let mut evs: Vec<C64> = (0..a.nrows()).map(|i| t[(i, i)]).collect();
    evs.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then(y.re.total_cmp(&x.re))
            .then(y.im.total_cmp(&x.im))
    });
    Ok(evs)
}

/// Identity matrix of size k.
pub fn identity(k: usize) -> CMatrix {
    CMatrix::identity(k, k)
}
