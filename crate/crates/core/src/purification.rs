//! Checkers for the purification property: does every orthogonal projector
//! pi of rank >= 2 fail to compress all word products `v_w^H v_w` to
//! scalars? Deterministic word enumeration decides the question completely
//! for k = 2 and semi-decides it for k >= 3; a Monte Carlo fallback tracks
//! the spectrum of the product martingale. A contractivity diagnostic
//! samples the singular value ratio of the normalized products.

use serde_json::json;

use crate::channel::DensityMatrix;
use crate::error::{Error, Result};
use crate::kraus::KrausMeasure;
use crate::numerics::{self, C64, CMatrix, CVector};
use crate::stats;
use crate::trajectory::{run_ensemble, EnsembleSpec, StartState, WORD_ENUMERATION_BUDGET};

/// Relative Frobenius tolerance for the proportionality test
/// `pi A pi = lambda pi`.
pub const PROPORTIONALITY_TOL: f64 = 1e-8;

/// A Monte Carlo run reports purification when the median second eigenvalue
/// of the martingale ends below this level.
pub const MC_LAMBDA2_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PurVerdict {
    /// A rank >= 2 projector compressing every enumerated word was found.
    Violated,
    /// Enumeration proves the property (complete for k = 2; span-based
    /// sufficient test for k >= 3).
    HoldsCertified,
    /// Monte Carlo evidence only.
    HoldsLikely,
    Inconclusive,
}

/// Per-checkpoint decay of the second-largest martingale eigenvalue.
#[derive(Debug, Clone)]
pub struct DecayRecord {
    pub checkpoints: Vec<usize>,
    pub median_lambda2: Vec<f64>,
    pub p90_lambda2: Vec<f64>,
    pub fit: Option<stats::LinearFit>,
}

#[derive(Debug, Clone)]
pub struct PurReport {
    pub verdict: PurVerdict,
    /// Compressing projector when the verdict is `Violated`.
    pub witness: Option<CMatrix>,
    pub word_length_checked: usize,
    pub mc_statistics: Option<DecayRecord>,
}

impl PurReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "verdict": serde_json::to_value(self.verdict).unwrap(),
            "witness": self.witness.as_ref().map(crate::channel::matrix_to_json),
            "word_length_checked": self.word_length_checked,
            "decay": self.mc_statistics.as_ref().map(|d| json!({
                "n": d.checkpoints,
                "median_lambda2": d.median_lambda2,
                "p90_lambda2": d.p90_lambda2,
                "fit": d.fit,
            })),
        })
    }

    /// Decay table as CSV text (columns n, median_lambda2, p90_lambda2).
    pub fn decay_csv(&self) -> Option<String> {
        let d = self.mc_statistics.as_ref()?;
        let mut out = String::from("n,median_lambda2,p90_lambda2\n");
        for ((n, med), p90) in d.checkpoints.iter().zip(&d.median_lambda2).zip(&d.p90_lambda2) {
            out.push_str(&format!("{n},{med},{p90}\n"));
        }
        Some(out)
    }
}

/// `|| pi A pi - lambda pi || <= tol * ||A||` for the best scalar lambda?
fn compresses_to_scalar(pi: &CMatrix, a: &CMatrix, tol: f64) -> bool {
    let rank = {
        let tr: C64 = (0..pi.nrows()).map(|i| pi[(i, i)]).sum();
        tr.re
    };
    let pap = pi * a * pi;
    let lambda = {
        let tr: C64 = (0..pap.nrows()).map(|i| pap[(i, i)]).sum();
        tr / C64::new(rank, 0.0)
    };
    (pap - pi * lambda).norm() <= tol * a.norm().max(1e-300)
}

fn is_proportional_to_identity(a: &CMatrix, tol: f64) -> bool {
    let k = a.nrows();
    let tr: C64 = (0..k).map(|i| a[(i, i)]).sum();
    let lambda = tr / C64::new(k as f64, 0.0);
    (a - numerics::identity(k) * lambda).norm() <= tol * a.norm().max(1e-300)
}

/// All word products `v_w^H v_w` for words up to `max_len` over the
/// positive-weight elements, depth-first.
fn enumerate_word_grams(measure: &KrausMeasure, max_len: usize) -> Result<Vec<CMatrix>> {
    let e = measure
        .elements()
        .iter()
        .filter(|el| el.weight > 0.0)
        .count()
        .max(1);
    if (e as f64).powi(max_len as i32) > WORD_ENUMERATION_BUDGET as f64 {
        return Err(Error::Budget(format!(
            "{e}^{max_len} words exceed the enumeration budget of {WORD_ENUMERATION_BUDGET}; \
             use the Monte Carlo checker instead"
        )));
    }
    let mut grams = Vec::new();
    let mut stack: Vec<(CMatrix, usize)> = vec![(numerics::identity(measure.dim()), 0)];
    while let Some((product, depth)) = stack.pop() {
        if depth > 0 {
            grams.push(product.adjoint() * &product);
        }
        if depth < max_len {
            for el in measure.elements() {
                if el.weight > 0.0 {
                    stack.push((&el.matrix * &product, depth + 1));
                }
            }
        }
    }
    Ok(grams)
}

/// Real dimension of the span of a family of Hermitian matrices.
fn hermitian_span_rank(grams: &[CMatrix], dim: usize) -> usize {
    // coordinates in the orthonormal Hermitian basis; real entries
    let ncoord = dim * dim;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(grams.len());
    for g in grams {
        let mut coords = Vec::with_capacity(ncoord);
        for i in 0..dim {
            coords.push(g[(i, i)].re);
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                coords.push(std::f64::consts::SQRT_2 * g[(i, j)].re);
                coords.push(std::f64::consts::SQRT_2 * g[(i, j)].im);
            }
        }
        rows.push(coords);
    }
    // rank via SVD of the real matrix embedded as complex
    let m = CMatrix::from_fn(rows.len(), ncoord, |i, j| C64::new(rows[i][j], 0.0));
    let sv = m.singular_values();
    let cut = 1e-10 * sv.iter().fold(1.0f64, |a, &b| a.max(b));
    sv.iter().filter(|&&s| s > cut).count()
}

/// Refine candidate subspaces against one more Hermitian matrix: keep the
/// rank >= 2 subspaces on which the compression acts as a scalar.
fn refine_candidates(candidates: Vec<CMatrix>, a: &CMatrix, tol: f64) -> Vec<CMatrix> {
    let mut out = Vec::new();
    for basis in candidates {
        let sub_dim = basis.ncols();
        let compressed = basis.adjoint() * a * &basis;
        let (evs, vecs) = match numerics::herm_eig(&numerics::hermitize(&compressed)) {
            Ok(r) => r,
            Err(_) => continue,
        };
        // cluster eigenvalues within tol * ||A||
        let scale = a.norm().max(1.0);
        let mut start = 0;
        while start < sub_dim {
            let mut end = start + 1;
            while end < sub_dim && (evs[end] - evs[end - 1]).abs() <= tol * scale {
                end += 1;
            }
            if end - start >= 2 {
                let mut cluster = CMatrix::zeros(basis.nrows(), end - start);
                for (c, idx) in (start..end).enumerate() {
                    cluster.set_column(c, &(&basis * vecs.column(idx)));
                }
                out.push(cluster);
            }
            start = end;
        }
    }
    out
}

/// Deterministic checker by word enumeration.
///
/// For k = 2 the answer is complete: the only rank-2 projector is the
/// identity, and all words are proportional to the identity iff all
/// single letters are, so the verdict is `Violated` exactly in that case
/// and `HoldsCertified` otherwise.
///
/// For k >= 3 the checker is a semi-decision: a joint near-eigenspace of
/// dimension >= 2 shared by every enumerated word gram certifies
/// `Violated` (with the witness projector); a full-dimensional Hermitian
/// span of the grams certifies `HoldsCertified`; anything else is
/// `Inconclusive`.
pub fn check_pur_words(measure: &KrausMeasure, max_len: usize, tol: f64) -> Result<PurReport> {
    if max_len == 0 {
        return Err(Error::InvalidParameter("max_len must be at least 1".into()));
    }
    measure.validate(crate::kraus::DEFAULT_VALIDATION_TOL)?;
    let k = measure.dim();
    if k == 1 {
        // no rank >= 2 projector exists
        return Ok(PurReport {
            verdict: PurVerdict::HoldsCertified,
            witness: None,
            word_length_checked: 0,
            mc_statistics: None,
        });
    }
    let grams = enumerate_word_grams(measure, max_len)?;
    let all_scalar = grams.iter().all(|g| is_proportional_to_identity(g, tol));
    if all_scalar {
        // scalar letters force scalar words of every length
        let witness = numerics::identity(k);
        verify_witness(measure, &witness, max_len, tol)?;
        return Ok(PurReport {
            verdict: PurVerdict::Violated,
            witness: Some(witness),
            word_length_checked: max_len,
            mc_statistics: None,
        });
    }
    if k == 2 {
        return Ok(PurReport {
            verdict: PurVerdict::HoldsCertified,
            witness: None,
            word_length_checked: max_len,
            mc_statistics: None,
        });
    }

    // k >= 3: joint eigenspace search for a violation witness
    let first_nonscalar = grams
        .iter()
        .find(|g| !is_proportional_to_identity(g, tol))
        .expect("there is a non-scalar gram");
    let (evs, vecs) = numerics::herm_eig(&numerics::hermitize(first_nonscalar))?;
    let scale = first_nonscalar.norm().max(1.0);
    let mut candidates: Vec<CMatrix> = Vec::new();
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (evs[end] - evs[end - 1]).abs() <= tol * scale {
            end += 1;
        }
        if end - start >= 2 {
            let mut cluster = CMatrix::zeros(k, end - start);
            for (c, idx) in (start..end).enumerate() {
                cluster.set_column(c, &vecs.column(idx).clone_owned());
            }
            candidates.push(cluster);
        }
        start = end;
    }
    for g in &grams {
        if candidates.is_empty() {
            break;
        }
        candidates = refine_candidates(candidates, g, tol);
    }
    if let Some(basis) = candidates.first() {
        let witness = basis * basis.adjoint();
        if verify_witness(measure, &witness, max_len, tol).is_ok() {
            return Ok(PurReport {
                verdict: PurVerdict::Violated,
                witness: Some(witness),
                word_length_checked: max_len,
                mc_statistics: None,
            });
        }
    }

    if hermitian_span_rank(&grams, k) == k * k {
        return Ok(PurReport {
            verdict: PurVerdict::HoldsCertified,
            witness: None,
            word_length_checked: max_len,
            mc_statistics: None,
        });
    }
    Ok(PurReport {
        verdict: PurVerdict::Inconclusive,
        witness: None,
        word_length_checked: max_len,
        mc_statistics: None,
    })
}

/// Re-verify a witness projector against all enumerated words plus 100
/// random longer words.
fn verify_witness(measure: &KrausMeasure, pi: &CMatrix, max_len: usize, tol: f64) -> Result<()> {
    for g in enumerate_word_grams(measure, max_len.min(4))? {
        if !compresses_to_scalar(pi, &g, tol.max(PROPORTIONALITY_TOL)) {
            return Err(Error::NumericalFailure(
                "witness fails on an enumerated word".into(),
            ));
        }
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9157);
    let positive: Vec<&CMatrix> = measure
        .elements()
        .iter()
        .filter(|el| el.weight > 0.0)
        .map(|el| &el.matrix)
        .collect();
    for _ in 0..100 {
        let len = max_len + 1 + (rng.random::<u32>() as usize % (max_len + 4));
        let mut product = numerics::identity(measure.dim());
        for _ in 0..len {
            let pick = rng.random::<u32>() as usize % positive.len();
            product = positive[pick] * product;
        }
        let gram = product.adjoint() * &product;
        if !compresses_to_scalar(pi, &gram, tol.max(PROPORTIONALITY_TOL)) {
            return Err(Error::NumericalFailure(
                "witness fails on a random long word".into(),
            ));
        }
    }
    Ok(())
}

fn mc_checkpoints(n_steps: usize) -> Vec<usize> {
    if n_steps <= 200 {
        (1..=n_steps).collect()
    } else {
        let mut v: Vec<usize> = (1..=100).map(|i| i * n_steps / 100).collect();
        v.dedup();
        v
    }
}

/// Monte Carlo purification check: track the median and 90th percentile of
/// the second-largest martingale eigenvalue along density-mode trajectories
/// started from the maximally mixed state.
pub fn check_pur_montecarlo(
    measure: &KrausMeasure,
    n_steps: usize,
    n_traj: usize,
    seed: u64,
) -> Result<PurReport> {
    if n_steps == 0 || n_traj == 0 {
        return Err(Error::InvalidParameter("n_steps and n_traj must be positive".into()));
    }
    let checkpoints = mc_checkpoints(n_steps);
    let spec = EnsembleSpec {
        n_traj,
        seed,
        window_start: 0,
        start: StartState::Density(DensityMatrix::maximally_mixed(measure.dim())),
        threads: None,
    };
    let rows: Vec<Vec<f64>> = run_ensemble(measure, &spec, |_, state| {
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut next = 0;
        for step in 1..=n_steps {
            state.step(measure)?;
            if next < checkpoints.len() && checkpoints[next] == step {
                out.push(state.martingale_second_eigenvalue()?);
                next += 1;
            }
        }
        Ok(out)
    })?;

    let mut median_lambda2 = Vec::with_capacity(checkpoints.len());
    let mut p90_lambda2 = Vec::with_capacity(checkpoints.len());
    for c in 0..checkpoints.len() {
        let column: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        median_lambda2.push(stats::median(&column));
        p90_lambda2.push(stats::percentile(&column, 90.0));
    }

    // fit log(median) over checkpoints with a meaningful median
    let fit_points: Vec<(f64, f64)> = checkpoints
        .iter()
        .zip(&median_lambda2)
        .filter(|(_, &m)| m > 1e-14)
        .map(|(&n, &m)| (n as f64, m.max(numerics::SV_LOG_FLOOR).ln()))
        .collect();
    let xs: Vec<f64> = fit_points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
    let fit = stats::linear_fit(&xs, &ys);

    let final_median = *median_lambda2.last().unwrap();
    let collapsed = median_lambda2.iter().any(|&m| m <= 1e-14);
    let decaying = fit
        .map(|f| f.slope < 0.0 && f.r_squared > 0.9)
        .unwrap_or(false);
    let verdict = if final_median < MC_LAMBDA2_TOL && (decaying || collapsed) {
        PurVerdict::HoldsLikely
    } else {
        PurVerdict::Inconclusive
    };
    Ok(PurReport {
        verdict,
        witness: None,
        word_length_checked: 0,
        mc_statistics: Some(DecayRecord {
            checkpoints,
            median_lambda2,
            p90_lambda2,
            fit,
        }),
    })
}

/// Singular-value ratio statistics of the normalized products at `n_steps`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ContractivityReport {
    pub n_steps: usize,
    pub ratio_min: f64,
    pub ratio_median: f64,
    /// Per-trajectory `a_2(W_n) / a_1(W_n)` samples, in trajectory order.
    pub ratio_samples: Vec<f64>,
}

/// Sample `a_2/a_1` of the normalized product along trajectories from the
/// maximally mixed state; ratios near zero witness a contracting sequence.
pub fn contractivity_diagnostic(
    measure: &KrausMeasure,
    n_steps: usize,
    n_traj: usize,
    seed: u64,
) -> Result<ContractivityReport> {
    if n_steps == 0 || n_traj == 0 {
        return Err(Error::InvalidParameter("n_steps and n_traj must be positive".into()));
    }
    let spec = EnsembleSpec {
        n_traj,
        seed,
        window_start: 0,
        start: StartState::Density(DensityMatrix::maximally_mixed(measure.dim())),
        threads: None,
    };
    let ratio_samples: Vec<f64> = run_ensemble(measure, &spec, |_, state| {
        state.run(measure, n_steps)?;
        let (a1, a2) = numerics::top_two_singular_values(state.product())?;
        Ok(if a1 > 0.0 { a2 / a1 } else { 0.0 })
    })?;
    Ok(ContractivityReport {
        n_steps,
        ratio_min: ratio_samples.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_median: stats::median(&ratio_samples),
        ratio_samples,
    })
}

/// Orthonormal columns spanning the joint eigenspace candidates, exposed for
/// experiment gating.
pub fn subspace_projector(basis: &[CVector]) -> CMatrix {
    let k = basis.first().map(|v| v.len()).unwrap_or(0);
    let mut p = CMatrix::zeros(k, k);
    for v in basis {
        p += CMatrix::from_fn(k, k, |i, j| v[i] * v[j].conj());
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kraus::{amplitude_damping, builtin};
    use approx::assert_abs_diff_eq;

    #[test]
    fn words_unitary_model_violated_with_identity_witness() {
        let m = builtin("appc_example2").unwrap();
        let report = check_pur_words(&m, 3, PROPORTIONALITY_TOL).unwrap();
        assert_eq!(report.verdict, PurVerdict::Violated);
        let w = report.witness.unwrap();
        assert!((w - numerics::identity(2)).norm() < 1e-10);
    }

    #[test]
    fn words_certify_damping_models_at_length_one() {
        for m in [
            amplitude_damping(0.3).unwrap(),
            builtin("flip_flop").unwrap(),
            builtin("rotating_damping").unwrap(),
        ] {
            let report = check_pur_words(&m, 1, PROPORTIONALITY_TOL).unwrap();
            assert_eq!(report.verdict, PurVerdict::HoldsCertified, "{:?}", m.name());
        }
    }

    #[test]
    fn words_budget_guard() {
        let m = builtin("flip_flop").unwrap();
        assert!(matches!(
            check_pur_words(&m, 25, PROPORTIONALITY_TOL),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn words_detect_block_structure_k4() {
        // block diagonal unitary-times-scalar structure on C^4:
        // v = u (x) Id_2 with u in SU(2) gives pi = x (x) Id invariant
        use crate::kraus::KrausElement;
        let u1 = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.0, 1.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, -1.0),
            ],
        );
        let u2 = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, 0.0),
            ],
        );
        let d1 = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.9, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.45, 0.0),
            ],
        );
        let d2 = {
            let (st, ct) = (std::f64::consts::PI / 5.0).sin_cos();
            let rot = CMatrix::from_row_slice(
                2,
                2,
                &[C64::new(ct, 0.0), C64::new(-st, 0.0), C64::new(st, 0.0), C64::new(ct, 0.0)],
            );
            let damp = CMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new((1.0f64 - 0.81).sqrt(), 0.0),
                    C64::new(0.0, 0.0),
                    C64::new(0.0, 0.0),
                    C64::new((1.0f64 - 0.2025).sqrt(), 0.0),
                ],
            );
            rot * damp
        };
        // Kraus family on C^4 = C^2 (x) C^2: d_i (x) u_i ; the second factor
        // is unitary so pi = (pure state) (x) Id_2 compresses all grams
        let m = KrausMeasure::new(
            4,
            vec![
                KrausElement { weight: 1.0, matrix: d1.kronecker(&u1) },
                KrausElement { weight: 1.0, matrix: d2.kronecker(&u2) },
            ],
            None,
        )
        .unwrap();
        assert!(m.validate(1e-9).unwrap().passed);
        let report = check_pur_words(&m, 3, PROPORTIONALITY_TOL).unwrap();
        assert_eq!(report.verdict, PurVerdict::Violated);
        let w = report.witness.unwrap();
        // witness is a rank >= 2 projector
        let (evs, _) = numerics::herm_eig(&w).unwrap();
        let rank = evs.iter().filter(|&&e| e > 0.5).count();
        assert!(rank >= 2, "witness rank {rank}");
    }

    #[test]
    fn montecarlo_rotating_damping_purifies() {
        let m = builtin("rotating_damping").unwrap();
        let report = check_pur_montecarlo(&m, 50, 200, 1234).unwrap();
        assert_eq!(report.verdict, PurVerdict::HoldsLikely);
        let d = report.mc_statistics.unwrap();
        assert!(*d.median_lambda2.last().unwrap() < 1e-6);
    }

    #[test]
    fn montecarlo_unitary_plateau() {
        let m = builtin("appc_example2").unwrap();
        let report = check_pur_montecarlo(&m, 30, 50, 77).unwrap();
        assert_eq!(report.verdict, PurVerdict::Inconclusive);
        let d = report.mc_statistics.unwrap();
        for med in d.median_lambda2 {
            assert_abs_diff_eq!(med, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn montecarlo_amplitude_damping_decays() {
        let m = amplitude_damping(0.3).unwrap();
        let report = check_pur_montecarlo(&m, 60, 100, 4321).unwrap();
        assert_eq!(report.verdict, PurVerdict::HoldsLikely);
    }

    #[test]
    fn checkers_never_contradict() {
        for name in ["appc_example1", "appc_example2", "flip_flop", "rotating_damping"] {
            let m = builtin(name).unwrap();
            let words = check_pur_words(&m, 4, PROPORTIONALITY_TOL).unwrap();
            let mc = check_pur_montecarlo(&m, 40, 60, 5).unwrap();
            let contradiction = (words.verdict == PurVerdict::Violated
                && mc.verdict == PurVerdict::HoldsLikely)
                || (words.verdict == PurVerdict::HoldsCertified
                    && mc.verdict == PurVerdict::Violated);
            assert!(!contradiction, "{name}: {:?} vs {:?}", words.verdict, mc.verdict);
        }
    }

    #[test]
    fn contractivity_golden() {
        // unitary model: ratio identically one
        let m = builtin("appc_example2").unwrap();
        let rep = contractivity_diagnostic(&m, 20, 20, 9).unwrap();
        assert_abs_diff_eq!(rep.ratio_min, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.ratio_median, 1.0, epsilon = 1e-10);

        // flip_flop: every letter is rank one, ratio zero from step one
        let ff = builtin("flip_flop").unwrap();
        let rep = contractivity_diagnostic(&ff, 1, 20, 9).unwrap();
        assert_eq!(rep.ratio_median, 0.0);

        // rotating_damping: strongly contracting by step 50
        let rd = builtin("rotating_damping").unwrap();
        let rep = contractivity_diagnostic(&rd, 50, 100, 9).unwrap();
        assert!(rep.ratio_median < 1e-6, "median {:.3e}", rep.ratio_median);
    }
}
