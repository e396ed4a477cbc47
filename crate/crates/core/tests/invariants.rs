//! Cross-module statistical invariants of the trajectory process: the
//! martingale property of M_n, the marginal and shift identities tying the
//! ray chain to the density process, estimator contraction against the
//! exact word sum f(n), and the polar-unitary tracking of the chain.

use qtraj_core::channel::{self, DensityMatrix};
use qtraj_core::kraus::{amplitude_damping, builtin};
use qtraj_core::projective::ProjectivePoint;
use qtraj_core::stats;
use qtraj_core::trajectory::{
    compute_f, exact_cylinder_probability, run_ensemble, EnsembleSpec, StartState,
};
use qtraj_core::transport::EmpiricalMeasure;
use qtraj_core::{C64, CMatrix};

fn mixed_start(k: usize) -> StartState {
    StartState::Density(DensityMatrix::maximally_mixed(k))
}

#[test]
fn martingale_mean_is_constant() {
    // E[M_{n+1}] = E[M_n] under the reference measure: paired differences
    // of the entries vanish within Monte Carlo error
    let m = builtin("rotating_damping").unwrap();
    let n_traj = 20_000;
    let spec = EnsembleSpec {
        n_traj,
        seed: 2024,
        window_start: 0,
        start: mixed_start(2),
        threads: None,
    };
    let diffs: Vec<CMatrix> = run_ensemble(&m, &spec, |_, state| {
        state.run(&m, 5)?;
        let m5 = state.martingale_m()?.matrix().clone();
        state.step(&m)?;
        let m6 = state.martingale_m()?.matrix().clone();
        Ok(m6 - m5)
    })
    .unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for part in 0..2 {
                let xs: Vec<f64> = diffs
                    .iter()
                    .map(|d| if part == 0 { d[(i, j)].re } else { d[(i, j)].im })
                    .collect();
                let mean = stats::mean(&xs);
                let se = stats::stderr(&xs);
                assert!(
                    mean.abs() <= 4.0 * se + 1e-12,
                    "entry ({i},{j}) part {part}: |{mean:.2e}| > 4 x {se:.2e}"
                );
            }
        }
    }
}

#[test]
fn marginal_identity_outcome_frequencies() {
    // sampling the ray chain from nu and recording outcome words reproduces
    // the cylinder probabilities of the density process at rho_nu
    let m = amplitude_damping(0.5).unwrap();
    let e1 = ProjectivePoint::basis(2, 0);
    let diag = ProjectivePoint::from_slice(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
    let nu = EmpiricalMeasure::new(vec![e1, diag], vec![0.5, 0.5]).unwrap();
    let rho_nu = DensityMatrix::new(qtraj_core::numerics::hermitize(&nu.mean_projector())).unwrap();

    let n_traj = 40_000;
    let spec = EnsembleSpec {
        n_traj,
        seed: 63,
        window_start: 0,
        start: StartState::SampleFrom(nu),
        threads: None,
    };
    let words: Vec<[usize; 2]> = run_ensemble(&m, &spec, |_, state| {
        let a = state.step(&m)?;
        let b = state.step(&m)?;
        Ok([a, b])
    })
    .unwrap();
    for w0 in 0..2 {
        for w1 in 0..2 {
            let exact = exact_cylinder_probability(&m, &rho_nu, &[w0, w1]).unwrap();
            let count = words.iter().filter(|w| w[0] == w0 && w[1] == w1).count();
            let freq = count as f64 / n_traj as f64;
            let se = (exact * (1.0 - exact) / n_traj as f64).sqrt().max(1e-9);
            assert!(
                (freq - exact).abs() <= 4.0 * se,
                "word ({w0},{w1}): {freq:.4} vs {exact:.4} (se {se:.1e})"
            );
        }
    }
}

#[test]
fn shift_identity_matches_evolved_state() {
    // the law of the outcome at step 2 from rho equals the law of the
    // outcome at step 1 from the channel image of rho
    let m = builtin("rotating_damping").unwrap();
    let rho = DensityMatrix::from_pure(&ProjectivePoint::basis(2, 0));
    let evolved = channel::apply_channel(&m, &rho).unwrap();
    let exact = exact_cylinder_probability(&m, &evolved, &[0]).unwrap();

    let n_traj = 40_000;
    let spec = EnsembleSpec {
        n_traj,
        seed: 64,
        window_start: 0,
        start: StartState::Density(rho),
        threads: None,
    };
    let second: Vec<usize> = run_ensemble(&m, &spec, |_, state| {
        state.step(&m)?;
        state.step(&m)
    })
    .unwrap();
    let freq = second.iter().filter(|&&o| o == 0).count() as f64 / n_traj as f64;
    let se = (exact * (1.0 - exact) / n_traj as f64).sqrt();
    assert!(
        (freq - exact).abs() <= 4.0 * se,
        "{freq:.4} vs {exact:.4} (se {se:.1e})"
    );
}

#[test]
fn estimator_contraction_bounded_by_f() {
    // E d(x_n, y_n) <= f(n), uniformly over the window offset
    let m = builtin("rotating_damping").unwrap();
    let f: Vec<f64> = (0..=8).map(|n| compute_f(&m, n).unwrap()).collect();
    for l in [0usize, 5] {
        let spec = EnsembleSpec {
            n_traj: 2000,
            seed: 65 + l as u64,
            window_start: l,
            start: StartState::FubiniStudy,
            threads: None,
        };
        let distances: Vec<Vec<f64>> = run_ensemble(&m, &spec, |_, state| {
            state.run(&m, l)?;
            let mut ds = Vec::new();
            for _ in 1..=8 {
                state.step(&m)?;
                let (_, y_hat) = state.mle_estimators()?;
                ds.push(state.current_point()?.distance(&y_hat)?);
            }
            Ok(ds)
        })
        .unwrap();
        for n in 1..=8usize {
            let col: Vec<f64> = distances.iter().map(|d| d[n - 1]).collect();
            let mean = stats::mean(&col);
            let se = stats::stderr(&col);
            assert!(
                mean <= f[n] + 4.0 * se,
                "offset {l}, n {n}: mean {mean:.4} vs f {:.4}",
                f[n]
            );
        }
    }
}

#[test]
fn estimator_uniform_in_offset() {
    // the mean decay curves for different window offsets agree within
    // Monte Carlo error
    let m = builtin("rotating_damping").unwrap();
    let curve = |l: usize| -> Vec<(f64, f64)> {
        let spec = EnsembleSpec {
            n_traj: 4000,
            seed: 66,
            window_start: l,
            start: StartState::FubiniStudy,
            threads: None,
        };
        let distances: Vec<Vec<f64>> = run_ensemble(&m, &spec, |_, state| {
            state.run(&m, l)?;
            let mut ds = Vec::new();
            for _ in 1..=6 {
                state.step(&m)?;
                let (_, y_hat) = state.mle_estimators()?;
                ds.push(state.current_point()?.distance(&y_hat)?);
            }
            Ok(ds)
        })
        .unwrap();
        (0..6)
            .map(|i| {
                let col: Vec<f64> = distances.iter().map(|d| d[i]).collect();
                (stats::mean(&col), stats::stderr(&col))
            })
            .collect()
    };
    let base = curve(0);
    for l in [5usize, 10] {
        let shifted = curve(l);
        for (n, ((m0, s0), (m1, s1))) in base.iter().zip(&shifted).enumerate() {
            let gap = (m0 - m1).abs();
            let se = (s0.powi(2) + s1.powi(2)).sqrt();
            assert!(gap <= 4.0 * se, "offset {l}, n {}: gap {gap:.4} vs se {se:.1e}", n + 1);
        }
    }
}

#[test]
fn polar_unitary_tracks_chain() {
    // d(x_n, U_n . z_n) -> 0 where z_n is the dominant eigendirection of
    // the martingale (equivalently the top right singular direction)
    let m = builtin("rotating_damping").unwrap();
    let spec = EnsembleSpec {
        n_traj: 200,
        seed: 67,
        window_start: 0,
        start: StartState::FubiniStudy,
        threads: None,
    };
    let distances: Vec<f64> = run_ensemble(&m, &spec, |_, state| {
        state.run(&m, 100)?;
        let u = state.polar_unitary()?;
        let mm = state.martingale_m()?;
        let basis = mm.range_basis(-1.0);
        let top = basis.last().unwrap().clone();
        let z = ProjectivePoint::from_vector(top)?;
        let moved = qtraj_core::projective::apply(&u, &z)?;
        state.current_point()?.distance(&moved)
    })
    .unwrap();
    let median = stats::median(&distances);
    assert!(median < 1e-6, "median distance {median:.3e}");
}

#[test]
fn per_trajectory_contraction_rate() {
    // fitted slope of log d(x_n, y_n) stays below the negated Lyapunov gap
    // (up to the stated slack) for the median trajectory
    let m = builtin("rotating_damping").unwrap();
    let n_steps = 150usize;
    let spec = EnsembleSpec {
        n_traj: 300,
        seed: 68,
        window_start: 0,
        start: StartState::FubiniStudy,
        threads: None,
    };
    let results: Vec<(f64, f64, f64)> = run_ensemble(&m, &spec, |_, state| {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for n in 1..=n_steps {
            state.step(&m)?;
            if n >= 10 {
                let (_, y_hat) = state.mle_estimators()?;
                let d = state.current_point()?.distance(&y_hat)?;
                if d > 1e-290 {
                    xs.push(n as f64);
                    ys.push(d.ln());
                }
            }
        }
        let fit = stats::linear_fit(&xs, &ys).expect("enough points");
        let lyap = state.lyapunov_report();
        Ok((fit.slope, lyap.gamma[0], lyap.gamma[1]))
    })
    .unwrap();
    let slopes: Vec<f64> = results.iter().map(|r| r.0).collect();
    let gap = stats::mean(&results.iter().map(|r| r.1 - r.2).collect::<Vec<_>>());
    let median_slope = stats::median(&slopes);
    assert!(
        median_slope <= -gap + 0.05,
        "median slope {median_slope:.4} vs -gap + 0.05 = {:.4}",
        -gap + 0.05
    );
}
