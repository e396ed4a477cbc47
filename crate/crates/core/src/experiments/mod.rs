//! Experiment drivers: reproducible Monte Carlo runs that estimate the
//! invariant measure, measure Wasserstein-1 convergence of the chain,
//! check the group-orbit examples, track estimator contraction against the
//! Lyapunov spectrum, and test shift ergodicity of the outcome process.
//! Each driver computes an outcome struct; `write` methods emit CSV/JSON
//! artifacts (comma separator, '.' decimal, LF line endings).

mod config;
mod writers;

pub use config::{ExperimentConfig, InitialSpec, ModelSpec};
pub use writers::write_csv;

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{self, DensityMatrix, SpectralReport};
use crate::error::{Error, Result};
use crate::kraus::KrausMeasure;
use crate::projective::{sample_fubini_study, ProjectivePoint};
use crate::purification::{self, PurVerdict};
use crate::stats::{self, LinearFit};
use crate::trajectory::{
    exact_cylinder_probability, run_ensemble, substream_seed, EnsembleSpec, StartState,
};
use crate::transport::{self, EmpiricalMeasure};

const REF_SEED_SALT: u64 = 0x5eed_0001;
const FS_REF_SALT: u64 = 0x5eed_0002;
const SUBSAMPLE_SALT: u64 = 0x5eed_1000;

/// Longest word length used by the deterministic purification gate.
fn gate_word_length(measure: &KrausMeasure) -> usize {
    let e = measure.len().max(2) as f64;
    let max = (1e6f64.ln() / e.ln()).floor() as usize;
    max.clamp(1, 6)
}

/// Refuse to run when the deterministic checker proves the purification
/// property false (unless forced).
fn gate_purification(measure: &KrausMeasure, force: bool) -> Result<()> {
    let report = purification::check_pur_words(
        measure,
        gate_word_length(measure),
        purification::PROPORTIONALITY_TOL,
    )?;
    if report.verdict == PurVerdict::Violated && !force {
        return Err(Error::AssumptionGate(
            "purification assumption is violated for this model (run with --force to override)"
                .into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// invariant estimate

#[derive(Debug)]
pub struct InvariantOutcome {
    pub nu_hat: EmpiricalMeasure,
    pub rho_hat: DensityMatrix,
    /// Trace-norm distance between the empirical mean projector and the
    /// channel fixed point.
    pub rho_check: f64,
    pub analysis: SpectralReport,
}

/// Estimate the invariant measure by the ensemble state distribution at the
/// final steps (one step per period slot) and compare its mean projector to
/// the channel fixed point.
pub fn run_invariant_estimate(cfg: &ExperimentConfig) -> Result<InvariantOutcome> {
    let measure = cfg.resolve_model()?;
    let analysis = channel::analyze(&measure, channel::DEFAULT_PERIPHERAL_TOL)?;
    let m = analysis.period_m;
    if cfg.n_steps < cfg.burn_in || cfg.n_steps < m {
        return Err(Error::InvalidInput(format!(
            "n_steps = {} must cover burn_in = {} and one period m = {m}",
            cfg.n_steps, cfg.burn_in
        )));
    }
    let start = cfg.initial_start(&measure)?;
    if matches!(start, StartState::Density(_)) {
        return Err(Error::InvalidInput(
            "the invariant estimate samples the chain on rays; use a pure initial distribution"
                .into(),
        ));
    }
    let spec = EnsembleSpec {
        n_traj: cfg.n_traj,
        seed: cfg.seed,
        window_start: 0,
        start,
        threads: cfg.threads,
    };
    let n_steps = cfg.n_steps;
    let snapshots: Vec<Vec<ProjectivePoint>> = run_ensemble(&measure, &spec, |_, state| {
        let mut mine = Vec::with_capacity(m);
        for step in 1..=n_steps {
            state.step(&measure)?;
            if step + m > n_steps {
                mine.push(state.current_point()?.clone());
            }
        }
        Ok(mine)
    })?;
    let points: Vec<ProjectivePoint> = snapshots.into_iter().flatten().collect();
    let nu_hat = EmpiricalMeasure::uniform(points)?.merged(transport::DUPLICATE_TOL);
    let rho_hat = DensityMatrix::project(&nu_hat.mean_projector())?;
    let rho_check = rho_hat.trace_distance(&analysis.rho_inv);
    Ok(InvariantOutcome {
        nu_hat,
        rho_hat,
        rho_check,
        analysis,
    })
}

// ---------------------------------------------------------------------------
// Wasserstein convergence

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub w1: f64,
    /// Whether the point sits above the noise floor and enters the fit.
    pub used_in_fit: bool,
}

#[derive(Debug)]
pub struct ConvergenceOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub fit: LinearFit,
    pub noise_floor: f64,
    pub period_m: usize,
    pub gap_lambda: Option<f64>,
}

/// Measure `W1(average of the empirical laws over one period at time mn,
/// reference invariant sample)` at each checkpoint n, estimate the noise
/// floor by splitting the reference sample, and fit the log-linear decay
/// above the floor.
pub fn run_convergence(cfg: &ExperimentConfig, force: bool) -> Result<ConvergenceOutcome> {
    let measure = cfg.resolve_model()?;
    gate_purification(&measure, force)?;
    let analysis = match channel::analyze(&measure, channel::DEFAULT_PERIPHERAL_TOL) {
        Ok(a) => Some(a),
        Err(Error::MultipleFixedPoints { dim }) if force => {
            let _ = dim;
            None
        }
        Err(e) => return Err(e),
    };
    let m = analysis.as_ref().map(|a| a.period_m).unwrap_or(1);
    if cfg.checkpoints.is_empty() {
        return Err(Error::InvalidInput("no checkpoints configured".into()));
    }
    let max_cp = *cfg.checkpoints.iter().max().unwrap();
    let horizon = m * max_cp + m - 1;
    if horizon > cfg.n_steps {
        return Err(Error::InvalidInput(format!(
            "checkpoint {max_cp} needs {horizon} steps but n_steps = {}",
            cfg.n_steps
        )));
    }

    // reference sample of the invariant measure from an independent substream
    let reference = {
        let ref_cfg = ExperimentConfig {
            seed: substream_seed(cfg.seed, REF_SEED_SALT),
            ..cfg.clone()
        };
        run_invariant_estimate_with_period(&ref_cfg, &measure, m)?
    };
    let sub = cfg.w1_subsample.min(cfg.w1_budget);
    let nu_inv_sub = reference.subsample(sub, substream_seed(cfg.seed, SUBSAMPLE_SALT));

    // noise floor: W1 between the two halves of the reference sample
    let noise_floor = {
        let pts = reference.points();
        let half = pts.len() / 2;
        let a = EmpiricalMeasure::uniform(pts[..half].to_vec())?
            .subsample(sub, substream_seed(cfg.seed, SUBSAMPLE_SALT + 1));
        let b = EmpiricalMeasure::uniform(pts[half..].to_vec())?
            .subsample(sub, substream_seed(cfg.seed, SUBSAMPLE_SALT + 2));
        transport::w1_with_budget(&a, &b, cfg.w1_budget)?
    };

    // snapshot steps needed for the Cesaro window at each checkpoint
    let mut wanted: BTreeSet<usize> = BTreeSet::new();
    for &n in &cfg.checkpoints {
        for r in 0..m {
            wanted.insert(m * n + r);
        }
    }
    let wanted: Vec<usize> = wanted.into_iter().collect();
    let start = cfg.initial_start(&measure)?;
    let spec = EnsembleSpec {
        n_traj: cfg.n_traj,
        seed: cfg.seed,
        window_start: 0,
        start,
        threads: cfg.threads,
    };
    let horizon_steps = *wanted.last().unwrap();
    let per_traj: Vec<Vec<ProjectivePoint>> = run_ensemble(&measure, &spec, |_, state| {
        let mut mine = Vec::with_capacity(wanted.len());
        let mut next = 0;
        if wanted[next] == 0 {
            mine.push(state.current_point()?.clone());
            next += 1;
        }
        for step in 1..=horizon_steps {
            state.step(&measure)?;
            if next < wanted.len() && wanted[next] == step {
                mine.push(state.current_point()?.clone());
                next += 1;
            }
        }
        Ok(mine)
    })?;

    let mut rows = Vec::with_capacity(cfg.checkpoints.len());
    let mut checkpoints = cfg.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    for &n in &checkpoints {
        let mut window = Vec::with_capacity(m);
        for r in 0..m {
            let step = m * n + r;
            let slot = wanted.binary_search(&step).expect("snapshot collected");
            let pts: Vec<ProjectivePoint> =
                per_traj.iter().map(|v| v[slot].clone()).collect();
            window.push(EmpiricalMeasure::uniform(pts)?);
        }
        let law = transport::cesaro_mix(&window)?
            .subsample(sub, substream_seed(cfg.seed, SUBSAMPLE_SALT + 10 + n as u64));
        let w1 = transport::w1_with_budget(&law, &nu_inv_sub, cfg.w1_budget)?;
        rows.push(ConvergenceRow {
            n,
            w1,
            used_in_fit: false,
        });
    }

    let cutoff = 3.0 * noise_floor;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in &mut rows {
        if row.w1 >= cutoff {
            row.used_in_fit = true;
            xs.push(row.n as f64);
            ys.push(row.w1.ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientResolution(format!(
            "only {} checkpoints above 3x the noise floor ({noise_floor:.4}); \
             increase n_traj or use earlier checkpoints",
            xs.len()
        )));
    }
    let fit = stats::linear_fit(&xs, &ys).ok_or_else(|| {
        Error::InsufficientResolution("degenerate fit window".into())
    })?;
    Ok(ConvergenceOutcome {
        rows,
        fit,
        noise_floor,
        period_m: m,
        gap_lambda: analysis.as_ref().map(|a| a.gap_lambda),
    })
}

/// Invariant ensemble with a caller-supplied period (used when the caller
/// already ran the channel analysis).
fn run_invariant_estimate_with_period(
    cfg: &ExperimentConfig,
    measure: &KrausMeasure,
    m: usize,
) -> Result<EmpiricalMeasure> {
    if cfg.n_steps < cfg.burn_in.max(m) {
        return Err(Error::InvalidInput(format!(
            "n_steps = {} must cover burn_in = {} and one period m = {m}",
            cfg.n_steps, cfg.burn_in
        )));
    }
    let start = cfg.initial_start(measure)?;
    let spec = EnsembleSpec {
        n_traj: cfg.n_traj,
        seed: cfg.seed,
        window_start: 0,
        start,
        threads: cfg.threads,
    };
    let n_steps = cfg.n_steps;
    let snapshots: Vec<Vec<ProjectivePoint>> = run_ensemble(measure, &spec, |_, state| {
        let mut mine = Vec::with_capacity(m);
        for step in 1..=n_steps {
            state.step(measure)?;
            if step + m > n_steps {
                mine.push(state.current_point()?.clone());
            }
        }
        Ok(mine)
    })?;
    EmpiricalMeasure::uniform(snapshots.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// group-orbit examples

#[derive(Debug)]
pub enum AppendixCOutcome {
    /// Uniform-measure checks: deviation of the mean projector from Id/k and
    /// W1 distance to a fresh Fubini-Study sample.
    Uniform {
        rho_deviation_frobenius: f64,
        w1_to_uniform: f64,
        n_points: usize,
    },
    /// Orbit occupation: time-averaged frequency of each orbit atom.
    Orbit {
        atoms: Vec<ProjectivePoint>,
        frequencies: Vec<f64>,
        expected: f64,
        max_deviation: f64,
    },
}

/// Example 1: the empirical law of a unitary model generating the full
/// special unitary group is compared against the unitarily invariant
/// measure. Example 2: the chain started on a finite group orbit occupies
/// each atom with equal time-averaged frequency.
pub fn run_appendix_c(example: u8, cfg: &ExperimentConfig) -> Result<AppendixCOutcome> {
    match example {
        1 => run_appc_uniform(cfg),
        2 => run_appc_orbit(cfg),
        other => Err(Error::InvalidInput(format!(
            "appendix C example must be 1 or 2, got {other}"
        ))),
    }
}

fn run_appc_uniform(cfg: &ExperimentConfig) -> Result<AppendixCOutcome> {
    let measure = cfg.resolve_model()?;
    let nu_hat = run_invariant_estimate_with_period(cfg, &measure, 1)?;
    let k = measure.dim();
    let mixed = crate::numerics::identity(k) * crate::numerics::C64::new(1.0 / k as f64, 0.0);
    let rho_deviation = (nu_hat.mean_projector() - mixed).norm();

    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, FS_REF_SALT));
    let ref_points: Vec<ProjectivePoint> =
        (0..cfg.n_traj).map(|_| sample_fubini_study(k, &mut rng)).collect();
    let reference = EmpiricalMeasure::uniform(ref_points)?;
    let sub = cfg.w1_budget;
    let a = nu_hat.subsample(sub, substream_seed(cfg.seed, SUBSAMPLE_SALT + 3));
    let b = reference.subsample(sub, substream_seed(cfg.seed, SUBSAMPLE_SALT + 4));
    let w1_to_uniform = transport::w1_with_budget(&a, &b, cfg.w1_budget)?;
    Ok(AppendixCOutcome::Uniform {
        rho_deviation_frobenius: rho_deviation,
        w1_to_uniform,
        n_points: nu_hat.len(),
    })
}

/// Orbit of the initial ray under the semigroup generated by the model
/// matrices, up to a cap. For finite unitary groups this is the group orbit.
fn orbit_atoms(measure: &KrausMeasure, start: &ProjectivePoint) -> Result<Vec<ProjectivePoint>> {
    const ORBIT_CAP: usize = 256;
    let mut atoms = vec![start.clone()];
    let mut frontier = vec![start.clone()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for x in &frontier {
            for el in measure.elements() {
                if el.weight == 0.0 {
                    continue;
                }
                let moved = crate::projective::apply(&el.matrix, x)?;
                if atoms
                    .iter()
                    .all(|a| a.distance(&moved).unwrap_or(1.0) > 1e-9)
                {
                    atoms.push(moved.clone());
                    next.push(moved);
                }
            }
        }
        if atoms.len() > ORBIT_CAP {
            return Err(Error::InvalidInput(format!(
                "orbit does not close within {ORBIT_CAP} atoms; \
                 the orbit experiment needs a finite group orbit"
            )));
        }
        frontier = next;
    }
    Ok(atoms)
}

fn run_appc_orbit(cfg: &ExperimentConfig) -> Result<AppendixCOutcome> {
    let measure = cfg.resolve_model()?;
    let start = match cfg.initial_start(&measure)? {
        StartState::Pure(x) => x,
        StartState::FubiniStudy | StartState::SampleFrom(_) | StartState::Density(_) => {
            // default orbit seed: the ray of (1, 2)
            ProjectivePoint::from_slice(&[
                crate::numerics::C64::new(1.0, 0.0),
                crate::numerics::C64::new(2.0, 0.0),
            ])?
        }
    };
    if start.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            got: start.dim(),
        });
    }
    let atoms = orbit_atoms(&measure, &start)?;
    let mut counts = vec![0usize; atoms.len()];
    let mut state = crate::trajectory::TrajectoryState::init(
        &measure,
        StartState::Pure(start),
        substream_seed(cfg.seed, 0),
        0,
    )?;
    for _ in 0..cfg.n_steps {
        state.step(&measure)?;
        let x = state.current_point()?;
        let (best, dist) = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.distance(x).unwrap_or(1.0)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if dist > 1e-6 {
            return Err(Error::NumericalFailure(format!(
                "trajectory left the orbit (distance {dist:.3e} to the nearest atom)"
            )));
        }
        counts[best] += 1;
    }
    let frequencies: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / cfg.n_steps as f64)
        .collect();
    let expected = 1.0 / atoms.len() as f64;
    let max_deviation = frequencies
        .iter()
        .map(|f| (f - expected).abs())
        .fold(0.0, f64::max);
    Ok(AppendixCOutcome::Orbit {
        atoms,
        frequencies,
        expected,
        max_deviation,
    })
}

// ---------------------------------------------------------------------------
// estimator decay

#[derive(Debug, Clone, serde::Serialize)]
pub struct EstimatorDecayRow {
    pub n: usize,
    pub l: usize,
    pub mean_d: f64,
    pub stderr: f64,
}

#[derive(Debug)]
pub struct EstimatorDecayOutcome {
    pub rows: Vec<EstimatorDecayRow>,
    /// Median per-trajectory slope of log d vs n, per offset.
    pub per_traj_slope: Vec<(usize, f64)>,
    pub gamma1_hat: f64,
    pub gamma2_hat: f64,
    /// Exact f(n) for the checkpoints when enumerable.
    pub f_values: Vec<(usize, f64)>,
    /// Set when the Lyapunov comparison was requested but the minimal
    /// invariant subspace is proper.
    pub assumption_error: Option<String>,
}

/// Track the distance between the chain and its window estimator at each
/// checkpoint, the per-trajectory contraction slope, and the Lyapunov gap.
pub fn run_estimator_decay(
    cfg: &ExperimentConfig,
    offsets: &[usize],
    force: bool,
) -> Result<EstimatorDecayOutcome> {
    let measure = cfg.resolve_model()?;
    gate_purification(&measure, force)?;
    if cfg.checkpoints.is_empty() || offsets.is_empty() {
        return Err(Error::InvalidInput("need checkpoints and offsets".into()));
    }
    let mut checkpoints = cfg.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if checkpoints[0] == 0 {
        return Err(Error::InvalidInput("checkpoints must be >= 1".into()));
    }
    let n_max = *checkpoints.last().unwrap();

    let assumption_error = match channel::analyze(&measure, channel::DEFAULT_PERIPHERAL_TOL) {
        Ok(a) if a.e_is_full => None,
        Ok(_) => Some(
            "the minimal invariant subspace is proper; the contraction-rate comparison \
             of the estimator slope against the Lyapunov gap is not available"
                .to_string(),
        ),
        Err(Error::MultipleFixedPoints { dim }) => Some(format!(
            "the channel has {dim} independent fixed points; the contraction-rate \
             comparison is not available"
        )),
        Err(e) => return Err(e),
    };

    let mut rows = Vec::new();
    let mut per_traj_slope = Vec::new();
    let mut gamma_acc: Vec<Vec<f64>> = Vec::new();
    for (oi, &l) in offsets.iter().enumerate() {
        let spec = EnsembleSpec {
            n_traj: cfg.n_traj,
            seed: substream_seed(cfg.seed, oi as u64),
            window_start: l,
            start: cfg.initial_start(&measure)?,
            threads: cfg.threads,
        };
        let measure_ref = &measure;
        let cps = &checkpoints;
        #[allow(clippy::type_complexity)]
        let results: Vec<(Vec<f64>, Vec<f64>)> = run_ensemble(&measure, &spec, |_, state| {
            state.run(measure_ref, l)?;
            let mut ds = Vec::with_capacity(cps.len());
            let mut next = 0;
            for n in 1..=n_max {
                state.step(measure_ref)?;
                if next < cps.len() && cps[next] == n {
                    let (_, y_hat) = state.mle_estimators()?;
                    ds.push(state.current_point()?.distance(&y_hat)?);
                    next += 1;
                }
            }
            let lyap = state.lyapunov_report();
            Ok((ds, lyap.gamma))
        })?;

        for (ci, &n) in checkpoints.iter().enumerate() {
            let column: Vec<f64> = results.iter().map(|(ds, _)| ds[ci]).collect();
            rows.push(EstimatorDecayRow {
                n,
                l,
                mean_d: stats::mean(&column),
                stderr: stats::stderr(&column),
            });
        }

        // per-trajectory slope of log d over the tail of the checkpoints
        let fit_lo = (n_max / 5).max(checkpoints[0]);
        let mut slopes = Vec::new();
        for (ds, _) in &results {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (ci, &n) in checkpoints.iter().enumerate() {
                if n >= fit_lo && ds[ci] > 1e-290 {
                    xs.push(n as f64);
                    ys.push(ds[ci].ln());
                }
            }
            match stats::linear_fit(&xs, &ys) {
                Some(fit) => slopes.push(fit.slope),
                // distances collapsed to exact zero: contraction is
                // immediate, record the sentinel
                None => slopes.push(f64::NEG_INFINITY),
            }
        }
        per_traj_slope.push((l, stats::median(&slopes)));
        if l == 0 {
            gamma_acc = results.into_iter().map(|(_, g)| g).collect();
        }
    }

    let (gamma1_hat, gamma2_hat) = if gamma_acc.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let g1: Vec<f64> = gamma_acc.iter().map(|g| g[0]).collect();
        let g2: Vec<f64> = gamma_acc.iter().map(|g| g[1]).collect();
        let collapse = g2.iter().any(|v| v.is_infinite());
        (
            stats::mean(&g1),
            if collapse { f64::NEG_INFINITY } else { stats::mean(&g2) },
        )
    };

    let mut f_values = Vec::new();
    for &n in &checkpoints {
        if (measure.len() as f64).powi(n as i32) <= 1e6 {
            if let Ok(f) = crate::trajectory::compute_f(&measure, n) {
                f_values.push((n, f));
            }
        }
    }

    Ok(EstimatorDecayOutcome {
        rows,
        per_traj_slope,
        gamma1_hat,
        gamma2_hat,
        f_values,
        assumption_error,
    })
}

// ---------------------------------------------------------------------------
// ergodicity of the outcome shift

#[derive(Debug, Clone, serde::Serialize)]
pub struct ErgodicityRow {
    pub block: String,
    pub length: usize,
    pub time_average: f64,
    pub exact_probability: f64,
    pub gap: f64,
}

#[derive(Debug)]
pub struct ErgodicityOutcome {
    pub rows: Vec<ErgodicityRow>,
    pub max_gap: f64,
    pub n_steps: usize,
}

/// Along one long trajectory sampled from the invariant state, compare the
/// sliding-window frequency of every outcome block (lengths 1..=block_len)
/// with its exact probability under the invariant state.
pub fn run_ergodicity(cfg: &ExperimentConfig, block_len: usize) -> Result<ErgodicityOutcome> {
    let measure = cfg.resolve_model()?;
    let analysis = channel::analyze(&measure, channel::DEFAULT_PERIPHERAL_TOL)?;
    let block_len = block_len.clamp(1, 3);
    let mut state = crate::trajectory::TrajectoryState::init(
        &measure,
        StartState::Density(analysis.rho_inv.clone()),
        substream_seed(cfg.seed, 0),
        0,
    )?;
    state.enable_history();
    state.run(&measure, cfg.n_steps)?;
    let outcomes = state.history().unwrap().to_vec();

    let mut rows = Vec::new();
    let mut max_gap = 0.0f64;
    for len in 1..=block_len {
        if cfg.n_steps < len {
            continue;
        }
        let windows = outcomes.len() - len + 1;
        let n_blocks = measure.len().pow(len as u32);
        for code in 0..n_blocks {
            let mut block = Vec::with_capacity(len);
            let mut rest = code;
            for _ in 0..len {
                block.push(rest % measure.len());
                rest /= measure.len();
            }
            let count = outcomes
                .windows(len)
                .filter(|w| w.iter().zip(&block).all(|(&o, &b)| o as usize == b))
                .count();
            let time_average = count as f64 / windows as f64;
            let exact = exact_cylinder_probability(&measure, &analysis.rho_inv, &block)?;
            let gap = (time_average - exact).abs();
            max_gap = max_gap.max(gap);
            rows.push(ErgodicityRow {
                block: block
                    .iter()
                    .map(|b| b.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                length: len,
                time_average,
                exact_probability: exact,
                gap,
            });
        }
    }
    Ok(ErgodicityOutcome {
        rows,
        max_gap,
        n_steps: cfg.n_steps,
    })
}

// ---------------------------------------------------------------------------
// trajectory dump (CLI simulate)

/// Write one trajectory to CSV: per step the outcome, the state
/// representative, the log norm of the product, the second martingale
/// eigenvalue, the distance to the window estimator, and the running
/// Lyapunov estimates.
pub fn dump_trajectory(
    measure: &KrausMeasure,
    start: StartState,
    seed: u64,
    n_steps: usize,
    path: &Path,
) -> Result<()> {
    let k = measure.dim();
    let mut state = crate::trajectory::TrajectoryState::init(measure, start, seed, 0)?;
    let mut header: Vec<String> = vec!["n".into(), "outcome".into()];
    for i in 0..k {
        header.push(format!("x_re_{i}"));
        header.push(format!("x_im_{i}"));
    }
    header.push("log_norm".into());
    header.push("lambda2_of_M".into());
    header.push("d_xy".into());
    for j in 1..=k {
        header.push(format!("gamma_partial_{j}"));
    }
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(n_steps);
    for n in 1..=n_steps {
        let outcome = state.step(measure)?;
        let rep = representative(&state);
        let (d_xy, lambda2) = {
            let lambda2 = state.martingale_second_eigenvalue()?;
            let d = match (state.current_point(), state.mle_estimators()) {
                (Ok(x), Ok((_, y))) => x.distance(&y)?,
                _ => {
                    let (_, y) = state.mle_estimators()?;
                    ProjectivePoint::from_vector(rep.clone())?.distance(&y)?
                }
            };
            (d, lambda2)
        };
        let lyap = state.lyapunov_report();
        let mut row: Vec<String> = vec![n.to_string(), outcome.to_string()];
        for i in 0..k {
            row.push(rep[i].re.to_string());
            row.push(rep[i].im.to_string());
        }
        row.push(state.log_norm().to_string());
        row.push(lambda2.to_string());
        row.push(d_xy.to_string());
        for j in 0..k {
            row.push(lyap.gamma[j].to_string());
        }
        rows.push(row);
    }
    write_csv(path, &header.iter().map(|s| s.as_str()).collect::<Vec<_>>(), &rows)
}

/// Unit representative of the current state: the ray itself in pure mode,
/// the dominant eigenvector of the density matrix otherwise.
fn representative(state: &crate::trajectory::TrajectoryState) -> crate::numerics::CVector {
    match state.current_point() {
        Ok(x) => x.coeffs().clone(),
        Err(_) => {
            let rho = state.current_density();
            let basis = rho.range_basis(-1.0);
            basis.last().cloned().unwrap_or_else(|| {
                crate::numerics::CVector::zeros(rho.dim())
            })
        }
    }
}
