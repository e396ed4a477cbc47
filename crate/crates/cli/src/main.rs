//! `qtraj`: validate models, analyze the averaged channel, check the
//! purification / fixed-point assumptions, simulate trajectories, and run
//! the convergence experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qtraj_core::experiments::{self, ExperimentConfig, ModelSpec};
use qtraj_core::{channel, kraus, purification, stats, trajectory};
use qtraj_core::{C64, CVector, Error, KrausMeasure, ProjectivePoint, StartState};

#[derive(Parser)]
#[command(
    name = "qtraj",
    about = "Markov chains of matrix products on complex projective space: \
             simulation, channel analysis, and convergence experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the stochasticity condition of a model
    Validate {
        /// Model file path, or builtin name like `rotating_damping` or
        /// `amplitude_damping:p=0.5`
        model: String,
        /// Tolerance on the Frobenius defect
        #[arg(long, default_value_t = kraus::DEFAULT_VALIDATION_TOL)]
        tol: f64,
    },
    /// Spectral analysis of the averaged channel: spectrum, period, gap,
    /// invariant state, minimal invariant subspace
    Analyze {
        model: String,
        /// Write the full report as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the purification and fixed-point-uniqueness checkers
    CheckAssumptions {
        model: String,
        /// Maximum word length for the deterministic checker
        #[arg(long, default_value_t = 6)]
        max_word_len: usize,
        /// Steps for the Monte Carlo checker (runs when the deterministic
        /// verdict is inconclusive, or always if set explicitly)
        #[arg(long)]
        mc_steps: Option<usize>,
        /// Trajectories for the Monte Carlo checker
        #[arg(long, default_value_t = 200)]
        mc_traj: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample trajectories and print summary statistics
    Simulate {
        model: String,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        traj: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start from the maximally mixed state (density mode)
        #[arg(long, conflicts_with = "pure")]
        density: bool,
        /// Pure initial state: components separated by ';', each `re` or
        /// `re,im` (e.g. `--pure "1;2"` for the ray of (1,2))
        #[arg(long)]
        pure: Option<String>,
        /// Write trajectory 0 to CSV
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run a statistical experiment from a JSON config
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run even when an assumption checker reports a violation
        #[arg(long)]
        force: bool,
        /// Thread count (overrides the config; results are identical for
        /// any value)
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Convergence,
    Invariant,
    Appc1,
    Appc2,
    EstimatorDecay,
    Ergodicity,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn resolve_model(arg: &str) -> Result<KrausMeasure, Error> {
    ModelSpec::parse_cli(arg)?.resolve()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { model, tol } => {
            let m = resolve_model(&model)?;
            let report = m.validate(tol)?;
            println!(
                "model: {} (k = {}, {} elements)",
                m.name().unwrap_or("unnamed"),
                m.dim(),
                m.len()
            );
            println!("stochasticity defect: {:.6e}", report.defect);
            println!("second moment:        {:.6}", report.second_moment);
            println!("tolerance:            {:.1e}", report.tolerance);
            println!("result:               {}", if report.passed { "PASS" } else { "FAIL" });
            if !report.passed {
                return Err(Error::InvalidModel(format!(
                    "defect {:.3e} exceeds tolerance {:.1e}",
                    report.defect, report.tolerance
                )));
            }
            Ok(())
        }
        Command::Analyze { model, json } => {
            let m = resolve_model(&model)?;
            let report = channel::analyze(&m, channel::DEFAULT_PERIPHERAL_TOL)?;
            println!("eigenvalues (modulus desc):");
            for z in &report.eigenvalues {
                println!("  {:+.12} {:+.12}i   |.| = {:.12}", z.re, z.im, z.norm());
            }
            println!("period m:      {}", report.period_m);
            println!("gap lambda:    {:.12}", report.gap_lambda);
            println!("fixed points:  {}", report.fixed_point_dim);
            println!("E full:        {}", report.e_is_full);
            println!("rho_inv:");
            let rho = report.rho_inv.matrix();
            for i in 0..rho.nrows() {
                let row: Vec<String> = (0..rho.ncols())
                    .map(|j| format!("{:+.6}{:+.6}i", rho[(i, j)].re, rho[(i, j)].im))
                    .collect();
                println!("  [{}]", row.join(", "));
            }
            if let Some(path) = json {
                std::fs::write(&path, format!("{:#}\n", report.to_json()))?;
                println!("report written to {}", path.display());
            }
            Ok(())
        }
        Command::CheckAssumptions {
            model,
            max_word_len,
            mc_steps,
            mc_traj,
            seed,
        } => {
            let m = resolve_model(&model)?;
            let words =
                purification::check_pur_words(&m, max_word_len, purification::PROPORTIONALITY_TOL)?;
            println!("purification (word enumeration, length <= {max_word_len}):");
            println!("  verdict: {:?}", words.verdict);
            if words.witness.is_some() {
                println!("  witness: rank >= 2 compressing projector found");
            }
            let run_mc =
                mc_steps.is_some() || words.verdict == purification::PurVerdict::Inconclusive;
            if run_mc {
                let steps = mc_steps.unwrap_or(50);
                let mc = purification::check_pur_montecarlo(&m, steps, mc_traj, seed)?;
                println!("purification (Monte Carlo, {mc_traj} trajectories, {steps} steps):");
                println!("  verdict: {:?}", mc.verdict);
                if let Some(d) = &mc.mc_statistics {
                    println!(
                        "  final median lambda2: {:.3e}",
                        d.median_lambda2.last().unwrap()
                    );
                    if let Some(fit) = d.fit {
                        println!(
                            "  log-linear fit: slope {:.4}, R^2 {:.4}",
                            fit.slope, fit.r_squared
                        );
                    }
                }
            }
            let erg = channel::check_phi_erg(&m)?;
            println!("fixed-point uniqueness:");
            println!("  holds: {}", erg.holds);
            println!("  fixed-point dimension: {}", erg.fixed_point_dim);
            println!("  minimal subspace full: {}", erg.e_is_full);
            if !erg.holds {
                println!("  extremal supports found: {}", erg.extremal_supports.len());
            }
            Ok(())
        }
        Command::Simulate {
            model,
            steps,
            traj,
            seed,
            density,
            pure,
            dump,
        } => {
            let m = resolve_model(&model)?;
            let start = if density {
                StartState::Density(channel::DensityMatrix::maximally_mixed(m.dim()))
            } else if let Some(text) = &pure {
                StartState::Pure(parse_pure(text, m.dim())?)
            } else {
                StartState::FubiniStudy
            };
            let spec = trajectory::EnsembleSpec {
                n_traj: traj,
                seed,
                window_start: 0,
                start: start.clone(),
                threads: None,
            };
            let results = trajectory::run_ensemble(&m, &spec, |_, state| {
                state.run(&m, steps)?;
                let lambda2 = state.martingale_second_eigenvalue()?;
                Ok((state.log_norm(), lambda2))
            })?;
            let rates: Vec<f64> = results.iter().map(|(ln, _)| ln / steps as f64).collect();
            let lambda2: Vec<f64> = results.iter().map(|(_, l2)| *l2).collect();
            println!("trajectories: {traj}, steps: {steps}, seed: {seed}");
            println!(
                "log-norm rate: mean {:.6}, sd {:.6}",
                stats::mean(&rates),
                stats::sample_sd(&rates)
            );
            println!(
                "final lambda2(M): median {:.3e}, p90 {:.3e}",
                stats::median(&lambda2),
                stats::percentile(&lambda2, 90.0)
            );
            if let Some(path) = dump {
                experiments::dump_trajectory(
                    &m,
                    start,
                    trajectory::substream_seed(seed, 0),
                    steps,
                    &path,
                )?;
                println!("trajectory 0 written to {}", path.display());
            }
            Ok(())
        }
        Command::Experiment {
            kind,
            config,
            out,
            force,
            threads,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let dir = cfg.output_dir.clone();
            match kind {
                ExperimentKind::Invariant => {
                    let outcome = experiments::run_invariant_estimate(&cfg)?;
                    outcome.write(&dir)?;
                    println!(
                        "invariant estimate: {} atoms, rho_check = {:.6}",
                        outcome.nu_hat.len(),
                        outcome.rho_check
                    );
                }
                ExperimentKind::Convergence => {
                    let outcome = experiments::run_convergence(&cfg, force)?;
                    outcome.write(&dir)?;
                    println!(
                        "W1 decay: slope {:.4} per checkpoint, R^2 {:.4}, noise floor {:.4} \
                         ({} points in fit)",
                        outcome.fit.slope,
                        outcome.fit.r_squared,
                        outcome.noise_floor,
                        outcome.fit.n_points
                    );
                }
                ExperimentKind::Appc1 => {
                    let outcome = experiments::run_appendix_c(1, &cfg)?;
                    outcome.write(&dir)?;
                    if let experiments::AppendixCOutcome::Uniform {
                        rho_deviation_frobenius,
                        w1_to_uniform,
                        ..
                    } = &outcome
                    {
                        println!(
                            "uniform check: ||mean projector - Id/k||_F = \
                             {rho_deviation_frobenius:.4}, W1 to reference = {w1_to_uniform:.4}"
                        );
                    }
                }
                ExperimentKind::Appc2 => {
                    let outcome = experiments::run_appendix_c(2, &cfg)?;
                    outcome.write(&dir)?;
                    if let experiments::AppendixCOutcome::Orbit {
                        atoms,
                        expected,
                        max_deviation,
                        ..
                    } = &outcome
                    {
                        println!(
                            "orbit occupation: {} atoms, expected {expected:.4} each, \
                             max deviation {max_deviation:.4}",
                            atoms.len()
                        );
                    }
                }
                ExperimentKind::EstimatorDecay => {
                    let offsets = cfg.offsets.clone();
                    let outcome = experiments::run_estimator_decay(&cfg, &offsets, force)?;
                    outcome.write(&dir)?;
                    println!(
                        "estimator decay: gamma1 {:.4}, gamma2 {:.4}",
                        outcome.gamma1_hat, outcome.gamma2_hat
                    );
                    for (l, slope) in &outcome.per_traj_slope {
                        println!("  offset {l}: median per-trajectory slope {slope:.4}");
                    }
                    if let Some(msg) = &outcome.assumption_error {
                        eprintln!("assumption error: {msg}");
                        return Err(Error::AssumptionGate(msg.clone()));
                    }
                }
                ExperimentKind::Ergodicity => {
                    let outcome = experiments::run_ergodicity(&cfg, cfg.block_len)?;
                    outcome.write(&dir)?;
                    println!(
                        "ergodicity: max |time average - exact| = {:.4} over blocks up to \
                         length {}",
                        outcome.max_gap, cfg.block_len
                    );
                }
            }
            println!("outputs in {}", dir.display());
            Ok(())
        }
    }
}

fn parse_pure(text: &str, dim: usize) -> Result<ProjectivePoint, Error> {
    let components: Result<Vec<C64>, Error> = text
        .split(';')
        .map(|part| {
            let part = part.trim();
            let (re, im) = match part.split_once(',') {
                Some((r, i)) => (r.trim(), i.trim()),
                None => (part, "0"),
            };
            let re: f64 = re
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad component '{part}'")))?;
            let im: f64 = im
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad component '{part}'")))?;
            Ok(C64::new(re, im))
        })
        .collect();
    let components = components?;
    if components.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: components.len(),
        });
    }
    ProjectivePoint::from_vector(CVector::from_vec(components))
}
