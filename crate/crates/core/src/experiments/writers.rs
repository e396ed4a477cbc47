//! CSV/JSON artifact writers for the experiment outcomes. All CSVs use a
//! comma separator, '.' decimal point, a header row, and LF line endings.

use std::fs;
use std::path::Path;

use serde_json::json;

use crate::error::Result;

use super::{
    AppendixCOutcome, ConvergenceOutcome, ErgodicityOutcome, EstimatorDecayOutcome,
    InvariantOutcome,
};

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, format!("{:#}\n", value))?;
    Ok(())
}

impl InvariantOutcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let k = self.rho_hat.dim();
        let mut header: Vec<String> = vec!["weight".into()];
        for i in 0..k {
            header.push(format!("x_re_{i}"));
            header.push(format!("x_im_{i}"));
        }
        let rows: Vec<Vec<String>> = self
            .nu_hat
            .points()
            .iter()
            .zip(self.nu_hat.weights())
            .map(|(p, w)| {
                let mut row = vec![w.to_string()];
                for i in 0..k {
                    row.push(p.coeffs()[i].re.to_string());
                    row.push(p.coeffs()[i].im.to_string());
                }
                row
            })
            .collect();
        write_csv(
            &dir.join("nu_hat.csv"),
            &header.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            &rows,
        )?;
        write_json(
            &dir.join("invariant.json"),
            &json!({
                "rho_hat": crate::channel::matrix_to_json(self.rho_hat.matrix()),
                "rho_check": self.rho_check,
                "n_atoms": self.nu_hat.len(),
                "channel": self.analysis.to_json(),
            }),
        )
    }
}

impl ConvergenceOutcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.w1.to_string(),
                    self.fit.slope.to_string(),
                    self.fit.r_squared.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("convergence.csv"),
            &["n", "w1_value", "fitted_slope", "r_squared"],
            &rows,
        )?;
        write_json(
            &dir.join("convergence.json"),
            &json!({
                "slope": self.fit.slope,
                "r_squared": self.fit.r_squared,
                "points_in_fit": self.fit.n_points,
                "noise_floor": self.noise_floor,
                "period_m": self.period_m,
                "channel_gap": self.gap_lambda,
                "rows": self.rows,
            }),
        )
    }
}

impl AppendixCOutcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        match self {
            AppendixCOutcome::Uniform {
                rho_deviation_frobenius,
                w1_to_uniform,
                n_points,
            } => write_json(
                &dir.join("appc1.json"),
                &json!({
                    "rho_deviation_frobenius": rho_deviation_frobenius,
                    "w1_to_uniform": w1_to_uniform,
                    "n_points": n_points,
                }),
            ),
            AppendixCOutcome::Orbit {
                atoms,
                frequencies,
                expected,
                max_deviation,
            } => {
                let k = atoms[0].dim();
                let mut header: Vec<String> = vec!["atom".into()];
                for i in 0..k {
                    header.push(format!("x_re_{i}"));
                    header.push(format!("x_im_{i}"));
                }
                header.push("frequency".into());
                header.push("expected".into());
                let rows: Vec<Vec<String>> = atoms
                    .iter()
                    .zip(frequencies)
                    .enumerate()
                    .map(|(idx, (a, f))| {
                        let mut row = vec![idx.to_string()];
                        for i in 0..k {
                            row.push(a.coeffs()[i].re.to_string());
                            row.push(a.coeffs()[i].im.to_string());
                        }
                        row.push(f.to_string());
                        row.push(expected.to_string());
                        row
                    })
                    .collect();
                write_csv(
                    &dir.join("appc2.csv"),
                    &header.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                    &rows,
                )?;
                write_json(
                    &dir.join("appc2.json"),
                    &json!({
                        "n_atoms": atoms.len(),
                        "expected": expected,
                        "frequencies": frequencies,
                        "max_deviation": max_deviation,
                    }),
                )
            }
        }
    }
}

impl EstimatorDecayOutcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let slope_for = |l: usize| {
            self.per_traj_slope
                .iter()
                .find(|(off, _)| *off == l)
                .map(|(_, s)| *s)
                .unwrap_or(f64::NAN)
        };
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.l.to_string(),
                    r.mean_d.to_string(),
                    slope_for(r.l).to_string(),
                    self.gamma1_hat.to_string(),
                    self.gamma2_hat.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("estimator_decay.csv"),
            &["n", "l", "mean_d", "per_traj_slope", "gamma1_hat", "gamma2_hat"],
            &rows,
        )?;
        write_json(
            &dir.join("estimator_decay.json"),
            &json!({
                "rows": self.rows,
                "per_traj_slope": self.per_traj_slope,
                "gamma1_hat": self.gamma1_hat,
                "gamma2_hat": self.gamma2_hat,
                "f_values": self.f_values,
                "assumption_error": self.assumption_error,
            }),
        )
    }
}

impl ErgodicityOutcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    format!("\"{}\"", r.block),
                    r.length.to_string(),
                    r.time_average.to_string(),
                    r.exact_probability.to_string(),
                    r.gap.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("ergodicity.csv"),
            &["block", "length", "time_average", "exact_probability", "gap"],
            &rows,
        )?;
        write_json(
            &dir.join("ergodicity.json"),
            &json!({
                "max_gap": self.max_gap,
                "n_steps": self.n_steps,
                "rows": self.rows,
            }),
        )
    }
}
