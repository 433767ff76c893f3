//! Random-start experiments: where do runs end up?

use std::io::Write;

use qnewton::linalg::distance;
use qnewton::{Classification, RunResult, Termination};

use crate::trace::fmt_f64;
use crate::CliError;

/// Terminal points closer than this share a basin.
pub const BASIN_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Basin {
    pub x: Vec<f64>,
    pub f: f64,
    pub classification: Classification,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub dim: usize,
    pub num_starts: usize,
    /// Converged runs grouped by terminal point, sorted lexicographically.
    pub basins: Vec<Basin>,
    /// Converged runs whose terminal Hessian is indefinite.
    pub saddle_terminal: usize,
    pub diverged: usize,
    pub max_iterations: usize,
    pub numeric_failure: usize,
    /// `NaN` when there are no runs.
    pub mean_iterations: f64,
    pub mean_armijo_trials: f64,
}

impl BenchSummary {
    /// Aggregates runs; the result does not depend on their order.
    pub fn from_runs(dim: usize, runs: &[RunResult]) -> Self {
        let mut converged: Vec<&RunResult> = runs
            .iter()
            .filter(|r| r.termination == Termination::GradToleranceMet)
            .collect();
        converged.sort_by(|a, b| {
            a.final_x
                .iter()
                .zip(&b.final_x)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut basins: Vec<Basin> = Vec::new();
        for r in &converged {
            match basins
                .iter_mut()
                .find(|b| distance(&b.x, &r.final_x) < BASIN_RADIUS)
            {
                Some(b) => b.count += 1,
                None => basins.push(Basin {
                    x: r.final_x.clone(),
                    f: r.final_f,
                    classification: r.final_report.classification,
                    count: 1,
                }),
            }
        }
        let count = |t: fn(&Termination) -> bool| runs.iter().filter(|r| t(&r.termination)).count();
        let n = runs.len() as f64;
        Self {
            dim,
            num_starts: runs.len(),
            saddle_terminal: converged
                .iter()
                .filter(|r| r.final_report.classification == Classification::Saddle)
                .count(),
            basins,
            diverged: count(|t| *t == Termination::Diverged),
            max_iterations: count(|t| *t == Termination::MaxIterations),
            numeric_failure: count(|t| matches!(t, Termination::NumericFailure(_))),
            mean_iterations: runs.iter().map(|r| r.iterations() as f64).sum::<f64>() / n,
            mean_armijo_trials: runs
                .iter()
                .map(|r| r.total_armijo_trials() as f64)
                .sum::<f64>()
                / n,
        }
    }

    /// Writes aggregate counts as `#` comments followed by one row per basin.
    pub fn write<W: Write>(&self, mut out: W, header: &[(String, String)]) -> Result<(), CliError> {
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "# num_starts={}", self.num_starts)?;
        writeln!(out, "# saddle_terminal={}", self.saddle_terminal)?;
        writeln!(out, "# diverged={}", self.diverged)?;
        writeln!(out, "# max_iterations={}", self.max_iterations)?;
        writeln!(out, "# numeric_failure={}", self.numeric_failure)?;
        writeln!(out, "# mean_iterations={}", fmt_f64(self.mean_iterations))?;
        writeln!(
            out,
            "# mean_armijo_trials={}",
            fmt_f64(self.mean_armijo_trials)
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut cols: Vec<String> = ["basin", "count", "f", "classification"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((0..self.dim).map(|i| format!("x_{i}")));
        w.write_record(&cols)?;
        for (i, b) in self.basins.iter().enumerate() {
            let mut rec = vec![
                i.to_string(),
                b.count.to_string(),
                fmt_f64(b.f),
                b.classification.as_str().to_string(),
            ];
            rec.extend(b.x.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
