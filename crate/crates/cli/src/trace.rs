//! Trace CSV.
//!
//! Leading `# key=value` comment lines record seeds and settings, followed by
//! a header row and one row per step:
//!
//! ```text
//! iter,f,grad_norm,delta_index,gamma,armijo_trials,w_norm,dirderiv,cond_ratio,x_0,...,x_{m-1}
//! ```
//!
//! The last row holds the terminal iterate with the step columns left empty.
//! Floats are written with 17 significant digits so reading a trace back
//! reproduces every value exactly.

use std::io::{Read, Write};

use qnewton::linalg::norm;
use qnewton::{RunResult, StepperConfig};

use crate::CliError;

pub const STEP_COLUMNS: [&str; 9] = [
    "iter",
    "f",
    "grad_norm",
    "delta_index",
    "gamma",
    "armijo_trials",
    "w_norm",
    "dirderiv",
    "cond_ratio",
];

/// Step columns of a trace row; absent on the terminal row.
#[derive(Debug, Clone, PartialEq)]
pub struct StepColumns {
    /// `None` in random-δ mode.
    pub delta_index: Option<usize>,
    pub gamma: f64,
    pub armijo_trials: usize,
    pub w_norm: f64,
    pub dirderiv: f64,
    pub cond_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step: Option<StepColumns>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    /// `(key, value)` pairs from the comment header, in order.
    pub comments: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|d| fmt_f64(*d)).collect::<Vec<_>>().join(" ")
}

impl Trace {
    pub fn from_run(label: &str, config: &StepperConfig, result: &RunResult) -> Self {
        let comments = vec![
            ("objective".into(), label.to_string()),
            ("variant".into(), config.variant.to_string()),
            ("basis".into(), config.basis_strategy.name().into()),
            ("tau".into(), fmt_f64(config.tau)),
            ("delta_seed".into(), result.delta_seed.to_string()),
            ("deltas".into(), fmt_list(&result.deltas)),
            ("kappa".into(), fmt_f64(result.kappa)),
            (
                "random_delta_mode".into(),
                config.random_delta_mode.to_string(),
            ),
            ("termination".into(), result.termination.as_str().into()),
        ];
        let mut rows: Vec<TraceRow> = result
            .trace
            .iter()
            .map(|r| TraceRow {
                iter: r.iteration,
                f: r.f_value,
                grad_norm: r.grad_norm,
                step: Some(StepColumns {
                    delta_index: r.outcome.delta_index,
                    gamma: r.outcome.gamma,
                    armijo_trials: r.outcome.armijo_trials,
                    w_norm: norm(&r.outcome.w),
                    dirderiv: r.outcome.directional_derivative,
                    cond_ratio: r.outcome.cond_ratio,
                }),
                x: r.x.clone(),
            })
            .collect();
        rows.push(TraceRow {
            iter: result.trace.len(),
            f: result.final_f,
            grad_norm: result.final_grad_norm,
            step: None,
            x: result.final_x.clone(),
        });
        Self { comments, rows }
    }

    pub fn comment(&self, key: &str) -> Option<&str> {
        self.comments
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Number of recorded steps (rows other than the terminal one).
    pub fn steps(&self) -> usize {
        self.rows.iter().filter(|r| r.step.is_some()).count()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.x.len())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), CliError> {
        for (k, v) in &self.comments {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = STEP_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((0..self.dim()).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.iter.to_string(), fmt_f64(r.f), fmt_f64(r.grad_norm)];
            match &r.step {
                Some(s) => rec.extend([
                    s.delta_index.map(|d| d.to_string()).unwrap_or_default(),
                    fmt_f64(s.gamma),
                    s.armijo_trials.to_string(),
                    fmt_f64(s.w_norm),
                    fmt_f64(s.dirderiv),
                    fmt_f64(s.cond_ratio),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 6)),
            }
            rec.extend(r.x.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self, CliError> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let comments = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .filter_map(|l| {
                let (k, v) = l.trim_start_matches('#').trim_start().split_once('=')?;
                Some((k.to_string(), v.to_string()))
            })
            .collect();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        let bad = |msg: String| CliError::Config(format!("trace: {msg}"));
        if header.len() < STEP_COLUMNS.len()
            || header.iter().zip(STEP_COLUMNS).any(|(h, want)| h != want)
        {
            return Err(bad(format!(
                "header must start with {}",
                STEP_COLUMNS.join(",")
            )));
        }
        let dim = header.len() - STEP_COLUMNS.len();
        for (i, h) in header.iter().skip(STEP_COLUMNS.len()).enumerate() {
            if h != format!("x_{i}") {
                return Err(bad(format!("expected column x_{i}, found '{h}'")));
            }
        }

        let mut rows = Vec::new();
        for (n, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = n + 2;
            let float = |i: usize| -> Result<f64, CliError> {
                rec[i]
                    .parse()
                    .map_err(|_| bad(format!("row {line}: column {} is not a number", &header[i])))
            };
            let int = |i: usize| -> Result<usize, CliError> {
                rec[i].parse().map_err(|_| {
                    bad(format!(
                        "row {line}: column {} is not an integer",
                        &header[i]
                    ))
                })
            };
            let step = if (3..9).all(|i| rec[i].is_empty()) {
                None
            } else {
                Some(StepColumns {
                    delta_index: if rec[3].is_empty() {
                        None
                    } else {
                        Some(int(3)?)
                    },
                    gamma: float(4)?,
                    armijo_trials: int(5)?,
                    w_norm: float(6)?,
                    dirderiv: float(7)?,
                    cond_ratio: float(8)?,
                })
            };
            let x = (0..dim)
                .map(|j| float(STEP_COLUMNS.len() + j))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(TraceRow {
                iter: int(0)?,
                f: float(1)?,
                grad_norm: float(2)?,
                step,
                x,
            });
        }
        Ok(Self { comments, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn rejects_foreign_header() {
        let err = Trace::read("a,b,c\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            Just(0.0),
            Just(-0.0)
        ]
    }

    fn row(dim: usize) -> impl Strategy<Value = TraceRow> {
        (
            0usize..10_000,
            finite(),
            finite(),
            prop::option::of((
                prop::option::of(0usize..10),
                finite(),
                0usize..100,
                finite(),
                finite(),
                finite(),
            )),
            prop::collection::vec(finite(), dim),
        )
            .prop_map(|(iter, f, grad_norm, step, x)| TraceRow {
                iter,
                f,
                grad_norm,
                step: step.map(
                    |(delta_index, gamma, armijo_trials, w_norm, dirderiv, cond_ratio)| {
                        StepColumns {
                            delta_index,
                            gamma,
                            armijo_trials,
                            w_norm,
                            dirderiv,
                            cond_ratio,
                        }
                    },
                ),
                x,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trips(rows in (1usize..4).prop_flat_map(|d| prop::collection::vec(row(d), 1..6)), seed in any::<u64>()) {
            let trace = Trace {
                comments: vec![("delta_seed".into(), seed.to_string())],
                rows,
            };
            let text = trace.to_csv_string();
            let back = Trace::read(text.as_bytes()).unwrap();
            let seed_text = seed.to_string();
            prop_assert_eq!(back.comment("delta_seed"), Some(seed_text.as_str()));
            prop_assert_eq!(back.rows.len(), trace.rows.len());
            for (a, b) in back.rows.iter().zip(&trace.rows) {
                // compare bitwise so -0.0 and 0.0 are distinguished
                prop_assert_eq!(a.iter, b.iter);
                prop_assert_eq!(a.f.to_bits(), b.f.to_bits());
                prop_assert_eq!(a.grad_norm.to_bits(), b.grad_norm.to_bits());
                prop_assert_eq!(&a.step, &b.step);
                prop_assert_eq!(
                    a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }
}
