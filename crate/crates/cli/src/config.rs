//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use qnewton::objective::corpus_function;
use qnewton::polysys::{self, complex_to_real, parse_complex_system, parse_system, system_cost};
use qnewton::{BasisStrategy, CostFunction, PolySystem, StepperConfig, Variant};

use crate::CliError;

/// Flat configuration shared by `run` and `bench`. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus name or path to a polynomial system file (relative paths are
    /// resolved against the config file's directory).
    pub objective: String,
    /// Treat the polynomial file as a complex system.
    #[serde(default)]
    pub complex: bool,
    pub variant: Option<String>,
    pub tau: Option<f64>,
    pub gamma0: Option<f64>,
    pub basis_strategy: Option<String>,
    pub deltas: Option<Vec<f64>>,
    pub delta_seed: Option<u64>,
    pub random_delta_mode: Option<bool>,
    pub x0: Option<Vec<f64>>,
    /// Per-coordinate `[lo, hi]` bounds for random starts.
    pub start_box: Option<Vec<[f64; 2]>>,
    pub num_starts: Option<usize>,
    pub start_seed: Option<u64>,
    pub max_iterations: Option<usize>,
    pub grad_tolerance: Option<f64>,
    /// Trace CSV for `run`, summary CSV for `bench`; stdout when absent.
    pub output: Option<PathBuf>,
}

/// A configuration resolved against its objective.
pub struct Problem {
    pub label: String,
    pub cost: CostFunction,
    pub stepper: StepperConfig,
    /// Set for polynomial objectives.
    pub system: Option<PolySystem>,
    pub start_seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        if corpus_function(&self.objective, 1).is_none() {
            let p = Path::new(&self.objective);
            if p.is_relative() {
                self.objective = dir.join(p).to_string_lossy().into_owned();
            }
        }
        if let Some(out) = &self.output {
            if out.is_relative() {
                self.output = Some(dir.join(out));
            }
        }
    }

    fn dim_hint(&self) -> Option<usize> {
        self.x0
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.start_box.as_ref().map(Vec::len))
    }

    /// Loads the objective and builds a validated stepper configuration.
    pub fn resolve(&self) -> Result<Problem, CliError> {
        let (cost, system) = match corpus_function(&self.objective, self.dim_hint().unwrap_or(2)) {
            Some(f) => (f, None),
            None => {
                let text = fs::read_to_string(&self.objective).map_err(|e| {
                    CliError::Config(format!(
                        "objective '{}' is neither a corpus function nor a readable file: {e}",
                        self.objective
                    ))
                })?;
                let sys = if self.complex {
                    complex_to_real(&parse_complex_system(&text)?)?
                } else {
                    parse_system(&text)?
                };
                (system_cost(&sys), Some(sys))
            }
        };
        let dim = cost.dim();
        if let Some(hint) = self.dim_hint() {
            if hint != dim {
                return Err(CliError::Config(format!(
                    "objective '{}' has dimension {dim} but the start has dimension {hint}",
                    self.objective
                )));
            }
        }
        if let Some(b) = &self.start_box {
            if let Some([lo, hi]) = b.iter().find(|[lo, hi]| !(lo <= hi)) {
                return Err(CliError::Config(format!(
                    "start_box entry [{lo}, {hi}] has lo > hi"
                )));
            }
        }

        let variant: Variant = self.variant.as_deref().unwrap_or("G").parse()?;
        let delta_seed = self.delta_seed.unwrap_or(0);
        let mut stepper = StepperConfig::for_variant(variant, dim, delta_seed);
        match (self.tau, &system) {
            (Some(tau), _) => stepper = stepper.with_tau(tau),
            (None, Some(sys)) if variant == Variant::G => {
                stepper = stepper.with_tau(polysys::tau0(sys)?.tau)
            }
            _ => {}
        }
        if let Some(g) = self.gamma0 {
            stepper = stepper.with_gamma0(g);
        }
        if let Some(name) = &self.basis_strategy {
            stepper = stepper.with_basis(BasisStrategy::from_name(name)?);
        }
        if let Some(d) = &self.deltas {
            stepper = stepper.with_deltas(d.clone());
        }
        if let Some(on) = self.random_delta_mode {
            stepper = stepper.with_random_delta_mode(on);
        }
        if let Some(n) = self.max_iterations {
            stepper = stepper.with_max_iterations(n);
        }
        if let Some(t) = self.grad_tolerance {
            stepper = stepper.with_grad_tolerance(t);
        }
        stepper.validate(dim)?;
        Ok(Problem {
            label: self.objective.clone(),
            cost,
            stepper,
            system,
            start_seed: self.start_seed.unwrap_or(0),
        })
    }

    /// Start points: `x0` alone, or `num_starts` uniform draws from `start_box`.
    pub fn starts(&self, seed: u64) -> Result<Vec<Vec<f64>>, CliError> {
        match (&self.x0, &self.start_box) {
            (Some(x0), _) => Ok(vec![x0.clone()]),
            (None, Some(b)) => {
                let bounds: Vec<(f64, f64)> = b.iter().map(|[lo, hi]| (*lo, *hi)).collect();
                let n = self.num_starts.unwrap_or(1);
                Ok(polysys::uniform_starts(&bounds, n, seed))
            }
            (None, None) => Err(CliError::Config("config needs x0 or start_box".into())),
        }
    }
}
