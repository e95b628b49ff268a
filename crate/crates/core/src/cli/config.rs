use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gbm::GbmParams;
use crate::lattice::AdaptedLattice;
use crate::solver::{ConstraintParams, Objective, SolveOptions};

/// One Julian year in seconds.
pub const DEFAULT_TIME_UNIT_SECONDS: f64 = 31_557_600.0;

/// A run configuration. Relative paths are resolved against the directory
/// of the configuration file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: Option<LatticeConfig>,
    pub process: Option<ProcessSource>,
    /// Seed for lattice simulation.
    #[serde(default)]
    pub seed: u64,
    pub constraints: Option<ConstraintConfig>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub solver: SolveOptions,
    /// Measure file for `eval`; the base measure when absent.
    pub measure: Option<PathBuf>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_objective() -> Objective {
    Objective::Deviation
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(alias = "b")]
    pub branching: usize,
    #[serde(alias = "K")]
    pub depth: usize,
    #[serde(default = "default_budget")]
    pub path_budget: usize,
}

fn default_budget() -> usize {
    AdaptedLattice::DEFAULT_PATH_BUDGET
}

impl LatticeConfig {
    pub fn build(&self) -> Result<AdaptedLattice> {
        AdaptedLattice::with_budget(self.branching, self.depth, self.path_budget)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSource {
    /// Simulate correlated GBMs with these parameters.
    Gbm(GbmParams),
    /// Calibrate GBM parameters from a price file, then simulate.
    Calibration(CalibrationSource),
    /// Load a process file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSource {
    /// CSV with header `timestamp,exchange,price`.
    pub csv: PathBuf,
    /// Series labels per exchange: a label, or a list of labels, one per
    /// component.
    pub exchanges: Vec<ExchangeSpec>,
    #[serde(default = "default_time_unit")]
    pub time_unit_seconds: f64,
}

fn default_time_unit() -> f64 {
    DEFAULT_TIME_UNIT_SECONDS
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ExchangeSpec {
    Single(String),
    Components(Vec<String>),
}

impl ExchangeSpec {
    pub fn labels(&self) -> Vec<&str> {
        match self {
            Self::Single(s) => vec![s.as_str()],
            Self::Components(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    #[serde(rename = "N")]
    pub equivalence_bound: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Randomized instances per check.
    pub instances: usize,
    /// Exponents of `m` to check.
    pub exponents: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            exponents: vec![0.5, 1.0, 2.0, 3.0],
        }
    }
}

impl RunConfig {
    /// Parses JSON text. Errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            key: path_key(&e.path().to_string()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: "<file>".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg = Self::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        cfg.check_files()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match &mut self.process {
            Some(ProcessSource::Calibration(c)) => fix(&mut c.csv),
            Some(ProcessSource::File(f)) => fix(f),
            _ => {}
        }
        if let Some(m) = &mut self.measure {
            fix(m);
        }
        fix(&mut self.output.dir);
    }

    fn check_files(&self) -> Result<()> {
        let missing = |key: &str, p: &Path| Error::Config {
            key: key.into(),
            message: format!("file {} does not exist", p.display()),
        };
        match &self.process {
            Some(ProcessSource::Calibration(c)) if !c.csv.is_file() => return Err(missing("process.calibration.csv", &c.csv)),
            Some(ProcessSource::File(f)) if !f.is_file() => return Err(missing("process.file", f)),
            _ => {}
        }
        if let Some(m) = self.measure.as_ref().filter(|m| !m.is_file()) {
            return Err(missing("measure", m));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if let Some(l) = &self.lattice {
            if let Err(e) = l.build() {
                return bad("lattice", e.to_string());
            }
        }
        match &self.process {
            Some(ProcessSource::Gbm(p)) => {
                if let Err(e) = p.validate() {
                    return bad("process.gbm", e.to_string());
                }
            }
            Some(ProcessSource::Calibration(c)) => {
                if c.exchanges.is_empty() {
                    return bad("process.calibration.exchanges", "need at least one exchange".into());
                }
                let d = c.exchanges[0].labels().len();
                if d == 0 || c.exchanges.iter().any(|e| e.labels().len() != d) {
                    return bad(
                        "process.calibration.exchanges",
                        "every exchange needs the same positive number of components".into(),
                    );
                }
                if !(c.time_unit_seconds.is_finite() && c.time_unit_seconds > 0.0) {
                    return bad("process.calibration.time_unit_seconds", "must be positive".into());
                }
            }
            _ => {}
        }
        if let Some(c) = self.constraints {
            if let Err(e) = self.constraint_params_from(c).validate() {
                return bad("constraints", e.to_string());
            }
        }
        if let Err(e) = self.solver.validate() {
            return bad("solver", e.to_string());
        }
        if let Some(p) = self.verify.exponents.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return bad("verify.exponents", format!("exponent {p} must be positive"));
        }
        Ok(())
    }

    fn constraint_params_from(&self, c: ConstraintConfig) -> ConstraintParams {
        ConstraintParams::new(c.equivalence_bound, c.c, c.p, self.objective)
    }

    /// Constraint parameters combined with the objective; required by
    /// `optimize`.
    pub fn constraint_params(&self) -> Result<ConstraintParams> {
        let c = self.constraints.ok_or_else(|| Error::Config {
            key: "constraints".into(),
            message: "missing; `optimize` needs {\"N\": ..., \"c\": ..., \"p\": ...}".into(),
        })?;
        Ok(self.constraint_params_from(c))
    }

    /// Exponent of `m` for evaluation.
    pub fn exponent(&self) -> f64 {
        self.constraints.map_or(default_p(), |c| c.p)
    }

    pub fn lattice(&self) -> Result<AdaptedLattice> {
        self.lattice
            .ok_or_else(|| Error::Config {
                key: "lattice".into(),
                message: "missing; needed to build a process".into(),
            })?
            .build()
    }

    /// Applies a command-line seed to both the simulation and the solver.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.solver.seed = seed;
    }
}

fn path_key(path: &str) -> String {
    if path.is_empty() || path == "." {
        "<root>".into()
    } else {
        path.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_gbm_config() {
        let cfg = RunConfig::from_json(
            r#"{"lattice": {"b": 2, "K": 3},
                "process": {"gbm": {"drift": [[0.1]], "vol": [[0.2]], "corr": [[1.0]], "s0": [[1.0]]}},
                "constraints": {"N": 2.0, "c": 0.0, "p": 2},
                "objective": "n",
                "solver": {"restarts": 3}}"#,
        )
        .unwrap();
        assert_eq!(cfg.lattice.unwrap().depth, 3);
        assert_eq!(cfg.objective, Objective::DriftRate);
        assert_eq!(cfg.solver.restarts, 3);
        assert_eq!(cfg.solver.max_iter, SolveOptions::default().max_iter);
        assert_eq!(cfg.constraint_params().unwrap().equivalence_bound, 2.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json(r#"{"solver": {"restart": 3}}"#).unwrap_err();
        match err {
            Error::Config { key, message } => {
                assert_eq!(key, "solver.restart");
                assert!(message.contains("restart"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = RunConfig::from_json(r#"{"lattice": {"b": "two", "K": 1}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "lattice.b"), "{err:?}");
    }

    #[test]
    fn invalid_correlation_is_a_config_error() {
        let err = RunConfig::from_json(
            r#"{"process": {"gbm": {"drift": [[0.1],[0.1]], "vol": [[0.2],[0.2]],
                "corr": [[1.0, 2.0],[2.0, 1.0]], "s0": [[1.0],[1.0]]}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "process.gbm"), "{err:?}");
    }

    #[test]
    fn exchange_specs() {
        let cfg = RunConfig::from_json(
            r#"{"process": {"calibration": {"csv": "p.csv", "exchanges": [["a1", "a2"], ["b1", "b2"]]}}}"#,
        )
        .unwrap();
        let Some(ProcessSource::Calibration(c)) = cfg.process else { panic!() };
        assert_eq!(c.exchanges[1].labels(), vec!["b1", "b2"]);
        assert_eq!(c.time_unit_seconds, DEFAULT_TIME_UNIT_SECONDS);
        assert!(RunConfig::from_json(
            r#"{"process": {"calibration": {"csv": "p.csv", "exchanges": ["a", ["b1", "b2"]]}}}"#
        )
        .is_err());
    }

    #[test]
    fn seed_override_hits_both_seeds() {
        let mut cfg = RunConfig::from_json("{}").unwrap();
        cfg.override_seed(17);
        assert_eq!((cfg.seed, cfg.solver.seed), (17, 17));
    }
}
