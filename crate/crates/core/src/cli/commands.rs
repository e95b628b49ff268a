use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use super::config::{ProcessSource, RunConfig};
use super::io::{
    read_measure_csv, read_process_file, to_json, write_json, write_measure_csv, write_process_file, write_trace_csv,
};
use super::verify::run_verify;
use crate::error::{Error, Result};
use crate::gbm::{calibrate_from_prices, read_price_csv, simulate_gbm, Calibration, ParamShape};
use crate::lattice::{LatticeProcess, Measure};
use crate::solver::minimize;
use crate::unfairness::{is_martingale, unfairness_m, unfairness_n, UnfairnessConfig};

/// Exit code for a solve that ends outside the constraint class.
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;

/// Tolerance of the martingale check reported by `eval`.
pub const MARTINGALE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Calibrate,
    Eval,
    Optimize,
    Verify,
}

/// Runs a command and returns the process exit code. Errors become exit
/// code 1 in `main`.
pub fn run(command: Command, config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<i32> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)?;
    match command {
        Command::Simulate => cmd_simulate(&cfg, &dir),
        Command::Calibrate => cmd_calibrate(&cfg, &dir),
        Command::Eval => cmd_eval(&cfg, &dir),
        Command::Optimize => cmd_optimize(&cfg, &dir),
        Command::Verify => run_verify(&cfg, &dir),
    }
}

fn calibrate(cfg: &RunConfig) -> Result<Calibration> {
    let Some(ProcessSource::Calibration(source)) = &cfg.process else {
        return Err(Error::Config {
            key: "process".into(),
            message: "`calibrate` needs a `calibration` process source".into(),
        });
    };
    let table = read_price_csv(fs::File::open(&source.csv)?)?;
    let mut series = Vec::new();
    for spec in &source.exchanges {
        for label in spec.labels() {
            let s = table.get(label).ok_or_else(|| Error::Config {
                key: "process.calibration.exchanges".into(),
                message: format!("series {label:?} not found in {}", source.csv.display()),
            })?;
            series.push(s.clone());
        }
    }
    let shape = ParamShape {
        exchanges: source.exchanges.len(),
        dim: source.exchanges[0].labels().len(),
    };
    let calibration = calibrate_from_prices(&series, shape, source.time_unit_seconds)?;
    for w in &calibration.warnings {
        warn!("{w}");
    }
    Ok(calibration)
}

/// The process named by the configuration: simulated, calibrated then
/// simulated, or loaded.
pub fn load_process(cfg: &RunConfig) -> Result<LatticeProcess> {
    match &cfg.process {
        Some(ProcessSource::Gbm(params)) => simulate_gbm(&cfg.lattice()?, params, cfg.seed),
        Some(ProcessSource::Calibration(_)) => {
            let calibration = calibrate(cfg)?;
            simulate_gbm(&cfg.lattice()?, &calibration.params, cfg.seed)
        }
        Some(ProcessSource::File(path)) => {
            let g = read_process_file(path)?;
            if let Some(l) = cfg.lattice {
                let want = l.build()?;
                if want != *g.lattice() {
                    return Err(Error::Config {
                        key: "lattice".into(),
                        message: format!(
                            "process file has branching {} and depth {}, config says {} and {}",
                            g.lattice().branching(),
                            g.lattice().depth(),
                            want.branching(),
                            want.depth()
                        ),
                    });
                }
            }
            Ok(g)
        }
        None => Err(Error::Config {
            key: "process".into(),
            message: "missing; give `gbm`, `calibration` or `file`".into(),
        }),
    }
}

fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let g = load_process(cfg)?;
    let path = dir.join("process.csv");
    write_process_file(&path, &g)?;
    info!("wrote {}", path.display());
    Ok(0)
}

fn cmd_calibrate(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let calibration = calibrate(cfg)?;
    let path = dir.join("params.json");
    write_json(&path, &calibration)?;
    info!("wrote {}", path.display());
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub p: f64,
    /// `"uniform"` or the measure file.
    pub measure: String,
    pub m: f64,
    /// Absent when the process is not positive before the terminal time.
    pub n: Option<f64>,
    pub n_error: Option<String>,
    pub is_martingale: bool,
    pub max_martingale_deviation: f64,
}

pub fn evaluate(cfg: &RunConfig, g: &LatticeProcess) -> Result<EvalReport> {
    let (q, source) = match &cfg.measure {
        Some(path) => (read_measure_csv(fs::File::open(path)?, g.lattice())?, path.display().to_string()),
        None => (Measure::uniform(g.lattice()), "uniform".to_string()),
    };
    let p = cfg.exponent();
    let m = unfairness_m(&q, g, &UnfairnessConfig::with_p(p))?;
    let (n, n_error) = match unfairness_n(&q, g) {
        Ok(n) => (Some(n), None),
        Err(e @ Error::Domain(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let check = is_martingale(&q, g, MARTINGALE_TOL)?;
    Ok(EvalReport {
        p,
        measure: source,
        m,
        n,
        n_error,
        is_martingale: check.is_martingale,
        max_martingale_deviation: check.max_deviation,
    })
}

fn cmd_eval(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let g = load_process(cfg)?;
    let report = evaluate(cfg, &g)?;
    let json = to_json(&report)?;
    fs::write(dir.join("eval.json"), &json)?;
    print!("{json}");
    Ok(0)
}

fn cmd_optimize(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let params = cfg.constraint_params()?;
    let g = load_process(cfg)?;
    let report = minimize(&g, &params, &cfg.solver)?;
    write_json(&dir.join("report.json"), &report)?;
    let mut buf = Vec::new();
    write_measure_csv(&mut buf, g.lattice(), &report.measure)?;
    fs::write(dir.join("measure.csv"), buf)?;
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &report.trace)?;
    fs::write(dir.join("trace.csv"), buf)?;
    println!(
        "value {:e} feasible {} kkt_residual {:e} iterations {}",
        report.value, report.feasible, report.kkt_residual, report.iterations
    );
    if report.feasible {
        Ok(0)
    } else {
        eprintln!("optimization ended outside the constraint class");
        Ok(EXIT_INFEASIBLE)
    }
}
