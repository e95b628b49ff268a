//! Fairest measures: minimizing an unfairness functional over the
//! constraint class of measures equivalent to the base measure with
//! density in `[1/N, N]` and pairwise correlation integrals at least `c`.

mod brute_force;
mod constraints;
mod objective;
mod projection;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use brute_force::{brute_force_min, GridMinimum, MAX_GRID_POINTS, MAX_GRID_RESOLUTION, MAX_PATHS};
pub use constraints::{
    check_constraints, ConstraintParams, ConstraintReport, CorrelationSlack, Objective, FEASIBILITY_TOL,
};
pub use objective::{FairnessProblem, GradientMethod};
pub use projection::{project_box_simplex, project_onto};

use crate::error::Result;
use crate::lattice::{LatticeProcess, Measure};
use constraints::check_constraints_against;

/// Step used by the projected-gradient stationarity measure.
pub const KKT_STEP: f64 = 1e-6;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
const MAX_STEP: f64 = 1e12;
const RHO_START: f64 = 10.0;
const RHO_GROWTH: f64 = 10.0;
const PENALTY_ROUNDS: usize = 12;
/// Correlation shortfall at which penalty escalation stops.
const PENALTY_TARGET: f64 = 1e-9;
/// Smoothing widths for the kinks of `n`, ending at the exact objective.
const DRIFT_SMOOTHING: [f64; 5] = [1e-1, 1e-3, 1e-5, 1e-7, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Iteration cap per restart and penalty round.
    pub max_iter: usize,
    /// Initial step length of the line search.
    pub step: f64,
    /// Stop once an accepted step improves the objective by less than
    /// `tol` times its previous value.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub gradient: GradientMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step: 1.0,
            tol: 1e-12,
            restarts: 8,
            seed: 0,
            gradient: GradientMethod::FiniteDifference,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub value: f64,
    pub step: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slack {
    pub constraint: String,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub measure: Measure,
    pub value: f64,
    pub kkt_residual: f64,
    pub constraint_slacks: Vec<Slack>,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub feasible: bool,
    /// Restart that produced the result; `None` when the base measure won.
    pub restart: Option<usize>,
    /// Penalty weight in force at the end of the winning run.
    pub penalty_weight: f64,
}

impl SolveReport {
    pub fn weights(&self) -> &[f64] {
        self.measure.weights()
    }
}

fn slack_list(report: &ConstraintReport) -> Vec<Slack> {
    let mut out = Vec::new();
    for (i, s) in report.lower_slack.iter().enumerate() {
        out.push(Slack { constraint: format!("lower[{i}]"), slack: *s });
    }
    for (i, s) in report.upper_slack.iter().enumerate() {
        out.push(Slack { constraint: format!("upper[{i}]"), slack: *s });
    }
    out.push(Slack { constraint: "normalization".into(), slack: report.normalization_slack });
    for c in &report.correlations {
        out.push(Slack {
            constraint: format!("correlation[{},{}]", c.exchanges.0, c.exchanges.1),
            slack: c.slack,
        });
    }
    out
}

/// `|P(q - eta grad) - q| / eta` for the penalized objective at `rho`.
fn projected_gradient_norm(problem: &FairnessProblem, w: &[f64], rho: f64, method: GradientMethod) -> Result<f64> {
    let grad = problem.gradient(w, rho, method)?;
    let trial: Vec<f64> = w.iter().zip(&grad).map(|(x, g)| x - KKT_STEP * g).collect();
    let projected = problem.project(&trial)?;
    let dist = projected.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(dist / KKT_STEP)
}

/// First-order stationarity of the objective at `q` over the box-simplex:
/// the length of the projected gradient step, scaled by the step.
pub fn kkt_residual(q: &Measure, g: &LatticeProcess, params: &ConstraintParams) -> Result<f64> {
    let problem = FairnessProblem::new(g, params)?;
    q.check_lattice(g.lattice())?;
    projected_gradient_norm(&problem, q.weights(), 0.0, GradientMethod::FiniteDifference)
}

struct Run {
    weights: Vec<f64>,
    value: f64,
    penalized: f64,
    violation: f64,
    rho: f64,
    iterations: usize,
    trace: Vec<TraceEntry>,
}

/// Lowest-objective feasible point met so far in a run.
#[derive(Default)]
struct BestFeasible(Option<(f64, Vec<f64>)>);

impl BestFeasible {
    fn offer(&mut self, w: &[f64], value: f64, violation: f64) {
        if violation <= FEASIBILITY_TOL && self.0.as_ref().is_none_or(|(v, _)| value < *v) {
            self.0 = Some((value, w.to_vec()));
        }
    }
}

struct Tracker<'t> {
    iteration: usize,
    trace: &'t mut Vec<TraceEntry>,
    best: BestFeasible,
}

/// Projected gradient descent with Armijo backtracking along the
/// projection arc. Each line search starts from the Barzilai-Borwein
/// step of the last accepted move.
fn descend(
    problem: &FairnessProblem,
    start: Vec<f64>,
    rho: f64,
    eps: f64,
    opts: &SolveOptions,
    tracker: &mut Tracker,
) -> Result<Vec<f64>> {
    let mut w = start;
    let mut f = problem.smoothed(&w, rho, eps);
    let mut t = opts.step;
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..opts.max_iter {
        if f == 0.0 {
            break;
        }
        let grad = problem.smoothed_gradient(&w, rho, eps, opts.gradient)?;
        if let Some((prev_w, prev_grad)) = &last {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..w.len() {
                let s = w[i] - prev_w[i];
                ss += s * s;
                sy += s * (grad[i] - prev_grad[i]);
            }
            t = if sy > 0.0 { ss / sy } else { 2.0 * t };
            t = t.clamp(MIN_STEP, MAX_STEP);
        }
        let accepted = loop {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(x, g)| x - t * g).collect();
            let cand = problem.project(&trial)?;
            let moved: f64 = cand.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum();
            if moved == 0.0 {
                break None;
            }
            let fc = problem.smoothed(&cand, rho, eps);
            if fc <= f - ARMIJO * moved / t {
                break Some((cand, fc));
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((cand, fc)) = accepted else { break };
        let improvement = f - fc;
        last = Some((std::mem::replace(&mut w, cand), grad));
        f = fc;
        tracker.iteration += 1;
        let entry = TraceEntry {
            iteration: tracker.iteration,
            value: problem.objective(&w),
            step: t,
            max_violation: problem.violation(&w),
        };
        tracker.best.offer(&w, entry.value, entry.max_violation);
        tracker.trace.push(entry);
        if improvement <= opts.tol * (f + improvement) {
            break;
        }
    }
    Ok(w)
}

/// Penalty escalation from `start`. A run that ends outside the floor
/// but passed through feasible points descends again from the best of
/// them at the final weight, and returns the best feasible point seen.
fn run_restart(problem: &FairnessProblem, start: Vec<f64>, opts: &SolveOptions) -> Result<Run> {
    let mut trace = Vec::new();
    let mut tracker = Tracker {
        iteration: 0,
        trace: &mut trace,
        best: BestFeasible::default(),
    };
    tracker.best.offer(&start, problem.objective(&start), problem.violation(&start));
    let mut rho = if problem.has_correlation_constraints() { RHO_START } else { 0.0 };
    let widths: &[f64] = match problem.params().objective {
        Objective::DriftRate => &DRIFT_SMOOTHING,
        Objective::Deviation => &[0.0],
    };
    let sweep = |w: Vec<f64>, rho: f64, tracker: &mut Tracker| -> Result<Vec<f64>> {
        widths.iter().try_fold(w, |w, &eps| descend(problem, w, rho, eps, opts, tracker))
    };
    let mut w = start;
    for round in 0..PENALTY_ROUNDS {
        w = sweep(w, rho, &mut tracker)?;
        if rho == 0.0 || problem.violation(&w) <= PENALTY_TARGET || round + 1 == PENALTY_ROUNDS {
            break;
        }
        rho *= RHO_GROWTH;
    }
    if problem.violation(&w) > FEASIBILITY_TOL {
        if let Some((_, from)) = tracker.best.0.clone() {
            sweep(from, rho, &mut tracker)?;
        }
    }
    if let Some((_, best)) = tracker.best.0.take() {
        w = best;
    }
    let iterations = tracker.iteration;
    Ok(Run {
        value: problem.objective(&w),
        penalized: problem.penalized(&w, rho),
        violation: problem.violation(&w),
        weights: w,
        rho,
        iterations,
        trace,
    })
}

fn random_start(problem: &FairnessProblem, seed: u64, restart: usize) -> Result<Vec<f64>> {
    if restart == 0 {
        return Ok(problem.base().weights().to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let (lo, hi) = problem.bounds();
    let raw: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect();
    problem.project(&raw)
}

/// Minimizes the configured unfairness functional over the constraint
/// class. Restart 0 starts at the base measure, the others at seeded
/// random feasible points; restarts run in parallel and the merge is
/// deterministic.
pub fn minimize(g: &LatticeProcess, params: &ConstraintParams, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let problem = FairnessProblem::new(g, params)?;
    let runs: Vec<Run> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| run_restart(&problem, random_start(&problem, opts.seed, r)?, opts))
        .collect::<Result<_>>()?;

    let base = problem.base().weights().to_vec();
    let base_value = problem.objective(&base);
    let base_feasible = problem.violation(&base) <= FEASIBILITY_TOL;

    let best_feasible = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.violation <= FEASIBILITY_TOL)
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)));
    let (weights, restart, run) = match best_feasible {
        Some((_, r)) if base_feasible && base_value < r.value => (base, None, None),
        None if base_feasible => (base, None, None),
        Some((i, r)) => (r.weights.clone(), Some(i), Some(r)),
        None => {
            let (i, r) = runs
                .iter()
                .enumerate()
                .min_by(|(i, a), (j, b)| a.penalized.total_cmp(&b.penalized).then(i.cmp(j)))
                .expect("at least one restart");
            (r.weights.clone(), Some(i), Some(r))
        }
    };
    let rho = run.map_or(0.0, |r| r.rho);
    let constraints = check_constraints_against(&weights, g, params, problem.base())?;
    let kkt = projected_gradient_norm(&problem, &weights, rho, opts.gradient)?;
    Ok(SolveReport {
        value: problem.objective(&weights).max(0.0),
        measure: Measure::new(weights)?,
        kkt_residual: kkt,
        constraint_slacks: slack_list(&constraints),
        iterations: run.map_or(0, |r| r.iterations),
        trace: run.map_or_else(Vec::new, |r| r.trace.clone()),
        feasible: constraints.feasible,
        restart,
        penalty_weight: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::AdaptedLattice;

    fn canonical() -> LatticeProcess {
        let l = AdaptedLattice::new(2, 1).unwrap();
        LatticeProcess::from_path_values(l, 1, 1, &[vec![1.0, 1.0], vec![2.0, 0.5]]).unwrap()
    }

    fn params(n: f64, objective: Objective) -> ConstraintParams {
        ConstraintParams::new(n, 0.0, 2.0, objective)
    }

    #[test]
    fn recovers_risk_neutral_measure() {
        let g = canonical();
        for objective in [Objective::Deviation, Objective::DriftRate] {
            let r = minimize(&g, &params(2.0, objective), &SolveOptions::default()).unwrap();
            assert!(r.feasible);
            assert!(r.value <= 1e-8, "{objective:?}: {}", r.value);
            assert!((r.weights()[0] - 1.0 / 3.0).abs() < 1e-3, "{objective:?}: {:?}", r.weights());
        }
    }

    #[test]
    fn tight_box_stops_at_nearest_edge() {
        let g = canonical();
        let p = params(1.2, Objective::Deviation);
        let r = minimize(&g, &p, &SolveOptions::default()).unwrap();
        let grid = brute_force_min(&g, &p, 2000).unwrap();
        assert!((r.weights()[0] - 0.5 / 1.2).abs() < 1e-9);
        assert!((r.value - grid.value).abs() <= 1e-4f64.max(1e-3 * grid.value));
    }

    #[test]
    fn singleton_box_returns_base() {
        let g = canonical();
        let r = minimize(&g, &params(1.0, Objective::Deviation), &SolveOptions::default()).unwrap();
        assert_eq!(r.weights(), &[0.5, 0.5]);
        assert!((r.value - 0.0625).abs() < 1e-15);
        assert!(r.feasible);
    }

    #[test]
    fn kkt_examples() {
        let g = canonical();
        let p = params(2.0, Objective::Deviation);
        let opt = Measure::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(kkt_residual(&opt, &g, &p).unwrap() <= 1e-5);
        let u = Measure::uniform(g.lattice());
        assert!(kkt_residual(&u, &g, &p).unwrap() > 1e-3);
        let constant = g.map(|_| 2.0).unwrap();
        for q in [&u, &opt] {
            assert_eq!(kkt_residual(q, &constant, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn unreachable_floor_is_reported_infeasible() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let g = LatticeProcess::from_path_values(l, 2, 1, &[vec![1.0, 1.0, 1.0, 1.0], vec![2.0, 2.0, 0.5, 0.5]]).unwrap();
        let p = ConstraintParams::new(2.0, 0.9, 2.0, Objective::Deviation);
        let r = minimize(&g, &p, &SolveOptions::default()).unwrap();
        assert!(!r.feasible);
        assert!(r.constraint_slacks.iter().any(|s| s.constraint == "correlation[0,1]" && s.slack < 0.0));
    }

    #[test]
    fn result_is_reproducible() {
        let l = AdaptedLattice::new(2, 2).unwrap();
        let g = LatticeProcess::from_fn(l, 1, 1, |k, prefix, out| {
            out[0] = 1.0 + prefix.iter().map(|&d| d as f64 * 0.3 - 0.1).sum::<f64>() + 0.05 * k as f64;
        })
        .unwrap();
        let p = params(1.5, Objective::Deviation);
        let a = minimize(&g, &p, &SolveOptions::default()).unwrap();
        let b = minimize(&g, &p, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
