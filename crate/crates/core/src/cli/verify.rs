use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::commands::{load_process, EXIT_FAILURE};
use super::config::RunConfig;
use super::io::write_json;
use crate::error::Result;
use crate::gbm::{branch_innovations, project_correlation, risk_neutral_binomial_measure, simulate_gbm, GbmParams};
use crate::lattice::{cond_exp, cond_exp_reweighted, AdaptedLattice, Density, LatticeProcess, Measure};
use crate::solver::{minimize, ConstraintParams, Objective, SolveOptions};
use crate::unfairness::{inner_product_m, is_martingale, unfairness_m, unfairness_n, UnfairnessConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    /// Counterexample on failure, reason when skipped.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub instances: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub checks: Vec<CheckResult>,
}

type Outcome = std::result::Result<(), String>;

struct Instance {
    label: String,
    process: LatticeProcess,
    measure: Measure,
}

fn random_lattice(rng: &mut ChaCha8Rng) -> AdaptedLattice {
    let b = rng.random_range(2..=3);
    let k = rng.random_range(1..=3);
    AdaptedLattice::new(b, k).expect("small lattice")
}

fn random_measure(rng: &mut ChaCha8Rng, lattice: &AdaptedLattice) -> Measure {
    Measure::normalized((0..lattice.num_paths()).map(|_| rng.random_range(0.1..1.0)).collect()).expect("positive")
}

fn random_process(rng: &mut ChaCha8Rng, lattice: AdaptedLattice, n: usize, d: usize) -> LatticeProcess {
    LatticeProcess::from_fn(lattice, n, d, |_, _, out| {
        out.iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
    })
    .expect("finite values")
}

fn instance(rng: &mut ChaCha8Rng, i: usize) -> Instance {
    let lattice = random_lattice(rng);
    let (n, d) = (rng.random_range(1..=2), rng.random_range(1..=2));
    Instance {
        label: format!("instance {i} (b={}, K={}, n={n}, d={d})", lattice.branching(), lattice.depth()),
        process: random_process(rng, lattice, n, d),
        measure: random_measure(rng, &lattice),
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300) || a == b
}

struct Suite {
    rng: ChaCha8Rng,
    instances: usize,
    results: Vec<CheckResult>,
}

impl Suite {
    fn record(&mut self, name: String, outcome: Outcome) {
        let (status, detail) = match outcome {
            Ok(()) => (Status::Pass, None),
            Err(e) => (Status::Fail, Some(e)),
        };
        self.results.push(CheckResult { name, status, detail });
    }

    fn skip(&mut self, name: String, reason: &str) {
        self.results.push(CheckResult {
            name,
            status: Status::Skipped,
            detail: Some(reason.into()),
        });
    }

    /// Runs `check` on fresh random instances until one fails.
    fn each_instance(&mut self, name: String, mut check: impl FnMut(&Instance, &mut ChaCha8Rng) -> Outcome) {
        let mut outcome = Ok(());
        for i in 0..self.instances {
            let inst = instance(&mut self.rng, i);
            if let Err(e) = check(&inst, &mut self.rng) {
                outcome = Err(format!("{}: {e}", inst.label));
                break;
            }
        }
        self.record(name, outcome);
    }
}

fn check_refinement(inst: &Instance, _: &mut ChaCha8Rng) -> Outcome {
    let l = inst.process.lattice();
    for k in 0..l.depth() {
        let fine = l.partition(k + 1);
        for coarse in l.partition(k) {
            let inside = fine.iter().filter(|f| f.start >= coarse.start && f.end <= coarse.end).count();
            if inside != l.branching() {
                return Err(format!("block {coarse:?} at time index {k} is not split into {} children", l.branching()));
            }
        }
    }
    Ok(())
}

fn check_tower(inst: &Instance, rng: &mut ChaCha8Rng) -> Outcome {
    let l = inst.process.lattice();
    let x: Vec<f64> = (0..l.num_paths()).map(|_| rng.random_range(-1.0..1.0)).collect();
    for hi in 0..=l.depth() {
        let inner = cond_exp(l, &x, hi, &inst.measure).map_err(|e| e.to_string())?.values;
        for lo in 0..=hi {
            let twice = cond_exp(l, &inner, lo, &inst.measure).map_err(|e| e.to_string())?.values;
            let once = cond_exp(l, &x, lo, &inst.measure).map_err(|e| e.to_string())?.values;
            if let Some((p, (a, b))) = twice.iter().zip(&once).enumerate().find(|(_, (a, b))| (*a - *b).abs() > 1e-12) {
                return Err(format!("E[E[x|{hi}]|{lo}] = {a} but E[x|{lo}] = {b} at path {p}"));
            }
        }
    }
    Ok(())
}

fn check_reweighting(inst: &Instance, rng: &mut ChaCha8Rng) -> Outcome {
    let l = inst.process.lattice();
    let base = Measure::uniform(l);
    let f = Density::between(&inst.measure, &base).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..l.num_paths()).map(|_| rng.random_range(-2.0..2.0)).collect();
    for k in 0..=l.depth() {
        let a = cond_exp_reweighted(l, &x, &f, k, &base).map_err(|e| e.to_string())?;
        let b = cond_exp(l, &x, k, &inst.measure).map_err(|e| e.to_string())?.values;
        if let Some((p, (u, v))) = a.iter().zip(&b).enumerate().find(|(_, (u, v))| (*u - *v).abs() > 1e-12) {
            return Err(format!("time index {k}, path {p}: reweighted {u} vs direct {v}"));
        }
    }
    Ok(())
}

fn terminal_of(g: &LatticeProcess) -> Vec<f64> {
    g.level(g.lattice().depth()).to_vec()
}

fn check_characterization(inst: &Instance, p: f64) -> Outcome {
    let g = &inst.process;
    let l = *g.lattice();
    let mart = LatticeProcess::doob_martingale(l, g.exchanges(), g.dim(), &inst.measure, terminal_of(g))
        .map_err(|e| e.to_string())?;
    let cfg = UnfairnessConfig::with_p(p);
    for (what, x) in [("martingale", &mart), ("random process", g)] {
        let m = unfairness_m(&inst.measure, x, &cfg).map_err(|e| e.to_string())?;
        let check = is_martingale(&inst.measure, x, 1e-9).map_err(|e| e.to_string())?;
        if (m <= 1e-18) != check.is_martingale {
            return Err(format!(
                "{what}: m = {m:e} but one-step check says {} (max deviation {:e})",
                check.is_martingale, check.max_deviation
            ));
        }
    }
    Ok(())
}

fn check_triangle(inst: &Instance, rng: &mut ChaCha8Rng, p: f64) -> Outcome {
    let g = &inst.process;
    let y = random_process(rng, *g.lattice(), g.exchanges(), g.dim());
    let sum = g.combine(1.0, &y, 1.0).map_err(|e| e.to_string())?;
    let cfg = UnfairnessConfig::with_p(p);
    let root = |x: &LatticeProcess| unfairness_m(&inst.measure, x, &cfg).map(|m| m.powf(1.0 / p));
    let (a, b, c) = (root(g), root(&y), root(&sum));
    let (a, b, c) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?, c.map_err(|e| e.to_string())?);
    if c > (a + b) * (1.0 + 1e-9) {
        return Err(format!("m(x+y)^(1/p) = {c} exceeds {a} + {b}"));
    }
    Ok(())
}

fn check_homogeneity(inst: &Instance, rng: &mut ChaCha8Rng, p: f64) -> Outcome {
    let lambda: f64 = rng.random_range(-3.0..3.0);
    let cfg = UnfairnessConfig::with_p(p);
    let scaled = inst.process.scale(lambda).map_err(|e| e.to_string())?;
    let m = unfairness_m(&inst.measure, &inst.process, &cfg).map_err(|e| e.to_string())?;
    let ms = unfairness_m(&inst.measure, &scaled, &cfg).map_err(|e| e.to_string())?;
    let want = lambda.abs().powf(p) * m;
    if !close(ms, want, 1e-9) {
        return Err(format!("m(lambda x) = {ms} but |lambda|^p m(x) = {want} for lambda = {lambda}"));
    }
    Ok(())
}

fn check_scale_invariance(inst: &Instance, rng: &mut ChaCha8Rng) -> Outcome {
    let lambda: f64 = rng.random_range(0.01..100.0);
    let scaled = inst.process.scale(lambda).map_err(|e| e.to_string())?;
    let a = unfairness_n(&inst.measure, &inst.process).map_err(|e| e.to_string())?;
    let b = unfairness_n(&inst.measure, &scaled).map_err(|e| e.to_string())?;
    if !close(a, b, 1e-9) {
        return Err(format!("n(x) = {a} but n({lambda} x) = {b}"));
    }
    Ok(())
}

fn check_inner_product(inst: &Instance, rng: &mut ChaCha8Rng) -> Outcome {
    let g = &inst.process;
    let q = &inst.measure;
    let y = random_process(rng, *g.lattice(), g.exchanges(), g.dim());
    let z = random_process(rng, *g.lattice(), g.exchanges(), g.dim());
    let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let ip = |u: &LatticeProcess, v: &LatticeProcess| inner_product_m(q, u, v).map_err(|e| e.to_string());
    let mix = g.combine(a, &y, b).map_err(|e| e.to_string())?;
    let lhs = ip(&mix, &z)?;
    let rhs = a * ip(g, &z)? + b * ip(&y, &z)?;
    let scale = (a.abs() * ip(g, g)?.sqrt() + b.abs() * ip(&y, &y)?.sqrt()) * ip(&z, &z)?.sqrt();
    if (lhs - rhs).abs() > 1e-9 * scale.max(1e-300) {
        return Err(format!("<a x + b y, z> = {lhs} but a<x,z> + b<y,z> = {rhs}"));
    }
    let (xy, yx) = (ip(g, &y)?, ip(&y, g)?);
    if !close(xy, yx, 1e-9) {
        return Err(format!("<x,y> = {xy} but <y,x> = {yx}"));
    }
    let bound = ip(g, g)? * ip(&y, &y)?;
    if xy * xy > bound * (1.0 + 1e-9) {
        return Err(format!("<x,y>^2 = {} exceeds <x,x><y,y> = {bound}", xy * xy));
    }
    let m2 = unfairness_m(q, g, &UnfairnessConfig::with_p(2.0)).map_err(|e| e.to_string())?;
    if !close(ip(g, g)?, m2, 1e-9) {
        return Err(format!("<x,x> = {} but m(x) = {m2}", ip(g, g)?));
    }
    Ok(())
}

fn check_martingale_orthogonal(inst: &Instance, _: &mut ChaCha8Rng) -> Outcome {
    let g = &inst.process;
    let mart = LatticeProcess::doob_martingale(*g.lattice(), g.exchanges(), g.dim(), &inst.measure, terminal_of(g))
        .map_err(|e| e.to_string())?;
    let v = inner_product_m(&inst.measure, g, &mart).map_err(|e| e.to_string())?;
    if v != 0.0 {
        return Err(format!("<x, martingale> = {v}"));
    }
    Ok(())
}

fn random_correlation(rng: &mut ChaCha8Rng, w: usize) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(w, w, |i, j| if i == j { 1.0 } else { rng.random_range(-0.9..0.9) });
    project_correlation(&raw)
}

fn check_gbm(rng: &mut ChaCha8Rng, instances: usize) -> Outcome {
    for i in 0..instances {
        let w = rng.random_range(1..=3);
        let corr = random_correlation(rng, w);
        let b = rng.random_range(w + 1..=w + 4);
        let z = branch_innovations(&corr, b, rng.random()).map_err(|e| format!("case {i}: {e}"))?;
        let n = z.len() as f64;
        for r in 0..w {
            let mean = z.iter().map(|v| v[r]).sum::<f64>() / n;
            if mean.abs() > 1e-12 {
                return Err(format!("case {i} (b={b}): innovation mean {mean:e} in component {r}"));
            }
            for c in 0..w {
                let cov = z.iter().map(|v| v[r] * v[c]).sum::<f64>() / n;
                if (cov - corr[(r, c)]).abs() > 1e-10 {
                    return Err(format!("case {i} (b={b}): covariance {cov} vs target {}", corr[(r, c)]));
                }
            }
        }
        let lattice = AdaptedLattice::new(b, 2).map_err(|e| e.to_string())?;
        let params = GbmParams {
            drift: vec![vec![rng.random_range(-0.2..0.2)]; w],
            vol: vec![vec![rng.random_range(0.0..0.5)]; w],
            corr: (0..w).map(|r| (0..w).map(|c| corr[(r, c)]).collect()).collect(),
            s0: vec![vec![1.0]; w],
        };
        let g = simulate_gbm(&lattice, &params, rng.random()).map_err(|e| format!("case {i}: {e}"))?;
        if g.min_value() <= 0.0 {
            return Err(format!("case {i}: nonpositive simulated value {}", g.min_value()));
        }
        LatticeProcess::from_path_values(lattice, w, 1, &g.path_values()).map_err(|e| format!("case {i}: {e}"))?;
    }
    Ok(())
}

fn check_zero_recovery(rng: &mut ChaCha8Rng) -> Outcome {
    let up = rng.random_range(1.2..2.0);
    let down = rng.random_range(0.5..0.9);
    let l = AdaptedLattice::new(2, 1).map_err(|e| e.to_string())?;
    let g = LatticeProcess::from_path_values(l, 1, 1, &[vec![1.0, 1.0], vec![up, down]]).map_err(|e| e.to_string())?;
    let oracle = risk_neutral_binomial_measure(&g).map_err(|e| e.to_string())?;
    let n_bound = oracle.weights().iter().map(|w| (2.0 * w).max(0.5 / w)).fold(1.0, f64::max) * 1.1;
    let opts = SolveOptions { restarts: 2, ..SolveOptions::default() };
    for objective in [Objective::Deviation, Objective::DriftRate] {
        let params = ConstraintParams::new(n_bound, 0.0, 2.0, objective);
        let r = minimize(&g, &params, &opts).map_err(|e| e.to_string())?;
        let gap = r.weights().iter().zip(oracle.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if r.value > 1e-8 || gap > 1e-3 {
            return Err(format!(
                "{objective:?} with children ({up}, {down}), N = {n_bound}: value {:e}, weights {:?} vs {:?}",
                r.value,
                r.weights(),
                oracle.weights()
            ));
        }
    }
    Ok(())
}

/// Runs the invariant suites on seeded random instances, plus adaptedness
/// of the configured process if there is one.
pub fn verify_suite(cfg: &RunConfig) -> VerifySummary {
    let mut suite = Suite {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        instances: cfg.verify.instances,
        results: Vec::new(),
    };
    suite.each_instance("lattice.refinement".into(), check_refinement);
    suite.each_instance("cond_exp.tower".into(), check_tower);
    suite.each_instance("cond_exp.reweighting".into(), check_reweighting);
    for &p in &cfg.verify.exponents {
        suite.each_instance(format!("m.martingale_characterization[p={p}]"), |inst, _| check_characterization(inst, p));
        if p < 1.0 {
            suite.skip(format!("m.triangle_inequality[p={p}]"), "skipped: p<1");
        } else {
            suite.each_instance(format!("m.triangle_inequality[p={p}]"), |inst, rng| check_triangle(inst, rng, p));
        }
        suite.each_instance(format!("m.homogeneity[p={p}]"), |inst, rng| check_homogeneity(inst, rng, p));
    }
    suite.each_instance("n.scale_invariance".into(), check_scale_invariance);
    suite.each_instance("inner_product.bilinear_symmetric_cauchy_schwarz".into(), check_inner_product);
    suite.each_instance("inner_product.martingale_orthogonal".into(), check_martingale_orthogonal);
    let gbm = check_gbm(&mut suite.rng, cfg.verify.instances);
    suite.record("gbm.moments_positivity_adaptedness".into(), gbm);
    let zero = check_zero_recovery(&mut suite.rng);
    suite.record("solver.zero_recovery".into(), zero);
    if cfg.process.is_some() {
        let loaded = load_process(cfg).map(|_| ()).map_err(|e| e.to_string());
        suite.record("process.adaptedness".into(), loaded);
    } else {
        suite.skip("process.adaptedness".into(), "skipped: no process configured");
    }

    let count = |s: Status| suite.results.iter().filter(|r| r.status == s).count();
    VerifySummary {
        seed: cfg.seed,
        instances: cfg.verify.instances,
        passed: count(Status::Pass),
        failed: count(Status::Fail),
        skipped: count(Status::Skipped),
        checks: suite.results,
    }
}

pub(crate) fn run_verify(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let summary = verify_suite(cfg);
    for c in &summary.checks {
        match (&c.status, &c.detail) {
            (Status::Pass, _) => println!("PASS {}", c.name),
            (Status::Fail, d) => println!("FAIL {}: {}", c.name, d.as_deref().unwrap_or("")),
            (Status::Skipped, d) => println!("SKIP {}: {}", c.name, d.as_deref().unwrap_or("")),
        }
    }
    println!("{} passed, {} failed, {} skipped", summary.passed, summary.failed, summary.skipped);
    write_json(&dir.join("verify.json"), &summary)?;
    Ok(if summary.failed == 0 { 0 } else { EXIT_FAILURE })
}
