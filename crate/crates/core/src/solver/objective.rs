use serde::{Deserialize, Serialize};

use super::constraints::{constrained_pairs, correlation_integral, level_moments};
use super::projection::project_onto;
use super::{ConstraintParams, Objective};
use crate::error::{Error, Result};
use crate::lattice::{level_weights, one_step_average, LatticeProcess, Measure};
use crate::unfairness::{
    check_positive_before_terminal, conditioned_on_all_levels, deviation_functional, drift_rate_functional,
    norm_pow, UnfairnessConfig,
};

/// How the solver differentiates the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    #[default]
    FiniteDifference,
    Analytic,
}

/// A fairest-measure problem on a fixed process, with the uniform base
/// measure. All functions take raw path weights and extend the normalized
/// formulas by using block masses as denominators, so they are smooth off
/// the simplex and both gradients see the same function.
#[derive(Debug, Clone)]
pub struct FairnessProblem<'a> {
    g: &'a LatticeProcess,
    params: ConstraintParams,
    cfg: UnfairnessConfig,
    pairs: Vec<(usize, usize)>,
    base: Measure,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> FairnessProblem<'a> {
    pub fn new(g: &'a LatticeProcess, params: &ConstraintParams) -> Result<Self> {
        params.validate()?;
        if params.objective == Objective::DriftRate {
            check_positive_before_terminal(g)?;
        }
        let pairs = constrained_pairs(g, params)?;
        let base = Measure::uniform(g.lattice());
        let (lo, hi) = params.bounds(&base)?;
        Ok(Self {
            g,
            params: *params,
            cfg: params.unfairness_config(),
            pairs,
            base,
            lo,
            hi,
        })
    }

    pub fn process(&self) -> &LatticeProcess {
        self.g
    }

    pub fn params(&self) -> &ConstraintParams {
        &self.params
    }

    pub fn base(&self) -> &Measure {
        &self.base
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn has_correlation_constraints(&self) -> bool {
        !self.pairs.is_empty()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        project_onto(v, &self.lo, &self.hi)
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.base.len() {
            return Err(Error::InvalidArgument(format!(
                "weight vector has {} entries but the lattice has {} paths",
                w.len(),
                self.base.len()
            )));
        }
        Ok(())
    }

    /// The unfairness functional being minimized.
    pub fn objective(&self, w: &[f64]) -> f64 {
        match self.params.objective {
            Objective::Deviation => deviation_functional(self.g, w, &self.cfg),
            Objective::DriftRate => drift_rate_functional(self.g, w),
        }
    }

    fn shortfalls(&self, w: &[f64]) -> Vec<f64> {
        if self.pairs.is_empty() {
            return Vec::new();
        }
        let weights = level_weights(self.g.lattice(), w);
        self.pairs
            .iter()
            .map(|&(i, j)| (self.params.correlation_floor - correlation_integral(self.g, &weights, i, j)).max(0.0))
            .collect()
    }

    /// Largest amount by which a correlation integral falls short of the floor.
    pub fn violation(&self, w: &[f64]) -> f64 {
        self.shortfalls(w).into_iter().fold(0.0, f64::max)
    }

    /// `sum over pairs of max(0, c - integral)^2`.
    pub fn penalty(&self, w: &[f64]) -> f64 {
        self.shortfalls(w).iter().map(|s| s * s).sum()
    }

    pub fn penalized(&self, w: &[f64], rho: f64) -> f64 {
        self.smoothed(w, rho, 0.0)
    }

    /// Penalized objective with every `|rate|` of `n` replaced by its Huber
    /// smoothing of width `eps`, which overstates `n` by at most
    /// `eps * n * d / 2` and has the same zeros. `m` is left as is.
    pub fn smoothed(&self, w: &[f64], rho: f64, eps: f64) -> f64 {
        let f = match self.params.objective {
            Objective::DriftRate if eps > 0.0 => self.smoothed_drift_rate(w, eps),
            _ => self.objective(w),
        };
        if rho == 0.0 || self.pairs.is_empty() {
            f
        } else {
            f + rho * self.penalty(w)
        }
    }

    pub fn gradient(&self, w: &[f64], rho: f64, method: GradientMethod) -> Result<Vec<f64>> {
        self.smoothed_gradient(w, rho, 0.0, method)
    }

    pub fn smoothed_gradient(&self, w: &[f64], rho: f64, eps: f64, method: GradientMethod) -> Result<Vec<f64>> {
        match method {
            GradientMethod::FiniteDifference => {
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                self.fd(w, rho, eps, 1e-7 * norm.max(1.0))
            }
            GradientMethod::Analytic => self.analytic(w, rho, eps),
        }
    }

    /// Central differences of the penalized objective with step `h`.
    pub fn fd_gradient(&self, w: &[f64], rho: f64, h: f64) -> Result<Vec<f64>> {
        self.fd(w, rho, 0.0, h)
    }

    fn fd(&self, w: &[f64], rho: f64, eps: f64, h: f64) -> Result<Vec<f64>> {
        self.check_len(w)?;
        let mut x = w.to_vec();
        let mut grad = Vec::with_capacity(w.len());
        for i in 0..w.len() {
            x[i] = w[i] + h;
            let up = self.smoothed(&x, rho, eps);
            x[i] = w[i] - h;
            let down = self.smoothed(&x, rho, eps);
            x[i] = w[i];
            grad.push((up - down) / (2.0 * h));
        }
        Ok(grad)
    }

    /// Exact gradient of the penalized objective. At kinks (a zero
    /// deviation in `m` with `p <= 1`, a zero drift in `n`) the
    /// one-sided terms are dropped.
    pub fn analytic_gradient(&self, w: &[f64], rho: f64) -> Result<Vec<f64>> {
        self.analytic(w, rho, 0.0)
    }

    fn analytic(&self, w: &[f64], rho: f64, eps: f64) -> Result<Vec<f64>> {
        self.check_len(w)?;
        let mut grad = match self.params.objective {
            Objective::Deviation => self.deviation_gradient(w),
            Objective::DriftRate => self.drift_rate_gradient(w, eps),
        };
        if rho != 0.0 && !self.pairs.is_empty() {
            self.add_penalty_gradient(w, rho, &mut grad);
        }
        Ok(grad)
    }

    fn deviation_gradient(&self, w: &[f64]) -> Vec<f64> {
        let g = self.g;
        let lattice = g.lattice();
        let depth = lattice.depth();
        let dt2 = lattice.dt() * lattice.dt();
        let (width, d, p) = (g.width(), g.dim(), self.cfg.p);
        let weights = level_weights(lattice, w);
        let mut grad = vec![0.0; w.len()];
        let mut phi = vec![0.0; g.exchanges()];
        let mut coef = vec![0.0; width];
        for l in 0..=depth {
            let cond = conditioned_on_all_levels(lattice, &weights, g, l);
            for k in 0..=l.min(depth - 1) {
                if k == l && !self.cfg.include_diagonal {
                    continue;
                }
                for (block, &mass) in weights[k].iter().enumerate() {
                    if mass == 0.0 {
                        continue;
                    }
                    let here = g.block_value(k, block);
                    let mean = &cond[k][block * width..(block + 1) * width];
                    for i in 0..g.exchanges() {
                        let dev: Vec<f64> = (0..d).map(|c| here[i * d + c] - mean[i * d + c]).collect();
                        phi[i] = norm_pow(&dev, p);
                        let norm = dev.iter().map(|x| x * x).sum::<f64>().sqrt();
                        let scale = if norm == 0.0 { 0.0 } else { p * norm.powf(p - 2.0) };
                        for c in 0..d {
                            coef[i * d + c] = scale * dev[c];
                        }
                    }
                    let base_term: f64 = phi.iter().sum();
                    for path in lattice.block_range(k, block) {
                        let later = g.value(l, path);
                        let lin: f64 = (0..width).map(|j| coef[j] * (later[j] - mean[j])).sum();
                        grad[path] += dt2 * (base_term - lin);
                    }
                }
            }
        }
        grad
    }

    fn smoothed_drift_rate(&self, w: &[f64], eps: f64) -> f64 {
        let g = self.g;
        let lattice = g.lattice();
        let dt = lattice.dt();
        let width = g.width();
        let weights = level_weights(lattice, w);
        let mut total = 0.0;
        for k in 0..lattice.depth() {
            let next = one_step_average(lattice.branching(), width, g.level(k + 1), &weights[k + 1], &weights[k]);
            for (block, &mass) in weights[k].iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let here = g.block_value(k, block);
                let rate: f64 = here
                    .iter()
                    .zip(&next[block * width..(block + 1) * width])
                    .map(|(&now, &ahead)| huber((ahead - now) / (dt * now), eps))
                    .sum();
                total += dt * mass * rate;
            }
        }
        total
    }

    fn drift_rate_gradient(&self, w: &[f64], eps: f64) -> Vec<f64> {
        let g = self.g;
        let lattice = g.lattice();
        let dt = lattice.dt();
        let width = g.width();
        let weights = level_weights(lattice, w);
        let mut grad = vec![0.0; w.len()];
        for k in 0..lattice.depth() {
            let next = one_step_average(lattice.branching(), width, g.level(k + 1), &weights[k + 1], &weights[k]);
            for (block, &mass) in weights[k].iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let here = g.block_value(k, block);
                let ahead = &next[block * width..(block + 1) * width];
                let rate: Vec<f64> = (0..width).map(|j| (ahead[j] - here[j]) / (dt * here[j])).collect();
                let abs_sum: f64 = rate.iter().map(|&r| huber(r, eps)).sum();
                for path in lattice.block_range(k, block) {
                    let later = g.value(k + 1, path);
                    let lin: f64 = (0..width)
                        .map(|j| huber_slope(rate[j], eps) * (later[j] - ahead[j]) / (dt * here[j]))
                        .sum();
                    grad[path] += dt * (abs_sum + lin);
                }
            }
        }
        grad
    }

    fn add_penalty_gradient(&self, w: &[f64], rho: f64, grad: &mut [f64]) {
        let g = self.g;
        let lattice = g.lattice();
        let dt = lattice.dt();
        let width = g.width();
        let weights = level_weights(lattice, w);
        for &(i, j) in &self.pairs {
            let shortfall = (self.params.correlation_floor - correlation_integral(g, &weights, i, j)).max(0.0);
            if shortfall == 0.0 {
                continue;
            }
            let outer = -2.0 * rho * shortfall;
            for k in 1..=lattice.depth() {
                let values = g.level(k);
                let (cov, e) = level_moments(values, &weights[k], width, i, j);
                if e == 0.0 {
                    continue;
                }
                let (mut sx, mut sy) = (0.0, 0.0);
                for (node, &m) in values.chunks_exact(width).zip(&weights[k]) {
                    sx += m * node[i];
                    sy += m * node[j];
                }
                for (path, gp) in grad.iter_mut().enumerate() {
                    let node = g.value(k, path);
                    let (x, y) = (node[i], node[j]);
                    let d_cov = x * y - x * sy - y * sx;
                    let d_e = (x * y).abs();
                    *gp += outer * dt * (d_cov * e - cov * d_e) / (e * e);
                }
            }
        }
    }
}

/// `|x|`, rounded to a parabola on `|x| < eps`.
fn huber(x: f64, eps: f64) -> f64 {
    if x.abs() < eps {
        x * x / (2.0 * eps) + eps / 2.0
    } else {
        x.abs()
    }
}

fn huber_slope(x: f64, eps: f64) -> f64 {
    if x.abs() < eps {
        x / eps
    } else if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
