//! Unfairness functionals on a lattice.
//!
//! Two ways of measuring how far a process is from being a martingale:
//!
//! * [`unfairness_m`], the incomplete-market notion. It aggregates the
//!   `L^p` deviation of `g_s` from every later conditional expectation
//!   `E_Q[g_t | F_s]`. Its `p`-th root satisfies the triangle inequality
//!   for `p >= 1` and is 1-homogeneous; at `p = 2` it comes from the
//!   semi-inner product [`inner_product_m`].
//! * [`unfairness_n`], the complete-market notion. It is the mean absolute
//!   relative drift rate and does not change when the process is scaled.
//!
//! Both vanish exactly on `Q`-martingales.
//!
//! Discretization: `s` runs over the left endpoints `k = 0..K-1` and `t`
//! over `l = k..K`, each with weight `dt`. The derivative in `n` is the
//! one-step forward difference quotient. Conditional expectations of
//! `g_l` at earlier levels are computed by repeated one-step averaging, the
//! same recursion [`LatticeProcess::doob_martingale`] uses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{level_weights, one_step_average, AdaptedLattice, LatticeProcess, Measure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnfairnessConfig {
    /// Exponent applied to the Euclidean deviation of each exchange.
    pub p: f64,
    /// Whether to include the `t = s` term. It is identically zero.
    pub include_diagonal: bool,
}

impl Default for UnfairnessConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            include_diagonal: true,
        }
    }
}

impl UnfairnessConfig {
    pub fn with_p(p: f64) -> Self {
        Self { p, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::InvalidParameter(format!("exponent p must be positive, got {}", self.p)));
        }
        Ok(())
    }
}

/// Outcome of the one-step martingale check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleCheck {
    pub is_martingale: bool,
    pub max_deviation: f64,
    /// `(k, block, value index)` where the largest deviation occurs.
    pub worst: Option<(usize, usize, usize)>,
}

fn check_measure(q: &Measure, g: &LatticeProcess) -> Result<()> {
    if q.len() != g.lattice().num_paths() {
        return Err(Error::InvalidArgument(format!(
            "measure has {} weights but the process lattice has {} paths",
            q.len(),
            g.lattice().num_paths()
        )));
    }
    Ok(())
}

/// `E_Q[g_l | F_k]` for every `k <= l`, as block-level data: `out[k]`
/// holds `n * d` values per block of level `k`.
pub(crate) fn conditioned_on_all_levels(
    lattice: &AdaptedLattice,
    weights: &[Vec<f64>],
    g: &LatticeProcess,
    l: usize,
) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); l + 1];
    out[l] = g.level(l).to_vec();
    for k in (0..l).rev() {
        out[k] = one_step_average(lattice.branching(), g.width(), &out[k + 1], &weights[k + 1], &weights[k]);
    }
    out
}

/// Calls `visit(k, l, block, mass, deviation)` for every term of the
/// double time sum, where `deviation = g_k - E_Q[g_l | F_k]` on the block.
fn for_each_deviation(
    g: &LatticeProcess,
    weights: &[Vec<f64>],
    include_diagonal: bool,
    mut visit: impl FnMut(usize, usize, usize, f64, &[f64]),
) {
    let lattice = g.lattice();
    let depth = lattice.depth();
    let width = g.width();
    let mut dev = vec![0.0; width];
    for l in 0..=depth {
        let cond = conditioned_on_all_levels(lattice, weights, g, l);
        for (k, level) in cond.iter().enumerate().take(l.min(depth - 1) + 1) {
            if k == l && !include_diagonal {
                continue;
            }
            for (block, &mass) in weights[k].iter().enumerate() {
                let here = g.block_value(k, block);
                let there = &level[block * width..(block + 1) * width];
                for ((d, a), b) in dev.iter_mut().zip(here).zip(there) {
                    *d = a - b;
                }
                visit(k, l, block, mass, &dev);
            }
        }
    }
}

/// `m` evaluated on raw path weights.
pub(crate) fn deviation_functional(g: &LatticeProcess, w: &[f64], cfg: &UnfairnessConfig) -> f64 {
    let lattice = g.lattice();
    let dt2 = lattice.dt() * lattice.dt();
    let weights = level_weights(lattice, w);
    let d = g.dim();
    let mut total = 0.0;
    for_each_deviation(g, &weights, cfg.include_diagonal, |_, _, _, mass, dev| {
        if mass == 0.0 {
            return;
        }
        let sum: f64 = dev
            .chunks_exact(d)
            .map(|c| norm_pow(c, cfg.p))
            .sum();
        total += dt2 * mass * sum;
    });
    total
}

/// `|v|^p` with the Euclidean norm.
pub(crate) fn norm_pow(v: &[f64], p: f64) -> f64 {
    let sq: f64 = v.iter().map(|x| x * x).sum();
    if p == 2.0 {
        sq
    } else {
        sq.sqrt().powf(p)
    }
}

/// `n` evaluated on raw path weights; assumes positivity was checked.
pub(crate) fn drift_rate_functional(g: &LatticeProcess, w: &[f64]) -> f64 {
    let lattice = g.lattice();
    let dt = lattice.dt();
    let weights = level_weights(lattice, w);
    let width = g.width();
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
                .map(|(&now, &ahead)| ((ahead - now) / (dt * now)).abs())
                .sum();
            total += dt * mass * rate;
        }
    }
    total
}

/// Positivity required by the relative drift rate of `n`.
pub(crate) fn check_positive_before_terminal(g: &LatticeProcess) -> Result<()> {
    for k in 0..g.lattice().depth() {
        if let Some((i, v)) = g.level(k).iter().enumerate().find(|(_, v)| **v <= 0.0) {
            let block = i / g.width();
            return Err(Error::Domain(format!(
                "relative drift needs positive values; found {v} at time index {k}, block {block}"
            )));
        }
    }
    Ok(())
}

/// Incomplete-market unfairness `m(Q, g)`.
pub fn unfairness_m(q: &Measure, g: &LatticeProcess, cfg: &UnfairnessConfig) -> Result<f64> {
    cfg.validate()?;
    check_measure(q, g)?;
    Ok(deviation_functional(g, q.weights(), cfg))
}

/// Complete-market unfairness `n(Q, g)`.
///
/// On a finite lattice the difference quotient always exists, so the
/// `+inf` convention of the continuous-time definition never triggers.
pub fn unfairness_n(q: &Measure, g: &LatticeProcess) -> Result<f64> {
    check_measure(q, g)?;
    check_positive_before_terminal(g)?;
    Ok(drift_rate_functional(g, q.weights()))
}

/// Semi-inner product whose quadratic form is `m` at `p = 2`.
pub fn inner_product_m(q: &Measure, x: &LatticeProcess, y: &LatticeProcess) -> Result<f64> {
    check_measure(q, x)?;
    x.check_same_shape(y)?;
    let lattice = x.lattice();
    let dt2 = lattice.dt() * lattice.dt();
    let weights = level_weights(lattice, q.weights());
    let mut x_devs = Vec::new();
    for_each_deviation(x, &weights, true, |_, _, _, mass, dev| {
        x_devs.push((mass, dev.to_vec()));
    });
    let mut total = 0.0;
    let mut idx = 0;
    for_each_deviation(y, &weights, true, |_, _, _, mass, dev| {
        let (_, xd) = &x_devs[idx];
        idx += 1;
        if mass == 0.0 {
            return;
        }
        let dot: f64 = xd.iter().zip(dev).map(|(a, b)| a * b).sum();
        total += dt2 * mass * dot;
    });
    Ok(total)
}

/// One-step martingale check: the largest `|x_k - E_Q[x_{k+1} | F_k]|`
/// over blocks of positive mass and all value indices. By the tower
/// property this covers every later time as well.
pub fn is_martingale(q: &Measure, x: &LatticeProcess, tol: f64) -> Result<MartingaleCheck> {
    check_measure(q, x)?;
    let lattice = x.lattice();
    let weights = level_weights(lattice, q.weights());
    let width = x.width();
    let mut max_deviation: f64 = 0.0;
    let mut worst = None;
    for k in 0..lattice.depth() {
        let next = one_step_average(lattice.branching(), width, x.level(k + 1), &weights[k + 1], &weights[k]);
        for (block, &mass) in weights[k].iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (j, (a, b)) in x.block_value(k, block).iter().zip(&next[block * width..]).enumerate() {
                let dev = (a - b).abs();
                if dev > max_deviation {
                    max_deviation = dev;
                    worst = Some((k, block, j));
                }
            }
        }
    }
    Ok(MartingaleCheck {
        is_martingale: max_deviation <= tol,
        max_deviation,
        worst,
    })
}
