use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{level_weights, LatticeProcess, Measure, NORMALIZATION_TOL};
use crate::unfairness::UnfairnessConfig;

/// Slack below which a constraint counts as violated.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Which unfairness functional to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "m")]
    Deviation,
    #[serde(rename = "n")]
    DriftRate,
}

/// The constraint class and objective of a fairest-measure problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintParams {
    /// Equivalence bound: `base / N <= q <= N * base` atomwise.
    #[serde(rename = "N")]
    pub equivalence_bound: f64,
    /// Floor on every pairwise correlation integral.
    #[serde(rename = "c")]
    pub correlation_floor: f64,
    /// Exponent of `m`.
    pub p: f64,
    pub objective: Objective,
}

impl ConstraintParams {
    pub fn new(equivalence_bound: f64, correlation_floor: f64, p: f64, objective: Objective) -> Self {
        Self {
            equivalence_bound,
            correlation_floor,
            p,
            objective,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.equivalence_bound;
        if !(n.is_finite() && n >= 1.0) {
            return Err(Error::InvalidParameter(format!("equivalence bound N must be at least 1, got {n}")));
        }
        if !self.correlation_floor.is_finite() {
            return Err(Error::InvalidParameter("correlation floor c must be finite".into()));
        }
        self.unfairness_config().validate()
    }

    pub fn unfairness_config(&self) -> UnfairnessConfig {
        UnfairnessConfig::with_p(self.p)
    }

    /// Atomwise bounds `(base / N, N * base)`.
    pub fn bounds(&self, base: &Measure) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let n = self.equivalence_bound;
        let lo = base.weights().iter().map(|m| m / n).collect();
        let hi = base.weights().iter().map(|m| m * n).collect();
        Ok((lo, hi))
    }
}

/// Exchange pairs `(i, j)`, `i < j`, whose correlation floor is enforced.
///
/// The covariance is only defined for scalar exchanges, so `d > 1` with a
/// positive floor is rejected and `d > 1` with a nonpositive floor leaves
/// the pairs unconstrained.
pub(crate) fn constrained_pairs(g: &LatticeProcess, params: &ConstraintParams) -> Result<Vec<(usize, usize)>> {
    if g.exchanges() < 2 {
        return Ok(Vec::new());
    }
    if g.dim() > 1 {
        if params.correlation_floor > 0.0 {
            return Err(Error::UnsupportedConstraint(format!(
                "correlation floor {} needs scalar exchanges, but each exchange has {} components",
                params.correlation_floor,
                g.dim()
            )));
        }
        return Ok(Vec::new());
    }
    let n = g.exchanges();
    Ok((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect())
}

/// `sum_{k=1..K} dt Cov(g_i(k), g_j(k)) / E|g_i(k) g_j(k)|` on raw path
/// weights. Terms with a zero denominator contribute 0.
pub(crate) fn correlation_integral(g: &LatticeProcess, weights: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let lattice = g.lattice();
    let dt = lattice.dt();
    let width = g.width();
    let mut total = 0.0;
    for k in 1..=lattice.depth() {
        let (cov, e) = level_moments(g.level(k), &weights[k], width, i, j);
        if e != 0.0 {
            total += dt * cov / e;
        }
    }
    total
}

/// `(Cov, E|xy|)` of the scalar exchanges `i, j` at one level.
pub(crate) fn level_moments(values: &[f64], mass: &[f64], width: usize, i: usize, j: usize) -> (f64, f64) {
    let (mut sxy, mut sx, mut sy, mut e) = (0.0, 0.0, 0.0, 0.0);
    for (node, &w) in values.chunks_exact(width).zip(mass) {
        let (x, y) = (node[i], node[j]);
        sxy += w * x * y;
        sx += w * x;
        sy += w * y;
        e += w * (x * y).abs();
    }
    (sxy - sx * sy, e)
}

/// One pairwise correlation constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSlack {
    pub exchanges: (usize, usize),
    pub integral: f64,
    /// `integral - c`.
    pub slack: f64,
}

/// Evaluation of every constraint at a measure. Slacks are nonnegative
/// when the constraint holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    /// `q - base / N` per path.
    pub lower_slack: Vec<f64>,
    /// `N * base - q` per path.
    pub upper_slack: Vec<f64>,
    /// `-|sum q - 1|`.
    pub normalization_slack: f64,
    pub correlations: Vec<CorrelationSlack>,
    pub feasible: bool,
}

impl ConstraintReport {
    pub fn min_slack(&self) -> f64 {
        self.lower_slack
            .iter()
            .chain(&self.upper_slack)
            .copied()
            .chain(self.correlations.iter().map(|c| c.slack))
            .fold(self.normalization_slack, f64::min)
    }

    /// First violated constraint, described for humans.
    pub fn first_violation(&self) -> Option<String> {
        if let Some((i, s)) = self.lower_slack.iter().enumerate().find(|(_, s)| **s < -FEASIBILITY_TOL) {
            return Some(format!("lower bound at path {i} (slack {s})"));
        }
        if let Some((i, s)) = self.upper_slack.iter().enumerate().find(|(_, s)| **s < -FEASIBILITY_TOL) {
            return Some(format!("upper bound at path {i} (slack {s})"));
        }
        if self.normalization_slack < -NORMALIZATION_TOL {
            return Some(format!("normalization (slack {})", self.normalization_slack));
        }
        self.correlations
            .iter()
            .find(|c| c.slack < -FEASIBILITY_TOL)
            .map(|c| format!("correlation floor for exchanges {:?} (slack {})", c.exchanges, c.slack))
    }
}

/// Checks membership of `q` in the constraint class of `g`, with the
/// uniform base measure.
pub fn check_constraints(q: &Measure, g: &LatticeProcess, params: &ConstraintParams) -> Result<ConstraintReport> {
    let base = Measure::uniform(g.lattice());
    check_constraints_against(q.weights(), g, params, &base)
}

pub(crate) fn check_constraints_against(
    q: &[f64],
    g: &LatticeProcess,
    params: &ConstraintParams,
    base: &Measure,
) -> Result<ConstraintReport> {
    if q.len() != g.lattice().num_paths() || base.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "measure has {} weights but the process lattice has {} paths",
            q.len(),
            g.lattice().num_paths()
        )));
    }
    let (lo, hi) = params.bounds(base)?;
    let pairs = constrained_pairs(g, params)?;
    let lower_slack: Vec<f64> = q.iter().zip(&lo).map(|(q, l)| q - l).collect();
    let upper_slack: Vec<f64> = q.iter().zip(&hi).map(|(q, h)| h - q).collect();
    let normalization_slack = 0.0 - (q.iter().sum::<f64>() - 1.0).abs();
    let weights = level_weights(g.lattice(), q);
    let correlations: Vec<CorrelationSlack> = pairs
        .into_iter()
        .map(|(i, j)| {
            let integral = correlation_integral(g, &weights, i, j);
            CorrelationSlack {
                exchanges: (i, j),
                integral,
                slack: integral - params.correlation_floor,
            }
        })
        .collect();
    let mut report = ConstraintReport {
        lower_slack,
        upper_slack,
        normalization_slack,
        correlations,
        feasible: false,
    };
    report.feasible = report.first_violation().is_none();
    Ok(report)
}
