use rayon::prelude::*;
use serde::Serialize;

use super::{ConstraintParams, FairnessProblem};
use crate::error::{Error, Result};
use crate::lattice::{LatticeProcess, Measure};

pub const MAX_PATHS: usize = 6;
pub const MAX_GRID_RESOLUTION: usize = 2000;
pub const MAX_GRID_POINTS: u128 = 1_000_000_000;

/// Slack allowed on the eliminated coordinate and the correlation floor.
const GRID_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMinimum {
    pub measure: Measure,
    pub value: f64,
    /// Grid points that passed every constraint.
    pub feasible_points: u64,
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    point: u128,
}

/// Exhaustive search over a grid on the feasible box-simplex.
///
/// The first `P - 1` coordinates run over `resolution + 1` equally spaced
/// values of their attainable range; the last is fixed by normalization
/// and must land in its box. Points below the correlation floor are
/// dropped. The base measure is evaluated first and wins ties; among grid
/// points the lexicographically smallest minimizer is returned.
pub fn brute_force_min(g: &LatticeProcess, params: &ConstraintParams, resolution: usize) -> Result<GridMinimum> {
    let paths = g.lattice().num_paths();
    if paths > MAX_PATHS {
        return Err(Error::SizeExceeded { paths: paths as u128, budget: MAX_PATHS });
    }
    if resolution == 0 || resolution > MAX_GRID_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be in 1..={MAX_GRID_RESOLUTION}, got {resolution}"
        )));
    }
    let free = paths - 1;
    let per_axis = resolution as u128 + 1;
    let total = per_axis.pow(free as u32);
    if total > MAX_GRID_POINTS {
        return Err(Error::SizeExceeded { paths: total, budget: MAX_GRID_POINTS as usize });
    }

    let problem = FairnessProblem::new(g, params)?;
    let (lo, hi) = problem.bounds();
    let (sum_lo, sum_hi) = (lo.iter().sum::<f64>(), hi.iter().sum::<f64>());
    // attainable range of each free coordinate given the others' boxes
    let ranges: Vec<(f64, f64)> = (0..free)
        .map(|i| ((1.0 - (sum_hi - hi[i])).max(lo[i]), (1.0 - (sum_lo - lo[i])).min(hi[i])))
        .collect();
    let coordinate = |i: usize, j: usize| -> f64 {
        let (a, b) = ranges[i];
        if j == resolution {
            b
        } else {
            a + (b - a) * j as f64 / resolution as f64
        }
    };
    let feasible = |q: &[f64]| problem.violation(q) <= GRID_TOL;

    let inner = per_axis.pow(free as u32 - 1);
    let chunks: Vec<(Option<Best>, u64)> = (0..=resolution)
        .into_par_iter()
        .map(|j0| {
            let mut q = vec![0.0; paths];
            let mut idx = vec![0usize; free];
            idx[0] = j0;
            let mut best: Option<Best> = None;
            let mut count = 0u64;
            for offset in 0..inner {
                let mut rest = offset;
                for i in (1..free).rev() {
                    idx[i] = (rest % per_axis) as usize;
                    rest /= per_axis;
                }
                for i in 0..free {
                    q[i] = coordinate(i, idx[i]);
                }
                let last = 1.0 - q[..free].iter().sum::<f64>();
                if last < lo[free] - GRID_TOL || last > hi[free] + GRID_TOL {
                    continue;
                }
                q[free] = last.clamp(lo[free], hi[free]).max(0.0);
                if !feasible(&q) {
                    continue;
                }
                count += 1;
                let value = problem.objective(&q);
                if best.is_none_or(|b| value < b.value) {
                    best = Some(Best { value, point: j0 as u128 * inner + offset });
                }
            }
            (best, count)
        })
        .collect();

    let feasible_points = chunks.iter().map(|c| c.1).sum();
    let grid_best = chunks
        .into_iter()
        .filter_map(|c| c.0)
        .reduce(|a, b| if b.value < a.value { b } else { a });

    let base = problem.base().weights().to_vec();
    let base_best = feasible(&base).then(|| problem.objective(&base));
    let weights = match (base_best, grid_best) {
        (Some(bv), Some(gb)) if gb.value < bv => decode(gb.point, free, per_axis, &coordinate),
        (Some(_), _) => base,
        (None, Some(gb)) => decode(gb.point, free, per_axis, &coordinate),
        (None, None) => {
            return Err(Error::Infeasible(format!(
                "no point of the {total}-point grid satisfies the correlation floor {}",
                params.correlation_floor
            )))
        }
    };
    let value = problem.objective(&weights);
    Ok(GridMinimum {
        measure: Measure::normalized(weights)?,
        value,
        feasible_points,
    })
}

fn decode(point: u128, free: usize, per_axis: u128, coordinate: &impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut q = vec![0.0; free + 1];
    let mut rest = point;
    for i in (0..free).rev() {
        q[i] = coordinate(i, (rest % per_axis) as usize);
        rest /= per_axis;
    }
    q[free] = 1.0 - q[..free].iter().sum::<f64>();
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::AdaptedLattice;
    use crate::solver::Objective;

    fn canonical() -> LatticeProcess {
        let l = AdaptedLattice::new(2, 1).unwrap();
        LatticeProcess::from_path_values(l, 1, 1, &[vec![1.0, 1.0], vec![2.0, 0.5]]).unwrap()
    }

    #[test]
    fn finds_risk_neutral_weight() {
        let p = ConstraintParams::new(2.0, 0.0, 2.0, Objective::Deviation);
        let r = brute_force_min(&canonical(), &p, 2000).unwrap();
        assert!((r.measure.weights()[0] - 1.0 / 3.0).abs() <= 5e-4);
        assert!(r.value < 1e-6);
        assert_eq!(r.feasible_points, 2001);
    }

    #[test]
    fn constant_process_returns_base() {
        let g = canonical().map(|_| 1.0).unwrap();
        let p = ConstraintParams::new(3.0, 0.0, 2.0, Objective::Deviation);
        let r = brute_force_min(&g, &p, 100).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.measure.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn singleton_box() {
        let p = ConstraintParams::new(1.0, 0.0, 2.0, Objective::Deviation);
        let r = brute_force_min(&canonical(), &p, 10).unwrap();
        assert_eq!(r.measure.weights(), &[0.5, 0.5]);
        assert!((r.value - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn size_limits() {
        let l = AdaptedLattice::new(2, 3).unwrap();
        let g = LatticeProcess::from_fn(l, 1, 1, |_, _, o| o[0] = 1.0).unwrap();
        let p = ConstraintParams::new(2.0, 0.0, 2.0, Objective::Deviation);
        assert!(matches!(brute_force_min(&g, &p, 10), Err(Error::SizeExceeded { .. })));
        assert!(brute_force_min(&canonical(), &p, 2001).is_err());
        let l4 = AdaptedLattice::new(2, 2).unwrap();
        let g4 = LatticeProcess::from_fn(l4, 1, 1, |_, _, o| o[0] = 1.0).unwrap();
        assert!(matches!(brute_force_min(&g4, &p, 2000), Err(Error::SizeExceeded { .. })));
    }

    #[test]
    fn infeasible_floor() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let g = LatticeProcess::from_path_values(l, 2, 1, &[vec![1.0, 1.0, 1.0, 1.0], vec![2.0, 2.0, 0.5, 0.5]]).unwrap();
        let p = ConstraintParams::new(2.0, 0.9, 2.0, Objective::Deviation);
        assert!(matches!(brute_force_min(&g, &p, 200), Err(Error::Infeasible(_))));
    }
}
