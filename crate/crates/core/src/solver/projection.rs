use super::ConstraintParams;
use crate::error::{Error, Result};
use crate::lattice::Measure;

const BISECTION_STEPS: usize = 200;

/// Euclidean projection of `q` onto `{sum q = 1, base / N <= q <= N base}`.
pub fn project_box_simplex(q: &[f64], params: &ConstraintParams, base: &Measure) -> Result<Vec<f64>> {
    if q.len() != base.len() {
        return Err(Error::InvalidArgument(format!(
            "vector has {} entries but the base measure has {}",
            q.len(),
            base.len()
        )));
    }
    let (lo, hi) = params.bounds(base)?;
    project_onto(q, &lo, &hi)
}

/// Projection onto `{sum x = 1, lo <= x <= hi}`.
///
/// The minimizer is `clip(v - tau, lo, hi)` for the scalar `tau` that fixes
/// the sum. `tau` is bracketed by bisection, then solved exactly on the set
/// of coordinates left unclipped.
pub fn project_onto(v: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    if v.len() != lo.len() || v.len() != hi.len() {
        return Err(Error::InvalidArgument("vector and bounds differ in length".into()));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("cannot project non-finite entry {x}")));
    }
    let (sum_lo, sum_hi) = (lo.iter().sum::<f64>(), hi.iter().sum::<f64>());
    if lo.iter().zip(hi).any(|(l, h)| l > h) || sum_lo > 1.0 + 1e-12 || sum_hi < 1.0 - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "box with total mass in [{sum_lo}, {sum_hi}] does not meet the simplex"
        )));
    }
    let clip = |tau: f64| -> Vec<f64> { v.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| (x - tau).clamp(*l, *h)).collect() };
    let mass = |tau: f64| -> f64 { clip(tau).iter().sum() };

    // mass(t_lo) >= 1 >= mass(t_hi)
    let mut t_lo = v.iter().zip(hi).map(|(x, h)| x - h).fold(f64::INFINITY, f64::min);
    let mut t_hi = v.iter().zip(lo).map(|(x, l)| x - l).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (t_lo + t_hi);
        if mid <= t_lo || mid >= t_hi {
            break;
        }
        if mass(mid) >= 1.0 {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
    }
    let tau = 0.5 * (t_lo + t_hi);
    let mut x = clip(tau);

    // Solve for tau on the free coordinates and keep it if the active set
    // does not change.
    let free: Vec<usize> = (0..v.len()).filter(|&i| lo[i] < x[i] && x[i] < hi[i]).collect();
    if !free.is_empty() {
        let fixed: f64 = (0..v.len()).filter(|i| !free.contains(i)).map(|i| x[i]).sum();
        let exact = (free.iter().map(|&i| v[i]).sum::<f64>() - (1.0 - fixed)) / free.len() as f64;
        let candidate = clip(exact);
        let consistent = (0..v.len()).all(|i| free.contains(&i) == (lo[i] < candidate[i] && candidate[i] < hi[i]));
        if consistent {
            x = candidate;
        }
    }

    // Put the rounding residue on coordinates with room to absorb it.
    let residue = 1.0 - x.iter().sum::<f64>();
    if residue != 0.0 {
        let mut left = residue;
        for i in 0..x.len() {
            let room = if left > 0.0 { hi[i] - x[i] } else { lo[i] - x[i] };
            let step = if left > 0.0 { left.min(room) } else { left.max(room) };
            x[i] += step;
            left -= step;
            if left == 0.0 {
                break;
            }
        }
    }
    Ok(x)
}
