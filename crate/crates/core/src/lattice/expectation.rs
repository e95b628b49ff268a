use super::{AdaptedLattice, Density, Measure};
use crate::error::{Error, Result};

/// Block-constant conditional expectation, expanded back to paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CondExpectation {
    pub values: Vec<f64>,
    /// Blocks of the conditioning partition with zero mass; their value is 0.
    pub null_blocks: Vec<usize>,
}

fn check_len(lattice: &AdaptedLattice, x: &[f64], what: &str) -> Result<()> {
    if x.len() != lattice.num_paths() {
        return Err(Error::InvalidArgument(format!(
            "{what} has length {} but lattice has {} paths",
            x.len(),
            lattice.num_paths()
        )));
    }
    Ok(())
}

fn check_time(lattice: &AdaptedLattice, k: usize) -> Result<()> {
    if k > lattice.depth() {
        return Err(Error::InvalidArgument(format!(
            "time index {k} beyond lattice depth {}",
            lattice.depth()
        )));
    }
    Ok(())
}

/// `E_Q[x | F_k]`: on every block of the time-`k` partition, the
/// `q`-weighted average of `x`.
pub fn cond_exp(lattice: &AdaptedLattice, x: &[f64], k: usize, q: &Measure) -> Result<CondExpectation> {
    check_len(lattice, x, "random variable")?;
    q.check_lattice(lattice)?;
    check_time(lattice, k)?;
    let w = q.weights();
    let mut values = vec![0.0; x.len()];
    let mut null_blocks = Vec::new();
    for (block, range) in lattice.partition(k).into_iter().enumerate() {
        let mass: f64 = w[range.clone()].iter().sum();
        if mass > 0.0 {
            let first = x[range.start];
            // constant on the block, singletons included: exact
            let value = if x[range.clone()].iter().all(|&v| v == first) {
                first
            } else {
                range.clone().map(|p| x[p] * w[p]).sum::<f64>() / mass
            };
            values[range].fill(value);
        } else {
            null_blocks.push(block);
        }
    }
    Ok(CondExpectation { values, null_blocks })
}

/// `E_{F base}[x | F_k] = E_base[F x | F_k] / E_base[F | F_k]`.
///
/// Fails if the denominator vanishes on a block of positive base mass,
/// which means `F base` is not equivalent to `base` there.
pub fn cond_exp_reweighted(
    lattice: &AdaptedLattice,
    x: &[f64],
    density: &Density,
    k: usize,
    base: &Measure,
) -> Result<Vec<f64>> {
    check_len(lattice, x, "random variable")?;
    check_len(lattice, density.values(), "density")?;
    let f = density.values();
    let fx: Vec<f64> = f.iter().zip(x).map(|(a, b)| a * b).collect();
    let num = cond_exp(lattice, &fx, k, base)?;
    let den = cond_exp(lattice, f, k, base)?;
    let mut out = vec![0.0; x.len()];
    for (block, range) in lattice.partition(k).into_iter().enumerate() {
        let d = den.values[range.start];
        if num.null_blocks.contains(&block) {
            continue;
        }
        if d == 0.0 {
            return Err(Error::EquivalenceViolation { k, block });
        }
        out[range.clone()].fill(num.values[range.start] / d);
    }
    Ok(out)
}

/// `Cov_Q(x, y) = E_Q[xy] - E_Q[x] E_Q[y]`.
pub fn covariance(q: &Measure, x: &[f64], y: &[f64]) -> f64 {
    raw_covariance(q.weights(), x, y)
}

/// `E_Q |x y|`.
pub fn abs_product_mean(q: &Measure, x: &[f64], y: &[f64]) -> f64 {
    q.weights().iter().zip(x.iter().zip(y)).map(|(w, (a, b))| w * (a * b).abs()).sum()
}

/// Covariance formula evaluated on raw (not necessarily normalized) weights.
pub(crate) fn raw_covariance(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let mut exy = 0.0;
    let mut ex = 0.0;
    let mut ey = 0.0;
    for ((wi, xi), yi) in w.iter().zip(x).zip(y) {
        exy += wi * xi * yi;
        ex += wi * xi;
        ey += wi * yi;
    }
    exy - ex * ey
}

/// Block masses of every partition level: `out[k][block]`. Level `K` is the
/// path weights themselves; each coarser level sums children in order.
pub(crate) fn level_weights(lattice: &AdaptedLattice, weights: &[f64]) -> Vec<Vec<f64>> {
    let b = lattice.branching();
    let depth = lattice.depth();
    let mut levels = vec![Vec::new(); depth + 1];
    levels[depth] = weights.to_vec();
    for k in (0..depth).rev() {
        levels[k] = levels[k + 1].chunks_exact(b).map(|c| c.iter().sum()).collect();
    }
    levels
}

/// One filtration step of conditional expectation on block-level data.
///
/// `child_values` holds `dim` numbers per block of level `k+1`; the result
/// holds `dim` numbers per block of level `k`. Null parent blocks map to 0.
pub(crate) fn one_step_average(
    branching: usize,
    dim: usize,
    child_values: &[f64],
    child_weights: &[f64],
    parent_weights: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; parent_weights.len() * dim];
    for (parent, &mass) in parent_weights.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let slot = &mut out[parent * dim..(parent + 1) * dim];
        let children = &child_values[parent * branching * dim..(parent + 1) * branching * dim];
        for j in 0..branching {
            let w = child_weights[parent * branching + j];
            for (s, v) in slot.iter_mut().zip(&children[j * dim..(j + 1) * dim]) {
                *s += w * v;
            }
        }
        for (c, s) in slot.iter_mut().enumerate() {
            // the mean of equal values is that value, without rounding
            let first = children[c];
            if (1..branching).all(|j| children[j * dim + c] == first) {
                *s = first;
            } else {
                *s /= mass;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_path() -> AdaptedLattice {
        AdaptedLattice::new(2, 1).unwrap()
    }

    #[test]
    fn two_point_average() {
        let l = two_path();
        let x = [2.0, 0.5];
        let u = Measure::uniform(&l);
        let e = cond_exp(&l, &x, 0, &u).unwrap();
        assert_eq!(e.values, vec![1.25, 1.25]);
        assert!(e.null_blocks.is_empty());
    }

    #[test]
    fn measurable_at_own_level() {
        let l = two_path();
        let x = [2.0, 0.5];
        for q in [vec![0.5, 0.5], vec![0.1, 0.9]] {
            let q = Measure::new(q).unwrap();
            assert_eq!(cond_exp(&l, &x, 1, &q).unwrap().values, x.to_vec());
        }
    }

    #[test]
    fn risk_neutral_weights_average_to_one() {
        let l = two_path();
        let q = Measure::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let e = cond_exp(&l, &[2.0, 0.5], 0, &q).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_block_is_flagged() {
        let l = AdaptedLattice::new(2, 2).unwrap();
        let q = Measure::new(vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let e = cond_exp(&l, &[1.0, 2.0, 3.0, 4.0], 1, &q).unwrap();
        assert_eq!(e.null_blocks, vec![0]);
        assert_eq!(e.values, vec![0.0, 0.0, 3.5, 3.5]);
    }

    #[test]
    fn reweighted_examples() {
        let l = two_path();
        let base = Measure::uniform(&l);
        let f = Density::new(vec![2.0 / 3.0, 4.0 / 3.0], &base).unwrap();
        let x = [2.0, 0.5];
        let e0 = cond_exp_reweighted(&l, &x, &f, 0, &base).unwrap();
        assert!((e0[0] - 1.0).abs() < 1e-15 && (e0[1] - 1.0).abs() < 1e-15);
        let e1 = cond_exp_reweighted(&l, &x, &f, 1, &base).unwrap();
        assert!((e1[0] - 2.0).abs() < 1e-15 && (e1[1] - 0.5).abs() < 1e-15);

        let one = Density::new(vec![1.0, 1.0], &base).unwrap();
        let plain = cond_exp(&l, &x, 0, &base).unwrap().values;
        assert_eq!(cond_exp_reweighted(&l, &x, &one, 0, &base).unwrap(), plain);
    }

    #[test]
    fn reweighted_zero_denominator() {
        let l = AdaptedLattice::new(2, 2).unwrap();
        let base = Measure::uniform(&l);
        let f = Density::new(vec![0.0, 0.0, 2.0, 2.0], &base).unwrap();
        let err = cond_exp_reweighted(&l, &[1.0; 4], &f, 1, &base).unwrap_err();
        assert!(matches!(err, Error::EquivalenceViolation { k: 1, block: 0 }));
    }

    #[test]
    fn covariance_examples() {
        let u = Measure::new(vec![0.5, 0.5]).unwrap();
        let x = [2.0, 0.5];
        assert!((covariance(&u, &x, &x) - 0.5625).abs() < 1e-15);
        assert!((abs_product_mean(&u, &x, &x) - 2.125).abs() < 1e-15);
        assert_eq!(covariance(&u, &[3.0, 3.0], &x), 0.0);
        assert!((covariance(&u, &[1.0, -1.0], &[-1.0, 1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn level_weights_and_one_step() {
        let l = AdaptedLattice::new(2, 2).unwrap();
        let w = [0.1, 0.2, 0.3, 0.4];
        let levels = level_weights(&l, &w);
        assert_eq!(levels[0].len(), 1);
        assert!((levels[0][0] - 1.0).abs() < 1e-15);
        assert!((levels[1][0] - 0.3).abs() < 1e-15);
        let x = [1.0, 2.0, 3.0, 4.0];
        let avg = one_step_average(2, 1, &x, &levels[2], &levels[1]);
        let direct = cond_exp(&l, &x, 1, &Measure::new(w.to_vec()).unwrap()).unwrap();
        assert!((avg[0] - direct.values[0]).abs() < 1e-15);
        assert!((avg[1] - direct.values[2]).abs() < 1e-15);
    }
}
