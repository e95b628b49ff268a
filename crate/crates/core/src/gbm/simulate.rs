use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::GbmParams;
use crate::error::{Error, Result};
use crate::lattice::{AdaptedLattice, LatticeProcess};

/// Relative eigenvalue cutoff when factoring the correlation matrix.
const RANK_TOL: f64 = 1e-12;

/// Column permutations for the quantile design are drawn from this fixed
/// stream so the design does not depend on the user seed.
const DESIGN_STREAM: u64 = 0x006c_6174_7469_6365;

/// Branch innovations shared by every node: `b` vectors of length `n d`
/// with population mean zero and population covariance equal to `corr`.
/// Entry `j` is the innovation for branch digit `j`.
pub fn branch_innovations(corr: &DMatrix<f64>, branching: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let width = corr.nrows();
    let factor = correlation_factor(corr);
    let rank = factor.ncols();
    if branching < rank + 1 {
        return Err(Error::InvalidParameter(format!(
            "branching {branching} cannot match a correlation matrix of rank {rank}; need at least {}",
            rank + 1
        )));
    }
    let design = if branching == 1usize << rank {
        sign_design(rank)
    } else {
        quantile_design(branching, rank)?
    };
    let mut innovations: Vec<Vec<f64>> = design
        .iter()
        .map(|e| (0..width).map(|i| (0..rank).map(|c| factor[(i, c)] * e[c]).sum()).collect())
        .collect();
    innovations.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(innovations)
}

/// `A` with `A A^T = corr`, one column per numerically nonzero eigenvalue,
/// largest first.
fn correlation_factor(corr: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(corr.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues.max().max(0.0);
    let kept: Vec<usize> = order.into_iter().filter(|&i| eig.eigenvalues[i] > RANK_TOL * top).collect();
    DMatrix::from_fn(corr.nrows(), kept.len(), |i, c| {
        eig.eigenvectors[(i, kept[c])] * eig.eigenvalues[kept[c]].sqrt()
    })
}

/// Full factorial `+-1` design on `rank` factors: `2^rank` points, mean 0,
/// identity covariance.
fn sign_design(rank: usize) -> Vec<Vec<f64>> {
    (0..1usize << rank)
        .map(|j| (0..rank).map(|c| if (j >> c) & 1 == 0 { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// Normal quantiles at `(j + 1/2) / b` per factor, columns permuted
/// independently, then whitened to exact mean 0 and identity covariance.
fn quantile_design(branching: usize, rank: usize) -> Result<Vec<Vec<f64>>> {
    let normal = Normal::standard();
    let quantiles: Vec<f64> = (0..branching)
        .map(|j| normal.inverse_cdf((j as f64 + 0.5) / branching as f64))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(DESIGN_STREAM);
    for _attempt in 0..64 {
        let mut x = DMatrix::zeros(branching, rank);
        for c in 0..rank {
            let mut col = quantiles.clone();
            if c > 0 {
                col.shuffle(&mut rng);
            }
            for (j, v) in col.into_iter().enumerate() {
                x[(j, c)] = v;
            }
        }
        for c in 0..rank {
            let mean = x.column(c).sum() / branching as f64;
            x.column_mut(c).add_scalar_mut(-mean);
        }
        let cov = x.transpose() * &x / branching as f64;
        let Some(chol) = cov.cholesky() else { continue };
        // e = x L^{-T}, so e^T e / b = L^{-1} cov L^{-T} = I
        let Some(l_inv) = chol.l().try_inverse() else { continue };
        let e = &x * l_inv.transpose();
        if e.iter().all(|v| v.is_finite()) {
            return Ok((0..branching).map(|j| e.row(j).iter().copied().collect()).collect());
        }
    }
    Err(Error::InvalidParameter(format!(
        "could not build a nondegenerate {branching}-point design for rank {rank}"
    )))
}

/// Correlated GBMs on the lattice: per step, each component is multiplied
/// by `exp((a - sigma^2/2) dt + sigma sqrt(dt) z)` where `z` is the
/// innovation of the branch taken. `seed` only permutes which digit gets
/// which innovation.
pub fn simulate_gbm(lattice: &AdaptedLattice, params: &GbmParams, seed: u64) -> Result<LatticeProcess> {
    params.validate()?;
    let shape = params.shape();
    let width = params.width();
    let innovations = branch_innovations(&params.corr_matrix(), lattice.branching(), seed)?;
    let dt = lattice.dt();
    let drift = params.drift_flat();
    let vol = params.vol_flat();
    let growth: Vec<Vec<f64>> = innovations
        .iter()
        .map(|z| {
            (0..width)
                .map(|i| ((drift[i] - 0.5 * vol[i] * vol[i]) * dt + vol[i] * dt.sqrt() * z[i]).exp())
                .collect()
        })
        .collect();

    let b = lattice.branching();
    let mut levels = Vec::with_capacity(lattice.depth() + 1);
    levels.push(params.s0_flat());
    for k in 0..lattice.depth() {
        let parent: &Vec<f64> = &levels[k];
        let mut next = Vec::with_capacity(parent.len() * b);
        for node in parent.chunks_exact(width) {
            for g in &growth {
                next.extend(node.iter().zip(g).map(|(v, f)| v * f));
            }
        }
        if let Some(v) = next.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "simulated value {v} at time index {} is not a positive finite number",
                k + 1
            )));
        }
        levels.push(next);
    }
    LatticeProcess::from_blocks(*lattice, shape.exchanges, shape.dim, levels)
}
