use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-10;

/// Correlated geometric Brownian motions with constant multiplicative drift.
///
/// Per-exchange arrays are `n x d`; `corr` is `(n d) x (n d)` over the
/// stacked components, exchange-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    pub drift: Vec<Vec<f64>>,
    pub vol: Vec<Vec<f64>>,
    pub corr: Vec<Vec<f64>>,
    pub s0: Vec<Vec<f64>>,
}

/// Layout of a parameter set: `n` exchanges with `d` components each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamShape {
    pub exchanges: usize,
    pub dim: usize,
}

impl GbmParams {
    /// Same drift, vol and start price everywhere, identity correlation.
    pub fn uniform(shape: ParamShape, drift: f64, vol: f64, s0: f64) -> Self {
        let ParamShape { exchanges, dim } = shape;
        let width = exchanges * dim;
        Self {
            drift: vec![vec![drift; dim]; exchanges],
            vol: vec![vec![vol; dim]; exchanges],
            corr: identity(width),
            s0: vec![vec![s0; dim]; exchanges],
        }
    }

    pub fn shape(&self) -> ParamShape {
        ParamShape {
            exchanges: self.drift.len(),
            dim: self.drift.first().map_or(0, Vec::len),
        }
    }

    pub fn width(&self) -> usize {
        let s = self.shape();
        s.exchanges * s.dim
    }

    pub fn drift_flat(&self) -> Vec<f64> {
        self.drift.concat()
    }

    pub fn vol_flat(&self) -> Vec<f64> {
        self.vol.concat()
    }

    pub fn s0_flat(&self) -> Vec<f64> {
        self.s0.concat()
    }

    pub fn corr_matrix(&self) -> DMatrix<f64> {
        let w = self.corr.len();
        DMatrix::from_fn(w, w, |i, j| self.corr[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let ParamShape { exchanges, dim } = self.shape();
        if exchanges == 0 || dim == 0 {
            return Err(Error::InvalidParameter("need at least one exchange and one component".into()));
        }
        for (name, arr) in [("drift", &self.drift), ("vol", &self.vol), ("s0", &self.s0)] {
            if arr.len() != exchanges || arr.iter().any(|row| row.len() != dim) {
                return Err(Error::InvalidParameter(format!("{name} must be {exchanges} x {dim}")));
            }
            if arr.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
            }
        }
        if self.vol.iter().flatten().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("vol must be nonnegative".into()));
        }
        if self.s0.iter().flatten().any(|&v| v <= 0.0) {
            return Err(Error::InvalidParameter("s0 must be positive".into()));
        }
        validate_correlation(&self.corr, exchanges * dim)
    }
}

pub(crate) fn identity(w: usize) -> Vec<Vec<f64>> {
    (0..w).map(|i| (0..w).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub(crate) fn validate_correlation(corr: &[Vec<f64>], width: usize) -> Result<()> {
    if corr.len() != width || corr.iter().any(|row| row.len() != width) {
        return Err(Error::InvalidParameter(format!("corr must be {width} x {width}")));
    }
    for i in 0..width {
        if (corr[i][i] - 1.0).abs() > SYMMETRY_TOL {
            return Err(Error::InvalidParameter(format!("corr[{i}][{i}] = {}, expected 1", corr[i][i])));
        }
        for j in 0..i {
            if !corr[i][j].is_finite() || (corr[i][j] - corr[j][i]).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidParameter(format!("corr is not symmetric at ({i}, {j})")));
            }
        }
    }
    let m = DMatrix::from_fn(width, width, |i, j| corr[i][j]);
    let min_eig = SymmetricEigen::new(m).eigenvalues.min();
    if min_eig < EIGEN_FLOOR {
        return Err(Error::InvalidParameter(format!(
            "corr is not positive semidefinite (smallest eigenvalue {min_eig})"
        )));
    }
    Ok(())
}

/// Nearest correlation matrix in the clip-and-rescale sense: negative
/// eigenvalues are set to zero and the diagonal is renormalized to one.
pub fn project_correlation(corr: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (corr + corr.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let psd = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let w = psd.nrows();
    let scale: Vec<f64> = (0..w)
        .map(|i| if psd[(i, i)] > 0.0 { 1.0 / psd[(i, i)].sqrt() } else { 0.0 })
        .collect();
    DMatrix::from_fn(w, w, |i, j| {
        if i == j {
            1.0
        } else {
            (psd[(i, j)] * scale[i] * scale[j]).clamp(-1.0, 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_correlation() {
        let mut p = GbmParams::uniform(ParamShape { exchanges: 2, dim: 1 }, 0.1, 0.2, 1.0);
        assert!(p.validate().is_ok());
        p.corr = vec![vec![1.0, 1.5], vec![1.5, 1.0]];
        assert!(matches!(p.validate(), Err(Error::InvalidParameter(_))));
        p.corr = vec![vec![1.0, 0.3], vec![0.2, 1.0]];
        assert!(p.validate().is_err());
        p.corr = vec![vec![0.9, 0.0], vec![0.0, 1.0]];
        assert!(p.validate().is_err());
        p.corr = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        let shape = ParamShape { exchanges: 1, dim: 1 };
        let mut p = GbmParams::uniform(shape, 0.1, 0.2, 1.0);
        p.vol = vec![vec![-0.1]];
        assert!(p.validate().is_err());
        let mut p = GbmParams::uniform(shape, 0.1, 0.2, 1.0);
        p.s0 = vec![vec![0.0]];
        assert!(p.validate().is_err());
        let mut p = GbmParams::uniform(shape, 0.1, 0.2, 1.0);
        p.drift = vec![vec![0.1, 0.2]];
        assert!(p.validate().is_err());
    }

    #[test]
    fn projection_repairs_indefinite_matrix() {
        let bad = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let fixed = project_correlation(&bad);
        let rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| fixed[(i, j)]).collect()).collect();
        assert!(validate_correlation(&rows, 3).is_ok());
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let same = project_correlation(&ok);
        assert!((same[(0, 1)] - 0.4).abs() < 1e-12);
    }
}
