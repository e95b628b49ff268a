use serde::Serialize;

use super::AdaptedLattice;
use crate::error::{Error, Result};

/// Tolerance on `sum(q) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Probability weights on the paths of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    /// Wraps weights that are already normalized.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_nonnegative(&weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "measure weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Rescales nonnegative weights with positive total mass.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        check_nonnegative(&weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("measure has zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { weights })
    }

    /// Normalized counting measure, `b^-K` on every path.
    pub fn uniform(lattice: &AdaptedLattice) -> Self {
        let n = lattice.num_paths();
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn expectation(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(q, v)| q * v).sum()
    }

    pub(crate) fn check_lattice(&self, lattice: &AdaptedLattice) -> Result<()> {
        if self.weights.len() != lattice.num_paths() {
            return Err(Error::InvalidArgument(format!(
                "measure has {} weights but lattice has {} paths",
                self.weights.len(),
                lattice.num_paths()
            )));
        }
        Ok(())
    }

    /// Lifts a measure on `coarse` to the duplicated lattice `fine`,
    /// splitting each atom evenly among its copies.
    pub fn lift(&self, coarse: &AdaptedLattice, fine: &AdaptedLattice) -> Result<Self> {
        self.check_lattice(coarse)?;
        let copies = (fine.num_paths() / coarse.num_paths()) as f64;
        let weights = (0..fine.num_paths())
            .map(|p| self.weights[coarse.coarse_path(fine, p)] / copies)
            .collect();
        Ok(Self { weights })
    }
}

fn check_nonnegative(weights: &[f64]) -> Result<()> {
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "measure weight {w} at path {i} is not a finite nonnegative number"
        )));
    }
    Ok(())
}

/// Radon-Nikodym density `F = dQ/d(base)` on the paths of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    values: Vec<f64>,
}

impl Density {
    /// Wraps density values, checking `sum F * base = 1`.
    pub fn new(values: Vec<f64>, base: &Measure) -> Result<Self> {
        check_nonnegative(&values)?;
        if values.len() != base.len() {
            return Err(Error::InvalidArgument("density and base measure differ in length".into()));
        }
        let mass = base.expectation(&values);
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "density integrates to {mass} against the base measure, expected 1"
            )));
        }
        Ok(Self { values })
    }

    /// `F(w) = q(w) / base(w)`; requires `q` absolutely continuous w.r.t. `base`.
    pub fn between(q: &Measure, base: &Measure) -> Result<Self> {
        if q.len() != base.len() {
            return Err(Error::InvalidArgument("measures differ in length".into()));
        }
        let values = q
            .weights()
            .iter()
            .zip(base.weights())
            .enumerate()
            .map(|(i, (&qi, &bi))| match (qi, bi) {
                (_, b) if b > 0.0 => Ok(qi / b),
                (0.0, _) => Ok(0.0),
                _ => Err(Error::InvalidArgument(format!(
                    "measure charges path {i}, which is null for the base measure"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The measure `F * base`.
    pub fn reweight(&self, base: &Measure) -> Result<Measure> {
        if self.values.len() != base.len() {
            return Err(Error::InvalidArgument("density and base measure differ in length".into()));
        }
        Measure::new(self.values.iter().zip(base.weights()).map(|(f, b)| f * b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        assert_eq!(Measure::uniform(&l).weights(), &[0.5, 0.5]);
        let l = AdaptedLattice::new(2, 2).unwrap();
        assert_eq!(Measure::uniform(&l).weights(), &[0.25; 4]);
        let l = AdaptedLattice::new(3, 1).unwrap();
        let u = Measure::uniform(&l);
        assert!(u.weights().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-16));
    }

    #[test]
    fn rejects_unnormalized_and_negative() {
        assert!(Measure::new(vec![0.5, 0.4]).is_err());
        assert!(Measure::new(vec![1.5, -0.5]).is_err());
        assert!(Measure::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Measure::normalized(vec![0.0, 0.0]).is_err());
        let m = Measure::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
    }

    #[test]
    fn density_round_trip() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let base = Measure::uniform(&l);
        let q = Measure::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let f = Density::between(&q, &base).unwrap();
        assert!((f.values()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f.values()[1] - 4.0 / 3.0).abs() < 1e-15);
        let back = f.reweight(&base).unwrap();
        for (a, b) in back.weights().iter().zip(q.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(Density::new(vec![1.0, 0.5], &base).is_err());
    }

    #[test]
    fn lift_preserves_mass_per_coarse_atom() {
        let coarse = AdaptedLattice::new(2, 2).unwrap();
        let fine = coarse.duplicated(2).unwrap();
        let q = Measure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let lifted = q.lift(&coarse, &fine).unwrap();
        let mut per_coarse = [0.0; 4];
        for (p, w) in lifted.weights().iter().enumerate() {
            per_coarse[coarse.coarse_path(&fine, p)] += w;
        }
        for (a, b) in per_coarse.iter().zip(q.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
