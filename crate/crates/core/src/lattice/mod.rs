//! Finite adapted probability spaces.
//!
//! A lattice is the product path space `{0..b-1}^K` on the time grid
//! `0, 1/K, ..., 1`. Paths are enumerated in lexicographic order of their
//! branch digits, so the filtration block of a path at time index `k` (the
//! set of paths sharing its first `k` digits) is a contiguous index range of
//! length `b^(K-k)`. Every path-indexed vector in this crate follows that
//! order.

mod expectation;
mod measure;
mod process;

pub use expectation::{abs_product_mean, cond_exp, cond_exp_reweighted, covariance, CondExpectation};
pub use measure::{Density, Measure, NORMALIZATION_TOL};
pub use process::LatticeProcess;

pub(crate) use expectation::{level_weights, one_step_average};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scenario lattice `Omega_0^K` with filtration given by prefix partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdaptedLattice {
    branching: usize,
    depth: usize,
}

impl AdaptedLattice {
    pub const DEFAULT_PATH_BUDGET: usize = 1 << 20;

    /// Digits used for path labels; caps the branching factor at 36.
    const DIGITS: &'static [u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

    pub fn new(branching: usize, depth: usize) -> Result<Self> {
        Self::with_budget(branching, depth, Self::DEFAULT_PATH_BUDGET)
    }

    pub fn with_budget(branching: usize, depth: usize, budget: usize) -> Result<Self> {
        if branching < 2 {
            return Err(Error::InvalidArgument(format!(
                "branching must be at least 2, got {branching}"
            )));
        }
        if branching > Self::DIGITS.len() {
            return Err(Error::InvalidArgument(format!(
                "branching must be at most {}, got {branching}",
                Self::DIGITS.len()
            )));
        }
        if depth < 1 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        let paths = (branching as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
        if paths > budget as u128 {
            return Err(Error::SizeExceeded { paths, budget });
        }
        Ok(Self { branching, depth })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Grid spacing `1/K`.
    pub fn dt(&self) -> f64 {
        1.0 / self.depth as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn num_paths(&self) -> usize {
        self.branching.pow(self.depth as u32)
    }

    /// Number of blocks of the time-`k` partition, `b^k`.
    pub fn num_blocks(&self, k: usize) -> usize {
        assert!(k <= self.depth, "time index {k} beyond depth {}", self.depth);
        self.branching.pow(k as u32)
    }

    /// Number of paths in each block of the time-`k` partition, `b^(K-k)`.
    pub fn block_len(&self, k: usize) -> usize {
        assert!(k <= self.depth, "time index {k} beyond depth {}", self.depth);
        self.branching.pow((self.depth - k) as u32)
    }

    pub fn block_of(&self, k: usize, path: usize) -> usize {
        path / self.block_len(k)
    }

    pub fn block_range(&self, k: usize, block: usize) -> Range<usize> {
        let len = self.block_len(k);
        block * len..(block + 1) * len
    }

    /// The time-`k` partition as contiguous path ranges, in lexicographic order.
    pub fn partition(&self, k: usize) -> Vec<Range<usize>> {
        (0..self.num_blocks(k)).map(|b| self.block_range(k, b)).collect()
    }

    /// Branch digits of `path`, first step first.
    pub fn digits(&self, path: usize) -> Vec<usize> {
        let mut out = vec![0; self.depth];
        let mut rest = path;
        for slot in out.iter_mut().rev() {
            *slot = rest % self.branching;
            rest /= self.branching;
        }
        out
    }

    pub fn path_from_digits(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.depth {
            return Err(Error::InvalidArgument(format!(
                "expected {} digits, got {}",
                self.depth,
                digits.len()
            )));
        }
        digits.iter().try_fold(0usize, |acc, &d| {
            if d >= self.branching {
                Err(Error::InvalidArgument(format!(
                    "digit {d} out of range for branching {}",
                    self.branching
                )))
            } else {
                Ok(acc * self.branching + d)
            }
        })
    }

    /// Base-`b` digit string of a path, e.g. `"010"`.
    pub fn path_label(&self, path: usize) -> String {
        self.digits(path)
            .into_iter()
            .map(|d| Self::DIGITS[d] as char)
            .collect()
    }

    pub fn parse_path_label(&self, label: &str) -> Result<usize> {
        let digits = label
            .chars()
            .map(|c| {
                c.to_digit(36)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad path digit {c:?} in {label:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.path_from_digits(&digits)
    }

    /// Lattice with every branch duplicated `factor` times. Fine digit `e`
    /// maps to coarse digit `e / factor`.
    pub fn duplicated(&self, factor: usize) -> Result<Self> {
        if factor < 1 {
            return Err(Error::InvalidArgument("duplication factor must be at least 1".into()));
        }
        Self::new(self.branching * factor, self.depth)
    }

    /// Coarse path corresponding to a path of `fine`, where `fine` was built
    /// by [`AdaptedLattice::duplicated`].
    pub fn coarse_path(&self, fine: &AdaptedLattice, fine_path: usize) -> usize {
        let factor = fine.branching / self.branching;
        let digits: Vec<usize> = fine.digits(fine_path).into_iter().map(|e| e / factor).collect();
        digits.iter().fold(0, |acc, &d| acc * self.branching + d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_lattice() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        assert_eq!(l.num_paths(), 2);
        assert_eq!(l.partition(0), vec![0..2]);
        assert_eq!(l.partition(1), vec![0..1, 1..2]);
    }

    #[test]
    fn block_counts() {
        let l = AdaptedLattice::new(2, 3).unwrap();
        assert_eq!(l.num_paths(), 8);
        assert_eq!(l.partition(2).len(), 4);

        let l = AdaptedLattice::new(3, 2).unwrap();
        assert_eq!(l.num_paths(), 9);
        let p1 = l.partition(1);
        assert_eq!(p1.len(), 3);
        assert!(p1.iter().all(|r| r.len() == 3));
    }

    #[test]
    fn partitions_refine_and_cover() {
        for (b, k) in [(2, 4), (3, 3), (5, 2)] {
            let l = AdaptedLattice::new(b, k).unwrap();
            assert_eq!(l.partition(0).len(), 1);
            assert_eq!(l.partition(k).len(), l.num_paths());
            for t in 0..k {
                for fine in l.partition(t + 1) {
                    let coarse = l.block_of(t, fine.start);
                    assert!(l.block_range(t, coarse).contains(&(fine.end - 1)));
                }
            }
            for t in 0..=k {
                let covered: usize = l.partition(t).iter().map(|r| r.len()).sum();
                assert_eq!(covered, l.num_paths());
            }
        }
    }

    #[test]
    fn argument_and_size_errors() {
        assert!(matches!(AdaptedLattice::new(1, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(AdaptedLattice::new(2, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(AdaptedLattice::new(2, 21), Err(Error::SizeExceeded { .. })));
        assert!(AdaptedLattice::new(2, 20).is_ok());
        assert!(matches!(AdaptedLattice::new(3, 400), Err(Error::SizeExceeded { .. })));
    }

    #[test]
    fn labels_round_trip() {
        let l = AdaptedLattice::new(3, 4).unwrap();
        for p in 0..l.num_paths() {
            assert_eq!(l.parse_path_label(&l.path_label(p)).unwrap(), p);
        }
        assert_eq!(l.path_label(5), "0012");
        assert!(l.parse_path_label("0013").is_err());
        assert!(l.parse_path_label("001").is_err());
    }

    #[test]
    fn coarse_path_of_duplicate() {
        let coarse = AdaptedLattice::new(2, 2).unwrap();
        let fine = coarse.duplicated(2).unwrap();
        assert_eq!(fine.branching(), 4);
        // fine digits (3, 1) -> coarse digits (1, 0)
        let fp = fine.path_from_digits(&[3, 1]).unwrap();
        assert_eq!(coarse.coarse_path(&fine, fp), 2);
    }
}
