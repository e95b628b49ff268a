use super::{level_weights, one_step_average, AdaptedLattice, Measure};
use crate::error::{Error, Result};

/// Adapted process `g = (g_1, ..., g_n)` with each `g_i` valued in `R^d`.
///
/// Values are stored per filtration block: `levels[k]` holds `n * d`
/// numbers for each block of the time-`k` partition, so adaptedness holds
/// by construction. Within a block the layout is exchange-major:
/// component `c` of exchange `i` sits at `i * d + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeProcess {
    lattice: AdaptedLattice,
    exchanges: usize,
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl LatticeProcess {
    pub fn from_blocks(
        lattice: AdaptedLattice,
        exchanges: usize,
        dim: usize,
        levels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if exchanges == 0 || dim == 0 {
            return Err(Error::InvalidArgument("process needs at least one exchange and one component".into()));
        }
        if levels.len() != lattice.depth() + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} time levels, got {}",
                lattice.depth() + 1,
                levels.len()
            )));
        }
        let width = exchanges * dim;
        for (k, level) in levels.iter().enumerate() {
            if level.len() != lattice.num_blocks(k) * width {
                return Err(Error::InvalidArgument(format!(
                    "time level {k} has {} values, expected {}",
                    level.len(),
                    lattice.num_blocks(k) * width
                )));
            }
            if let Some(v) = level.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite process value {v} at time index {k}")));
            }
        }
        Ok(Self {
            lattice,
            exchanges,
            dim,
            levels,
        })
    }

    /// Builds a process from per-path data, `values[k][path * n * d + j]`,
    /// rejecting data that is not constant on the time-`k` blocks.
    pub fn from_path_values(
        lattice: AdaptedLattice,
        exchanges: usize,
        dim: usize,
        values: &[Vec<f64>],
    ) -> Result<Self> {
        let width = exchanges * dim;
        if values.len() != lattice.depth() + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} time levels, got {}",
                lattice.depth() + 1,
                values.len()
            )));
        }
        let mut levels = Vec::with_capacity(values.len());
        for (k, per_path) in values.iter().enumerate() {
            if per_path.len() != lattice.num_paths() * width {
                return Err(Error::InvalidArgument(format!(
                    "time level {k} has {} values, expected {}",
                    per_path.len(),
                    lattice.num_paths() * width
                )));
            }
            let mut level = Vec::with_capacity(lattice.num_blocks(k) * width);
            for (block, range) in lattice.partition(k).into_iter().enumerate() {
                let first = &per_path[range.start * width..(range.start + 1) * width];
                for p in range.clone().skip(1) {
                    // exact equality: adapted data is copied, never recomputed
                    if per_path[p * width..(p + 1) * width] != *first {
                        return Err(Error::NotAdapted {
                            k,
                            block,
                            first_path: lattice.path_label(range.start),
                            other_path: lattice.path_label(p),
                        });
                    }
                }
                level.extend_from_slice(first);
            }
            levels.push(level);
        }
        Self::from_blocks(lattice, exchanges, dim, levels)
    }

    /// Builds a process from a closure that fills the `n * d` values of each
    /// block, given `(k, digit_prefix)` with a prefix of length `k`.
    pub fn from_fn(
        lattice: AdaptedLattice,
        exchanges: usize,
        dim: usize,
        mut f: impl FnMut(usize, &[usize], &mut [f64]),
    ) -> Result<Self> {
        let width = exchanges * dim;
        let mut levels = Vec::with_capacity(lattice.depth() + 1);
        for k in 0..=lattice.depth() {
            let mut level = vec![0.0; lattice.num_blocks(k) * width];
            for block in 0..lattice.num_blocks(k) {
                let first_path = lattice.block_range(k, block).start;
                let digits = lattice.digits(first_path);
                f(k, &digits[..k], &mut level[block * width..(block + 1) * width]);
            }
            levels.push(level);
        }
        Self::from_blocks(lattice, exchanges, dim, levels)
    }

    /// Doob martingale `X_k = E_Q[X_K | F_k]` from terminal data
    /// `terminal[path * n * d + j]`.
    ///
    /// Built with the same one-step averaging the unfairness functionals
    /// use, so the result has exactly zero one-step deviation on every
    /// block of positive mass.
    pub fn doob_martingale(
        lattice: AdaptedLattice,
        exchanges: usize,
        dim: usize,
        q: &Measure,
        terminal: Vec<f64>,
    ) -> Result<Self> {
        q.check_lattice(&lattice)?;
        let width = exchanges * dim;
        if terminal.len() != lattice.num_paths() * width {
            return Err(Error::InvalidArgument("terminal data has the wrong length".into()));
        }
        let weights = level_weights(&lattice, q.weights());
        let depth = lattice.depth();
        let mut levels = vec![Vec::new(); depth + 1];
        levels[depth] = terminal;
        for k in (0..depth).rev() {
            levels[k] = one_step_average(lattice.branching(), width, &levels[k + 1], &weights[k + 1], &weights[k]);
        }
        Self::from_blocks(lattice, exchanges, dim, levels)
    }

    pub fn lattice(&self) -> &AdaptedLattice {
        &self.lattice
    }

    pub fn exchanges(&self) -> usize {
        self.exchanges
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `n * d`, the number of reals per node.
    pub fn width(&self) -> usize {
        self.exchanges * self.dim
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn block_value(&self, k: usize, block: usize) -> &[f64] {
        let w = self.width();
        &self.levels[k][block * w..(block + 1) * w]
    }

    /// All `n * d` values at time index `k` on `path`.
    pub fn value(&self, k: usize, path: usize) -> &[f64] {
        self.block_value(k, self.lattice.block_of(k, path))
    }

    pub fn component(&self, k: usize, path: usize, exchange: usize, comp: usize) -> f64 {
        self.value(k, path)[exchange * self.dim + comp]
    }

    /// Path-indexed vector of one component at time index `k`.
    pub fn component_vector(&self, k: usize, exchange: usize, comp: usize) -> Vec<f64> {
        (0..self.lattice.num_paths())
            .map(|p| self.component(k, p, exchange, comp))
            .collect()
    }

    /// Per-path expansion, the inverse of [`LatticeProcess::from_path_values`].
    pub fn path_values(&self) -> Vec<Vec<f64>> {
        (0..=self.lattice.depth())
            .map(|k| {
                (0..self.lattice.num_paths())
                    .flat_map(|p| self.value(k, p).iter().copied())
                    .collect()
            })
            .collect()
    }

    /// Values along one path, one row of `n * d` numbers per time index.
    pub fn along_path(&self, path: usize) -> Vec<Vec<f64>> {
        (0..=self.lattice.depth()).map(|k| self.value(k, path).to_vec()).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.levels.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.lattice != other.lattice || self.exchanges != other.exchanges || self.dim != other.dim {
            return Err(Error::InvalidArgument("processes live on different lattices or shapes".into()));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let levels = self.levels.iter().map(|l| l.iter().map(|&v| f(v)).collect()).collect();
        Self::from_blocks(self.lattice, self.exchanges, self.dim, levels)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        self.map(|v| factor * v)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
            .collect();
        Self::from_blocks(self.lattice, self.exchanges, self.dim, levels)
    }

    /// Restriction to one exchange, as a single-exchange process.
    pub fn exchange(&self, i: usize) -> Result<Self> {
        if i >= self.exchanges {
            return Err(Error::InvalidArgument(format!("exchange {i} out of range")));
        }
        let w = self.width();
        let d = self.dim;
        let levels = self
            .levels
            .iter()
            .map(|l| l.chunks_exact(w).flat_map(|c| c[i * d..(i + 1) * d].iter().copied()).collect())
            .collect();
        Self::from_blocks(self.lattice, 1, d, levels)
    }

    /// Copy of the process on the lattice with every branch duplicated
    /// `factor` times; values follow the coarse path.
    pub fn duplicate_branches(&self, factor: usize) -> Result<Self> {
        let fine = self.lattice.duplicated(factor)?;
        let w = self.width();
        let levels = (0..=fine.depth())
            .map(|k| {
                (0..fine.num_blocks(k))
                    .flat_map(|fb| {
                        let fine_path = fine.block_range(k, fb).start;
                        let coarse_path = self.lattice.coarse_path(&fine, fine_path);
                        let cb = self.lattice.block_of(k, coarse_path);
                        self.levels[k][cb * w..(cb + 1) * w].iter().copied()
                    })
                    .collect()
            })
            .collect();
        Self::from_blocks(fine, self.exchanges, self.dim, levels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> LatticeProcess {
        let l = AdaptedLattice::new(2, 1).unwrap();
        LatticeProcess::from_path_values(l, 1, 1, &[vec![1.0, 1.0], vec![2.0, 0.5]]).unwrap()
    }

    #[test]
    fn canonical_layout() {
        let g = canonical();
        assert_eq!(g.level(0), &[1.0]);
        assert_eq!(g.level(1), &[2.0, 0.5]);
        assert_eq!(g.component_vector(1, 0, 0), vec![2.0, 0.5]);
        assert_eq!(g.path_values(), vec![vec![1.0, 1.0], vec![2.0, 0.5]]);
    }

    #[test]
    fn non_adapted_data_names_the_block() {
        let l = AdaptedLattice::new(2, 2).unwrap();
        let values = vec![vec![1.0; 4], vec![1.0, 1.0, 2.0, 2.5], vec![0.0, 1.0, 2.0, 3.0]];
        match LatticeProcess::from_path_values(l, 1, 1, &values) {
            Err(Error::NotAdapted { k, block, first_path, other_path }) => {
                assert_eq!((k, block), (1, 1));
                assert_eq!((first_path.as_str(), other_path.as_str()), ("10", "11"));
            }
            other => panic!("expected adaptedness error, got {other:?}"),
        }
    }

    #[test]
    fn doob_martingale_is_block_average() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let q = Measure::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let m = LatticeProcess::doob_martingale(l, 1, 1, &q, vec![2.0, 0.5]).unwrap();
        assert!((m.level(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplication_copies_values() {
        let l = AdaptedLattice::new(2, 2).unwrap();
        let g = LatticeProcess::from_fn(l, 1, 1, |k, prefix, out| {
            out[0] = 1.0 + k as f64 + prefix.iter().sum::<usize>() as f64 * 0.1;
        })
        .unwrap();
        let fine = g.duplicate_branches(2).unwrap();
        assert_eq!(fine.lattice().branching(), 4);
        for p in 0..fine.lattice().num_paths() {
            let cp = l.coarse_path(fine.lattice(), p);
            for k in 0..=2 {
                assert_eq!(fine.value(k, p), g.value(k, cp));
            }
        }
    }

    #[test]
    fn exchange_restriction() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let g = LatticeProcess::from_fn(l, 2, 1, |k, prefix, out| {
            out[0] = 1.0 + k as f64;
            out[1] = 10.0 + prefix.first().copied().unwrap_or(0) as f64;
        })
        .unwrap();
        let second = g.exchange(1).unwrap();
        assert_eq!(second.level(1), &[10.0, 11.0]);
        assert!(g.exchange(2).is_err());
    }
}
