use crate::error::{Error, Result};
use crate::lattice::{LatticeProcess, Measure};

/// The unique measure making a binomial scalar process a martingale.
///
/// At every node the up-branch probability is `(s - s_down) / (s_up - s_down)`;
/// path weights are products of branch probabilities.
pub fn risk_neutral_binomial_measure(process: &LatticeProcess) -> Result<Measure> {
    let lattice = process.lattice();
    if process.width() != 1 || lattice.branching() != 2 {
        return Err(Error::InvalidArgument(
            "risk-neutral binomial measure needs one exchange, one component and branching 2".into(),
        ));
    }
    // path-prefix weights of the level-k blocks
    let mut weights = vec![1.0];
    for k in 0..lattice.depth() {
        let mut next = Vec::with_capacity(weights.len() * 2);
        for (block, &w) in weights.iter().enumerate() {
            let s = process.block_value(k, block)[0];
            let c0 = process.block_value(k + 1, 2 * block)[0];
            let c1 = process.block_value(k + 1, 2 * block + 1)[0];
            let (down, up) = (c0.min(c1), c0.max(c1));
            if !(down < s && s < up) {
                return Err(Error::NoMartingaleMeasure {
                    k,
                    block,
                    value: s,
                    down,
                    up,
                });
            }
            let p0 = (s - c1) / (c0 - c1);
            next.push(w * p0);
            next.push(w * (1.0 - p0));
        }
        weights = next;
    }
    Measure::new(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::AdaptedLattice;
    use crate::unfairness::is_martingale;

    #[test]
    fn one_step_example() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let g = LatticeProcess::from_path_values(l, 1, 1, &[vec![1.0, 1.0], vec![2.0, 0.5]]).unwrap();
        let q = risk_neutral_binomial_measure(&g).unwrap();
        assert!((q.weights()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.weights()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_children() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let g = LatticeProcess::from_path_values(l, 1, 1, &[vec![1.0, 1.0], vec![1.25, 0.75]]).unwrap();
        let q = risk_neutral_binomial_measure(&g).unwrap();
        assert!((q.weights()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_iid_steps() {
        let l = AdaptedLattice::new(2, 2).unwrap();
        let g = LatticeProcess::from_fn(l, 1, 1, |_, prefix, out| {
            out[0] = prefix.iter().map(|&d| if d == 0 { 2.0 } else { 0.5 }).product();
        })
        .unwrap();
        let q = risk_neutral_binomial_measure(&g).unwrap();
        assert!((q.weights()[0] - 1.0 / 9.0).abs() < 1e-15);
        let check = is_martingale(&q, &g, 1e-12).unwrap();
        assert!(check.is_martingale, "{check:?}");
    }

    #[test]
    fn value_outside_children() {
        let l = AdaptedLattice::new(2, 1).unwrap();
        let g = LatticeProcess::from_path_values(l, 1, 1, &[vec![3.0, 3.0], vec![2.0, 0.5]]).unwrap();
        assert!(matches!(
            risk_neutral_binomial_measure(&g),
            Err(Error::NoMartingaleMeasure { k: 0, block: 0, .. })
        ));
        let flat = LatticeProcess::from_path_values(l, 1, 1, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(risk_neutral_binomial_measure(&flat).is_err());
    }
}
