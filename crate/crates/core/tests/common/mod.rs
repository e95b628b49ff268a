//! Shared generators and path-level reference implementations. The
//! references loop over paths directly and share no code with the
//! block recursions of the library.

#![allow(dead_code)]

use fairmeasure::{AdaptedLattice, LatticeProcess, Measure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `b in {2, 3}`, at most 64 paths.
pub fn random_lattice(rng: &mut ChaCha8Rng) -> AdaptedLattice {
    let b = rng.random_range(2..=3);
    let max_depth = if b == 2 { 6 } else { 3 };
    AdaptedLattice::new(b, rng.random_range(1..=max_depth)).unwrap()
}

pub fn random_measure(rng: &mut ChaCha8Rng, lattice: &AdaptedLattice) -> Measure {
    Measure::normalized((0..lattice.num_paths()).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}

pub fn random_process(rng: &mut ChaCha8Rng, lattice: AdaptedLattice, n: usize, d: usize) -> LatticeProcess {
    LatticeProcess::from_fn(lattice, n, d, |_, _, out| {
        out.iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
    })
    .unwrap()
}

/// Paths sharing the first `k` digits with `path`.
pub fn block_paths(lattice: &AdaptedLattice, k: usize, path: usize) -> Vec<usize> {
    let digits = lattice.digits(path);
    (0..lattice.num_paths()).filter(|&o| lattice.digits(o)[..k] == digits[..k]).collect()
}

/// `E_Q[x | F_k]` as a path vector, by brute force over prefixes.
pub fn cond_exp_oracle(lattice: &AdaptedLattice, x: &[f64], k: usize, q: &[f64]) -> Vec<f64> {
    (0..lattice.num_paths())
        .map(|w| {
            let block = block_paths(lattice, k, w);
            let mass: f64 = block.iter().map(|&o| q[o]).sum();
            if mass == 0.0 {
                0.0
            } else {
                block.iter().map(|&o| q[o] * x[o]).sum::<f64>() / mass
            }
        })
        .collect()
}

/// `m` straight from its definition.
pub fn m_oracle(q: &[f64], g: &LatticeProcess, p: f64) -> f64 {
    let l = g.lattice();
    let dt = l.dt();
    let mut total = 0.0;
    for i in 0..g.exchanges() {
        for k in 0..l.depth() {
            for t in k..=l.depth() {
                let conds: Vec<Vec<f64>> = (0..g.dim())
                    .map(|c| cond_exp_oracle(l, &g.component_vector(t, i, c), k, q))
                    .collect();
                for w in 0..l.num_paths() {
                    let sq: f64 = (0..g.dim()).map(|c| (g.component(k, w, i, c) - conds[c][w]).powi(2)).sum();
                    total += dt * dt * q[w] * sq.sqrt().powf(p);
                }
            }
        }
    }
    total
}

/// `n` straight from its definition.
pub fn n_oracle(q: &[f64], g: &LatticeProcess) -> f64 {
    let l = g.lattice();
    let dt = l.dt();
    let mut total = 0.0;
    for i in 0..g.exchanges() {
        for c in 0..g.dim() {
            for k in 0..l.depth() {
                let ahead = cond_exp_oracle(l, &g.component_vector(k + 1, i, c), k, q);
                for w in 0..l.num_paths() {
                    let now = g.component(k, w, i, c);
                    total += dt * q[w] * ((ahead[w] - now) / (dt * now)).abs();
                }
            }
        }
    }
    total
}

/// Largest one-step deviation `|x_k - E[x_{k+1} | F_k]|` by brute force.
pub fn one_step_deviation_oracle(q: &[f64], g: &LatticeProcess) -> f64 {
    let l = g.lattice();
    let mut worst: f64 = 0.0;
    for i in 0..g.exchanges() {
        for c in 0..g.dim() {
            for k in 0..l.depth() {
                let ahead = cond_exp_oracle(l, &g.component_vector(k + 1, i, c), k, q);
                for w in 0..l.num_paths() {
                    worst = worst.max((g.component(k, w, i, c) - ahead[w]).abs());
                }
            }
        }
    }
    worst
}

/// Correlation integral of scalar exchanges `i, j` from its definition.
pub fn correlation_oracle(q: &[f64], g: &LatticeProcess, i: usize, j: usize) -> f64 {
    let l = g.lattice();
    let mut total = 0.0;
    for k in 1..=l.depth() {
        let x = g.component_vector(k, i, 0);
        let y = g.component_vector(k, j, 0);
        let ex: f64 = q.iter().zip(&x).map(|(a, b)| a * b).sum();
        let ey: f64 = q.iter().zip(&y).map(|(a, b)| a * b).sum();
        let exy: f64 = (0..q.len()).map(|w| q[w] * x[w] * y[w]).sum();
        let e: f64 = (0..q.len()).map(|w| q[w] * (x[w] * y[w]).abs()).sum();
        if e != 0.0 {
            total += l.dt() * (exy - ex * ey) / e;
        }
    }
    total
}

/// Single-asset binomial tree with node-dependent up and down factors.
pub fn random_binomial(rng: &mut ChaCha8Rng, depth: usize) -> LatticeProcess {
    let l = AdaptedLattice::new(2, depth).unwrap();
    let factors: Vec<(f64, f64)> = (0..l.num_paths()).map(|_| (rng.random_range(1.05..1.6), rng.random_range(0.6..0.95))).collect();
    LatticeProcess::from_fn(l, 1, 1, |_, prefix, out| {
        let mut v = 1.0;
        for (s, &digit) in prefix.iter().enumerate() {
            // factors depend on the node, keyed by prefix
            let key = prefix[..s].iter().fold(1usize, |a, &d| a * 2 + d) % factors.len();
            let (up, down) = factors[key];
            v *= if digit == 0 { up } else { down };
        }
        out[0] = v;
    })
    .unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
