#![allow(dead_code)]

use asgd_core::linalg::{DenseMatrix, SpdMatrix};
use asgd_core::rng::SimRng;
use asgd_core::sketch::{LinearSystem, SketchDistribution, SpectralProfile};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

pub fn normal_vec(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `M Mᵀ/n + I/2`.
pub fn random_spd(rng: &mut SimRng, n: usize) -> SpdMatrix {
    let m = normal_matrix(rng, n, n);
    let mut b = m.matmul(&m.transpose()).unwrap().scale(1.0 / n as f64);
    for i in 0..n {
        b[(i, i)] += 0.5;
    }
    b.symmetrize();
    SpdMatrix::new(b).unwrap()
}

/// Consistent `m x n` system of the given rank with random SPD geometry.
pub fn random_system(rng: &mut SimRng, m: usize, n: usize, rank: usize, euclidean: bool) -> LinearSystem {
    let a = normal_matrix(rng, m, rank)
        .matmul(&normal_matrix(rng, rank, n))
        .unwrap();
    let x_true = normal_vec(rng, n);
    let b = a.matvec(&x_true).unwrap();
    let geometry = if euclidean {
        SpdMatrix::identity(n)
    } else {
        random_spd(rng, n)
    };
    LinearSystem::new(a, b, geometry).unwrap()
}

/// Random coordinate weights bounded away from zero.
pub fn random_coordinate(rng: &mut SimRng, m: usize) -> SketchDistribution {
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    SketchDistribution::coordinate(w.into_iter().map(|v| v / s).collect()).unwrap()
}

/// Contiguous blocks of size 2 (the last possibly 1), uniform weights.
pub fn pair_blocks(m: usize) -> SketchDistribution {
    let blocks: Vec<Vec<usize>> = (0..m).step_by(2).map(|i| (i..(i + 2).min(m)).collect()).collect();
    SketchDistribution::block_uniform(blocks).unwrap()
}

/// Random `(λ_min⁺, λ_max)` with `λ_min⁺ + λ_max > 1` (`case1`) or `< 1`.
pub fn random_profile(rng: &mut SimRng, case1: bool) -> SpectralProfile {
    loop {
        let lmin: f64 = 10f64.powf(rng.random_range(-3.0..-0.35));
        let lmax: f64 = if case1 {
            rng.random_range((1.0 - lmin).max(lmin)..1.0)
        } else {
            rng.random_range(lmin..(1.0 - lmin))
        };
        let k = lmin + lmax;
        if (case1 && k > 1.0 + 1e-6) || (!case1 && k < 1.0 - 1e-6) {
            return SpectralProfile::from_extremes(lmin, lmax).unwrap();
        }
    }
}

/// The 2x2 identity system with `b = (1, 1)` and the uniform coordinate
/// sketch; `E[Z] = I/2`.
pub fn identity_system() -> (LinearSystem, SketchDistribution) {
    (
        LinearSystem::euclidean(DenseMatrix::identity(2), vec![1.0, 1.0]).unwrap(),
        SketchDistribution::coordinate_uniform(2).unwrap(),
    )
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
