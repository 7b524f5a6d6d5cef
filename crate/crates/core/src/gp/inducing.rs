//! Inducing-point selection: seeded k-means with farthest-point
//! initialization, deterministic in the seed.

use super::GpError;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KMEANS_ITERS: usize = 10;

/// Pick `m` inducing rows from `x` by k-means (10 Lloyd iterations after
/// farthest-point initialization). Ties break toward the lowest index, so
/// the result is a pure function of `(x, m, seed)`.
pub fn select_inducing(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<DMatrix<f64>, GpError> {
    let n = x.nrows();
    if m == 0 || m > n {
        return Err(GpError::TooFewPoints { needed: m.max(1), got: n });
    }
    let dim = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // farthest-point init
    let mut chosen = Vec::with_capacity(m);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut min_dist: Vec<f64> = (0..n).map(|i| row_dist2(x, i, x, first)).collect();
    while chosen.len() < m {
        let mut best = usize::MAX;
        let mut best_dist = -1.0;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if min_dist[i] > best_dist {
                best_dist = min_dist[i];
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..n {
            let d = row_dist2(x, i, x, best);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    let mut centers = DMatrix::zeros(m, dim);
    for (c, &idx) in chosen.iter().enumerate() {
        centers.row_mut(c).copy_from(&x.row(idx));
    }

    // Lloyd iterations; empty clusters keep their previous center
    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_ITERS {
        for (i, slot) in assignment.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for c in 0..m {
                let d = row_dist2(x, i, &centers, c);
                if d < best_dist {
                    best_dist = d;
                    best = c;
                }
            }
            *slot = best;
        }
        let mut sums = DMatrix::<f64>::zeros(m, dim);
        let mut counts = vec![0usize; m];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for d in 0..dim {
                sums[(c, d)] += x[(i, d)];
            }
        }
        for c in 0..m {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers[(c, d)] = sums[(c, d)] / counts[c] as f64;
                }
            }
        }
    }
    Ok(centers)
}

fn row_dist2(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for d in 0..a.ncols() {
        let diff = a[(i, d)] - b[(j, d)];
        acc += diff * diff;
    }
    acc
}
