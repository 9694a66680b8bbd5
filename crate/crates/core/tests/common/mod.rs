//! Test-only oracles. Nothing here calls into the library's linear algebra.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            m[j] += r[j];
        }
    }
    m.iter().map(|v| v / rows.len() as f64).collect()
}

pub fn centered(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = column_mean(rows);
    rows.iter()
        .map(|r| r.iter().zip(&m).map(|(a, b)| a - b).collect())
        .collect()
}

/// One-sided Jacobi SVD of an `n×d` matrix given as rows.
///
/// Returns singular values in descending order and the matching right
/// singular vectors (length `d`). Zero singular values are included.
pub fn jacobi_svd(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    // columns of A and of V
    let mut a: Vec<Vec<f64>> = (0..d).map(|j| (0..n).map(|i| rows[i][j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (x, y) = (a[p][i], a[q][i]);
                    a[p][i] = c * x - s * y;
                    a[q][i] = s * x + c * y;
                }
                for i in 0..d {
                    let (x, y) = (v[p][i], v[q][i]);
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    (
        idx.iter().map(|&i| sv[i]).collect(),
        idx.iter().map(|&i| v[i].clone()).collect(),
    )
}

/// Explicit `P = Σ u uᵀ` as a dense `d×d` matrix.
pub fn projector(basis: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; d]; d];
    for u in basis {
        for i in 0..d {
            for j in 0..d {
                p[i][j] += u[i] * u[j];
            }
        }
    }
    p
}

pub fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// `P(x − μ) + μ` computed through an explicit projector matrix.
pub fn oracle_reconstruct(basis: &[Vec<f64>], mean: &[f64], x: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let c: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let pc = matvec(&projector(basis, d), &c);
    pc.iter().zip(mean).map(|(a, b)| a + b).collect()
}

pub fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius norm of `(I − P_a) B`, an upper bound on the sine of the largest
/// principal angle between `span(a)` and `span(b)` when both are orthonormal.
pub fn subspace_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for bv in b {
        let mut r = bv.clone();
        for av in a {
            let c: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
            for (ri, ai) in r.iter_mut().zip(av) {
                *ri -= c * ai;
            }
        }
        total += r.iter().map(|v| v * v).sum::<f64>();
    }
    total.sqrt()
}

/// Largest sine of the principal angles, symmetrized over both directions.
pub fn principal_angle_sine(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    subspace_distance(a, b).max(subspace_distance(b, a))
}

/// Mean and leading right singular vectors of the centered rows, dropping
/// directions below `1e-10` of the largest singular value.
pub fn oracle_model(rows: &[Vec<f64>], cap: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mean = column_mean(rows);
    let (sv, v) = jacobi_svd(&centered(rows));
    let top = sv.first().copied().unwrap_or(0.0);
    let basis = sv
        .iter()
        .zip(v)
        .take(cap)
        .filter(|(s, _)| top > 0.0 && **s > 1e-10 * top)
        .map(|(_, v)| v)
        .collect();
    (mean, basis)
}

/// Reconstruction error of `x` under [`oracle_model`].
pub fn oracle_score(mean: &[f64], basis: &[Vec<f64>], x: &[f64]) -> f64 {
    let r = oracle_reconstruct(basis, mean, x);
    l2(&x.iter().zip(&r).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// `k` Gaussian clusters of `per` unit-variance points around centers drawn
/// with standard deviation `spread`. Returns rows and cluster labels.
pub fn gaussian_clusters(seed: u64, k: usize, per: usize, d: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| gaussian_vec(&mut r, d).iter().map(|v| spread * v).collect())
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            rows.push(gaussian_vec(&mut r, d).iter().zip(center).map(|(a, b)| a + b).collect());
            labels.push(c);
        }
    }
    (rows, labels)
}
