//! Small dense kernels shared by the model code.
//!
//! Every reduction here runs in a fixed sequential order so results do not
//! depend on how callers schedule work across threads.

use rayon::prelude::*;

/// Dot product with four interleaved accumulators, combined in a fixed order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Largest absolute entry of `QᵀQ − I` for the given columns.
pub fn orthonormality_error(columns: &[Vec<f64>]) -> f64 {
    let k = columns.len();
    (0..k)
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            for j in i..k {
                let g = dot(&columns[i], &columns[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
            worst
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
///
/// Columns whose remaining norm collapses below `drop_tol` (relative to the
/// original column norm) are removed; the indices of kept columns are returned.
pub fn orthonormalize(columns: &mut Vec<Vec<f64>>, drop_tol: f64) -> Vec<usize> {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    let mut kept_idx = Vec::with_capacity(columns.len());
    for (idx, mut col) in columns.drain(..).enumerate() {
        let original = norm(&col);
        if original == 0.0 {
            continue;
        }
        for _pass in 0..2 {
            for q in &kept {
                let c = dot(q, &col);
                axpy(-c, q, &mut col);
            }
        }
        let n = norm(&col);
        if n <= drop_tol * original {
            continue;
        }
        let inv = 1.0 / n;
        col.iter_mut().for_each(|v| *v *= inv);
        kept.push(col);
        kept_idx.push(idx);
    }
    *columns = kept;
    kept_idx
}

/// Flip each column so its largest-magnitude entry (first one on ties) is nonnegative.
pub fn fix_signs(columns: &mut [Vec<f64>]) {
    for col in columns.iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Indices that sort `values` in descending order; equal values keep their original order.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}
