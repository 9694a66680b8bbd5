//! Bag-of-visual-words: a k-means codebook over pooled local descriptors and
//! per-image histograms of nearest-centroid counts.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::sampling::PermutationSampler;

pub const MAX_ITERATIONS: usize = 300;
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Local descriptors of one image, `rows × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f64>,
}

impl DescriptorSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidData("descriptor dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidData(format!(
                "{} values are not a whole number of {dim}-dimensional descriptors",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite descriptor value".into()));
        }
        Ok(DescriptorSet { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowCodebook {
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    /// Lloyd iterations actually run.
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroid, after each assignment step.
    pub objective_trace: Vec<f64>,
}

impl BowCodebook {
    pub fn clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_plus_plus(points: &[&[f64]], k: usize, sampler: &mut PermutationSampler) -> Vec<Vec<f64>> {
    let m = points.len();
    let mut centroids = vec![points[sampler.below(m as u64) as usize].to_vec()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = sampler.unit() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, w) in closest.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` short of `target`; take the last weighted point
            chosen.unwrap_or_else(|| closest.iter().rposition(|w| *w > 0.0).unwrap_or(0))
        } else {
            sampler.below(m as u64) as usize
        };
        let c = points[pick].to_vec();
        for (d, p) in closest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// k-means over all descriptors pooled together: seeded k-means++ start, then
/// Lloyd iterations until no centroid moves more than `1e-6` or 300 iterations
/// have run. An empty cluster is re-seeded at the point farthest from its
/// current centroid.
pub fn build_codebook(sets: &[DescriptorSet], k: usize, seed: u64) -> Result<BowCodebook> {
    if k == 0 {
        return Err(Error::InvalidArgument("codebook needs at least one cluster".into()));
    }
    let dim = sets
        .first()
        .map(DescriptorSet::dim)
        .ok_or_else(|| Error::InvalidData("no descriptor sets".into()))?;
    for s in sets {
        check_dim(dim, s.dim())?;
    }
    let points: Vec<&[f64]> = sets.iter().flat_map(DescriptorSet::rows).collect();
    if points.len() < k {
        return Err(Error::InvalidData(format!(
            "{} descriptors cannot form {k} clusters",
            points.len()
        )));
    }

    let mut sampler = PermutationSampler::new(seed);
    let mut centroids = kmeans_plus_plus(&points, k, &mut sampler);
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(&centroids, p)).collect();
        trace.push(assigned.iter().map(|a| a.1).sum());

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, (c, _)) in points.iter().zip(&assigned) {
            counts[*c] += 1;
            for (s, v) in sums[*c].iter_mut().zip(*p) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / n as f64).collect()
                }
            })
            .collect();

        let mut taken = vec![false; points.len()];
        for empty in (0..k).filter(|&c| counts[c] == 0) {
            let far = assigned
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .fold(None, |best: Option<(usize, f64)>, (i, a)| match best {
                    Some((_, d)) if d >= a.1 => best,
                    _ => Some((i, a.1)),
                });
            if let Some((i, _)) = far {
                taken[i] = true;
                next[empty] = points[i].to_vec();
            }
        }

        let moved = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if moved < CONVERGENCE_TOL {
            break;
        }
    }

    Ok(BowCodebook {
        centroids,
        seed,
        iterations,
        objective_trace: trace,
    })
}

/// Raw nearest-centroid counts for one image's descriptors.
pub fn bow_histogram(codebook: &BowCodebook, descriptors: &DescriptorSet) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; codebook.clusters()];
    if descriptors.is_empty() {
        return Ok(counts);
    }
    check_dim(codebook.dim(), descriptors.dim())?;
    for d in descriptors.rows() {
        counts[nearest(&codebook.centroids, d).0] += 1.0;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[Vec<f64>]) -> DescriptorSet {
        DescriptorSet::from_rows(rows, rows[0].len()).unwrap()
    }

    #[test]
    fn identical_descriptors_single_cluster() {
        let s = set(&vec![vec![0.5, 1.5, -2.0]; 6]);
        let cb = build_codebook(&[s], 1, 3).unwrap();
        assert_eq!(cb.centroids, vec![vec![0.5, 1.5, -2.0]]);
    }

    #[test]
    fn too_few_descriptors() {
        let s = set(&[vec![1.0], vec![2.0]]);
        assert!(build_codebook(std::slice::from_ref(&s), 3, 0).is_err());
        assert!(build_codebook(&[s], 0, 0).is_err());
        assert!(build_codebook(&[], 1, 0).is_err());
    }

    #[test]
    fn histogram_counts() {
        let cb = BowCodebook {
            centroids: vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]],
            seed: 0,
            iterations: 0,
            objective_trace: vec![],
        };
        let near_two = set(&vec![vec![0.5, 9.0]; 5]);
        assert_eq!(bow_histogram(&cb, &near_two).unwrap(), vec![0.0, 0.0, 5.0]);
        let empty = DescriptorSet::new(2, vec![]).unwrap();
        assert_eq!(bow_histogram(&cb, &empty).unwrap(), vec![0.0; 3]);
        let wrong = set(&[vec![1.0, 2.0, 3.0]]);
        assert!(bow_histogram(&cb, &wrong).is_err());
        // equidistant descriptor goes to the lower index
        let tie = set(&[vec![5.0, 0.0]]);
        assert_eq!(bow_histogram(&cb, &tie).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn more_clusters_than_distinct_points_still_terminates() {
        let s = set(&[vec![0.0], vec![0.0], vec![0.0], vec![1.0]]);
        let cb = build_codebook(&[s], 3, 5).unwrap();
        assert_eq!(cb.clusters(), 3);
        assert!(cb.iterations <= MAX_ITERATIONS);
    }
}
