//! Mean-centered SVD model of a set of items and its reconstruction-error score.
//!
//! A [`SubspaceModel`] holds an orthonormal basis `U` (stored as columns), the
//! matching singular values, the running mean `μ`, and the number of items it
//! has absorbed. Items are scored by how far they sit from the affine subspace
//! `μ + span(U)`.

mod matrix;

pub use matrix::{FeatureKind, FeatureMatrix};

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, descending_order, dot, fix_signs, norm, orthonormality_error, orthonormalize};

/// Components whose singular value falls below this fraction of the largest are dropped.
pub const RELATIVE_RANK_TOL: f64 = 1e-10;

/// Basis columns are re-orthonormalized when `‖UᵀU − I‖_max` exceeds this.
pub const REORTHO_TOL: f64 = 1e-10;

/// Cancellation noise multiplier used when deciding whether a new direction is real.
const NOISE_FACTOR: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    basis: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
    mean: Vec<f64>,
    count: usize,
    cap: usize,
}

fn ensure_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidData(format!("non-finite value at index {i}"))),
        None => Ok(()),
    }
}

impl SubspaceModel {
    /// Thin SVD of the mean-centered data, truncated to `cap` components and
    /// to numerical rank.
    ///
    /// When there are more features than items the decomposition goes through
    /// the `n×n` Gram matrix, followed by a Rayleigh-Ritz pass on the recovered
    /// basis to restore full relative accuracy in the singular values.
    /// `cap = 0` yields a mean-only model.
    pub fn fit_batch(x: &FeatureMatrix, cap: usize) -> Result<Self> {
        let n = x.n_items();
        let d = x.dim();
        ensure_finite(x.as_slice())?;

        let mut mean = vec![0.0; d];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let inv_n = 1.0 / n as f64;
        mean.iter_mut().for_each(|m| *m *= inv_n);

        let mut model = SubspaceModel {
            basis: Vec::new(),
            singular_values: Vec::new(),
            mean,
            count: n,
            cap,
        };
        if cap == 0 || n == 1 {
            return Ok(model);
        }

        let centered: Vec<f64> = x
            .rows()
            .flat_map(|row| row.iter().zip(&model.mean).map(|(v, m)| v - m))
            .collect();
        // Rounding in the mean leaves residue of order eps·‖X‖ in otherwise
        // degenerate data; nothing at that level is a real direction.
        let noise_floor = (n + d) as f64 * f64::EPSILON * norm(x.as_slice());

        let (basis, values) = if d <= n {
            thin_svd_direct(&centered, n, d, cap, noise_floor)
        } else {
            thin_svd_gram(&centered, n, d, cap, noise_floor)
        };
        model.basis = basis;
        model.singular_values = values;
        model.finish_basis();
        Ok(model)
    }

    /// A model holding a single item: mean `x`, no basis.
    pub fn init_singleton(x: &[f64], cap: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidData("empty item vector".into()));
        }
        ensure_finite(x)?;
        Ok(SubspaceModel {
            basis: Vec::new(),
            singular_values: Vec::new(),
            mean: x.to_vec(),
            count: 1,
            cap,
        })
    }

    /// Assembles a model from explicit parts, checking the structural invariants.
    pub fn from_parts(
        basis: Vec<Vec<f64>>,
        singular_values: Vec<f64>,
        mean: Vec<f64>,
        count: usize,
        cap: usize,
    ) -> Result<Self> {
        let d = mean.len();
        if d == 0 || count == 0 {
            return Err(Error::InvalidData("model needs a mean and a positive count".into()));
        }
        if basis.len() != singular_values.len() {
            return Err(Error::InvalidData(format!(
                "{} basis columns but {} singular values",
                basis.len(),
                singular_values.len()
            )));
        }
        for col in &basis {
            check_dim(d, col.len())?;
            ensure_finite(col)?;
        }
        ensure_finite(&mean)?;
        if singular_values.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || singular_values.windows(2).any(|w| w[0] < w[1])
        {
            return Err(Error::InvalidData(
                "singular values must be finite, nonnegative and nonincreasing".into(),
            ));
        }
        if orthonormality_error(&basis) > 1e-8 {
            return Err(Error::InvalidData("basis columns are not orthonormal".into()));
        }
        Ok(SubspaceModel {
            basis,
            singular_values,
            mean,
            count,
            cap,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of retained components `k`.
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Number of items incorporated.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.basis)
    }

    /// `U Uᵀ (x − μ) + μ`
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.reconstruct_unchecked(x))
    }

    /// `x − reconstruct(x)`
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.residual_unchecked(x))
    }

    /// Reconstruction error `‖x − reconstruct(x)‖₂`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.score_unchecked(x))
    }

    /// Scores every row of `x`. Rows are evaluated in parallel; each score is
    /// computed independently, so the output does not depend on the thread count.
    pub fn score_all(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.dim())?;
        Ok((0..x.n_items())
            .into_par_iter()
            .map(|i| self.score_unchecked(x.row(i)))
            .collect())
    }

    pub(crate) fn reconstruct_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut projected = vec![0.0; x.len()];
        for u in &self.basis {
            let c = dot(u, &centered);
            axpy(c, u, &mut projected);
        }
        projected
            .iter()
            .zip(&self.mean)
            .map(|(p, m)| p + m)
            .collect()
    }

    pub(crate) fn residual_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let recon = self.reconstruct_unchecked(x);
        x.iter().zip(&recon).map(|(a, b)| a - b).collect()
    }

    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        norm(&self.residual_unchecked(x))
    }

    /// Incorporates one more item, returning the updated model.
    ///
    /// The mean moves to the running average and the centered scatter gains
    /// the rank-one term `n/(n+1)·(x − μ)(x − μ)ᵀ`. The update therefore
    /// diagonalizes the small matrix `[[diag(S), Uᵀv], [0, ρ]]`, where
    /// `v = √(n/(n+1))·(x − μ)` and `ρ` is the norm of `v` outside `span(U)`.
    pub fn update(&self, x: &[f64]) -> Result<Self> {
        check_dim(self.dim(), x.len())?;
        ensure_finite(x)?;
        let n = self.count as f64;
        let d = self.dim();

        let mean: Vec<f64> = self
            .mean
            .iter()
            .zip(x)
            .map(|(m, v)| m + (v - m) / (n + 1.0))
            .collect();
        let weight = (n / (n + 1.0)).sqrt();
        let v: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| weight * (a - m)).collect();

        let k = self.rank();
        let mut coeffs = vec![0.0; k];
        let mut remainder = v.clone();
        for _pass in 0..2 {
            for (j, u) in self.basis.iter().enumerate() {
                let c = dot(u, &remainder);
                coeffs[j] += c;
                axpy(-c, u, &mut remainder);
            }
        }
        let rho = norm(&remainder);
        let noise_floor = NOISE_FACTOR * f64::EPSILON * weight * (norm(x) + norm(&self.mean));
        let grows = rho > noise_floor;

        let rows = if grows { k + 1 } else { k };
        let mut next = SubspaceModel {
            basis: Vec::new(),
            singular_values: Vec::new(),
            mean,
            count: self.count + 1,
            cap: self.cap,
        };
        if rows == 0 || self.cap == 0 {
            return Ok(next);
        }

        let mut core = DMatrix::<f64>::zeros(rows, k + 1);
        for j in 0..k {
            core[(j, j)] = self.singular_values[j];
            core[(j, k)] = coeffs[j];
        }
        if grows {
            core[(k, k)] = rho;
            let inv = 1.0 / rho;
            remainder.iter_mut().for_each(|r| *r *= inv);
        }
        let svd = SVD::new(core, true, false);
        let left = svd.u.as_ref().expect("left singular vectors requested");
        let order = descending_order(svd.singular_values.as_slice());
        let s_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&i| {
                let s = svd.singular_values[i];
                s > 0.0 && s >= RELATIVE_RANK_TOL * s_max
            })
            .take(self.cap)
            .collect();

        let extended: Vec<&[f64]> = self
            .basis
            .iter()
            .map(Vec::as_slice)
            .chain(grows.then_some(remainder.as_slice()))
            .collect();
        next.basis = keep
            .par_iter()
            .map(|&col| {
                let mut out = vec![0.0; d];
                for (row, e) in extended.iter().enumerate() {
                    axpy(left[(row, col)], e, &mut out);
                }
                out
            })
            .collect();
        next.singular_values = keep.iter().map(|&i| svd.singular_values[i]).collect();
        next.finish_basis();
        Ok(next)
    }

    /// Restores orthonormality if it has drifted and applies the sign convention.
    fn finish_basis(&mut self) {
        if orthonormality_error(&self.basis) > REORTHO_TOL {
            let kept = orthonormalize(&mut self.basis, 1e-8);
            self.singular_values = kept.iter().map(|&i| self.singular_values[i]).collect();
        }
        fix_signs(&mut self.basis);
    }
}

fn truncation_threshold(s_max: f64, noise_floor: f64) -> f64 {
    (RELATIVE_RANK_TOL * s_max).max(noise_floor)
}

/// SVD of the `n×d` centered matrix directly (`d ≤ n`).
fn thin_svd_direct(
    centered: &[f64],
    n: usize,
    d: usize,
    cap: usize,
    noise_floor: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = DMatrix::from_row_slice(n, d, centered);
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let values = svd.singular_values.as_slice();
    let order = descending_order(values);
    let s_max = order.first().map_or(0.0, |&i| values[i]);
    let tol = truncation_threshold(s_max, noise_floor);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| values[i] > tol)
        .take(cap)
        .collect();
    let basis = keep
        .iter()
        .map(|&i| v_t.row(i).iter().copied().collect())
        .collect();
    (basis, keep.iter().map(|&i| values[i]).collect())
}

/// SVD through the eigendecomposition of the `n×n` Gram matrix (`d > n`).
fn thin_svd_gram(
    centered: &[f64],
    n: usize,
    d: usize,
    cap: usize,
    noise_floor: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let row = |i: usize| &centered[i * d..(i + 1) * d];

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| dot(row(i), row(j))).collect())
        .collect();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for (i, entries) in upper.iter().enumerate() {
        for (off, &g) in entries.iter().enumerate() {
            gram[(i, i + off)] = g;
            gram[(i + off, i)] = g;
        }
    }

    let eig = SymmetricEigen::new(gram);
    let lambdas = eig.eigenvalues.as_slice();
    let order = descending_order(lambdas);
    let l_max = order.first().map_or(0.0, |&i| lambdas[i]).max(0.0);
    // Eigenvalues of a Gram matrix are only accurate to about n·eps·λ_max.
    let tol = truncation_threshold(l_max.sqrt(), noise_floor);
    let l_tol = (tol * tol).max(NOISE_FACTOR * n as f64 * f64::EPSILON * l_max);
    let keep: Vec<usize> = order.into_iter().filter(|&i| lambdas[i] > l_tol).collect();
    if keep.is_empty() {
        return (Vec::new(), Vec::new());
    }

    let mut trial: Vec<Vec<f64>> = keep
        .par_iter()
        .map(|&e| {
            let mut col = vec![0.0; d];
            for r in 0..n {
                axpy(eig.eigenvectors[(r, e)], row(r), &mut col);
            }
            let inv = 1.0 / lambdas[e].sqrt();
            col.iter_mut().for_each(|c| *c *= inv);
            col
        })
        .collect();
    orthonormalize(&mut trial, 1e-8);
    let kt = trial.len();
    if kt == 0 {
        return (Vec::new(), Vec::new());
    }

    // Rayleigh-Ritz: SVD of the projection of the data onto the trial basis.
    let projected: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|r| trial.iter().map(move |u| dot(row(r), u)).collect::<Vec<_>>())
        .collect();
    let small = DMatrix::from_row_slice(n, kt, &projected);
    let svd = SVD::new(small, false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let values = svd.singular_values.as_slice();
    let order = descending_order(values);
    let s_max = order.first().map_or(0.0, |&i| values[i]);
    let tol = truncation_threshold(s_max, noise_floor);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| values[i] > tol)
        .take(cap)
        .collect();
    let basis = keep
        .par_iter()
        .map(|&i| {
            let mut col = vec![0.0; d];
            for (j, u) in trial.iter().enumerate() {
                axpy(v_t[(i, j)], u, &mut col);
            }
            col
        })
        .collect();
    (basis, keep.iter().map(|&i| values[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, FeatureKind::Generic).unwrap()
    }

    fn e1_model() -> SubspaceModel {
        SubspaceModel::from_parts(vec![vec![1.0, 0.0, 0.0]], vec![1.0], vec![0.0; 3], 2, 3).unwrap()
    }

    #[test]
    fn identical_rows_have_no_components() {
        let v = vec![0.3, -1.7, 2.2];
        let model = SubspaceModel::fit_batch(&generic(&vec![v.clone(); 5]), 5).unwrap();
        assert_eq!(model.rank(), 0);
        assert_eq!(model.count(), 5);
        for (m, x) in model.mean().iter().zip(&v) {
            assert!((m - x).abs() <= 1e-15 * x.abs());
        }
    }

    #[test]
    fn symmetric_pair() {
        let model = SubspaceModel::fit_batch(&generic(&[vec![1.0, 0.0], vec![-1.0, 0.0]]), 2).unwrap();
        assert_eq!(model.mean(), &[0.0, 0.0]);
        assert_eq!(model.rank(), 1);
        assert!((model.singular_values()[0] - 2f64.sqrt()).abs() < 1e-15);
        let u = &model.basis()[0];
        assert!((u[0].abs() - 1.0).abs() < 1e-15 && u[1].abs() < 1e-15);
        // sign convention makes the dominant entry nonnegative
        assert!(u[0] > 0.0);
    }

    #[test]
    fn projection_examples() {
        let m = e1_model();
        assert_eq!(m.reconstruct(&[3.0, 4.0, 0.0]).unwrap(), vec![3.0, 0.0, 0.0]);
        assert_eq!(m.residual(&[3.0, 4.0, 0.0]).unwrap(), vec![0.0, 4.0, 0.0]);
        assert_eq!(m.score(&[0.0, 3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(m.score(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            m.score(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
        assert!(m.reconstruct(&[1.0]).is_err());
        assert!(m.residual(&[1.0]).is_err());
    }

    #[test]
    fn mean_reconstructs_to_itself() {
        let rows = vec![vec![1.0, 2.0, 5.0], vec![-3.0, 0.5, 1.0], vec![2.0, 2.0, -4.0]];
        let model = SubspaceModel::fit_batch(&generic(&rows), 3).unwrap();
        let mu = model.mean().to_vec();
        assert_eq!(model.reconstruct(&mu).unwrap(), mu);
        assert!(model.residual(&mu).unwrap().iter().all(|r| *r == 0.0));
        assert_eq!(model.score(&mu).unwrap(), 0.0);
    }

    #[test]
    fn singleton_behaves_like_its_mean() {
        let x = [1.0, 2.0, 3.0];
        let m = SubspaceModel::init_singleton(&x, 4).unwrap();
        assert_eq!((m.count(), m.rank()), (1, 0));
        assert_eq!(m.mean(), &x);
        assert_eq!(m.score(&x).unwrap(), 0.0);
        let y = [4.0, 6.0, 3.0];
        assert_eq!(m.score(&y).unwrap(), 5.0);
        assert!(SubspaceModel::init_singleton(&[1.0, f64::INFINITY], 2).is_err());
    }

    #[test]
    fn two_point_update() {
        let a = [1.0, 1.0, 0.0];
        let b = [4.0, 5.0, 0.0];
        let m = SubspaceModel::init_singleton(&a, 3).unwrap().update(&b).unwrap();
        assert_eq!(m.mean(), &[2.5, 3.0, 0.0]);
        assert_eq!(m.rank(), 1);
        let u = &m.basis()[0];
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
        assert!(m.score(&b).unwrap() <= 1e-6 * (1.0 + norm(&b)));
    }

    #[test]
    fn update_rejects_bad_input() {
        let m = SubspaceModel::init_singleton(&[0.0, 0.0], 2).unwrap();
        assert!(m.update(&[1.0]).is_err());
        assert!(m.update(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn duplicate_updates_stay_rank_zero() {
        let v = [0.1, 0.7, -0.3];
        let mut m = SubspaceModel::init_singleton(&v, 3).unwrap();
        for _ in 0..10 {
            m = m.update(&v).unwrap();
            assert_eq!(m.rank(), 0);
            assert_eq!(m.score(&v).unwrap(), 0.0);
        }
        assert_eq!(m.count(), 11);
    }

    #[test]
    fn cap_limits_rank() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * (i * j) as f64).collect())
            .collect();
        let batch = SubspaceModel::fit_batch(&generic(&rows), 2).unwrap();
        assert_eq!(batch.rank(), 2);
        let mut inc = SubspaceModel::init_singleton(&rows[0], 2).unwrap();
        for r in &rows[1..] {
            inc = inc.update(r).unwrap();
            assert!(inc.rank() <= 2);
        }
        let mean_only = SubspaceModel::fit_batch(&generic(&rows), 0).unwrap();
        assert_eq!(mean_only.rank(), 0);
    }

    #[test]
    fn from_parts_validates() {
        assert!(SubspaceModel::from_parts(vec![vec![1.0, 1.0]], vec![1.0], vec![0.0, 0.0], 2, 2).is_err());
        assert!(SubspaceModel::from_parts(vec![vec![1.0, 0.0]], vec![-1.0], vec![0.0, 0.0], 2, 2).is_err());
        assert!(SubspaceModel::from_parts(vec![vec![1.0]], vec![1.0], vec![0.0, 0.0], 2, 2).is_err());
        assert!(SubspaceModel::from_parts(vec![], vec![], vec![], 1, 2).is_err());
    }
}
