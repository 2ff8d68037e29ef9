//! Graph-embedding extractors: LPP, LLE and its linearization.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ProjectionModel;
use super::{center_with, check_d, column_mean, Extraction, FeatureStack, MethodKind};
use crate::error::{Error, Result};
use crate::graph;
use crate::hsio::HsiCube;
use crate::linalg;

/// Neighbourhood-graph settings shared by [`lpp`] and [`lle_linear`].
///
/// `sigma` is measured in units of the RMS neighbour distance of the
/// sampled pixels, so the graph (and the learned basis) does not change
/// when the data are rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LppParams {
    pub k_nn: usize,
    pub sigma: f64,
    pub sample_cap: usize,
    /// Regularization of the local Gram matrices (LLE only).
    pub reg: f64,
    pub seed: u64,
}

impl Default for LppParams {
    fn default() -> Self {
        Self {
            k_nn: 12,
            sigma: 1.0,
            sample_cap: 4000,
            reg: 1e-3,
            seed: 0,
        }
    }
}

impl LppParams {
    fn validate(&self) -> Result<()> {
        if self.k_nn == 0 || self.sample_cap < 2 || !(self.sigma > 0.0) || !(self.reg >= 0.0) {
            return Err(Error::invalid(format!(
                "invalid graph parameters: k_nn = {}, σ = {}, sample_cap = {}, reg = {}",
                self.k_nn, self.sigma, self.sample_cap, self.reg
            )));
        }
        Ok(())
    }
}

/// Sorted pixel indices: all of them, or a seeded uniform subsample.
fn sample_pixels(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, idx[c])])
}

/// Undirected kNN edges `(i, j, ‖x_i − x_j‖²)` with `i < j`, deduplicated.
fn knn_edges(x: &DMatrix<f64>, k_nn: usize) -> Vec<(usize, usize, f64)> {
    let nb = graph::knn_indices(x, k_nn, None);
    let mut edges: Vec<(usize, usize)> = nb
        .iter()
        .enumerate()
        .flat_map(|(i, list)| list.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
        .into_iter()
        .map(|(i, j)| (i, j, (x.column(i) - x.column(j)).norm_squared()))
        .collect()
}

/// `(X L Xᵀ, X D Xᵀ)` for the heat-kernel kNN graph on the columns of `x`,
/// without forming the `m × m` graph. Also returns the absolute kernel width.
fn lpp_scatter(x: &DMatrix<f64>, k_nn: usize, sigma: f64) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let (p, m) = x.shape();
    let edges = knn_edges(x, k_nn);
    let mean_sq = edges.iter().map(|e| e.2).sum::<f64>() / edges.len().max(1) as f64;
    let width = sigma * mean_sq.sqrt().max(f64::MIN_POSITIVE);
    let denom = 2.0 * width * width;
    let mut diffs = DMatrix::zeros(p, edges.len());
    let mut degree = vec![0.0; m];
    for (e, &(i, j, d2)) in edges.iter().enumerate() {
        let w = (-d2 / denom).exp();
        degree[i] += w;
        degree[j] += w;
        diffs.set_column(e, &((x.column(i) - x.column(j)) * w.sqrt()));
    }
    let a = &diffs * diffs.transpose();
    let mut xd = x.clone();
    for (mut col, dg) in xd.column_iter_mut().zip(&degree) {
        col *= dg.sqrt();
    }
    let b = &xd * xd.transpose();
    (symmetrize(a), symmetrize(b), width)
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn add_relative_ridge(b: &mut DMatrix<f64>, rel: f64) {
    let p = b.nrows();
    let ridge = rel * b.trace().abs().max(f64::MIN_POSITIVE) / p as f64;
    for i in 0..p {
        b[(i, i)] += ridge;
    }
}

fn linear_embedding(
    kind: MethodKind,
    cube: &HsiCube,
    mean: DVector<f64>,
    a: &DMatrix<f64>,
    mut b: DMatrix<f64>,
    d: usize,
) -> Result<Extraction> {
    add_relative_ridge(&mut b, 1e-9);
    let eig = linalg::gen_eig_smallest(a, &b, d)?;
    let xc = center_with(&cube.matrix(), &mean);
    let features = eig.vectors.transpose() * xc;
    Ok(Extraction {
        model: ProjectionModel {
            kind,
            basis: eig.vectors,
            mean,
            eigenvalues: eig.values,
        },
        features: FeatureStack::new(cube.rows(), cube.cols(), features),
        objective_trace: Vec::new(),
    })
}

/// Locality preserving projection: the `d` smallest generalized
/// eigenvectors of `(X_s L X_sᵀ, X_s D X_sᵀ)` on a heat-kernel kNN graph
/// over (at most `sample_cap`) sampled pixels, applied to the whole cube.
pub fn lpp(cube: &HsiCube, d: usize, params: &LppParams) -> Result<Extraction> {
    params.validate()?;
    check_d(d, cube.bands())?;
    let x = cube.matrix();
    let idx = sample_pixels(x.ncols(), params.sample_cap, params.seed);
    if params.k_nn >= idx.len() {
        return Err(Error::invalid(format!(
            "k_nn = {} needs more than {} samples",
            params.k_nn,
            idx.len()
        )));
    }
    let xs = select_columns(&x, &idx);
    let mean = column_mean(&xs);
    let xs = center_with(&xs, &mean);
    let (a, b, _) = lpp_scatter(&xs, params.k_nn, params.sigma);
    linear_embedding(MethodKind::Lpp, cube, mean, &a, b, d)
}

/// Number of connected components of the undirected support of `a`.
fn component_count(a: &DMatrix<f64>) -> usize {
    let m = a.nrows();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..m {
        for j in 0..m {
            if i != j && a[(i, j)] != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    (0..m).filter(|&i| find(&mut parent, i) == i).count()
}

/// Locally linear embedding of the columns of `x` (`p × m`) into `d`
/// dimensions: eigenvectors 2..d+1 of `M = (I − A)ᵀ(I − A)`, scaled so the
/// embedding has zero mean and identity covariance.
pub fn lle_embed(x: &DMatrix<f64>, d: usize, k_nn: usize, reg: f64) -> Result<DMatrix<f64>> {
    let m = x.ncols();
    if d == 0 || m <= d + 1 {
        return Err(Error::invalid(format!(
            "LLE into {d} dimensions needs more than {} points, got {m}",
            d + 1
        )));
    }
    let a = graph::lle_weights(x, k_nn, reg)?;
    let comps = component_count(&a);
    if comps > 1 {
        return Err(Error::DisconnectedGraph(comps));
    }
    let i_minus_a = DMatrix::identity(m, m) - &a;
    let mut cost = i_minus_a.transpose() * &i_minus_a;
    // Centre M and lift the constant vector above the spectrum so the bottom
    // eigenvectors are exactly orthogonal to it.
    let row_mean = DVector::from_iterator(m, cost.row_iter().map(|r| r.sum() / m as f64));
    let total_mean = row_mean.sum() / m as f64;
    let lift = cost.trace() + 1.0;
    for i in 0..m {
        for j in 0..m {
            cost[(i, j)] += total_mean - row_mean[i] - row_mean[j] + lift / m as f64;
        }
    }
    let eig = linalg::sym_eig_smallest(&symmetrize(cost), d)?;
    let mut z = eig.vectors.transpose() * (m as f64).sqrt();
    for mut row in z.row_iter_mut() {
        let mu = row.sum() / m as f64;
        row.add_scalar_mut(-mu);
    }
    Ok(z)
}

/// Linearized LLE: the projection `P` minimizing `tr(Pᵀ X M Xᵀ P)` subject
/// to `Pᵀ X Xᵀ P = I`, learned on sampled pixels and applied to the cube.
pub fn lle_linear(cube: &HsiCube, d: usize, params: &LppParams) -> Result<Extraction> {
    params.validate()?;
    check_d(d, cube.bands())?;
    let x = cube.matrix();
    let idx = sample_pixels(x.ncols(), params.sample_cap, params.seed);
    let xs = select_columns(&x, &idx);
    let mean = column_mean(&xs);
    let xs = center_with(&xs, &mean);
    let a = graph::lle_weights(&xs, params.k_nn, params.reg)?;
    let m = xs.ncols();
    let recon = &xs - &xs * a.transpose();
    let scatter = symmetrize(&recon * recon.transpose());
    let b = symmetrize(&xs * xs.transpose());
    debug_assert_eq!(recon.ncols(), m);
    linear_embedding(MethodKind::Lle, cube, mean, &scatter, b, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cube_from_points(x: &DMatrix<f64>) -> HsiCube {
        HsiCube::from_matrix(1, x.ncols(), x).unwrap()
    }

    fn two_blobs(seed: u64, p: usize, m: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 0.3).unwrap();
        DMatrix::from_fn(p, m, |r, c| {
            let centre = if c < m / 2 { 0.0 } else { 3.0 };
            let _ = &mut rng;
            (if r == 0 { centre } else { 0.0 }) + nd.sample(&mut rng)
        })
    }

    #[test]
    fn sparse_scatter_matches_dense_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(4, 30, |_, _| rng.random_range(-1.0..1.0));
        let (a, b, width) = lpp_scatter(&x, 5, 0.7);
        let g = graph::heat_kernel_affinity(&x, 5, width).unwrap();
        let a_dense = &x * &g.laplacian * x.transpose();
        let b_dense = &x * DMatrix::from_diagonal(&g.degree) * x.transpose();
        assert!((&a - &a_dense).amax() <= 1e-10 * a_dense.amax());
        assert!((&b - &b_dense).amax() <= 1e-10 * b_dense.amax());
    }

    #[test]
    fn lpp_separates_two_blobs() {
        let x = two_blobs(2, 5, 120);
        let cube = cube_from_points(&x);
        let ex = lpp(&cube, 1, &LppParams::default()).unwrap();
        let z: Vec<f64> = ex.features.features.row(0).iter().copied().collect();
        let (a, b) = z.split_at(60);
        let (amin, amax) = a
            .iter()
            .fold((f64::MAX, f64::MIN), |s, &v| (s.0.min(v), s.1.max(v)));
        let (bmin, bmax) = b
            .iter()
            .fold((f64::MAX, f64::MIN), |s, &v| (s.0.min(v), s.1.max(v)));
        assert!(amax < bmin || bmax < amin);
    }

    #[test]
    fn lpp_is_invariant_to_pixel_order_and_scale() {
        let x = two_blobs(3, 6, 90);
        let base = lpp(&cube_from_points(&x), 2, &LppParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut perm: Vec<usize> = (0..90).collect();
        for i in (1..90).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted = select_columns(&x, &perm);
        let scaled = &x * 10.0;
        for other in [permuted, scaled] {
            let ex = lpp(&cube_from_points(&other), 2, &LppParams::default()).unwrap();
            for j in 0..2 {
                let u = base.model.basis.column(j);
                let v = ex.model.basis.column(j);
                assert!(u.dot(&v).abs() / (u.norm() * v.norm()) >= 1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn lpp_subsampling_is_seeded() {
        let x = two_blobs(5, 4, 300);
        let params = LppParams {
            sample_cap: 100,
            ..LppParams::default()
        };
        let a = lpp(&cube_from_points(&x), 2, &params).unwrap();
        let b = lpp(&cube_from_points(&x), 2, &params).unwrap();
        assert_eq!(a.model.basis, b.model.basis);
        assert_eq!(sample_pixels(10, 3, 7), sample_pixels(10, 3, 7));
        assert_eq!(sample_pixels(5, 10, 7), vec![0, 1, 2, 3, 4]);
    }

    fn plane_in_10d(seed: u64, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = DMatrix::from_fn(2, m, |_, _| rng.random_range(0.0..1.0));
        let q = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let basis = q.columns(0, 2).into_owned();
        (&basis * &coords, coords)
    }

    fn whiten(z: &DMatrix<f64>) -> DMatrix<f64> {
        let zc = center_with(z, &column_mean(z));
        let cov = &zc * zc.transpose() / z.ncols() as f64;
        let eig = linalg::sym_eig(&symmetrize(cov), z.nrows()).unwrap();
        let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
            z.nrows(),
            eig.values.iter().map(|v| 1.0 / v.sqrt()),
        ));
        inv_sqrt * eig.vectors.transpose() * zc
    }

    /// Residual of the best affine fit of `target` from the embedding rows.
    fn affine_fit_error(z: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
        let m = z.ncols();
        let design = DMatrix::from_fn(
            m,
            z.nrows() + 1,
            |i, j| if j == 0 { 1.0 } else { z[(j - 1, i)] },
        );
        let tc = target.transpose();
        let coef = (design.transpose() * &design)
            .cholesky()
            .unwrap()
            .solve(&(design.transpose() * &tc));
        (&design * coef - tc).norm_squared()
    }

    #[test]
    fn lle_embedding_constraints() {
        let (x, _) = plane_in_10d(8, 150);
        let z = lle_embed(&x, 2, 10, 1e-3).unwrap();
        let m = z.ncols() as f64;
        for row in z.row_iter() {
            assert!((row.sum() / m).abs() <= 1e-8);
        }
        let cov = &z * z.transpose() / m;
        assert!((cov - DMatrix::<f64>::identity(2, 2)).amax() <= 1e-6);
    }

    #[test]
    fn lle_beats_laplacian_eigenmap_on_a_plane() {
        let (x, coords) = plane_in_10d(9, 200);
        let lle = lle_embed(&x, 2, 10, 1e-3).unwrap();
        let g = graph::heat_kernel_affinity(&x, 10, 0.3).unwrap();
        let eig =
            linalg::gen_eig_smallest(&g.laplacian, &DMatrix::from_diagonal(&g.degree), 3).unwrap();
        let le = eig.vectors.columns(1, 2).transpose();
        let e_lle = affine_fit_error(&whiten(&lle), &coords);
        let e_le = affine_fit_error(&whiten(&le), &coords);
        assert!(e_lle <= e_le, "lle {e_lle} vs eigenmap {e_le}");
    }

    #[test]
    fn lle_reports_disconnected_components() {
        let mut x = DMatrix::zeros(2, 12);
        for i in 0..12 {
            let offset = (i / 4) as f64 * 100.0;
            x[(0, i)] = offset + (i % 4) as f64 * 0.1;
            x[(1, i)] = ((i % 4) as f64 * 0.37).sin() * 0.1;
        }
        match lle_embed(&x, 1, 2, 1e-3) {
            Err(Error::DisconnectedGraph(c)) => assert_eq!(c, 3),
            other => panic!("expected a disconnected-graph error, got {other:?}"),
        }
        assert!(lle_embed(&x, 11, 2, 1e-3).is_err());
    }

    #[test]
    fn lle_linear_recovers_plane_directions() {
        let (x, _) = plane_in_10d(10, 200);
        let ex = lle_linear(
            &cube_from_points(&x),
            2,
            &LppParams {
                k_nn: 10,
                ..LppParams::default()
            },
        )
        .unwrap();
        assert_eq!(ex.model.kind, MethodKind::Lle);
        assert!(ex.features.is_finite());
    }
}
