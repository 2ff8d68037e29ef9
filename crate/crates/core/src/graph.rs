//! Affinity graphs for graph-embedding projections.
//!
//! Every builder returns an [`AffinityGraph`] holding the symmetric weight
//! matrix `W` (zero diagonal), the degrees `D_ii = Σ_{j≠i} W_ij`, the Laplacian
//! and the constraint matrix `B` of the embedding problem
//! `min tr(Z L Zᵀ) s.t. Z B Zᵀ = I`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, LinalgError};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub w: DMatrix<f64>,
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub constraint: DMatrix<f64>,
}

impl AffinityGraph {
    /// Symmetrizes `w`, zeroes its diagonal and derives `D` and `L = D − W`.
    /// `B` defaults to the identity.
    pub fn from_weights(w: DMatrix<f64>, constraint: Option<DMatrix<f64>>) -> Self {
        let m = w.nrows();
        let mut w = (&w + w.transpose()) * 0.5;
        w.fill_diagonal(0.0);
        let degree = DVector::from_iterator(m, w.row_iter().map(|r| r.sum()));
        let mut laplacian = -w.clone();
        for i in 0..m {
            laplacian[(i, i)] = degree[i];
        }
        Self {
            w,
            degree,
            laplacian,
            constraint: constraint.unwrap_or_else(|| DMatrix::identity(m, m)),
        }
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    /// Similarity graphs (heat kernel, class membership, learned
    /// self-representation) have nonnegative weights. The LLE view can carry
    /// negative weights and is still a valid graph.
    pub fn is_nonnegative(&self) -> bool {
        self.w.iter().all(|&v| v >= 0.0)
    }

    /// Lists violated structural invariants: asymmetry, a nonzero diagonal,
    /// `L·1 ≠ 0` or an indefinite `L`. Empty when the graph is valid.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let m = self.len();
        let asym = (&self.w - self.w.transpose()).amax();
        if asym > 1e-8 {
            out.push(format!("W asymmetric by {asym:e}"));
        }
        if (0..m).any(|i| self.w[(i, i)] != 0.0) {
            out.push("W has a nonzero diagonal".into());
        }
        let row = &self.laplacian * DVector::from_element(m, 1.0);
        let scale = self.laplacian.amax().max(1.0);
        if row.amax() > 1e-8 * scale {
            out.push(format!("L·1 = {:e}", row.amax()));
        }
        let eig = self.laplacian.clone().symmetric_eigen();
        let (lo, hi) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if lo < -1e-8 * hi.max(1e-300) {
            out.push(format!("L not PSD (λ_min = {lo:e}, λ_max = {hi:e})"));
        }
        out
    }
}

/// Squared Euclidean distance between columns `i` and `j`, computed from the
/// coordinate differences so it is exactly translation invariant.
fn sq_dist(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    x.column(i)
        .iter()
        .zip(x.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `k` nearest neighbours of every column (self excluded), nearest first.
/// Distance ties resolve towards the smaller index. When `groups` is given,
/// neighbours are restricted to columns sharing the same group id.
pub fn knn_indices(x: &DMatrix<f64>, k: usize, groups: Option<&[usize]>) -> Vec<Vec<usize>> {
    let m = x.ncols();
    par::map_range(m, |i| {
        let mut cand: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i && groups.is_none_or(|g| g[j] == g[i]))
            .map(|j| (sq_dist(x, i, j), j))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k, order);
            cand.truncate(k);
        }
        cand.sort_by(order);
        cand.into_iter().map(|(_, j)| j).collect()
    })
}

fn heat_kernel(x: &DMatrix<f64>, neighbours: &[Vec<usize>], sigma: f64) -> DMatrix<f64> {
    let m = x.ncols();
    let mut w = DMatrix::zeros(m, m);
    let denom = 2.0 * sigma * sigma;
    for (i, nb) in neighbours.iter().enumerate() {
        for &j in nb {
            let v = (-sq_dist(x, i, j) / denom).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

fn check_knn(k_nn: usize, m: usize) -> Result<()> {
    if k_nn == 0 || k_nn >= m {
        return Err(Error::invalid(format!(
            "k_nn must satisfy 1 ≤ k_nn < m (k_nn = {k_nn}, m = {m})"
        )));
    }
    Ok(())
}

/// Heat-kernel weights `exp(−‖x_i − x_j‖² / 2σ²)` on the symmetrized kNN
/// graph, `B = I`.
pub fn heat_kernel_affinity(x: &DMatrix<f64>, k_nn: usize, sigma: f64) -> Result<AffinityGraph> {
    check_knn(k_nn, x.ncols())?;
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("σ must be positive, got {sigma}")));
    }
    let nb = knn_indices(x, k_nn, None);
    Ok(AffinityGraph::from_weights(
        heat_kernel(x, &nb, sigma),
        None,
    ))
}

/// Heat-kernel graph whose neighbourhoods are searched within each class.
pub fn heat_kernel_affinity_supervised(
    x: &DMatrix<f64>,
    labels: &[usize],
    k_nn: usize,
    sigma: f64,
) -> Result<AffinityGraph> {
    if labels.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: labels.len(),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("σ must be positive, got {sigma}")));
    }
    let nb = knn_indices(x, k_nn, Some(labels));
    Ok(AffinityGraph::from_weights(
        heat_kernel(x, &nb, sigma),
        None,
    ))
}

/// Class-membership weights `W_ij = 1/N_c` for `i ≠ j` in class `c`, `B = I`.
pub fn lda_affinity(labels: &[usize]) -> AffinityGraph {
    let m = labels.len();
    let k = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; k + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let w = DMatrix::from_fn(m, m, |i, j| {
        if i != j && labels[i] == labels[j] {
            1.0 / counts[labels[i]] as f64
        } else {
            0.0
        }
    });
    AffinityGraph::from_weights(w, None)
}

/// Locally linear reconstruction weights: row `i` holds the affine
/// combination of its `k_nn` neighbours that best reconstructs `x_i`, with
/// the local Gram matrix regularized by `reg·tr(G)/k_nn`.
pub fn lle_weights(x: &DMatrix<f64>, k_nn: usize, reg: f64) -> Result<DMatrix<f64>> {
    let m = x.ncols();
    check_knn(k_nn, m)?;
    let nb = knn_indices(x, k_nn, None);
    let rows: Vec<Vec<(usize, f64)>> = par::map_range(m, |i| {
        let k = nb[i].len();
        let mut g = DMatrix::zeros(k, k);
        for (a, &ja) in nb[i].iter().enumerate() {
            for (b, &jb) in nb[i].iter().enumerate().skip(a) {
                let v: f64 = (0..x.nrows())
                    .map(|r| (x[(r, ja)] - x[(r, i)]) * (x[(r, jb)] - x[(r, i)]))
                    .sum();
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        let mut eps = reg * g.trace() / k as f64;
        if eps <= 0.0 {
            eps = reg.max(1e-12);
        }
        for a in 0..k {
            g[(a, a)] += eps;
        }
        let ones = DVector::from_element(k, 1.0);
        let sol = match Cholesky::new(g.clone()) {
            Some(ch) => ch.solve(&ones),
            None => g.lu().solve(&ones).unwrap_or_else(|| ones.clone()),
        };
        let total = sol.sum();
        nb[i]
            .iter()
            .zip(sol.iter())
            .map(|(&j, &v)| (j, v / total))
            .collect()
    });
    let mut a = DMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row {
            a[(i, j)] = v;
        }
    }
    Ok(a)
}

/// Graph view of LLE weights: `W = A + Aᵀ − AᵀA` on the neighbour support
/// and `L = (I − A)ᵀ(I − A)`.
pub fn lle_affinity(a: &DMatrix<f64>) -> AffinityGraph {
    let m = a.nrows();
    let ata = a.transpose() * a;
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0) {
                w[(i, j)] = a[(i, j)] + a[(j, i)] - ata[(i, j)];
            }
        }
    }
    let mut graph = AffinityGraph::from_weights(w, None);
    let i_minus_a = DMatrix::identity(m, m) - a;
    graph.laplacian = i_minus_a.transpose() * &i_minus_a;
    graph
}

/// Zeroes every weight between samples of different classes.
pub fn mask_within_class(w: &mut DMatrix<f64>, labels: &[usize]) {
    let m = w.nrows();
    for i in 0..m {
        for j in 0..m {
            if labels[i] != labels[j] {
                w[(i, j)] = 0.0;
            }
        }
    }
}

fn finish_learned(mut w: DMatrix<f64>, labels: Option<&[usize]>) -> AffinityGraph {
    w.fill_diagonal(0.0);
    let mut w = (&w + w.transpose()) * 0.5;
    w.apply(|v| *v = v.max(0.0));
    if let Some(l) = labels {
        mask_within_class(&mut w, l);
    }
    AffinityGraph::from_weights(w, None)
}

fn check_labels(labels: Option<&[usize]>, m: usize) -> Result<()> {
    match labels {
        Some(l) if l.len() != m => Err(Error::DimensionMismatch {
            expected: m,
            got: l.len(),
        }),
        _ => Ok(()),
    }
}

/// Collaborative (ℓ2) self-representation graph:
/// `W = (XᵀX + λI)⁻¹ XᵀX`, diagonal removed, symmetrized and clipped at 0.
/// With `labels`, only within-class weights are kept.
pub fn collaborative_affinity(
    x: &DMatrix<f64>,
    lambda: f64,
    labels: Option<&[usize]>,
) -> Result<AffinityGraph> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("λ must be positive, got {lambda}")));
    }
    let m = x.ncols();
    check_labels(labels, m)?;
    let gram = x.transpose() * x;
    let mut reg = gram.clone();
    for i in 0..m {
        reg[(i, i)] += lambda;
    }
    let chol = Cholesky::new(reg).ok_or(Error::Linalg(LinalgError::NotPositiveDefinite))?;
    Ok(finish_learned(chol.solve(&gram), labels))
}

/// Result of the ℓ1 self-representation solver.
#[derive(Debug, Clone)]
pub struct SparseAffinity {
    pub graph: AffinityGraph,
    /// Objective `½‖XW − X‖² + τ‖W‖₁` of the retained iterate, starting at `W = 0`.
    pub objective_trace: Vec<f64>,
    /// False when the ADMM residuals did not reach tolerance within the budget.
    pub converged: bool,
}

fn l1_objective(x: &DMatrix<f64>, w: &DMatrix<f64>, tau: f64) -> f64 {
    let r = x * w - x;
    0.5 * r.norm_squared() + tau * w.iter().map(|v| v.abs()).sum::<f64>()
}

const ADMM_RHO: f64 = 1.0;
const ADMM_TOL: f64 = 1e-6;

/// Sparse (ℓ1) self-representation graph via ADMM on
/// `min ½‖XW − X‖²_F + τ‖W‖₁, diag(W) = 0`.
///
/// ADMM iterates are not monotone in the objective, so each candidate is only
/// retained when it improves on the current one; otherwise a proximal
/// gradient step from the retained iterate is taken, which cannot increase
/// the objective.
pub fn sparse_affinity(
    x: &DMatrix<f64>,
    tau: f64,
    admm_iters: usize,
    labels: Option<&[usize]>,
) -> Result<SparseAffinity> {
    if !(tau > 0.0) || admm_iters == 0 {
        return Err(Error::invalid(format!(
            "sparse_affinity needs τ > 0 and at least one iteration (τ = {tau})"
        )));
    }
    let m = x.ncols();
    check_labels(labels, m)?;
    let gram = x.transpose() * x;
    let mut reg = gram.clone();
    for i in 0..m {
        reg[(i, i)] += ADMM_RHO;
    }
    let chol = Cholesky::new(reg).ok_or(Error::Linalg(LinalgError::NotPositiveDefinite))?;
    let lipschitz = linalg::sym_eig(&gram, 1)?.values[0].max(1e-12);

    let mut z = DMatrix::<f64>::zeros(m, m);
    let mut u = DMatrix::<f64>::zeros(m, m);
    let mut kept = z.clone();
    let mut kept_obj = l1_objective(x, &kept, tau);
    let mut trace = vec![kept_obj];
    let mut converged = false;
    let ident = DMatrix::<f64>::identity(m, m);

    for _ in 0..admm_iters {
        let w = chol.solve(&(&gram + (&z - &u) * ADMM_RHO));
        let z_prev = z.clone();
        z = &w + &u;
        linalg::soft_threshold_in_place(z.as_mut_slice(), tau / ADMM_RHO);
        z.fill_diagonal(0.0);
        u += &w - &z;

        let cand_obj = l1_objective(x, &z, tau);
        if cand_obj <= kept_obj {
            kept.copy_from(&z);
            kept_obj = cand_obj;
        } else {
            let grad = &gram * (&kept - &ident);
            let mut next = &kept - grad / lipschitz;
            linalg::soft_threshold_in_place(next.as_mut_slice(), tau / lipschitz);
            next.fill_diagonal(0.0);
            let next_obj = l1_objective(x, &next, tau);
            if next_obj <= kept_obj {
                kept = next;
                kept_obj = next_obj;
            }
        }
        trace.push(kept_obj);

        let primal = (&w - &z).norm();
        let dual = ADMM_RHO * (&z - &z_prev).norm();
        let scale = z.norm().max(1.0);
        if primal <= ADMM_TOL * scale && dual <= ADMM_TOL * scale {
            converged = true;
            break;
        }
    }

    Ok(SparseAffinity {
        graph: finish_learned(kept, labels),
        objective_trace: trace,
        converged,
    })
}
