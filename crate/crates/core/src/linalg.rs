//! Dense numerical kernels shared by the extractors: symmetric and
//! generalized eigenproblems, orthogonal Procrustes, soft thresholding and
//! isotropic total-variation denoising.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("right-hand matrix is not positive definite; add a ridge γI (γ > 0) before solving")]
    NotPositiveDefinite,
    #[error("matrix is rank deficient (σ_min = {sigma_min:e}, σ_max = {sigma_max:e}); the orthogonal factor is not unique")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
}

/// Eigenpairs ordered by eigenvalue, one eigenvector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigResult {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Order {
    Largest,
    Smallest,
}

fn check_finite(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::InvalidDimension(format!(
            "{}×{} matrix is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let scale = m.amax();
    let mut asym = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(LinalgError::NotSymmetric(asym));
    }
    Ok(())
}

fn check_count(d: usize, p: usize) -> Result<(), LinalgError> {
    if d == 0 || d > p {
        return Err(LinalgError::InvalidDimension(format!(
            "requested {d} eigenpairs of a {p}×{p} problem"
        )));
    }
    Ok(())
}

/// Flips each column so that its largest-magnitude entry is positive.
pub fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        // Magnitudes within rounding of the maximum count as ties; the first wins.
        let peak = col.amax();
        let lead = col.iter().copied().find(|v| v.abs() >= peak * (1.0 - 1e-9));
        if lead.is_some_and(|v| v < 0.0) {
            col.neg_mut();
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eig_ordered(c: &DMatrix<f64>, d: usize, order: Order) -> SymEigResult {
    let eig = symmetrize(c).symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        match order {
            Order::Largest => y.total_cmp(&x),
            Order::Smallest => x.total_cmp(&y),
        }
    });
    idx.truncate(d);
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::from_fn(c.nrows(), d, |r, j| eig.eigenvectors[(r, idx[j])]);
    fix_signs(&mut vectors);
    SymEigResult { values, vectors }
}

/// Top-`d` eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn sym_eig(c: &DMatrix<f64>, d: usize) -> Result<SymEigResult, LinalgError> {
    check_symmetric(c)?;
    check_count(d, c.nrows())?;
    Ok(eig_ordered(c, d, Order::Largest))
}

/// Bottom-`d` eigenpairs of a symmetric matrix, eigenvalues ascending.
pub fn sym_eig_smallest(c: &DMatrix<f64>, d: usize) -> Result<SymEigResult, LinalgError> {
    check_symmetric(c)?;
    check_count(d, c.nrows())?;
    Ok(eig_ordered(c, d, Order::Smallest))
}

fn gen_eig_ordered(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: usize,
    order: Order,
) -> Result<SymEigResult, LinalgError> {
    check_symmetric(a)?;
    check_symmetric(b)?;
    if a.shape() != b.shape() {
        return Err(LinalgError::InvalidDimension(format!(
            "A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    check_count(d, a.nrows())?;
    let chol = Cholesky::new(symmetrize(b)).ok_or(LinalgError::NotPositiveDefinite)?;
    let l = chol.l();
    // Cholesky succeeds on matrices that are PD only up to rounding; reject
    // factors whose pivots collapse relative to the largest one.
    let diag = l.diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !(lo > 1e-10 * hi) {
        return Err(LinalgError::NotPositiveDefinite);
    }
    let y = l
        .solve_lower_triangular(a)
        .ok_or(LinalgError::NotPositiveDefinite)?;
    let m = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(LinalgError::NotPositiveDefinite)?;
    let whitened = eig_ordered(&m, d, order);
    let mut vectors = l
        .transpose()
        .solve_upper_triangular(&whitened.vectors)
        .ok_or(LinalgError::NotPositiveDefinite)?;
    fix_signs(&mut vectors);
    Ok(SymEigResult {
        values: whitened.values,
        vectors,
    })
}

/// Top-`d` solutions of `A v = λ B v` with `B` positive definite; the
/// returned vectors are `B`-orthonormal.
pub fn gen_eig(a: &DMatrix<f64>, b: &DMatrix<f64>, d: usize) -> Result<SymEigResult, LinalgError> {
    gen_eig_ordered(a, b, d, Order::Largest)
}

/// Bottom-`d` solutions of `A v = λ B v`, eigenvalues ascending.
pub fn gen_eig_smallest(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: usize,
) -> Result<SymEigResult, LinalgError> {
    gen_eig_ordered(a, b, d, Order::Smallest)
}

/// `argmax_{VᵀV = I} tr(VᵀM)`, i.e. `U Wᵀ` from the thin SVD `M = U Σ Wᵀ`.
pub fn orthogonal_procrustes(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if m.ncols() > m.nrows() || m.ncols() == 0 {
        return Err(LinalgError::InvalidDimension(format!(
            "procrustes needs p ≥ d ≥ 1, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let svd = m.clone().svd(true, true);
    let (lo, hi) = svd
        .singular_values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
    if hi == 0.0 || lo < 1e-12 * hi {
        return Err(LinalgError::RankDeficient {
            sigma_min: lo,
            sigma_max: hi,
        });
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    Ok(u * vt)
}

/// Procrustes step used inside the alternating solvers: any maximizer is
/// acceptable there, so rank deficiency is resolved by completing the
/// orthonormal factor instead of erroring.
pub(crate) fn procrustes_step(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let v = u * vt;
    let gram = v.transpose() * &v;
    let err = (gram - DMatrix::identity(v.ncols(), v.ncols())).amax();
    if err <= 1e-9 {
        return v;
    }
    // Null singular directions may come back non-orthonormal; re-orthonormalize.
    let mut q = v.qr().q();
    for mut col in q.column_iter_mut() {
        let s = col.dot(&col);
        if s < 0.5 {
            col.fill(0.0);
        }
    }
    let q = complete_orthonormal(&q);
    q.columns(0, m.ncols()).into_owned()
}

/// Replaces zero columns of `q` with unit vectors orthogonal to the rest.
fn complete_orthonormal(q: &DMatrix<f64>) -> DMatrix<f64> {
    let p = q.nrows();
    let mut out = q.clone();
    for j in 0..out.ncols() {
        if out.column(j).norm() > 0.5 {
            continue;
        }
        for e in 0..p {
            let mut cand = DVector::zeros(p);
            cand[e] = 1.0;
            for k in 0..out.ncols() {
                if k != j && out.column(k).norm() > 0.5 {
                    let proj = out.column(k).dot(&cand);
                    cand -= out.column(k) * proj;
                }
            }
            let n = cand.norm();
            if n > 1e-6 {
                out.set_column(j, &(cand / n));
                break;
            }
        }
    }
    out
}

/// Elementwise `sign(x)·max(|x| − τ, 0)`.
pub fn soft_threshold(x: &[f64], tau: f64) -> Vec<f64> {
    x.iter().map(|&v| shrink(v, tau)).collect()
}

#[inline]
pub fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

pub fn soft_threshold_in_place(x: &mut [f64], tau: f64) {
    for v in x {
        *v = shrink(*v, tau);
    }
}

/// Forward-difference operators on an `rows × cols` grid stored row-major,
/// with a replicate (Neumann) boundary: the difference past the last row or
/// column is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOperators {
    pub rows: usize,
    pub cols: usize,
}

impl DiffOperators {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn horizontal(&self, x: &[f64], out: &mut [f64]) {
        let c = self.cols;
        for (xr, or) in x.chunks(c).zip(out.chunks_mut(c)) {
            for j in 0..c - 1 {
                or[j] = xr[j + 1] - xr[j];
            }
            or[c - 1] = 0.0;
        }
    }

    pub fn vertical(&self, x: &[f64], out: &mut [f64]) {
        let (r, c) = (self.rows, self.cols);
        for i in 0..r - 1 {
            for j in 0..c {
                out[i * c + j] = x[(i + 1) * c + j] - x[i * c + j];
            }
        }
        out[(r - 1) * c..].fill(0.0);
    }

    /// Divergence, the negative adjoint of the gradient `(D_h, D_v)`.
    pub fn divergence(&self, ph: &[f64], pv: &[f64], out: &mut [f64]) {
        let (r, c) = (self.rows, self.cols);
        for i in 0..r {
            for j in 0..c {
                let k = i * c + j;
                let mut d = 0.0;
                if j < c - 1 {
                    d += ph[k];
                }
                if j > 0 {
                    d -= ph[k - 1];
                }
                if i < r - 1 {
                    d += pv[k];
                }
                if i > 0 {
                    d -= pv[k - c];
                }
                out[k] = d;
            }
        }
    }

    /// Isotropic total variation `Σ sqrt((D_h x)² + (D_v x)²)`.
    pub fn tv(&self, x: &[f64]) -> f64 {
        let (r, c) = (self.rows, self.cols);
        let mut total = 0.0;
        for i in 0..r {
            for j in 0..c {
                let k = i * c + j;
                let dh = if j < c - 1 { x[k + 1] - x[k] } else { 0.0 };
                let dv = if i < r - 1 { x[k + c] - x[k] } else { 0.0 };
                total += (dh * dh + dv * dv).sqrt();
            }
        }
        total
    }
}

/// `½‖u − g‖² + λ·TV(u)`.
pub fn tv_objective(ops: &DiffOperators, u: &[f64], g: &[f64], lambda: f64) -> f64 {
    let fid: f64 = u.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fid + lambda * ops.tv(u)
}

const TV_STEP: f64 = 0.125;

/// Row-major TV proximal solver behind [`tv_denoise`]. Returns the best
/// primal iterate and the objective trace of the returned sequence (first
/// entry is the objective of the input itself).
pub(crate) fn tv_prox(
    g: &[f64],
    rows: usize,
    cols: usize,
    lambda: f64,
    iters: usize,
) -> (Vec<f64>, Vec<f64>) {
    let ops = DiffOperators::new(rows, cols);
    let mut best = g.to_vec();
    let mut best_obj = tv_objective(&ops, g, g, lambda);
    let mut trace = Vec::with_capacity(iters + 1);
    trace.push(best_obj);
    if lambda == 0.0 {
        trace.resize(iters + 1, best_obj);
        return (best, trace);
    }
    let (lo, hi) = g
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let n = g.len();
    let mut ph = vec![0.0; n];
    let mut pv = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut gh = vec![0.0; n];
    let mut gv = vec![0.0; n];
    let mut u = vec![0.0; n];
    let inv = 1.0 / lambda;
    for _ in 0..iters {
        for k in 0..n {
            w[k] = div[k] - g[k] * inv;
        }
        ops.horizontal(&w, &mut gh);
        ops.vertical(&w, &mut gv);
        for k in 0..n {
            let a = ph[k] + TV_STEP * gh[k];
            let b = pv[k] + TV_STEP * gv[k];
            let norm = (a * a + b * b).sqrt().max(1.0);
            ph[k] = a / norm;
            pv[k] = b / norm;
        }
        ops.divergence(&ph, &pv, &mut div);
        for k in 0..n {
            // Clamping to the input range never increases the objective.
            u[k] = (g[k] - lambda * div[k]).clamp(lo, hi);
        }
        let obj = tv_objective(&ops, &u, g, lambda);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&u);
        }
        trace.push(best_obj);
    }
    (best, trace)
}

fn image_to_row_major(img: &DMatrix<f64>) -> Vec<f64> {
    img.transpose().as_slice().to_vec()
}

/// Approximately solves `min_u ½‖u − img‖²_F + λ·TV(u)` by projected
/// gradient on the dual with step 1/8.
pub fn tv_denoise(
    img: &DMatrix<f64>,
    lambda: f64,
    iters: usize,
) -> Result<DMatrix<f64>, LinalgError> {
    tv_denoise_traced(img, lambda, iters).map(|(u, _)| u)
}

/// [`tv_denoise`] plus the per-iteration objective of the returned iterate.
pub fn tv_denoise_traced(
    img: &DMatrix<f64>,
    lambda: f64,
    iters: usize,
) -> Result<(DMatrix<f64>, Vec<f64>), LinalgError> {
    check_finite(img)?;
    if !(lambda >= 0.0) || iters == 0 || img.is_empty() {
        return Err(LinalgError::InvalidDimension(format!(
            "tv_denoise needs λ ≥ 0 and iters ≥ 1 (λ = {lambda}, iters = {iters})"
        )));
    }
    let (r, c) = img.shape();
    let (u, trace) = tv_prox(&image_to_row_major(img), r, c, lambda, iters);
    Ok((DMatrix::from_row_slice(r, c, &u), trace))
}
