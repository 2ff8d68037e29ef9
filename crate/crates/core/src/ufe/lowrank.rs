//! Low-rank reconstruction solvers: `X_c ≈ V F` with orthonormal `V`
//! (`p × d`) and penalized feature images `F` (`d × n`).
//!
//! All three alternate exact or safeguarded block updates, so the recorded
//! objective never increases. `V` is initialized from PCA.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{center_with, check_d, column_mean, covariance, haar, Extraction, FeatureStack};
use super::{MethodKind, ProjectionModel};
use crate::error::{Error, Result};
use crate::hsio::HsiCube;
use crate::linalg::{self, DiffOperators};
use crate::par;

/// Tuning for the iterative solvers. `None` penalties resolve against the
/// data range (see [`SolverConfig::resolve`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Smoothness / sparsity weight (λ, or λ₁ for SSLRA).
    pub lambda: Option<f64>,
    /// Sparse-component weight λ₂ (SSLRA only).
    pub lambda2: Option<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            lambda2: None,
            outer_iters: 20,
            inner_iters: 50,
            tol: 1e-4,
        }
    }
}

/// Penalties after defaults have been applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedPenalties {
    pub lambda: f64,
    pub lambda2: f64,
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::invalid("solver iteration counts must be at least 1"));
        }
        for (name, v) in [("λ", self.lambda), ("λ₂", self.lambda2)] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "{name} must be finite and ≥ 0, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// λ defaults to 1 % of the cube's intensity range and λ₂ to 5 %.
    pub fn resolve(&self, cube: &HsiCube) -> ResolvedPenalties {
        let (lo, hi) = cube.min_max();
        let range = hi - lo;
        ResolvedPenalties {
            lambda: self.lambda.unwrap_or(0.01 * range),
            lambda2: self.lambda2.unwrap_or(0.05 * range),
        }
    }
}

struct Prepared {
    mean: DVector<f64>,
    xc: DMatrix<f64>,
    v0: DMatrix<f64>,
}

fn prepare(cube: &HsiCube, d: usize, cfg: &SolverConfig) -> Result<Prepared> {
    cfg.validate()?;
    check_d(d, cube.bands())?;
    let x = cube.matrix();
    let mean = column_mean(&x);
    let xc = center_with(&x, &mean);
    let v0 = linalg::sym_eig(&covariance(&xc), d)?.vectors;
    Ok(Prepared { mean, xc, v0 })
}

fn row_vec(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.row(j).iter().copied().collect()
}

fn from_rows(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

fn total_tv(ops: &DiffOperators, f: &DMatrix<f64>) -> f64 {
    (0..f.nrows()).map(|j| ops.tv(&row_vec(f, j))).sum()
}

fn fit_residual(xc: &DMatrix<f64>, v: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    0.5 * (xc - v * f).norm_squared()
}

fn check_objective(value: f64, sweep: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteObjective {
            sweep,
            layer: 0,
            detail: format!("objective = {value}"),
        })
    }
}

fn relative_decrease(prev: f64, new: f64) -> f64 {
    (prev - new) / prev.abs().max(f64::MIN_POSITIVE)
}

/// One TV proximal pass per feature row of `target`, keeping the current row
/// whenever the solver does not improve on it.
fn tv_feature_step(
    target: &DMatrix<f64>,
    current: &DMatrix<f64>,
    rows: usize,
    cols: usize,
    lambda: f64,
    iters: usize,
) -> DMatrix<f64> {
    let ops = DiffOperators::new(rows, cols);
    let new_rows = par::map_range(target.nrows(), |j| {
        let g = row_vec(target, j);
        let cur = row_vec(current, j);
        let (cand, _) = linalg::tv_prox(&g, rows, cols, lambda, iters);
        let cand_obj = linalg::tv_objective(&ops, &cand, &g, lambda);
        let cur_obj = linalg::tv_objective(&ops, &cur, &g, lambda);
        if cand_obj <= cur_obj {
            cand
        } else {
            cur
        }
    });
    from_rows(&new_rows, target.ncols())
}

fn finish(
    kind: MethodKind,
    cube: &HsiCube,
    prep: Prepared,
    v: DMatrix<f64>,
    features: DMatrix<f64>,
    sparse: Option<DMatrix<f64>>,
    objective_trace: Vec<f64>,
) -> Extraction {
    let mut stack = FeatureStack::new(cube.rows(), cube.cols(), features);
    stack.sparse = sparse;
    Extraction {
        model: ProjectionModel {
            kind,
            basis: v,
            mean: prep.mean,
            eigenvalues: Vec::new(),
        },
        features: stack,
        objective_trace,
    }
}

/// Orthogonal total-variation component analysis:
/// `min ½‖X_c − V F‖²_F + λ Σ_j TV(f_j)` subject to `VᵀV = I`.
pub fn otvca(cube: &HsiCube, d: usize, cfg: &SolverConfig) -> Result<Extraction> {
    let prep = prepare(cube, d, cfg)?;
    let lambda = cfg.resolve(cube).lambda;
    let (rows, cols) = (cube.rows(), cube.cols());
    let ops = DiffOperators::new(rows, cols);
    let xc = &prep.xc;
    let mut v = prep.v0.clone();
    let mut f = v.transpose() * xc;
    let objective =
        |v: &DMatrix<f64>, f: &DMatrix<f64>| fit_residual(xc, v, f) + lambda * total_tv(&ops, f);
    let mut obj = check_objective(objective(&v, &f), 0)?;
    let mut trace = vec![obj];
    for sweep in 1..=cfg.outer_iters {
        let g = v.transpose() * xc;
        f = tv_feature_step(&g, &f, rows, cols, lambda, cfg.inner_iters);
        v = linalg::procrustes_step(&(xc * f.transpose()));
        let new = check_objective(objective(&v, &f), sweep)?;
        trace.push(new);
        let rel = relative_decrease(obj, new);
        obj = new;
        if rel < cfg.tol {
            break;
        }
    }
    Ok(finish(MethodKind::Otvca, cube, prep, v, f, None, trace))
}

/// Wavelet-sparse reduced-rank regression:
/// `min ½‖X_c − V Q D₂‖²_F + λ‖Q‖₁` with an orthonormal 2-D Haar `D₂`.
///
/// Images whose sides are not powers of two are padded by symmetric
/// extension before the transform; features are cropped back.
pub fn wsrrr(cube: &HsiCube, d: usize, cfg: &SolverConfig) -> Result<Extraction> {
    let prep = prepare(cube, d, cfg)?;
    let lambda = cfg.resolve(cube).lambda;
    let (rows, cols) = (cube.rows(), cube.cols());
    let (rows2, cols2) = (rows.next_power_of_two(), cols.next_power_of_two());
    let n2 = rows2 * cols2;
    let xc = &prep.xc;
    let band_coeffs = par::map_range(xc.nrows(), |b| {
        let mut padded = haar::pad_symmetric(&row_vec(xc, b), rows, cols, rows2, cols2);
        haar::forward_in_place(&mut padded, rows2, cols2);
        padded
    });
    let y = from_rows(&band_coeffs, n2);

    let objective = |v: &DMatrix<f64>, q: &DMatrix<f64>| {
        fit_residual(&y, v, q) + lambda * q.iter().map(|x| x.abs()).sum::<f64>()
    };
    let q_step = |v: &DMatrix<f64>| {
        let mut q = v.transpose() * &y;
        linalg::soft_threshold_in_place(q.as_mut_slice(), lambda);
        q
    };
    let mut v = prep.v0.clone();
    let mut q = v.transpose() * &y;
    let mut obj = check_objective(objective(&v, &q), 0)?;
    let mut trace = vec![obj];
    for sweep in 1..=cfg.outer_iters {
        q = q_step(&v);
        v = linalg::procrustes_step(&(&y * q.transpose()));
        let new = check_objective(objective(&v, &q), sweep)?;
        trace.push(new);
        let rel = relative_decrease(obj, new);
        obj = new;
        if rel < cfg.tol {
            break;
        }
    }
    let feature_rows = par::map_range(d, |j| {
        let mut img = row_vec(&q, j);
        haar::inverse_in_place(&mut img, rows2, cols2);
        haar::crop(&img, cols2, rows, cols)
    });
    let f = from_rows(&feature_rows, rows * cols);
    Ok(finish(MethodKind::Wsrrr, cube, prep, v, f, None, trace))
}

/// Smooth-plus-sparse low-rank analysis:
/// `min ½‖X_c − V(F + S)‖²_F + λ₁ Σ_j TV(f_j) + λ₂‖S‖₁` subject to `VᵀV = I`.
pub fn sslra(cube: &HsiCube, d: usize, cfg: &SolverConfig) -> Result<Extraction> {
    let prep = prepare(cube, d, cfg)?;
    let pen = cfg.resolve(cube);
    let (l1, l2) = (pen.lambda, pen.lambda2);
    let (rows, cols) = (cube.rows(), cube.cols());
    let ops = DiffOperators::new(rows, cols);
    let xc = &prep.xc;
    let objective = |v: &DMatrix<f64>, f: &DMatrix<f64>, s: &DMatrix<f64>| {
        fit_residual(xc, v, &(f + s))
            + l1 * total_tv(&ops, f)
            + l2 * s.iter().map(|x| x.abs()).sum::<f64>()
    };
    let mut v = prep.v0.clone();
    let mut f = v.transpose() * xc;
    let mut s = DMatrix::zeros(d, xc.ncols());
    let mut obj = check_objective(objective(&v, &f, &s), 0)?;
    let mut trace = vec![obj];
    for sweep in 1..=cfg.outer_iters {
        let g = v.transpose() * xc;
        f = tv_feature_step(&(&g - &s), &f, rows, cols, l1, cfg.inner_iters);
        s = &g - &f;
        linalg::soft_threshold_in_place(s.as_mut_slice(), l2);
        v = linalg::procrustes_step(&(xc * (&f + &s).transpose()));
        let new = check_objective(objective(&v, &f, &s), sweep)?;
        trace.push(new);
        let rel = relative_decrease(obj, new);
        obj = new;
        if rel < cfg.tol {
            break;
        }
    }
    Ok(finish(MethodKind::Sslra, cube, prep, v, f, Some(s), trace))
}
