//! Joint and progressive multi-layer regression.
//!
//! The model maps a (rescaled) spectrum through layers
//! `x_l = clip(max(Θ_l x_{l−1}, 0))`, where `clip` scales columns to norm at
//! most 1, and regresses one-hot labels on the last layer with `P`. Training
//! minimizes
//!
//! ```text
//! ‖Y − P X_q‖² + α/2 ‖P‖² + β/2 Σ_l tr(Θ_l X_{l−1} L X_{l−1}ᵀ Θ_lᵀ)
//!              + γ/2 Σ_l ‖X_{l−1} − Θ_lᵀ Θ_l X_{l−1}‖²
//! ```
//!
//! with `L` the Laplacian of the class-membership graph `W_ij = 1/N_c`.
//! `P` is updated in closed form. Each `Θ_l` update solves the quadratic
//! model obtained by freezing the activations and the outer factor of the
//! reconstruction term, then backtracks along the segment towards that
//! solution until the true objective decreases; a step that never
//! decreases it leaves `Θ_l` unchanged.

use nalgebra::{Cholesky, DMatrix};

use super::{LabeledSamples, Projector};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct JPlayParams {
    /// Output width of each layer; empty means `[p, k]`.
    pub layer_dims: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Maximum number of sweeps over all blocks.
    pub iters: usize,
    /// Stop when a sweep lowers the objective by less than this fraction.
    pub tol: f64,
}

impl Default for JPlayParams {
    fn default() -> Self {
        Self {
            layer_dims: Vec::new(),
            alpha: 0.1,
            beta: 1.0,
            gamma: 1.0,
            iters: 30,
            tol: 1e-6,
        }
    }
}

impl JPlayParams {
    pub fn resolved_dims(&self, p: usize, k: usize) -> Vec<usize> {
        if self.layer_dims.is_empty() {
            vec![p, k]
        } else {
            self.layer_dims.clone()
        }
    }
}

/// A trained layer cascade plus its label regression.
#[derive(Debug, Clone, PartialEq)]
pub struct JPlayModel {
    /// `Θ_1 … Θ_q`, `Θ_l` of shape `d_l × d_{l−1}`.
    pub layers: Vec<DMatrix<f64>>,
    /// `P`, `k × d_q`.
    pub regression: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Inputs are multiplied by this before entering the first layer.
    pub input_scale: f64,
    /// Objective after initialization and after every sweep.
    pub objective_trace: Vec<f64>,
}

impl JPlayModel {
    /// Layer outputs `[X_0, X_1, …, X_q]` for raw (unscaled) inputs.
    pub fn cascade(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        cascade(&self.layers, &(x * self.input_scale))
    }
}

impl Projector for JPlayModel {
    fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |t| t.nrows())
    }

    fn project_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        Ok(self.cascade(x).pop().expect("at least the input"))
    }
}

/// Nonnegativity followed by column-norm clipping to the unit ball.
fn constrain(mut z: DMatrix<f64>) -> DMatrix<f64> {
    z.apply(|v| *v = v.max(0.0));
    for mut col in z.column_iter_mut() {
        let norm = col.norm();
        if norm > 1.0 {
            col /= norm;
        }
    }
    z
}

fn cascade(layers: &[DMatrix<f64>], x0: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(layers.len() + 1);
    out.push(x0.clone());
    for theta in layers {
        let next = constrain(theta * out.last().expect("nonempty"));
        out.push(next);
    }
    out
}

/// `X L Xᵀ` for the class-membership graph, which equals the within-class
/// scatter of the columns of `x`.
fn class_graph_scatter(x: &DMatrix<f64>, labels: &[usize], counts: &[usize]) -> DMatrix<f64> {
    let dim = x.nrows();
    let mut sums = DMatrix::zeros(dim, counts.len());
    for (i, &l) in labels.iter().enumerate() {
        let mut col = sums.column_mut(l - 1);
        col += x.column(i);
    }
    let mut s = x * x.transpose();
    for (c, &n) in counts.iter().enumerate() {
        let sc = sums.column(c);
        s -= sc * sc.transpose() / n as f64;
    }
    (&s + s.transpose()) * 0.5
}

struct Problem<'a> {
    x0: DMatrix<f64>,
    y: DMatrix<f64>,
    labels: &'a [usize],
    counts: &'a [usize],
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl Problem<'_> {
    fn objective_with(
        &self,
        layers: &[DMatrix<f64>],
        p: &DMatrix<f64>,
        xs: &[DMatrix<f64>],
    ) -> f64 {
        let q = layers.len();
        let mut total = (&self.y - p * &xs[q]).norm_squared() + 0.5 * self.alpha * p.norm_squared();
        for (l, theta) in layers.iter().enumerate() {
            let input = &xs[l];
            if self.beta != 0.0 {
                let c_l = class_graph_scatter(input, self.labels, self.counts);
                total += 0.5 * self.beta * (theta * c_l * theta.transpose()).trace();
            }
            if self.gamma != 0.0 {
                let recon = input - theta.transpose() * (theta * input);
                total += 0.5 * self.gamma * recon.norm_squared();
            }
        }
        total
    }

    fn objective(&self, layers: &[DMatrix<f64>], p: &DMatrix<f64>) -> f64 {
        let xs = cascade(layers, &self.x0);
        self.objective_with(layers, p, &xs)
    }

    /// Ridge regression of `Y` on the last layer output.
    fn regression_step(&self, xq: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let dim = xq.nrows();
        let mut gram = xq * xq.transpose();
        for i in 0..dim {
            gram[(i, i)] += 0.5 * self.alpha;
        }
        let rhs = xq * self.y.transpose();
        let sol = match Cholesky::new(gram.clone()) {
            Some(ch) => ch.solve(&rhs),
            None => {
                let ridge = 1e-12 * gram.trace().abs().max(1.0);
                for i in 0..dim {
                    gram[(i, i)] += ridge;
                }
                gram.lu().solve(&rhs)?
            }
        };
        Some(sol.transpose())
    }

    /// Minimizer of the frozen-activation quadratic model for layer `l`.
    fn layer_candidate(
        &self,
        layers: &[DMatrix<f64>],
        p: &DMatrix<f64>,
        xs: &[DMatrix<f64>],
        l: usize,
    ) -> Option<DMatrix<f64>> {
        let theta = &layers[l];
        let input = &xs[l];
        let mut r = p.clone();
        for j in (l + 1..layers.len()).rev() {
            r *= &layers[j];
        }
        let c = input * input.transpose();
        let dim_in = c.nrows();
        let mut e = if self.beta != 0.0 {
            class_graph_scatter(input, self.labels, self.counts) * self.beta
        } else {
            DMatrix::zeros(dim_in, dim_in)
        };
        let eps = 1e-10 * c.trace().abs().max(1e-12) / dim_in as f64;
        for i in 0..dim_in {
            e[(i, i)] += eps;
        }
        let a = r.transpose() * &r * 2.0 + theta * theta.transpose() * self.gamma;
        let rhs = r.transpose() * &self.y * input.transpose() * 2.0 + theta * &c * self.gamma;
        let a = (&a + a.transpose()) * 0.5;
        let eig = a.symmetric_eigen();
        let rotated = eig.eigenvectors.transpose() * rhs;
        let mut solved = DMatrix::zeros(theta.nrows(), dim_in);
        for i in 0..theta.nrows() {
            let sys = &c * eig.eigenvalues[i].max(0.0) + &e;
            let b = rotated.row(i).transpose();
            let row = match Cholesky::new(sys.clone()) {
                Some(ch) => ch.solve(&b),
                None => sys.lu().solve(&b)?,
            };
            solved.set_row(i, &row.transpose());
        }
        let cand = eig.eigenvectors * solved;
        cand.iter().all(|v| v.is_finite()).then_some(cand)
    }
}

fn non_finite(sweep: usize, layer: usize, what: &str, value: f64) -> Error {
    Error::NonFiniteObjective {
        sweep,
        layer,
        detail: format!("{what} evaluated to {value}"),
    }
}

/// Rows are the top eigenvectors of `X Xᵀ`; rows beyond the input
/// dimension are zero.
fn init_layer(input: &DMatrix<f64>, width: usize) -> Result<DMatrix<f64>> {
    let dim = input.nrows();
    let gram = input * input.transpose();
    let gram = (&gram + gram.transpose()) * 0.5;
    let take = width.min(dim);
    let eig = linalg::sym_eig(&gram, take)?;
    let mut theta = DMatrix::zeros(width, dim);
    for j in 0..take {
        theta.set_row(j, &eig.vectors.column(j).transpose());
    }
    Ok(theta)
}

const MAX_BACKTRACKS: usize = 12;

/// Trains a JPlay cascade with the class-membership graph regularizer.
pub fn jplay(s: &LabeledSamples, params: &JPlayParams) -> Result<JPlayModel> {
    let (p_dim, k) = (s.bands(), s.k());
    let dims = params.resolved_dims(p_dim, k);
    if dims.contains(&0) {
        return Err(Error::invalid("JPlay layer widths must be positive"));
    }
    for (name, v) in [("α", params.alpha), ("β", params.beta), ("γ", params.gamma)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!(
                "JPlay {name} must be finite and ≥ 0, got {v}"
            )));
        }
    }
    if params.iters == 0 || !(params.tol > 0.0) {
        return Err(Error::invalid("JPlay needs iters ≥ 1 and tol > 0"));
    }
    let max_norm = s.x().column_iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let input_scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };
    let prob = Problem {
        x0: s.x() * input_scale,
        y: s.one_hot(),
        labels: s.labels(),
        counts: s.class_counts(),
        alpha: params.alpha,
        beta: params.beta,
        gamma: params.gamma,
    };

    let mut layers: Vec<DMatrix<f64>> = Vec::with_capacity(dims.len());
    let mut current = prob.x0.clone();
    for &width in &dims {
        let theta = init_layer(&current, width)?;
        current = constrain(&theta * &current);
        layers.push(theta);
    }
    let mut p = prob
        .regression_step(&current)
        .ok_or_else(|| non_finite(0, dims.len(), "initial regression", f64::NAN))?;
    let mut obj = prob.objective(&layers, &p);
    if !obj.is_finite() {
        return Err(non_finite(0, 0, "initial objective", obj));
    }
    let mut trace = vec![obj];

    for sweep in 1..=params.iters {
        let start = obj;
        for l in 0..layers.len() {
            let xs = cascade(&layers, &prob.x0);
            let Some(cand) = prob.layer_candidate(&layers, &p, &xs, l) else {
                continue;
            };
            let old = layers[l].clone();
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                layers[l] = &old + (&cand - &old) * step;
                let trial = prob.objective(&layers, &p);
                if !trial.is_finite() {
                    return Err(non_finite(sweep, l + 1, "layer update objective", trial));
                }
                if trial < obj {
                    obj = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                layers[l] = old;
            }
        }
        let xs = cascade(&layers, &prob.x0);
        if let Some(p_new) = prob.regression_step(&xs[layers.len()]) {
            let trial = prob.objective_with(&layers, &p_new, &xs);
            if !trial.is_finite() {
                return Err(non_finite(
                    sweep,
                    layers.len(),
                    "regression objective",
                    trial,
                ));
            }
            if trial <= obj {
                p = p_new;
                obj = trial;
            }
        }
        trace.push(obj);
        if (start - obj) / start.abs().max(f64::MIN_POSITIVE) < params.tol {
            break;
        }
    }

    Ok(JPlayModel {
        layers,
        regression: p,
        alpha: params.alpha,
        beta: params.beta,
        gamma: params.gamma,
        input_scale,
        objective_trace: trace,
    })
}

/// Training objective of `model` on `s` (inputs rescaled as during training).
pub fn jplay_objective(model: &JPlayModel, s: &LabeledSamples) -> f64 {
    let prob = Problem {
        x0: s.x() * model.input_scale,
        y: s.one_hot(),
        labels: s.labels(),
        counts: s.class_counts(),
        alpha: model.alpha,
        beta: model.beta,
        gamma: model.gamma,
    };
    prob.objective(&model.layers, &model.regression)
}

/// Single-layer joint-learning objective `‖Y − P Θ X‖² + α/2 ‖P‖²`.
pub fn jl_objective(
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    x: &DMatrix<f64>,
    alpha: f64,
) -> f64 {
    (y - p * theta * x).norm_squared() + 0.5 * alpha * p.norm_squared()
}
