//! Supervised feature extraction on labeled training samples.
//!
//! Discriminant projections (LDA and its regularized, local and
//! feature-space variants), graph-embedding projections for learned
//! affinities, and the multi-layer regression model in [`jplay`].

mod jplay;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{self, AffinityGraph};
use crate::hsio::HsiCube;
use crate::linalg;
use crate::par;
use crate::ufe::{center_with, column_mean, FeatureStack, MethodKind, ProjectionModel};

pub use jplay::{jl_objective, jplay, jplay_objective, JPlayModel, JPlayParams};

/// Training samples `X_m` (`p × m`) with labels in `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSamples {
    x: DMatrix<f64>,
    labels: Vec<usize>,
    k: usize,
    class_counts: Vec<usize>,
}

impl LabeledSamples {
    /// Fails when a label is 0, the lengths disagree, or some class in
    /// `1..=max label` has no sample.
    pub fn new(x: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::invalid("no training samples"));
        }
        if labels.contains(&0) {
            return Err(Error::invalid("training labels must be ≥ 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training samples contain non-finite values"));
        }
        let k = labels.iter().copied().max().unwrap_or(0);
        let mut class_counts = vec![0; k];
        for &l in &labels {
            class_counts[l - 1] += 1;
        }
        if let Some(c) = class_counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c + 1));
        }
        Ok(Self {
            x,
            labels,
            k,
            class_counts,
        })
    }

    /// Collects the pixels listed in `indices` from a cube.
    pub fn from_cube(cube: &HsiCube, indices: &[usize], labels: Vec<usize>) -> Result<Self> {
        let n = cube.pixels();
        let data = cube.data();
        let p = cube.bands();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "pixel index {bad} out of range ({n} pixels)"
            )));
        }
        let x = DMatrix::from_fn(p, indices.len(), |b, j| data[b * n + indices[j]]);
        Self::new(x, labels)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bands(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    /// `k × m` one-hot label matrix.
    pub fn one_hot(&self) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.k, self.len());
        for (i, &l) in self.labels.iter().enumerate() {
            y[(l - 1, i)] = 1.0;
        }
        y
    }

    /// Band means of each class, one column per class (`p × k`).
    pub fn class_means(&self) -> DMatrix<f64> {
        let mut means = DMatrix::zeros(self.bands(), self.k);
        for (i, &l) in self.labels.iter().enumerate() {
            let mut col = means.column_mut(l - 1);
            col += self.x.column(i);
        }
        for (c, &n) in self.class_counts.iter().enumerate() {
            let mut col = means.column_mut(c);
            col /= n as f64;
        }
        means
    }

    fn mean(&self) -> DVector<f64> {
        column_mean(&self.x)
    }
}

/// Within- and between-class scatter (plus the between-spectral scatter
/// for FSDA).
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub s_w: DMatrix<f64>,
    pub s_b: DMatrix<f64>,
    pub s_f: Option<DMatrix<f64>>,
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// `½ Σ_ij W_ij (x_i − x_j)(x_i − x_j)ᵀ = X (D − W) Xᵀ`.
pub fn pairwise_scatter(x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = x.ncols();
    if w.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: w.nrows(),
        });
    }
    let asym = (w - w.transpose()).amax();
    if asym > 1e-10 * w.amax().max(f64::MIN_POSITIVE) || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "scatter weights must be finite and symmetric",
        ));
    }
    let mut lap = -w.clone();
    for i in 0..m {
        lap[(i, i)] += w.row(i).sum();
    }
    Ok(symmetrize(x * lap * x.transpose()))
}

/// Classical scatters, or the pairwise weighted forms when `weights =
/// (W_w, W_b)` is given. Weights may be negative (local Fisher weighting
/// uses `1/m − 1/N_c` inside classes) but must be symmetric.
pub fn scatter_matrices(
    s: &LabeledSamples,
    weights: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) -> Result<ScatterPair> {
    if let Some((ww, wb)) = weights {
        return Ok(ScatterPair {
            s_w: pairwise_scatter(&s.x, ww)?,
            s_b: pairwise_scatter(&s.x, wb)?,
            s_f: None,
        });
    }
    let p = s.bands();
    let means = s.class_means();
    let mu = s.mean();
    let mut within = s.x.clone();
    for (i, &l) in s.labels.iter().enumerate() {
        let mut col = within.column_mut(i);
        col -= means.column(l - 1);
    }
    let s_w = symmetrize(&within * within.transpose());
    let mut s_b = DMatrix::zeros(p, p);
    for (c, &n) in s.class_counts.iter().enumerate() {
        let diff = means.column(c) - &mu;
        s_b += &diff * diff.transpose() * n as f64;
    }
    Ok(ScatterPair {
        s_w,
        s_b: symmetrize(s_b),
        s_f: None,
    })
}

/// Total scatter `Σ (x_i − μ)(x_i − μ)ᵀ`.
pub fn total_scatter(s: &LabeledSamples) -> DMatrix<f64> {
    let xc = center_with(&s.x, &s.mean());
    symmetrize(&xc * xc.transpose())
}

fn add_ridge(m: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += gamma;
    }
    out
}

/// `rel · tr(S_w) / p`, a ridge scaled to the data.
pub fn relative_ridge(s: &LabeledSamples, rel: f64) -> Result<f64> {
    let sw = scatter_matrices(s, None)?.s_w;
    Ok(rel * sw.trace() / s.bands() as f64)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!(
            "ridge γ must be finite and ≥ 0, got {gamma}"
        )));
    }
    Ok(())
}

fn model(kind: MethodKind, mean: DVector<f64>, eig: linalg::SymEigResult) -> ProjectionModel {
    ProjectionModel {
        kind,
        basis: eig.vectors,
        mean,
        eigenvalues: eig.values,
    }
}

fn discriminant(s: &LabeledSamples, gamma: f64, kind: MethodKind) -> Result<ProjectionModel> {
    check_gamma(gamma)?;
    let k = s.k();
    if k < 2 {
        return Err(Error::invalid(
            "discriminant analysis needs at least two classes",
        ));
    }
    if s.len() <= k {
        return Err(Error::invalid(format!(
            "discriminant analysis needs more samples than classes ({} ≤ {k})",
            s.len()
        )));
    }
    let d = (k - 1).min(s.bands());
    let sc = scatter_matrices(s, None)?;
    let eig = linalg::gen_eig(&sc.s_b, &add_ridge(&sc.s_w, gamma), d)?;
    Ok(model(kind, s.mean(), eig))
}

/// Fisher LDA: top `k − 1` solutions of `S_b p = λ (S_w + γI) p`.
pub fn lda(s: &LabeledSamples, gamma: f64) -> Result<ProjectionModel> {
    discriminant(s, gamma, MethodKind::Lda)
}

/// Regularized LDA. `gamma = None` uses `10⁻² · tr(S_w)/p`.
pub fn rlda(s: &LabeledSamples, gamma: Option<f64>) -> Result<ProjectionModel> {
    let gamma = match gamma {
        Some(g) => g,
        None => relative_ridge(s, 1e-2)?,
    };
    discriminant(s, gamma, MethodKind::Rlda)
}

/// Local Fisher weights `(W_w, W_b)` from a within-class affinity `A`.
pub fn local_fisher_weights(a: &DMatrix<f64>, s: &LabeledSamples) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = s.len() as f64;
    let labels = &s.labels;
    let counts = &s.class_counts;
    let n = labels.len();
    let mut ww = DMatrix::zeros(n, n);
    let mut wb = DMatrix::from_element(n, n, 1.0 / m);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                let nc = counts[labels[i] - 1] as f64;
                ww[(i, j)] = a[(i, j)] / nc;
                wb[(i, j)] = a[(i, j)] * (1.0 / m - 1.0 / nc);
            }
        }
    }
    (ww, wb)
}

/// Parameters of [`lfda`]. `sigma` is relative to the RMS distance between
/// within-class neighbours; `gamma = None` uses `10⁻³ · tr(S_w)/p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfdaParams {
    pub k_nn: usize,
    pub sigma: f64,
    pub gamma: Option<f64>,
}

impl Default for LfdaParams {
    fn default() -> Self {
        Self {
            k_nn: 7,
            sigma: 1.0,
            gamma: None,
        }
    }
}

/// Local Fisher discriminant analysis.
pub fn lfda(s: &LabeledSamples, d: usize, params: &LfdaParams) -> Result<ProjectionModel> {
    let p = s.bands();
    if d == 0 || d > p {
        return Err(Error::invalid(format!("d = {d} must lie in 1..={p}")));
    }
    if params.k_nn == 0 || !(params.sigma > 0.0) {
        return Err(Error::invalid("LFDA needs k_nn ≥ 1 and σ > 0"));
    }
    let nb = graph::knn_indices(&s.x, params.k_nn, Some(&s.labels));
    let (sum, count) = nb
        .iter()
        .enumerate()
        .fold((0.0, 0usize), |(acc, c), (i, list)| {
            let part: f64 = list
                .iter()
                .map(|&j| (s.x.column(i) - s.x.column(j)).norm_squared())
                .sum();
            (acc + part, c + list.len())
        });
    let rms = (sum / count.max(1) as f64).sqrt().max(f64::MIN_POSITIVE);
    let affinity =
        graph::heat_kernel_affinity_supervised(&s.x, &s.labels, params.k_nn, params.sigma * rms)?;
    let (ww, wb) = local_fisher_weights(&affinity.w, s);
    let sc = scatter_matrices(s, Some((&ww, &wb)))?;
    let gamma = match params.gamma {
        Some(g) => g,
        None => relative_ridge(s, 1e-3)?,
    };
    check_gamma(gamma)?;
    let eig = linalg::gen_eig(&sc.s_b, &add_ridge(&sc.s_w, gamma), d)?;
    Ok(model(MethodKind::Lfda, s.mean(), eig))
}

/// Band-wise class-mean representation used by FSDA.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralScatter {
    /// `h_i` stacked as rows (`p × k`): entry `(i, j)` is the mean of band
    /// `i` over class `j`.
    pub h: DMatrix<f64>,
    /// Mean of the `h_i`.
    pub h_bar: DVector<f64>,
    /// `½ Σ_i (h_i − h̄)(h_i − h̄)ᵀ`, `k × k`.
    pub s_f: DMatrix<f64>,
}

pub fn between_spectral_scatter(s: &LabeledSamples) -> SpectralScatter {
    let h = s.class_means();
    let p = h.nrows() as f64;
    let h_bar = DVector::from_iterator(h.ncols(), h.column_iter().map(|c| c.sum() / p));
    let mut hc = h.clone();
    for mut row in hc.row_iter_mut() {
        row -= h_bar.transpose();
    }
    let s_f = symmetrize(hc.transpose() * &hc * 0.5);
    SpectralScatter { h, h_bar, s_f }
}

/// Feature-space discriminant analysis.
///
/// Stage 1 takes the eigenvectors `P_f` of the between-spectral scatter
/// with nonzero eigenvalue. The band-space directions they induce,
/// `U = H_c P_f (2Λ)^{-1/2}` (orthonormal, `H_c` the band-centred class-mean
/// matrix), define the transformed representation in which stage 2 runs
/// LDA. The returned basis is `U Q` for the stage-2 LDA directions `Q`.
pub fn fsda(s: &LabeledSamples, d: usize, gamma: f64) -> Result<ProjectionModel> {
    check_gamma(gamma)?;
    let p = s.bands();
    if s.k() < 2 {
        return Err(Error::invalid("FSDA needs at least two classes"));
    }
    if d == 0 || d > p {
        return Err(Error::invalid(format!("d = {d} must lie in 1..={p}")));
    }
    let ss = between_spectral_scatter(s);
    let k = s.k();
    let stage1 = linalg::sym_eig(&ss.s_f, k)?;
    let top = stage1.values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::NoSpectralDiscriminant);
    }
    let keep: Vec<usize> = (0..k).filter(|&j| stage1.values[j] > 1e-12 * top).collect();
    let mut hc = ss.h.clone();
    for mut row in hc.row_iter_mut() {
        row -= ss.h_bar.transpose();
    }
    let mut u = DMatrix::zeros(p, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        let dir = &hc * stage1.vectors.column(j) / (2.0 * stage1.values[j]).sqrt();
        u.set_column(c, &dir);
    }
    let sc = scatter_matrices(s, None)?;
    let sb = symmetrize(u.transpose() * &sc.s_b * &u);
    let sw = symmetrize(u.transpose() * &sc.s_w * &u);
    let d2 = d.min(keep.len());
    let eig = linalg::gen_eig(&sb, &add_ridge(&sw, gamma), d2)?;
    let basis = &u * &eig.vectors;
    Ok(ProjectionModel {
        kind: MethodKind::Fsda,
        basis,
        mean: s.mean(),
        eigenvalues: eig.values,
    })
}

/// Linear graph embedding: the `d` smallest solutions of
/// `X_c L X_cᵀ p = λ (X_c B X_cᵀ + γI) p` with `X_c` the centred samples.
pub fn gda_project(
    s: &LabeledSamples,
    g: &AffinityGraph,
    d: usize,
    gamma: f64,
    kind: MethodKind,
) -> Result<ProjectionModel> {
    check_gamma(gamma)?;
    if g.len() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: s.len(),
            got: g.len(),
        });
    }
    let p = s.bands();
    if d == 0 || d > p {
        return Err(Error::invalid(format!("d = {d} must lie in 1..={p}")));
    }
    let mean = s.mean();
    let xc = center_with(&s.x, &mean);
    let a = symmetrize(&xc * &g.laplacian * xc.transpose());
    let b = add_ridge(&symmetrize(&xc * &g.constraint * xc.transpose()), gamma);
    let eig = linalg::gen_eig_smallest(&a, &b, d)?;
    Ok(model(kind, mean, eig))
}

/// The right-hand matrix `X_c B X_cᵀ + γI` that [`gda_project`] normalizes
/// against.
pub fn gda_constraint(s: &LabeledSamples, g: &AffinityGraph, gamma: f64) -> DMatrix<f64> {
    let xc = center_with(&s.x, &s.mean());
    add_ridge(&symmetrize(&xc * &g.constraint * xc.transpose()), gamma)
}

/// A fitted map from spectra to features.
pub trait Projector: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Maps the columns of a `p × n` matrix.
    fn project_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl Projector for ProjectionModel {
    fn input_dim(&self) -> usize {
        ProjectionModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        ProjectionModel::output_dim(self)
    }

    fn project_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.project(x)
    }
}

const PROJECTION_CHUNK: usize = 4096;

/// Projects every pixel of `cube`, in parallel over pixel blocks.
pub fn apply_projection(model: &dyn Projector, cube: &HsiCube) -> Result<FeatureStack> {
    let p = cube.bands();
    if p != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: p,
        });
    }
    let n = cube.pixels();
    let data = cube.data();
    let chunks = n.div_ceil(PROJECTION_CHUNK);
    let blocks = par::map_range(chunks, |c| {
        let start = c * PROJECTION_CHUNK;
        let len = PROJECTION_CHUNK.min(n - start);
        let x = DMatrix::from_fn(p, len, |b, j| data[b * n + start + j]);
        model.project_columns(&x)
    });
    let d = model.output_dim();
    let mut features = DMatrix::zeros(d, n);
    for (c, block) in blocks.into_iter().enumerate() {
        let block = block?;
        features
            .columns_mut(c * PROJECTION_CHUNK, block.ncols())
            .copy_from(&block);
    }
    Ok(FeatureStack::new(cube.rows(), cube.cols(), features))
}

#[cfg(test)]
mod tests;
