//! Unsupervised feature extraction.
//!
//! Linear transforms ([`pca`], [`mnf`]), graph/manifold methods
//! ([`lpp`], [`lle_embed`]) and the low-rank reconstruction solvers
//! ([`otvca`], [`wsrrr`], [`sslra`]) that alternate between a penalized
//! feature update and an orthogonal Procrustes basis update.

mod haar;
mod lowrank;
mod manifold;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsio::HsiCube;
use crate::linalg;

pub use haar::{haar2d_forward, haar2d_inverse};
pub use lowrank::{otvca, sslra, wsrrr, SolverConfig};
pub use manifold::{lle_embed, lle_linear, lpp, LppParams};

/// Feature extraction method identifiers, as used in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    #[default]
    Raw,
    Pca,
    Mnf,
    Lpp,
    Lle,
    Otvca,
    Wsrrr,
    Sslra,
    Lda,
    Rlda,
    Lfda,
    Fsda,
    Sgda,
    Cgda,
    Jplay,
}

impl MethodKind {
    pub const ALL: [MethodKind; 15] = [
        MethodKind::Raw,
        MethodKind::Pca,
        MethodKind::Mnf,
        MethodKind::Lpp,
        MethodKind::Lle,
        MethodKind::Otvca,
        MethodKind::Wsrrr,
        MethodKind::Sslra,
        MethodKind::Lda,
        MethodKind::Rlda,
        MethodKind::Lfda,
        MethodKind::Fsda,
        MethodKind::Sgda,
        MethodKind::Cgda,
        MethodKind::Jplay,
    ];

    pub fn id(self) -> &'static str {
        match self {
            MethodKind::Raw => "raw",
            MethodKind::Pca => "pca",
            MethodKind::Mnf => "mnf",
            MethodKind::Lpp => "lpp",
            MethodKind::Lle => "lle",
            MethodKind::Otvca => "otvca",
            MethodKind::Wsrrr => "wsrrr",
            MethodKind::Sslra => "sslra",
            MethodKind::Lda => "lda",
            MethodKind::Rlda => "rlda",
            MethodKind::Lfda => "lfda",
            MethodKind::Fsda => "fsda",
            MethodKind::Sgda => "sgda",
            MethodKind::Cgda => "cgda",
            MethodKind::Jplay => "jplay",
        }
    }

    /// Bases of these kinds are column-orthonormal.
    pub fn is_orthogonal(self) -> bool {
        matches!(
            self,
            MethodKind::Pca | MethodKind::Otvca | MethodKind::Wsrrr | MethodKind::Sslra
        )
    }

    pub fn is_supervised(self) -> bool {
        matches!(
            self,
            MethodKind::Lda
                | MethodKind::Rlda
                | MethodKind::Lfda
                | MethodKind::Fsda
                | MethodKind::Sgda
                | MethodKind::Cgda
                | MethodKind::Jplay
        )
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        MethodKind::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

/// A learned linear map `z = basisᵀ (x − mean)` from `p` bands to `d` features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub kind: MethodKind,
    pub basis: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Eigenvalues (or generalized eigenvalues) paired with the basis
    /// columns, when the method produces them.
    pub eigenvalues: Vec<f64>,
}

impl ProjectionModel {
    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Projects the columns of a `p × n` matrix.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        let centered = center_with(x, &self.mean);
        Ok(self.basis.transpose() * centered)
    }

    /// `max |VᵀV − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let d = self.output_dim();
        (self.basis.transpose() * &self.basis - DMatrix::identity(d, d)).amax()
    }
}

/// `d` feature images of an `rows × cols` scene, one row of `features` each.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub rows: usize,
    pub cols: usize,
    pub features: DMatrix<f64>,
    /// Sparse component, for solvers that separate one.
    pub sparse: Option<DMatrix<f64>>,
}

impl FeatureStack {
    pub fn new(rows: usize, cols: usize, features: DMatrix<f64>) -> Self {
        Self {
            rows,
            cols,
            features,
            sparse: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn image(&self, j: usize) -> DMatrix<f64> {
        let row: Vec<f64> = self.features.row(j).iter().copied().collect();
        DMatrix::from_row_slice(self.rows, self.cols, &row)
    }

    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|v| v.is_finite())
    }
}

/// Output of a fitted extractor.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub model: ProjectionModel,
    pub features: FeatureStack,
    /// Objective per outer iteration for iterative solvers (empty otherwise).
    pub objective_trace: Vec<f64>,
}

pub(crate) fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.ncols().max(1) as f64;
    DVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.sum() / n))
}

pub(crate) fn center_with(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

pub(crate) fn covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let n = centered.ncols() as f64;
    let c = centered * centered.transpose() / n;
    (&c + c.transpose()) * 0.5
}

fn check_d(d: usize, p: usize) -> Result<()> {
    if d == 0 || d > p {
        return Err(Error::invalid(format!(
            "feature dimension d = {d} must lie in 1..={p}"
        )));
    }
    Ok(())
}

/// Principal components of the band covariance `(1/n) X_c X_cᵀ`.
pub fn pca(cube: &HsiCube, d: usize) -> Result<Extraction> {
    check_d(d, cube.bands())?;
    let x = cube.matrix();
    let mean = column_mean(&x);
    let xc = center_with(&x, &mean);
    let eig = linalg::sym_eig(&covariance(&xc), d)?;
    let features = eig.vectors.transpose() * &xc;
    Ok(Extraction {
        model: ProjectionModel {
            kind: MethodKind::Pca,
            basis: eig.vectors,
            mean,
            eigenvalues: eig.values,
        },
        features: FeatureStack::new(cube.rows(), cube.cols(), features),
        objective_trace: Vec::new(),
    })
}

/// Shift-difference noise covariance from horizontally adjacent pixels:
/// `C_n = (1/2n') Σ (x_i − x_j)(x_i − x_j)ᵀ`.
pub fn estimate_noise_cov(cube: &HsiCube) -> Result<DMatrix<f64>> {
    if cube.cols() < 2 {
        return Err(Error::invalid(
            "noise estimation needs at least two columns of pixels",
        ));
    }
    let (p, r, c) = (cube.bands(), cube.rows(), cube.cols());
    let pairs = r * (c - 1);
    let mut diff = DMatrix::zeros(p, pairs);
    for b in 0..p {
        let band = cube.band(b);
        let mut k = 0;
        for i in 0..r {
            for j in 0..c - 1 {
                diff[(b, k)] = band[i * c + j + 1] - band[i * c + j];
                k += 1;
            }
        }
    }
    let cn = &diff * diff.transpose() / (2.0 * pairs as f64);
    Ok((&cn + cn.transpose()) * 0.5)
}

/// Maximum noise fraction: generalized eigenvectors of `(C, C_n)`. When
/// `noise_cov` is `None` it is estimated with [`estimate_noise_cov`].
pub fn mnf(cube: &HsiCube, d: usize, noise_cov: Option<&DMatrix<f64>>) -> Result<Extraction> {
    let p = cube.bands();
    check_d(d, p)?;
    let mut cn = match noise_cov {
        Some(c) if c.shape() != (p, p) => {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: c.nrows(),
            })
        }
        Some(c) => c.clone(),
        None => estimate_noise_cov(cube)?,
    };
    let ridge = 1e-8 * cn.trace() / p as f64;
    for i in 0..p {
        cn[(i, i)] += ridge;
    }
    let x = cube.matrix();
    let mean = column_mean(&x);
    let xc = center_with(&x, &mean);
    let eig = linalg::gen_eig(&covariance(&xc), &cn, d)?;
    let features = eig.vectors.transpose() * &xc;
    Ok(Extraction {
        model: ProjectionModel {
            kind: MethodKind::Mnf,
            basis: eig.vectors,
            mean,
            eigenvalues: eig.values,
        },
        features: FeatureStack::new(cube.rows(), cube.cols(), features),
        objective_trace: Vec::new(),
    })
}

/// Largest principal angle (radians) between the column spaces of `a` and `b`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let s = (qa.transpose() * qb).singular_values();
    let smin = s
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 1.0);
    // acos is ill-conditioned near 1; use the sine form instead.
    (1.0 - smin * smin).max(0.0).sqrt().asin()
}
