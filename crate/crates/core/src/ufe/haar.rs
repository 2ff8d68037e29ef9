//! Orthonormal multilevel 2-D Haar transform and symmetric-extension padding.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn haar1d_forward(x: &mut [f64], tmp: &mut Vec<f64>) {
    let mut len = x.len();
    tmp.resize(x.len(), 0.0);
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            tmp[i] = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
            tmp[half + i] = (a - b) * std::f64::consts::FRAC_1_SQRT_2;
        }
        x[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
}

fn haar1d_inverse(x: &mut [f64], tmp: &mut Vec<f64>) {
    let n = x.len();
    tmp.resize(n, 0.0);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for i in 0..half {
            let (s, d) = (x[i], x[half + i]);
            tmp[2 * i] = (s + d) * std::f64::consts::FRAC_1_SQRT_2;
            tmp[2 * i + 1] = (s - d) * std::f64::consts::FRAC_1_SQRT_2;
        }
        x[..len].copy_from_slice(&tmp[..len]);
        len *= 2;
    }
}

fn apply_2d(data: &mut [f64], rows: usize, cols: usize, f: fn(&mut [f64], &mut Vec<f64>)) {
    let mut tmp = Vec::new();
    for r in 0..rows {
        f(&mut data[r * cols..(r + 1) * cols], &mut tmp);
    }
    let mut col = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[r * cols + c];
        }
        f(&mut col, &mut tmp);
        for r in 0..rows {
            data[r * cols + c] = col[r];
        }
    }
}

/// In-place forward transform of a row-major `rows × cols` image.
pub(crate) fn forward_in_place(data: &mut [f64], rows: usize, cols: usize) {
    apply_2d(data, rows, cols, haar1d_forward);
}

pub(crate) fn inverse_in_place(data: &mut [f64], rows: usize, cols: usize) {
    apply_2d(data, rows, cols, haar1d_inverse);
}

fn check_pow2(img: &DMatrix<f64>) -> Result<()> {
    let (r, c) = img.shape();
    if !r.is_power_of_two() || !c.is_power_of_two() {
        return Err(Error::invalid(format!(
            "Haar transform needs power-of-two sides, got {r}×{c}"
        )));
    }
    Ok(())
}

/// Forward orthonormal 2-D Haar transform (full depth along each axis).
pub fn haar2d_forward(img: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_pow2(img)?;
    let (r, c) = img.shape();
    let mut data = img.transpose().as_slice().to_vec();
    forward_in_place(&mut data, r, c);
    Ok(DMatrix::from_row_slice(r, c, &data))
}

/// Inverse of [`haar2d_forward`].
pub fn haar2d_inverse(coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_pow2(coeffs)?;
    let (r, c) = coeffs.shape();
    let mut data = coeffs.transpose().as_slice().to_vec();
    inverse_in_place(&mut data, r, c);
    Ok(DMatrix::from_row_slice(r, c, &data))
}

/// Half-sample symmetric index into `0..n` for any `i ≥ 0`.
fn mirror(i: usize, n: usize) -> usize {
    let m = i % (2 * n);
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Pads a row-major image to `(rows2, cols2)` by symmetric extension.
pub(crate) fn pad_symmetric(
    data: &[f64],
    rows: usize,
    cols: usize,
    rows2: usize,
    cols2: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows2 * cols2);
    for r in 0..rows2 {
        let sr = mirror(r, rows);
        for c in 0..cols2 {
            out.push(data[sr * cols + mirror(c, cols)]);
        }
    }
    out
}

pub(crate) fn crop(data: &[f64], cols2: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        out.extend_from_slice(&data[r * cols2..r * cols2 + cols]);
    }
    out
}
