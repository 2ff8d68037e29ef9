//! Synthetic labeled scenes: Voronoi class layout, smooth class spectra,
//! optional smooth illumination gain and Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsio::{HsiCube, LabelRaster};

/// Noise level, either absolute or as a per-band signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Standard deviation shared by all bands.
    Sigma(f64),
    /// Band `b` gets `σ_b² = mean(signal_b²) / 10^(snr/10)`.
    SnrDb(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub classes: usize,
    /// Number of Voronoi seeds; each class owns at least one cell.
    pub cells: usize,
    pub noise: Noise,
    /// Amplitude of the smooth multiplicative gain field (0 disables it).
    pub gain: f64,
    /// Amplitude of the class-specific deviation from the shared spectrum.
    pub contrast: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 128,
            bands: 32,
            classes: 8,
            cells: 32,
            noise: Noise::SnrDb(15.0),
            gain: 0.0,
            contrast: 0.12,
        }
    }
}

/// Smallest allowed angle between two class signatures.
pub const MIN_SIGNATURE_ANGLE_DEG: f64 = 5.0;
pub const MAX_CLASSES: usize = 16;
const SIGNATURE_RESTARTS: usize = 100;
const SIGNATURE_ATTEMPTS: usize = 500;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.bands < 2 {
            return Err(Error::invalid(format!(
                "synthetic cube needs rows, cols ≥ 1 and bands ≥ 2 (got {}×{}×{})",
                self.rows, self.cols, self.bands
            )));
        }
        if self.classes == 0 || self.classes > MAX_CLASSES {
            return Err(Error::invalid(format!(
                "synthetic classes must lie in 1..={MAX_CLASSES}, got {}",
                self.classes
            )));
        }
        if self.cells < self.classes || self.cells > self.rows * self.cols {
            return Err(Error::invalid(format!(
                "cells = {} must lie in {}..={}",
                self.cells,
                self.classes,
                self.rows * self.cols
            )));
        }
        let noise_ok = match self.noise {
            Noise::Sigma(s) => s >= 0.0 && s.is_finite(),
            Noise::SnrDb(db) => db.is_finite(),
        };
        if !noise_ok {
            return Err(Error::invalid(format!(
                "invalid noise setting {:?}",
                self.noise
            )));
        }
        if !(self.gain >= 0.0 && self.gain < 1.0) {
            return Err(Error::invalid(format!(
                "gain amplitude must lie in [0, 1), got {}",
                self.gain
            )));
        }
        if !(self.contrast > 0.0) || !self.contrast.is_finite() {
            return Err(Error::invalid(format!(
                "contrast must be positive, got {}",
                self.contrast
            )));
        }
        Ok(())
    }
}

/// A generated scene with the ingredients used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cube: HsiCube,
    pub labels: LabelRaster,
    /// Class signatures, `signatures[c]` for class `c + 1`.
    pub signatures: Vec<Vec<f64>>,
    /// Per-band noise standard deviation actually used.
    pub sigma: Vec<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn bumps(rng: &mut ChaCha8Rng, p: usize, count: usize, amp: f64) -> Vec<f64> {
    let params: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0) * amp,
                rng.random_range(0.0..1.0),
                rng.random_range(0.05..0.25),
            )
        })
        .collect();
    (0..p)
        .map(|b| {
            let t = b as f64 / (p - 1) as f64;
            params
                .iter()
                .map(|&(a, c, w)| a * (-(t - c) * (t - c) / (2.0 * w * w)).exp())
                .sum()
        })
        .collect()
}

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Smooth positive class spectra sharing a common shape, each at least
/// [`MIN_SIGNATURE_ANGLE_DEG`] away from the others.
pub fn gen_signatures(
    p: usize,
    k: usize,
    contrast: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    // Greedy rejection can paint itself into a corner, so a stalled draw
    // starts over with a fresh shared curve rather than giving up.
    for _ in 0..SIGNATURE_RESTARTS {
        let shared: Vec<f64> = bumps(rng, p, 4, 0.25)
            .into_iter()
            .enumerate()
            .map(|(b, v)| 0.45 + 0.2 * (b as f64 / (p - 1) as f64) + v)
            .collect();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut attempts = 0;
        while out.len() < k && attempts < SIGNATURE_ATTEMPTS {
            attempts += 1;
            let dev = bumps(rng, p, 3, contrast);
            let sig: Vec<f64> = shared
                .iter()
                .zip(&dev)
                .map(|(s, d)| (s + d).max(0.02))
                .collect();
            if out
                .iter()
                .all(|o| angle_deg(o, &sig) >= MIN_SIGNATURE_ANGLE_DEG)
            {
                out.push(sig);
            }
        }
        if out.len() == k {
            return Ok(out);
        }
    }
    Err(Error::invalid(format!(
        "could not draw {k} signatures {MIN_SIGNATURE_ANGLE_DEG}° apart; raise contrast"
    )))
}

/// Voronoi class map: `cells` random seeds, classes dealt to seeds so that
/// every class owns at least one cell.
fn voronoi_layout(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let seeds: Vec<(f64, f64)> = (0..spec.cells)
        .map(|_| {
            (
                rng.random_range(0.0..spec.rows as f64),
                rng.random_range(0.0..spec.cols as f64),
            )
        })
        .collect();
    let mut classes: Vec<u32> = (0..spec.cells)
        .map(|i| (i % spec.classes) as u32 + 1)
        .collect();
    for i in (1..classes.len()).rev() {
        classes.swap(i, rng.random_range(0..=i));
    }
    let mut labels = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let mut best = (f64::INFINITY, 0);
            for (s, &(sy, sx)) in seeds.iter().enumerate() {
                let d = (y - sy) * (y - sy) + (x - sx) * (x - sx);
                if d < best.0 {
                    best = (d, s);
                }
            }
            labels.push(classes[best.1]);
        }
    }
    labels
}

/// `1 + amp · s(r, c)` with `s` a smooth random field in `[−1, 1]`.
fn gain_field(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = spec.rows * spec.cols;
    if spec.gain == 0.0 {
        return vec![1.0; n];
    }
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..n)
        .map(|i| {
            let (r, c) = ((i / spec.cols) as f64, (i % spec.cols) as f64);
            let s: f64 = waves
                .iter()
                .map(|&(fy, fx, ph)| {
                    (std::f64::consts::TAU
                        * (fy * r / spec.rows as f64 + fx * c / spec.cols as f64)
                        + ph)
                        .cos()
                })
                .sum::<f64>()
                / waves.len() as f64;
            1.0 + spec.gain * s
        })
        .collect()
}

/// Generates `cube = signature(class(pixel)) · gain(pixel) + N(0, σ_b²)`.
/// The output is a pure function of `(spec, seed)`.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let (p, n) = (spec.bands, spec.rows * spec.cols);
    let signatures = gen_signatures(p, spec.classes, spec.contrast, &mut stream(seed, 0))?;
    let labels = voronoi_layout(spec, &mut stream(seed, 1));
    let gain = gain_field(spec, &mut stream(seed, 2));
    let mut data = vec![0.0; p * n];
    for b in 0..p {
        for i in 0..n {
            data[b * n + i] = signatures[labels[i] as usize - 1][b] * gain[i];
        }
    }
    let sigma: Vec<f64> = (0..p)
        .map(|b| match spec.noise {
            Noise::Sigma(s) => s,
            Noise::SnrDb(db) => {
                let power = data[b * n..(b + 1) * n].iter().map(|v| v * v).sum::<f64>() / n as f64;
                (power / 10f64.powf(db / 10.0)).sqrt()
            }
        })
        .collect();
    let mut rng = stream(seed, 3);
    for b in 0..p {
        if sigma[b] > 0.0 {
            let nd = Normal::new(0.0, sigma[b]).map_err(|e| Error::invalid(e.to_string()))?;
            for v in &mut data[b * n..(b + 1) * n] {
                *v += nd.sample(&mut rng);
            }
        }
    }
    let cube = HsiCube::new(p, spec.rows, spec.cols, data, None)?;
    let labels = LabelRaster::new(spec.rows, spec.cols, labels)?;
    Ok(SyntheticScene {
        cube,
        labels,
        signatures,
        sigma,
    })
}
