//! Cube and label raster I/O, class-map rendering and accuracy reports.
//!
//! Cubes are read from ENVI header + raw binary pairs (BSQ, BIL or BIP;
//! 32-bit float or 16-bit unsigned) and always held in memory band-sequential
//! as `f64`. Writing produces little-endian float32 BSQ.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HsioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("ENVI header is missing key `{0}`")]
    MissingKey(String),
    #[error("unsupported {what}: {value}")]
    Unsupported { what: &'static str, value: String },
    #[error("raw payload size mismatch: header implies {expected} bytes, file has {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("non-finite value at band {band}, pixel {pixel}")]
    NonFinite { band: usize, pixel: usize },
    #[error("negative label {value} at row {row}, col {col}")]
    NegativeLabel { row: usize, col: usize, value: i64 },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("label {label} exceeds palette of {palette} colors")]
    LabelExceedsPalette { label: u32, palette: usize },
    #[error("label raster has no labeled pixels")]
    NoLabeledPixels,
    #[error("evaluation mask is empty")]
    EmptyMask,
    #[error("mask pixel {0} is unlabeled in the reference raster")]
    UnlabeledMaskPixel(usize),
    #[error("predicted label 0 at masked pixel {0}")]
    UnlabeledPrediction(usize),
}

fn io_err(path: &Path, source: std::io::Error) -> HsioError {
    HsioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A `p`-band image of `rows × cols` pixels stored band-sequential.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    bands: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    wavelengths: Option<Vec<f64>>,
}

impl HsiCube {
    pub fn new(
        bands: usize,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        wavelengths: Option<Vec<f64>>,
    ) -> Result<Self, HsioError> {
        if bands == 0 || rows == 0 || cols == 0 {
            return Err(HsioError::InvalidCube(format!(
                "dimensions must be positive (bands={bands}, rows={rows}, cols={cols})"
            )));
        }
        if data.len() != bands * rows * cols {
            return Err(HsioError::InvalidCube(format!(
                "data length {} != {}·{}·{}",
                data.len(),
                bands,
                rows,
                cols
            )));
        }
        if let Some(w) = &wavelengths {
            if w.len() != bands {
                return Err(HsioError::InvalidCube(format!(
                    "{} wavelengths for {} bands",
                    w.len(),
                    bands
                )));
            }
        }
        let n = rows * cols;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(HsioError::NonFinite {
                band: pos / n,
                pixel: pos % n,
            });
        }
        Ok(Self {
            bands,
            rows,
            cols,
            data,
            wavelengths,
        })
    }

    /// Builds a cube from a `bands × (rows·cols)` matrix (one column per pixel).
    pub fn from_matrix(rows: usize, cols: usize, x: &DMatrix<f64>) -> Result<Self, HsioError> {
        if x.ncols() != rows * cols {
            return Err(HsioError::InvalidCube(format!(
                "matrix has {} columns for a {rows}×{cols} image",
                x.ncols()
            )));
        }
        // Row-major flattening of a p×n matrix is exactly BSQ.
        let data: Vec<f64> = x.transpose().as_slice().to_vec();
        Self::new(x.nrows(), rows, cols, data, None)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    pub fn band(&self, b: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    /// The observation matrix `X ∈ R^{p×n}`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.bands, self.pixels(), &self.data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Interleave {
    Bsq,
    Bil,
    Bip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DataType {
    F32,
    U16,
}

impl DataType {
    fn size(self) -> usize {
        match self {
            DataType::F32 => 4,
            DataType::U16 => 2,
        }
    }
}

struct EnviHeader {
    samples: usize,
    lines: usize,
    bands: usize,
    offset: usize,
    dtype: DataType,
    interleave: Interleave,
    big_endian: bool,
    wavelengths: Option<Vec<f64>>,
    data_file: Option<String>,
}

fn parse_header_fields(text: &str) -> HashMap<String, String> {
    let mut fields = HashMap::new();
    let mut lines = text.lines();
    let mut pending: Option<(String, String)> = None;
    for line in lines.by_ref() {
        if let Some((key, mut value)) = pending.take() {
            value.push(' ');
            value.push_str(line.trim());
            if line.contains('}') {
                fields.insert(key, value);
            } else {
                pending = Some((key, value));
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let key = k
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        let value = v.trim().to_string();
        if value.starts_with('{') && !value.contains('}') {
            pending = Some((key, value));
        } else {
            fields.insert(key, value);
        }
    }
    if let Some((key, value)) = pending {
        fields.insert(key, value);
    }
    fields
}

fn required_usize(fields: &HashMap<String, String>, key: &str) -> Result<usize, HsioError> {
    let raw = fields
        .get(key)
        .ok_or_else(|| HsioError::MissingKey(key.to_string()))?;
    raw.trim()
        .parse()
        .map_err(|_| HsioError::Parse(format!("`{key}` = `{raw}` is not a count")))
}

fn parse_envi_header(text: &str) -> Result<EnviHeader, HsioError> {
    let fields = parse_header_fields(text);
    let samples = required_usize(&fields, "samples")?;
    let lines = required_usize(&fields, "lines")?;
    let bands = required_usize(&fields, "bands")?;
    let dtype = match required_usize(&fields, "data type")? {
        4 => DataType::F32,
        12 => DataType::U16,
        other => {
            return Err(HsioError::Unsupported {
                what: "data type",
                value: other.to_string(),
            })
        }
    };
    let interleave = match fields.get("interleave").map(|s| s.trim().to_lowercase()) {
        None => Interleave::Bsq,
        Some(s) if s == "bsq" => Interleave::Bsq,
        Some(s) if s == "bil" => Interleave::Bil,
        Some(s) if s == "bip" => Interleave::Bip,
        Some(s) => {
            return Err(HsioError::Unsupported {
                what: "interleave",
                value: s,
            })
        }
    };
    let big_endian = match fields.get("byte order").map(|s| s.trim()) {
        None | Some("0") => false,
        Some("1") => true,
        Some(s) => {
            return Err(HsioError::Unsupported {
                what: "byte order",
                value: s.to_string(),
            })
        }
    };
    let offset = match fields.get("header offset") {
        Some(_) => required_usize(&fields, "header offset")?,
        None => 0,
    };
    let wavelengths = match fields.get("wavelength") {
        Some(raw) => {
            let inner = raw.trim().trim_start_matches('{').trim_end_matches('}');
            let values: Result<Vec<f64>, _> = inner
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            let values = values.map_err(|e| HsioError::Parse(format!("wavelength list: {e}")))?;
            if values.len() != bands {
                return Err(HsioError::Parse(format!(
                    "{} wavelengths for {} bands",
                    values.len(),
                    bands
                )));
            }
            Some(values)
        }
        None => None,
    };
    Ok(EnviHeader {
        samples,
        lines,
        bands,
        offset,
        dtype,
        interleave,
        big_endian,
        wavelengths,
        data_file: fields.get("data file").map(|s| s.trim().to_string()),
    })
}

fn find_raw_file(header_path: &Path, data_file: Option<&str>) -> Result<PathBuf, HsioError> {
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    if let Some(name) = data_file {
        return Ok(dir.join(name));
    }
    let stem = header_path.with_extension("");
    let mut candidates = vec![stem.clone()];
    for ext in ["raw", "img", "bsq", "dat", "bil", "bip"] {
        candidates.push(stem.with_extension(ext));
    }
    candidates
        .into_iter()
        .find(|c| c.is_file() && c != header_path)
        .ok_or_else(|| {
            io_err(
                header_path,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "no raw data file next to header",
                ),
            )
        })
}

fn decode_samples(bytes: &[u8], dtype: DataType, big_endian: bool) -> Vec<f64> {
    match dtype {
        DataType::F32 => bytes
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                f64::from(if big_endian {
                    f32::from_be_bytes(b)
                } else {
                    f32::from_le_bytes(b)
                })
            })
            .collect(),
        DataType::U16 => bytes
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                f64::from(if big_endian {
                    u16::from_be_bytes(b)
                } else {
                    u16::from_le_bytes(b)
                })
            })
            .collect(),
    }
}

fn read_envi(header_path: &Path) -> Result<(EnviHeader, Vec<f64>), HsioError> {
    let text = fs::read_to_string(header_path).map_err(|e| io_err(header_path, e))?;
    let header = parse_envi_header(&text)?;
    let raw_path = find_raw_file(header_path, header.data_file.as_deref())?;
    let bytes = fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let count = header.samples * header.lines * header.bands;
    let expected = header.offset + count * header.dtype.size();
    if bytes.len() != expected {
        return Err(HsioError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let raw = decode_samples(&bytes[header.offset..], header.dtype, header.big_endian);
    let (p, r, c) = (header.bands, header.lines, header.samples);
    let n = r * c;
    let data = match header.interleave {
        Interleave::Bsq => raw,
        Interleave::Bil => {
            let mut out = vec![0.0; count];
            for line in 0..r {
                for b in 0..p {
                    let src = (line * p + b) * c;
                    let dst = b * n + line * c;
                    out[dst..dst + c].copy_from_slice(&raw[src..src + c]);
                }
            }
            out
        }
        Interleave::Bip => {
            let mut out = vec![0.0; count];
            for px in 0..n {
                for b in 0..p {
                    out[b * n + px] = raw[px * p + b];
                }
            }
            out
        }
    };
    Ok((header, data))
}

/// Reads an ENVI cube given the path of its `.hdr` file.
pub fn load_cube(header_path: impl AsRef<Path>) -> Result<HsiCube, HsioError> {
    let (header, data) = read_envi(header_path.as_ref())?;
    HsiCube::new(
        header.bands,
        header.lines,
        header.samples,
        data,
        header.wavelengths,
    )
}

/// Path of the raw payload written next to `header_path` by [`write_cube`].
pub fn raw_path_for(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

/// Writes `cube` as little-endian float32 BSQ: the header at `header_path`,
/// the payload beside it with a `.raw` extension.
pub fn write_cube(cube: &HsiCube, header_path: impl AsRef<Path>) -> Result<(), HsioError> {
    let header_path = header_path.as_ref();
    let mut header = String::from("ENVI\n");
    let _ = writeln!(header, "description = {{hyfe cube}}");
    let _ = writeln!(header, "samples = {}", cube.cols);
    let _ = writeln!(header, "lines = {}", cube.rows);
    let _ = writeln!(header, "bands = {}", cube.bands);
    let _ = writeln!(header, "header offset = 0");
    let _ = writeln!(header, "file type = ENVI Standard");
    let _ = writeln!(header, "data type = 4");
    let _ = writeln!(header, "interleave = bsq");
    let _ = writeln!(header, "byte order = 0");
    if let Some(w) = &cube.wavelengths {
        let list: Vec<String> = w.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(header, "wavelength = {{{}}}", list.join(", "));
    }
    fs::write(header_path, header).map_err(|e| io_err(header_path, e))?;
    let raw_path = raw_path_for(header_path);
    let mut bytes = Vec::with_capacity(cube.data.len() * 4);
    for &v in &cube.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| io_err(&raw_path, e))
}

/// Integer class labels over an image grid; 0 marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    rows: usize,
    cols: usize,
    labels: Vec<u32>,
    k: usize,
}

impl LabelRaster {
    pub fn new(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self, HsioError> {
        if labels.len() != rows * cols {
            return Err(HsioError::ShapeMismatch {
                expected: (rows, cols),
                got: (labels.len() / cols.max(1), cols),
            });
        }
        let k = labels.iter().copied().max().unwrap_or(0) as usize;
        Ok(Self {
            rows,
            cols,
            labels,
            k,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    /// Largest class id present.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Errors with [`HsioError::NoLabeledPixels`] if every pixel is 0.
    pub fn require_labeled(&self) -> Result<(), HsioError> {
        if self.k == 0 {
            Err(HsioError::NoLabeledPixels)
        } else {
            Ok(())
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.labels.len() * 3);
        for row in self.labels.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_shape(raster: &LabelRaster, expected: Option<(usize, usize)>) -> Result<(), HsioError> {
    match expected {
        Some(shape) if shape != raster.shape() => Err(HsioError::ShapeMismatch {
            expected: shape,
            got: raster.shape(),
        }),
        _ => Ok(()),
    }
}

fn parse_label_csv(text: &str) -> Result<LabelRaster, HsioError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut labels = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HsioError::Parse(format!("label csv: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(HsioError::Parse(format!(
                    "row {row} has {} entries, expected {c}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let value: i64 = field
                .parse()
                .map_err(|_| HsioError::Parse(format!("`{field}` at ({row},{col})")))?;
            if value < 0 {
                return Err(HsioError::NegativeLabel { row, col, value });
            }
            let value = u32::try_from(value)
                .map_err(|_| HsioError::Parse(format!("label {value} out of range")))?;
            labels.push(value);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| HsioError::Parse("empty label grid".into()))?;
    LabelRaster::new(rows, cols, labels)
}

/// Reads a label grid from CSV, or from a single-band ENVI raster of data
/// type 12 when `path` ends in `.hdr`.
pub fn load_labels(
    path: impl AsRef<Path>,
    expected_shape: Option<(usize, usize)>,
) -> Result<LabelRaster, HsioError> {
    let path = path.as_ref();
    let is_header = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("hdr"));
    let raster = if is_header {
        let (header, data) = read_envi(path)?;
        if header.bands != 1 || header.dtype != DataType::U16 {
            return Err(HsioError::Unsupported {
                what: "label raster",
                value: format!("{} bands, {:?}", header.bands, header.dtype),
            });
        }
        LabelRaster::new(
            header.lines,
            header.samples,
            data.into_iter().map(|v| v as u32).collect(),
        )?
    } else {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        parse_label_csv(&text)?
    };
    check_shape(&raster, expected_shape)?;
    Ok(raster)
}

pub fn save_labels_csv(raster: &LabelRaster, path: impl AsRef<Path>) -> Result<(), HsioError> {
    let path = path.as_ref();
    fs::write(path, raster.to_csv()).map_err(|e| io_err(path, e))
}

pub type Rgb = [u8; 3];

/// A fixed, well-separated palette; entry `i` colors class `i + 1`.
pub fn default_palette(k: usize) -> Vec<Rgb> {
    const BASE: [Rgb; 16] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 212],
        [0, 128, 128],
        [220, 190, 255],
        [170, 110, 40],
        [255, 250, 200],
        [128, 0, 0],
        [170, 255, 195],
    ];
    (0..k)
        .map(|i| {
            let base = BASE[i % BASE.len()];
            let dim = (i / BASE.len()) as u8;
            base.map(|c| c.saturating_sub(dim.saturating_mul(40)))
        })
        .collect()
}

/// Renders a class map as binary PPM (P6). Label 0 is black.
pub fn encode_ppm(pred: &LabelRaster, palette: &[Rgb]) -> Result<Vec<u8>, HsioError> {
    let mut out = format!("P6\n{} {}\n255\n", pred.cols, pred.rows).into_bytes();
    out.reserve(pred.labels.len() * 3);
    for &label in &pred.labels {
        let rgb = match label {
            0 => [0, 0, 0],
            l => *palette
                .get(l as usize - 1)
                .ok_or(HsioError::LabelExceedsPalette {
                    label: l,
                    palette: palette.len(),
                })?,
        };
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

pub fn save_classmap(
    pred: &LabelRaster,
    palette: &[Rgb],
    path: impl AsRef<Path>,
) -> Result<(), HsioError> {
    let path = path.as_ref();
    let bytes = encode_ppm(pred, palette)?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Parses a P6 image written by [`encode_ppm`]; returns `(rows, cols, pixels)`.
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<Rgb>), HsioError> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(HsioError::Parse("truncated PPM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(HsioError::Parse(format!(
            "unsupported PPM `{}` maxval {}",
            fields[0], fields[3]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| HsioError::Parse(format!("PPM dimension `{s}`")))
    };
    let cols = parse(&fields[1])?;
    let rows = parse(&fields[2])?;
    let payload = bytes.get(pos..).unwrap_or_default();
    if payload.len() != rows * cols * 3 {
        return Err(HsioError::SizeMismatch {
            expected: rows * cols * 3,
            actual: payload.len(),
        });
    }
    let pixels = payload
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok((rows, cols, pixels))
}

/// Confusion-matrix summary of a classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// `confusion[reference - 1][predicted - 1]`.
    pub confusion: Vec<Vec<u64>>,
    /// Producer's accuracy per class; `None` when the class is absent from
    /// the evaluated pixels.
    pub per_class: Vec<Option<f64>>,
    pub aa: f64,
    pub oa: f64,
    pub kappa: f64,
}

impl EvalReport {
    /// Derives all metrics from a square confusion matrix.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self, HsioError> {
        let k = confusion.len();
        if confusion.iter().any(|row| row.len() != k) {
            return Err(HsioError::Parse("confusion matrix is not square".into()));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(HsioError::EmptyMask);
        }
        let rowsum: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let colsum: Vec<u64> = (0..k)
            .map(|j| confusion.iter().map(|r| r[j]).sum())
            .collect();
        let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let per_class: Vec<Option<f64>> = (0..k)
            .map(|i| (rowsum[i] > 0).then(|| confusion[i][i] as f64 / rowsum[i] as f64))
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let aa = present.iter().sum::<f64>() / present.len() as f64;
        let t = total as f64;
        let oa = correct as f64 / t;
        let pe = (0..k)
            .map(|i| rowsum[i] as f64 * colsum[i] as f64)
            .sum::<f64>()
            / (t * t);
        let kappa = if (1.0 - pe).abs() < f64::EPSILON {
            if correct == total {
                1.0
            } else {
                0.0
            }
        } else {
            (oa - pe) / (1.0 - pe)
        };
        Ok(Self {
            confusion,
            per_class,
            aa,
            oa,
            kappa,
        })
    }

    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    /// `class,accuracy` rows followed by `AA`, `OA` and `kappa` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,accuracy\n");
        for (i, acc) in self.per_class.iter().enumerate() {
            match acc {
                Some(a) => {
                    let _ = writeln!(out, "{},{a:.6}", i + 1);
                }
                None => {
                    let _ = writeln!(out, "{},NA", i + 1);
                }
            }
        }
        let _ = writeln!(out, "AA,{:.6}", self.aa);
        let _ = writeln!(out, "OA,{:.6}", self.oa);
        let _ = writeln!(out, "kappa,{:.6}", self.kappa);
        out
    }
}

/// Scores `predicted` against `reference` over the pixel indices in `mask`.
pub fn evaluate(
    reference: &LabelRaster,
    predicted: &LabelRaster,
    mask: &[usize],
) -> Result<EvalReport, HsioError> {
    if reference.shape() != predicted.shape() {
        return Err(HsioError::ShapeMismatch {
            expected: reference.shape(),
            got: predicted.shape(),
        });
    }
    if mask.is_empty() {
        return Err(HsioError::EmptyMask);
    }
    let k = reference.k.max(predicted.k);
    let mut confusion = vec![vec![0u64; k]; k];
    for &px in mask {
        let truth = *reference
            .labels
            .get(px)
            .ok_or(HsioError::UnlabeledMaskPixel(px))?;
        if truth == 0 {
            return Err(HsioError::UnlabeledMaskPixel(px));
        }
        let guess = predicted.labels[px];
        if guess == 0 {
            return Err(HsioError::UnlabeledPrediction(px));
        }
        confusion[truth as usize - 1][guess as usize - 1] += 1;
    }
    EvalReport::from_confusion(confusion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_envi(dir: &Path, header: &str, raw: &[u8]) -> PathBuf {
        let hdr = dir.join("cube.hdr");
        fs::write(&hdr, header).unwrap();
        fs::write(dir.join("cube.raw"), raw).unwrap();
        hdr
    }

    fn f32_bytes(v: &[f32]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn loads_tiny_float_cube() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = write_envi(
            dir.path(),
            "ENVI\nsamples = 2\nlines = 2\nbands = 1\ndata type = 4\ninterleave = bsq\nbyte order = 0\n",
            &f32_bytes(&[1.0, 2.0, 3.0, 4.0]),
        );
        let cube = load_cube(&hdr).unwrap();
        assert_eq!((cube.bands(), cube.rows(), cube.cols()), (1, 2, 2));
        assert_eq!(cube.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn header_keys_are_case_and_space_tolerant() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = write_envi(
            dir.path(),
            "ENVI\nSamples=1\n  LINES   = 1\nBands = 2\nData   Type = 12\nInterleave = BSQ\nwavelength = {\n 400.5,\n 500 }\n",
            &[7, 0, 9, 0],
        );
        let cube = load_cube(&hdr).unwrap();
        assert_eq!(cube.data(), &[7.0, 9.0]);
        assert_eq!(cube.wavelengths(), Some(&[400.5, 500.0][..]));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = write_envi(
            dir.path(),
            "ENVI\nsamples = 2\nlines = 2\nbands = 3\ndata type = 4\ninterleave = bsq\n",
            &f32_bytes(&[0.0; 11]),
        );
        assert!(matches!(
            load_cube(&hdr),
            Err(HsioError::SizeMismatch {
                expected: 48,
                actual: 44
            })
        ));
    }

    #[test]
    fn missing_key_and_unsupported_type() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = write_envi(
            dir.path(),
            "ENVI\nsamples = 2\nlines = 2\ndata type = 4\n",
            &[],
        );
        assert!(matches!(load_cube(&hdr), Err(HsioError::MissingKey(k)) if k == "bands"));
        let hdr = write_envi(
            dir.path(),
            "ENVI\nsamples = 1\nlines = 1\nbands = 1\ndata type = 5\n",
            &[0; 8],
        );
        assert!(matches!(
            load_cube(&hdr),
            Err(HsioError::Unsupported { .. })
        ));
        let hdr = write_envi(
            dir.path(),
            "ENVI\nsamples = 1\nlines = 1\nbands = 1\ndata type = 4\ninterleave = bxq\n",
            &[0; 4],
        );
        assert!(matches!(
            load_cube(&hdr),
            Err(HsioError::Unsupported { .. })
        ));
    }

    #[test]
    fn bil_and_bip_are_normalized_to_bsq() {
        // 2 bands, 1 line, 2 samples. BSQ target: b0 = [1,2], b1 = [3,4].
        let dir = tempfile::tempdir().unwrap();
        let bil = write_envi(
            dir.path(),
            "ENVI\nsamples = 2\nlines = 1\nbands = 2\ndata type = 4\ninterleave = bil\n",
            &f32_bytes(&[1.0, 2.0, 3.0, 4.0]),
        );
        assert_eq!(load_cube(&bil).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        let bip = write_envi(
            dir.path(),
            "ENVI\nsamples = 2\nlines = 1\nbands = 2\ndata type = 4\ninterleave = bip\n",
            &f32_bytes(&[1.0, 3.0, 2.0, 4.0]),
        );
        assert_eq!(load_cube(&bip).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn nan_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = write_envi(
            dir.path(),
            "ENVI\nsamples = 2\nlines = 1\nbands = 1\ndata type = 4\n",
            &f32_bytes(&[1.0, f32::NAN]),
        );
        assert!(matches!(load_cube(&hdr), Err(HsioError::NonFinite { .. })));
    }

    #[test]
    fn label_csv_examples() {
        let r = parse_label_csv("0,1\n2,2").unwrap();
        assert_eq!(r.k(), 2);
        assert_eq!(r.labeled_count(), 3);

        let zero = parse_label_csv("0,0\n0,0\n").unwrap();
        assert_eq!(zero.k(), 0);
        assert!(matches!(
            zero.require_labeled(),
            Err(HsioError::NoLabeledPixels)
        ));

        assert!(matches!(
            parse_label_csv("0,-1\n1,1"),
            Err(HsioError::NegativeLabel { value: -1, .. })
        ));
    }

    #[test]
    fn label_shape_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "1,2,3\n0,0,1\n").unwrap();
        assert!(load_labels(&p, Some((2, 3))).is_ok());
        assert!(matches!(
            load_labels(&p, Some((3, 2))),
            Err(HsioError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn envi_label_raster() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("gt.hdr");
        fs::write(
            &hdr,
            "ENVI\nsamples = 3\nlines = 1\nbands = 1\ndata type = 12\n",
        )
        .unwrap();
        fs::write(dir.path().join("gt"), [0u8, 0, 2, 0, 1, 0]).unwrap();
        let r = load_labels(&hdr, Some((1, 3))).unwrap();
        assert_eq!(r.labels(), &[0, 2, 1]);
    }

    #[test]
    fn ppm_payload_matches_palette() {
        let r = LabelRaster::new(1, 2, vec![1, 0]).unwrap();
        let bytes = encode_ppm(&r, &[[255, 0, 0]]).unwrap();
        assert_eq!(&bytes[..bytes.len() - 6], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[bytes.len() - 6..], &[0xFF, 0, 0, 0, 0, 0]);

        let bad = LabelRaster::new(1, 1, vec![4]).unwrap();
        assert!(matches!(
            encode_ppm(&bad, &default_palette(3)),
            Err(HsioError::LabelExceedsPalette {
                label: 4,
                palette: 3
            })
        ));
    }

    #[test]
    fn ppm_round_trips_class_colors() {
        let labels: Vec<u32> = (0..30).map(|i| (i * 7 % 4) as u32).collect();
        let r = LabelRaster::new(5, 6, labels.clone()).unwrap();
        let palette = default_palette(3);
        let (rows, cols, px) = decode_ppm(&encode_ppm(&r, &palette).unwrap()).unwrap();
        assert_eq!((rows, cols), (5, 6));
        let mut lut: Vec<Rgb> = vec![[0, 0, 0]];
        lut.extend(palette.iter().copied());
        let decoded: Vec<u32> = px
            .iter()
            .map(|c| lut.iter().position(|p| p == c).unwrap() as u32)
            .collect();
        assert_eq!(decoded, labels);
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let reference = LabelRaster::new(1, 4, vec![1, 1, 2, 2]).unwrap();
        let mask = [0, 1, 2, 3];
        let rep = evaluate(&reference, &reference, &mask).unwrap();
        assert_eq!((rep.oa, rep.aa, rep.kappa), (1.0, 1.0, 1.0));

        let all_one = LabelRaster::new(1, 4, vec![1; 4]).unwrap();
        let rep = evaluate(&reference, &all_one, &mask).unwrap();
        assert_eq!(rep.oa, 0.5);
        assert!(rep.kappa.abs() < 1e-15);
        assert_eq!(rep.aa, 0.5);
    }

    #[test]
    fn evaluate_errors() {
        let reference = LabelRaster::new(1, 3, vec![1, 0, 2]).unwrap();
        assert!(matches!(
            evaluate(&reference, &reference, &[]),
            Err(HsioError::EmptyMask)
        ));
        assert!(matches!(
            evaluate(&reference, &reference, &[1]),
            Err(HsioError::UnlabeledMaskPixel(1))
        ));
    }

    #[test]
    fn absent_classes_do_not_count_towards_aa() {
        let reference = LabelRaster::new(1, 3, vec![1, 1, 3]).unwrap();
        let predicted = LabelRaster::new(1, 3, vec![1, 2, 3]).unwrap();
        let rep = evaluate(&reference, &predicted, &[0, 1, 2]).unwrap();
        assert_eq!(rep.per_class, vec![Some(0.5), None, Some(1.0)]);
        assert!((rep.aa - 0.75).abs() < 1e-15);
        assert!(rep.to_csv().contains("2,NA\n"));
    }

    #[test]
    fn metrics_csv_layout() {
        let rep = EvalReport::from_confusion(vec![vec![3, 1], vec![0, 4]]).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,accuracy");
        assert_eq!(lines[1], "1,0.750000");
        assert_eq!(lines[2], "2,1.000000");
        assert!(lines[3].starts_with("AA,"));
        assert_eq!(lines[4], "OA,0.875000");
        assert!(lines[5].starts_with("kappa,"));
    }

    fn cube_strategy() -> impl Strategy<Value = HsiCube> {
        (1usize..4, 1usize..5, 1usize..5).prop_flat_map(|(p, r, c)| {
            proptest::collection::vec(-1e3f32..1e3f32, p * r * c).prop_map(move |v| {
                HsiCube::new(p, r, c, v.into_iter().map(f64::from).collect(), None).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn write_load_is_a_fixed_point(cube in cube_strategy()) {
            let dir = tempfile::tempdir().unwrap();
            let hdr = dir.path().join("c.hdr");
            write_cube(&cube, &hdr).unwrap();
            let raw1 = fs::read(raw_path_for(&hdr)).unwrap();
            let back = load_cube(&hdr).unwrap();
            prop_assert_eq!(&back, &cube);
            let hdr2 = dir.path().join("d.hdr");
            write_cube(&back, &hdr2).unwrap();
            prop_assert_eq!(raw1, fs::read(raw_path_for(&hdr2)).unwrap());
        }

        #[test]
        fn evaluate_is_permutation_equivariant(
            pairs in proptest::collection::vec((1u32..=4, 1u32..=4), 1..60),
            perm_seed in 0usize..24,
        ) {
            let n = pairs.len();
            let truth: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let guess: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            // Enumerate the 24 permutations of 4 labels via the Lehmer code.
            let mut pool = vec![1u32, 2, 3, 4];
            let mut perm = Vec::new();
            let mut code = perm_seed;
            for radix in (1..=4).rev() {
                perm.push(pool.remove(code % radix));
                code /= radix;
            }
            let relabel = |v: &[u32]| v.iter().map(|&l| perm[l as usize - 1]).collect::<Vec<_>>();
            let mask: Vec<usize> = (0..n).collect();
            let a = evaluate(
                &LabelRaster::new(1, n, truth.clone()).unwrap(),
                &LabelRaster::new(1, n, guess.clone()).unwrap(),
                &mask,
            ).unwrap();
            let b = evaluate(
                &LabelRaster::new(1, n, relabel(&truth)).unwrap(),
                &LabelRaster::new(1, n, relabel(&guess)).unwrap(),
                &mask,
            ).unwrap();
            prop_assert!((a.oa - b.oa).abs() < 1e-12);
            prop_assert!((a.aa - b.aa).abs() < 1e-12);
            prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
            let ka = a.classes();
            for i in 0..ka {
                for j in 0..ka {
                    let (pi, pj) = (perm[i] as usize - 1, perm[j] as usize - 1);
                    if pi < b.classes() && pj < b.classes() {
                        prop_assert_eq!(a.confusion[i][j], b.confusion[pi][pj]);
                    }
                }
                if (perm[i] as usize - 1) < b.classes() {
                    prop_assert_eq!(a.per_class[i], b.per_class[perm[i] as usize - 1]);
                }
            }
            prop_assert!((0.0..=1.0).contains(&a.oa));
            prop_assert!((-1.0..=1.0).contains(&a.kappa));
        }
    }
}
