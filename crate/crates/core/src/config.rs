//! Run configuration files.
//!
//! The format is line oriented:
//!
//! ```text
//! # comment
//! [section]
//! key = value      # trailing comment after whitespace
//! ```
//!
//! Sections are `data`, `synthetic`, `method`, `classifier` and `run`.
//! Unknown sections, unknown keys and repeated keys are errors. Values are
//! trimmed; a value wrapped in double quotes is taken literally (which
//! allows `#` and surrounding spaces). Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::synth::{Noise, SyntheticSpec};
use crate::ufe::MethodKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key `{key}` in [{section}]")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: invalid value for `{key}`: {msg}")]
    InvalidValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// Where the scene comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Files(DataFiles),
    /// A generated scene; `seed = None` reuses the run seed.
    Synthetic {
        spec: SyntheticSpec,
        seed: Option<u64>,
    },
}

/// ENVI cube plus label rasters. `train` and `test` are label grids of the
/// same shape whose nonzero pixels form the respective sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataFiles {
    pub cube: PathBuf,
    pub labels: PathBuf,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

/// Method choice and optional hyperparameters. Unset values fall back to
/// the method's defaults, which the run manifest records.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MethodConfig {
    pub id: MethodKind,
    pub d: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda2: Option<f64>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub tol: Option<f64>,
    pub k_nn: Option<usize>,
    pub sigma: Option<f64>,
    pub sample_cap: Option<usize>,
    pub reg: Option<f64>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub admm_iters: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub layers: Option<Vec<usize>>,
    pub iters: Option<usize>,
}

impl MethodConfig {
    pub fn kind(&self) -> MethodKind {
        self.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Rf,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub k_nn: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Rf,
            n_trees: 200,
            mtry: None,
            k_nn: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub method: MethodConfig,
    pub classifier: ClassifierConfig,
    pub seed: u64,
    pub output: PathBuf,
    /// Training pixels drawn per class when no train mask is given.
    pub train_per_class: usize,
}

pub const DEFAULT_TRAIN_PER_CLASS: usize = 50;

impl RunConfig {
    /// A run on a synthetic scene with every other setting at its default.
    pub fn synthetic(spec: SyntheticSpec, method: MethodKind, output: impl Into<PathBuf>) -> Self {
        Self {
            data: DataSource::Synthetic { spec, seed: None },
            method: MethodConfig {
                id: method,
                ..MethodConfig::default()
            },
            classifier: ClassifierConfig::default(),
            seed: 0,
            output: output.into(),
            train_per_class: DEFAULT_TRAIN_PER_CLASS,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> ConfigResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> ConfigResult<Self> {
        let doc = Document::parse(text)?;
        let data = Section::new(&doc, "data", &["cube", "labels", "train", "test"]);
        let syn = Section::new(
            &doc,
            "synthetic",
            &[
                "rows", "cols", "bands", "classes", "cells", "sigma", "snr_db", "gain", "contrast",
                "seed",
            ],
        );
        let method = Section::new(
            &doc,
            "method",
            &[
                "id",
                "d",
                "lambda",
                "lambda2",
                "outer_iters",
                "inner_iters",
                "tol",
                "k_nn",
                "sigma",
                "sample_cap",
                "reg",
                "gamma",
                "tau",
                "admm_iters",
                "alpha",
                "beta",
                "layers",
                "iters",
            ],
        );
        let classifier = Section::new(&doc, "classifier", &["kind", "n_trees", "mtry", "k_nn"]);
        let run = Section::new(&doc, "run", &["seed", "output", "train_per_class"]);
        for s in [&data, &syn, &method, &classifier, &run] {
            s.check_keys()?;
        }

        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let source = match (data.present, syn.present) {
            (true, true) => {
                return Err(ConfigError::Invalid(
                    "[data] and [synthetic] are mutually exclusive".into(),
                ))
            }
            (true, false) => DataSource::Files(DataFiles {
                cube: resolve(data.required::<String>("cube")?),
                labels: resolve(data.required::<String>("labels")?),
                train: data.optional::<String>("train")?.map(resolve),
                test: data.optional::<String>("test")?.map(resolve),
            }),
            (false, _) => {
                let d = SyntheticSpec::default();
                let noise = match (
                    syn.optional::<f64>("sigma")?,
                    syn.optional::<f64>("snr_db")?,
                ) {
                    (Some(_), Some(_)) => {
                        return Err(ConfigError::Invalid(
                            "[synthetic] accepts either sigma or snr_db, not both".into(),
                        ))
                    }
                    (Some(s), None) => Noise::Sigma(s),
                    (None, Some(db)) => Noise::SnrDb(db),
                    (None, None) => d.noise,
                };
                let spec = SyntheticSpec {
                    rows: syn.optional("rows")?.unwrap_or(d.rows),
                    cols: syn.optional("cols")?.unwrap_or(d.cols),
                    bands: syn.optional("bands")?.unwrap_or(d.bands),
                    classes: syn.optional("classes")?.unwrap_or(d.classes),
                    cells: syn.optional("cells")?.unwrap_or(0),
                    noise,
                    gain: syn.optional("gain")?.unwrap_or(d.gain),
                    contrast: syn.optional("contrast")?.unwrap_or(d.contrast),
                };
                let spec = SyntheticSpec {
                    cells: if spec.cells == 0 {
                        4 * spec.classes
                    } else {
                        spec.cells
                    },
                    ..spec
                };
                DataSource::Synthetic {
                    spec,
                    seed: syn.optional("seed")?,
                }
            }
        };

        let method_cfg = MethodConfig {
            id: method.optional("id")?.unwrap_or_default(),
            d: method.optional("d")?,
            lambda: method.optional("lambda")?,
            lambda2: method.optional("lambda2")?,
            outer_iters: method.optional("outer_iters")?,
            inner_iters: method.optional("inner_iters")?,
            tol: method.optional("tol")?,
            k_nn: method.optional("k_nn")?,
            sigma: method.optional("sigma")?,
            sample_cap: method.optional("sample_cap")?,
            reg: method.optional("reg")?,
            gamma: method.optional("gamma")?,
            tau: method.optional("tau")?,
            admm_iters: method.optional("admm_iters")?,
            alpha: method.optional("alpha")?,
            beta: method.optional("beta")?,
            layers: method.optional::<UsizeList>("layers")?.map(|l| l.0),
            iters: method.optional("iters")?,
        };
        let cd = ClassifierConfig::default();
        let classifier_cfg = ClassifierConfig {
            kind: classifier.optional("kind")?.unwrap_or(cd.kind),
            n_trees: classifier.optional("n_trees")?.unwrap_or(cd.n_trees),
            mtry: classifier.optional("mtry")?,
            k_nn: classifier.optional("k_nn")?.unwrap_or(cd.k_nn),
        };
        let cfg = RunConfig {
            data: source,
            method: method_cfg,
            classifier: classifier_cfg,
            seed: run.optional("seed")?.unwrap_or(0),
            output: resolve(
                run.optional::<String>("output")?
                    .unwrap_or_else(|| "out".into()),
            ),
            train_per_class: run
                .optional("train_per_class")?
                .unwrap_or(DEFAULT_TRAIN_PER_CLASS),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Value checks that do not need the data.
    pub fn validate(&self) -> ConfigResult<()> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        match &self.data {
            DataSource::Synthetic { spec, .. } => spec
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("[synthetic] {e}")))?,
            DataSource::Files(files) => {
                let listed = [
                    Some(&files.cube),
                    Some(&files.labels),
                    files.train.as_ref(),
                    files.test.as_ref(),
                ];
                for path in listed.into_iter().flatten() {
                    if !path.is_file() {
                        return bad(format!("referenced file {} does not exist", path.display()));
                    }
                }
            }
        }
        let m = &self.method;
        if m.d == Some(0) {
            return bad("[method] d must be at least 1".into());
        }
        for (key, v) in [
            ("k_nn", m.k_nn),
            ("outer_iters", m.outer_iters),
            ("inner_iters", m.inner_iters),
            ("admm_iters", m.admm_iters),
            ("iters", m.iters),
            ("sample_cap", m.sample_cap),
        ] {
            if v == Some(0) {
                return bad(format!("[method] {key} must be at least 1"));
            }
        }
        for (key, v) in [("sigma", m.sigma), ("tau", m.tau), ("tol", m.tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("[method] {key} must be positive, got {v}"));
                }
            }
        }
        for (key, v) in [
            ("lambda", m.lambda),
            ("lambda2", m.lambda2),
            ("reg", m.reg),
            ("gamma", m.gamma),
            ("alpha", m.alpha),
            ("beta", m.beta),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad(format!("[method] {key} must be finite and ≥ 0, got {v}"));
                }
            }
        }
        if let Some(layers) = &m.layers {
            if layers.is_empty() || layers.contains(&0) {
                return bad("[method] layers must be a nonempty list of positive widths".into());
            }
        }
        if self.classifier.n_trees == 0
            || self.classifier.k_nn == 0
            || self.classifier.mtry == Some(0)
        {
            return bad("[classifier] n_trees, mtry and k_nn must be at least 1".into());
        }
        if self.train_per_class == 0 {
            return bad("[run] train_per_class must be at least 1".into());
        }
        Ok(())
    }

    /// Canonical config text with every path absolute; parsing it yields
    /// this config back.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let path = |p: &Path| format!("\"{}\"", p.display());
        match &self.data {
            DataSource::Files(f) => {
                out.push_str("[data]\n");
                let _ = writeln!(out, "cube = {}", path(&f.cube));
                let _ = writeln!(out, "labels = {}", path(&f.labels));
                if let Some(t) = &f.train {
                    let _ = writeln!(out, "train = {}", path(t));
                }
                if let Some(t) = &f.test {
                    let _ = writeln!(out, "test = {}", path(t));
                }
            }
            DataSource::Synthetic { spec, seed } => {
                out.push_str("[synthetic]\n");
                let _ = writeln!(out, "rows = {}", spec.rows);
                let _ = writeln!(out, "cols = {}", spec.cols);
                let _ = writeln!(out, "bands = {}", spec.bands);
                let _ = writeln!(out, "classes = {}", spec.classes);
                let _ = writeln!(out, "cells = {}", spec.cells);
                match spec.noise {
                    Noise::Sigma(s) => {
                        let _ = writeln!(out, "sigma = {s:?}");
                    }
                    Noise::SnrDb(db) => {
                        let _ = writeln!(out, "snr_db = {db:?}");
                    }
                }
                let _ = writeln!(out, "gain = {:?}", spec.gain);
                let _ = writeln!(out, "contrast = {:?}", spec.contrast);
                if let Some(s) = seed {
                    let _ = writeln!(out, "seed = {s}");
                }
            }
        }
        let m = &self.method;
        out.push_str("\n[method]\n");
        let _ = writeln!(out, "id = {}", m.kind());
        macro_rules! opt {
            ($($field:ident),*) => {$(
                if let Some(v) = &m.$field {
                    let _ = writeln!(out, "{} = {:?}", stringify!($field), v);
                }
            )*};
        }
        opt!(
            d,
            lambda,
            lambda2,
            outer_iters,
            inner_iters,
            tol,
            k_nn,
            sigma,
            sample_cap,
            reg,
            gamma,
            tau,
            admm_iters,
            alpha,
            beta,
            iters
        );
        if let Some(layers) = &m.layers {
            let list: Vec<String> = layers.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(out, "layers = {}", list.join(","));
        }
        let c = &self.classifier;
        out.push_str("\n[classifier]\n");
        let _ = writeln!(
            out,
            "kind = {}",
            match c.kind {
                ClassifierKind::Rf => "rf",
                ClassifierKind::Knn => "knn",
            }
        );
        let _ = writeln!(out, "n_trees = {}", c.n_trees);
        if let Some(m) = c.mtry {
            let _ = writeln!(out, "mtry = {m}");
        }
        let _ = writeln!(out, "k_nn = {}", c.k_nn);
        out.push_str("\n[run]\n");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "output = {}", path(&self.output));
        let _ = writeln!(out, "train_per_class = {}", self.train_per_class);
        out
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rf" => Ok(ClassifierKind::Rf),
            "knn" => Ok(ClassifierKind::Knn),
            other => Err(format!("expected `rf` or `knn`, got `{other}`")),
        }
    }
}

struct UsizeList(Vec<usize>);

impl FromStr for UsizeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("`{}`: {e}", t.trim()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(UsizeList)
    }
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug)]
struct RawSection {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

#[derive(Debug, Default)]
struct Document {
    sections: BTreeMap<String, RawSection>,
}

const SECTIONS: [&str; 5] = ["data", "synthetic", "method", "classifier", "run"];

fn strip_comment(line: &str) -> &str {
    let mut prev_ws = true;
    let mut in_quotes = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' if prev_ws && !in_quotes => return &line[..i],
            _ => {}
        }
        prev_ws = ch.is_whitespace();
    }
    line
}

impl Document {
    fn parse(text: &str) -> ConfigResult<Self> {
        let mut doc = Document::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax {
                        line,
                        msg: format!("malformed section header `{body}`"),
                    })?
                    .trim()
                    .to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(ConfigError::UnknownSection { line, name });
                }
                if doc.sections.contains_key(&name) {
                    return Err(ConfigError::Syntax {
                        line,
                        msg: format!("section [{name}] appears twice"),
                    });
                }
                doc.sections.insert(
                    name.clone(),
                    RawSection {
                        line,
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name);
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{body}`"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    msg: "empty key".into(),
                });
            }
            let section = current.clone().ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("key `{key}` appears before any [section] header"),
            })?;
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            let entries = &mut doc
                .sections
                .get_mut(&section)
                .expect("section registered")
                .entries;
            if entries.contains_key(&key) {
                return Err(ConfigError::DuplicateKey { line, section, key });
            }
            entries.insert(
                key,
                Entry {
                    line,
                    value: value.to_string(),
                },
            );
        }
        Ok(doc)
    }
}

struct Section<'a> {
    name: &'static str,
    allowed: &'static [&'static str],
    raw: Option<&'a RawSection>,
    present: bool,
}

impl<'a> Section<'a> {
    fn new(doc: &'a Document, name: &'static str, allowed: &'static [&'static str]) -> Self {
        let raw = doc.sections.get(name);
        Self {
            name,
            allowed,
            raw,
            present: raw.is_some(),
        }
    }

    fn check_keys(&self) -> ConfigResult<()> {
        if let Some(raw) = self.raw {
            for (key, entry) in &raw.entries {
                if !self.allowed.contains(&key.as_str()) {
                    return Err(ConfigError::UnknownKey {
                        line: entry.line,
                        section: self.name.into(),
                        key: key.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn optional<T>(&self, key: &str) -> ConfigResult<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some(entry) = self.raw.and_then(|r| r.entries.get(key)) else {
            return Ok(None);
        };
        entry
            .value
            .parse::<T>()
            .map(Some)
            .map_err(|e| ConfigError::InvalidValue {
                line: entry.line,
                key: key.into(),
                msg: e.to_string(),
            })
    }

    fn required<T>(&self, key: &str) -> ConfigResult<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let line = self.raw.map(|r| r.line).unwrap_or(0);
        self.optional(key)?.ok_or_else(|| {
            ConfigError::Invalid(format!(
                "[{}] (line {line}) is missing required key `{key}`",
                self.name
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ConfigResult<RunConfig> {
        RunConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn empty_config_is_default_synthetic_raw() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.method.kind(), MethodKind::Raw);
        assert_eq!(cfg.classifier, ClassifierConfig::default());
        assert_eq!(cfg.train_per_class, 50);
        assert_eq!(cfg.output, PathBuf::from("/base/out"));
        match cfg.data {
            DataSource::Synthetic { spec, seed } => {
                assert_eq!(spec, SyntheticSpec::default());
                assert_eq!(seed, None);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
# benchmark
[synthetic]
rows = 40
cols = 30   # narrow
classes = 5
sigma = 0.01
seed = 9

[method]
id = JPlay
layers = 32, 16, 5
alpha = 0.2

[classifier]
kind = knn
k_nn = 3

[run]
seed = 4
output = "results #1"
train_per_class = 20
"#;
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.method.kind(), MethodKind::Jplay);
        assert_eq!(cfg.method.layers, Some(vec![32, 16, 5]));
        assert_eq!(cfg.method.alpha, Some(0.2));
        assert_eq!(cfg.classifier.kind, ClassifierKind::Knn);
        assert_eq!(cfg.classifier.k_nn, 3);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.output, PathBuf::from("/base/results #1"));
        match &cfg.data {
            DataSource::Synthetic { spec, seed } => {
                assert_eq!(
                    (spec.rows, spec.cols, spec.classes, spec.cells),
                    (40, 30, 5, 20)
                );
                assert_eq!(spec.noise, Noise::Sigma(0.01));
                assert_eq!(*seed, Some(9));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn grammar_errors() {
        assert!(matches!(
            parse("[bogus]"),
            Err(ConfigError::UnknownSection { line: 1, .. })
        ));
        assert!(matches!(
            parse("[method]\nfoo = 1"),
            Err(ConfigError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            parse("[method]\nd = 1\nd = 2"),
            Err(ConfigError::DuplicateKey { line: 3, .. })
        ));
        assert!(matches!(
            parse("d = 1"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse("[method]\njust words"),
            Err(ConfigError::Syntax { .. })
        ));
        assert!(matches!(
            parse("[method]\nid = nonsense"),
            Err(ConfigError::InvalidValue { line: 2, .. })
        ));
        assert!(matches!(
            parse("[method]\nd = -3"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            parse("[method]\nd = 0"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            parse("[synthetic]\nsigma = 1\nsnr_db = 3"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            parse("[synthetic]\nclasses = 20"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            parse("[run]\n[run]"),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn data_files_must_exist() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.hdr"), "").unwrap();
        std::fs::write(dir.path().join("l.csv"), "").unwrap();
        let ok = RunConfig::parse("[data]\ncube = c.hdr\nlabels = l.csv", dir.path()).unwrap();
        match &ok.data {
            DataSource::Files(f) => assert_eq!(f.cube, dir.path().join("c.hdr")),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            RunConfig::parse(&ok.render(), Path::new("/elsewhere")).unwrap(),
            ok
        );
        let missing = RunConfig::parse("[data]\ncube = c.hdr\nlabels = nope.csv", dir.path());
        assert!(matches!(missing, Err(ConfigError::Invalid(m)) if m.contains("nope.csv")));
        let no_labels = RunConfig::parse("[data]\ncube = c.hdr", dir.path());
        assert!(matches!(no_labels, Err(ConfigError::Invalid(m)) if m.contains("labels")));
    }

    #[test]
    fn render_round_trips_method_parameters() {
        let text = "[method]\nid = sslra\nlambda = 0.25\nlambda2 = 1e-3\nouter_iters = 7\nd = 4\n[classifier]\nmtry = 2";
        let cfg = parse(text).unwrap();
        assert_eq!(parse(&cfg.render()).unwrap(), cfg);
    }
}
