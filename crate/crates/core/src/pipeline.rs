//! The benchmark chain: load a scene, draw a stratified split, learn
//! features, classify every pixel and score the held-out pixels.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::{self, ForestParams};
use crate::config::{ClassifierConfig, ClassifierKind, DataSource, MethodConfig, RunConfig};
use crate::error::{Error, Result};
use crate::graph;
use crate::hsio::{self, EvalReport, HsiCube, HsioError, LabelRaster};
use crate::par;
use crate::sfe::{self, JPlayParams, LabeledSamples, LfdaParams};
use crate::synth;
use crate::ufe::{self, LppParams, MethodKind, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Split,
    Extract,
    Classify,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Split => "split",
            Stage::Extract => "extract",
            Stage::Classify => "classify",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

fn at(stage: Stage) -> impl FnOnce(Error) -> PipelineError {
    move |source| PipelineError { stage, source }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| {
        Error::Io(HsioError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| {
        Error::Io(HsioError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

/// A loaded scene: the cube, its ground truth and optional fixed masks.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: HsiCube,
    pub labels: LabelRaster,
    pub train_mask: Option<LabelRaster>,
    pub test_mask: Option<LabelRaster>,
}

pub fn load_scene(cfg: &RunConfig) -> Result<Scene> {
    match &cfg.data {
        DataSource::Synthetic { spec, seed } => {
            let scene = synth::gen_synthetic(spec, seed.unwrap_or(cfg.seed))?;
            Ok(Scene {
                cube: scene.cube,
                labels: scene.labels,
                train_mask: None,
                test_mask: None,
            })
        }
        DataSource::Files(files) => {
            let cube = hsio::load_cube(&files.cube)?;
            let shape = Some((cube.rows(), cube.cols()));
            let labels = hsio::load_labels(&files.labels, shape)?;
            labels.require_labeled()?;
            let train_mask = files
                .train
                .as_ref()
                .map(|p| hsio::load_labels(p, shape))
                .transpose()?;
            let test_mask = files
                .test
                .as_ref()
                .map(|p| hsio::load_labels(p, shape))
                .transpose()?;
            Ok(Scene {
                cube,
                labels,
                train_mask,
                test_mask,
            })
        }
    }
}

/// Mixes a base seed with extra coordinates (splitmix64 finalizer).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(base, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(acc << 6);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

/// Draws `per_class` pixels of every class `1..=k` without replacement.
/// The result is sorted by pixel index.
pub fn stratified_sample(labels: &LabelRaster, per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let k = labels.k();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.labels().iter().enumerate() {
        if l > 0 {
            by_class[l as usize - 1].push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * k);
    for (c, pixels) in by_class.iter().enumerate() {
        if pixels.len() < per_class {
            return Err(Error::invalid(format!(
                "class {} has {} labeled pixels, fewer than the {per_class} requested",
                c + 1,
                pixels.len()
            )));
        }
        out.extend(
            rand::seq::index::sample(&mut rng, pixels.len(), per_class)
                .into_iter()
                .map(|j| pixels[j]),
        );
    }
    out.sort_unstable();
    Ok(out)
}

/// Disjoint train and test pixel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub train_labels: Vec<usize>,
    pub test: Vec<usize>,
    /// Ground truth that `test` is scored against.
    pub reference: LabelRaster,
}

/// Uses the scene's masks when present; otherwise draws `per_class`
/// training pixels per class and tests on the remaining labeled pixels.
pub fn make_split(scene: &Scene, per_class: usize, seed: u64) -> Result<Split> {
    let (train, train_labels) = match &scene.train_mask {
        Some(mask) => {
            let idx = mask.labeled_indices();
            let labels = idx.iter().map(|&i| mask.labels()[i] as usize).collect();
            (idx, labels)
        }
        None => {
            let idx = stratified_sample(&scene.labels, per_class, seed)?;
            let labels = idx
                .iter()
                .map(|&i| scene.labels.labels()[i] as usize)
                .collect();
            (idx, labels)
        }
    };
    let mut in_train = vec![false; scene.labels.labels().len()];
    for &i in &train {
        in_train[i] = true;
    }
    let (test, reference) = match &scene.test_mask {
        Some(mask) => (mask.labeled_indices(), mask.clone()),
        None => {
            let rest = scene
                .labels
                .labeled_indices()
                .into_iter()
                .filter(|&i| !in_train[i])
                .collect();
            (rest, scene.labels.clone())
        }
    };
    if let Some(&px) = test.iter().find(|&&i| in_train[i]) {
        return Err(Error::invalid(format!(
            "pixel {px} is in both the train and the test set"
        )));
    }
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    Ok(Split {
        train,
        train_labels,
        test,
        reference,
    })
}

/// Learned features for every pixel plus what is needed to report them.
#[derive(Debug, Clone)]
pub struct Features {
    /// `d × n`.
    pub matrix: DMatrix<f64>,
    /// Hyperparameters after defaults were applied.
    pub params: Value,
    pub traces: BTreeMap<String, Vec<f64>>,
}

impl Features {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// SGDA sparsity weight for unit-norm samples when none is configured.
pub const DEFAULT_SGDA_TAU: f64 = 0.05;
pub const DEFAULT_ADMM_ITERS: usize = 100;
/// CGDA ridge weight when none is configured.
pub const DEFAULT_CGDA_LAMBDA: f64 = 0.1;
/// Relative ridge `γ = rel · tr(S_w)/p` for FSDA, SGDA and CGDA.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-3;

fn check_dim(d: usize, p: usize) -> Result<()> {
    if d == 0 || d > p {
        return Err(Error::invalid(format!("d = {d} must lie in 1..={p}")));
    }
    Ok(())
}

fn solver_config(m: &MethodConfig) -> SolverConfig {
    let base = SolverConfig::default();
    SolverConfig {
        lambda: m.lambda,
        lambda2: m.lambda2,
        outer_iters: m.outer_iters.unwrap_or(base.outer_iters),
        inner_iters: m.inner_iters.unwrap_or(base.inner_iters),
        tol: m.tol.unwrap_or(base.tol),
    }
}

fn lpp_params(m: &MethodConfig, seed: u64) -> LppParams {
    let base = LppParams::default();
    LppParams {
        k_nn: m.k_nn.unwrap_or(base.k_nn),
        sigma: m.sigma.unwrap_or(base.sigma),
        sample_cap: m.sample_cap.unwrap_or(base.sample_cap),
        reg: m.reg.unwrap_or(base.reg),
        seed,
    }
}

fn unit_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    out
}

fn linear(model: &ufe::ProjectionModel, cube: &HsiCube) -> Result<DMatrix<f64>> {
    Ok(sfe::apply_projection(model, cube)?.features)
}

/// Fits `method` and maps every pixel of `cube`. Supervised methods need
/// `samples`; `k` is the number of classes in the scene.
pub fn extract(
    cube: &HsiCube,
    samples: Option<&LabeledSamples>,
    method: &MethodConfig,
    k: usize,
    seed: u64,
) -> Result<Features> {
    let kind = method.kind();
    let p = cube.bands();
    let mut traces = BTreeMap::new();
    let supervised =
        || samples.ok_or_else(|| Error::invalid(format!("method {kind} needs training samples")));
    let d_default = method.d.unwrap_or(k);
    let (matrix, params) = match kind {
        MethodKind::Raw => {
            if let Some(d) = method.d {
                if d != p {
                    return Err(Error::invalid(format!(
                        "raw features have d = p = {p}, got d = {d}"
                    )));
                }
            }
            (cube.matrix(), json!({ "d": p }))
        }
        MethodKind::Pca => {
            check_dim(d_default, p)?;
            let ex = ufe::pca(cube, d_default)?;
            (ex.features.features, json!({ "d": d_default }))
        }
        MethodKind::Mnf => {
            check_dim(d_default, p)?;
            let ex = ufe::mnf(cube, d_default, None)?;
            (
                ex.features.features,
                json!({ "d": d_default, "noise_cov": "shift-difference estimate" }),
            )
        }
        MethodKind::Lpp | MethodKind::Lle => {
            check_dim(d_default, p)?;
            let lp = lpp_params(method, seed);
            let ex = if kind == MethodKind::Lpp {
                ufe::lpp(cube, d_default, &lp)?
            } else {
                ufe::lle_linear(cube, d_default, &lp)?
            };
            let mut params = json!({
                "d": d_default,
                "k_nn": lp.k_nn,
                "sample_cap": lp.sample_cap,
                "seed": lp.seed,
            });
            if kind == MethodKind::Lpp {
                params["sigma"] = json!(lp.sigma);
            } else {
                params["reg"] = json!(lp.reg);
            }
            (ex.features.features, params)
        }
        MethodKind::Otvca | MethodKind::Wsrrr | MethodKind::Sslra => {
            check_dim(d_default, p)?;
            let cfg = solver_config(method);
            let resolved = cfg.resolve(cube);
            let (lo, hi) = cube.min_max();
            let ex = match kind {
                MethodKind::Otvca => ufe::otvca(cube, d_default, &cfg)?,
                MethodKind::Wsrrr => ufe::wsrrr(cube, d_default, &cfg)?,
                _ => ufe::sslra(cube, d_default, &cfg)?,
            };
            traces.insert(kind.id().to_string(), ex.objective_trace.clone());
            let mut params = json!({
                "d": d_default,
                "lambda": resolved.lambda,
                "lambda_relative_to_range": resolved.lambda / (hi - lo),
                "outer_iters": cfg.outer_iters,
                "inner_iters": cfg.inner_iters,
                "tol": cfg.tol,
                "intensity_range": hi - lo,
            });
            if kind == MethodKind::Sslra {
                params["lambda2"] = json!(resolved.lambda2);
            }
            (ex.features.features, params)
        }
        MethodKind::Lda | MethodKind::Rlda => {
            let s = supervised()?;
            let full = k - 1;
            let d = method.d.unwrap_or(full);
            if d == 0 || d > full.min(p) {
                return Err(Error::invalid(format!(
                    "{kind} yields at most k − 1 = {full} features, got d = {d}"
                )));
            }
            let gamma = match (kind, method.gamma) {
                (MethodKind::Lda, g) => g.unwrap_or(0.0),
                (_, Some(g)) => g,
                (_, None) => sfe::relative_ridge(s, 1e-2)?,
            };
            let mut model = if kind == MethodKind::Lda {
                sfe::lda(s, gamma)?
            } else {
                sfe::rlda(s, Some(gamma))?
            };
            model.basis = model.basis.columns(0, d).into_owned();
            model.eigenvalues.truncate(d);
            (linear(&model, cube)?, json!({ "d": d, "gamma": gamma }))
        }
        MethodKind::Lfda => {
            let s = supervised()?;
            check_dim(d_default, p)?;
            let base = LfdaParams::default();
            let gamma = match method.gamma {
                Some(g) => g,
                None => sfe::relative_ridge(s, DEFAULT_RELATIVE_RIDGE)?,
            };
            let lp = LfdaParams {
                k_nn: method.k_nn.unwrap_or(base.k_nn),
                sigma: method.sigma.unwrap_or(base.sigma),
                gamma: Some(gamma),
            };
            let model = sfe::lfda(s, d_default, &lp)?;
            let params =
                json!({ "d": d_default, "k_nn": lp.k_nn, "sigma": lp.sigma, "gamma": gamma });
            (linear(&model, cube)?, params)
        }
        MethodKind::Fsda => {
            let s = supervised()?;
            check_dim(d_default, p)?;
            let gamma = match method.gamma {
                Some(g) => g,
                None => sfe::relative_ridge(s, DEFAULT_RELATIVE_RIDGE)?,
            };
            let model = sfe::fsda(s, d_default, gamma)?;
            let params =
                json!({ "d": model.output_dim(), "d_requested": d_default, "gamma": gamma });
            (linear(&model, cube)?, params)
        }
        MethodKind::Sgda | MethodKind::Cgda => {
            let s = supervised()?;
            check_dim(d_default, p)?;
            let xu = unit_columns(s.x());
            let gamma = match method.gamma {
                Some(g) => g,
                None => sfe::relative_ridge(s, DEFAULT_RELATIVE_RIDGE)?,
            };
            let (graph, mut params) = if kind == MethodKind::Sgda {
                let tau = method.tau.unwrap_or(DEFAULT_SGDA_TAU);
                let iters = method.admm_iters.unwrap_or(DEFAULT_ADMM_ITERS);
                let sa = graph::sparse_affinity(&xu, tau, iters, Some(s.labels()))?;
                traces.insert("sgda_admm".into(), sa.objective_trace.clone());
                let params =
                    json!({ "tau": tau, "admm_iters": iters, "admm_converged": sa.converged });
                (sa.graph, params)
            } else {
                let lambda = method.lambda.unwrap_or(DEFAULT_CGDA_LAMBDA);
                let g = graph::collaborative_affinity(&xu, lambda, Some(s.labels()))?;
                (g, json!({ "lambda": lambda }))
            };
            let model = sfe::gda_project(s, &graph, d_default, gamma, kind)?;
            params["d"] = json!(d_default);
            params["gamma"] = json!(gamma);
            params["graph"] = json!("within-class, unit-norm samples");
            (linear(&model, cube)?, params)
        }
        MethodKind::Jplay => {
            let s = supervised()?;
            let base = JPlayParams::default();
            let layers = match &method.layers {
                Some(l) => l.clone(),
                None => vec![p, d_default],
            };
            if let Some(d) = method.d {
                if layers.last() != Some(&d) {
                    return Err(Error::invalid(format!(
                        "JPlay output width {:?} disagrees with d = {d}",
                        layers.last()
                    )));
                }
            }
            let jp = JPlayParams {
                layer_dims: layers.clone(),
                alpha: method.alpha.unwrap_or(base.alpha),
                beta: method.beta.unwrap_or(base.beta),
                gamma: method.gamma.unwrap_or(base.gamma),
                iters: method.iters.unwrap_or(base.iters),
                tol: method.tol.unwrap_or(base.tol),
            };
            let model = sfe::jplay(s, &jp)?;
            traces.insert("jplay".into(), model.objective_trace.clone());
            let features = sfe::apply_projection(&model, cube)?.features;
            let params = json!({
                "d": features.nrows(),
                "layers": layers,
                "alpha": jp.alpha,
                "beta": jp.beta,
                "gamma": jp.gamma,
                "iters": jp.iters,
                "tol": jp.tol,
            });
            (features, params)
        }
    };
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{kind} produced non-finite features"
        )));
    }
    Ok(Features {
        matrix,
        params,
        traces,
    })
}

/// Columns `idx` of `x`.
pub fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, idx[c])])
}

/// Labels every pixel; returns the predictions and the resolved settings.
pub fn classify_pixels(
    features: &DMatrix<f64>,
    split: &Split,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(Vec<usize>, Value)> {
    let train = select_columns(features, &split.train);
    match cfg.kind {
        ClassifierKind::Rf => {
            let params = ForestParams {
                n_trees: cfg.n_trees,
                mtry: cfg.mtry,
                seed,
            };
            let model = classify::rf_train(&train, &split.train_labels, &params)?;
            let pred = classify::rf_predict(&model, features)?;
            let resolved = json!({
                "kind": "rf",
                "n_trees": model.n_trees,
                "mtry": model.mtry,
                "seed": seed,
                "feature_dim": model.dim,
            });
            Ok((pred.labels, resolved))
        }
        ClassifierKind::Knn => {
            let pred = classify::knn_predict(&train, &split.train_labels, features, cfg.k_nn)?;
            Ok((pred, json!({ "kind": "knn", "k_nn": cfg.k_nn })))
        }
    }
}

fn samples_for(cube: &HsiCube, split: &Split, kind: MethodKind) -> Result<Option<LabeledSamples>> {
    if kind.is_supervised() {
        Ok(Some(LabeledSamples::from_cube(
            cube,
            &split.train,
            split.train_labels.clone(),
        )?))
    } else {
        Ok(None)
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub prediction: LabelRaster,
    pub split: Split,
    pub manifest: Value,
    pub output_dir: PathBuf,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const CLASSMAP_FILE: &str = "classmap.ppm";
pub const MANIFEST_FILE: &str = "manifest.json";

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs the full chain and writes `metrics.csv`, `classmap.ppm` and
/// `manifest.json` into `cfg.output`.
pub fn run_benchmark(cfg: &RunConfig) -> PipelineResult<RunOutcome> {
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let scene = load_scene(cfg).map_err(at(Stage::Load))?;
    timings.insert("load", millis(t));

    let t = Instant::now();
    let split = make_split(&scene, cfg.train_per_class, cfg.seed).map_err(at(Stage::Split))?;
    let k = scene.labels.k().max(split.reference.k());
    timings.insert("split", millis(t));

    let t = Instant::now();
    let kind = cfg.method.kind();
    let features = samples_for(&scene.cube, &split, kind)
        .and_then(|s| extract(&scene.cube, s.as_ref(), &cfg.method, k, cfg.seed))
        .map_err(at(Stage::Extract))?;
    timings.insert("extract", millis(t));

    let t = Instant::now();
    let (pred, classifier) = classify_pixels(&features.matrix, &split, &cfg.classifier, cfg.seed)
        .map_err(at(Stage::Classify))?;
    timings.insert("classify", millis(t));

    let t = Instant::now();
    let prediction = LabelRaster::new(
        scene.cube.rows(),
        scene.cube.cols(),
        pred.iter().map(|&l| l as u32).collect(),
    )
    .map_err(|e| at(Stage::Evaluate)(e.into()))?;
    let report = hsio::evaluate(&split.reference, &prediction, &split.test)
        .map_err(|e| at(Stage::Evaluate)(e.into()))?;
    timings.insert("evaluate", millis(t));

    let manifest = json!({
        "config": cfg.render(),
        "method": kind.id(),
        "scene": {
            "rows": scene.cube.rows(),
            "cols": scene.cube.cols(),
            "bands": scene.cube.bands(),
            "classes": k,
            "synthetic_seed": match &cfg.data {
                DataSource::Synthetic { seed, .. } => Some(seed.unwrap_or(cfg.seed)),
                DataSource::Files(_) => None,
            },
        },
        "split": {
            "train_pixels": split.train.len(),
            "test_pixels": split.test.len(),
            "train_per_class": if scene.train_mask.is_some() { None } else { Some(cfg.train_per_class) },
            "seed": cfg.seed,
        },
        "resolved": {
            "method": features.params,
            "feature_dim": features.dim(),
            "classifier": classifier,
        },
        "metrics": { "oa": report.oa, "aa": report.aa, "kappa": report.kappa },
        "objective_traces": features.traces,
        "timings_ms": timings,
    });

    let out = &cfg.output;
    create_dir(out).map_err(at(Stage::Write))?;
    write_file(&out.join(METRICS_FILE), report.to_csv()).map_err(at(Stage::Write))?;
    hsio::save_classmap(
        &prediction,
        &hsio::default_palette(k),
        out.join(CLASSMAP_FILE),
    )
    .map_err(|e| at(Stage::Write)(e.into()))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest values are finite JSON");
    write_file(&out.join(MANIFEST_FILE), text + "\n").map_err(at(Stage::Write))?;

    Ok(RunOutcome {
        report,
        prediction,
        split,
        manifest,
        output_dir: out.clone(),
    })
}

/// Mean and spread of OA for one training-set size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub size: usize,
    pub mean_oa: f64,
    /// Population standard deviation over repeats.
    pub std_oa: f64,
    pub oa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub method: MethodKind,
    pub repeats: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,mean_oa,std_oa\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.6},{:.6}\n", r.size, r.mean_oa, r.std_oa));
        }
        out
    }

    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_oa).collect()
    }
}

pub const SWEEP_FILE: &str = "sweep.csv";

/// Repeats the benchmark for each per-class training size with `repeats`
/// independently seeded stratified draws. Unsupervised features are
/// computed once and shared. Each repeat writes its metrics to
/// `output/sweep/n{size}_r{repeat}/`; the summary goes to `output/sweep.csv`.
pub fn sample_sweep(
    cfg: &RunConfig,
    sizes: &[usize],
    repeats: usize,
) -> PipelineResult<SweepTable> {
    if sizes.is_empty() || repeats == 0 || sizes.contains(&0) {
        return Err(at(Stage::Split)(Error::invalid(
            "sweep needs at least one positive size and one repeat",
        )));
    }
    let scene = load_scene(cfg).map_err(at(Stage::Load))?;
    let counts = class_counts(&scene.labels);
    let largest = *sizes.iter().max().expect("sizes nonempty");
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < largest) {
        return Err(at(Stage::Split)(Error::invalid(format!(
            "class {} has {n} labeled pixels, fewer than the requested {largest}",
            c + 1
        ))));
    }
    let scene = Scene {
        train_mask: None,
        ..scene
    };
    let kind = cfg.method.kind();
    let k = scene.labels.k();
    let shared = if kind.is_supervised() {
        None
    } else {
        Some(extract(&scene.cube, None, &cfg.method, k, cfg.seed).map_err(at(Stage::Extract))?)
    };
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..repeats).map(move |r| (s, r)))
        .collect();
    let results: Vec<PipelineResult<f64>> = par::map_range(jobs.len(), |j| {
        let (size, rep) = jobs[j];
        let seed = derive_seed(cfg.seed, &[size as u64, rep as u64]);
        let split = make_split(&scene, size, seed).map_err(at(Stage::Split))?;
        let own;
        let features = match &shared {
            Some(f) => f,
            None => {
                own = samples_for(&scene.cube, &split, kind)
                    .and_then(|s| extract(&scene.cube, s.as_ref(), &cfg.method, k, seed))
                    .map_err(at(Stage::Extract))?;
                &own
            }
        };
        let (pred, _) = classify_pixels(&features.matrix, &split, &cfg.classifier, seed)
            .map_err(at(Stage::Classify))?;
        let raster = LabelRaster::new(
            scene.cube.rows(),
            scene.cube.cols(),
            pred.iter().map(|&l| l as u32).collect(),
        )
        .map_err(|e| at(Stage::Evaluate)(e.into()))?;
        let report = hsio::evaluate(&split.reference, &raster, &split.test)
            .map_err(|e| at(Stage::Evaluate)(e.into()))?;
        let dir = cfg.output.join("sweep").join(format!("n{size}_r{rep}"));
        create_dir(&dir).map_err(at(Stage::Write))?;
        write_file(&dir.join(METRICS_FILE), report.to_csv()).map_err(at(Stage::Write))?;
        Ok(report.oa)
    });
    let mut oas = Vec::with_capacity(results.len());
    for r in results {
        oas.push(r?);
    }
    let rows = sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let oa = oas[i * repeats..(i + 1) * repeats].to_vec();
            let mean = oa.iter().sum::<f64>() / repeats as f64;
            let var = oa.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / repeats as f64;
            SweepRow {
                size,
                mean_oa: mean,
                std_oa: var.sqrt(),
                oa,
            }
        })
        .collect();
    let table = SweepTable {
        method: kind,
        repeats,
        rows,
    };
    write_file(&cfg.output.join(SWEEP_FILE), table.to_csv()).map_err(at(Stage::Write))?;
    Ok(table)
}

fn class_counts(labels: &LabelRaster) -> Vec<usize> {
    let mut counts = vec![0; labels.k()];
    for &l in labels.labels() {
        if l > 0 {
            counts[l as usize - 1] += 1;
        }
    }
    counts
}

/// Counts pairs of consecutive means where the later one is lower, and the
/// largest such drop.
pub fn inversions(means: &[f64]) -> (usize, f64) {
    means.windows(2).fold((0, 0.0), |(n, worst), w| {
        if w[1] < w[0] {
            (n + 1, f64::max(worst, w[0] - w[1]))
        } else {
            (n, worst)
        }
    })
}
