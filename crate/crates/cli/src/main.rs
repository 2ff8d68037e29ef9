//! `hyfe`: run feature-extraction benchmarks from config files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyfe_core::config::{ConfigError, DataSource, RunConfig};
use hyfe_core::hsio;
use hyfe_core::pipeline::{self, PipelineError};
use hyfe_core::synth;

#[derive(Debug, Parser)]
#[command(
    name = "hyfe",
    version,
    about = "Hyperspectral feature-extraction benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one benchmark from a config file (or a previous run's manifest.json).
    Run { config: PathBuf },
    /// Generate a synthetic scene from the [synthetic] section of a config.
    Synth {
        spec: PathBuf,
        /// Output directory for cube.hdr/cube.raw, labels.csv and run.cfg.
        out: PathBuf,
    },
    /// Repeat a benchmark over per-class training-set sizes.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,25,50,100")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("config error: {e}"))
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Runtime(format!("error: {e}"))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("HYFE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Config(format!(
            "config error: HYFE_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(format!("error: cannot size thread pool: {e}")))
}

/// Reads a config file, or the config echoed inside a run manifest.
fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let is_manifest = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_manifest {
        return Ok(RunConfig::load(path)?);
    }
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::Config(format!("config error: cannot read {}: {e}", path.display()))
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("config error: {}: {e}", path.display())))?;
    let echoed = value["config"].as_str().ok_or_else(|| {
        Failure::Config(format!(
            "config error: {} has no `config` entry",
            path.display()
        ))
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(RunConfig::parse(echoed, base)?)
}

fn run(config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let outcome = pipeline::run_benchmark(&cfg)?;
    let r = &outcome.report;
    println!(
        "{}: OA {:.4}  AA {:.4}  kappa {:.4}  ({} train / {} test pixels)",
        cfg.method.kind(),
        r.oa,
        r.aa,
        r.kappa,
        outcome.split.train.len(),
        outcome.split.test.len()
    );
    println!("outputs written to {}", outcome.output_dir.display());
    Ok(())
}

fn synth(spec_path: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(spec_path)?;
    let DataSource::Synthetic { spec, seed } = &cfg.data else {
        return Err(Failure::Config(format!(
            "config error: {} must describe a [synthetic] scene, not [data] files",
            spec_path.display()
        )));
    };
    let runtime = |e: String| Failure::Runtime(format!("error: synth: {e}"));
    let scene =
        synth::gen_synthetic(spec, seed.unwrap_or(cfg.seed)).map_err(|e| runtime(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    hsio::write_cube(&scene.cube, out.join("cube.hdr")).map_err(|e| runtime(e.to_string()))?;
    hsio::save_labels_csv(&scene.labels, out.join("labels.csv"))
        .map_err(|e| runtime(e.to_string()))?;
    let template = format!(
        "[data]\ncube = cube.hdr\nlabels = labels.csv\n\n[method]\nid = raw\n\n[run]\nseed = {}\noutput = results\n",
        cfg.seed
    );
    std::fs::write(out.join("run.cfg"), template).map_err(|e| runtime(e.to_string()))?;
    println!(
        "wrote {}×{}×{} cube with {} classes to {}",
        spec.rows,
        spec.cols,
        spec.bands,
        spec.classes,
        out.display()
    );
    Ok(())
}

fn sweep(config: &Path, sizes: &[usize], repeats: usize) -> Result<(), Failure> {
    if sizes.is_empty() || sizes.contains(&0) || repeats == 0 {
        return Err(Failure::Config(
            "config error: --sizes needs positive entries and --repeats must be at least 1".into(),
        ));
    }
    let cfg = load_config(config)?;
    let table = pipeline::sample_sweep(&cfg, sizes, repeats)?;
    println!("method {} ({} repeats)", table.method, table.repeats);
    println!("{:>6}  {:>8}  {:>8}", "size", "mean OA", "std OA");
    for row in &table.rows {
        println!("{:>6}  {:>8.4}  {:>8.4}", row.size, row.mean_oa, row.std_oa);
    }
    println!(
        "table written to {}",
        cfg.output.join(pipeline::SWEEP_FILE).display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run { config } => run(config),
        Command::Synth { spec, out } => synth(spec, out),
        Command::Sweep {
            config,
            sizes,
            repeats,
        } => sweep(config, sizes, *repeats),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
