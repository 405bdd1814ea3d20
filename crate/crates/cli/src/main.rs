//! `cdl` — train coherence-controlled dictionaries, analyze frame quality
//! and reproduce the spectrum / generalization experiments.
//!
//! Exit codes: 0 success, 2 validation or parse error, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cdl_core::error::Error;
use cdl_core::experiments::{
    export_report, generalization_experiment, spectrum_experiment, ExperimentConfig, ReportFormat,
};
use cdl_core::io::{load_matrix, save_matrix, MatrixFormat};
use cdl_core::metrics::{gram_summary, welch_bound};
use cdl_core::synth::make_synthetic;
use cdl_core::trainer::{init_dictionary, train, Method};
use cdl_core::types::{CoderKind, DataMatrix, Dictionary, TrainConfig};
use cdl_core::wav::ingest_wav;

#[derive(Parser)]
#[command(name = "cdl", version, about = "Dictionary learning with bounded self-coherence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract training frames from audio or matrix files.
    Ingest(IngestArgs),
    /// Generate planted-dictionary synthetic data.
    Synth(SynthArgs),
    /// Train a dictionary on a data matrix.
    Train(TrainArgs),
    /// Frame-quality metrics of a stored dictionary.
    Metrics(MetricsArgs),
    /// Singular-spectrum experiment over a method grid.
    #[command(name = "spectrum-exp")]
    SpectrumExp(ExpArgs),
    /// Generalization experiment (median OMP residual vs cardinality).
    #[command(name = "gen-exp")]
    GenExp(ExpArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Mono 16-bit PCM WAV to sample frames from.
    #[arg(long, conflicts_with = "csv")]
    wav: Option<PathBuf>,
    /// Matrix file to pass through (columns are observations).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Samples per frame (WAV input).
    #[arg(long, default_value_t = 160)]
    frame_len: usize,
    /// Number of frames to draw (WAV input).
    #[arg(long, default_value_t = 2000)]
    num_frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output matrix file; ".csv" writes CSV, anything else RAWF64.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Planted dictionary size L.
    #[arg(long, default_value_t = 40)]
    size: usize,
    #[arg(long, default_value_t = 3)]
    sparsity: usize,
    /// Number of observations.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Gaussian noise level.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output data matrix file.
    #[arg(long)]
    out: PathBuf,
    /// Optional output file for the planted dictionary.
    #[arg(long)]
    dict_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Idl,
    Ksvd,
    Inksvd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoderArg {
    Larc,
    Omp,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data matrix (columns are observations).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Self-coherence penalty weight (IDL).
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Coherence threshold (K-SVD replacement / INK-SVD).
    #[arg(long, default_value_t = 0.5)]
    mu_t: f64,
    #[arg(long, default_value_t = 25)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = CoderArg::Larc)]
    coder: CoderArg,
    /// Residual coherence threshold for LARC, cardinality for OMP.
    #[arg(long, default_value_t = 0.2)]
    coder_param: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of atoms (ignored with --init).
    #[arg(long, default_value_t = 40)]
    size: usize,
    /// Initial dictionary file; defaults to seeded data-column sampling.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    max_pair_updates: u64,
    #[arg(long, default_value_t = 10)]
    lbfgs_iters: usize,
    #[arg(long, default_value_t = 7)]
    lbfgs_memory: usize,
    /// Output prefix: writes <out>.dict.rawf64, <out>.history.jsonl and
    /// <out>.history.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Dictionary matrix file.
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct ExpArgs {
    /// key = value experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Report output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> cdl_core::Result<()> {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Synth(args) => synth(args),
        Command::Train(args) => run_train(args),
        Command::Metrics(args) => metrics(args),
        Command::SpectrumExp(args) => experiment(args, true),
        Command::GenExp(args) => experiment(args, false),
    }
}

fn ingest(args: IngestArgs) -> cdl_core::Result<()> {
    let data = match (&args.wav, &args.csv) {
        (Some(wav), None) => ingest_wav(wav, args.frame_len, args.num_frames, args.seed)?,
        (None, Some(path)) => {
            DataMatrix::new(load_matrix(path, MatrixFormat::for_path(path))?)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "exactly one of --wav or --csv is required".into(),
            ))
        }
    };
    save_matrix(data.matrix(), &args.out, MatrixFormat::for_path(&args.out))?;
    println!(
        "{}",
        serde_json::json!({
            "frames": data.len(),
            "frame_len": data.dim(),
            "out": args.out.display().to_string(),
        })
    );
    Ok(())
}

fn synth(args: SynthArgs) -> cdl_core::Result<()> {
    let (data, planted) =
        make_synthetic(args.dim, args.size, args.sparsity, args.n, args.noise, args.seed)?;
    save_matrix(data.matrix(), &args.out, MatrixFormat::for_path(&args.out))?;
    if let Some(dict_out) = &args.dict_out {
        save_matrix(planted.atoms(), dict_out, MatrixFormat::for_path(dict_out))?;
    }
    println!(
        "{}",
        serde_json::json!({
            "dim": args.dim,
            "size": args.size,
            "n": args.n,
            "planted_coherence": cdl_core::metrics::mutual_coherence(&planted)?,
            "welch_bound": welch_bound(args.dim, args.size),
            "out": args.out.display().to_string(),
        })
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> cdl_core::Result<()> {
    let data = DataMatrix::new(load_matrix(&args.data, MatrixFormat::for_path(&args.data))?)?;
    let init = match &args.init {
        Some(path) => Dictionary::new(load_matrix(path, MatrixFormat::for_path(path))?)?,
        None => init_dictionary(&data, args.size, args.seed)?,
    };
    let method = match args.method {
        MethodArg::Idl => Method::Idl { gamma: args.gamma },
        MethodArg::Ksvd => Method::KsvdReplace { mu_t: args.mu_t },
        MethodArg::Inksvd => Method::KsvdInksvd {
            mu_t: args.mu_t,
            max_pair_updates: args.max_pair_updates,
        },
    };
    let config = TrainConfig {
        gamma: args.gamma,
        iterations: args.iters,
        coder: match args.coder {
            CoderArg::Larc => CoderKind::Larc,
            CoderArg::Omp => CoderKind::Omp,
        },
        coder_param: args.coder_param,
        lbfgs_inner_iters: args.lbfgs_iters,
        lbfgs_memory: args.lbfgs_memory,
        seed: args.seed,
    };
    let out = train(&data, &init, &config, &method)?;

    let dict_path = suffixed(&args.out, ".dict.rawf64");
    save_matrix(out.dictionary.atoms(), &dict_path, MatrixFormat::RawF64)?;
    write_text(&suffixed(&args.out, ".history.jsonl"), &out.history.to_jsonl())?;
    write_text(&suffixed(&args.out, ".history.csv"), &out.history.to_csv())?;

    let last = out.history.records.last();
    println!(
        "{}",
        serde_json::json!({
            "method": method.label(),
            "iterations": out.history.len(),
            "final_approx_error": last.map(|r| r.approx_error),
            "final_coherence": last.map(|r| r.mutual_coherence),
            "welch_bound": welch_bound(out.dictionary.dim(), out.dictionary.size()),
            "total_wall_time": out.history.records.iter().map(|r| r.wall_time).sum::<f64>(),
            "decorrelation_converged": out.decorrelation.iter().all(|r| r.converged),
            "dict": dict_path.display().to_string(),
        })
    );
    Ok(())
}

fn metrics(args: MetricsArgs) -> cdl_core::Result<()> {
    let dict = Dictionary::new(load_matrix(&args.dict, MatrixFormat::for_path(&args.dict))?)?;
    let summary = gram_summary(&dict, args.bins)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match &args.out {
        Some(path) => write_text(path, &(json + "\n"))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn experiment(args: ExpArgs, spectrum: bool) -> cdl_core::Result<()> {
    let cfg = ExperimentConfig::parse_file(&args.config)?;
    let report = if spectrum {
        spectrum_experiment(&cfg)?
    } else {
        generalization_experiment(&cfg)?
    };
    for (label, seconds) in &report.wall_times {
        eprintln!("{label}: {seconds:.2}s");
    }
    let format = match args.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    export_report(&report, &args.out, format)?;
    println!(
        "{}",
        serde_json::json!({
            "report": args.out.display().to_string(),
            "grid_points": report.entries.len(),
            "generalization_rows": report.generalization.len(),
        })
    );
    Ok(())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_text(path: &Path, text: &str) -> cdl_core::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
