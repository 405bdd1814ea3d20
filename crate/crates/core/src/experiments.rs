//! Experiment runners: the spectrum experiment (singular spectra of
//! dictionaries trained under a grid of coherence controls) and the
//! generalization experiment (median OMP residual versus cardinality on
//! held-out data), plus report assembly and export.
//!
//! Reports are deterministic under a fixed seed: two runs with the same
//! config produce byte-identical JSON. Wall-clock timings are therefore
//! kept out of the serialized report.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baselines::DecorrelationReport;
use crate::coding::{omp_pairs, StopRule};
use crate::error::{Error, Result};
use crate::io::{load_matrix, MatrixFormat};
use crate::metrics::{etf_flat_value, etf_size_feasible, gram_summary, GramSummary};
use crate::synth::make_synthetic;
use crate::trainer::{init_dictionary, train, Method};
use crate::types::{CoderKind, DataMatrix, Dictionary, TrainConfig};

/// One row of the generalization table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRow {
    pub label: String,
    pub cardinality: usize,
    /// Median over test columns of |x - Dc| / |x|.
    pub median_residual: f64,
}

/// Per-grid-point results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub label: String,
    pub gram: GramSummary,
    /// Standard deviation of the singular spectrum (flatness measure).
    pub spectrum_std: f64,
    /// Final approximation error |X - DC|_F^2 on the training data.
    pub approx_error: f64,
    /// One report per training iteration for the INK-SVD method.
    pub decorrelation: Vec<DecorrelationReport>,
}

/// Full experiment report; serializes losslessly to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: BTreeMap<String, String>,
    pub etf_flat: f64,
    pub etf_feasible: bool,
    pub entries: Vec<ReportEntry>,
    pub generalization: Vec<GenRow>,
    /// (label, seconds) per grid point. Excluded from serialization so
    /// reports stay byte-identical across runs.
    #[serde(skip)]
    pub wall_times: Vec<(String, f64)>,
}

/// Report output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Where an experiment's observations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Planted-dictionary synthetic data.
    Synthetic,
    /// Matrix file; CSV or RAWF64 by extension.
    File(String),
}

/// Parsed experiment configuration (key = value lines, '#' comments).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Held-out observations for the generalization experiment; required
    /// when `data` is a file.
    pub test_data: Option<String>,
    pub synth_dim: usize,
    pub synth_sparsity: usize,
    pub synth_n: usize,
    pub synth_noise: f64,
    pub test_n: usize,
    pub dict_size: usize,
    pub iterations: usize,
    pub coder: CoderKind,
    pub coder_param: f64,
    pub lbfgs_iters: usize,
    pub lbfgs_memory: usize,
    pub seed: u64,
    pub idl_gammas: Vec<f64>,
    pub ksvd_mu_ts: Vec<f64>,
    pub inksvd_mu_ts: Vec<f64>,
    pub max_pair_updates: u64,
    pub cardinalities: Vec<usize>,
    pub num_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Synthetic,
            test_data: None,
            synth_dim: 16,
            synth_sparsity: 3,
            synth_n: 2000,
            synth_noise: 0.05,
            test_n: 400,
            dict_size: 40,
            iterations: 25,
            coder: CoderKind::Larc,
            coder_param: 0.2,
            lbfgs_iters: 10,
            lbfgs_memory: 7,
            seed: 42,
            idl_gammas: vec![0.0, 10.0, 50.0],
            ksvd_mu_ts: vec![1.0, 0.5],
            inksvd_mu_ts: vec![0.9, 0.5],
            max_pair_updates: 1_000_000,
            cardinalities: vec![1, 2, 4, 8, 16],
            num_bins: 50,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            let ctx = |what: &str| {
                Error::Parse(format!("config line {}: bad {what}: {value:?}", lineno + 1))
            };
            match key {
                "data" => {
                    cfg.data = if value == "synth" {
                        DataSource::Synthetic
                    } else {
                        DataSource::File(value.to_string())
                    };
                }
                "test_data" => cfg.test_data = Some(value.to_string()),
                "synth_dim" => cfg.synth_dim = value.parse().map_err(|_| ctx("integer"))?,
                "synth_sparsity" => cfg.synth_sparsity = value.parse().map_err(|_| ctx("integer"))?,
                "synth_n" => cfg.synth_n = value.parse().map_err(|_| ctx("integer"))?,
                "synth_noise" => cfg.synth_noise = value.parse().map_err(|_| ctx("number"))?,
                "test_n" => cfg.test_n = value.parse().map_err(|_| ctx("integer"))?,
                "dict_size" => cfg.dict_size = value.parse().map_err(|_| ctx("integer"))?,
                "iterations" => cfg.iterations = value.parse().map_err(|_| ctx("integer"))?,
                "coder" => {
                    cfg.coder = match value {
                        "larc" => CoderKind::Larc,
                        "omp" => CoderKind::Omp,
                        _ => return Err(ctx("coder (larc|omp)")),
                    };
                }
                "coder_param" => cfg.coder_param = value.parse().map_err(|_| ctx("number"))?,
                "lbfgs_iters" => cfg.lbfgs_iters = value.parse().map_err(|_| ctx("integer"))?,
                "lbfgs_memory" => cfg.lbfgs_memory = value.parse().map_err(|_| ctx("integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| ctx("integer"))?,
                "idl_gammas" => cfg.idl_gammas = parse_list(value).map_err(|_| ctx("number list"))?,
                "ksvd_mu_ts" => cfg.ksvd_mu_ts = parse_list(value).map_err(|_| ctx("number list"))?,
                "inksvd_mu_ts" => {
                    cfg.inksvd_mu_ts = parse_list(value).map_err(|_| ctx("number list"))?
                }
                "max_pair_updates" => {
                    cfg.max_pair_updates = value.parse().map_err(|_| ctx("integer"))?
                }
                "cardinalities" => {
                    cfg.cardinalities = parse_list(value).map_err(|_| ctx("integer list"))?
                }
                "num_bins" => cfg.num_bins = value.parse().map_err(|_| ctx("integer"))?,
                other => {
                    return Err(Error::Parse(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )));
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The grid of training methods, in IDL, K-SVD, INK-SVD order.
    pub fn grid(&self) -> Vec<Method> {
        let mut grid = Vec::new();
        for &gamma in &self.idl_gammas {
            grid.push(Method::Idl { gamma });
        }
        for &mu_t in &self.ksvd_mu_ts {
            grid.push(Method::KsvdReplace { mu_t });
        }
        for &mu_t in &self.inksvd_mu_ts {
            grid.push(Method::KsvdInksvd {
                mu_t,
                max_pair_updates: self.max_pair_updates,
            });
        }
        grid
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: 0.0,
            iterations: self.iterations,
            coder: self.coder,
            coder_param: self.coder_param,
            lbfgs_inner_iters: self.lbfgs_iters,
            lbfgs_memory: self.lbfgs_memory,
            seed: self.seed,
        }
    }

    /// Sorted key/value echo embedded in every report.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let data = match &self.data {
            DataSource::Synthetic => "synth".to_string(),
            DataSource::File(p) => p.clone(),
        };
        map.insert("data".into(), data);
        if let Some(t) = &self.test_data {
            map.insert("test_data".into(), t.clone());
        }
        map.insert("synth_dim".into(), self.synth_dim.to_string());
        map.insert("synth_sparsity".into(), self.synth_sparsity.to_string());
        map.insert("synth_n".into(), self.synth_n.to_string());
        map.insert("synth_noise".into(), self.synth_noise.to_string());
        map.insert("test_n".into(), self.test_n.to_string());
        map.insert("dict_size".into(), self.dict_size.to_string());
        map.insert("iterations".into(), self.iterations.to_string());
        map.insert(
            "coder".into(),
            match self.coder {
                CoderKind::Larc => "larc".into(),
                CoderKind::Omp => "omp".into(),
            },
        );
        map.insert("coder_param".into(), self.coder_param.to_string());
        map.insert("lbfgs_iters".into(), self.lbfgs_iters.to_string());
        map.insert("lbfgs_memory".into(), self.lbfgs_memory.to_string());
        map.insert("seed".into(), self.seed.to_string());
        map.insert("idl_gammas".into(), join_list(&self.idl_gammas));
        map.insert("ksvd_mu_ts".into(), join_list(&self.ksvd_mu_ts));
        map.insert("inksvd_mu_ts".into(), join_list(&self.inksvd_mu_ts));
        map.insert("max_pair_updates".into(), self.max_pair_updates.to_string());
        map.insert("cardinalities".into(), join_list(&self.cardinalities));
        map.insert("num_bins".into(), self.num_bins.to_string());
        map
    }

    fn load_train_data(&self) -> Result<DataMatrix> {
        match &self.data {
            DataSource::Synthetic => {
                let (data, _) = make_synthetic(
                    self.synth_dim,
                    self.dict_size,
                    self.synth_sparsity,
                    self.synth_n,
                    self.synth_noise,
                    self.seed,
                )?;
                Ok(data)
            }
            DataSource::File(path) => {
                let path = Path::new(path);
                DataMatrix::new(load_matrix(path, MatrixFormat::for_path(path))?)
            }
        }
    }

    /// Train/test split: synthetic data draws one pool of synth_n + test_n
    /// columns from the same planted dictionary, so the two are disjoint.
    fn load_split_data(&self) -> Result<(DataMatrix, DataMatrix)> {
        match &self.data {
            DataSource::Synthetic => {
                let total = self.synth_n + self.test_n;
                let (pool, _) = make_synthetic(
                    self.synth_dim,
                    self.dict_size,
                    self.synth_sparsity,
                    total,
                    self.synth_noise,
                    self.seed,
                )?;
                let m = pool.matrix();
                let train = DataMatrix::new(m.columns(0, self.synth_n).into_owned())?;
                let test = DataMatrix::new(m.columns(self.synth_n, self.test_n).into_owned())?;
                Ok((train, test))
            }
            DataSource::File(train_path) => {
                let test_path = self.test_data.as_ref().ok_or_else(|| {
                    Error::InvalidInput(
                        "generalization experiment on file data needs test_data".into(),
                    )
                })?;
                let tp = Path::new(train_path);
                let sp = Path::new(test_path);
                Ok((
                    DataMatrix::new(load_matrix(tp, MatrixFormat::for_path(tp))?)?,
                    DataMatrix::new(load_matrix(sp, MatrixFormat::for_path(sp))?)?,
                ))
            }
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, ()> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| ()))
        .collect()
}

fn join_list<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Dictionaries trained over a grid, one per method, all from the same
/// seeded initialization.
pub struct TrainedGrid {
    pub dictionaries: Vec<(String, Dictionary)>,
    pub entries: Vec<ReportEntry>,
    pub wall_times: Vec<(String, f64)>,
}

/// Trains one dictionary per grid point from a shared initialization and
/// summarizes each one.
pub fn run_spectrum_experiment(
    data: &DataMatrix,
    base: &TrainConfig,
    dict_size: usize,
    grid: &[Method],
    num_bins: usize,
) -> Result<TrainedGrid> {
    let init = init_dictionary(data, dict_size, base.seed)?;
    let mut dictionaries = Vec::new();
    let mut entries = Vec::new();
    let mut wall_times = Vec::new();
    for method in grid {
        let label = method.label();
        let started = Instant::now();
        let out = train(data, &init, base, method)
            .map_err(|e| e.with_context(&format!("grid point {label}")))?;
        wall_times.push((label.clone(), started.elapsed().as_secs_f64()));
        let gram = gram_summary(&out.dictionary, num_bins)?;
        entries.push(ReportEntry {
            label: label.clone(),
            spectrum_std: std_dev(&gram.singular_values),
            approx_error: out
                .history
                .records
                .last()
                .map(|r| r.approx_error)
                .unwrap_or(f64::NAN),
            gram,
            decorrelation: out.decorrelation,
        });
        dictionaries.push((label, out.dictionary));
    }
    Ok(TrainedGrid {
        dictionaries,
        entries,
        wall_times,
    })
}

/// Generalization table: for every dictionary and cardinality, the median
/// over test columns of the OMP residual norm, normalized per signal.
/// Cardinality 0 is the empty coding (median 1 on non-zero signals).
pub fn run_generalization_experiment(
    test: &DataMatrix,
    dictionaries: &[(String, Dictionary)],
    cardinalities: &[usize],
) -> Result<Vec<GenRow>> {
    let mut rows = Vec::new();
    for (label, dict) in dictionaries {
        if test.dim() != dict.dim() {
            return Err(Error::DimensionMismatch(format!(
                "test data dim {} vs dictionary {label} dim {}",
                test.dim(),
                dict.dim()
            )));
        }
        for &k in cardinalities {
            let mut residuals = Vec::with_capacity(test.len());
            for n in 0..test.len() {
                let x = DVector::from(test.column(n));
                let norm = x.norm();
                if norm == 0.0 {
                    residuals.push(0.0);
                    continue;
                }
                if k == 0 {
                    residuals.push(1.0);
                    continue;
                }
                let pairs = omp_pairs(dict, &x, &StopRule::Cardinality(k))
                    .map_err(|e| e.with_context(&format!("{label}, K={k}, column {n}")))?;
                let mut r = x;
                for &(j, v) in &pairs {
                    r += dict.atom(j) * (-v);
                }
                residuals.push(r.norm() / norm);
            }
            rows.push(GenRow {
                label: label.clone(),
                cardinality: k,
                median_residual: median(&mut residuals),
            });
        }
    }
    Ok(rows)
}

fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Full spectrum experiment from a parsed config.
pub fn spectrum_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let data = cfg.load_train_data()?;
    let grid = cfg.grid();
    let trained =
        run_spectrum_experiment(&data, &cfg.train_config(), cfg.dict_size, &grid, cfg.num_bins)?;
    Ok(ExperimentReport {
        config: cfg.echo(),
        etf_flat: etf_flat_value(data.dim(), cfg.dict_size),
        etf_feasible: etf_size_feasible(data.dim(), cfg.dict_size),
        entries: trained.entries,
        generalization: Vec::new(),
        wall_times: trained.wall_times,
    })
}

/// Full generalization experiment from a parsed config: trains the grid on
/// the training split, then sweeps OMP cardinalities on the held-out split.
pub fn generalization_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (train_data, test_data) = cfg.load_split_data()?;
    let grid = cfg.grid();
    let trained = run_spectrum_experiment(
        &train_data,
        &cfg.train_config(),
        cfg.dict_size,
        &grid,
        cfg.num_bins,
    )?;
    let generalization =
        run_generalization_experiment(&test_data, &trained.dictionaries, &cfg.cardinalities)?;
    Ok(ExperimentReport {
        config: cfg.echo(),
        etf_flat: etf_flat_value(train_data.dim(), cfg.dict_size),
        etf_feasible: etf_size_feasible(train_data.dim(), cfg.dict_size),
        entries: trained.entries,
        generalization,
        wall_times: trained.wall_times,
    })
}

/// Serializes a report. JSON is lossless and byte-deterministic; CSV
/// flattens each table into its own file next to a manifest at `path`.
pub fn export_report(report: &ExperimentReport, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let mut text =
                serde_json::to_string_pretty(report).expect("report serializes to JSON");
            text.push('\n');
            fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => export_csv(report, path),
    }
}

fn export_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let stem = path.with_extension("");
    let stem = stem.to_string_lossy();
    let summary_path = format!("{stem}_summary.csv");
    let spectra_path = format!("{stem}_spectra.csv");
    let gen_path = format!("{stem}_generalization.csv");
    let decorr_path = format!("{stem}_decorrelation.csv");

    let mut summary = String::from("label,mu,welch,etf_flat,spectrum_std,approx_error\n");
    let mut spectra = String::from("label,index,sigma\n");
    let mut decorr = String::from("label,iter,pair_updates,sweeps,converged,final_coherence\n");
    for entry in &report.entries {
        summary.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            entry.label,
            entry.gram.mutual_coherence,
            entry.gram.welch_bound,
            entry.gram.etf_flat,
            entry.spectrum_std,
            entry.approx_error,
        ));
        for (i, s) in entry.gram.singular_values.iter().enumerate() {
            spectra.push_str(&format!("{},{},{:.17e}\n", entry.label, i, s));
        }
        for (i, rep) in entry.decorrelation.iter().enumerate() {
            decorr.push_str(&format!(
                "{},{},{},{},{},{:.17e}\n",
                entry.label, i, rep.pair_updates, rep.sweeps, rep.converged, rep.final_coherence
            ));
        }
    }
    let mut gen = String::from("label,cardinality,median_residual\n");
    for row in &report.generalization {
        gen.push_str(&format!(
            "{},{},{:.17e}\n",
            row.label, row.cardinality, row.median_residual
        ));
    }

    fs::write(&summary_path, summary).map_err(|e| Error::io(&*summary_path, e))?;
    fs::write(&spectra_path, spectra).map_err(|e| Error::io(&*spectra_path, e))?;
    fs::write(&gen_path, gen).map_err(|e| Error::io(&*gen_path, e))?;
    fs::write(&decorr_path, decorr).map_err(|e| Error::io(&*decorr_path, e))?;

    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# experiment report manifest").map_err(|e| Error::io(path, e))?;
    for (k, v) in &report.config {
        writeln!(w, "config.{k} = {v}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(w, "etf_flat = {}", report.etf_flat).map_err(|e| Error::io(path, e))?;
    writeln!(w, "etf_feasible = {}", report.etf_feasible).map_err(|e| Error::io(path, e))?;
    for f in [&summary_path, &spectra_path, &gen_path, &decorr_path] {
        writeln!(w, "file = {f}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            synth_dim: 6,
            synth_sparsity: 2,
            synth_n: 60,
            synth_noise: 0.05,
            test_n: 20,
            dict_size: 10,
            iterations: 2,
            idl_gammas: vec![0.0, 5.0],
            ksvd_mu_ts: vec![1.0],
            inksvd_mu_ts: vec![0.8],
            cardinalities: vec![0, 1, 2, 4],
            num_bins: 10,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_parses_and_echoes() {
        let text = "\n# comment\ndata = synth\nsynth_dim = 8  # inline\nidl_gammas = 0, 1, 2\ncardinalities = 1,2\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.synth_dim, 8);
        assert_eq!(cfg.idl_gammas, vec![0.0, 1.0, 2.0]);
        assert_eq!(cfg.cardinalities, vec![1, 2]);
        let echo = cfg.echo();
        assert_eq!(echo["synth_dim"], "8");
        assert_eq!(echo["idl_gammas"], "0,1,2");
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::parse("no_such_key = 1").is_err());
        assert!(ExperimentConfig::parse("synth_dim = abc").is_err());
        assert!(ExperimentConfig::parse("just words").is_err());
    }

    #[test]
    fn empty_grid_still_yields_a_valid_report() {
        let cfg = ExperimentConfig {
            idl_gammas: vec![],
            ksvd_mu_ts: vec![],
            inksvd_mu_ts: vec![],
            synth_n: 30,
            synth_dim: 4,
            dict_size: 6,
            iterations: 1,
            ..ExperimentConfig::default()
        };
        let report = spectrum_experiment(&cfg).unwrap();
        assert!(report.entries.is_empty());
        assert!(!report.config.is_empty());
        let json = serde_json::to_string(&report).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.config, report.config);
    }

    #[test]
    fn spectrum_experiment_covers_the_grid() {
        let cfg = tiny_config();
        let report = spectrum_experiment(&cfg).unwrap();
        assert_eq!(report.entries.len(), 4);
        assert_eq!(report.entries[0].label, "idl(gamma=0)");
        assert_eq!(report.wall_times.len(), 4);
        for entry in &report.entries {
            assert!(entry.gram.mutual_coherence >= entry.gram.welch_bound - 1e-12);
            assert_eq!(entry.gram.singular_values.len(), 6);
        }
        // INK-SVD entries carry per-iteration decorrelation reports.
        let inksvd = report.entries.iter().find(|e| e.label.starts_with("inksvd")).unwrap();
        assert_eq!(inksvd.decorrelation.len(), cfg.iterations);
    }

    #[test]
    fn generalization_rows_and_monotonicity() {
        let cfg = tiny_config();
        let report = generalization_experiment(&cfg).unwrap();
        assert_eq!(report.generalization.len(), 4 * cfg.cardinalities.len());
        // K = 0 medians are exactly 1; curves never increase with K.
        for (label, _) in report.entries.iter().map(|e| (&e.label, ())) {
            let curve: Vec<&GenRow> = report
                .generalization
                .iter()
                .filter(|r| &r.label == label)
                .collect();
            assert_eq!(curve[0].cardinality, 0);
            assert_eq!(curve[0].median_residual, 1.0);
            for pair in curve.windows(2) {
                assert!(
                    pair[1].median_residual <= pair[0].median_residual + 1e-12,
                    "{label}: median rose from K={} to K={}",
                    pair[0].cardinality,
                    pair[1].cardinality
                );
            }
        }
    }

    #[test]
    fn json_export_roundtrips_and_is_deterministic() {
        let cfg = ExperimentConfig {
            iterations: 1,
            synth_n: 40,
            test_n: 10,
            synth_dim: 4,
            dict_size: 6,
            synth_sparsity: 1,
            idl_gammas: vec![1.0],
            ksvd_mu_ts: vec![],
            inksvd_mu_ts: vec![],
            cardinalities: vec![1, 2],
            ..ExperimentConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        export_report(&generalization_experiment(&cfg).unwrap(), &p1, ReportFormat::Json).unwrap();
        export_report(&generalization_experiment(&cfg).unwrap(), &p2, ReportFormat::Json).unwrap();
        let (b1, b2) = (fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(b1, b2, "reports differ across identical runs");

        let back: ExperimentReport =
            serde_json::from_str(&String::from_utf8(b1).unwrap()).unwrap();
        let report = generalization_experiment(&cfg).unwrap();
        assert_eq!(back.entries, report.entries);
        assert_eq!(back.generalization, report.generalization);
    }

    #[test]
    fn csv_export_row_counts() {
        let cfg = tiny_config();
        let report = generalization_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("report.csv");
        export_report(&report, &manifest, ReportFormat::Csv).unwrap();
        let gen = fs::read_to_string(dir.path().join("report_generalization.csv")).unwrap();
        // Header plus grid points x cardinalities.
        assert_eq!(gen.lines().count(), 1 + 4 * cfg.cardinalities.len());
        let spectra = fs::read_to_string(dir.path().join("report_spectra.csv")).unwrap();
        assert_eq!(spectra.lines().count(), 1 + 4 * cfg.synth_dim);
        assert!(fs::read_to_string(&manifest).unwrap().contains("file = "));
    }
}
