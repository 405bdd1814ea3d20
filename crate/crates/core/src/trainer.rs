//! Alternating-minimization driver: sparse coding step plus one of three
//! dictionary update steps, with seeded initialization and per-iteration
//! history capture.
//!
//! The loop is a sequential state machine; coders are pure, so the coding
//! step could process columns concurrently without changing results.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{inksvd_decorrelate, ksvd_atom_update, ksvd_replace, DecorrelationReport};
use crate::coding::{batch_code, Coder, StopRule};
use crate::error::{Error, Result};
use crate::idl::{idl_dictionary_update, idl_objective, LbfgsParams};
use crate::metrics::{mutual_coherence, singular_spectrum};
use crate::types::{CoderKind, DataMatrix, Dictionary, SparseCoding, TrainConfig, ATOM_NORM_FLOOR};

/// Dictionary update strategy for [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    /// Joint update minimizing the penalized objective with this gamma.
    Idl { gamma: f64 },
    /// Per-atom K-SVD update followed by coherence-threshold replacement.
    KsvdReplace { mu_t: f64 },
    /// Per-atom K-SVD update followed by INK-SVD pairwise decorrelation.
    KsvdInksvd { mu_t: f64, max_pair_updates: u64 },
}

impl Method {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::Idl { gamma } => {
                if !(gamma >= 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
                }
            }
            Method::KsvdReplace { mu_t } => check_mu_t(mu_t)?,
            Method::KsvdInksvd { mu_t, max_pair_updates } => {
                check_mu_t(mu_t)?;
                if max_pair_updates == 0 {
                    return Err(Error::InvalidInput("max_pair_updates must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Short label for reports, e.g. "idl(gamma=10)".
    pub fn label(&self) -> String {
        match *self {
            Method::Idl { gamma } => format!("idl(gamma={gamma})"),
            Method::KsvdReplace { mu_t } => format!("ksvd(mu_t={mu_t})"),
            Method::KsvdInksvd { mu_t, .. } => format!("inksvd(mu_t={mu_t})"),
        }
    }
}

fn check_mu_t(mu_t: f64) -> Result<()> {
    if !(mu_t > 0.0 && mu_t <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "mu_t must lie in (0, 1], got {mu_t}"
        )));
    }
    Ok(())
}

/// One completed training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// |X - DC|_F^2 at the end of the iteration.
    pub approx_error: f64,
    /// Penalized objective with the gamma in play (0 for baselines unless
    /// configured otherwise).
    pub penalized_objective: f64,
    pub mutual_coherence: f64,
    pub singular_values: Vec<f64>,
    /// Wall-clock seconds; inherently non-deterministic, excluded from
    /// determinism comparisons.
    pub wall_time: f64,
}

/// Per-iteration records of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("history serializes"));
            out.push('\n');
        }
        out
    }

    /// CSV with the singular values joined by ';' in the final column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iter,approx_error,penalized_objective,mutual_coherence,wall_time,singular_values\n",
        );
        for rec in &self.records {
            let sigma = rec
                .singular_values
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.6e},{}\n",
                rec.iter,
                rec.approx_error,
                rec.penalized_objective,
                rec.mutual_coherence,
                rec.wall_time,
                sigma
            ));
        }
        out
    }

    /// Equality that ignores the wall-time field.
    pub fn same_numbers(&self, other: &TrainHistory) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.iter == b.iter
                    && a.approx_error == b.approx_error
                    && a.penalized_objective == b.penalized_objective
                    && a.mutual_coherence == b.mutual_coherence
                    && a.singular_values == b.singular_values
            })
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dictionary: Dictionary,
    /// Coding from the final iteration's sparse-coding step.
    pub coding: SparseCoding,
    pub history: TrainHistory,
    /// One report per iteration for [`Method::KsvdInksvd`], empty otherwise.
    pub decorrelation: Vec<DecorrelationReport>,
}

/// Draws `size` data columns (seeded, without replacement while possible),
/// normalizes them and returns them as the initial dictionary.
pub fn init_dictionary(data: &DataMatrix, size: usize, seed: u64) -> Result<Dictionary> {
    use rand::Rng;
    use rand::SeedableRng;

    if size == 0 {
        return Err(Error::InvalidInput("dictionary size must be >= 1".into()));
    }
    let pool: Vec<usize> = (0..data.len())
        .filter(|&n| data.column(n).norm() > ATOM_NORM_FLOOR)
        .collect();
    if pool.is_empty() {
        return Err(Error::InvalidInput(
            "cannot initialize a dictionary from all-zero data".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = if pool.len() >= size {
        rand::seq::index::sample(&mut rng, pool.len(), size)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    } else {
        // Fewer usable columns than atoms: draw with replacement.
        (0..size).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    };
    let mut atoms = DMatrix::zeros(data.dim(), size);
    for (j, &n) in chosen.iter().enumerate() {
        let col = data.column(n);
        atoms.set_column(j, &(&col / col.norm()));
    }
    Dictionary::new(atoms)
}

/// Runs `config.iterations` alternations of sparse coding and the given
/// dictionary update from the supplied initial dictionary.
///
/// Per iteration: (1) code all columns with the configured coder, (2) run
/// the method's dictionary step, (3) replace atoms the coding left unused
/// by the largest-residual data columns, (4) append a history record. For
/// the INK-SVD method the unused-atom replacement happens before the
/// decorrelation so that a converged sweep still certifies the recorded
/// coherence.
pub fn train(
    data: &DataMatrix,
    init: &Dictionary,
    config: &TrainConfig,
    method: &Method,
) -> Result<TrainOutput> {
    config.validate()?;
    method.validate()?;
    if init.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial dictionary dim {} vs data dim {}",
            init.dim(),
            data.dim()
        )));
    }
    let coder = coder_from_config(config, init)?;
    let lbfgs = LbfgsParams {
        memory: config.lbfgs_memory,
        max_iters: config.lbfgs_inner_iters,
        ..LbfgsParams::default()
    };
    let report_gamma = match *method {
        Method::Idl { gamma } => gamma,
        _ => config.gamma,
    };

    let mut dict = init.clone();
    let mut history = TrainHistory::default();
    let mut decorrelation = Vec::new();
    let mut last_coding = SparseCoding::empty(init.size(), data.len());

    for iter in 0..config.iterations {
        let started = Instant::now();
        let mut coding = batch_code(&dict, data, &coder)
            .map_err(|e| e.with_context(&format!("iteration {iter}")))?;

        match *method {
            Method::Idl { gamma } => {
                let (next, outcome) =
                    idl_dictionary_update(&dict, data, &coding, gamma, &lbfgs, config.seed)?;
                debug_assert!(
                    outcome.objective <= outcome.objective_start * (1.0 + 1e-12) + 1e-12,
                    "dictionary step increased the objective"
                );
                dict = next;
                dict = replace_unused_atoms(&dict, data, &coding)?;
            }
            Method::KsvdReplace { mu_t } => {
                let (next, recoded) = ksvd_atom_update(&dict, data, &coding)?;
                coding = recoded;
                let out = ksvd_replace(&next, data, &coding, mu_t)?;
                dict = out.dictionary;
                dict = replace_unused_atoms(&dict, data, &coding)?;
            }
            Method::KsvdInksvd { mu_t, max_pair_updates } => {
                let (next, recoded) = ksvd_atom_update(&dict, data, &coding)?;
                coding = recoded;
                dict = replace_unused_atoms(&next, data, &coding)?;
                let (next, report) = inksvd_decorrelate(&dict, mu_t, max_pair_updates)?;
                dict = next;
                decorrelation.push(report);
            }
        }

        history.records.push(IterationRecord {
            iter,
            approx_error: coding.approx_error(data.matrix(), dict.atoms())?,
            penalized_objective: idl_objective(dict.atoms(), data, &coding, report_gamma)?,
            mutual_coherence: if dict.size() >= 2 {
                mutual_coherence(&dict)?
            } else {
                0.0
            },
            singular_values: singular_spectrum(&dict),
            wall_time: started.elapsed().as_secs_f64(),
        });
        last_coding = coding;
    }

    Ok(TrainOutput {
        dictionary: dict,
        coding: last_coding,
        history,
        decorrelation,
    })
}

fn coder_from_config(config: &TrainConfig, init: &Dictionary) -> Result<Coder> {
    match config.coder {
        CoderKind::Larc => Ok(Coder::Larc {
            mu_dl: config.coder_param,
        }),
        CoderKind::Omp => {
            let k = config.coder_param as usize;
            let cap = init.dim().min(init.size());
            if k == 0 || k > cap {
                return Err(Error::InvalidInput(format!(
                    "OMP cardinality {k} outside [1, min(D, L)] = [1, {cap}]"
                )));
            }
            Ok(Coder::Omp(StopRule::Cardinality(k)))
        }
    }
}

/// Replaces atoms with empty support by the data columns with the largest
/// residual norms (normalized), one distinct column per atom. Runs out of
/// usable columns gracefully.
fn replace_unused_atoms(
    dict: &Dictionary,
    data: &DataMatrix,
    coding: &SparseCoding,
) -> Result<Dictionary> {
    let mut used = vec![false; dict.size()];
    for col in coding.columns() {
        for &(j, _) in col {
            used[j] = true;
        }
    }
    let unused: Vec<usize> = (0..dict.size()).filter(|&j| !used[j]).collect();
    if unused.is_empty() {
        return Ok(dict.clone());
    }

    let mut residuals: Vec<(usize, f64)> = (0..data.len())
        .map(|n| {
            (
                n,
                coding.column_residual(data.matrix(), dict.atoms(), n).norm(),
            )
        })
        .filter(|&(n, _)| data.column(n).norm() > ATOM_NORM_FLOOR)
        .collect();
    residuals.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut atoms = dict.atoms().clone();
    for (slot, &j) in unused.iter().enumerate() {
        let Some(&(n, _)) = residuals.get(slot) else {
            break;
        };
        let col = data.column(n);
        atoms.set_column(j, &(&col / col.norm()));
    }
    Dictionary::new(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DataMatrix {
        DataMatrix::new(DMatrix::from_fn(d, n, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_data(&mut rng, 6, 30);
        let a = init_dictionary(&data, 10, 7).unwrap();
        let b = init_dictionary(&data, 10, 7).unwrap();
        assert_eq!(a.atoms(), b.atoms());
        for j in 0..10 {
            assert!((a.atom(j).norm() - 1.0).abs() < 1e-9);
        }
        let c = init_dictionary(&data, 10, 8).unwrap();
        assert_ne!(a.atoms(), c.atoms());
    }

    #[test]
    fn init_with_size_equal_to_n_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_data(&mut rng, 4, 6);
        let dict = init_dictionary(&data, 6, 3).unwrap();
        // Every normalized data column appears exactly once.
        let mut matched = vec![false; 6];
        for j in 0..6 {
            let atom = dict.atom(j);
            let hit = (0..6).find(|&n| {
                let col = data.column(n);
                let normalized = &col / col.norm();
                (atom - normalized).norm() < 1e-12
            });
            let n = hit.expect("atom is not a data column");
            assert!(!matched[n], "column {n} drawn twice");
            matched[n] = true;
        }
    }

    #[test]
    fn init_rejects_all_zero_data() {
        let data = DataMatrix::new(DMatrix::zeros(3, 4)).unwrap();
        assert!(init_dictionary(&data, 2, 0).is_err());
    }

    #[test]
    fn init_draws_with_replacement_when_short_of_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_data(&mut rng, 4, 3);
        let dict = init_dictionary(&data, 8, 0).unwrap();
        assert_eq!(dict.size(), 8);
    }

    #[test]
    fn orthonormal_data_is_a_fixed_point() {
        // Data = L distinct orthonormal columns, init = those columns,
        // one iteration with gamma = 0: zero approximation error.
        let data = DataMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let init = Dictionary::new(DMatrix::identity(4, 4)).unwrap();
        let config = TrainConfig {
            iterations: 1,
            coder: CoderKind::Omp,
            coder_param: 1.0,
            ..TrainConfig::default()
        };
        let out = train(&data, &init, &config, &Method::Idl { gamma: 0.0 }).unwrap();
        assert_eq!(out.history.len(), 1);
        assert!(out.history.records[0].approx_error < 1e-20);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_data(&mut rng, 8, 60);
        let init = init_dictionary(&data, 12, 5).unwrap();
        let config = TrainConfig {
            iterations: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        for method in [
            Method::Idl { gamma: 2.0 },
            Method::KsvdReplace { mu_t: 0.9 },
            Method::KsvdInksvd { mu_t: 0.8, max_pair_updates: 100_000 },
        ] {
            let a = train(&data, &init, &config, &method).unwrap();
            let b = train(&data, &init, &config, &method).unwrap();
            assert_eq!(a.dictionary.atoms(), b.dictionary.atoms(), "{method:?}");
            assert_eq!(a.coding, b.coding, "{method:?}");
            assert!(a.history.same_numbers(&b.history), "{method:?}");
        }
    }

    #[test]
    fn idl_dictionary_step_never_increases_objective() {
        // Replays the alternation and checks the update sub-step alone.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_data(&mut rng, 6, 40);
        let mut dict = init_dictionary(&data, 10, 1).unwrap();
        let gamma = 5.0;
        let params = LbfgsParams::default();
        for _ in 0..8 {
            let coding = batch_code(&dict, &data, &Coder::Larc { mu_dl: 0.2 }).unwrap();
            let before = idl_objective(dict.atoms(), &data, &coding, gamma).unwrap();
            let (next, outcome) =
                idl_dictionary_update(&dict, &data, &coding, gamma, &params, 0).unwrap();
            assert!(outcome.objective <= before * (1.0 + 1e-12) + 1e-12);
            assert!(
                (outcome.objective_start - before).abs() <= 1e-9 * before.abs().max(1.0),
                "evaluation routes disagree"
            );
            dict = next;
        }
    }

    #[test]
    fn inksvd_training_keeps_coherence_below_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_data(&mut rng, 8, 80);
        let init = init_dictionary(&data, 16, 2).unwrap();
        let config = TrainConfig {
            iterations: 5,
            ..TrainConfig::default()
        };
        let mu_t = 0.6;
        let out = train(
            &data,
            &init,
            &config,
            &Method::KsvdInksvd { mu_t, max_pair_updates: 1_000_000 },
        )
        .unwrap();
        assert_eq!(out.decorrelation.len(), 5);
        for (report, record) in out.decorrelation.iter().zip(&out.history.records) {
            assert!(report.converged);
            assert!(
                record.mutual_coherence <= mu_t + 1e-9,
                "iteration {} coherence {}",
                record.iter,
                record.mutual_coherence
            );
        }
    }

    #[test]
    fn history_has_one_record_per_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = random_data(&mut rng, 5, 30);
        let init = init_dictionary(&data, 8, 3).unwrap();
        let config = TrainConfig {
            iterations: 7,
            ..TrainConfig::default()
        };
        let out = train(&data, &init, &config, &Method::KsvdReplace { mu_t: 1.0 }).unwrap();
        assert_eq!(out.history.len(), 7);
        for (i, rec) in out.history.records.iter().enumerate() {
            assert_eq!(rec.iter, i);
            assert!(rec.approx_error.is_finite());
            assert!(rec.penalized_objective.is_finite());
        }
    }

    #[test]
    fn unused_atoms_are_replaced_by_max_residual_column() {
        // Data lives in span{e1, e2}; atom e3 can never be selected.
        let mut x = DMatrix::zeros(3, 4);
        x[(0, 0)] = 1.0;
        x[(1, 1)] = 1.0;
        x[(0, 2)] = 0.5;
        x[(1, 3)] = 5.0;
        x[(2, 3)] = 0.0;
        let data = DataMatrix::new(x).unwrap();
        let dict = Dictionary::new(DMatrix::identity(3, 3)).unwrap();
        let coding = batch_code(
            &dict,
            &data,
            &Coder::Omp(StopRule::Cardinality(1)),
        )
        .unwrap();
        let replaced = replace_unused_atoms(&dict, &data, &coding).unwrap();
        // Atom 2 was unused; every column is fit exactly by one atom, so all
        // residuals are zero and the largest-residual pick is column 0 by
        // the index tie-break.
        let expected = data.column(0) / data.column(0).norm();
        assert!((replaced.atom(2) - expected).norm() < 1e-12);
    }

    #[test]
    fn history_serializes_to_jsonl_and_csv() {
        let history = TrainHistory {
            records: vec![IterationRecord {
                iter: 0,
                approx_error: 1.5,
                penalized_objective: 2.5,
                mutual_coherence: 0.4,
                singular_values: vec![1.2, 0.8],
                wall_time: 0.01,
            }],
        };
        let jsonl = history.to_jsonl();
        assert_eq!(jsonl.lines().count(), 1);
        let parsed: IterationRecord = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(parsed, history.records[0]);
        let csv = history.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("iter,approx_error"));
    }
}
