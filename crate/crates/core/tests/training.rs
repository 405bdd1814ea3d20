//! End-to-end training checks on planted-dictionary data.

use cdl_core::metrics::mutual_coherence;
use cdl_core::synth::make_synthetic;
use cdl_core::trainer::{init_dictionary, train, Method};
use cdl_core::types::{CoderKind, TrainConfig};

/// Fraction of planted atoms matched by some learned atom at the given
/// absolute inner product.
fn recovery_rate(
    planted: &cdl_core::Dictionary,
    learned: &cdl_core::Dictionary,
    threshold: f64,
) -> f64 {
    let mut hits = 0usize;
    for i in 0..planted.size() {
        let p = planted.atom(i);
        let best = (0..learned.size())
            .map(|j| learned.atom(j).dot(&p).abs())
            .fold(0.0f64, f64::max);
        if best >= threshold {
            hits += 1;
        }
    }
    hits as f64 / planted.size() as f64
}

#[test]
fn idl_recovers_most_planted_atoms() {
    // 3-sparse noiseless observations of a planted dictionary, coded at the
    // true cardinality (the controlled-experiment coder).
    let (data, planted) = make_synthetic(16, 40, 3, 2000, 0.0, 7).unwrap();
    let init = init_dictionary(&data, 40, 7).unwrap();
    let config = TrainConfig {
        iterations: 25,
        coder: CoderKind::Omp,
        coder_param: 3.0,
        seed: 7,
        ..TrainConfig::default()
    };
    let out = train(&data, &init, &config, &Method::Idl { gamma: 0.0 }).unwrap();
    let rate = recovery_rate(&planted, &out.dictionary, 0.99);
    assert!(
        rate >= 0.6,
        "recovered only {:.0}% of planted atoms",
        rate * 100.0
    );
    assert_eq!(out.history.len(), 25);
}

#[test]
fn coherence_penalty_tightens_the_trained_frame() {
    let (data, _) = make_synthetic(8, 20, 2, 400, 0.05, 11).unwrap();
    let init = init_dictionary(&data, 20, 11).unwrap();
    let config = TrainConfig {
        iterations: 10,
        seed: 11,
        ..TrainConfig::default()
    };
    let loose = train(&data, &init, &config, &Method::Idl { gamma: 0.0 }).unwrap();
    let tight = train(&data, &init, &config, &Method::Idl { gamma: 50.0 }).unwrap();
    let mu_loose = mutual_coherence(&loose.dictionary).unwrap();
    let mu_tight = mutual_coherence(&tight.dictionary).unwrap();
    assert!(
        mu_tight < mu_loose,
        "penalty did not reduce coherence: {mu_loose} -> {mu_tight}"
    );
}
