//! Frame-quality analysis: self-coherence, Welch bound, ERC cardinality,
//! Gram off-diagonal histogram, singular spectrum and ETF reference values.
//!
//! All functions are pure and safe to call concurrently.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Dictionary;

/// Histogram of absolute off-diagonal Gram entries over [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// num_bins + 1 equal-width bin edges from 0 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Aggregated frame statistics of a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSummary {
    #[serde(rename = "mu")]
    pub mutual_coherence: f64,
    #[serde(rename = "welch")]
    pub welch_bound: f64,
    pub hist_edges: Vec<f64>,
    pub hist_counts: Vec<u64>,
    #[serde(rename = "sigma")]
    pub singular_values: Vec<f64>,
    pub etf_flat: f64,
}

/// Maximum absolute off-diagonal Gram entry, clamped to [0, 1].
///
/// Undefined for a single atom.
pub fn mutual_coherence(dict: &Dictionary) -> Result<f64> {
    if dict.size() < 2 {
        return Err(Error::InvalidInput(
            "mutual coherence needs at least two atoms".into(),
        ));
    }
    let g = dict.gram();
    let mut mu: f64 = 0.0;
    for d in 0..g.nrows() {
        for e in (d + 1)..g.ncols() {
            mu = mu.max(g[(d, e)].abs());
        }
    }
    // Inner products of unit vectors can exceed 1 by rounding.
    Ok(mu.clamp(0.0, 1.0))
}

/// Lower bound sqrt((L - D) / (D (L - 1))) on the coherence of a D x L
/// unit-norm dictionary; 0 whenever an orthonormal set exists (L <= D).
pub fn welch_bound(dim: usize, size: usize) -> f64 {
    if size <= 1 || size <= dim || dim == 0 {
        return 0.0;
    }
    let (d, l) = (dim as f64, size as f64);
    ((l - d) / (d * (l - 1.0))).sqrt()
}

/// Largest cardinality k with k < (1 + 1/mu) / 2: supports of exact
/// k-sparse signals are recovered by OMP below this bound.
pub fn erc_max_cardinality(mu: f64) -> Result<usize> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "ERC bound needs coherence in (0, 1], got {mu}"
        )));
    }
    let bound = 0.5 * (1.0 + 1.0 / mu);
    // Strict inequality; the slack keeps exact-integer bounds (e.g. mu = 1/3)
    // strict despite rounding in 1/mu.
    Ok((bound - 1e-9).floor().max(0.0) as usize)
}

/// Counts |Gram off-diagonal| values into `num_bins` equal-width bins over
/// [0, 1], scanning the upper triangle (L(L-1)/2 values).
pub fn gram_offdiag_histogram(dict: &Dictionary, num_bins: usize) -> Result<Histogram> {
    if dict.size() < 2 {
        return Err(Error::InvalidInput(
            "Gram histogram needs at least two atoms".into(),
        ));
    }
    if num_bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    let g = dict.gram();
    let mut counts = vec![0u64; num_bins];
    for d in 0..g.nrows() {
        for e in (d + 1)..g.ncols() {
            let v = g[(d, e)].abs().clamp(0.0, 1.0);
            let bin = ((v * num_bins as f64) as usize).min(num_bins - 1);
            counts[bin] += 1;
        }
    }
    let edges = (0..=num_bins).map(|i| i as f64 / num_bins as f64).collect();
    Ok(Histogram { edges, counts })
}

/// Singular values of the atom matrix, descending, length min(D, L).
///
/// Computed from the eigenvalues of the smaller Gram (D Dt or Dt D);
/// eigenvalues pushed slightly negative by rounding are clamped to zero.
pub fn singular_spectrum(dict: &Dictionary) -> Vec<f64> {
    let a = dict.atoms();
    let gram = if dict.dim() <= dict.size() {
        a * a.transpose() // D x D
    } else {
        a.tr_mul(a) // L x L
    };
    symmetric_psd_singular_values(&gram)
}

fn symmetric_psd_singular_values(gram: &DMatrix<f64>) -> Vec<f64> {
    let eigen = gram.clone().symmetric_eigen();
    let mut sv: Vec<f64> = eigen
        .eigenvalues
        .iter()
        .map(|&lambda| {
            debug_assert!(lambda > -1e-8, "Gram eigenvalue {lambda} far below zero");
            lambda.max(0.0).sqrt()
        })
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Height sqrt(L/D) of the flat singular spectrum of a D x L ETF.
pub fn etf_flat_value(dim: usize, size: usize) -> f64 {
    (size as f64 / dim as f64).sqrt()
}

/// Whether a real D x L ETF can exist at all: L <= D(D+1)/2.
pub fn etf_size_feasible(dim: usize, size: usize) -> bool {
    size <= dim * (dim + 1) / 2
}

/// Bundles coherence, Welch bound, histogram, spectrum and the ETF
/// reference value into one summary.
pub fn gram_summary(dict: &Dictionary, num_bins: usize) -> Result<GramSummary> {
    let hist = gram_offdiag_histogram(dict, num_bins)?;
    Ok(GramSummary {
        mutual_coherence: mutual_coherence(dict)?,
        welch_bound: welch_bound(dict.dim(), dict.size()),
        hist_edges: hist.edges,
        hist_counts: hist.counts,
        singular_values: singular_spectrum(dict),
        etf_flat: etf_flat_value(dict.dim(), dict.size()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Three unit vectors in the plane at 90, 210 and 330 degrees: an exact
    /// equiangular tight frame with all pairwise |cos| = 0.5.
    pub(crate) fn mercedes_benz() -> Dictionary {
        let angles = [90f64, 210.0, 330.0];
        let mut m = DMatrix::zeros(2, 3);
        for (j, deg) in angles.iter().enumerate() {
            let t = deg.to_radians();
            m[(0, j)] = t.cos();
            m[(1, j)] = t.sin();
        }
        Dictionary::new(m).unwrap()
    }

    fn random_dictionary(rng: &mut ChaCha8Rng, d: usize, l: usize) -> Dictionary {
        let m = DMatrix::from_fn(d, l, |_, _| rng.gen_range(-1.0..1.0));
        Dictionary::new(m).unwrap()
    }

    #[test]
    fn coherence_of_identity_is_zero() {
        let dict = Dictionary::new(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(mutual_coherence(&dict).unwrap(), 0.0);
    }

    #[test]
    fn coherence_of_duplicated_atom_is_one() {
        let m = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let dict = Dictionary::new(m).unwrap();
        assert!((mutual_coherence(&dict).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_of_mercedes_benz_is_half() {
        // All off-diagonals are cos 120 deg = -0.5.
        let mu = mutual_coherence(&mercedes_benz()).unwrap();
        assert!((mu - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coherence_needs_two_atoms() {
        let dict = Dictionary::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert!(mutual_coherence(&dict).is_err());
    }

    #[test]
    fn welch_bound_values() {
        assert_eq!(welch_bound(5, 5), 0.0);
        assert_eq!(welch_bound(5, 3), 0.0);
        assert!((welch_bound(2, 3) - 0.5).abs() < 1e-15); // sqrt(1/4)
        assert!((welch_bound(160, 1000) - 0.072493).abs() < 1e-6);
    }

    #[test]
    fn erc_cardinality_values() {
        assert_eq!(erc_max_cardinality(1.0).unwrap(), 0);
        assert_eq!(erc_max_cardinality(1.0 / 3.0).unwrap(), 1);
        assert_eq!(erc_max_cardinality(0.072493).unwrap(), 7);
        assert!(erc_max_cardinality(0.0).is_err());
        assert!(erc_max_cardinality(-0.5).is_err());
    }

    #[test]
    fn histogram_identity_all_in_first_bin() {
        let dict = Dictionary::new(DMatrix::identity(4, 4)).unwrap();
        let h = gram_offdiag_histogram(&dict, 10).unwrap();
        assert_eq!(h.counts[0], 6);
        assert_eq!(h.counts.iter().sum::<u64>(), 6);
    }

    #[test]
    fn histogram_mercedes_benz_mass_at_half() {
        // All pair magnitudes are 0.5 up to one ulp of trig rounding, which
        // straddles the 10-bin edge at exactly 0.5.
        let h = gram_offdiag_histogram(&mercedes_benz(), 10).unwrap();
        assert_eq!(h.counts[4] + h.counts[5], 3);
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
        // With 7 bins, 0.5 sits strictly inside bin 3.
        let h = gram_offdiag_histogram(&mercedes_benz(), 7).unwrap();
        assert_eq!(h.counts[3], 3);
    }

    #[test]
    fn histogram_total_count_is_upper_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dict = random_dictionary(&mut rng, 8, 16);
        let h = gram_offdiag_histogram(&dict, 7).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 120); // 16*15/2
        assert_eq!(h.edges.len(), 8);
    }

    #[test]
    fn spectrum_of_identity_is_ones() {
        let dict = Dictionary::new(DMatrix::identity(5, 5)).unwrap();
        for s in singular_spectrum(&dict) {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_of_mercedes_benz_is_flat() {
        // E Et = (3/2) I for this frame.
        let sv = singular_spectrum(&mercedes_benz());
        assert_eq!(sv.len(), 2);
        for s in sv {
            assert!((s - 1.5f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn spectrum_length_is_min_dim_for_tall_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dict = random_dictionary(&mut rng, 6, 3); // D > L
        assert_eq!(singular_spectrum(&dict).len(), 3);
    }

    #[test]
    fn etf_flat_values() {
        assert!((etf_flat_value(160, 1000) - 2.5).abs() < 1e-12);
        assert_eq!(etf_flat_value(7, 7), 1.0);
        assert!((etf_flat_value(2, 3) - 1.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn etf_feasibility_flag() {
        assert!(etf_size_feasible(2, 3)); // 3 <= 3
        assert!(!etf_size_feasible(2, 4));
        assert!(etf_size_feasible(16, 40)); // 40 <= 136
    }

    #[test]
    fn summary_identity() {
        let dict = Dictionary::new(DMatrix::identity(4, 4)).unwrap();
        let s = gram_summary(&dict, 10).unwrap();
        assert_eq!(s.mutual_coherence, 0.0);
        assert_eq!(s.welch_bound, 0.0);
        assert_eq!(s.etf_flat, 1.0);
        assert!(s.singular_values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn summary_mercedes_benz_attains_bound() {
        let s = gram_summary(&mercedes_benz(), 10).unwrap();
        assert!((s.mutual_coherence - s.welch_bound).abs() < 1e-8);
        // Equality certificate: flat spectrum + equal off-diagonals.
        for v in &s.singular_values {
            assert!((v - s.etf_flat).abs() < 1e-9);
        }
    }

    #[test]
    fn summary_random_strictly_above_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dict = random_dictionary(&mut rng, 8, 16);
        let s = gram_summary(&dict, 10).unwrap();
        assert!(s.mutual_coherence > s.welch_bound);
    }

    #[test]
    fn summary_json_keys() {
        let s = gram_summary(&mercedes_benz(), 4).unwrap();
        let json = serde_json::to_value(&s).unwrap();
        for key in ["mu", "welch", "hist_edges", "hist_counts", "sigma", "etf_flat"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }

    #[test]
    fn welch_bound_holds_over_random_dictionaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..1000 {
            let d = rng.gen_range(2..=16);
            let l = rng.gen_range(d..=4 * d);
            if l < 2 {
                continue;
            }
            let dict = random_dictionary(&mut rng, d, l);
            let mu = mutual_coherence(&dict).unwrap();
            assert!(mu >= welch_bound(d, l) - 1e-12);
        }
    }

    proptest! {
        #[test]
        fn coherence_invariant_under_permutation_and_sign_flips(
            seed in any::<u64>(),
            d in 2usize..8,
            extra in 0usize..8,
        ) {
            let l = d + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dict = random_dictionary(&mut rng, d, l);
            let mu = mutual_coherence(&dict).unwrap();

            // Random permutation + sign flips of the columns.
            let mut perm: Vec<usize> = (0..l).collect();
            for i in (1..l).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let mut permuted = DMatrix::zeros(d, l);
            for (dst, &src) in perm.iter().enumerate() {
                let sign = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
                permuted.set_column(dst, &(dict.atom(src) * sign));
            }
            let mu2 = mutual_coherence(&Dictionary::new(permuted).unwrap()).unwrap();
            prop_assert!((mu - mu2).abs() < 1e-12);
        }

        #[test]
        fn spectrum_sum_of_squares_is_atom_count(
            seed in any::<u64>(),
            d in 2usize..10,
            extra in 0usize..12,
        ) {
            let l = d + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dict = random_dictionary(&mut rng, d, l);
            let sumsq: f64 = singular_spectrum(&dict).iter().map(|s| s * s).sum();
            prop_assert!((sumsq - l as f64).abs() <= 1e-6 * l as f64);
        }
    }
}
