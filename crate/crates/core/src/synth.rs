//! Synthetic planted-dictionary data: the desk-scale stand-in for large
//! audio corpora.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{DataMatrix, Dictionary};

/// Draws a planted dictionary of normalized Gaussian atoms and N
/// observations, each a k-sparse Gaussian combination of planted atoms on a
/// uniform random support, plus `noise_sigma` times Gaussian noise.
pub fn make_synthetic(
    dim: usize,
    size: usize,
    sparsity: usize,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(DataMatrix, Dictionary)> {
    if dim == 0 || size == 0 || n == 0 {
        return Err(Error::InvalidInput(
            "synthetic dimensions must be positive".into(),
        ));
    }
    if sparsity == 0 || sparsity > dim.min(size) {
        return Err(Error::InvalidInput(format!(
            "sparsity {sparsity} outside [1, min(D, L)] = [1, {}]",
            dim.min(size)
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = Dictionary::new(DMatrix::from_fn(dim, size, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }))?;

    let mut columns = DMatrix::zeros(dim, n);
    for c in 0..n {
        let support = sample(&mut rng, size, sparsity);
        let mut x = DVector::zeros(dim);
        for j in support {
            let coeff: f64 = rng.sample(StandardNormal);
            x += planted.atom(j) * coeff;
        }
        if noise_sigma > 0.0 {
            for i in 0..dim {
                x[i] += noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        columns.set_column(c, &x);
    }

    Ok((DataMatrix::new(columns)?, planted))
}
