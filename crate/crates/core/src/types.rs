//! Core domain types: dictionaries, data matrices, sparse codings and the
//! training configuration shared by every other module.
//!
//! All types are immutable after construction and safe to share between
//! threads.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns with an l2 norm below this are rejected as degenerate atoms.
pub const ATOM_NORM_FLOOR: f64 = 1e-12;

/// A D x L matrix whose columns (atoms) have unit l2 norm.
///
/// Over-complete dictionaries (L > D) are permitted but not required.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    /// Builds a dictionary from a raw matrix, normalizing every column.
    ///
    /// A column with norm below `ATOM_NORM_FLOOR` is an error: a zero atom is
    /// always a bug upstream, so it is rejected rather than silently fixed.
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        if raw.nrows() == 0 || raw.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "dictionary must be non-empty, got {}x{}",
                raw.nrows(),
                raw.ncols()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dictionary contains a non-finite entry".into()));
        }
        let mut atoms = raw;
        for j in 0..atoms.ncols() {
            let norm = atoms.column(j).norm();
            if norm < ATOM_NORM_FLOOR {
                return Err(Error::InvalidInput(format!(
                    "atom {j} has norm {norm:.3e} below {ATOM_NORM_FLOOR:.0e}"
                )));
            }
            atoms.column_mut(j).unscale_mut(norm);
        }
        Ok(Dictionary { atoms })
    }

    /// Signal dimension D (rows).
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms L (columns).
    pub fn size(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> DVectorView<'_, f64> {
        self.atoms.column(j)
    }

    /// Gram matrix Dt * D (L x L).
    pub fn gram(&self) -> DMatrix<f64> {
        self.atoms.tr_mul(&self.atoms)
    }
}

/// A D x N matrix of observations stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    columns: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.nrows() == 0 || columns.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must be non-empty, got {}x{}",
                columns.nrows(),
                columns.ncols()
            )));
        }
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data matrix contains a non-finite entry".into()));
        }
        Ok(DataMatrix { columns })
    }

    /// Signal dimension D (rows).
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of observations N (columns).
    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, n: usize) -> DVectorView<'_, f64> {
        self.columns.column(n)
    }
}

/// Sparse coefficient matrix with logical shape L x N, stored as one
/// (atom index, coefficient) pair list per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoding {
    num_atoms: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl SparseCoding {
    /// An all-zero coding with `n` empty columns.
    pub fn empty(num_atoms: usize, n: usize) -> Self {
        SparseCoding {
            num_atoms,
            columns: vec![Vec::new(); n],
        }
    }

    /// Builds a coding from per-column pair lists, validating indices.
    pub fn from_columns(num_atoms: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (n, col) in columns.iter().enumerate() {
            let mut seen = vec![false; num_atoms];
            for &(j, v) in col {
                if j >= num_atoms {
                    return Err(Error::InvalidInput(format!(
                        "column {n}: atom index {j} out of range (L = {num_atoms})"
                    )));
                }
                if seen[j] {
                    return Err(Error::InvalidInput(format!(
                        "column {n}: duplicate atom index {j}"
                    )));
                }
                seen[j] = true;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "column {n}: coefficient for atom {j} is not finite"
                    )));
                }
            }
        }
        Ok(SparseCoding { num_atoms, columns })
    }

    /// Logical row count L.
    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }

    /// Logical column count N.
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// The (atom index, coefficient) pairs of column `n`.
    pub fn column(&self, n: usize) -> &[(usize, f64)] {
        &self.columns[n]
    }

    /// Number of stored pairs in column `n` (the l0 "norm").
    pub fn cardinality(&self, n: usize) -> usize {
        self.columns[n].len()
    }

    pub fn columns(&self) -> &[Vec<(usize, f64)>] {
        &self.columns
    }

    /// Dense L x N view of the coding.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.num_atoms, self.columns.len());
        for (n, col) in self.columns.iter().enumerate() {
            for &(j, v) in col {
                dense[(j, n)] = v;
            }
        }
        dense
    }

    /// D * C for a raw D x L atom matrix: the synthesized signals, D x N.
    pub fn synthesize(&self, atoms: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if atoms.ncols() != self.num_atoms {
            return Err(Error::DimensionMismatch(format!(
                "atom matrix has {} columns, coding expects {}",
                atoms.ncols(),
                self.num_atoms
            )));
        }
        let mut out = DMatrix::zeros(atoms.nrows(), self.columns.len());
        for (n, col) in self.columns.iter().enumerate() {
            let mut out_col = out.column_mut(n);
            for &(j, v) in col {
                out_col.axpy(v, &atoms.column(j), 1.0);
            }
        }
        Ok(out)
    }

    /// C * Ct (L x L), accumulated from per-column outer products.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.num_atoms, self.num_atoms);
        for col in &self.columns {
            for &(j, vj) in col {
                for &(k, vk) in col {
                    g[(j, k)] += vj * vk;
                }
            }
        }
        g
    }

    /// X * Ct (D x L) for a D x N data matrix.
    pub fn cross(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} columns, coding has {}",
                data.ncols(),
                self.columns.len()
            )));
        }
        let mut b = DMatrix::zeros(data.nrows(), self.num_atoms);
        for (n, col) in self.columns.iter().enumerate() {
            for &(j, v) in col {
                b.column_mut(j).axpy(v, &data.column(n), 1.0);
            }
        }
        Ok(b)
    }

    /// Residual x_n - D c_n for column `n`.
    pub fn column_residual(&self, data: &DMatrix<f64>, atoms: &DMatrix<f64>, n: usize) -> DVector<f64> {
        let mut r = DVector::from(data.column(n));
        for &(j, v) in &self.columns[n] {
            r.axpy(-v, &atoms.column(j), 1.0);
        }
        r
    }

    /// Squared Frobenius approximation error |X - D C|_F^2.
    pub fn approx_error(&self, data: &DMatrix<f64>, atoms: &DMatrix<f64>) -> Result<f64> {
        if data.nrows() != atoms.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "data dim {} vs dictionary dim {}",
                data.nrows(),
                atoms.nrows()
            )));
        }
        if data.ncols() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} columns, coding has {}",
                data.ncols(),
                self.columns.len()
            )));
        }
        let mut err = 0.0;
        for n in 0..data.ncols() {
            err += self.column_residual(data, atoms, n).norm_squared();
        }
        Ok(err)
    }
}

/// Which sparse coder the trainer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoderKind {
    Omp,
    Larc,
}

/// Training configuration for the alternating-minimization driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Lagrange multiplier on the self-coherence penalty.
    pub gamma: f64,
    /// Number of alternations.
    pub iterations: usize,
    pub coder: CoderKind,
    /// Cardinality K for OMP, residual coherence threshold mu_dl for LARC.
    pub coder_param: f64,
    pub lbfgs_inner_iters: usize,
    pub lbfgs_memory: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.0,
            iterations: 25,
            coder: CoderKind::Larc,
            coder_param: 0.2,
            lbfgs_inner_iters: 10,
            lbfgs_memory: 7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Checks everything that does not depend on data dimensions.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be >= 1".into()));
        }
        if self.lbfgs_inner_iters == 0 || self.lbfgs_memory == 0 {
            return Err(Error::InvalidInput("L-BFGS iteration count and memory must be >= 1".into()));
        }
        match self.coder {
            CoderKind::Larc => {
                if !(self.coder_param > 0.0 && self.coder_param <= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "LARC threshold mu_dl must lie in (0, 1], got {}",
                        self.coder_param
                    )));
                }
            }
            CoderKind::Omp => {
                if self.coder_param < 1.0 || self.coder_param.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "OMP cardinality must be a positive integer, got {}",
                        self.coder_param
                    )));
                }
            }
        }
        Ok(())
    }
}
