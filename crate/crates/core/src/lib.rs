//! Dictionary learning with bounded self-coherence.
//!
//! This crate trains over-complete dictionaries for sparse coding while
//! controlling how similar the atoms are allowed to become. The joint
//! update minimizes
//!
//! ```text
//! |X - DC|_F^2  +  gamma |Dt D - I|_F^2
//! ```
//!
//! by a few L-BFGS steps per alternation, so a single knob `gamma` moves
//! the trained dictionary anywhere between "best fit to the data" and "as
//! close to an equiangular tight frame as the shape allows". Two classic
//! baselines are included for comparison: K-SVD with coherence-threshold
//! atom replacement, and K-SVD followed by INK-SVD pairwise decorrelation.
//!
//! Module map:
//!
//! - [`types`]: dictionaries, data matrices, sparse codings, train config.
//! - [`io`]: CSV and RAWF64 matrix files.
//! - [`metrics`]: coherence, Welch bound, ERC cardinality, Gram histogram,
//!   singular spectra.
//! - [`coding`]: OMP and the LARC coder (LARS homotopy with a residual
//!   coherence stop).
//! - [`idl`]: penalized objective, analytic gradient, L-BFGS, atom
//!   renormalization.
//! - [`baselines`]: K-SVD atom update / replacement, INK-SVD decorrelation.
//! - [`trainer`]: the alternating-minimization loop and history capture.
//! - [`synth`], [`wav`]: planted-dictionary data and WAV frame extraction.
//! - [`experiments`]: spectrum / generalization experiment runners and
//!   report export.

pub mod baselines;
pub mod coding;
pub mod error;
pub mod experiments;
pub mod idl;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod trainer;
pub mod types;
pub mod wav;

pub use error::{Error, Result};
pub use types::{CoderKind, DataMatrix, Dictionary, SparseCoding, TrainConfig};
