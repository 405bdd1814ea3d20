//! Signal-analysis coders: orthogonal matching pursuit with three stopping
//! rules, and a LARS-style homotopy coder terminated by the residual
//! coherence threshold (the rule used during training).
//!
//! Coders are pure given an immutable dictionary; distinct columns can be
//! coded concurrently with no shared state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{DataMatrix, Dictionary, SparseCoding};

/// Relative residual floor below which any coder stops.
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Condition-number guard for least-squares refits on selected atoms.
const CONDITION_LIMIT: f64 = 1e12;

/// Stopping criterion for [`omp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop once this many atoms are selected.
    Cardinality(usize),
    /// Stop once the residual l2 norm falls to or below this value.
    ResidualNorm(f64),
    /// Stop once max_j |<atom_j, r>| / |r| falls below this threshold.
    ResidualCoherence(f64),
}

impl StopRule {
    fn validate(&self, dict: &Dictionary) -> Result<()> {
        match *self {
            StopRule::Cardinality(k) => {
                let cap = dict.dim().min(dict.size());
                if k == 0 || k > cap {
                    return Err(Error::InvalidInput(format!(
                        "cardinality {k} outside [1, min(D, L)] = [1, {cap}]"
                    )));
                }
            }
            StopRule::ResidualNorm(eps) => {
                if !(eps > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "residual norm threshold must be positive, got {eps}"
                    )));
                }
            }
            StopRule::ResidualCoherence(mu) => {
                if !(mu > 0.0 && mu <= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "residual coherence threshold must lie in (0, 1], got {mu}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Coder selection for [`batch_code`] and the trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coder {
    Omp(StopRule),
    Larc { mu_dl: f64 },
}

/// Least squares of `x` on the atoms listed in `selected`, via normal
/// equations and a Cholesky factorization. `None` signals a numerically
/// rank-deficient selection (factorization failure or condition estimate
/// above `CONDITION_LIMIT`).
fn solve_selected_ls(
    atoms: &DMatrix<f64>,
    selected: &[usize],
    rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    let gram = selected_gram(atoms, selected);
    let b = DVector::from_fn(selected.len(), |i, _| atoms.column(selected[i]).dot(rhs));
    solve_spd(&gram, &b)
}

fn selected_gram(atoms: &DMatrix<f64>, selected: &[usize]) -> DMatrix<f64> {
    let k = selected.len();
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = atoms.column(selected[i]).dot(&atoms.column(selected[j]));
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    gram
}

fn solve_spd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = gram.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut dmin = f64::INFINITY;
    let mut dmax: f64 = 0.0;
    for i in 0..l.nrows() {
        dmin = dmin.min(l[(i, i)]);
        dmax = dmax.max(l[(i, i)]);
    }
    if !(dmin > 0.0) || (dmax / dmin).powi(2) > CONDITION_LIMIT {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Orthogonal matching pursuit for a single signal.
///
/// Greedy selection of the atom with the largest absolute correlation to the
/// residual (ties go to the lowest index), followed by a least-squares refit
/// of all selected coefficients. Stops on the given rule, when the residual
/// falls below `1e-12 |x|`, or when min(D, L) atoms are selected. An atom
/// whose inclusion makes the selection rank-deficient is dropped and marked
/// ineligible.
pub fn omp(dict: &Dictionary, x: &DVector<f64>, stop: &StopRule) -> Result<SparseCoding> {
    let pairs = omp_pairs(dict, x, stop)?;
    SparseCoding::from_columns(dict.size(), vec![pairs])
}

pub(crate) fn omp_pairs(
    dict: &Dictionary,
    x: &DVector<f64>,
    stop: &StopRule,
) -> Result<Vec<(usize, f64)>> {
    check_signal(dict, x)?;
    stop.validate(dict)?;

    let atoms = dict.atoms();
    let l = dict.size();
    let max_card = dict.dim().min(l);
    let norm_x = x.norm();
    if norm_x == 0.0 {
        return Ok(Vec::new());
    }

    let mut selected: Vec<usize> = Vec::new();
    let mut coeffs = DVector::<f64>::zeros(0);
    let mut residual = x.clone();
    let mut ineligible = vec![false; l];

    loop {
        let rn = residual.norm();
        let stop_hit = match *stop {
            StopRule::Cardinality(k) => selected.len() >= k,
            StopRule::ResidualNorm(eps) => rn <= eps,
            StopRule::ResidualCoherence(mu) => {
                rn == 0.0 || atoms.tr_mul(&residual).amax() / rn < mu
            }
        };
        if stop_hit || rn < RESIDUAL_FLOOR * norm_x || selected.len() >= max_card {
            break;
        }

        let corr = atoms.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..l {
            if ineligible[j] || selected.contains(&j) {
                continue;
            }
            let c = corr[j].abs();
            if best.map_or(true, |(_, b)| c > b) {
                best = Some((j, c));
            }
        }
        let Some((j, _)) = best else {
            break; // every remaining atom is ineligible
        };

        selected.push(j);
        match solve_selected_ls(atoms, &selected, x) {
            Some(c) => {
                residual = x - synth(atoms, &selected, &c);
                coeffs = c;
            }
            None => {
                // Near-duplicate of an already selected atom.
                selected.pop();
                ineligible[j] = true;
            }
        }
    }

    Ok(selected.into_iter().zip(coeffs.iter().copied()).collect())
}

fn synth(atoms: &DMatrix<f64>, selected: &[usize], coeffs: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(atoms.nrows());
    for (i, &j) in selected.iter().enumerate() {
        out.axpy(coeffs[i], &atoms.column(j), 1.0);
    }
    out
}

/// LARS-style homotopy coder with the residual-coherence stopping rule.
///
/// The coefficients advance equiangularly over the active set; the homotopy
/// terminates at the first breakpoint where max_j |<atom_j, r>| / |r| drops
/// below `mu_dl` (or the residual hits the floor). The returned coefficients
/// are the de-biased least-squares fit on the final active set. A singular
/// active Gram stops the homotopy early with the current coding.
pub fn larc(dict: &Dictionary, x: &DVector<f64>, mu_dl: f64) -> Result<SparseCoding> {
    let pairs = larc_pairs(dict, x, mu_dl)?;
    SparseCoding::from_columns(dict.size(), vec![pairs])
}

pub(crate) fn larc_pairs(dict: &Dictionary, x: &DVector<f64>, mu_dl: f64) -> Result<Vec<(usize, f64)>> {
    check_signal(dict, x)?;
    if !(mu_dl > 0.0 && mu_dl <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "residual coherence threshold must lie in (0, 1], got {mu_dl}"
        )));
    }

    let atoms = dict.atoms();
    let l = dict.size();
    let max_active = dict.dim().min(l);
    let norm_x = x.norm();
    if norm_x == 0.0 {
        return Ok(Vec::new());
    }

    let mut active: Vec<usize> = Vec::new();
    let mut approx = DVector::<f64>::zeros(x.len());

    loop {
        let residual = x - &approx;
        let rn = residual.norm();
        if rn < RESIDUAL_FLOOR * norm_x {
            break;
        }
        let corr = atoms.tr_mul(&residual);
        if corr.amax() / rn < mu_dl {
            break;
        }
        if active.len() >= max_active {
            break;
        }

        // Bring in the most correlated inactive atom (ties: lowest index).
        let mut best: Option<(usize, f64)> = None;
        for j in 0..l {
            if active.contains(&j) {
                continue;
            }
            let c = corr[j].abs();
            if best.map_or(true, |(_, b)| c > b) {
                best = Some((j, c));
            }
        }
        let Some((j_new, _)) = best else {
            break;
        };
        active.push(j_new);

        // Equiangular direction u with <atom_i, u> = sign(corr_i) on the
        // active set: u = D_A w, G_A w = s.
        let signs = DVector::from_fn(active.len(), |i, _| sign_of(corr[active[i]]));
        let gram = selected_gram(atoms, &active);
        let Some(w) = solve_spd(&gram, &signs) else {
            active.pop();
            break; // degenerate direction: stop early
        };
        let direction = synth(atoms, &active, &w);

        // Common active correlation magnitude decays as c_hat - gamma; the
        // full step gamma = c_hat reaches the least-squares fit on A.
        let c_hat = active.iter().map(|&i| corr[i].abs()).fold(0.0f64, f64::max);
        let mut gamma = c_hat;
        for j in 0..l {
            if active.contains(&j) {
                continue;
            }
            let aj = atoms.column(j).dot(&direction);
            for cand in [(c_hat - corr[j]) / (1.0 - aj), (c_hat + corr[j]) / (1.0 + aj)] {
                if cand.is_finite() && cand > 1e-12 && cand < gamma {
                    gamma = cand;
                }
            }
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            break;
        }
        approx.axpy(gamma, &direction, 1.0);
    }

    // De-biased fit on the final active set; drop trailing atoms if the
    // refit is degenerate (can only happen after an early stop).
    while !active.is_empty() {
        if let Some(c) = solve_selected_ls(atoms, &active, x) {
            return Ok(active.into_iter().zip(c.iter().copied()).collect());
        }
        active.pop();
    }
    Ok(Vec::new())
}

/// Applies a coder column by column; failures carry the column index.
pub fn batch_code(dict: &Dictionary, data: &DataMatrix, coder: &Coder) -> Result<SparseCoding> {
    if data.dim() != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data dim {} vs dictionary dim {}",
            data.dim(),
            dict.dim()
        )));
    }
    let mut columns = Vec::with_capacity(data.len());
    for n in 0..data.len() {
        let x = DVector::from(data.column(n));
        let pairs = match coder {
            Coder::Omp(stop) => omp_pairs(dict, &x, stop),
            Coder::Larc { mu_dl } => larc_pairs(dict, &x, *mu_dl),
        }
        .map_err(|e| e.with_context(&format!("column {n}")))?;
        columns.push(pairs);
    }
    SparseCoding::from_columns(dict.size(), columns)
}

fn check_signal(dict: &Dictionary, x: &DVector<f64>) -> Result<()> {
    if x.len() != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} vs dictionary dim {}",
            x.len(),
            dict.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal contains a non-finite entry".into()));
    }
    Ok(())
}

fn sign_of(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
