//! Incoherent dictionary update: the penalized objective
//! |X - DC|_F^2 + gamma |Dt D - I|_F^2, its analytic gradient, a
//! limited-memory BFGS descent and the post-optimization atom
//! renormalization.
//!
//! The penalty couples all atoms, so they are optimized jointly; the strict
//! unit-norm constraint is enforced only after the descent finishes.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{DataMatrix, Dictionary, SparseCoding, ATOM_NORM_FLOOR};

/// Limited-memory BFGS settings.
///
/// The line search is backtracking Armijo only; curvature pairs that fail
/// the positivity test are skipped instead.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsParams {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo_c: f64,
    /// Step shrink factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        LbfgsParams {
            memory: 7,
            max_iters: 10,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
        }
    }
}

impl LbfgsParams {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.max_iters == 0 || self.max_backtracks == 0 {
            return Err(Error::InvalidInput("L-BFGS counts must be positive".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.armijo_c > 0.0) || !(self.shrink > 0.0 && self.shrink < 1.0)
        {
            return Err(Error::InvalidInput("L-BFGS tolerances out of range".into()));
        }
        Ok(())
    }
}

/// Result of an L-BFGS run.
#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub minimizer: DMatrix<f64>,
    pub objective_start: f64,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Set when the Armijo search exhausted its backtracks; the outcome then
    /// holds the last accepted iterate.
    pub line_search_failed: bool,
}

/// Precomputed products that make repeated objective/gradient evaluations
/// for a fixed coding independent of N.
struct PenalizedProblem {
    coding_gram: DMatrix<f64>, // C Ct, L x L
    data_cross: DMatrix<f64>,  // X Ct, D x L
    data_sq: f64,              // |X|_F^2
    gamma: f64,
}

impl PenalizedProblem {
    fn new(data: &DataMatrix, coding: &SparseCoding, gamma: f64) -> Result<Self> {
        Ok(PenalizedProblem {
            coding_gram: coding.gram(),
            data_cross: coding.cross(data.matrix())?,
            data_sq: data.matrix().norm_squared(),
            gamma,
        })
    }

    /// Objective value; may be non-finite for wild iterates, which the line
    /// search treats as a rejection.
    fn objective(&self, atoms: &DMatrix<f64>) -> f64 {
        let da = atoms * &self.coding_gram;
        let fit = self.data_sq - 2.0 * atoms.dot(&self.data_cross) + atoms.dot(&da);
        fit + self.gamma * penalty_value(atoms)
    }

    fn gradient(&self, atoms: &DMatrix<f64>) -> DMatrix<f64> {
        let mut grad = (atoms * &self.coding_gram - &self.data_cross) * 2.0;
        if self.gamma != 0.0 {
            let frame = atoms * atoms.transpose(); // D Dt
            grad += (frame * atoms - atoms) * (4.0 * self.gamma);
        }
        grad
    }
}

/// |Dt D - I|_F^2.
fn penalty_value(atoms: &DMatrix<f64>) -> f64 {
    let mut gram = atoms.tr_mul(atoms);
    for i in 0..gram.nrows() {
        gram[(i, i)] -= 1.0;
    }
    gram.norm_squared()
}

fn check_problem_dims(
    atoms: &DMatrix<f64>,
    data: &DataMatrix,
    coding: &SparseCoding,
    gamma: f64,
) -> Result<()> {
    if atoms.nrows() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary dim {} vs data dim {}",
            atoms.nrows(),
            data.dim()
        )));
    }
    if atoms.ncols() != coding.num_atoms() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} atoms, coding expects {}",
            atoms.ncols(),
            coding.num_atoms()
        )));
    }
    if data.len() != coding.num_columns() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, coding has {}",
            data.len(),
            coding.num_columns()
        )));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Penalized objective |X - DC|_F^2 + gamma |Dt D - I|_F^2, evaluated
/// directly from the residual matrix and the Gram deviation.
///
/// The raw atom matrix need not have unit columns; the penalty's -I term
/// charges norm deviations.
pub fn idl_objective(
    dict_raw: &DMatrix<f64>,
    data: &DataMatrix,
    coding: &SparseCoding,
    gamma: f64,
) -> Result<f64> {
    check_problem_dims(dict_raw, data, coding, gamma)?;
    let residual = data.matrix() - coding.synthesize(dict_raw)?;
    let value = residual.norm_squared() + gamma * penalty_value(dict_raw);
    if !value.is_finite() {
        return Err(Error::Numerical("objective evaluated to a non-finite value".into()));
    }
    Ok(value)
}

/// The same objective through the trace expansions
/// tr{Ct Dt D C} - 2 tr{Xt D C} + tr{Xt X} and
/// tr{Dt D Dt D} - 2 tr{Dt D} + L.
///
/// Kept as an independent evaluation route for cross-checking
/// [`idl_objective`].
pub fn idl_objective_trace(
    dict_raw: &DMatrix<f64>,
    data: &DataMatrix,
    coding: &SparseCoding,
    gamma: f64,
) -> Result<f64> {
    check_problem_dims(dict_raw, data, coding, gamma)?;
    let gram = dict_raw.tr_mul(dict_raw); // Dt D, L x L

    // tr{Ct (Dt D) C} = sum_n c_n' (Dt D) c_n over sparse columns.
    let mut fit = 0.0;
    for col in coding.columns() {
        for &(j, vj) in col {
            for &(k, vk) in col {
                fit += vj * gram[(j, k)] * vk;
            }
        }
    }
    // tr{Xt D C} = sum_n sum_{(j,v) in c_n} v <x_n, d_j>.
    let dtx = dict_raw.tr_mul(data.matrix()); // L x N
    for (n, col) in coding.columns().iter().enumerate() {
        for &(j, v) in col {
            fit -= 2.0 * v * dtx[(j, n)];
        }
    }
    fit += data.matrix().norm_squared();

    let l = dict_raw.ncols() as f64;
    let penalty = gram.norm_squared() - 2.0 * gram.trace() + l;
    let value = fit + gamma * penalty;
    if !value.is_finite() {
        return Err(Error::Numerical("objective evaluated to a non-finite value".into()));
    }
    Ok(value)
}

/// Analytic gradient 2 (D C Ct - X Ct) + 4 gamma (D Dt D - D) of the
/// penalized objective with respect to the raw atom matrix.
pub fn idl_gradient(
    dict_raw: &DMatrix<f64>,
    data: &DataMatrix,
    coding: &SparseCoding,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    check_problem_dims(dict_raw, data, coding, gamma)?;
    let problem = PenalizedProblem::new(data, coding, gamma)?;
    let grad = problem.gradient(dict_raw);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("gradient evaluated to a non-finite value".into()));
    }
    Ok(grad)
}

/// Minimizes an objective over D x L matrices by limited-memory BFGS with
/// two-loop recursion and backtracking Armijo line search.
///
/// The matrix variable is its own column-major flattening; inner products
/// between iterates are plain component-wise sums. Curvature pairs with
/// yt s <= 1e-12 |s||y| are skipped; with no usable history the direction
/// falls back to steepest descent. A failed line search returns the last
/// accepted iterate with `line_search_failed` set rather than an error.
pub fn lbfgs_minimize<F>(
    mut f_and_grad: F,
    start: &DMatrix<f64>,
    params: &LbfgsParams,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
{
    params.validate()?;
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("L-BFGS start point is not finite".into()));
    }
    let (f_start, mut grad) = f_and_grad(start)?;
    if !f_start.is_finite() {
        return Err(Error::Numerical("objective not finite at the start point".into()));
    }

    let mut x = start.clone();
    let mut f_cur = f_start;
    let mut history: VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut line_search_failed = false;

    for _ in 0..params.max_iters {
        let grad_norm = grad.norm();
        if grad_norm < params.grad_tol {
            break;
        }

        let mut direction = two_loop_direction(&history, &grad);
        let mut slope = grad.dot(&direction);
        if !(slope < 0.0) {
            // Degenerate history; fall back to steepest descent.
            direction = -&grad;
            slope = -grad_norm * grad_norm;
        }

        let mut step = if history.is_empty() {
            (1.0 / grad_norm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..=params.max_backtracks {
            let trial = &x + &direction * step;
            let (f_trial, g_trial) = f_and_grad(&trial)?;
            // A NaN or +inf trial fails this test and backtracks.
            if f_trial <= f_cur + params.armijo_c * step * slope {
                accepted = Some((trial, f_trial, g_trial));
                break;
            }
            step *= params.shrink;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            line_search_failed = true;
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &grad;
        let ys = y.dot(&s);
        if ys > 1e-12 * s.norm() * y.norm() {
            if history.len() == params.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / ys));
        }

        x = x_new;
        f_cur = f_new;
        grad = g_new;
        iterations += 1;
    }

    Ok(LbfgsOutcome {
        gradient_norm: grad.norm(),
        minimizer: x,
        objective_start: f_start,
        objective: f_cur,
        iterations,
        line_search_failed,
    })
}

fn two_loop_direction(
    history: &VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)>,
    grad: &DMatrix<f64>,
) -> DMatrix<f64> {
    if history.is_empty() {
        return -grad;
    }
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * s.dot(&q);
        q += y * (-alpha);
        alphas.push(alpha);
    }
    let (s_last, y_last, _) = history.back().unwrap();
    let scale = s_last.dot(y_last) / y_last.dot(y_last);
    let mut r = q * scale;
    for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * y.dot(&r);
        r += s * (alpha - beta);
    }
    -r
}

/// Scales every column to unit norm. A column with norm below
/// `ATOM_NORM_FLOOR` is replaced by a data column drawn uniformly with the
/// fallback seed (zero-norm data columns are never drawn).
pub fn renormalize_atoms(
    dict_raw: &DMatrix<f64>,
    data: &DataMatrix,
    fallback_seed: u64,
) -> Result<Dictionary> {
    if dict_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("atom matrix contains a non-finite entry".into()));
    }
    let mut atoms = dict_raw.clone();
    let mut rng: Option<ChaCha8Rng> = None;
    let mut usable: Option<Vec<usize>> = None;
    for j in 0..atoms.ncols() {
        let norm = atoms.column(j).norm();
        if norm < ATOM_NORM_FLOOR {
            let pool = usable.get_or_insert_with(|| {
                (0..data.len())
                    .filter(|&n| data.column(n).norm() > ATOM_NORM_FLOOR)
                    .collect()
            });
            if pool.is_empty() {
                return Err(Error::InvalidInput(
                    "cannot replace a degenerate atom: no usable data column".into(),
                ));
            }
            let rng = rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(fallback_seed));
            let n = pool[rng.gen_range(0..pool.len())];
            let col = data.column(n);
            atoms.set_column(j, &(&col / col.norm()));
        } else {
            atoms.column_mut(j).unscale_mut(norm);
        }
    }
    Dictionary::new(atoms)
}

/// One dictionary update: L-BFGS descent on the penalized objective from the
/// current atoms, then atom renormalization.
///
/// The objective at the pre-normalization optimum never exceeds its value at
/// the input dictionary (monotone line search).
pub fn idl_dictionary_update(
    dict: &Dictionary,
    data: &DataMatrix,
    coding: &SparseCoding,
    gamma: f64,
    params: &LbfgsParams,
    fallback_seed: u64,
) -> Result<(Dictionary, LbfgsOutcome)> {
    check_problem_dims(dict.atoms(), data, coding, gamma)?;
    let problem = PenalizedProblem::new(data, coding, gamma)?;
    let outcome = lbfgs_minimize(
        |atoms| Ok((problem.objective(atoms), problem.gradient(atoms))),
        dict.atoms(),
        params,
    )?;
    let updated = renormalize_atoms(&outcome.minimizer, data, fallback_seed)?;
    Ok((updated, outcome))
}
