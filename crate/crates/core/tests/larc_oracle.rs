//! Cross-checks the analytic LARC homotopy against a brute-force oracle
//! that advances the coefficient path in small fixed steps and applies the
//! same residual-coherence stop test.

use cdl_core::coding::larc;
use cdl_core::types::Dictionary;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain Gauss elimination with partial pivoting; independent of the
/// Cholesky path used by the implementation.
fn gauss_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap()
        })?;
        if m[(pivot, col)].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            m.swap_rows(pivot, col);
            rhs.swap_rows(pivot, col);
        }
        for row in (col + 1)..n {
            let factor = m[(row, col)] / m[(col, col)];
            for k in col..n {
                m[(row, k)] -= factor * m[(col, k)];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = DVector::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[(row, k)] * x[k];
        }
        x[row] = acc / m[(row, row)];
    }
    Some(x)
}

/// Brute-force homotopy: recompute correlations after every fixed step,
/// activate an inactive atom once its correlation magnitude catches up
/// with the active level, stop when the residual coherence drops below
/// the threshold.
fn oracle_active_set(dict: &Dictionary, x: &DVector<f64>, mu_dl: f64, step: f64) -> Vec<usize> {
    let atoms = dict.atoms();
    let l = dict.size();
    let norm_x = x.norm();
    let mut active: Vec<usize> = Vec::new();
    let mut approx = DVector::<f64>::zeros(x.len());

    for _ in 0..10_000_000usize {
        let r = x - &approx;
        let rn = r.norm();
        if rn < 1e-12 * norm_x {
            break;
        }
        let corr = atoms.tr_mul(&r);
        if corr.amax() / rn < mu_dl {
            break;
        }
        if active.is_empty() {
            let mut best = (0usize, -1.0f64);
            for j in 0..l {
                if corr[j].abs() > best.1 {
                    best = (j, corr[j].abs());
                }
            }
            active.push(best.0);
        } else {
            let level = active.iter().map(|&i| corr[i].abs()).fold(0.0f64, f64::max);
            let mut joined = None;
            for j in 0..l {
                if active.contains(&j) {
                    continue;
                }
                if corr[j].abs() >= level - 1e-9 {
                    joined = Some(j);
                    break;
                }
            }
            if let Some(j) = joined {
                active.push(j);
                continue;
            }
        }
        if active.len() >= dict.dim().min(l) {
            // Full least squares is the end of the path.
            break;
        }

        let k = active.len();
        let mut gram = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = atoms.column(active[i]).dot(&atoms.column(active[j]));
            }
        }
        let signs = DVector::from_fn(k, |i, _| if corr[active[i]] >= 0.0 { 1.0 } else { -1.0 });
        let Some(w) = gauss_solve(&gram, &signs) else {
            break;
        };
        let mut direction = DVector::zeros(x.len());
        for (i, &j) in active.iter().enumerate() {
            direction += atoms.column(j) * w[i];
        }
        approx += direction * step;
    }

    active.sort_unstable();
    active
}

#[test]
fn analytic_homotopy_matches_fixed_step_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for _ in 0..12 {
        let dict = Dictionary::new(DMatrix::from_fn(8, 16, |_, _| rng.gen_range(-1.0..1.0f64)))
            .unwrap();
        let x = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0f64));
        for mu_dl in [0.6, 0.4] {
            let coding = larc(&dict, &x, mu_dl).unwrap();
            let mut impl_set: Vec<usize> = coding.column(0).iter().map(|&(j, _)| j).collect();
            impl_set.sort_unstable();
            let oracle_set = oracle_active_set(&dict, &x, mu_dl, 1e-4);
            assert_eq!(
                impl_set, oracle_set,
                "active sets diverged at mu_dl={mu_dl}"
            );
            compared += 1;
        }
    }
    assert_eq!(compared, 24);
}
