//! Least-squares conditional expectations: global polynomial basis in the
//! forward state, ridge-stabilized normal equations, Cholesky solve.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Multi-indices of total degree <= `degree` in `dim` variables, in a fixed
/// deterministic order (degree-major, lexicographic within a degree).
fn multi_indices(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    for total in 0..=degree {
        fill_indices(dim, total, 0, &mut current, &mut out);
    }
    out
}

fn fill_indices(
    dim: usize,
    remaining: usize,
    pos: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pos == dim - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for take in (0..=remaining).rev() {
        current[pos] = take;
        fill_indices(dim, remaining - take, pos + 1, current, out);
    }
}

/// Polynomial regression basis over states in `R^dim`.
#[derive(Clone, Debug)]
pub struct PolynomialBasis {
    pub dim: usize,
    pub degree: usize,
    exponents: Vec<Vec<usize>>,
}

impl PolynomialBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        PolynomialBasis {
            dim,
            degree,
            exponents: multi_indices(dim, degree),
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn evaluate(&self, state: &[f64], out: &mut [f64]) {
        debug_assert_eq!(state.len(), self.dim);
        for (slot, exps) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (&x, &e) in state.iter().zip(exps) {
                for _ in 0..e {
                    v *= x;
                }
            }
            *slot = v;
        }
    }
}

/// Result of one least-squares fit.
#[derive(Clone, Debug)]
pub struct Regression {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Mean squared residual of the fit.
    pub residual_var: f64,
    /// Ratio of the largest to the smallest Cholesky pivot of the (ridged)
    /// normal matrix; a crude spectral-condition indicator.
    pub condition: f64,
}

/// Fit `values ~ basis(states)` by ridge least squares and return the fit
/// evaluated on every path. With a degree-0 basis this is the sample mean.
///
/// `states` is path-major with `dim` entries per path. Deterministic for a
/// fixed input regardless of thread count: partial sums are accumulated over
/// fixed-size path blocks and combined in block order.
pub fn regress(
    values: &[f64],
    states: &[f64],
    dim: usize,
    basis: &PolynomialBasis,
    ridge: f64,
) -> Result<Regression> {
    let m = values.len();
    let b = basis.len();
    if m == 0 || states.len() != m * dim {
        return Err(Error::Validation(format!(
            "regression shapes: {m} values, {} state entries, dim {dim}",
            states.len()
        )));
    }
    if m < b {
        return Err(Error::Regression {
            step: 0,
            reason: format!("{m} paths < basis dimension {b}"),
            condition: f64::INFINITY,
        });
    }

    // normal equations: (Phi^T Phi + ridge I) c = Phi^T v
    const BLOCK: usize = 2048;
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..m.div_ceil(BLOCK))
        .into_par_iter()
        .map(|blk| {
            let lo = blk * BLOCK;
            let hi = (lo + BLOCK).min(m);
            let mut gram = vec![0.0f64; b * b];
            let mut rhs = vec![0.0f64; b];
            let mut phi = vec![0.0f64; b];
            for path in lo..hi {
                basis.evaluate(&states[path * dim..(path + 1) * dim], &mut phi);
                let v = values[path];
                for i in 0..b {
                    rhs[i] += phi[i] * v;
                    for jj in i..b {
                        gram[i * b + jj] += phi[i] * phi[jj];
                    }
                }
            }
            (gram, rhs)
        })
        .collect();

    let mut gram = vec![0.0f64; b * b];
    let mut rhs = vec![0.0f64; b];
    for (g, r) in blocks {
        for (acc, v) in gram.iter_mut().zip(&g) {
            *acc += v;
        }
        for (acc, v) in rhs.iter_mut().zip(&r) {
            *acc += v;
        }
    }
    for i in 0..b {
        gram[i * b + i] += ridge;
        for jj in 0..i {
            gram[i * b + jj] = gram[jj * b + i];
        }
    }

    let (coefficients, condition) = cholesky_solve(&gram, &rhs, b)?;

    let mut fitted = vec![0.0f64; m];
    fitted
        .par_chunks_mut(BLOCK)
        .enumerate()
        .for_each(|(blk, chunk)| {
            let mut phi = vec![0.0f64; b];
            for (off, slot) in chunk.iter_mut().enumerate() {
                let path = blk * BLOCK + off;
                basis.evaluate(&states[path * dim..(path + 1) * dim], &mut phi);
                *slot = phi.iter().zip(&coefficients).map(|(p, c)| p * c).sum();
            }
        });

    let residual_var = values
        .iter()
        .zip(&fitted)
        .map(|(v, f)| (v - f) * (v - f))
        .sum::<f64>()
        / m as f64;

    Ok(Regression {
        coefficients,
        fitted,
        residual_var,
        condition,
    })
}

/// Cholesky factorization and solve for the (symmetric positive definite)
/// normal matrix. Small systems only; fails when a pivot is not positive,
/// which signals rank deficiency beyond what the ridge can repair.
fn cholesky_solve(a: &[f64], rhs: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    let mut l = vec![0.0f64; n * n];
    let mut min_pivot = f64::INFINITY;
    let mut max_pivot: f64 = 0.0;
    for i in 0..n {
        for jj in 0..=i {
            let mut sum = a[i * n + jj];
            for kk in 0..jj {
                sum -= l[i * n + kk] * l[jj * n + kk];
            }
            if i == jj {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Regression {
                        step: 0,
                        reason: format!("normal equations not positive definite (pivot {sum:.3e})"),
                        condition: if min_pivot > 0.0 && min_pivot.is_finite() {
                            max_pivot / min_pivot
                        } else {
                            f64::INFINITY
                        },
                    });
                }
                let pivot = sum.sqrt();
                min_pivot = min_pivot.min(pivot);
                max_pivot = max_pivot.max(pivot);
                l[i * n + i] = pivot;
            } else {
                l[i * n + jj] = sum / l[jj * n + jj];
            }
        }
    }

    // forward then backward substitution
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = rhs[i];
        for jj in 0..i {
            sum -= l[i * n + jj] * y[jj];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for jj in i + 1..n {
            sum -= l[jj * n + i] * x[jj];
        }
        x[i] = sum / l[i * n + i];
    }

    let condition = (max_pivot / min_pivot).powi(2);
    Ok((x, condition))
}
