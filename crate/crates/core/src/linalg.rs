//! Small dense helpers shared by the estimators. Everything here works on
//! (p+1)×(p+1) systems, so dense factorizations are fine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff below which a second-moment matrix counts as
/// rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Extreme eigenvalues of a symmetric matrix, `(min, max)`.
pub fn eigen_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(a.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Fails with [`Error::Singular`] when `a` is numerically rank deficient.
pub fn ensure_well_posed(a: &DMatrix<f64>) -> Result<()> {
    let (min, max) = eigen_extremes(a);
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(Error::Singular {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

/// X'X without the 1/n factor.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

/// X' diag(w) X.
pub fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let k = x.ncols();
    let mut out = DMatrix::<f64>::zeros(k, k);
    for i in 0..x.nrows() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for a in 0..k {
            let xa = x[(i, a)] * wi;
            for b in 0..=a {
                out[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    symmetrize_lower(&mut out);
    out
}

pub(crate) fn symmetrize_lower(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for a in 0..k {
        for b in 0..a {
            m[(b, a)] = m[(a, b)];
        }
    }
}

/// Solves `a x = b` for symmetric positive-definite `a` by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    match a.clone().cholesky() {
        Some(chol) => Ok(chol.solve(b)),
        None => Err(singular(a)),
    }
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| singular(a))?;
    let mut inv = chol.inverse();
    let k = inv.nrows();
    for r in 0..k {
        for c in 0..r {
            let v = 0.5 * (inv[(r, c)] + inv[(c, r)]);
            inv[(r, c)] = v;
            inv[(c, r)] = v;
        }
    }
    Ok(inv)
}

fn singular(a: &DMatrix<f64>) -> Error {
    let (min, max) = eigen_extremes(a);
    Error::Singular {
        min_eigenvalue: min,
        max_eigenvalue: max,
    }
}

/// Quadratic form v' m v.
pub fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let k = v.len();
    let mut acc = 0.0;
    for a in 0..k {
        let mut row = 0.0;
        for b in 0..k {
            row += m[(a, b)] * v[b];
        }
        acc += v[a] * row;
    }
    acc
}
