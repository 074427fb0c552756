//! Symmetric eigensolvers for finite-volume operators.
//!
//! Scalar chains (`W = 1`) are already tridiagonal and go through the
//! implicit QL iteration below; wider strips use nalgebra's dense symmetric
//! solver. [`count_below`] is an independent inertia count used to certify
//! distances to the spectrum.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::BlockOperator;
use crate::scalar::Real;

const MAX_QL_SWEEPS: usize = 60;

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// `diag` has length `n`; `off[i]` couples `i` and `i + 1` and must have
/// length `n` (the last entry is scratch). On return `diag` holds the
/// eigenvalues (unsorted) and, if given, the columns of `vectors` the
/// corresponding eigenvectors. `vectors` must start as the identity.
pub fn tridiagonal_ql<T: Real>(diag: &mut [T], off: &mut [T], mut vectors: Option<&mut DMatrix<T>>) -> Result<()> {
    let n = diag.len();
    assert_eq!(off.len(), n, "off-diagonal must be padded to length n");
    if n == 0 {
        return Ok(());
    }
    off[n - 1] = T::zero();
    let eps = <T as Real>::epsilon();
    let two = T::lit(2.0);
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(Error::Numeric(format!("tridiagonal QL did not converge for eigenvalue {l}")));
            }
            let mut g = (diag[l + 1] - diag[l]) / (two * off[l]);
            let mut r = g.hypot(T::one());
            let signed_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = diag[m] - diag[l] + off[l] / (g + signed_r);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == T::zero() {
                    diag[i + 1] -= p;
                    off[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + two * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = vectors.as_deref_mut() {
                    for k in 0..n {
                        let zf = z[(k, i + 1)];
                        z[(k, i + 1)] = s * z[(k, i)] + c * zf;
                        z[(k, i)] = c * z[(k, i)] - s * zf;
                    }
                }
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = T::zero();
        }
    }
    Ok(())
}

fn sorted_permutation<T: Real>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite eigenvalues"));
    idx
}

fn chain_coefficients<T: Real>(h: &BlockOperator<T>) -> (Vec<T>, Vec<T>) {
    let diag: Vec<T> = h.diagonal_blocks().iter().map(|v| v[(0, 0)]).collect();
    let mut off: Vec<T> = h.upper_blocks().iter().map(|l| l[(0, 0)]).collect();
    off.push(T::zero());
    (diag, off)
}

fn dense_eigen<T: Real>(h: &BlockOperator<T>) -> Result<SymmetricEigen<T, nalgebra::Dyn>> {
    SymmetricEigen::try_new(h.to_dense(), <T as Real>::epsilon(), 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))
}

/// All eigenvalues of `h`, ascending.
pub fn eigenvalues<T: Real>(h: &BlockOperator<T>) -> Result<Vec<T>> {
    let mut values = if h.is_scalar_chain() {
        let (mut d, mut e) = chain_coefficients(h);
        tridiagonal_ql(&mut d, &mut e, None)?;
        d
    } else {
        dense_eigen(h)?.eigenvalues.iter().copied().collect()
    };
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(values)
}

/// Complete orthonormal eigensystem: ascending eigenvalues and the matching
/// eigenvectors as columns.
pub fn eigensystem<T: Real>(h: &BlockOperator<T>) -> Result<(Vec<T>, DMatrix<T>)> {
    let (values, vectors) = if h.is_scalar_chain() {
        let (mut d, mut e) = chain_coefficients(h);
        let mut z = DMatrix::identity(d.len(), d.len());
        tridiagonal_ql(&mut d, &mut e, Some(&mut z))?;
        (d, z)
    } else {
        let eig = dense_eigen(h)?;
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let perm = sorted_permutation(&values);
    let sorted_values = perm.iter().map(|&k| values[k]).collect();
    let sorted_vectors = DMatrix::from_fn(vectors.nrows(), perm.len(), |i, j| vectors[(i, perm[j])]);
    Ok((sorted_values, sorted_vectors))
}

/// `dist(E, σ(h))` from a full eigensolve.
pub fn distance_to_spectrum<T: Real>(h: &BlockOperator<T>, energy: T) -> Result<T> {
    let values = eigenvalues(h)?;
    Ok(distance_in_sorted(&values, energy))
}

/// Distance from `energy` to the nearest entry of an ascending slice.
pub fn distance_in_sorted<T: Real>(values: &[T], energy: T) -> T {
    let k = values.partition_point(|&v| v < energy);
    let mut best = T::max_value().expect("bounded float");
    if k < values.len() {
        best = best.min(values[k] - energy);
    }
    if k > 0 {
        best = best.min(energy - values[k - 1]);
    }
    best
}

/// Number of eigenvalues of `h` strictly below `energy`, from the inertia of
/// the block `LDLᵀ` factorization of `h − E` (Sylvester's law).
pub fn count_below<T: Real>(h: &BlockOperator<T>, energy: T) -> usize {
    let tiny = <T as Real>::epsilon() * <T as Real>::epsilon();
    let diag = h.diagonal_blocks();
    let upper = h.upper_blocks();
    if h.is_scalar_chain() {
        let mut count = 0;
        let mut q = T::one();
        for k in 0..diag.len() {
            let coupling = if k == 0 { T::zero() } else { upper[k - 1][(0, 0)] };
            q = diag[k][(0, 0)] - energy - coupling * coupling / q;
            if q == T::zero() {
                q = tiny;
            }
            if q < T::zero() {
                count += 1;
            }
        }
        return count;
    }
    let w = h.width();
    let mut count = 0;
    let mut schur_inv: Option<DMatrix<T>> = None;
    for k in 0..diag.len() {
        let mut s = &diag[k] - DMatrix::identity(w, w) * energy;
        if let Some(prev) = &schur_inv {
            let l = &upper[k - 1];
            s -= l.transpose() * prev * l;
        }
        let s = (&s + s.transpose()) * T::lit(0.5);
        let eig = SymmetricEigen::new(s);
        count += eig.eigenvalues.iter().filter(|v| **v < T::zero()).count();
        // Invert through the eigendecomposition, nudging exact zeros.
        let inv_vals = eig.eigenvalues.map(|v| {
            let v = if v.abs() < tiny { tiny } else { v };
            T::one() / v
        });
        schur_inv = Some(&eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose());
    }
    count
}
