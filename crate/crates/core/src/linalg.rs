//! Minimal dense helpers over row-major slices.
//!
//! Only what the batch initialisation path needs: a Cholesky factorisation of
//! a symmetric positive definite matrix and solves/inverse built on it. The
//! sequential update itself never calls into this module.

use crate::scalar::Real;

/// Lower-triangular Cholesky factor of the `dim x dim` matrix `a`, or `None`
/// when `a` is not numerically positive definite.
pub fn cholesky<T: Real>(a: &[T], dim: usize) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), dim * dim);
    let mut l = vec![T::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum = sum - l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Some(l)
}

/// Solve `L L^T X = B` in place, `B` being `dim x cols` row-major.
pub fn cholesky_solve<T: Real>(l: &[T], dim: usize, b: &mut [T], cols: usize) {
    debug_assert_eq!(b.len(), dim * cols);
    for c in 0..cols {
        // forward
        for i in 0..dim {
            let mut s = b[i * cols + c];
            for k in 0..i {
                s = s - l[i * dim + k] * b[k * cols + c];
            }
            b[i * cols + c] = s / l[i * dim + i];
        }
        // backward
        for i in (0..dim).rev() {
            let mut s = b[i * cols + c];
            for k in i + 1..dim {
                s = s - l[k * dim + i] * b[k * cols + c];
            }
            b[i * cols + c] = s / l[i * dim + i];
        }
    }
}

pub fn spd_inverse<T: Real>(a: &[T], dim: usize) -> Option<Vec<T>> {
    let l = cholesky(a, dim)?;
    let mut inv = vec![T::zero(); dim * dim];
    for i in 0..dim {
        inv[i * dim + i] = T::one();
    }
    cholesky_solve(&l, dim, &mut inv, dim);
    Some(inv)
}

/// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
pub fn relative_asymmetry<T: Real>(a: &[T], dim: usize) -> f64 {
    let mut max_abs = 0.0f64;
    let mut max_diff = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            max_abs = max_abs.max(a[i * dim + j].as_f64().abs());
            if j > i {
                max_diff = max_diff.max((a[i * dim + j] - a[j * dim + i]).as_f64().abs());
            }
        }
    }
    if max_abs == 0.0 {
        0.0
    } else {
        max_diff / max_abs
    }
}
