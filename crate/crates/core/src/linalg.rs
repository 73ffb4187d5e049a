//! Small dense symmetric positive-definite solves on row-major buffers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("matrix is not positive definite (pivot {pivot} = {value})")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
    pub value: f64,
}

/// In-place Cholesky factorization `A = L Lᵀ` of a `k × k` row-major matrix.
/// Only the lower triangle is read; on return it holds `L`.
pub fn cholesky(a: &mut [f64], k: usize) -> Result<(), NotPositiveDefinite> {
    debug_assert_eq!(a.len(), k * k);
    for j in 0..k {
        let (upper, lower) = a.split_at_mut((j + 1) * k);
        let row_j = &mut upper[j * k..];
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0 && d.is_finite()) {
            return Err(NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        row_j[j] = d;
        let row_j = &upper[j * k..j * k + j];
        for row_i in lower.chunks_exact_mut(k) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) / d;
        }
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`]; `b` is overwritten with `x`.
pub fn cholesky_solve_factored(l: &[f64], k: usize, b: &mut [f64]) {
    for i in 0..k {
        let row = &l[i * k..i * k + k];
        let mut s = b[i];
        for p in 0..i {
            s -= row[p] * b[p];
        }
        b[i] = s / row[i];
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for p in (i + 1)..k {
            s -= l[p * k + i] * b[p];
        }
        b[i] = s / l[i * k + i];
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`, destroying `a`.
pub fn spd_solve(a: &mut [f64], k: usize, b: &mut [f64]) -> Result<(), NotPositiveDefinite> {
    cholesky(a, k)?;
    cholesky_solve_factored(a, k, b);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_known_system() {
        // A = [[4,2],[2,3]], b = [2,1] -> x = [0.5, 0]
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let mut b = vec![2.0, 1.0];
        spd_solve(&mut a, 2, &mut b).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15);
        assert!(b[1].abs() < 1e-15);
    }

    #[test]
    fn rejects_singular() {
        let mut a = vec![1.0, 1.0, 1.0, 1.0];
        let mut b = vec![1.0, 1.0];
        assert!(spd_solve(&mut a, 2, &mut b).is_err());
    }

    #[test]
    fn residual_small_on_random_spd() {
        let k = 12;
        let m: Vec<f64> = (0..k * k).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                a[i * k + j] = (0..k).map(|p| m[i * k + p] * m[j * k + p]).sum::<f64>();
            }
            a[i * k + i] += 0.5;
        }
        let b: Vec<f64> = (0..k).map(|i| i as f64 - 3.0).collect();
        let mut x = b.clone();
        spd_solve(&mut a.clone(), k, &mut x).unwrap();
        for i in 0..k {
            let r: f64 = (0..k).map(|j| a[i * k + j] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-10);
        }
    }
}
