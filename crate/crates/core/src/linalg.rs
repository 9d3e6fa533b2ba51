//! Small dense helpers shared by the oracles and the metrics.
//!
//! Dense operators on `n` qubits use the convention that qubit 0 is the most
//! significant bit of the row/column index, i.e. `A ⊗ B` acts with `A` on
//! qubit 0.

use nalgebra::DMatrix;

use crate::C64;

pub type CMatrix = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `op` (a `2^k x 2^k` matrix acting on qubits `site..site+k`) embedded in `n` qubits.
pub fn embed(op: &CMatrix, site: usize, n: usize) -> CMatrix {
    let k = op.nrows().trailing_zeros() as usize;
    assert!(site + k <= n, "operator does not fit on the chain");
    let left = identity(1 << site);
    let right = identity(1 << (n - site - k));
    kron(&kron(&left, op), &right)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    singular_values(a).into_iter().fold(0.0, f64::max)
}

/// Singular values (unsorted) from [`jacobi_svd`].
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    jacobi_svd(a).1
}

/// Thin SVD `a = U diag(s) V†` by one-sided (Hestenes) Jacobi rotations.
///
/// Used instead of the bidiagonalization routine of `nalgebra`, whose complex
/// path returns inaccurate factors for some small dense inputs. Singular
/// values come out in no particular order; `U` and `V` have orthonormal
/// columns, with `U` completed by Gram-Schmidt where `s` vanishes.
pub fn jacobi_svd(a: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = jacobi_svd(&a.adjoint());
        return (v, s, u);
    }
    let mut w: Vec<Vec<C64>> = (0..n).map(|j| a.column(j).iter().cloned().collect()).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).collect())
        .collect();
    let norm2 = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm2(&w[p]);
                let beta = norm2(&w[q]);
                let gamma: C64 = w[p].iter().zip(&w[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut w, &mut v] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let yq = *xq * phase.conj();
                        let yp = *xp;
                        *xp = yp * c - yq * s;
                        *xq = yp * s + yq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = w.iter().map(|col| norm2(col).sqrt()).collect();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let mut u = CMatrix::zeros(m, n);
    let mut missing = Vec::new();
    for j in 0..n {
        if s[j] > smax * 1e-300 && s[j] > 0.0 {
            for i in 0..m {
                u[(i, j)] = w[j][i] / s[j];
            }
        } else {
            missing.push(j);
        }
    }
    let mut basis = 0usize;
    for j in missing {
        while basis < m {
            let mut cand = vec![C64::new(0.0, 0.0); m];
            cand[basis] = C64::new(1.0, 0.0);
            basis += 1;
            for k in 0..n {
                if k == j {
                    continue;
                }
                let proj: C64 = (0..m).map(|i| u[(i, k)].conj() * cand[i]).sum();
                for i in 0..m {
                    cand[i] -= u[(i, k)] * proj;
                }
            }
            let nrm = norm2(&cand).sqrt();
            if nrm > 0.5 {
                for i in 0..m {
                    u[(i, j)] = cand[i] / nrm;
                }
                break;
            }
        }
    }
    let vm = CMatrix::from_fn(n, n, |i, j| v[j][i]);
    (u, s, vm)
}

pub fn is_hermitian(a: &CMatrix, tol: f64) -> bool {
    a.is_square() && max_abs_diff(a, &a.adjoint()) <= tol
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// `exp(-i t H)` for Hermitian `H` given as its eigendecomposition `H = V diag(e) V†`.
pub fn exp_from_eigen(vectors: &CMatrix, values: &[f64], t: f64) -> CMatrix {
    let mut scaled = vectors.clone();
    for (j, &e) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -e * t);
        for x in scaled.column_mut(j).iter_mut() {
            *x *= phase;
        }
    }
    &scaled * vectors.adjoint()
}
