//! Dense complex tensors.
//!
//! Data is stored in row-major order: the last axis varies fastest. Every
//! reshape, matricization and contraction in the crate relies on this single
//! linearization.

use nalgebra::DMatrix;

use crate::error::{dim_err, domain_err, Error, Result};
use crate::linalg::CMatrix;
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

fn check_finite(data: &[C64]) -> Result<()> {
    if data.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite tensor entry".into()))
    }
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return domain_err(format!("tensor extents must be positive, got {shape:?}"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return dim_err(format!(
                "shape {shape:?} holds {len} entries but {} were given",
                data.len()
            ));
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    /// Crate-internal constructor for data already known to be consistent.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<C64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let len: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        let st = strides(&self.shape);
        self.data[idx.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()]
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|x| x * alpha).collect() }
    }

    pub fn conj(&self) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|x| x.conj()).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return dim_err(format!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        Ok(Self { shape, data: self.data.clone() })
    }

    /// Axis `k` of the result is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return dim_err(format!("{perm:?} is not a permutation of {r} axes"));
        }
        let old_st = strides(&self.shape);
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_st: Vec<usize> = perm.iter().map(|&p| old_st[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                off += src_st[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                off -= src_st[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self { shape: new_shape, data })
    }

    /// Matricize with the first `row_axes` axes as the row index.
    pub fn to_matrix(&self, row_axes: usize) -> CMatrix {
        let rows: usize = self.shape[..row_axes].iter().product();
        let cols = self.data.len() / rows;
        DMatrix::from_row_slice(rows, cols, &self.data)
    }

    pub fn from_matrix(m: &CMatrix, shape: Vec<usize>) -> Result<Self> {
        let mut data = Vec::with_capacity(m.len());
        for row in m.row_iter() {
            data.extend(row.iter().cloned());
        }
        Self::new(shape, data)
    }
}

/// Contract `a` and `b` over the paired axes `(axis of a, axis of b)`.
///
/// The result carries the unpaired axes of `a` (in order) followed by the
/// unpaired axes of `b`.
pub fn contract(a: &DenseTensor, b: &DenseTensor, axes: &[(usize, usize)]) -> Result<DenseTensor> {
    for &(i, j) in axes {
        if i >= a.rank() || j >= b.rank() {
            return dim_err(format!("axis pair ({i}, {j}) out of range"));
        }
        if a.shape[i] != b.shape[j] {
            return dim_err(format!(
                "paired axes ({i}, {j}) have extents {} and {}",
                a.shape[i], b.shape[j]
            ));
        }
    }
    let a_free: Vec<usize> = (0..a.rank()).filter(|k| !axes.iter().any(|p| p.0 == *k)).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|k| !axes.iter().any(|p| p.1 == *k)).collect();
    let a_perm: Vec<usize> = a_free.iter().cloned().chain(axes.iter().map(|p| p.0)).collect();
    let b_perm: Vec<usize> = axes.iter().map(|p| p.1).chain(b_free.iter().cloned()).collect();
    let ap = a.permute(&a_perm)?;
    let bp = b.permute(&b_perm)?;
    let inner: usize = axes.iter().map(|p| a.shape[p.0]).product();
    let rows = ap.len() / inner;
    let cols = bp.len() / inner;
    let mut out = vec![C64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        let arow = &ap.data[r * inner..(r + 1) * inner];
        let orow = &mut out[r * cols..(r + 1) * cols];
        for (k, &x) in arow.iter().enumerate() {
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            let brow = &bp.data[k * cols..(k + 1) * cols];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    let mut shape: Vec<usize> = a_free.iter().map(|&k| a.shape[k]).collect();
    shape.extend(b_free.iter().map(|&k| b.shape[k]));
    if shape.is_empty() {
        shape.push(1);
    }
    check_finite(&out)?;
    Ok(DenseTensor { shape, data: out })
}

#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// Row axes of the input followed by the kept rank.
    pub left: DenseTensor,
    /// Kept singular values, descending.
    pub singular_values: Vec<f64>,
    /// Kept rank followed by the column axes of the input.
    pub right: DenseTensor,
    /// Singular values that were cut, descending.
    pub discarded: Vec<f64>,
}

impl TruncatedSvd {
    /// Frobenius norm of the truncation error.
    pub fn truncation_error(&self) -> f64 {
        self.discarded.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// `left · diag(s) · right` reshaped back to the input shape.
    pub fn reconstruct(&self) -> DenseTensor {
        let k = self.singular_values.len();
        let mut l = self.left.clone();
        for chunk in l.data.chunks_mut(k) {
            for (x, s) in chunk.iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        let rank = l.rank();
        contract(&l, &self.right, &[(rank - 1, 0)]).expect("consistent factor shapes")
    }
}

/// Thin SVD of `m` matricized as (first `row_axes` axes) x (rest), truncated to
/// `min(chi_max, #{s_i : s_i / s_1 > rel_tol})` singular values.
///
/// Ties among singular values are resolved by their position in the solver's
/// output (stable sort), so the cut is deterministic. A zero matrix yields a
/// rank-1 factorization with singular value 0.
pub fn svd_truncate(m: &DenseTensor, row_axes: usize, chi_max: usize, rel_tol: f64) -> Result<TruncatedSvd> {
    if chi_max < 1 {
        return domain_err("chi_max must be at least 1");
    }
    if !(0.0..1.0).contains(&rel_tol) {
        return domain_err(format!("rel_tol must lie in [0, 1), got {rel_tol}"));
    }
    if row_axes == 0 || row_axes >= m.rank() {
        return dim_err(format!("row bipartition {row_axes} invalid for rank {}", m.rank()));
    }
    let row_shape = m.shape[..row_axes].to_vec();
    let col_shape = m.shape[row_axes..].to_vec();
    let mat = m.to_matrix(row_axes);
    let (u, s, vt) = sorted_svd(&mat)?;
    let s1 = s.first().cloned().unwrap_or(0.0);
    let significant = if s1 > 0.0 { s.iter().filter(|&&x| x / s1 > rel_tol).count() } else { 0 };
    let keep = significant.min(chi_max).max(1);

    let rows = mat.nrows();
    let cols = mat.ncols();
    let mut left = Vec::with_capacity(rows * keep);
    for r in 0..rows {
        for k in 0..keep {
            left.push(u[(r, k)]);
        }
    }
    let mut right = Vec::with_capacity(keep * cols);
    for k in 0..keep {
        for c in 0..cols {
            right.push(vt[(k, c)]);
        }
    }
    let mut lshape = row_shape;
    lshape.push(keep);
    let mut rshape = vec![keep];
    rshape.extend(col_shape);
    Ok(TruncatedSvd {
        left: DenseTensor::new(lshape, left)?,
        singular_values: s[..keep].to_vec(),
        right: DenseTensor::new(rshape, right)?,
        discarded: s[keep..].to_vec(),
    })
}

/// Thin SVD with singular values sorted descending (stable).
pub(crate) fn sorted_svd(mat: &CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    let (u, s, v) = crate::linalg::jacobi_svd(mat);
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("SVD produced non-finite singular values".into()));
    }
    let vt = v.adjoint();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap());
    let u_sorted = CMatrix::from_fn(u.nrows(), order.len(), |r, k| u[(r, order[k])]);
    let vt_sorted = CMatrix::from_fn(order.len(), vt.ncols(), |k, c| vt[(order[k], c)]);
    let s_sorted = order.iter().map(|&k| s[k]).collect();
    Ok((u_sorted, s_sorted, vt_sorted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
        DenseTensor::from_fn(shape, |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// Index-loop oracle: explicit summation for an arbitrary pairing.
    fn loop_contract(a: &DenseTensor, b: &DenseTensor, axes: &[(usize, usize)]) -> DenseTensor {
        let a_free: Vec<usize> = (0..a.rank()).filter(|k| !axes.iter().any(|p| p.0 == *k)).collect();
        let b_free: Vec<usize> = (0..b.rank()).filter(|k| !axes.iter().any(|p| p.1 == *k)).collect();
        let mut shape: Vec<usize> = a_free.iter().map(|&k| a.shape()[k]).collect();
        shape.extend(b_free.iter().map(|&k| b.shape()[k]));
        let inner_shape: Vec<usize> = axes.iter().map(|p| a.shape()[p.0]).collect();
        let inner_len: usize = inner_shape.iter().product();
        DenseTensor::from_fn(shape, |idx| {
            let mut acc = C64::new(0.0, 0.0);
            for flat in 0..inner_len {
                let mut rem = flat;
                let mut inner = vec![0; inner_shape.len()];
                for k in (0..inner_shape.len()).rev() {
                    inner[k] = rem % inner_shape[k];
                    rem /= inner_shape[k];
                }
                let mut ia = vec![0; a.rank()];
                let mut ib = vec![0; b.rank()];
                for (pos, &k) in a_free.iter().enumerate() {
                    ia[k] = idx[pos];
                }
                for (pos, &k) in b_free.iter().enumerate() {
                    ib[k] = idx[a_free.len() + pos];
                }
                for (q, &(i, j)) in axes.iter().enumerate() {
                    ia[i] = inner[q];
                    ib[j] = inner[q];
                }
                acc += a.get(&ia) * b.get(&ib);
            }
            acc
        })
    }

    fn max_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_times_vector() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let eye = DenseTensor::new(vec![2, 2], vec![one, zero, zero, one]).unwrap();
        let v = DenseTensor::new(vec![2], vec![one, zero]).unwrap();
        let r = contract(&eye, &v, &[(1, 0)]).unwrap();
        assert_eq!(r.shape(), &[2]);
        assert_eq!(r.data(), &[one, zero]);
    }

    #[test]
    fn rank3_pair_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_tensor(vec![2, 2, 2], &mut rng);
        let b = random_tensor(vec![2, 2, 2], &mut rng);
        let r = contract(&a, &b, &[(2, 0)]).unwrap();
        assert_eq!(r.shape(), &[2, 2, 2, 2]);
        let mut max = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let mut s = C64::new(0.0, 0.0);
                        for x in 0..2 {
                            s += a.get(&[i, j, x]) * b.get(&[x, k, l]);
                        }
                        max = max.max((s - r.get(&[i, j, k, l])).norm());
                    }
                }
            }
        }
        assert!(max < 1e-14);
    }

    #[test]
    fn matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_tensor(vec![2, 3], &mut rng);
        let b = random_tensor(vec![3, 4], &mut rng);
        let r = contract(&a, &b, &[(1, 0)]).unwrap();
        let expect = a.to_matrix(1) * b.to_matrix(1);
        let got = r.to_matrix(1);
        assert_eq!(got.shape(), (2, 4));
        assert!(crate::linalg::max_abs_diff(&got, &expect) < 1e-14);
    }

    #[test]
    fn mismatched_extent_is_dimension_error() {
        let a = DenseTensor::zeros(vec![2, 3]);
        let b = DenseTensor::zeros(vec![2, 4]);
        assert!(matches!(contract(&a, &b, &[(1, 0)]), Err(Error::Dimension(_))));
    }

    #[test]
    fn permute_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_tensor(vec![2, 3, 4], &mut rng);
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), a.get(&[1, 2, 3]));
        assert_eq!(p.permute(&[1, 2, 0]).unwrap(), a);
    }

    #[test]
    fn svd_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_tensor(vec![4], &mut rng);
        let v = random_tensor(vec![4], &mut rng);
        let m = DenseTensor::from_fn(vec![4, 4], |i| u.get(&[i[0]]) * v.get(&[i[1]]));
        let svd = svd_truncate(&m, 1, 4, 1e-12).unwrap();
        assert_eq!(svd.singular_values.len(), 1);
        assert!(max_diff(&svd.reconstruct(), &m) < 1e-13);
    }

    #[test]
    fn svd_identity_cut() {
        let m = DenseTensor::from_fn(vec![4, 4], |i| if i[0] == i[1] { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let svd = svd_truncate(&m, 1, 2, 0.0).unwrap();
        assert_eq!(svd.singular_values.len(), 2);
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
        let err = {
            let r = svd.reconstruct();
            r.data().iter().zip(m.data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
        };
        assert!((err - 2f64.sqrt()).abs() < 1e-13);
        assert!((svd.truncation_error() - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn svd_full_rank_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_tensor(vec![8, 8], &mut rng);
        let svd = svd_truncate(&m, 1, 8, 0.0).unwrap();
        assert_eq!(svd.singular_values.len(), 8);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(max_diff(&svd.reconstruct(), &m) < 1e-12);
    }

    #[test]
    fn svd_zero_matrix() {
        let m = DenseTensor::zeros(vec![3, 2]);
        let svd = svd_truncate(&m, 1, 4, 1e-12).unwrap();
        assert_eq!(svd.singular_values, vec![0.0]);
        assert_eq!(svd.left.shape(), &[3, 1]);
        assert_eq!(svd.right.shape(), &[1, 2]);
    }

    #[test]
    fn svd_rejects_bad_arguments() {
        let m = DenseTensor::zeros(vec![2, 2]);
        assert!(svd_truncate(&m, 1, 0, 0.0).is_err());
        assert!(svd_truncate(&m, 1, 2, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn contract_matches_loop_oracle(
            seed in 0u64..1000,
            da in 1usize..4, db in 1usize..4, dc in 1usize..4, dd in 1usize..4,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_tensor(vec![da, dc, db], &mut rng);
            let b = random_tensor(vec![db, dd, dc], &mut rng);
            let axes = [(2, 0), (1, 2)];
            let r = contract(&a, &b, &axes).unwrap();
            let o = loop_contract(&a, &b, &axes);
            proptest::prop_assert!(max_diff(&r, &o) < 1e-12);
        }

        #[test]
        fn contract_is_linear_in_first_argument(seed in 0u64..1000, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_tensor(vec![2, 3, 2], &mut rng);
            let b = random_tensor(vec![3, 2], &mut rng);
            let alpha = C64::new(re, im);
            let lhs = contract(&a.scaled(alpha), &b, &[(1, 0)]).unwrap();
            let rhs = contract(&a, &b, &[(1, 0)]).unwrap().scaled(alpha);
            proptest::prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
        }

        #[test]
        fn full_rank_svd_reconstructs(seed in 0u64..1000, rows in 1usize..7, cols in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_tensor(vec![rows, cols], &mut rng);
            let svd = svd_truncate(&m, 1, rows.min(cols), 0.0).unwrap();
            proptest::prop_assert!(max_diff(&svd.reconstruct(), &m) < 1e-12);
        }
    }
}
