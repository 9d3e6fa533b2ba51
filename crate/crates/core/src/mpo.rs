//! Matrix product operators on qubit chains.
//!
//! Site tensors have axes `(left bond, physical out, physical in, right bond)`
//! with physical extent 2 and boundary bonds of extent 1. Dense realizations
//! follow the convention of [`crate::linalg`]: site 0 is the most significant
//! qubit.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, domain_err, Error, Result};
use crate::linalg::CMatrix;
use crate::tensor::{svd_truncate, DenseTensor};
use crate::{C64, DENSE_MAX_QUBITS};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Rel. singular-value cutoff used for every compression that is meant to be exact.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// Open Ising chain `J Σ Z_k Z_{k+1} + g Σ X_k + h Σ Z_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub n: usize,
    pub j: f64,
    pub g: f64,
    pub h: f64,
}

impl HamiltonianSpec {
    pub fn new(n: usize, j: f64, g: f64, h: f64) -> Result<Self> {
        if n < 2 {
            return domain_err(format!("the Ising chain needs n >= 2 qubits, got {n}"));
        }
        if ![j, g, h].iter().all(|x| x.is_finite()) {
            return domain_err("couplings must be finite");
        }
        Ok(Self { n, j, g, h })
    }

    /// The non-integrable point `(J, g, h) = (2, 1, 1)` used throughout.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(n, 2.0, 1.0, 1.0)
    }

    /// Dense `2^n x 2^n` Hamiltonian (real symmetric).
    pub fn dense(&self) -> Result<nalgebra::DMatrix<f64>> {
        if self.n > DENSE_MAX_QUBITS {
            return Err(Error::Size(format!("dense Hamiltonian limited to n <= {DENSE_MAX_QUBITS}")));
        }
        let n = self.n;
        let dim = 1usize << n;
        let mut h = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for b in 0..dim {
            let z = |k: usize| if (b >> (n - 1 - k)) & 1 == 0 { 1.0 } else { -1.0 };
            let mut diag = 0.0;
            for k in 0..n {
                diag += self.h * z(k);
                if k + 1 < n {
                    diag += self.j * z(k) * z(k + 1);
                }
                h[(b ^ (1 << (n - 1 - k)), b)] += self.g;
            }
            h[(b, b)] += diag;
        }
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    sites: Vec<DenseTensor>,
}

fn op_tensor(op: [[C64; 2]; 2]) -> [C64; 4] {
    [op[0][0], op[0][1], op[1][0], op[1][1]]
}

fn pauli(kind: char) -> [[C64; 2]; 2] {
    match kind {
        'I' => [[ONE, ZERO], [ZERO, ONE]],
        'X' => [[ZERO, ONE], [ONE, ZERO]],
        'Z' => [[ONE, ZERO], [ZERO, -ONE]],
        _ => unreachable!(),
    }
}

fn lin(a: [[C64; 2]; 2], ca: f64, b: [[C64; 2]; 2], cb: f64) -> [[C64; 2]; 2] {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][c] * ca + b[r][c] * cb;
        }
    }
    out
}

fn bond_matrix_tensor(left: usize, right: usize, mut f: impl FnMut(usize, usize) -> [[C64; 2]; 2]) -> DenseTensor {
    let mut data = vec![ZERO; left * 4 * right];
    for a in 0..left {
        for b in 0..right {
            let op = op_tensor(f(a, b));
            for p in 0..4 {
                data[(a * 4 + p) * right + b] = op[p];
            }
        }
    }
    DenseTensor::from_raw(vec![left, 2, 2, right], data)
}

impl Mpo {
    pub fn new(sites: Vec<DenseTensor>) -> Result<Self> {
        if sites.is_empty() {
            return domain_err("an MPO needs at least one site");
        }
        for (k, t) in sites.iter().enumerate() {
            let s = t.shape();
            if s.len() != 4 || s[1] != 2 || s[2] != 2 {
                return dim_err(format!("site {k} has shape {s:?}, expected (l, 2, 2, r)"));
            }
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[3] != 1 {
            return dim_err("boundary bonds must have extent 1");
        }
        for k in 0..sites.len() - 1 {
            if sites[k].shape()[3] != sites[k + 1].shape()[0] {
                return dim_err(format!("bond between sites {k} and {} is inconsistent", k + 1));
            }
        }
        Ok(Self { sites })
    }

    pub(crate) fn from_sites_unchecked(sites: Vec<DenseTensor>) -> Self {
        Self { sites }
    }

    pub fn identity(n: usize) -> Self {
        let site = bond_matrix_tensor(1, 1, |_, _| pauli('I'));
        Self { sites: vec![site; n] }
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    pub fn into_sites(self) -> Vec<DenseTensor> {
        self.sites
    }

    /// Internal bond extents, `n - 1` of them.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(|t| t.shape()[3]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        let mut sites = self.sites.clone();
        sites[0] = sites[0].scaled(alpha);
        Self { sites }
    }

    /// Hermitian adjoint: conjugate every tensor and swap the physical axes.
    pub fn adjoint(&self) -> Self {
        Self { sites: self.sites.iter().map(site_adjoint).collect() }
    }

    /// Direct-sum representation of `self + other`.
    pub fn add(&self, other: &Mpo) -> Result<Mpo> {
        let n = self.num_sites();
        if other.num_sites() != n {
            return dim_err("MPO sum needs equal site counts");
        }
        if n == 1 {
            let data = self.sites[0].data().iter().zip(other.sites[0].data()).map(|(a, b)| a + b).collect();
            return Ok(Self { sites: vec![DenseTensor::from_raw(vec![1, 2, 2, 1], data)] });
        }
        let mut sites = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (&self.sites[k], &other.sites[k]);
            let (al, ar) = (a.shape()[0], a.shape()[3]);
            let (bl, br) = (b.shape()[0], b.shape()[3]);
            let (l, r) = match k {
                0 => (1, ar + br),
                _ if k == n - 1 => (al + bl, 1),
                _ => (al + bl, ar + br),
            };
            let mut t = DenseTensor::zeros(vec![l, 2, 2, r]);
            let d = t.data_mut();
            for x in 0..al {
                for p in 0..4 {
                    for y in 0..ar {
                        d[(x * 4 + p) * r + y] = a.data()[(x * 4 + p) * ar + y];
                    }
                }
            }
            let (lo, ro) = (if k == 0 { 0 } else { al }, if k == n - 1 { 0 } else { ar });
            for x in 0..bl {
                for p in 0..4 {
                    for y in 0..br {
                        d[((x + lo) * 4 + p) * r + y + ro] = b.data()[(x * 4 + p) * br + y];
                    }
                }
            }
            sites.push(t);
        }
        Ok(Self { sites })
    }

    /// Operator product `self · other`; bond extents multiply.
    pub fn multiply(&self, other: &Mpo) -> Result<Mpo> {
        if self.num_sites() != other.num_sites() {
            return dim_err(format!(
                "cannot multiply MPOs on {} and {} sites",
                self.num_sites(),
                other.num_sites()
            ));
        }
        let sites = self.sites.iter().zip(&other.sites).map(|(a, b)| site_product(a, b)).collect();
        Ok(Self { sites })
    }

    /// Left-to-right orthogonalization followed by a right-to-left truncating sweep.
    pub fn compress(&self, chi_max: usize, rel_tol: f64) -> Result<Mpo> {
        Ok(self.compress_with_report(chi_max, rel_tol)?.0)
    }

    /// As [`Mpo::compress`], also returning the discarded singular values of every bond
    /// (index `k` is the bond between sites `k` and `k + 1`).
    pub fn compress_with_report(&self, chi_max: usize, rel_tol: f64) -> Result<(Mpo, Vec<Vec<f64>>)> {
        if chi_max < 1 {
            return domain_err("chi_max must be at least 1");
        }
        let n = self.num_sites();
        let mut sites = self.sites.clone();
        for k in 0..n.saturating_sub(1) {
            let s = sites[k].shape().to_vec();
            let mat = sites[k].to_matrix(3);
            let qr = mat.qr();
            let q = qr.q();
            let r = qr.r();
            let kk = q.ncols();
            sites[k] = DenseTensor::from_matrix(&q, vec![s[0], 2, 2, kk])?;
            let next = sites[k + 1].to_matrix(1);
            let ns = sites[k + 1].shape().to_vec();
            sites[k + 1] = DenseTensor::from_matrix(&(r * next), vec![kk, 2, 2, ns[3]])?;
        }
        let mut discarded = vec![Vec::new(); n.saturating_sub(1)];
        for k in (1..n).rev() {
            let svd = svd_truncate(&sites[k], 1, chi_max, rel_tol)?;
            let keep = svd.singular_values.len();
            sites[k] = svd.right;
            let mut us = svd.left.to_matrix(1);
            for (col, s) in svd.singular_values.iter().enumerate() {
                for x in us.column_mut(col).iter_mut() {
                    *x *= *s;
                }
            }
            let ps = sites[k - 1].shape().to_vec();
            let prev = sites[k - 1].to_matrix(3) * us;
            sites[k - 1] = DenseTensor::from_matrix(&prev, vec![ps[0], 2, 2, keep])?;
            discarded[k - 1] = svd.discarded;
        }
        Ok((Self { sites }, discarded))
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        let n = self.num_sites();
        if n > DENSE_MAX_QUBITS {
            return Err(Error::Size(format!(
                "dense realization limited to n <= {DENSE_MAX_QUBITS}, got {n}"
            )));
        }
        // acc[(out, in, bond)]
        let mut acc = vec![ONE];
        let mut dim = 1usize;
        let mut bond = 1usize;
        for t in &self.sites {
            let r = t.shape()[3];
            let nd = dim * 2;
            let mut next = vec![ZERO; nd * nd * r];
            let td = t.data();
            for o in 0..dim {
                for i in 0..dim {
                    for b in 0..bond {
                        let x = acc[(o * dim + i) * bond + b];
                        if x == ZERO {
                            continue;
                        }
                        for po in 0..2 {
                            for pi in 0..2 {
                                let base = ((b * 2 + po) * 2 + pi) * r;
                                let dst = (((o * 2 + po) * nd) + i * 2 + pi) * r;
                                for rr in 0..r {
                                    next[dst + rr] += x * td[base + rr];
                                }
                            }
                        }
                    }
                }
            }
            acc = next;
            dim = nd;
            bond = r;
        }
        Ok(CMatrix::from_fn(dim, dim, |o, i| acc[o * dim + i]))
    }

    /// Exact-up-to-truncation MPO of a dense `2^n x 2^n` operator by sequential SVDs.
    pub fn from_dense(m: &CMatrix, chi_max: usize, rel_tol: f64) -> Result<Mpo> {
        let dim = m.nrows();
        if !m.is_square() || !dim.is_power_of_two() || dim < 2 {
            return dim_err("dense operator must be square with power-of-two dimension");
        }
        let n = dim.trailing_zeros() as usize;
        // Interleave (o_0 i_0)(o_1 i_1)... row-major.
        let mut inter = vec![ZERO; dim * dim];
        for o in 0..dim {
            for i in 0..dim {
                let mut idx = 0usize;
                for k in 0..n {
                    let ob = (o >> (n - 1 - k)) & 1;
                    let ib = (i >> (n - 1 - k)) & 1;
                    idx = idx * 4 + ob * 2 + ib;
                }
                inter[idx] = m[(o, i)];
            }
        }
        let mut sites = Vec::with_capacity(n);
        let mut rest = DenseTensor::from_raw(vec![1, dim * dim], inter);
        let mut left = 1usize;
        for k in 0..n - 1 {
            let remaining = 4usize.pow((n - k - 1) as u32);
            let t = rest.reshape(vec![left, 2, 2, remaining])?;
            let svd = svd_truncate(&t, 3, chi_max, rel_tol)?;
            let keep = svd.singular_values.len();
            sites.push(svd.left);
            let mut r = svd.right;
            let cols = remaining;
            for (row, s) in svd.singular_values.iter().enumerate() {
                for x in &mut r.data_mut()[row * cols..(row + 1) * cols] {
                    *x *= *s;
                }
            }
            rest = r;
            left = keep;
        }
        sites.push(rest.reshape(vec![left, 2, 2, 1])?);
        Mpo::new(sites)
    }
}

pub(crate) fn site_adjoint(t: &DenseTensor) -> DenseTensor {
    let s = t.shape();
    let (l, r) = (s[0], s[3]);
    let d = t.data();
    let mut out = vec![ZERO; d.len()];
    for a in 0..l {
        for o in 0..2 {
            for i in 0..2 {
                for b in 0..r {
                    out[((a * 2 + i) * 2 + o) * r + b] = d[((a * 2 + o) * 2 + i) * r + b].conj();
                }
            }
        }
    }
    DenseTensor::from_raw(s.to_vec(), out)
}

/// Site tensor of the operator product `a · b`.
pub(crate) fn site_product(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let (al, ar) = (a.shape()[0], a.shape()[3]);
    let (bl, br) = (b.shape()[0], b.shape()[3]);
    let (l, r) = (al * bl, ar * br);
    let mut out = vec![ZERO; l * 4 * r];
    let (ad, bd) = (a.data(), b.data());
    for xa in 0..al {
        for xb in 0..bl {
            for o in 0..2 {
                for i in 0..2 {
                    for mid in 0..2 {
                        for ya in 0..ar {
                            let av = ad[((xa * 2 + o) * 2 + mid) * ar + ya];
                            if av == ZERO {
                                continue;
                            }
                            for yb in 0..br {
                                let bv = bd[((xb * 2 + mid) * 2 + i) * br + yb];
                                out[(((xa * bl + xb) * 2 + o) * 2 + i) * r + ya * br + yb] += av * bv;
                            }
                        }
                    }
                }
            }
        }
    }
    DenseTensor::from_raw(vec![l, 2, 2, r], out)
}

/// Nearest-neighbour MPO of the Ising chain in lower-triangular block form
/// (bond index 2 = "nothing placed yet", 1 = "Z placed on the left", 0 = "done").
pub fn ising_mpo(spec: &HamiltonianSpec) -> Result<Mpo> {
    let spec = HamiltonianSpec::new(spec.n, spec.j, spec.g, spec.h)?;
    let onsite = lin(pauli('X'), spec.g, pauli('Z'), spec.h);
    let block = |a: usize, b: usize| -> [[C64; 2]; 2] {
        match (a, b) {
            (2, 2) | (0, 0) => pauli('I'),
            (2, 0) => onsite,
            (2, 1) => lin(pauli('Z'), spec.j, pauli('I'), 0.0),
            (1, 0) => pauli('Z'),
            _ => [[ZERO; 2]; 2],
        }
    };
    let n = spec.n;
    let sites = (0..n)
        .map(|k| {
            if k == 0 {
                bond_matrix_tensor(1, 3, |_, b| block(2, b))
            } else if k == n - 1 {
                bond_matrix_tensor(3, 1, |a, _| block(a, 0))
            } else {
                bond_matrix_tensor(3, 3, block)
            }
        })
        .collect();
    Ok(Mpo { sites })
}

/// Contract one site of a stack of MPO factors into a running environment.
///
/// `env` is indexed by the combined (row-major) left bonds of `sites`; the
/// physical legs are chained `out(f) = in(f-1)` and closed into a trace. The
/// result is indexed by the combined right bonds. Passing tensors with their
/// bond axes swapped turns this into the right-to-left transfer.
pub(crate) fn transfer(env: &[C64], sites: &[&DenseTensor]) -> Vec<C64> {
    let mut x = vec![ZERO; env.len() * 4];
    for (k, v) in env.iter().enumerate() {
        x[k * 4] = *v;
        x[k * 4 + 3] = *v;
    }
    let mut done = 1usize;
    let mut rest = env.len();
    for t in sites {
        let (chl, chr) = (t.shape()[0], t.shape()[3]);
        let m = rest / chl;
        let td = t.data();
        let mut y = vec![ZERO; done * chr * m * 4];
        for a in 0..done {
            for l in 0..chl {
                for mm in 0..m {
                    let xbase = ((a * chl + l) * m + mm) * 4;
                    for p1 in 0..2 {
                        for q in 0..2 {
                            let xv = x[xbase + p1 * 2 + q];
                            if xv == ZERO {
                                continue;
                            }
                            for q2 in 0..2 {
                                let tb = ((l * 2 + q) * 2 + q2) * chr;
                                for r in 0..chr {
                                    let tv = td[tb + r];
                                    y[((a * chr + r) * m + mm) * 4 + p1 * 2 + q2] += xv * tv;
                                }
                            }
                        }
                    }
                }
            }
        }
        x = y;
        done *= chr;
        rest = m;
    }
    debug_assert_eq!(rest, 1);
    (0..done).map(|a| x[a * 4] + x[a * 4 + 3]).collect()
}

pub(crate) fn swap_bonds(t: &DenseTensor) -> DenseTensor {
    t.permute(&[3, 1, 2, 0]).expect("rank-4 site tensor")
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cached left and right environments of `tr[A_1 A_2 ... A_F]`.
pub(crate) struct TraceNetwork {
    /// `sites[k][f]`: tensor of factor `f` at site `k`.
    pub sites: Vec<Vec<DenseTensor>>,
    /// `left[k]`: contraction of sites `0..k`.
    pub left: Vec<Vec<C64>>,
    /// `right[k]`: contraction of sites `k..n`.
    pub right: Vec<Vec<C64>>,
}

impl TraceNetwork {
    pub fn new(sites: Vec<Vec<DenseTensor>>) -> Self {
        let n = sites.len();
        let mut left = Vec::with_capacity(n + 1);
        left.push(vec![ONE]);
        for k in 0..n {
            let refs: Vec<&DenseTensor> = sites[k].iter().collect();
            let next = transfer(&left[k], &refs);
            left.push(next);
        }
        let mut right = vec![Vec::new(); n + 1];
        right[n] = vec![ONE];
        for k in (0..n).rev() {
            let swapped: Vec<DenseTensor> = sites[k].iter().map(swap_bonds).collect();
            let refs: Vec<&DenseTensor> = swapped.iter().collect();
            right[k] = transfer(&right[k + 1], &refs);
        }
        Self { sites, left, right }
    }

    pub fn value(&self) -> C64 {
        self.left[self.sites.len()][0]
    }

    /// Site `k` tensors with some factors replaced.
    pub fn site_with<'a>(&'a self, k: usize, replace: &[(usize, &'a DenseTensor)]) -> Vec<&'a DenseTensor> {
        let mut refs: Vec<&DenseTensor> = self.sites[k].iter().collect();
        for &(f, t) in replace {
            refs[f] = t;
        }
        refs
    }

    /// Trace with the listed factors at site `k` replaced.
    pub fn replaced(&self, k: usize, replace: &[(usize, &DenseTensor)]) -> C64 {
        let refs = self.site_with(k, replace);
        dot(&transfer(&self.left[k], &refs), &self.right[k + 1])
    }
}

/// `tr[f_1 · f_2 · ... ]`, contracted one site column at a time.
pub fn trace_product(factors: &[&Mpo]) -> Result<C64> {
    let first = factors.first().ok_or_else(|| Error::Domain("trace of an empty product".into()))?;
    let n = first.num_sites();
    if factors.iter().any(|f| f.num_sites() != n) {
        return dim_err("all factors of a trace product must have equal site counts");
    }
    let mut env = vec![ONE];
    for k in 0..n {
        let refs: Vec<&DenseTensor> = factors.iter().map(|f| &f.sites[k]).collect();
        env = transfer(&env, &refs);
    }
    Ok(env[0])
}
