//! Short-time propagators `exp(-iτH)`.
//!
//! * `Taylor1`: `1 - iτH` as a direct sum of MPOs, then compressed.
//! * `WI`: the compact first-order construction read off the lower-triangular
//!   block form of a nearest-neighbour Hamiltonian MPO. With bond indices
//!   `0 = done`, `1..D-2` intermediate and `D-1 = start`, the start and done
//!   states are merged:
//!
//!   ```text
//!   W^I = [ 1 + δ·D   δ·C ]      δ = -iτ
//!         [   B        A  ]
//!   ```
//!
//!   Putting the whole of `δ` on the `C` side avoids `√δ`. Bond dimension `D - 1`.
//! * `Exact`: dense `exp(-iτH)` turned into an MPO by sequential SVDs.

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Error, Result};
use crate::linalg::{is_hermitian, CMatrix};
use crate::mpo::{ising_mpo, HamiltonianSpec, Mpo, DEFAULT_REL_TOL};
use crate::tensor::DenseTensor;
use crate::{C64, DENSE_MAX_QUBITS};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Taylor1,
    WI,
    Exact,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Taylor1 => "taylor1",
            Scheme::WI => "wI",
            Scheme::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "taylor1" => Some(Scheme::Taylor1),
            "wI" | "wi" => Some(Scheme::WI),
            "exact" => Some(Scheme::Exact),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PropagatorMpo {
    pub mpo: Mpo,
    pub tau: f64,
    pub scheme: Scheme,
}

impl PropagatorMpo {
    pub fn bond_dim(&self) -> usize {
        self.mpo.max_bond()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain_err(format!("time step must be finite and >= 0, got {tau}"));
    }
    Ok(())
}

pub fn taylor1_mpo(h: &Mpo, tau: f64) -> Result<PropagatorMpo> {
    check_tau(tau)?;
    let n = h.num_sites();
    let sum = Mpo::identity(n).add(&h.scaled(C64::new(0.0, -tau)))?;
    let mpo = sum.compress(usize::MAX, DEFAULT_REL_TOL)?;
    Ok(PropagatorMpo { mpo, tau, scheme: Scheme::Taylor1 })
}

fn block(t: &DenseTensor, a: usize, b: usize) -> [C64; 4] {
    let r = t.shape()[3];
    let d = t.data();
    let mut out = [ZERO; 4];
    for p in 0..4 {
        out[p] = d[(a * 4 + p) * r + b];
    }
    out
}

fn is_op(x: &[C64; 4], expect: [C64; 4]) -> bool {
    x.iter().zip(expect).all(|(a, b)| (a - b).norm() <= 1e-14)
}

const ID: [C64; 4] = [ONE, ZERO, ZERO, ONE];
const NULL: [C64; 4] = [ZERO; 4];

/// Compact first-order propagator from a Hamiltonian MPO in lower-triangular block form.
#[allow(non_snake_case)]
pub fn wI_mpo(h: &Mpo, tau: f64) -> Result<PropagatorMpo> {
    check_tau(tau)?;
    let n = h.num_sites();
    if n < 2 {
        return domain_err("W^I needs at least two sites");
    }
    let dd = h.sites()[0].shape()[3];
    if dd < 2 || h.bond_dims().iter().any(|&b| b != dd) {
        return domain_err("Hamiltonian MPO must have a uniform bond dimension D >= 2");
    }
    let bad = |k: usize, what: &str| Error::Domain(format!("site {k}: not in lower-triangular block form ({what})"));
    let start = dd - 1;
    for (k, t) in h.sites().iter().enumerate() {
        let rows: Vec<usize> = if k == 0 { vec![start] } else { (0..dd).collect() };
        let cols: Vec<usize> = if k == n - 1 { vec![0] } else { (0..dd).collect() };
        for (ai, &a) in rows.iter().enumerate() {
            for (bi, &b) in cols.iter().enumerate() {
                let op = block(t, ai, bi);
                if a < b && !is_op(&op, NULL) {
                    return Err(bad(k, "nonzero entry above the diagonal"));
                }
                if (a == b && (a == 0 || a == start)) && !is_op(&op, ID) {
                    return Err(bad(k, "start/done channels must carry the identity"));
                }
            }
        }
    }
    let delta = C64::new(0.0, -tau);
    let dw = dd - 1;
    // Entry (x, y) of W^I in terms of the original blocks at (row, col) of site k.
    let entry = |t: &DenseTensor, k: usize, x: usize, y: usize| -> [C64; 4] {
        let row = |a: usize| if k == 0 { 0 } else { a };
        let col = |b: usize| if k == n - 1 { 0 } else { b };
        match (x, y) {
            (0, 0) => {
                let d = block(t, row(start), col(0));
                [ONE + delta * d[0], delta * d[1], delta * d[2], ONE + delta * d[3]]
            }
            (0, j) => block(t, row(start), col(j)).map(|z| delta * z),
            (j, 0) => block(t, row(j), col(0)),
            (i, j) => block(t, row(i), col(j)),
        }
    };
    let sites = h
        .sites()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let l = if k == 0 { 1 } else { dw };
            let r = if k == n - 1 { 1 } else { dw };
            let mut data = vec![ZERO; l * 4 * r];
            for x in 0..l {
                for y in 0..r {
                    let op = entry(t, k, x, y);
                    for p in 0..4 {
                        data[(x * 4 + p) * r + y] = op[p];
                    }
                }
            }
            DenseTensor::from_raw(vec![l, 2, 2, r], data)
        })
        .collect();
    Ok(PropagatorMpo { mpo: Mpo::new(sites)?, tau, scheme: Scheme::WI })
}

/// `exp(-i t h)` for a Hermitian matrix, by eigendecomposition.
///
/// Real symmetric input is diagonalized directly. Complex input goes through
/// the real embedding `M = [[A, -B], [B, A]]` of `h = A + iB`, where the
/// exponential is `cos(tM) - J sin(tM)` with `J` the embedded imaginary unit.
pub fn exact_unitary(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let dim = h.nrows();
    if dim > 1 << DENSE_MAX_QUBITS {
        return Err(Error::Size(format!("dense exponential limited to dimension 2^{DENSE_MAX_QUBITS}")));
    }
    if !is_hermitian(h, 1e-10) {
        return domain_err("matrix is not Hermitian to 1e-10");
    }
    if !t.is_finite() {
        return domain_err("time must be finite");
    }
    if h.iter().all(|z| z.im == 0.0) {
        let real = h.map(|z| z.re);
        let eig = nalgebra::SymmetricEigen::new(real);
        let v = eig.eigenvectors.map(C64::from);
        let vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        return Ok(crate::linalg::exp_from_eigen(&v, &vals, t));
    }
    let m = nalgebra::DMatrix::<f64>::from_fn(2 * dim, 2 * dim, |r, c| {
        let z = h[(r % dim, c % dim)];
        match (r < dim, c < dim) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let eig = nalgebra::SymmetricEigen::new(m);
    let v = &eig.eigenvectors;
    let cos_d = nalgebra::DVector::from_iterator(2 * dim, eig.eigenvalues.iter().map(|e| (e * t).cos()));
    let sin_d = nalgebra::DVector::from_iterator(2 * dim, eig.eigenvalues.iter().map(|e| (e * t).sin()));
    let cos_m = v * nalgebra::DMatrix::from_diagonal(&cos_d) * v.transpose();
    let sin_m = v * nalgebra::DMatrix::from_diagonal(&sin_d) * v.transpose();
    // The first block column of the embedding holds (Re U; Im U), and that of
    // J·S is (-S_bottom; S_top).
    Ok(CMatrix::from_fn(dim, dim, |r, c| {
        C64::new(cos_m[(r, c)] + sin_m[(r + dim, c)], cos_m[(r + dim, c)] - sin_m[(r, c)])
    }))
}

/// Exact propagator wrapped as an MPO (sequential SVD with the default cutoff).
pub fn exact_mpo(h_dense: &CMatrix, tau: f64, chi_max: usize) -> Result<PropagatorMpo> {
    check_tau(tau)?;
    let u = exact_unitary(h_dense, tau)?;
    Ok(PropagatorMpo { mpo: Mpo::from_dense(&u, chi_max, DEFAULT_REL_TOL)?, tau, scheme: Scheme::Exact })
}

/// Propagator of the chosen scheme for an Ising chain.
pub fn propagator(spec: &HamiltonianSpec, scheme: Scheme, tau: f64, chi_max: usize) -> Result<PropagatorMpo> {
    match scheme {
        Scheme::Taylor1 => taylor1_mpo(&ising_mpo(spec)?, tau),
        Scheme::WI => wI_mpo(&ising_mpo(spec)?, tau),
        Scheme::Exact => exact_mpo(&spec.dense()?.map(C64::from), tau, chi_max),
    }
}

/// `‖W - exp(-iτH)‖_F / √(2^n)`, the dense defect of a propagator MPO.
///
/// The normalization makes the identity have unit norm, so the defect of a
/// sum of `n - 1` local terms grows like `n` rather than `2^{n/2} n`.
pub fn propagator_defect(spec: &HamiltonianSpec, scheme: Scheme, tau: f64) -> Result<f64> {
    let w = propagator(spec, scheme, tau, usize::MAX)?.mpo.to_dense()?;
    let u = exact_unitary(&spec.dense()?.map(C64::from), tau)?;
    Ok(crate::linalg::frobenius(&(w - u)) / ((1usize << spec.n) as f64).sqrt())
}
