//! Quality measures of an approximate propagator against `exp(-itH)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::ParamCircuit;
use crate::error::{domain_err, Error, Result};
use crate::linalg::{exp_from_eigen, trace, CMatrix};
use crate::mpo::HamiltonianSpec;
use crate::{C64, DENSE_MAX_QUBITS};

/// Radicands down to this are clamped to zero before taking a square root.
const RADICAND_SLACK: f64 = 1e-12;

/// Spectral decomposition of a real symmetric Hamiltonian, reused across times.
#[derive(Clone, Debug)]
pub struct ExactEvolution {
    n: usize,
    vectors: CMatrix,
    values: Vec<f64>,
}

impl ExactEvolution {
    pub fn new(spec: &HamiltonianSpec) -> Result<Self> {
        Self::from_dense(&spec.dense()?)
    }

    pub fn from_dense(h: &DMatrix<f64>) -> Result<Self> {
        let dim = h.nrows();
        if !dim.is_power_of_two() || h.ncols() != dim || dim > 1 << DENSE_MAX_QUBITS {
            return Err(Error::Size(format!("expected a 2^n x 2^n matrix with n <= {DENSE_MAX_QUBITS}")));
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(Self {
            n: dim.trailing_zeros() as usize,
            vectors: eig.eigenvectors.map(C64::from),
            values: eig.eigenvalues.iter().cloned().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn unitary(&self, t: f64) -> CMatrix {
        exp_from_eigen(&self.vectors, &self.values, t)
    }

    /// `exp(-itH)|b⟩` for a computational basis state.
    pub fn evolve_basis_state(&self, b: usize, t: f64) -> Vec<C64> {
        let dim = self.values.len();
        let coef: Vec<C64> = (0..dim)
            .map(|j| self.vectors[(b, j)].conj() * C64::from_polar(1.0, -self.values[j] * t))
            .collect();
        (0..dim).map(|r| (0..dim).map(|j| self.vectors[(r, j)] * coef[j]).sum()).collect()
    }
}

fn check_pair(u: &CMatrix, exact: &CMatrix) -> Result<()> {
    if u.shape() != exact.shape() || !u.nrows().is_power_of_two() || u.nrows() != u.ncols() {
        return Err(Error::Dimension(format!("operators of shape {:?} and {:?}", u.shape(), exact.shape())));
    }
    Ok(())
}

/// `ε = sqrt(1 - Re tr[U† E] / 2^n)` for unitaries `U`, `E`.
///
/// Evaluated as `‖U - E‖_F / sqrt(2·2^n)` so that small errors keep full
/// relative precision. The trace form is checked for consistency: a radicand
/// below `-1e-12` means the inputs are not unitary.
pub fn approximation_error(u: &CMatrix, exact: &CMatrix) -> Result<f64> {
    check_pair(u, exact)?;
    let dim = u.nrows() as f64;
    let radicand = 1.0 - trace(&(u.adjoint() * exact)).re / dim;
    if radicand < -RADICAND_SLACK || !radicand.is_finite() {
        return Err(Error::Numeric(format!("approximation-error radicand {radicand:e} is negative")));
    }
    let diff: f64 = u.iter().zip(exact.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((diff / (2.0 * dim)).sqrt())
}

/// Approximation error of a circuit at time `t`.
pub fn circuit_approximation_error(c: &ParamCircuit, ev: &ExactEvolution, t: f64) -> Result<f64> {
    if c.n() != ev.n {
        return dim_mismatch(c.n(), ev.n);
    }
    approximation_error(&c.to_dense()?, &ev.unitary(t))
}

fn dim_mismatch<T>(a: usize, b: usize) -> Result<T> {
    Err(Error::Dimension(format!("circuit has {a} qubits, evolution {b}")))
}

pub const SPECTRAL_MAX_QUBITS: usize = 10;

/// `‖E - U‖₂`, largest singular value of the difference.
///
/// Taken as the square root of the top eigenvalue of `D†D`, which keeps full
/// relative precision for small distances.
pub fn spectral_distance(u: &CMatrix, exact: &CMatrix) -> Result<f64> {
    check_pair(u, exact)?;
    if u.nrows() > 1 << SPECTRAL_MAX_QUBITS {
        return Err(Error::Size(format!("spectral distance limited to n <= {SPECTRAL_MAX_QUBITS}")));
    }
    let d = exact - u;
    let g = d.adjoint() * &d;
    let dim = g.nrows();
    // Real embedding [[A, -B], [B, A]] of A + iB doubles every eigenvalue's multiplicity.
    let m = DMatrix::<f64>::from_fn(2 * dim, 2 * dim, |r, c| {
        let z = g[(r % dim, c % dim)];
        match (r < dim, c < dim) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let top = SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(0.0, f64::max);
    Ok(top.max(0.0).sqrt())
}

pub fn circuit_spectral_distance(c: &ParamCircuit, ev: &ExactEvolution, t: f64) -> Result<f64> {
    if c.n() != ev.n {
        return dim_mismatch(c.n(), ev.n);
    }
    spectral_distance(&c.to_dense()?, &ev.unitary(t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundStateResult {
    pub energy: f64,
    pub state: Vec<C64>,
    /// Distance to the next eigenvalue.
    pub gap: f64,
    /// Set when the gap is below `1e-10`: the state is then one vector of a degenerate space.
    pub degenerate: bool,
}

pub fn ground_state_dense(h: &DMatrix<f64>) -> Result<GroundStateResult> {
    let dim = h.nrows();
    if dim == 0 || h.ncols() != dim {
        return Err(Error::Dimension("ground state needs a non-empty square matrix".into()));
    }
    if dim > 1 << DENSE_MAX_QUBITS {
        return Err(Error::Size(format!("dense ground state limited to n <= {DENSE_MAX_QUBITS}")));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let e0 = eig.eigenvalues[order[0]];
    let gap = order.get(1).map_or(f64::INFINITY, |&k| eig.eigenvalues[k] - e0);
    let col = eig.eigenvectors.column(order[0]);
    // Fix the sign so the largest component is positive.
    let lead = col.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    let s = if lead < 0.0 { -1.0 } else { 1.0 };
    let state: Vec<C64> = col.iter().map(|x| C64::from(s * x)).collect();
    Ok(GroundStateResult { energy: e0, state, gap, degenerate: gap < 1e-10 })
}

pub fn ground_state_exact(spec: &HamiltonianSpec) -> Result<GroundStateResult> {
    ground_state_dense(&spec.dense()?)
}

fn overlap(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// The principal logarithm `λ = Log⟨ψ0|U|ψ0⟩`.
pub fn phase_log(c: &ParamCircuit, gs: &GroundStateResult) -> Result<C64> {
    let amp = overlap(&gs.state, &c.apply_to_state(&gs.state)?);
    if amp.norm() <= 1e-12 {
        return domain_err(format!("ground-state overlap {:e} too small for a phase", amp.norm()));
    }
    Ok(amp.ln())
}

/// `|λ + i e0 t|` evaluated as `|Log(⟨ψ0|U|ψ0⟩ e^{i e0 t})|`.
///
/// Removing the exact phase before the logarithm picks the branch of `λ`
/// nearest to `-i e0 t`, so the result stays small for a good circuit at any `t`.
pub fn phase_error(c: &ParamCircuit, gs: &GroundStateResult, t: f64) -> Result<f64> {
    phase_error_of_amplitude(overlap(&gs.state, &c.apply_to_state(&gs.state)?), gs.energy, t)
}

/// Phase error from the ground-state amplitude `⟨ψ0|U|ψ0⟩`.
pub fn phase_error_of_amplitude(amp: C64, e0: f64, t: f64) -> Result<f64> {
    if amp.norm() <= 1e-12 {
        return domain_err(format!("ground-state overlap {:e} too small for a phase", amp.norm()));
    }
    Ok((amp * C64::from_polar(1.0, e0 * t)).ln().norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfidelityEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Bitstrings `b_1..b_N` drawn uniformly from `[0, 2^n)`.
pub fn sample_bitstrings(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0..1usize << n)).collect()
}

/// Mean of `1 - |⟨ψ_exact|ψ_approx⟩|²` over uniformly random bitstring inputs.
pub fn average_infidelity(c: &ParamCircuit, ev: &ExactEvolution, t: f64, num_states: usize, seed: u64) -> Result<InfidelityEstimate> {
    if num_states == 0 {
        return domain_err("need at least one sampled state");
    }
    if c.n() != ev.n {
        return dim_mismatch(c.n(), ev.n);
    }
    let dim = 1usize << c.n();
    let terms: Vec<f64> = sample_bitstrings(c.n(), num_states, seed)
        .into_iter()
        .map(|b| {
            let mut psi = vec![C64::new(0.0, 0.0); dim];
            psi[b] = C64::new(1.0, 0.0);
            let approx = c.apply_to_state(&psi)?;
            let exact = ev.evolve_basis_state(b, t);
            Ok((1.0 - overlap(&exact, &approx).norm_sqr()).max(0.0))
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_error(&terms))
}

pub(crate) fn mean_and_error(v: &[f64]) -> InfidelityEstimate {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let std_error = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() / m.sqrt()
    };
    InfidelityEstimate { mean, std_error }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p: f64,
    pub gates: usize,
}

/// `1 - (1 - p)^K`, the probability that at least one two-qubit gate fails.
pub fn noise_floor(nm: &NoiseModel) -> Result<f64> {
    if !(0.0..=1.0).contains(&nm.p) {
        return domain_err(format!("error probability {} outside [0, 1]", nm.p));
    }
    if nm.p == 1.0 {
        return Ok(if nm.gates == 0 { 0.0 } else { 1.0 });
    }
    Ok(-(nm.gates as f64 * (-nm.p).ln_1p()).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff, spectral_norm};
    use crate::propagators::exact_unitary;

    fn random_unitary(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 1 << n;
        let mut h = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        h = &h + h.adjoint();
        exact_unitary(&h, 1.0).unwrap()
    }

    #[test]
    fn approximation_error_limits() {
        let ev = ExactEvolution::new(&HamiltonianSpec::standard(4).unwrap()).unwrap();
        let e = ev.unitary(0.7);
        assert_eq!(approximation_error(&e, &e).unwrap(), 0.0);
        let neg = e.map(|z| -z);
        assert!((approximation_error(&neg, &e).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let bad = e.map(|z| z * 2.0);
        assert!(approximation_error(&bad, &e).is_err());
    }

    #[test]
    fn approximation_error_matches_trace_form() {
        let ev = ExactEvolution::new(&HamiltonianSpec::standard(3).unwrap()).unwrap();
        let (u, e) = (ev.unitary(0.5), ev.unitary(0.52));
        let trace_form = (1.0 - trace(&(u.adjoint() * &e)).re / 8.0).sqrt();
        assert!((approximation_error(&u, &e).unwrap() - trace_form).abs() < 1e-12);
    }

    #[test]
    fn exact_evolution_matches_propagator() {
        let spec = HamiltonianSpec::standard(4).unwrap();
        let ev = ExactEvolution::new(&spec).unwrap();
        let direct = exact_unitary(&spec.dense().unwrap().map(C64::from), 0.9).unwrap();
        assert!(max_abs_diff(&ev.unitary(0.9), &direct) < 1e-12);
        let col = ev.evolve_basis_state(5, 0.9);
        for r in 0..16 {
            assert!((col[r] - direct[(r, 5)]).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_distance_matches_svd_and_is_invariant() {
        for seed in 0..4 {
            let (u, v, w) = (random_unitary(3, seed), random_unitary(3, seed + 10), random_unitary(3, seed + 20));
            let s = spectral_distance(&u, &v).unwrap();
            assert!((s - spectral_norm(&(&v - &u))).abs() < 1e-12);
            assert!((spectral_distance(&(&w * &u), &(&w * &v)).unwrap() - s).abs() < 1e-12);
            assert!(s <= 2.0 + 1e-12);
            // The normalized trace deficit never exceeds the worst-case singular value.
            assert!(approximation_error(&u, &v).unwrap() <= s / 2f64.sqrt() + 1e-12);
        }
        let tiny = identity(4).map(|z| z * C64::from_polar(1.0, 1e-9));
        assert!((spectral_distance(&tiny, &identity(4)).unwrap() - 1e-9).abs() < 1e-18);
    }

    #[test]
    fn ground_states() {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let g = ground_state_dense(&z).unwrap();
        assert_eq!(g.energy, -1.0);
        assert!((g.state[1].re - 1.0).abs() < 1e-15 && g.state[0].norm() < 1e-15);
        let spec = HamiltonianSpec::new(2, 2.0, 1.0, 1.0).unwrap();
        let h = spec.dense().unwrap();
        let g = ground_state_exact(&spec).unwrap();
        assert!(!g.degenerate);
        let psi = nalgebra::DVector::from_iterator(4, g.state.iter().map(|z| z.re));
        assert!((&h * &psi - &psi * g.energy).norm() < 1e-8);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let lowest = SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((g.energy - lowest).abs() < 1e-12);
    }

    #[test]
    fn identity_phase_error_is_the_exact_phase() {
        let spec = HamiltonianSpec::standard(3).unwrap();
        let gs = ground_state_exact(&spec).unwrap();
        let id = ParamCircuit::brickwall(3, 1).unwrap();
        let t = 0.3;
        assert!((phase_error(&id, &gs, t).unwrap() - (gs.energy * t).abs()).abs() < 1e-12);
        assert!(phase_log(&id, &gs).unwrap().norm() < 1e-14);
    }

    #[test]
    fn phase_error_of_exact_amplitude_vanishes_on_every_branch() {
        let e0 = -7.3;
        for t in [0.1, 0.5, 2.0, 10.0] {
            let amp = C64::from_polar(1.0, -e0 * t);
            assert!(phase_error_of_amplitude(amp, e0, t).unwrap() < 1e-12);
            // A global phase e^{iφ} on U shifts λ by iφ.
            let phi = 0.4;
            let shifted = phase_error_of_amplitude(amp * C64::from_polar(1.0, phi), e0, t).unwrap();
            assert!((shifted - phi).abs() < 1e-12);
        }
        let damped = phase_error_of_amplitude(C64::new(0.5, 0.0), 0.0, 1.0).unwrap();
        assert!((damped - 2f64.ln()).abs() < 1e-15);
        assert!(phase_error_of_amplitude(C64::new(1e-13, 0.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn infidelity_is_zero_for_exact_circuits_and_deterministic() {
        let spec = HamiltonianSpec::standard(3).unwrap();
        let ev = ExactEvolution::new(&spec).unwrap();
        let id = ParamCircuit::brickwall(3, 1).unwrap();
        let a = average_infidelity(&id, &ev, 0.0, 5, 7).unwrap();
        assert!(a.mean.abs() < 1e-14);
        let b = average_infidelity(&id, &ev, 0.2, 1, 3).unwrap();
        let c = average_infidelity(&id, &ev, 0.2, 1, 3).unwrap();
        assert_eq!(b.mean.to_bits(), c.mean.to_bits());
        assert_eq!(b.std_error, 0.0);
    }

    #[test]
    fn infidelity_ignores_sample_order() {
        let a = mean_and_error(&[0.1, 0.3, 0.2, 0.7]);
        let b = mean_and_error(&[0.7, 0.2, 0.1, 0.3]);
        assert!((a.mean - b.mean).abs() < 1e-16 && (a.std_error - b.std_error).abs() < 1e-16);
    }

    #[test]
    fn noise_floor_values() {
        assert_eq!(noise_floor(&NoiseModel { p: 0.0, gates: 10 }).unwrap(), 0.0);
        let f = noise_floor(&NoiseModel { p: 1e-3, gates: 14 }).unwrap();
        assert!((f - (1.0 - 0.999f64.powi(14))).abs() < 1e-15);
        assert!((f / 0.014 - 1.0).abs() < 0.01);
        assert!(noise_floor(&NoiseModel { p: 1.5, gates: 1 }).is_err());
    }
}
