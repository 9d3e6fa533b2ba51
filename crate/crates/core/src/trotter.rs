//! Product-formula circuits for `H = H_Z + H_X` with `H_Z = J ΣZZ + h ΣZ` and `H_X = g ΣX`.
//!
//! Each ZZ stage becomes one circuit layer, so the two-qubit depth of a
//! formula equals its layer count. Stages written left to right below act
//! right to left in time:
//!
//! * order 1: `e^{-itH_X} e^{-itH_Z}`
//! * order 2: `S2(t) = e^{-itH_X/2} e^{-itH_Z} e^{-itH_X/2}`
//! * order 4: `S2(st) S2((1-2s)t) S2(st)`, `s = 1/(2 - 2^{1/3})`, three layers
//! * Suzuki: `S2(pt)² S2((1-4p)t) S2(pt)²`, `p = 1/(4 - 4^{1/3})`, five layers
//!
//! Adjacent half-steps of `H_X` are not merged.

use serde::{Deserialize, Serialize};

use crate::circuits::{Gate, GateKind, ParamCircuit};
use crate::error::{domain_err, Result};
use crate::mpo::HamiltonianSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrotterOrder {
    First,
    Second,
    Fourth,
    Suzuki,
}

impl TrotterOrder {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1" | "I" => Some(TrotterOrder::First),
            "2" | "II" => Some(TrotterOrder::Second),
            "4" | "IV" => Some(TrotterOrder::Fourth),
            "suzuki" => Some(TrotterOrder::Suzuki),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrotterOrder::First => "trotter1",
            TrotterOrder::Second => "trotter2",
            TrotterOrder::Fourth => "trotter4",
            TrotterOrder::Suzuki => "suzuki4",
        }
    }

    /// ZZ layers per repetition.
    pub fn layers(self) -> usize {
        match self {
            TrotterOrder::First | TrotterOrder::Second => 1,
            TrotterOrder::Fourth => 3,
            TrotterOrder::Suzuki => 5,
        }
    }

    /// Time fractions of the second-order stages (unused for order 1).
    fn stages(self) -> Vec<f64> {
        match self {
            TrotterOrder::First | TrotterOrder::Second => vec![1.0],
            TrotterOrder::Fourth => {
                let s = fourth_order_s();
                vec![s, 1.0 - 2.0 * s, s]
            }
            TrotterOrder::Suzuki => {
                let p = 1.0 / (4.0 - 4f64.cbrt());
                vec![p, p, 1.0 - 4.0 * p, p, p]
            }
        }
    }
}

/// `s = 1/(2 - 2^{1/3})`.
pub fn fourth_order_s() -> f64 {
    1.0 / (2.0 - 2f64.cbrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterSpec {
    pub order: TrotterOrder,
    pub reps: usize,
    pub spec: HamiltonianSpec,
    pub t: f64,
}

struct Builder {
    n: usize,
    gates: Vec<Gate>,
    theta: Vec<f64>,
    layer: usize,
}

impl Builder {
    fn push(&mut self, kind: GateKind, qubit: usize, angle: f64) {
        let param = self.gates.len();
        self.gates.push(Gate { kind, qubit, param, layer: self.layer });
        self.theta.push(angle);
    }

    /// `e^{-iτ H_X}`.
    fn x_step(&mut self, spec: &HamiltonianSpec, tau: f64) {
        for q in 0..self.n {
            self.push(GateKind::Rx, q, 2.0 * spec.g * tau);
        }
    }

    /// `e^{-iτ H_Z}`: ZZ bonds in brickwall order, then the fields.
    fn z_step(&mut self, spec: &HamiltonianSpec, tau: f64) {
        for start in [0usize, 1] {
            for a in (start..self.n - 1).step_by(2) {
                self.push(GateKind::Uzz, a, 2.0 * spec.j * tau);
            }
        }
        for q in 0..self.n {
            self.push(GateKind::Rz, q, 2.0 * spec.h * tau);
        }
    }
}

pub fn trotter_circuit(ts: &TrotterSpec) -> Result<ParamCircuit> {
    if ts.reps == 0 {
        return domain_err("Trotter formulas need at least one repetition");
    }
    if !ts.t.is_finite() {
        return domain_err("Trotter time must be finite");
    }
    let n = ts.spec.n;
    let dt = ts.t / ts.reps as f64;
    let mut b = Builder { n, gates: Vec::new(), theta: Vec::new(), layer: 0 };
    for _ in 0..ts.reps {
        if ts.order == TrotterOrder::First {
            b.z_step(&ts.spec, dt);
            b.x_step(&ts.spec, dt);
            b.layer += 1;
            continue;
        }
        for frac in ts.order.stages() {
            let tau = frac * dt;
            b.x_step(&ts.spec, tau / 2.0);
            b.z_step(&ts.spec, tau);
            b.x_step(&ts.spec, tau / 2.0);
            b.layer += 1;
        }
    }
    ParamCircuit::new(n, b.gates, b.theta)
}

/// Parameters placing `reps = L` steps of a first- or second-order formula at
/// `t / L` on an ansatz with one ZZ layer per step. Every bond must carry one
/// Uzz per layer; a second-order step also needs each qubit to be rotated
/// before its first coupling, as in [`crate::circuits::BrickLayout::Sandwich`].
pub fn embed_trotter(ansatz: &ParamCircuit, order: TrotterOrder, spec: &HamiltonianSpec, t: f64) -> Result<Vec<f64>> {
    let n = ansatz.n();
    if n != spec.n {
        return domain_err(format!("ansatz has {n} qubits, Hamiltonian {}", spec.n));
    }
    if !matches!(order, TrotterOrder::First | TrotterOrder::Second) {
        return domain_err("only single-layer formulas embed layer by layer");
    }
    let tau = t / ansatz.num_layers() as f64;
    let mut theta = vec![0.0; ansatz.num_params()];
    for layer in 0..ansatz.num_layers() {
        let gates: Vec<&Gate> = ansatz.gates().iter().filter(|g| g.layer == layer).collect();
        let mut bonds = vec![0usize; n.saturating_sub(1)];
        // Per qubit: the last Rz/Rx seen before any coupling, and after the last one.
        let mut before: Vec<[Option<usize>; 2]> = vec![[None; 2]; n];
        let mut after: Vec<[Option<usize>; 2]> = vec![[None; 2]; n];
        let mut coupled = vec![0usize; n];
        let degree = |q: usize| (q > 0) as usize + (q + 1 < n) as usize;
        for g in &gates {
            match g.kind {
                GateKind::Uzz => {
                    bonds[g.qubit] += 1;
                    theta[g.param] = 2.0 * spec.j * tau;
                    coupled[g.qubit] += 1;
                    coupled[g.qubit + 1] += 1;
                }
                kind => {
                    let slot = (kind == GateKind::Rx) as usize;
                    let q = g.qubit;
                    if coupled[q] == 0 {
                        before[q][slot] = Some(g.param);
                    } else if coupled[q] == degree(q) {
                        after[q][slot] = Some(g.param);
                    }
                }
            }
        }
        if bonds.iter().any(|&b| b != 1) {
            return domain_err(format!("layer {layer} does not couple every bond exactly once"));
        }
        for q in 0..n {
            let (Some(z_after), Some(x_after)) = (after[q][0], after[q][1]) else {
                return domain_err(format!("qubit {q} has no Rz, Rx after its couplings in layer {layer}"));
            };
            theta[z_after] = 2.0 * spec.h * tau;
            if order == TrotterOrder::First {
                theta[x_after] = 2.0 * spec.g * tau;
                continue;
            }
            let Some(x_before) = before[q][1] else {
                return domain_err(format!("qubit {q} has no Rx before its couplings in layer {layer}"));
            };
            theta[x_before] = spec.g * tau;
            theta[x_after] = spec.g * tau;
        }
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{embed, identity, kron, max_abs_diff, pauli_x, pauli_z, CMatrix};
    use crate::propagators::exact_unitary;
    use crate::C64;

    fn parts(spec: &HamiltonianSpec) -> (CMatrix, CMatrix) {
        let n = spec.n;
        let d = 1 << n;
        let mut hz = CMatrix::zeros(d, d);
        let mut hx = CMatrix::zeros(d, d);
        let zz = kron(&pauli_z(), &pauli_z());
        for k in 0..n {
            hz += embed(&pauli_z(), k, n) * C64::from(spec.h);
            hx += embed(&pauli_x(), k, n) * C64::from(spec.g);
            if k + 1 < n {
                let left = identity(1 << k);
                let right = identity(1 << (n - k - 2));
                hz += kron(&kron(&left, &zz), &right) * C64::from(spec.j);
            }
        }
        (hz, hx)
    }

    fn s2(hz: &CMatrix, hx: &CMatrix, tau: f64) -> CMatrix {
        let xh = exact_unitary(hx, tau / 2.0).unwrap();
        &xh * exact_unitary(hz, tau).unwrap() * &xh
    }

    fn dense(order: TrotterOrder, spec: &HamiltonianSpec, t: f64, reps: usize) -> CMatrix {
        trotter_circuit(&TrotterSpec { order, reps, spec: *spec, t }).unwrap().to_dense().unwrap()
    }

    #[test]
    fn first_order_matches_splitting_oracle() {
        let spec = HamiltonianSpec::new(4, 2.0, 1.0, 1.0).unwrap();
        let (hz, hx) = parts(&spec);
        let t = 0.37;
        let oracle = exact_unitary(&hx, t).unwrap() * exact_unitary(&hz, t).unwrap();
        assert!(max_abs_diff(&dense(TrotterOrder::First, &spec, t, 1), &oracle) < 1e-12);
    }

    #[test]
    fn second_and_fourth_order_match_their_oracles() {
        let spec = HamiltonianSpec::new(5, 2.0, 1.0, 1.0).unwrap();
        let (hz, hx) = parts(&spec);
        let t = 0.29;
        assert!(max_abs_diff(&dense(TrotterOrder::Second, &spec, t, 1), &s2(&hz, &hx, t)) < 1e-12);
        let s = fourth_order_s();
        assert!((s - 1.351207).abs() < 1e-6);
        let oracle = s2(&hz, &hx, s * t) * s2(&hz, &hx, (1.0 - 2.0 * s) * t) * s2(&hz, &hx, s * t);
        assert!(max_abs_diff(&dense(TrotterOrder::Fourth, &spec, t, 1), &oracle) < 1e-12);
        let p = 1.0 / (4.0 - 4f64.cbrt());
        let a = s2(&hz, &hx, p * t);
        let oracle = &a * &a * s2(&hz, &hx, (1.0 - 4.0 * p) * t) * &a * &a;
        assert!(max_abs_diff(&dense(TrotterOrder::Suzuki, &spec, t, 1), &oracle) < 1e-12);
    }

    #[test]
    fn repetitions_compose() {
        let spec = HamiltonianSpec::standard(4).unwrap();
        let (hz, hx) = parts(&spec);
        let step = s2(&hz, &hx, 0.5 / 3.0);
        let oracle = &step * &step * &step;
        assert!(max_abs_diff(&dense(TrotterOrder::Second, &spec, 0.5, 3), &oracle) < 1e-10);
        let single = dense(TrotterOrder::First, &spec, 0.5 / 4.0, 1);
        let four = &single * &single * &single * &single;
        assert!(max_abs_diff(&dense(TrotterOrder::First, &spec, 0.5, 4), &four) < 1e-10);
    }

    #[test]
    fn second_order_is_time_symmetric() {
        let spec = HamiltonianSpec::standard(5).unwrap();
        for order in [TrotterOrder::Second, TrotterOrder::Fourth] {
            let prod = dense(order, &spec, 0.8, 2) * dense(order, &spec, -0.8, 2);
            assert!(max_abs_diff(&prod, &identity(32)) < 1e-10);
        }
        assert!(max_abs_diff(&dense(TrotterOrder::Second, &spec, 0.0, 1), &identity(32)) < 1e-14);
    }

    #[test]
    fn gate_set_angles_and_counts() {
        let spec = HamiltonianSpec::new(6, 2.0, 1.0, 0.5).unwrap();
        let t = 0.1;
        for (order, reps) in [(TrotterOrder::First, 2), (TrotterOrder::Second, 3), (TrotterOrder::Fourth, 1), (TrotterOrder::Suzuki, 2)] {
            let c = trotter_circuit(&TrotterSpec { order, reps, spec, t }).unwrap();
            assert_eq!(c.num_layers(), order.layers() * reps);
            assert_eq!(c.two_qubit_count(), 5 * order.layers() * reps);
            for g in c.gates() {
                if g.kind == GateKind::Uzz {
                    assert!(g.qubit + 1 < 6);
                }
            }
        }
        let c = trotter_circuit(&TrotterSpec { order: TrotterOrder::First, reps: 1, spec, t }).unwrap();
        for g in c.gates() {
            let want = match g.kind {
                GateKind::Uzz => 2.0 * 2.0 * t,
                GateKind::Rz => 2.0 * 0.5 * t,
                GateKind::Rx => 2.0 * 1.0 * t,
            };
            assert_eq!(c.theta()[g.param], want);
        }
        assert!(trotter_circuit(&TrotterSpec { order: TrotterOrder::First, reps: 0, spec, t }).is_err());
    }

    #[test]
    fn embedded_steps_reproduce_the_formulas() {
        use crate::circuits::BrickLayout;
        let spec = HamiltonianSpec::new(5, 2.0, 1.0, 0.7).unwrap();
        let t = 0.43;
        for (layout, order) in [(BrickLayout::Sandwich, TrotterOrder::Second), (BrickLayout::Sandwich, TrotterOrder::First), (BrickLayout::Trailing, TrotterOrder::First)] {
            let ansatz = ParamCircuit::brickwall_with(5, 3, layout).unwrap();
            let theta = embed_trotter(&ansatz, order, &spec, t).unwrap();
            let u = ansatz.with_theta(&theta).unwrap().to_dense().unwrap();
            assert!(max_abs_diff(&u, &dense(order, &spec, t, 3)) < 1e-12, "{layout:?} {order:?}");
        }
        let trailing = ParamCircuit::brickwall(5, 1).unwrap();
        assert!(embed_trotter(&trailing, TrotterOrder::Second, &spec, t).is_err());
        assert!(embed_trotter(&trailing, TrotterOrder::Fourth, &spec, t).is_err());
    }
}
