//! Parameterized circuits over the gate set {Rx, Rz, Uzz}.
//!
//! `Rx(θ) = exp(-iθX/2)`, `Rz(θ) = exp(-iθZ/2)` and `Uzz(θ) = exp(-iθ Z⊗Z/2)`.
//! A circuit is an ordered gate list grouped into consecutive layers; each
//! layer is lowered to one MPO by accumulating gates site by site. A Uzz on
//! `(k, k+1)` is split as `Σ_σ c_σ P_σ ⊗ P_σ` with `P_0 = 1`, `P_1 = Z`,
//! `c_0 = cos(θ/2)`, `c_1 = -i sin(θ/2)`; the coefficients live on site `k`,
//! so every parameter touches exactly one site tensor of one layer.
//!
//! The brickwall ansatz applies, per layer, bricks on bonds (0,1), (2,3), ...
//! then (1,2), (3,4), ... (0-based). A brick is Uzz followed by Rz then Rx on
//! each of its two qubits, with parameters ordered
//! `(θ_zz, θ_z^a, θ_x^a, θ_z^b, θ_x^b)`. Boundary qubits get no extra gates.
//! [`BrickLayout::Sandwich`] also rotates before each Uzz.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, domain_err, Error, Result};
use crate::linalg::CMatrix;
use crate::mpo::{Mpo, DEFAULT_REL_TOL};
use crate::tensor::DenseTensor;
use crate::{C64, DENSE_MAX_QUBITS};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const MINUS_HALF_I: C64 = C64::new(0.0, -0.5);

pub const FORMAT_HEADER: &str = "hamsim-circuit v1";

/// Placement of each brick's rotations relative to its Uzz.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BrickLayout {
    /// Every brick is Uzz followed by its rotations. `K = 5(n-1)` per layer.
    #[default]
    Trailing,
    /// Rz, Rx on both qubits, then Uzz, then Rz, Rx on both qubits.
    /// `K = 9(n-1)` per layer. Each qubit is rotated before and after its
    /// couplings, so one second-order Trotter step is a point of every layer.
    Sandwich,
}

impl BrickLayout {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "trailing" => Some(BrickLayout::Trailing),
            "sandwich" => Some(BrickLayout::Sandwich),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BrickLayout::Trailing => "trailing",
            BrickLayout::Sandwich => "sandwich",
        }
    }

    pub fn params_per_layer(self, n: usize) -> usize {
        match self {
            BrickLayout::Trailing => 5 * (n - 1),
            BrickLayout::Sandwich => 9 * (n - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Rz,
    Uzz,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "Rx",
            GateKind::Rz => "Rz",
            GateKind::Uzz => "Uzz",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "Rx" => Some(GateKind::Rx),
            "Rz" => Some(GateKind::Rz),
            "Uzz" => Some(GateKind::Uzz),
            _ => None,
        }
    }
}

/// One rotation. Uzz acts on `(qubit, qubit + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubit: usize,
    pub param: usize,
    pub layer: usize,
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match self.kind {
            GateKind::Uzz => vec![self.qubit, self.qubit + 1],
            _ => vec![self.qubit],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCircuit {
    n: usize,
    layers: usize,
    gates: Vec<Gate>,
    theta: Vec<f64>,
    /// `site_ops[layer][site]`: gates touching `site` in application order.
    site_ops: Vec<Vec<Vec<usize>>>,
    /// `gate_of_param[k]`: the gate using parameter `k`.
    gate_of_param: Vec<usize>,
}

fn single_qubit_matrix(kind: GateKind, theta: f64, deriv: u8) -> [[C64; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut g = match kind {
        GateKind::Rx => [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]],
        GateKind::Rz => [[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]],
        GateKind::Uzz => unreachable!(),
    };
    // d/dθ G = (-i/2) P G
    for _ in 0..deriv {
        g = match kind {
            GateKind::Rx => [[g[1][0] * MINUS_HALF_I, g[1][1] * MINUS_HALF_I], [g[0][0] * MINUS_HALF_I, g[0][1] * MINUS_HALF_I]],
            _ => [[g[0][0] * MINUS_HALF_I, g[0][1] * MINUS_HALF_I], [-g[1][0] * MINUS_HALF_I, -g[1][1] * MINUS_HALF_I]],
        };
    }
    g
}

fn uzz_coefficients(theta: f64, deriv: u8) -> [C64; 2] {
    let mut c = [C64::new((theta / 2.0).cos(), 0.0), C64::new(0.0, -(theta / 2.0).sin())];
    for _ in 0..deriv {
        c = [c[1] * MINUS_HALF_I, c[0] * MINUS_HALF_I];
    }
    c
}

/// `t ← op · t` on the physical-out axis of a site tensor.
fn left_apply(op: &[[C64; 2]; 2], t: &mut DenseTensor) {
    let (l, r) = (t.shape()[0], t.shape()[3]);
    let d = t.data_mut();
    for a in 0..l {
        for i in 0..2 {
            for b in 0..r {
                let x0 = d[((a * 2) * 2 + i) * r + b];
                let x1 = d[((a * 2 + 1) * 2 + i) * r + b];
                d[((a * 2) * 2 + i) * r + b] = op[0][0] * x0 + op[0][1] * x1;
                d[((a * 2 + 1) * 2 + i) * r + b] = op[1][0] * x0 + op[1][1] * x1;
            }
        }
    }
}

/// Split a Uzz across a bond: the left site gains a minor right index σ carrying
/// `coef[σ] P_σ`, the right site a minor left index σ carrying `P_σ`.
fn attach_bond(t: &DenseTensor, coef: Option<[C64; 2]>) -> DenseTensor {
    let (l, r) = (t.shape()[0], t.shape()[3]);
    let src = t.data();
    let sign = |sigma: usize, o: usize| if sigma == 1 && o == 1 { -ONE } else { ONE };
    match coef {
        Some(c) => {
            let nr = r * 2;
            let mut out = vec![ZERO; l * 4 * nr];
            for a in 0..l {
                for o in 0..2 {
                    for i in 0..2 {
                        for b in 0..r {
                            let x = src[((a * 2 + o) * 2 + i) * r + b];
                            for sigma in 0..2 {
                                out[((a * 2 + o) * 2 + i) * nr + b * 2 + sigma] = x * c[sigma] * sign(sigma, o);
                            }
                        }
                    }
                }
            }
            DenseTensor::from_raw(vec![l, 2, 2, nr], out)
        }
        None => {
            let nl = l * 2;
            let mut out = vec![ZERO; nl * 4 * r];
            for a in 0..l {
                for sigma in 0..2 {
                    for o in 0..2 {
                        for i in 0..2 {
                            for b in 0..r {
                                let x = src[((a * 2 + o) * 2 + i) * r + b];
                                out[(((a * 2 + sigma) * 2 + o) * 2 + i) * r + b] = x * sign(sigma, o);
                            }
                        }
                    }
                }
            }
            DenseTensor::from_raw(vec![nl, 2, 2, r], out)
        }
    }
}

impl ParamCircuit {
    pub fn new(n: usize, gates: Vec<Gate>, theta: Vec<f64>) -> Result<Self> {
        if n < 1 {
            return domain_err("a circuit needs at least one qubit");
        }
        if theta.len() != gates.len() {
            return dim_err(format!("{} gates but {} parameters", gates.len(), theta.len()));
        }
        if let Some(x) = theta.iter().find(|x| !x.is_finite()) {
            return domain_err(format!("non-finite parameter {x}"));
        }
        let mut gate_of_param = vec![usize::MAX; theta.len()];
        let mut layers = 0usize;
        for (idx, g) in gates.iter().enumerate() {
            let top = if g.kind == GateKind::Uzz { g.qubit + 1 } else { g.qubit };
            if top >= n {
                return domain_err(format!("gate {idx} acts outside the {n}-qubit register"));
            }
            if g.param >= theta.len() || gate_of_param[g.param] != usize::MAX {
                return domain_err(format!("gate {idx} has an invalid or repeated parameter index {}", g.param));
            }
            gate_of_param[g.param] = idx;
            if g.layer + 1 < layers || g.layer > layers {
                return domain_err(format!("gate {idx}: layer indices must be consecutive and non-decreasing"));
            }
            layers = layers.max(g.layer + 1);
        }
        let mut site_ops = vec![vec![Vec::new(); n]; layers];
        for (idx, g) in gates.iter().enumerate() {
            for q in g.qubits() {
                site_ops[g.layer][q].push(idx);
            }
        }
        Ok(Self { n, layers, gates, theta, site_ops, gate_of_param })
    }

    /// Brickwall ansatz with all angles zero (the identity).
    pub fn brickwall(n: usize, layers: usize) -> Result<Self> {
        Self::brickwall_with(n, layers, BrickLayout::Trailing)
    }

    pub fn brickwall_with(n: usize, layers: usize, layout: BrickLayout) -> Result<Self> {
        if n < 2 || layers < 1 {
            return domain_err(format!("brickwall needs n >= 2 and L >= 1, got n={n}, L={layers}"));
        }
        let mut gates: Vec<Gate> = Vec::with_capacity(layout.params_per_layer(n) * layers);
        let mut push = |kind, qubit, layer| {
            let param = gates.len();
            gates.push(Gate { kind, qubit, param, layer });
        };
        for layer in 0..layers {
            for start in [0usize, 1] {
                for a in (start..n - 1).step_by(2) {
                    let rotations = |push: &mut dyn FnMut(GateKind, usize, usize)| {
                        for q in [a, a + 1] {
                            push(GateKind::Rz, q, layer);
                            push(GateKind::Rx, q, layer);
                        }
                    };
                    if layout == BrickLayout::Sandwich {
                        rotations(&mut push);
                    }
                    push(GateKind::Uzz, a, layer);
                    rotations(&mut push);
                }
            }
        }
        let k = gates.len();
        Self::new(n, gates, vec![0.0; k])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_layers(&self) -> usize {
        self.layers
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn two_qubit_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::Uzz).count()
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.theta.len() {
            return dim_err(format!("expected {} parameters, got {}", self.theta.len(), theta.len()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return domain_err("non-finite parameter");
        }
        let mut c = self.clone();
        c.theta = theta.to_vec();
        Ok(c)
    }

    /// `(layer, site)` of the single site tensor that depends on parameter `k`.
    pub fn param_location(&self, k: usize) -> (usize, usize) {
        let g = &self.gates[self.gate_of_param[k]];
        (g.layer, g.qubit)
    }

    /// Parameter indices grouped by layer, in circuit order.
    pub fn params_by_layer(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.layers];
        for g in &self.gates {
            out[g.layer].push(g.param);
        }
        out
    }

    /// Parameter indices grouped into bricks: one Uzz with the rotations
    /// listed around it. A rotation opens a new group when its qubit is off the
    /// group's Uzz or already carries that kind of rotation after it.
    pub fn params_by_brick(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut uzz: Option<usize> = None;
        let mut after: Vec<(GateKind, usize)> = Vec::new();
        for (i, g) in self.gates.iter().enumerate() {
            let split = i == 0
                || self.gates[i - 1].layer != g.layer
                || match (g.kind, uzz) {
                    (GateKind::Uzz, u) => u.is_some(),
                    (_, None) => false,
                    (kind, Some(q)) => (g.qubit != q && g.qubit != q + 1) || after.contains(&(kind, g.qubit)),
                };
            if split {
                out.push(Vec::new());
                uzz = None;
                after.clear();
            }
            match g.kind {
                GateKind::Uzz => uzz = Some(g.qubit),
                kind if uzz.is_some() => after.push((kind, g.qubit)),
                _ => {}
            }
            out.last_mut().unwrap().push(g.param);
        }
        out
    }

    /// Site tensor of one layer at parameters `theta`, with listed gates
    /// replaced by their `order`-th derivative in their angle.
    pub(crate) fn layer_site(&self, layer: usize, site: usize, theta: &[f64], derivs: &[(usize, u8)]) -> DenseTensor {
        let mut t = DenseTensor::from_raw(vec![1, 2, 2, 1], vec![ONE, ZERO, ZERO, ONE]);
        for &gi in &self.site_ops[layer][site] {
            let g = &self.gates[gi];
            let d = derivs.iter().find(|(p, _)| *p == g.param).map_or(0, |&(_, o)| o);
            let th = theta[g.param];
            match g.kind {
                GateKind::Rx | GateKind::Rz => left_apply(&single_qubit_matrix(g.kind, th, d), &mut t),
                GateKind::Uzz if g.qubit == site => t = attach_bond(&t, Some(uzz_coefficients(th, d))),
                GateKind::Uzz => t = attach_bond(&t, None),
            }
        }
        t
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return dim_err(format!("expected {} parameters, got {}", self.theta.len(), theta.len()));
        }
        Ok(())
    }

    pub fn layer_mpo_at(&self, layer: usize, theta: &[f64]) -> Result<Mpo> {
        self.check_theta(theta)?;
        if layer >= self.layers {
            return domain_err(format!("layer {layer} out of range"));
        }
        Ok(Mpo::from_sites_unchecked((0..self.n).map(|k| self.layer_site(layer, k, theta, &[])).collect()))
    }

    pub fn layer_mpo(&self, layer: usize) -> Result<Mpo> {
        self.layer_mpo_at(layer, &self.theta)
    }

    /// `U = L_{L-1} ··· L_1 L_0` as one MPO, compressing after every product.
    pub fn to_mpo(&self, chi_max: usize) -> Result<Mpo> {
        self.to_mpo_at(&self.theta, chi_max)
    }

    pub fn to_mpo_at(&self, theta: &[f64], chi_max: usize) -> Result<Mpo> {
        if chi_max < 1 {
            return domain_err("chi_max must be at least 1");
        }
        let mut acc = self.layer_mpo_at(0, theta)?.compress(chi_max, DEFAULT_REL_TOL)?;
        for layer in 1..self.layers {
            acc = self.layer_mpo_at(layer, theta)?.multiply(&acc)?.compress(chi_max, DEFAULT_REL_TOL)?;
        }
        Ok(acc)
    }

    fn check_dense(&self) -> Result<()> {
        if self.n > DENSE_MAX_QUBITS {
            return Err(Error::Size(format!("dense simulation limited to n <= {DENSE_MAX_QUBITS}")));
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        self.check_dense()?;
        let mut m = CMatrix::identity(1 << self.n, 1 << self.n);
        self.apply_to_columns(&mut m)?;
        Ok(m)
    }

    pub fn apply_to_state(&self, psi: &[C64]) -> Result<Vec<C64>> {
        self.check_dense()?;
        if psi.len() != 1 << self.n {
            return dim_err(format!("state of length {} on {} qubits", psi.len(), self.n));
        }
        let mut out = psi.to_vec();
        for g in &self.gates {
            apply_gate(g, self.theta[g.param], self.n, &mut out);
        }
        Ok(out)
    }

    /// `M ← U M`, column by column.
    pub fn apply_to_columns(&self, m: &mut CMatrix) -> Result<()> {
        self.check_dense()?;
        if m.nrows() != 1 << self.n {
            return dim_err("row count must be 2^n");
        }
        let rows = m.nrows();
        for col in m.as_mut_slice().chunks_mut(rows) {
            for g in &self.gates {
                apply_gate(g, self.theta[g.param], self.n, col);
            }
        }
        Ok(())
    }

    /// Versioned text form; angles with 17 significant digits (bit-exact round trip).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "layers {}", self.layers);
        let _ = writeln!(s, "gates {}", self.gates.len());
        for g in &self.gates {
            let qs: Vec<String> = g.qubits().iter().map(|q| q.to_string()).collect();
            let _ = writeln!(s, "{} {} {} {}", g.layer, g.kind.name(), qs.join(" "), g.param);
        }
        let _ = writeln!(s, "theta {}", self.theta.len());
        for x in &self.theta {
            let _ = writeln!(s, "{x:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("unexpected end of input, expected {what}")));
        let (ln, head) = next("header")?;
        if head != FORMAT_HEADER {
            return Err(err(ln, &format!("expected '{FORMAT_HEADER}'")));
        }
        let mut keyed = |key: &str| -> Result<usize> {
            let (ln, l) = next(key)?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(err(ln, &format!("expected '{key} <count>'")));
            }
            it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(ln, &format!("bad value for {key}")))
        };
        let n = keyed("n")?;
        let layers = keyed("layers")?;
        let count = keyed("gates")?;
        let mut gates = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = next("gate record")?;
            let f: Vec<&str> = l.split_whitespace().collect();
            let kind = f.get(1).and_then(|k| GateKind::parse(k)).ok_or_else(|| err(ln, "unknown gate kind"))?;
            let arity = if kind == GateKind::Uzz { 2 } else { 1 };
            if f.len() != 3 + arity {
                return Err(err(ln, "wrong number of fields in gate record"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| err(ln, &format!("bad integer '{s}'")));
            let layer = num(f[0])?;
            let qubit = num(f[2])?;
            if arity == 2 && num(f[3])? != qubit + 1 {
                return Err(err(ln, "Uzz must act on adjacent qubits (k, k+1)"));
            }
            let param = num(f[2 + arity])?;
            gates.push(Gate { kind, qubit, param, layer });
        }
        let k = {
            let (ln, l) = next("theta")?;
            let mut it = l.split_whitespace();
            if it.next() != Some("theta") {
                return Err(err(ln, "expected 'theta <count>'"));
            }
            it.next().and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| err(ln, "bad theta count"))?
        };
        let mut theta = Vec::with_capacity(k);
        for _ in 0..k {
            let (ln, l) = next("angle")?;
            let x: f64 = l.parse().map_err(|_| err(ln, &format!("bad angle '{l}'")))?;
            theta.push(x);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "trailing content"));
        }
        let c = ParamCircuit::new(n, gates, theta)?;
        if c.layers != layers {
            return Err(err(0, &format!("declared {layers} layers, gate records imply {}", c.layers)));
        }
        Ok(c)
    }
}

fn apply_gate(g: &Gate, theta: f64, n: usize, psi: &mut [C64]) {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let bit = |q: usize| 1usize << (n - 1 - q);
    match g.kind {
        GateKind::Rx => {
            let m = bit(g.qubit);
            let ms = C64::new(0.0, -s);
            for b in 0..psi.len() {
                if b & m == 0 {
                    let (x0, x1) = (psi[b], psi[b | m]);
                    psi[b] = x0 * c + x1 * ms;
                    psi[b | m] = x0 * ms + x1 * c;
                }
            }
        }
        GateKind::Rz => {
            let m = bit(g.qubit);
            let (p0, p1) = (C64::new(c, -s), C64::new(c, s));
            for (b, x) in psi.iter_mut().enumerate() {
                *x *= if b & m == 0 { p0 } else { p1 };
            }
        }
        GateKind::Uzz => {
            let (ma, mb) = (bit(g.qubit), bit(g.qubit + 1));
            let (even, odd) = (C64::new(c, -s), C64::new(c, s));
            for (b, x) in psi.iter_mut().enumerate() {
                let parity = ((b & ma) != 0) ^ ((b & mb) != 0);
                *x *= if parity { odd } else { even };
            }
        }
    }
}
