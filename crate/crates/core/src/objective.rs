//! The slice objective `F(θ) = Re tr[U(θ)† W U_prev]`, optionally divided by `2^n`.
//!
//! With `U = L_{L-1} ··· L_0` the factor stack at each site is
//! `[L_0†, ..., L_{L-1}†, T]` where `T = W·U_prev` is merged once up front.
//! Left and right environments of that stack are cached. A derivative in
//! parameter `k` replaces the single site tensor that depends on it, so a
//! gradient entry costs one site transfer and one dot product. Hessian pairs
//! on one site reuse the same trick; pairs on different sites sweep a
//! modified environment from the first site to the second.

use nalgebra::DMatrix;

use crate::circuits::ParamCircuit;
use crate::error::{dim_err, Result};
use crate::mpo::{dot, site_adjoint, trace_product, transfer, Mpo, TraceNetwork, DEFAULT_REL_TOL};
use crate::tensor::DenseTensor;

#[derive(Clone, Debug)]
pub struct SliceProblem {
    ansatz: ParamCircuit,
    target: Mpo,
    scale: f64,
    /// Parameters whose site tensor lives on each site.
    params_at_site: Vec<Vec<usize>>,
}

impl SliceProblem {
    /// `previous = None` means `U_prev = 1`.
    pub fn new(ansatz: ParamCircuit, propagator: &Mpo, previous: Option<&Mpo>, normalize: bool) -> Result<Self> {
        let n = ansatz.n();
        if propagator.num_sites() != n || previous.is_some_and(|p| p.num_sites() != n) {
            return dim_err(format!("operators must act on the ansatz's {n} qubits"));
        }
        let target = match previous {
            Some(p) => propagator.multiply(p)?.compress(usize::MAX, DEFAULT_REL_TOL)?,
            None => propagator.clone(),
        };
        let mut params_at_site = vec![Vec::new(); n];
        for k in 0..ansatz.num_params() {
            params_at_site[ansatz.param_location(k).1].push(k);
        }
        let scale = if normalize { 0.5f64.powi(n as i32) } else { 1.0 };
        Ok(Self { ansatz, target, scale, params_at_site })
    }

    pub fn ansatz(&self) -> &ParamCircuit {
        &self.ansatz
    }

    /// The merged operator `W·U_prev`.
    pub fn target(&self) -> &Mpo {
        &self.target
    }

    pub fn num_params(&self) -> usize {
        self.ansatz.num_params()
    }

    pub fn normalized(&self) -> bool {
        self.scale != 1.0
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return dim_err(format!("expected {} parameters, got {}", self.num_params(), theta.len()));
        }
        Ok(())
    }

    fn site_stack(&self, theta: &[f64], k: usize) -> Vec<DenseTensor> {
        let mut stack: Vec<DenseTensor> = (0..self.ansatz.num_layers())
            .map(|l| site_adjoint(&self.ansatz.layer_site(l, k, theta, &[])))
            .collect();
        stack.push(self.target.sites()[k].clone());
        stack
    }

    pub(crate) fn network(&self, theta: &[f64]) -> TraceNetwork {
        TraceNetwork::new((0..self.ansatz.n()).map(|k| self.site_stack(theta, k)).collect())
    }

    /// Replacement factors at site `k` for the given derivative orders.
    fn modified(&self, theta: &[f64], k: usize, derivs: &[(usize, u8)]) -> Vec<(usize, DenseTensor)> {
        let mut layers: Vec<usize> = derivs.iter().map(|&(p, _)| self.ansatz.param_location(p).0).collect();
        layers.sort_unstable();
        layers.dedup();
        layers
            .into_iter()
            .map(|l| {
                let own: Vec<(usize, u8)> =
                    derivs.iter().cloned().filter(|&(p, _)| self.ansatz.param_location(p).0 == l).collect();
                (l, site_adjoint(&self.ansatz.layer_site(l, k, theta, &own)))
            })
            .collect()
    }

    fn refs(mods: &[(usize, DenseTensor)]) -> Vec<(usize, &DenseTensor)> {
        mods.iter().map(|(f, t)| (*f, t)).collect()
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        // A single left sweep is enough for the value.
        let mut env = vec![crate::C64::new(1.0, 0.0)];
        for k in 0..self.ansatz.n() {
            let stack = self.site_stack(theta, k);
            let refs: Vec<&DenseTensor> = stack.iter().collect();
            env = transfer(&env, &refs);
        }
        Ok(env[0].re * self.scale)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(theta)?;
        let net = self.network(theta);
        Ok((net.value().re * self.scale, self.gradient_from(&net, theta)))
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(theta)?.1)
    }

    pub(crate) fn gradient_from(&self, net: &TraceNetwork, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.num_params()];
        for (k, params) in self.params_at_site.iter().enumerate() {
            for &p in params {
                let mods = self.modified(theta, k, &[(p, 1)]);
                g[p] = net.replaced(k, &Self::refs(&mods)).re * self.scale;
            }
        }
        g
    }

    /// Gradient by full recontraction per parameter (no cached environments).
    pub fn gradient_naive(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        let layers: Vec<Mpo> = (0..self.ansatz.num_layers())
            .map(|l| Ok(self.ansatz.layer_mpo_at(l, theta)?.adjoint()))
            .collect::<Result<_>>()?;
        let mut g = vec![0.0; self.num_params()];
        for (p, gp) in g.iter_mut().enumerate() {
            let (l, k) = self.ansatz.param_location(p);
            let mut sites = layers[l].sites().to_vec();
            sites[k] = site_adjoint(&self.ansatz.layer_site(l, k, theta, &[(p, 1)]));
            let replaced = Mpo::new(sites)?;
            let mut factors: Vec<&Mpo> = layers.iter().collect();
            factors[l] = &replaced;
            factors.push(&self.target);
            *gp = trace_product(&factors)?.re * self.scale;
        }
        Ok(g)
    }

    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let all: Vec<usize> = (0..self.num_params()).collect();
        self.hessian_subset(theta, &all)
    }

    /// Hessian restricted to the listed parameters (rows/columns in the given order).
    pub fn hessian_subset(&self, theta: &[f64], subset: &[usize]) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        let net = self.network(theta);
        Ok(self.hessian_from(&net, theta, subset))
    }

    /// Value, gradient entries and Hessian block on `subset` from one network build.
    pub fn model_subset(&self, theta: &[f64], subset: &[usize]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        self.check(theta)?;
        if let Some(&bad) = subset.iter().find(|&&p| p >= self.num_params()) {
            return dim_err(format!("parameter index {bad} out of range"));
        }
        let net = self.network(theta);
        let g = subset
            .iter()
            .map(|&p| {
                let k = self.ansatz.param_location(p).1;
                let mods = self.modified(theta, k, &[(p, 1)]);
                net.replaced(k, &Self::refs(&mods)).re * self.scale
            })
            .collect();
        Ok((net.value().re * self.scale, g, self.hessian_from(&net, theta, subset)))
    }

    pub(crate) fn hessian_from(&self, net: &TraceNetwork, theta: &[f64], subset: &[usize]) -> DMatrix<f64> {
        let n = self.ansatz.n();
        let m = subset.len();
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut by_site: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (pos, &p) in subset.iter().enumerate() {
            by_site[self.ansatz.param_location(p).1].push((pos, p));
        }
        let last = (0..n).rev().find(|&k| !by_site[k].is_empty()).unwrap_or(0);
        let mut set = |i: usize, j: usize, v: f64| {
            h[(i, j)] = v;
            h[(j, i)] = v;
        };
        for k in 0..n {
            let here = &by_site[k];
            for (a, &(ip, p)) in here.iter().enumerate() {
                for &(iq, q) in &here[a..] {
                    let derivs: Vec<(usize, u8)> = if p == q { vec![(p, 2)] } else { vec![(p, 1), (q, 1)] };
                    let mods = self.modified(theta, k, &derivs);
                    set(ip, iq, net.replaced(k, &Self::refs(&mods)).re * self.scale);
                }
            }
            if k == last {
                continue;
            }
            for &(ip, p) in here {
                let mods = self.modified(theta, k, &[(p, 1)]);
                let mut env = transfer(&net.left[k], &net.site_with(k, &Self::refs(&mods)));
                for b in k + 1..=last {
                    for &(iq, q) in &by_site[b] {
                        let mq = self.modified(theta, b, &[(q, 1)]);
                        let e = transfer(&env, &net.site_with(b, &Self::refs(&mq)));
                        set(ip, iq, dot(&e, &net.right[b + 1]).re * self.scale);
                    }
                    if b < last {
                        env = transfer(&env, &net.site_with(b, &[]));
                    }
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, spectral_norm, trace, CMatrix};
    use crate::mpo::{ising_mpo, HamiltonianSpec};
    use crate::propagators::{taylor1_mpo, wI_mpo};
    use crate::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(k: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
    }

    fn dense_value(c: &ParamCircuit, theta: &[f64], target: &CMatrix, scale: f64) -> f64 {
        let u = c.with_theta(theta).unwrap().to_dense().unwrap();
        trace(&(u.adjoint() * target)).re * scale
    }

    fn problem(n: usize, layers: usize, tau: f64, prev_seed: Option<u64>) -> (SliceProblem, CMatrix) {
        let h = ising_mpo(&HamiltonianSpec::standard(n).unwrap()).unwrap();
        let w = taylor1_mpo(&h, tau).unwrap().mpo;
        let c = ParamCircuit::brickwall(n, layers).unwrap();
        let prev = prev_seed.map(|s| c.to_mpo_at(&random_theta(c.num_params(), s), 16).unwrap());
        let mut target = w.to_dense().unwrap();
        if let Some(p) = &prev {
            target = target * p.to_dense().unwrap();
        }
        (SliceProblem::new(c, &w, prev.as_ref(), true).unwrap(), target)
    }

    #[test]
    fn identity_everything_gives_one() {
        let n = 4;
        let h = ising_mpo(&HamiltonianSpec::standard(n).unwrap()).unwrap();
        let w = wI_mpo(&h, 0.0).unwrap().mpo;
        let c = ParamCircuit::brickwall(n, 2).unwrap();
        let zero = vec![0.0; c.num_params()];
        let p = SliceProblem::new(c.clone(), &w, None, true).unwrap();
        assert!((p.value(&zero).unwrap() - 1.0).abs() < 1e-14);
        assert!(p.gradient(&zero).unwrap().iter().all(|g| g.abs() < 1e-14));
        let raw = SliceProblem::new(c, &w, None, false).unwrap();
        assert!((raw.value(&zero).unwrap() - 16.0).abs() < 1e-12);
        let hess = p.hessian(&zero).unwrap();
        let eig = nalgebra::SymmetricEigen::new(hess);
        assert!(eig.eigenvalues.iter().all(|&e| e <= 1e-10));
    }

    #[test]
    fn value_matches_dense_with_previous() {
        let (p, target) = problem(5, 2, 0.01, Some(3));
        let theta = random_theta(p.num_params(), 4);
        let f = p.value(&theta).unwrap();
        let oracle = dense_value(p.ansatz(), &theta, &target, 1.0 / 32.0);
        assert!((f - oracle).abs() < 1e-10 * oracle.abs().max(1e-3));
        let (fv, _) = p.value_and_gradient(&theta).unwrap();
        assert!((fv - f).abs() < 1e-13);
    }

    #[test]
    fn value_bounded_by_spectral_norm() {
        let (p, target) = problem(4, 2, 0.3, None);
        let bound = spectral_norm(&target);
        for seed in 0..5 {
            let f = p.value(&random_theta(p.num_params(), seed)).unwrap();
            assert!(f.abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (p, _) = problem(5, 2, 0.01, Some(8));
        let theta = random_theta(p.num_params(), 9);
        let g = p.gradient(&theta).unwrap();
        let h = 1e-5;
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fd = (p.value(&tp).unwrap() - p.value(&tm).unwrap()) / (2.0 * h);
            assert!((g[k] - fd).abs() <= 1e-6 * g[k].abs().max(1e-3), "k={k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn cached_gradient_equals_naive() {
        let (p, _) = problem(5, 2, 0.05, Some(1));
        let theta = random_theta(p.num_params(), 2);
        let a = p.gradient(&theta).unwrap();
        let b = p.gradient_naive(&theta).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_zz_parameter_closed_form() {
        // n = 2, only θ_zz moves, target exp(-iτJ ZZ):
        // F(θ) = Re tr[e^{iθZZ/2} e^{-iτJ ZZ}]/4 = cos(θ/2 - τJ), F'(0) = sin(τJ)/2.
        let (j, tau) = (2.0f64, 0.01f64);
        let zz = crate::linalg::kron(&crate::linalg::pauli_z(), &crate::linalg::pauli_z());
        let target = identity(4) * C64::from((tau * j).cos()) + zz * C64::new(0.0, -(tau * j).sin());
        let w = Mpo::from_dense(&target, 4, 1e-14).unwrap();
        let c = ParamCircuit::brickwall(2, 1).unwrap();
        let p = SliceProblem::new(c, &w, None, true).unwrap();
        let g = p.gradient(&[0.0; 5]).unwrap();
        assert!((g[0] - (tau * j).sin() / 2.0).abs() < 1e-15);
        assert!(g[1..].iter().all(|x| x.abs() < 1e-15));
        // F''(θ) = -F(θ)/4 for any single rotation parameter.
        let h = p.hessian(&[0.3, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let f = p.value(&[0.3, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((h[(0, 0)] + f / 4.0).abs() < 1e-14);
    }

    #[test]
    fn hessian_matches_second_differences() {
        let (p, _) = problem(4, 1, 0.05, Some(5));
        let theta = random_theta(p.num_params(), 6);
        let h = p.hessian(&theta).unwrap();
        let step = 1e-4;
        let f = |t: &[f64]| p.value(t).unwrap();
        for i in 0..theta.len() {
            for j in i..theta.len() {
                let mut pp = theta.clone();
                let mut pm = theta.clone();
                let mut mp = theta.clone();
                let mut mm = theta.clone();
                pp[i] += step;
                pp[j] += step;
                pm[i] += step;
                pm[j] -= step;
                mp[i] -= step;
                mp[j] += step;
                mm[i] -= step;
                mm[j] -= step;
                let fd = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * step * step);
                assert!((h[(i, j)] - fd).abs() <= 1e-4 * h[(i, j)].abs().max(1e-2), "({i},{j})");
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn hessian_subset_is_a_submatrix() {
        let (p, _) = problem(5, 2, 0.02, None);
        let theta = random_theta(p.num_params(), 11);
        let full = p.hessian(&theta).unwrap();
        let subset = [7usize, 2, 31, 30];
        let sub = p.hessian_subset(&theta, &subset).unwrap();
        for (a, &i) in subset.iter().enumerate() {
            for (b, &j) in subset.iter().enumerate() {
                assert!((sub[(a, b)] - full[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn four_pi_periodic_objective() {
        let (p, _) = problem(3, 2, 0.1, None);
        let theta = random_theta(p.num_params(), 12);
        let f0 = p.value(&theta).unwrap();
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] += 4.0 * std::f64::consts::PI;
            assert!((p.value(&t).unwrap() - f0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_mismatched_sizes() {
        let c = ParamCircuit::brickwall(3, 1).unwrap();
        assert!(SliceProblem::new(c.clone(), &Mpo::identity(4), None, true).is_err());
        let p = SliceProblem::new(c, &Mpo::identity(3), None, true).unwrap();
        assert!(p.value(&[0.0; 3]).is_err());
    }
}
