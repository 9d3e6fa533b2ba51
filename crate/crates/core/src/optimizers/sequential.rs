//! Slice-by-slice optimization and exact-target sequences.
//!
//! Sequential mode advances `U(t)` one slice at a time: slice `s` maximizes
//! `Re tr[U(θ)† W(τ) U(θ_{s-1})]`, starting from `θ_{s-1}`. The first slice
//! uses `U_prev = 1`.

use serde::{Deserialize, Serialize};

use super::{optimize, OptRun, OptimizerChoice};
use crate::analysis::{abs_summary, AbsSummary};
use crate::circuits::ParamCircuit;
use crate::error::{domain_err, Result};
use crate::mpo::HamiltonianSpec;
use crate::objective::SliceProblem;
use crate::propagators::{exact_mpo, propagator, Scheme};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSchedule {
    pub total_time: f64,
    pub slices: usize,
    pub scheme: Scheme,
    /// Bond cap for `U(θ_{s-1})` and the exact propagator.
    pub chi_max: usize,
}

impl SliceSchedule {
    pub fn tau(&self) -> f64 {
        self.total_time / self.slices as f64
    }

    fn validate(&self) -> Result<()> {
        if self.slices == 0 || !(self.total_time > 0.0 && self.total_time.is_finite()) || self.chi_max == 0 {
            return domain_err("schedule needs slices >= 1, chi_max >= 1 and a positive finite total time");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceOutcome {
    /// 1-based slice number.
    pub slice: usize,
    /// Time reached at the end of this slice.
    pub t: f64,
    pub theta: Vec<f64>,
    pub run: OptRun,
    /// `|∂F/∂θ_k|` at the warm start, before any iteration.
    pub start_gradient: AbsSummary,
}

pub fn sequential_optimize(
    spec: &HamiltonianSpec,
    ansatz: &ParamCircuit,
    theta0: &[f64],
    schedule: &SliceSchedule,
    optimizer: &OptimizerChoice,
    on_slice: &mut dyn FnMut(&SliceOutcome) -> Result<()>,
) -> Result<Vec<SliceOutcome>> {
    schedule.validate()?;
    if ansatz.n() != spec.n {
        return domain_err(format!("ansatz has {} qubits, Hamiltonian {}", ansatz.n(), spec.n));
    }
    let tau = schedule.tau();
    let w = propagator(spec, schedule.scheme, tau, schedule.chi_max)?.mpo;
    let mut theta = ansatz.with_theta(theta0)?.theta().to_vec();
    let mut out = Vec::with_capacity(schedule.slices);
    for s in 1..=schedule.slices {
        let prev = if s == 1 { None } else { Some(ansatz.to_mpo_at(&theta, schedule.chi_max)?) };
        let problem = SliceProblem::new(ansatz.clone(), &w, prev.as_ref(), true)?;
        let g0 = problem.gradient(&theta)?;
        let run = optimize(&problem, &theta, optimizer)?;
        theta = run.final_theta.clone();
        let outcome = SliceOutcome { slice: s, t: s as f64 * tau, theta: theta.clone(), run, start_gradient: abs_summary(&g0) };
        on_slice(&outcome)?;
        out.push(outcome);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactPoint {
    pub t: f64,
    pub theta: Vec<f64>,
    pub run: OptRun,
}

/// Fits the circuit to `exp(-itH)` at each time in turn, warm-starting each
/// point from the previous optimum.
pub fn exact_sequence(
    spec: &HamiltonianSpec,
    ansatz: &ParamCircuit,
    theta0: &[f64],
    times: &[f64],
    optimizer: &OptimizerChoice,
    on_point: &mut dyn FnMut(&ExactPoint) -> Result<()>,
) -> Result<Vec<ExactPoint>> {
    if ansatz.n() != spec.n {
        return domain_err(format!("ansatz has {} qubits, Hamiltonian {}", ansatz.n(), spec.n));
    }
    let h = spec.dense()?.map(C64::from);
    let mut theta = ansatz.with_theta(theta0)?.theta().to_vec();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let target = exact_mpo(&h, t, usize::MAX)?.mpo;
        let problem = SliceProblem::new(ansatz.clone(), &target, None, true)?;
        let run = optimize(&problem, &theta, optimizer)?;
        theta = run.final_theta.clone();
        let point = ExactPoint { t, theta: theta.clone(), run };
        on_point(&point)?;
        out.push(point);
    }
    Ok(out)
}
