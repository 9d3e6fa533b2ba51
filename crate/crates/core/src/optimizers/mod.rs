//! Maximizers of the slice objective.
//!
//! Every method works on an [`Objective`] and returns an [`OptRun`]. Runs are
//! deterministic: no method draws random numbers, and reductions follow a
//! fixed parameter order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objective::SliceProblem;

mod adam;
mod coordinatewise;
mod newton;
mod quasi_newton;
pub mod sequential;

pub use adam::{adam_optimize, AdamConfig};
pub use coordinatewise::{coordinate_update, coordinatewise_optimize, coordinatewise_sweep, CoordinateStep, CoordinatewiseConfig};
pub use newton::{newton_optimize, pseudo_newton_step, Batch, NewtonConfig};
pub use quasi_newton::{bfgs_optimize, lbfgs_optimize, QuasiNewtonConfig};

/// A smooth function of the parameter vector to be maximized.
pub trait Objective {
    fn num_params(&self) -> usize;

    fn value(&self, theta: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Value, the gradient entries in `subset`, and the Hessian block on `subset`.
    fn local_model(&self, theta: &[f64], subset: &[usize]) -> Result<(f64, Vec<f64>, DMatrix<f64>)>;

    /// Parameter groups updated together by per-layer Newton.
    fn layer_batches(&self) -> Vec<Vec<usize>> {
        vec![(0..self.num_params()).collect()]
    }

    /// Parameter groups updated together by per-gate Newton.
    fn gate_batches(&self) -> Vec<Vec<usize>> {
        (0..self.num_params()).map(|k| vec![k]).collect()
    }
}

impl Objective for SliceProblem {
    fn num_params(&self) -> usize {
        SliceProblem::num_params(self)
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        SliceProblem::value(self, theta)
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        SliceProblem::value_and_gradient(self, theta)
    }

    fn local_model(&self, theta: &[f64], subset: &[usize]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let (f, g, h) = self.model_subset(theta, subset)?;
        Ok((f, g, h))
    }

    fn layer_batches(&self) -> Vec<Vec<usize>> {
        self.ansatz().params_by_layer()
    }

    fn gate_batches(&self) -> Vec<Vec<usize>> {
        self.ansatz().params_by_brick()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptRun {
    /// Entry `i` is the state after `i` iterations (entry 0 is the start).
    pub iterates: Vec<IterRecord>,
    pub final_theta: Vec<f64>,
    pub converged: bool,
    /// Steps where the method fell back to gradient ascent.
    pub fallback_steps: usize,
    /// Coordinates skipped because their 1D objective vanished identically.
    pub skipped_coordinates: usize,
    pub wall_time_s: f64,
}

impl OptRun {
    pub fn final_value(&self) -> f64 {
        self.iterates.last().map_or(f64::NAN, |r| r.value)
    }

    pub fn iterations(&self) -> usize {
        self.iterates.last().map_or(0, |r| r.iteration)
    }

    pub(crate) fn push(&mut self, iteration: usize, value: f64, grad: &[f64]) {
        self.iterates.push(IterRecord { iteration, value, grad_norm: norm(grad) });
    }

    /// Line-oriented trace: `iteration value grad_norm`, one record per line.
    pub fn trace_text(&self) -> String {
        self.iterates
            .iter()
            .map(|r| format!("{} {:.16e} {:.16e}\n", r.iteration, r.value, r.grad_norm))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerChoice {
    Newton(NewtonConfig),
    Bfgs(QuasiNewtonConfig),
    Lbfgs(QuasiNewtonConfig),
    Adam(AdamConfig),
    Coordinatewise(CoordinatewiseConfig),
}

impl OptimizerChoice {
    pub fn name(&self) -> String {
        match self {
            OptimizerChoice::Newton(c) => match c.batch {
                Batch::Global => "newton".into(),
                Batch::Layer => "newton-layer".into(),
                Batch::Gate => "newton-gate".into(),
            },
            OptimizerChoice::Bfgs(_) => "bfgs".into(),
            OptimizerChoice::Lbfgs(_) => "lbfgs".into(),
            OptimizerChoice::Adam(_) => "adam".into(),
            OptimizerChoice::Coordinatewise(_) => "coordinatewise".into(),
        }
    }
}

pub fn optimize(obj: &dyn Objective, theta0: &[f64], choice: &OptimizerChoice) -> Result<OptRun> {
    match choice {
        OptimizerChoice::Newton(c) => newton_optimize(obj, theta0, c),
        OptimizerChoice::Bfgs(c) => bfgs_optimize(obj, theta0, c),
        OptimizerChoice::Lbfgs(c) => lbfgs_optimize(obj, theta0, c),
        OptimizerChoice::Adam(c) => adam_optimize(obj, theta0, c),
        OptimizerChoice::Coordinatewise(c) => coordinatewise_optimize(obj, theta0, c),
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dotf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
