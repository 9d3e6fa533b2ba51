use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{norm, Objective, OptRun};
use crate::error::{domain_err, Result};

/// Below this the 1D sinusoid is treated as identically zero.
const DEGENERATE: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinatewiseConfig {
    pub max_sweeps: usize,
    pub grad_tol: f64,
    /// Stop once a sweep raises `F` by less than this.
    pub value_tol: f64,
}

impl Default for CoordinatewiseConfig {
    fn default() -> Self {
        Self { max_sweeps: 1000, grad_tol: 1e-6, value_tol: 0.0 }
    }
}

/// Maximizer of `θ ↦ A cos(θ/2) + B sin(θ/2)` from its values at `θ` and `θ + π`.
///
/// The returned angle is `θ - 2 atan2(F(θ), F(θ+π)) + π + 4πp`, with `p ∈ {0, -1}`
/// chosen to keep the move small. `None` when both samples vanish.
pub fn coordinate_update(theta: f64, f0: f64, f_shift: f64) -> Option<f64> {
    if f0.hypot(f_shift) < DEGENERATE {
        return None;
    }
    let raw = -2.0 * f0.atan2(f_shift) + PI;
    Some(if raw > 2.0 * PI { theta + raw - 4.0 * PI } else { theta + raw })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateStep {
    pub param: usize,
    pub f_before: f64,
    pub f_shift: f64,
    /// `sqrt(F(θ)² + F(θ+π)²)`, the maximum of the 1D sinusoid.
    pub f_predicted: f64,
    pub theta_new: f64,
    pub skipped: bool,
}

/// One sweep through the parameters in index order.
pub fn coordinatewise_sweep(obj: &dyn Objective, theta: &mut [f64], f_start: f64) -> Result<Vec<CoordinateStep>> {
    let mut f = f_start;
    let mut steps = Vec::with_capacity(theta.len());
    for p in 0..theta.len() {
        let old = theta[p];
        theta[p] = old + PI;
        let f_shift = obj.value(theta)?;
        let step = match coordinate_update(old, f, f_shift) {
            Some(new) => {
                theta[p] = new;
                let best = f.hypot(f_shift);
                let s = CoordinateStep { param: p, f_before: f, f_shift, f_predicted: best, theta_new: new, skipped: false };
                f = best;
                s
            }
            None => {
                theta[p] = old;
                CoordinateStep { param: p, f_before: f, f_shift, f_predicted: f, theta_new: old, skipped: true }
            }
        };
        steps.push(step);
    }
    Ok(steps)
}

pub fn coordinatewise_optimize(obj: &dyn Objective, theta0: &[f64], cfg: &CoordinatewiseConfig) -> Result<OptRun> {
    if theta0.len() != obj.num_params() {
        return domain_err(format!("expected {} parameters, got {}", obj.num_params(), theta0.len()));
    }
    let start = Instant::now();
    let mut theta = theta0.to_vec();
    let (mut f, mut g) = obj.value_and_gradient(&theta)?;
    let mut run = OptRun::default();
    run.push(0, f, &g);
    for sweep in 1..=cfg.max_sweeps {
        if norm(&g) < cfg.grad_tol {
            break;
        }
        let steps = coordinatewise_sweep(obj, &mut theta, f)?;
        run.skipped_coordinates += steps.iter().filter(|s| s.skipped).count();
        let f_prev = f;
        (f, g) = obj.value_and_gradient(&theta)?;
        if !f.is_finite() {
            return Err(crate::Error::Numeric(format!("objective became {f} in sweep {sweep}")));
        }
        run.push(sweep, f, &g);
        if f - f_prev < cfg.value_tol {
            break;
        }
    }
    run.converged = norm(&g) < cfg.grad_tol;
    run.final_theta = theta;
    run.wall_time_s = start.elapsed().as_secs_f64();
    Ok(run)
}
