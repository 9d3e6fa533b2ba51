use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{norm, Objective, OptRun};
use crate::error::{domain_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    /// `0` disables the gradient stop.
    pub grad_tol: f64,
    pub target_value: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.99, eps: 1e-8, max_iters: 20_000, grad_tol: 0.0, target_value: None }
    }
}

/// Adam ascent with bias-corrected moments.
pub fn adam_optimize(obj: &dyn Objective, theta0: &[f64], cfg: &AdamConfig) -> Result<OptRun> {
    if theta0.len() != obj.num_params() {
        return domain_err(format!("expected {} parameters, got {}", obj.num_params(), theta0.len()));
    }
    if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) || cfg.learning_rate <= 0.0 {
        return domain_err("Adam needs 0 <= beta < 1 and a positive learning rate");
    }
    let start = Instant::now();
    let k = theta0.len();
    let mut theta = theta0.to_vec();
    let (mut m, mut v) = (vec![0.0; k], vec![0.0; k]);
    let (mut f, mut g) = obj.value_and_gradient(&theta)?;
    let mut run = OptRun::default();
    run.push(0, f, &g);
    let done = |f: f64, g: &[f64]| cfg.target_value.is_some_and(|t| f >= t) || norm(g) < cfg.grad_tol;
    for it in 1..=cfg.max_iters {
        if done(f, &g) {
            break;
        }
        let c1 = 1.0 - cfg.beta1.powi(it as i32);
        let c2 = 1.0 - cfg.beta2.powi(it as i32);
        for i in 0..k {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            theta[i] += cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
        }
        (f, g) = obj.value_and_gradient(&theta)?;
        if !f.is_finite() {
            return Err(crate::Error::Numeric(format!("objective became {f} at iteration {it}")));
        }
        run.push(it, f, &g);
    }
    run.converged = done(f, &g);
    run.final_theta = theta;
    run.wall_time_s = start.elapsed().as_secs_f64();
    Ok(run)
}
