use std::time::Instant;

use nalgebra::{DMatrix, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{norm, Objective, OptRun};
use crate::error::{domain_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Batch {
    /// One Newton step in all parameters.
    Global,
    /// One step per layer, sweeping the layers in order.
    Layer,
    /// One step per brick (a Uzz and the rotations that follow it).
    Gate,
}

impl Batch {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global" => Some(Batch::Global),
            "layer" => Some(Batch::Layer),
            "gate" => Some(Batch::Gate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Eigenvalues above `-eig_cutoff` are dropped from the step.
    pub eig_cutoff: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub batch: Batch,
    /// Stop as soon as the value reaches this level.
    pub target_value: Option<f64>,
    /// Levenberg-Marquardt damping: the kept eigenvalues are shifted by `-μ`,
    /// with `μ` starting at this multiple of the largest `|λ|` and adapted per
    /// step. `None` takes plain pseudo-Newton steps.
    pub damping: Option<f64>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { eig_cutoff: 1e-5, grad_tol: 1e-5, max_iters: 1000, batch: Batch::Global, target_value: None, damping: None }
    }
}

/// `Δθ = -Σ_{λ ≤ -ε} v vᵀ g / λ`, or `None` when no eigenvalue is that negative.
pub fn pseudo_newton_step(h: &DMatrix<f64>, g: &[f64], eig_cutoff: f64) -> Option<Vec<f64>> {
    assert_eq!(h.nrows(), g.len());
    damped_step(&SymmetricEigen::new(h.clone()), g, eig_cutoff, 0.0)
}

/// `Δθ = -Σ_{λ ≤ -ε} v vᵀ g / (λ - μ)`.
fn damped_step(eig: &SymmetricEigen<f64, Dyn>, g: &[f64], eig_cutoff: f64, mu: f64) -> Option<Vec<f64>> {
    let m = g.len();
    let mut step = vec![0.0; m];
    let mut used = false;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > -eig_cutoff {
            continue;
        }
        used = true;
        let v = eig.eigenvectors.column(i);
        let coef = -(0..m).map(|r| v[r] * g[r]).sum::<f64>() / (lambda - mu);
        for r in 0..m {
            step[r] += coef * v[r];
        }
    }
    used.then_some(step)
}

const NO_DECREASE_SLACK: f64 = 1e-12;

/// Apply `direction` on `batch`, halving until `F` does not drop. Falls back to
/// a backtracked gradient-ascent step. Returns the accepted point, its value
/// and whether the fallback was taken.
fn safeguarded_step(
    obj: &dyn Objective,
    theta: &[f64],
    f0: f64,
    batch: &[usize],
    direction: Option<&[f64]>,
    grad: &[f64],
) -> Result<(Vec<f64>, f64, bool)> {
    let trial = |d: &[f64], alpha: f64| -> Result<(Vec<f64>, f64)> {
        let mut cand = theta.to_vec();
        for (&k, dk) in batch.iter().zip(d) {
            cand[k] += alpha * dk;
        }
        let f = obj.value(&cand)?;
        Ok((cand, f))
    };
    let mut accepted: Option<(Vec<f64>, f64)> = None;
    if let Some(d) = direction {
        let mut alpha = 1.0;
        for _ in 0..=20 {
            let (cand, f) = trial(d, alpha)?;
            if f > f0 {
                return Ok((cand, f, false));
            }
            if f >= f0 - NO_DECREASE_SLACK {
                accepted = Some((cand, f));
                break;
            }
            alpha *= 0.5;
        }
    }
    // No strict gain: the step only moved along dropped (positive-curvature)
    // directions or was rejected. Try plain ascent before settling.
    let mut alpha = 1.0;
    for _ in 0..60 {
        let (cand, f) = trial(grad, alpha)?;
        if f > f0 {
            return Ok((cand, f, true));
        }
        alpha *= 0.5;
    }
    Ok(match accepted {
        Some((cand, f)) => (cand, f, false),
        None => (theta.to_vec(), f0, true),
    })
}

/// One damped step on `batch`: `μ` shrinks after a gain and grows until one is
/// found. `None` if no damping level in range increases `F`.
#[allow(clippy::too_many_arguments)]
fn damped_newton_step(
    obj: &dyn Objective,
    theta: &[f64],
    f0: f64,
    batch: &[usize],
    h: &DMatrix<f64>,
    g: &[f64],
    eig_cutoff: f64,
    initial: f64,
    mu: &mut Option<f64>,
) -> Result<Option<Vec<f64>>> {
    let eig = SymmetricEigen::new(h.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    if scale == 0.0 {
        return Ok(None);
    }
    let mut m = mu.unwrap_or(scale * initial);
    for _ in 0..40 {
        let Some(d) = damped_step(&eig, g, eig_cutoff, m) else {
            return Ok(None);
        };
        let mut cand = theta.to_vec();
        for (&k, dk) in batch.iter().zip(&d) {
            cand[k] += dk;
        }
        if obj.value(&cand)? > f0 {
            *mu = Some(m / 3.0);
            return Ok(Some(cand));
        }
        m = (m * 4.0).max(scale * 1e-14);
    }
    *mu = Some(m);
    Ok(None)
}

pub fn newton_optimize(obj: &dyn Objective, theta0: &[f64], cfg: &NewtonConfig) -> Result<OptRun> {
    if theta0.len() != obj.num_params() {
        return domain_err(format!("expected {} parameters, got {}", obj.num_params(), theta0.len()));
    }
    let start = Instant::now();
    let batches = match cfg.batch {
        Batch::Global => vec![(0..obj.num_params()).collect()],
        Batch::Layer => obj.layer_batches(),
        Batch::Gate => obj.gate_batches(),
    };
    let mut theta = theta0.to_vec();
    let mut mu = vec![None; batches.len()];
    let (mut f, mut g) = obj.value_and_gradient(&theta)?;
    let mut run = OptRun::default();
    run.push(0, f, &g);
    let reached = |f: f64| cfg.target_value.is_some_and(|t| f >= t);
    for it in 1..=cfg.max_iters {
        if norm(&g) < cfg.grad_tol || reached(f) {
            break;
        }
        for (bi, batch) in batches.iter().enumerate() {
            let (fb, gb, hb) = if batches.len() == 1 {
                let (fb, _, hb) = obj.local_model(&theta, batch)?;
                (fb, batch.iter().map(|&k| g[k]).collect::<Vec<_>>(), hb)
            } else {
                obj.local_model(&theta, batch)?
            };
            let next = match cfg.damping {
                Some(d0) => damped_newton_step(obj, &theta, fb, batch, &hb, &gb, cfg.eig_cutoff, d0, &mut mu[bi])?,
                None => None,
            };
            theta = match next {
                Some(t) => t,
                None => {
                    let dir = pseudo_newton_step(&hb, &gb, cfg.eig_cutoff);
                    let (t, _, fell_back) = safeguarded_step(obj, &theta, fb, batch, dir.as_deref(), &gb)?;
                    run.fallback_steps += fell_back as usize;
                    t
                }
            };
        }
        (f, g) = obj.value_and_gradient(&theta)?;
        if !f.is_finite() {
            return Err(crate::Error::Numeric(format!("objective became {f} at iteration {it}")));
        }
        run.push(it, f, &g);
    }
    run.converged = norm(&g) < cfg.grad_tol || reached(f);
    run.final_theta = theta;
    run.wall_time_s = start.elapsed().as_secs_f64();
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::test_objectives::{Cosines, Quadratic};

    #[test]
    fn step_solves_a_concave_quadratic() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let q = Quadratic { a, center: vec![0.3, -0.7], top: 1.0 };
        let run = newton_optimize(&q, &[0.0, 0.0], &NewtonConfig::default()).unwrap();
        assert!(run.converged);
        assert!(run.iterations() <= 2);
        assert!((run.final_theta[0] - 0.3).abs() < 1e-12);
        assert!((run.final_value() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn positive_directions_are_dropped() {
        let h = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 3.0]);
        let s = pseudo_newton_step(&h, &[1.0, 1.0], 1e-5).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert_eq!(s[1], 0.0);
        let flat = DMatrix::from_row_slice(1, 1, &[-1e-7]);
        assert!(pseudo_newton_step(&flat, &[1.0], 1e-5).is_none());
    }

    #[test]
    fn saddle_start_uses_fallback_and_never_decreases() {
        // At θ = 2π every coordinate sits at a minimum of cos(θ/2).
        let c = Cosines { phases: vec![0.0; 3] };
        let theta0 = vec![2.0 * std::f64::consts::PI + 0.1, 2.0 * std::f64::consts::PI - 0.2, 1.0];
        let run = newton_optimize(&c, &theta0, &NewtonConfig::default()).unwrap();
        assert!(run.fallback_steps > 0);
        for w in run.iterates.windows(2) {
            assert!(w[1].value >= w[0].value - 1e-12);
        }
        assert!(run.converged);
        assert!((run.final_value() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn batched_variants_converge() {
        let c = Cosines { phases: vec![0.2, -0.4, 0.9, 0.0] };
        for batch in [Batch::Layer, Batch::Gate] {
            let cfg = NewtonConfig { batch, ..Default::default() };
            let run = newton_optimize(&c, &[0.5, 0.5, 0.5, 0.5], &cfg).unwrap();
            assert!(run.converged, "{batch:?}");
            assert!((run.final_value() - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn target_value_stops_early() {
        let c = Cosines { phases: vec![0.0; 2] };
        let cfg = NewtonConfig { target_value: Some(-10.0), ..Default::default() };
        let run = newton_optimize(&c, &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(run.iterations(), 0);
        assert!(run.converged);
    }
}
