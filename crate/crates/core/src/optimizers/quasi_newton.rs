//! BFGS and L-BFGS on `-F` with a strong-Wolfe line search.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{dotf, norm, Objective, OptRun};
use crate::error::{domain_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiNewtonConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Stored correction pairs (L-BFGS only).
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for QuasiNewtonConfig {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_iters: 1000, memory: 10, c1: 1e-4, c2: 0.9, max_line_search: 40 }
    }
}

/// Point on the search line: step length, `φ = -F` and `φ'`, with the full gradient of `-F`.
#[derive(Clone)]
struct LinePoint {
    alpha: f64,
    phi: f64,
    dphi: f64,
    theta: Vec<f64>,
    grad: Vec<f64>,
}

struct Line<'a> {
    obj: &'a dyn Objective,
    theta: &'a [f64],
    dir: &'a [f64],
}

impl Line<'_> {
    fn eval(&self, alpha: f64) -> Result<LinePoint> {
        let theta: Vec<f64> = self.theta.iter().zip(self.dir).map(|(t, d)| t + alpha * d).collect();
        let (f, g) = self.obj.value_and_gradient(&theta)?;
        let grad: Vec<f64> = g.iter().map(|x| -x).collect();
        Ok(LinePoint { alpha, phi: -f, dphi: dotf(&grad, self.dir), theta, grad })
    }
}

/// Minimizer of the cubic through two points with slopes, clamped into the bracket.
fn interpolate(lo: &LinePoint, hi: &LinePoint) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.phi - hi.phi) / (a - b);
    let rad = d1 * d1 - lo.dphi * hi.dphi;
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let mid = 0.5 * (a + b);
    if rad < 0.0 || !rad.is_finite() {
        return mid;
    }
    let d2 = (b - a).signum() * rad.sqrt();
    let x = b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
    let margin = 0.1 * (right - left);
    if x.is_finite() && x > left + margin && x < right - margin {
        x
    } else {
        mid
    }
}

/// Strong-Wolfe search along a descent direction of `φ`. `None` if none is found.
fn strong_wolfe(line: &Line, start: &LinePoint, cfg: &QuasiNewtonConfig) -> Result<Option<LinePoint>> {
    let (phi0, dphi0) = (start.phi, start.dphi);
    let armijo = |p: &LinePoint| p.phi <= phi0 + cfg.c1 * p.alpha * dphi0;
    let curvature = |p: &LinePoint| p.dphi.abs() <= -cfg.c2 * dphi0;
    let mut prev = start.clone();
    let mut alpha = 1.0;
    for i in 0..cfg.max_line_search {
        let cur = line.eval(alpha)?;
        if !armijo(&cur) || (i > 0 && cur.phi >= prev.phi) {
            return zoom(line, prev, cur, phi0, dphi0, cfg);
        }
        if curvature(&cur) {
            return Ok(Some(cur));
        }
        if cur.dphi >= 0.0 {
            return zoom(line, cur, prev, phi0, dphi0, cfg);
        }
        prev = cur;
        alpha *= 2.0;
    }
    Ok(None)
}

fn zoom(
    line: &Line,
    mut lo: LinePoint,
    mut hi: LinePoint,
    phi0: f64,
    dphi0: f64,
    cfg: &QuasiNewtonConfig,
) -> Result<Option<LinePoint>> {
    for _ in 0..cfg.max_line_search {
        let alpha = interpolate(&lo, &hi);
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let cur = line.eval(alpha)?;
        if cur.phi > phi0 + cfg.c1 * alpha * dphi0 || cur.phi >= lo.phi {
            hi = cur;
        } else {
            if cur.dphi.abs() <= -cfg.c2 * dphi0 {
                return Ok(Some(cur));
            }
            if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Accept a sufficient-decrease point even without the curvature condition.
    Ok((lo.alpha > 0.0 && lo.phi < phi0).then_some(lo))
}

enum InverseHessian {
    Dense(Option<DMatrix<f64>>),
    Limited { pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>, memory: usize },
}

impl InverseHessian {
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        match self {
            InverseHessian::Dense(None) => grad.iter().map(|g| -g).collect(),
            InverseHessian::Dense(Some(h)) => (-(h * DVector::from_column_slice(grad))).as_slice().to_vec(),
            InverseHessian::Limited { pairs, .. } => {
                let mut q = grad.to_vec();
                let mut alphas = Vec::with_capacity(pairs.len());
                for (s, y, rho) in pairs.iter().rev() {
                    let a = rho * dotf(s, &q);
                    q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                    alphas.push(a);
                }
                if let Some((s, y, _)) = pairs.back() {
                    let gamma = dotf(s, y) / dotf(y, y);
                    q.iter_mut().for_each(|x| *x *= gamma);
                }
                for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
                    let b = rho * dotf(y, &q);
                    q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
                }
                q.iter().map(|x| -x).collect()
            }
        }
    }

    fn update(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dotf(&s, &y);
        if sy <= 1e-300 {
            return;
        }
        let rho = 1.0 / sy;
        match self {
            InverseHessian::Dense(h) => {
                let m = s.len();
                let hm = h.get_or_insert_with(|| DMatrix::identity(m, m) * (sy / dotf(&y, &y)));
                let sv = DVector::from_vec(s);
                let yv = DVector::from_vec(y);
                let hy = &*hm * &yv;
                let yhy = yv.dot(&hy);
                // H ← H - ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
                *hm -= (&sv * hy.transpose() + &hy * sv.transpose()) * rho;
                *hm += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
            }
            InverseHessian::Limited { pairs, memory } => {
                if pairs.len() == *memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, rho));
            }
        }
    }
}

fn run_quasi_newton(obj: &dyn Objective, theta0: &[f64], cfg: &QuasiNewtonConfig, mut inv: InverseHessian) -> Result<OptRun> {
    if theta0.len() != obj.num_params() {
        return domain_err(format!("expected {} parameters, got {}", obj.num_params(), theta0.len()));
    }
    let start = Instant::now();
    let (f, g) = obj.value_and_gradient(theta0)?;
    let mut cur = LinePoint { alpha: 0.0, phi: -f, dphi: 0.0, theta: theta0.to_vec(), grad: g.iter().map(|x| -x).collect() };
    let mut run = OptRun::default();
    run.push(0, f, &g);
    let mut stalled = false;
    for it in 1..=cfg.max_iters {
        if norm(&cur.grad) < cfg.grad_tol {
            break;
        }
        let mut dir = inv.direction(&cur.grad);
        if dotf(&dir, &cur.grad) >= 0.0 {
            dir = cur.grad.iter().map(|x| -x).collect();
            run.fallback_steps += 1;
        }
        let line = Line { obj, theta: &cur.theta, dir: &dir };
        let start_pt = LinePoint { alpha: 0.0, dphi: dotf(&cur.grad, &dir), ..cur.clone() };
        let Some(next) = strong_wolfe(&line, &start_pt, cfg)? else {
            stalled = true;
            break;
        };
        if !next.phi.is_finite() {
            return Err(crate::Error::Numeric(format!("objective became {} at iteration {it}", -next.phi)));
        }
        let s: Vec<f64> = next.theta.iter().zip(&cur.theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        inv.update(s, y);
        cur = next;
        let g: Vec<f64> = cur.grad.iter().map(|x| -x).collect();
        run.push(it, -cur.phi, &g);
    }
    run.converged = !stalled && norm(&cur.grad) < cfg.grad_tol;
    run.final_theta = cur.theta;
    run.wall_time_s = start.elapsed().as_secs_f64();
    Ok(run)
}

pub fn bfgs_optimize(obj: &dyn Objective, theta0: &[f64], cfg: &QuasiNewtonConfig) -> Result<OptRun> {
    run_quasi_newton(obj, theta0, cfg, InverseHessian::Dense(None))
}

pub fn lbfgs_optimize(obj: &dyn Objective, theta0: &[f64], cfg: &QuasiNewtonConfig) -> Result<OptRun> {
    if cfg.memory == 0 {
        return domain_err("L-BFGS memory must be positive");
    }
    run_quasi_newton(obj, theta0, cfg, InverseHessian::Limited { pairs: VecDeque::new(), memory: cfg.memory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::test_objectives::{Cosines, Quadratic};

    fn ill_conditioned() -> Quadratic {
        let a = DMatrix::from_fn(6, 6, |i, j| if i == j { 10f64.powi(i as i32 - 2) } else if i.abs_diff(j) == 1 { 0.01 } else { 0.0 });
        Quadratic { a, center: vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0], top: 2.0 }
    }

    #[test]
    fn both_variants_solve_a_quadratic() {
        let q = ill_conditioned();
        let cfg = QuasiNewtonConfig { grad_tol: 1e-9, ..Default::default() };
        for run in [bfgs_optimize(&q, &[0.0; 6], &cfg).unwrap(), lbfgs_optimize(&q, &[0.0; 6], &cfg).unwrap()] {
            assert!(run.converged);
            for (x, c) in run.final_theta.iter().zip(&q.center) {
                assert!((x - c).abs() < 1e-6, "{x} vs {c}");
            }
            for w in run.iterates.windows(2) {
                assert!(w[1].value >= w[0].value);
            }
        }
    }

    #[test]
    fn periodic_objective_converges() {
        let c = Cosines { phases: vec![0.3, -0.8, 1.7, 2.9, -2.2] };
        let run = lbfgs_optimize(&c, &[0.0; 5], &Default::default()).unwrap();
        assert!(run.converged);
        assert!((run.final_value() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn stationary_start_is_already_converged() {
        let c = Cosines { phases: vec![0.0; 2] };
        let run = bfgs_optimize(&c, &[0.0, 0.0], &Default::default()).unwrap();
        assert!(run.converged);
        assert_eq!(run.iterations(), 0);
    }
}
