//! Power-law fits of error curves and gradient statistics.
//!
//! # Window rule for power-law fits
//!
//! Given the `κ` points inside `[t_i, t_f]`, sorted by `t`, every run of `l`
//! consecutive points is fitted by least squares in log-log space, for every
//! `l = 2..=κ` and every start position. The reported `c` and `m` are the
//! means over all those fits, and `dc`, `dm` the largest deviation of any
//! single fit from the mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::ParamCircuit;
use crate::error::{domain_err, Error, Result};
use crate::mpo::HamiltonianSpec;
use crate::objective::SliceProblem;
use crate::optimizers::sequential::SliceOutcome;
use crate::propagators::{propagator, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsSummary {
    pub mean: f64,
    pub median: f64,
}

/// Mean and median of `|v_k|`.
pub fn abs_summary(v: &[f64]) -> AbsSummary {
    if v.is_empty() {
        return AbsSummary { mean: f64::NAN, median: f64::NAN };
    }
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(f64::total_cmp);
    let m = a.len();
    let median = if m % 2 == 1 { a[m / 2] } else { 0.5 * (a[m / 2 - 1] + a[m / 2]) };
    AbsSummary { mean: a.iter().sum::<f64>() / m as f64, median }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c: f64,
    pub m: f64,
    pub dc: f64,
    pub dm: f64,
    pub t_i: f64,
    pub t_f: f64,
    /// Points inside the window.
    pub kappa: usize,
}

/// Least-squares line `y = a + b x`, returning `(a, b)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Fit `ε = c t^m` to the points with `t ∈ [t_i, t_f]`.
pub fn powerlaw_fit(points: &[(f64, f64)], t_i: f64, t_f: f64) -> Result<FitResult> {
    let mut inside: Vec<(f64, f64)> = points.iter().cloned().filter(|&(t, _)| t >= t_i && t <= t_f).collect();
    if let Some(&(t, e)) = inside.iter().find(|&&(t, e)| !(e > 0.0 && t > 0.0)) {
        return domain_err(format!("power-law fit needs positive t and ε, got ({t}, {e})"));
    }
    inside.sort_by(|a, b| a.0.total_cmp(&b.0));
    inside.dedup_by(|a, b| a.0 == b.0);
    let kappa = inside.len();
    if kappa < 2 {
        return Err(Error::Numeric(format!("power-law fit needs 2 points in [{t_i}, {t_f}], found {kappa}")));
    }
    let x: Vec<f64> = inside.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = inside.iter().map(|p| p.1.ln()).collect();
    let mut fits = Vec::new();
    for l in 2..=kappa {
        for s in 0..=kappa - l {
            let (a, b) = line_fit(&x[s..s + l], &y[s..s + l]);
            fits.push((a.exp(), b));
        }
    }
    let nf = fits.len() as f64;
    let c = fits.iter().map(|f| f.0).sum::<f64>() / nf;
    let m = fits.iter().map(|f| f.1).sum::<f64>() / nf;
    let dc = fits.iter().map(|f| (f.0 - c).abs()).fold(0.0, f64::max);
    let dm = fits.iter().map(|f| (f.1 - m).abs()).fold(0.0, f64::max);
    Ok(FitResult { c, m, dc, dm, t_i: inside[0].0, t_f: inside[kappa - 1].0, kappa })
}

pub const DEFAULT_FIT_FLOOR: f64 = 1e-9;
pub const DEFAULT_FIT_CEILING: f64 = 0.3;

/// The longest run of consecutive points (by `t`) with `ε ∈ [lo, hi]`, as `(t_i, t_f)`.
/// Ties go to the earliest run. `None` if no run has two points.
pub fn default_window(points: &[(f64, f64)], lo: f64, hi: f64) -> Option<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=sorted.len() {
        let ok = i < sorted.len() && sorted[i].1 >= lo && sorted[i].1 <= hi;
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= 2 && best.is_none_or(|(a, b)| i - s > b - a) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best.map(|(a, b)| (sorted[a].0, sorted[b - 1].0))
}

/// [`powerlaw_fit`] over [`default_window`].
pub fn powerlaw_fit_default(points: &[(f64, f64)]) -> Result<FitResult> {
    let (lo, hi) = default_window(points, DEFAULT_FIT_FLOOR, DEFAULT_FIT_CEILING)
        .ok_or_else(|| Error::Numeric("no two consecutive points with ε in [1e-9, 0.3]".into()))?;
    powerlaw_fit(points, lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// Every angle uniform in `[-π, π)`.
    Random,
    /// All angles zero.
    Identity,
}

impl InitMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(InitMode::Random),
            "identity" => Some(InitMode::Identity),
            _ => None,
        }
    }
}

/// Angles uniform in `[-π, π)`.
pub fn random_theta(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradStats {
    pub n: usize,
    pub layers: usize,
    pub tau: f64,
    pub init: InitMode,
    pub samples: usize,
    pub seed: u64,
    pub mean_abs: f64,
    pub median_abs: f64,
}

/// `|∂F/∂θ_k|` statistics of the first slice (`U_prev = 1`) of a sequential run.
///
/// Identity mode has a single deterministic sample whatever `samples` says.
pub fn gradient_stats(
    spec: &HamiltonianSpec,
    layers: usize,
    tau: f64,
    scheme: Scheme,
    init: InitMode,
    samples: usize,
    seed: u64,
) -> Result<GradStats> {
    if samples == 0 {
        return domain_err("gradient statistics need at least one sample");
    }
    let ansatz = ParamCircuit::brickwall(spec.n, layers)?;
    let w = propagator(spec, scheme, tau, usize::MAX)?.mpo;
    let problem = SliceProblem::new(ansatz, &w, None, true)?;
    let k = problem.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = if init == InitMode::Identity { 1 } else { samples };
    let mut all = Vec::with_capacity(draws * k);
    for _ in 0..draws {
        let theta = match init {
            InitMode::Random => random_theta(k, &mut rng),
            InitMode::Identity => vec![0.0; k],
        };
        all.extend(problem.gradient(&theta)?);
    }
    let s = abs_summary(&all);
    Ok(GradStats { n: spec.n, layers, tau, init, samples: draws, seed, mean_abs: s.mean, median_abs: s.median })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGradient {
    pub t: f64,
    pub mean_abs: f64,
    pub median_abs: f64,
}

pub fn slice_start_gradients(outcomes: &[SliceOutcome]) -> Vec<SliceGradient> {
    outcomes
        .iter()
        .map(|o| SliceGradient { t: o.t, mean_abs: o.start_gradient.mean, median_abs: o.start_gradient.median })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln y = a + b x` (exponential decay when `b < 0`).
pub fn log_linear_fit(points: &[(f64, f64)]) -> Result<LogLinearFit> {
    if points.len() < 3 {
        return domain_err("log-linear fit needs at least 3 points");
    }
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return domain_err("log-linear fit needs positive y");
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (a, b) = line_fit(&x, &y);
    let m = x.len() as f64;
    let my = y.iter().sum::<f64>() / m;
    let mx = x.iter().sum::<f64>() / m;
    let ss_res: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LogLinearFit { intercept: a, slope: b, slope_se: (ss_res / (m - 2.0) / sxx).sqrt(), r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(c: f64, m: f64, ts: &[f64]) -> Vec<(f64, f64)> {
        ts.iter().map(|&t| (t, c * t.powf(m))).collect()
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let ts: Vec<f64> = (1..=12).map(|k| 0.02 * k as f64).collect();
        let f = powerlaw_fit(&samples(2.0, 3.0, &ts), 0.0, 1.0).unwrap();
        assert!((f.c - 2.0).abs() < 1e-10 && (f.m - 3.0).abs() < 1e-10);
        assert!(f.dc < 1e-10 && f.dm < 1e-10);
        assert_eq!(f.kappa, 12);
    }

    #[test]
    fn two_points_give_the_log_ratio() {
        let pts = [(0.1, 0.004), (0.3, 0.05)];
        let f = powerlaw_fit(&pts, 0.0, 1.0).unwrap();
        let slope = (0.05f64 / 0.004).ln() / 3f64.ln();
        assert!((f.m - slope).abs() < 1e-14);
        assert_eq!((f.dm, f.dc), (0.0, 0.0));
    }

    #[test]
    fn rescaling_time_keeps_the_exponent() {
        let ts: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
        let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 0.7 * t.powf(2.5) * (1.0 + 0.3 * t))).collect();
        let f = powerlaw_fit(&pts, 0.0, 1.0).unwrap();
        let a = 2.0;
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(t, e)| (a * t, e)).collect();
        let g = powerlaw_fit(&scaled, 0.0, 2.0).unwrap();
        assert!((f.m - g.m).abs() < 1e-12);
        // Each window's prefactor scales by a^{-m_w}; compare the exact windowed mean.
        let ws: Vec<(f64, f64)> = {
            let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            let mut out = Vec::new();
            for l in 2..=x.len() {
                for s in 0..=x.len() - l {
                    let (ia, b) = line_fit(&x[s..s + l], &y[s..s + l]);
                    out.push((ia.exp(), b));
                }
            }
            out
        };
        let want = ws.iter().map(|(c, m)| c * a.powf(-m)).sum::<f64>() / ws.len() as f64;
        assert!((g.c - want).abs() < 1e-12 * want);
    }

    #[test]
    fn fit_errors() {
        assert!(powerlaw_fit(&[(0.1, 1e-3)], 0.0, 1.0).is_err());
        assert!(powerlaw_fit(&[(0.1, 1e-3), (0.2, 0.0)], 0.0, 1.0).is_err());
        assert!(powerlaw_fit(&[(0.1, 1e-3), (0.2, 1e-2)], 0.5, 1.0).is_err());
    }

    #[test]
    fn default_window_picks_longest_run() {
        let pts = [(0.1, 1e-12), (0.2, 1e-8), (0.3, 1e-6), (0.4, 0.5), (0.5, 0.1), (0.6, 0.2), (0.7, 0.25), (0.8, 0.28)];
        assert_eq!(default_window(&pts, 1e-9, 0.3), Some((0.5, 0.8)));
        assert_eq!(default_window(&pts[..4], 1e-9, 0.3), Some((0.2, 0.3)));
        assert_eq!(default_window(&[(0.1, 1.0)], 1e-9, 0.3), None);
    }

    #[test]
    fn identity_gradients_vanish_at_zero_time() {
        let spec = HamiltonianSpec::standard(4).unwrap();
        let g = gradient_stats(&spec, 2, 0.0, Scheme::WI, InitMode::Identity, 5, 1).unwrap();
        assert_eq!(g.samples, 1);
        assert!(g.mean_abs < 1e-14);
    }

    #[test]
    fn gradient_stats_reproducible() {
        let spec = HamiltonianSpec::standard(4).unwrap();
        let a = gradient_stats(&spec, 1, 0.01, Scheme::WI, InitMode::Random, 3, 9).unwrap();
        let b = gradient_stats(&spec, 1, 0.01, Scheme::WI, InitMode::Random, 3, 9).unwrap();
        assert_eq!(a.mean_abs.to_bits(), b.mean_abs.to_bits());
        assert!(a.mean_abs > 0.0 && a.median_abs > 0.0);
    }

    #[test]
    fn log_linear_fit_recovers_decay() {
        let pts: Vec<(f64, f64)> = (4..=10).step_by(2).map(|n| (n as f64, 3.0 * (-0.7 * n as f64).exp())).collect();
        let f = log_linear_fit(&pts).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-10);
    }

    #[test]
    fn abs_summary_median() {
        let s = abs_summary(&[-3.0, 1.0, 2.0, -4.0]);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert_eq!(abs_summary(&[-1.0, 5.0, 2.0]).median, 2.0);
    }
}
