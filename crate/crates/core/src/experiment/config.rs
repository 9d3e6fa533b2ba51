//! Sectioned `key = value` experiment configs.
//!
//! ```text
//! # comment
//! [experiment]
//! kind = optimize-exact
//! seed = 7
//! [hamiltonian]
//! n = 5, 8
//! ```
//!
//! Lists are comma separated. Times in `[time]`, `[slicing]` and `[fit]` are
//! in units of `tJ`; `gradstats.tau` is a raw time step. Every key read is
//! echoed, with its resolved value, into the header of each output file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::analysis::{InitMode, DEFAULT_FIT_CEILING, DEFAULT_FIT_FLOOR};
use crate::circuits::BrickLayout;
use crate::metrics::SPECTRAL_MAX_QUBITS;
use crate::optimizers::{AdamConfig, Batch, CoordinatewiseConfig, NewtonConfig, OptimizerChoice, QuasiNewtonConfig};
use crate::propagators::Scheme;
use crate::trotter::TrotterOrder;
use crate::DENSE_MAX_QUBITS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    OptimizeExact,
    OptimizeSliced,
    TrotterScan,
    MetricScan,
    Fit,
    GradStats,
    Infidelity,
    NoiseFloor,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::OptimizeExact,
        Kind::OptimizeSliced,
        Kind::TrotterScan,
        Kind::MetricScan,
        Kind::Fit,
        Kind::GradStats,
        Kind::Infidelity,
        Kind::NoiseFloor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::OptimizeExact => "optimize-exact",
            Kind::OptimizeSliced => "optimize-sliced",
            Kind::TrotterScan => "trotter-scan",
            Kind::MetricScan => "metric-scan",
            Kind::Fit => "fit",
            Kind::GradStats => "gradstats",
            Kind::Infidelity => "infidelity",
            Kind::NoiseFloor => "noise-floor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    fn uses_time_grid(self) -> bool {
        matches!(self, Kind::OptimizeExact | Kind::TrotterScan | Kind::MetricScan | Kind::Infidelity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimeGrid {
    Range { start: f64, stop: f64, count: usize, spacing: Spacing },
    Points(Vec<f64>),
}

impl TimeGrid {
    /// Grid points in `tJ`; a linear or log range includes both ends.
    pub fn points(&self) -> Vec<f64> {
        match self {
            TimeGrid::Points(p) => p.clone(),
            &TimeGrid::Range { start, stop, count, spacing } => {
                if count == 1 {
                    return vec![start];
                }
                let frac = |i: usize| i as f64 / (count - 1) as f64;
                (0..count)
                    .map(|i| match spacing {
                        Spacing::Linear => start + (stop - start) * frac(i),
                        Spacing::Log => (start.ln() + (stop.ln() - start.ln()) * frac(i)).exp(),
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Identity,
    Random,
    Trotter(TrotterOrder),
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::Identity => "identity",
            Init::Random => "random",
            Init::Trotter(TrotterOrder::First) => "trotter1",
            Init::Trotter(_) => "trotter2",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Init::Identity),
            "random" => Some(Init::Random),
            "trotter1" => Some(Init::Trotter(TrotterOrder::First)),
            "trotter2" => Some(Init::Trotter(TrotterOrder::Second)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Approx,
    Spectral,
    Phase,
    Infidelity,
    StartGradient,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Approx => "approx",
            Metric::Spectral => "spectral",
            Metric::Phase => "phase",
            Metric::Infidelity => "infidelity",
            Metric::StartGradient => "start_gradient",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Metric::Approx, Metric::Spectral, Metric::Phase, Metric::Infidelity, Metric::StartGradient]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScanTarget {
    /// Defect of the short-time propagator of `slicing.scheme` at `τ = tJ / J`.
    Propagator,
    /// Metrics of a stored circuit over the time grid.
    Circuit(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSettings {
    pub enabled: bool,
    pub floor: f64,
    pub ceiling: f64,
    /// Fixed window in `tJ`; overrides floor and ceiling when both are set.
    pub window: Option<(f64, f64)>,
    pub inputs: Vec<PathBuf>,
    /// Empty fits every metric found.
    pub metrics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub name: String,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub j: f64,
    pub g: f64,
    pub h: f64,
    pub layers: Vec<usize>,
    pub layout: BrickLayout,
    pub init: Init,
    pub times: Option<TimeGrid>,
    pub slice_total: f64,
    pub slices: Vec<usize>,
    pub scheme: Scheme,
    pub chi_max: usize,
    pub optimizer: OptimizerChoice,
    pub metrics: Vec<Metric>,
    pub states: usize,
    pub trotter_orders: Vec<TrotterOrder>,
    pub trotter_reps: Vec<usize>,
    pub fit: FitSettings,
    pub grad_tau: f64,
    pub grad_inits: Vec<InitMode>,
    pub grad_samples: usize,
    pub noise_p: Vec<f64>,
    pub scan: ScanTarget,
    pub snapshots: bool,
    pub traces: bool,
    /// Every key with its resolved value, by section, in schema order.
    pub resolved: Vec<(String, Vec<(String, String)>)>,
}

impl ExperimentConfig {
    /// The resolved config as config text (parses back to the same settings).
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        for (section, keys) in &self.resolved {
            s += &format!("[{section}]\n");
            for (k, v) in keys {
                s += &format!("{k} = {v}\n");
            }
        }
        s
    }
}

/// A problem with one key of a config file. Line 0 means the key is absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.key.is_empty()) {
            (0, _) => write!(f, "{}: {}", self.key, self.message),
            (l, true) => write!(f, "line {l}: {}", self.message),
            (l, false) => write!(f, "line {l}: {}: {}", self.key, self.message),
        }
    }
}

/// Keys accepted in each section, in echo order.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "name", "seed"]),
    ("hamiltonian", &["n", "J", "g", "h"]),
    ("ansatz", &["layers", "layout", "init"]),
    ("time", &["start", "stop", "count", "spacing", "points"]),
    ("slicing", &["total", "slices", "scheme", "chi_max"]),
    (
        "optimizer",
        &[
            "method", "grad_tol", "max_iters", "eig_cutoff", "damping", "memory", "learning_rate", "beta1", "beta2", "eps",
            "value_tol", "target_error",
        ],
    ),
    ("metrics", &["names", "states"]),
    ("trotter", &["orders", "reps"]),
    ("fit", &["enabled", "floor", "ceiling", "t_i", "t_f", "input", "metric"]),
    ("gradstats", &["tau", "inits", "samples"]),
    ("noise", &["p"]),
    ("scan", &["target", "circuit"]),
    ("output", &["snapshots", "traces"]),
];

struct Entry {
    line: usize,
    value: String,
}

struct Reader {
    entries: BTreeMap<(String, String), Entry>,
    diags: Vec<Diagnostic>,
    resolved: BTreeMap<String, BTreeMap<String, String>>,
}

impl Reader {
    fn parse(text: &str) -> Self {
        let mut r = Reader { entries: BTreeMap::new(), diags: Vec::new(), resolved: BTreeMap::new() };
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = strip_comment(raw).trim();
            if l.is_empty() {
                continue;
            }
            if let Some(name) = l.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
                let name = name.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    r.diag(line, "", format!("unknown section [{name}]"));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((k, v)) = l.split_once('=') else {
                r.diag(line, "", format!("expected 'key = value' or '[section]', got '{l}'"));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(sec) = &section else {
                r.diag(line, k, "key outside any section".into());
                continue;
            };
            let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == sec) else {
                continue;
            };
            let full = format!("{sec}.{k}");
            if !keys.contains(&k) {
                r.diag(line, &full, "unknown key".into());
                continue;
            }
            if let Some(prev) = r.entries.get(&(sec.clone(), k.to_string())) {
                let msg = format!("duplicate key (first set on line {})", prev.line);
                r.diag(line, &full, msg);
                continue;
            }
            r.entries.insert((sec.clone(), k.to_string()), Entry { line, value: v.to_string() });
        }
        r
    }

    fn diag(&mut self, line: usize, key: &str, message: String) {
        self.diags.push(Diagnostic { line, key: key.to_string(), message });
    }

    fn raw(&self, sec: &str, key: &str) -> Option<(usize, String)> {
        self.entries.get(&(sec.to_string(), key.to_string())).map(|e| (e.line, e.value.clone()))
    }

    fn echo(&mut self, sec: &str, key: &str, value: String) {
        self.resolved.entry(sec.to_string()).or_default().insert(key.to_string(), value);
    }

    /// Reads a key with `parse`; a missing key takes `default`, a bad one is
    /// reported and also takes `default` so that checking can go on.
    fn get<T>(&mut self, sec: &str, key: &str, default: T, show: impl Fn(&T) -> String, parse: impl Fn(&str) -> Result<T, String>) -> T {
        let value = match self.raw(sec, key) {
            None => default,
            Some((line, v)) => match parse(&v) {
                Ok(x) => x,
                Err(msg) => {
                    self.diag(line, &format!("{sec}.{key}"), msg);
                    default
                }
            },
        };
        self.echo(sec, key, show(&value));
        value
    }

    fn f64(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        self.get(sec, key, default, |x| fmt_f64(*x), parse_f64)
    }

    fn usize(&mut self, sec: &str, key: &str, default: usize) -> usize {
        self.get(sec, key, default, |x| x.to_string(), parse_usize)
    }

    fn list<T: Clone>(&mut self, sec: &str, key: &str, default: Vec<T>, show: impl Fn(&T) -> String, parse: impl Fn(&str) -> Result<T, String>) -> Vec<T> {
        self.get(
            sec,
            key,
            default,
            |v| v.iter().map(&show).collect::<Vec<_>>().join(", "),
            |s| if s.is_empty() { Ok(Vec::new()) } else { s.split(',').map(|x| parse(x.trim())).collect() },
        )
    }

    fn bool(&mut self, sec: &str, key: &str, default: bool) -> bool {
        self.get(sec, key, default, |x| x.to_string(), |s| match s {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("expected true or false, got '{s}'")),
        })
    }

    fn line_of(&self, sec: &str, key: &str) -> usize {
        self.raw(sec, key).map_or(0, |(l, _)| l)
    }

    /// Reports a semantic problem against a key.
    fn check(&mut self, ok: bool, sec: &str, key: &str, message: impl Into<String>) {
        if !ok {
            let line = self.line_of(sec, key);
            self.diag(line, &format!("{sec}.{key}"), message.into());
        }
    }
}

fn strip_comment(l: &str) -> &str {
    match l.find('#') {
        Some(i) => &l[..i],
        None => l,
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got '{s}'")),
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    if s.starts_with('-') && s[1..].parse::<u64>().is_ok() {
        return Err(format!("must be a non-negative integer, got {s}"));
    }
    s.parse().map_err(|_| format!("expected a non-negative integer, got '{s}'"))
}

fn parse_with<T>(what: &'static str, f: impl Fn(&str) -> Option<T>) -> impl Fn(&str) -> Result<T, String> {
    move |s| f(s).ok_or_else(|| format!("unknown {what} '{s}'"))
}

fn order_name(o: &TrotterOrder) -> String {
    match o {
        TrotterOrder::First => "1",
        TrotterOrder::Second => "2",
        TrotterOrder::Fourth => "4",
        TrotterOrder::Suzuki => "suzuki",
    }
    .into()
}

fn init_mode_name(m: &InitMode) -> String {
    match m {
        InitMode::Random => "random",
        InitMode::Identity => "identity",
    }
    .into()
}

/// Settings that replace config values, applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
}

/// Parses and checks a config, collecting every problem found.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let mut r = Reader::parse(text);

    let kind = r.get("experiment", "kind", None, |k: &Option<Kind>| k.map_or("".into(), |k| k.name().into()), |s| {
        Kind::parse(s).map(Some).ok_or_else(|| {
            let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown kind '{s}', expected one of {}", names.join(", "))
        })
    });
    if kind.is_none() && r.raw("experiment", "kind").is_none() {
        r.diag(0, "experiment.kind", "required key is missing".into());
    }
    let kind = kind.unwrap_or(Kind::OptimizeExact);
    let name = r.get("experiment", "name", kind.name().to_string(), |s| s.clone(), |s| {
        if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            Ok(s.to_string())
        } else {
            Err(format!("name must be non-empty [A-Za-z0-9._-], got '{s}'"))
        }
    });
    let mut seed = r.get("experiment", "seed", 0u64, |x| x.to_string(), |s| s.parse().map_err(|_| format!("expected a non-negative integer, got '{s}'")));
    if let Some(s) = overrides.seed {
        seed = s;
        r.echo("experiment", "seed", s.to_string());
    }

    let sizes = r.list("hamiltonian", "n", vec![5], |x| x.to_string(), parse_usize);
    let j = r.f64("hamiltonian", "J", 2.0);
    let g = r.f64("hamiltonian", "g", 1.0);
    let h = r.f64("hamiltonian", "h", 1.0);
    r.check(!sizes.is_empty() && sizes.iter().all(|&n| n >= 2), "hamiltonian", "n", "every chain needs n >= 2");
    r.check(j != 0.0, "hamiltonian", "J", "J must be nonzero since times are given in units of tJ");

    let layers = r.list("ansatz", "layers", vec![2], |x| x.to_string(), parse_usize);
    r.check(layers.iter().all(|&l| l >= 1), "ansatz", "layers", "layer counts must be >= 1");
    let layout = r.get("ansatz", "layout", BrickLayout::Trailing, |l| l.name().into(), parse_with("layout", BrickLayout::parse));
    let init = r.get("ansatz", "init", Init::Identity, |i| i.name().into(), parse_with("init", Init::parse));

    let times = read_time_grid(&mut r, kind);

    let slice_total = r.f64("slicing", "total", 1.0);
    let slices = r.list("slicing", "slices", vec![40], |x| x.to_string(), parse_usize);
    let scheme = r.get("slicing", "scheme", Scheme::WI, |s| s.name().into(), parse_with("scheme", Scheme::parse));
    let chi_max = r.usize("slicing", "chi_max", 64);
    if kind == Kind::OptimizeSliced {
        r.check(slice_total > 0.0, "slicing", "total", "total time must be positive");
        r.check(!slices.is_empty() && slices.iter().all(|&s| s >= 1), "slicing", "slices", "slice counts must be >= 1");
        r.check(chi_max >= 1, "slicing", "chi_max", "bond cap must be >= 1");
    }

    let optimizer = read_optimizer(&mut r);

    let default_metrics = match kind {
        Kind::Infidelity => vec![Metric::Infidelity],
        _ => vec![Metric::Approx],
    };
    let metrics = r.list("metrics", "names", default_metrics, |m| m.name().into(), parse_with("metric", Metric::parse));
    let states = r.usize("metrics", "states", 100);
    r.check(states >= 1, "metrics", "states", "need at least one sampled state");
    if kind != Kind::OptimizeSliced && metrics.contains(&Metric::StartGradient) {
        let line = r.line_of("metrics", "names");
        r.diag(line, "metrics.names", "start_gradient is only recorded by optimize-sliced".into());
    }

    let trotter_orders = r.list("trotter", "orders", vec![TrotterOrder::Second], order_name, parse_with("Trotter order", TrotterOrder::parse));
    let trotter_reps = r.list("trotter", "reps", vec![1], |x| x.to_string(), parse_usize);
    r.check(trotter_reps.iter().all(|&x| x >= 1), "trotter", "reps", "repetitions must be >= 1");

    let fit = read_fit(&mut r, kind);

    let grad_tau = r.f64("gradstats", "tau", 0.01);
    let grad_inits = r.list("gradstats", "inits", vec![InitMode::Random, InitMode::Identity], init_mode_name, parse_with("init", InitMode::parse));
    let grad_samples = r.usize("gradstats", "samples", 50);
    if kind == Kind::GradStats {
        r.check(grad_tau >= 0.0, "gradstats", "tau", "time step must be >= 0");
        r.check(grad_samples >= 1, "gradstats", "samples", "need at least one sample");
    }

    let noise_p = r.list("noise", "p", vec![1e-3], |x| fmt_f64(*x), parse_f64);
    r.check(noise_p.iter().all(|p| (0.0..=1.0).contains(p)), "noise", "p", "error probabilities must lie in [0, 1]");

    let target = r.get("scan", "target", "propagator".to_string(), |s| s.clone(), |s| match s {
        "propagator" | "circuit" => Ok(s.to_string()),
        _ => Err(format!("unknown scan target '{s}', expected propagator or circuit")),
    });
    let circuit = r.get("scan", "circuit", None, |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string()), |s| Ok(Some(PathBuf::from(s))));
    let scan = match (target.as_str(), circuit) {
        ("circuit", Some(p)) => ScanTarget::Circuit(p),
        ("circuit", None) => {
            if kind == Kind::MetricScan {
                r.diag(r.line_of("scan", "target"), "scan.circuit", "a circuit scan needs a circuit file".into());
            }
            ScanTarget::Propagator
        }
        _ => ScanTarget::Propagator,
    };

    let snapshots = r.bool("output", "snapshots", false);
    let traces = r.bool("output", "traces", true);

    // Dense limits.
    let dense = match kind {
        Kind::OptimizeExact | Kind::TrotterScan | Kind::MetricScan | Kind::Infidelity => true,
        Kind::OptimizeSliced => scheme == Scheme::Exact || metrics.iter().any(|m| *m != Metric::StartGradient),
        Kind::GradStats => scheme == Scheme::Exact,
        Kind::Fit | Kind::NoiseFloor => false,
    };
    if let Some(&n) = sizes.iter().max() {
        r.check(
            !dense || n <= DENSE_MAX_QUBITS,
            "hamiltonian",
            "n",
            format!("n = {n} exceeds the dense limit n <= {DENSE_MAX_QUBITS} needed by {}", kind.name()),
        );
        if metrics.contains(&Metric::Spectral) && dense {
            r.check(n <= SPECTRAL_MAX_QUBITS, "hamiltonian", "n", format!("n = {n} exceeds the spectral-norm limit n <= {SPECTRAL_MAX_QUBITS}"));
        }
    }
    if kind == Kind::GradStats {
        r.check(sizes.len() >= 1, "hamiltonian", "n", "need at least one size");
    }

    let resolved = SCHEMA
        .iter()
        .map(|(sec, keys)| {
            let vals = r.resolved.get(*sec);
            let pairs = keys.iter().filter_map(|k| vals.and_then(|m| m.get(*k)).map(|v| (k.to_string(), v.clone()))).collect();
            (sec.to_string(), pairs)
        })
        .collect();

    if !r.diags.is_empty() {
        let mut d = r.diags;
        d.sort_by_key(|x| x.line);
        return Err(d);
    }
    Ok(ExperimentConfig {
        kind,
        name,
        seed,
        sizes,
        j,
        g,
        h,
        layers,
        layout,
        init,
        times,
        slice_total,
        slices,
        scheme,
        chi_max,
        optimizer,
        metrics,
        states,
        trotter_orders,
        trotter_reps,
        fit,
        grad_tau,
        grad_inits,
        grad_samples,
        noise_p,
        scan,
        snapshots,
        traces,
        resolved,
    })
}

fn read_time_grid(r: &mut Reader, kind: Kind) -> Option<TimeGrid> {
    let needed = kind.uses_time_grid();
    if let Some((line, _)) = r.raw("time", "points") {
        let pts = r.list("time", "points", Vec::new(), |x| fmt_f64(*x), parse_f64);
        for key in ["start", "stop", "count", "spacing"] {
            if r.raw("time", key).is_some() {
                let l = r.line_of("time", key);
                r.diag(l, &format!("time.{key}"), "give either time.points or a start/stop/count range".into());
            }
        }
        if needed && pts.is_empty() {
            r.diag(line, "time.points", "empty time grid".into());
        }
        if pts.iter().any(|&t| t <= 0.0) {
            r.diag(line, "time.points", "times must be positive".into());
        }
        return Some(TimeGrid::Points(pts));
    }
    let present = ["start", "stop", "count"].iter().any(|k| r.raw("time", k).is_some());
    if !present {
        if needed {
            r.diag(0, "time", "empty time grid: set time.start, time.stop and time.count, or time.points".into());
        }
        return None;
    }
    let start = r.f64("time", "start", 0.0);
    let stop = r.f64("time", "stop", start);
    let count = r.usize("time", "count", 0);
    let spacing = r.get("time", "spacing", Spacing::Log, |s| if *s == Spacing::Log { "log".into() } else { "linear".into() }, |s| match s {
        "linear" => Ok(Spacing::Linear),
        "log" => Ok(Spacing::Log),
        _ => Err(format!("expected linear or log, got '{s}'")),
    });
    if needed {
        r.check(count >= 1, "time", "count", "empty time grid");
    }
    r.check(start > 0.0, "time", "start", "times must be positive");
    r.check(stop >= start, "time", "stop", "stop must be >= start");
    Some(TimeGrid::Range { start, stop, count, spacing })
}

fn read_optimizer(r: &mut Reader) -> OptimizerChoice {
    let method = r.get("optimizer", "method", "newton".to_string(), |s| s.clone(), |s| match s {
        "newton" | "newton-layer" | "newton-gate" | "bfgs" | "lbfgs" | "adam" | "coordinatewise" => Ok(s.to_string()),
        _ => Err(format!("unknown method '{s}', expected newton, newton-layer, newton-gate, bfgs, lbfgs, adam or coordinatewise")),
    });
    let target_error = r.get("optimizer", "target_error", None, |x: &Option<f64>| x.map_or("none".into(), fmt_f64), |s| {
        if s == "none" {
            Ok(None)
        } else {
            parse_f64(s).map(Some)
        }
    });
    let target_value = target_error.map(|e| 1.0 - e * e);
    let opt = match method.as_str() {
        m if m.starts_with("newton") => {
            let d = NewtonConfig::default();
            let batch = match m {
                "newton-layer" => Batch::Layer,
                "newton-gate" => Batch::Gate,
                _ => Batch::Global,
            };
            let damping = r.get("optimizer", "damping", None, |x: &Option<f64>| x.map_or("none".into(), fmt_f64), |s| {
                if s == "none" {
                    Ok(None)
                } else {
                    parse_f64(s).map(Some)
                }
            });
            OptimizerChoice::Newton(NewtonConfig {
                eig_cutoff: r.f64("optimizer", "eig_cutoff", d.eig_cutoff),
                grad_tol: r.f64("optimizer", "grad_tol", d.grad_tol),
                max_iters: r.usize("optimizer", "max_iters", d.max_iters),
                batch,
                target_value,
                damping,
            })
        }
        "bfgs" | "lbfgs" => {
            let d = QuasiNewtonConfig::default();
            let cfg = QuasiNewtonConfig {
                grad_tol: r.f64("optimizer", "grad_tol", d.grad_tol),
                max_iters: r.usize("optimizer", "max_iters", d.max_iters),
                memory: r.usize("optimizer", "memory", d.memory),
                ..d
            };
            if method == "bfgs" {
                OptimizerChoice::Bfgs(cfg)
            } else {
                OptimizerChoice::Lbfgs(cfg)
            }
        }
        "adam" => {
            let d = AdamConfig::default();
            OptimizerChoice::Adam(AdamConfig {
                learning_rate: r.f64("optimizer", "learning_rate", d.learning_rate),
                beta1: r.f64("optimizer", "beta1", d.beta1),
                beta2: r.f64("optimizer", "beta2", d.beta2),
                eps: r.f64("optimizer", "eps", d.eps),
                max_iters: r.usize("optimizer", "max_iters", d.max_iters),
                grad_tol: r.f64("optimizer", "grad_tol", d.grad_tol),
                target_value,
            })
        }
        _ => {
            let d = CoordinatewiseConfig::default();
            OptimizerChoice::Coordinatewise(CoordinatewiseConfig {
                max_sweeps: r.usize("optimizer", "max_iters", d.max_sweeps),
                grad_tol: r.f64("optimizer", "grad_tol", d.grad_tol),
                value_tol: r.f64("optimizer", "value_tol", d.value_tol),
            })
        }
    };
    // Keys that the chosen method ignores are still reported if present.
    let used: &[&str] = match &opt {
        OptimizerChoice::Newton(_) => &["eig_cutoff", "grad_tol", "max_iters", "damping"],
        OptimizerChoice::Bfgs(_) | OptimizerChoice::Lbfgs(_) => &["grad_tol", "max_iters", "memory"],
        OptimizerChoice::Adam(_) => &["learning_rate", "beta1", "beta2", "eps", "max_iters", "grad_tol"],
        OptimizerChoice::Coordinatewise(_) => &["max_iters", "grad_tol", "value_tol"],
    };
    for key in ["grad_tol", "max_iters", "eig_cutoff", "damping", "memory", "learning_rate", "beta1", "beta2", "eps", "value_tol"] {
        if !used.contains(&key) && r.raw("optimizer", key).is_some() {
            let line = r.line_of("optimizer", key);
            r.diag(line, &format!("optimizer.{key}"), format!("not used by method {method}"));
        }
    }
    if matches!(opt, OptimizerChoice::Coordinatewise(_)) && target_error.is_some() {
        r.check(false, "optimizer", "target_error", "not used by method coordinatewise");
    }
    if matches!(opt, OptimizerChoice::Bfgs(_) | OptimizerChoice::Lbfgs(_)) && target_error.is_some() {
        r.check(false, "optimizer", "target_error", format!("not used by method {method}"));
    }
    let positive = |x: f64| x > 0.0;
    match &opt {
        OptimizerChoice::Newton(c) => {
            r.check(c.eig_cutoff >= 0.0, "optimizer", "eig_cutoff", "must be >= 0");
            r.check(c.grad_tol >= 0.0, "optimizer", "grad_tol", "must be >= 0");
            r.check(c.damping.is_none_or(positive), "optimizer", "damping", "must be > 0");
        }
        OptimizerChoice::Bfgs(c) | OptimizerChoice::Lbfgs(c) => {
            r.check(c.grad_tol >= 0.0, "optimizer", "grad_tol", "must be >= 0");
            r.check(c.memory >= 1, "optimizer", "memory", "must be >= 1");
        }
        OptimizerChoice::Adam(c) => {
            r.check(positive(c.learning_rate), "optimizer", "learning_rate", "must be > 0");
            r.check((0.0..1.0).contains(&c.beta1), "optimizer", "beta1", "must lie in [0, 1)");
            r.check((0.0..1.0).contains(&c.beta2), "optimizer", "beta2", "must lie in [0, 1)");
            r.check(positive(c.eps), "optimizer", "eps", "must be > 0");
        }
        OptimizerChoice::Coordinatewise(c) => {
            r.check(c.grad_tol >= 0.0, "optimizer", "grad_tol", "must be >= 0");
        }
    }
    r.check(target_error.is_none_or(|e| (0.0..=std::f64::consts::SQRT_2).contains(&e)), "optimizer", "target_error", "must lie in [0, √2]");
    opt
}

fn read_fit(r: &mut Reader, kind: Kind) -> FitSettings {
    let enabled = r.bool("fit", "enabled", matches!(kind, Kind::OptimizeExact | Kind::TrotterScan | Kind::MetricScan | Kind::Fit));
    let floor = r.f64("fit", "floor", DEFAULT_FIT_FLOOR);
    let ceiling = r.f64("fit", "ceiling", DEFAULT_FIT_CEILING);
    r.check(floor > 0.0, "fit", "floor", "must be > 0");
    r.check(ceiling > floor, "fit", "ceiling", "must exceed fit.floor");
    let opt_f64 = |x: &Option<f64>| x.map_or("auto".into(), fmt_f64);
    let parse_opt = |s: &str| if s == "auto" { Ok(None) } else { parse_f64(s).map(Some) };
    let t_i = r.get("fit", "t_i", None, opt_f64, parse_opt);
    let t_f = r.get("fit", "t_f", None, opt_f64, parse_opt);
    let window = match (t_i, t_f) {
        (Some(a), Some(b)) => {
            r.check(b > a, "fit", "t_f", "must exceed fit.t_i");
            Some((a, b))
        }
        (None, None) => None,
        _ => {
            let key = if t_i.is_some() { "t_f" } else { "t_i" };
            r.check(false, "fit", key, "fit.t_i and fit.t_f must be set together");
            None
        }
    };
    let inputs = r.list("fit", "input", Vec::new(), |p: &PathBuf| p.display().to_string(), |s| Ok(PathBuf::from(s)));
    if kind == Kind::Fit && inputs.is_empty() {
        r.diag(r.line_of("fit", "input"), "fit.input", "a fit experiment needs at least one input CSV".into());
    }
    let metrics = r.list("fit", "metric", Vec::new(), |s: &String| s.clone(), |s| Ok(s.to_string()));
    FitSettings { enabled, floor, ceiling, window, inputs, metrics }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig, Vec<Diagnostic>> {
        parse_config(s, &Overrides::default())
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse("[experiment]\nkind = optimize-sliced\n").unwrap();
        assert_eq!(c.sizes, vec![5]);
        assert_eq!((c.j, c.g, c.h), (2.0, 1.0, 1.0));
        assert_eq!(c.slices, vec![40]);
        let OptimizerChoice::Newton(n) = &c.optimizer else { panic!() };
        assert_eq!((n.eig_cutoff, n.grad_tol), (1e-5, 1e-5));
        assert!(c.resolved_text().contains("eig_cutoff = 0.00001\n") || c.resolved_text().contains("eig_cutoff = 1e-5\n"));
    }

    #[test]
    fn resolved_text_round_trips() {
        let src = "[experiment]\nkind = trotter-scan\nseed = 3\n[time]\nstart = 0.02\nstop = 0.3\ncount = 20\n[trotter]\norders = 1, 2, 4\n";
        let a = parse(src).unwrap();
        let b = parse(&a.resolved_text()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.resolved_text(), b.resolved_text());
    }

    #[test]
    fn log_grid_hits_both_ends() {
        let g = TimeGrid::Range { start: 0.02, stop: 0.3, count: 20, spacing: Spacing::Log };
        let p = g.points();
        assert_eq!(p.len(), 20);
        assert!((p[0] - 0.02).abs() < 1e-15 && (p[19] - 0.3).abs() < 1e-15);
        let lin = TimeGrid::Range { start: 0.1, stop: 1.0, count: 10, spacing: Spacing::Linear }.points();
        assert!((lin[3] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn every_problem_is_reported_with_its_line() {
        let src = "[experiment]\nkind = optimize-sliced\nbogus = 1\n[slicing]\nslices = -5\n[optimizer]\nmethod = newton\nmemory = 3\n";
        let d = parse(src).unwrap_err();
        let text: Vec<String> = d.iter().map(|x| x.to_string()).collect();
        assert!(text.iter().any(|s| s == "line 3: experiment.bogus: unknown key"), "{text:?}");
        assert!(text.iter().any(|s| s.starts_with("line 5: slicing.slices:") && s.contains("-5")), "{text:?}");
        assert!(text.iter().any(|s| s.starts_with("line 8: optimizer.memory")), "{text:?}");
    }

    #[test]
    fn empty_grid_and_dense_limit() {
        let d = parse("[experiment]\nkind = trotter-scan\n").unwrap_err();
        assert!(d[0].message.contains("empty time grid"));
        let d = parse("[experiment]\nkind = metric-scan\n[hamiltonian]\nn = 20\n[time]\npoints = 0.1\n").unwrap_err();
        assert!(d.iter().any(|x| x.key == "hamiltonian.n" && x.message.contains("n <= 14") && x.line == 4), "{d:?}");
        let d = parse("[experiment]\nkind = optimize-exact\n[time]\nstart = 0.1\nstop = 1\ncount = 0\n").unwrap_err();
        assert!(d.iter().any(|x| x.key == "time.count" && x.message == "empty time grid"));
    }

    #[test]
    fn seed_override_is_echoed() {
        let c = parse_config("[experiment]\nkind = noise-floor\nseed = 1\n", &Overrides { seed: Some(9) }).unwrap();
        assert_eq!(c.seed, 9);
        assert!(c.resolved_text().contains("seed = 9\n"));
    }

    #[test]
    fn syntax_errors() {
        let d = parse("kind = fit\n[experiment]\nthis line is junk\n[nowhere]\nx = 1\n").unwrap_err();
        let lines: Vec<usize> = d.iter().map(|x| x.line).collect();
        assert!(lines.contains(&1) && lines.contains(&3) && lines.contains(&4), "{d:?}");
    }
}
