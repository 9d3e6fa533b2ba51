//! Experiment driver behind the command line: runs a parsed config and
//! writes its curves, fits, traces and circuit snapshots.
//!
//! Independent jobs (one per chain size, depth, slice count or Trotter
//! order) may run on several threads. Each job streams its rows to its own
//! part file, flushed after every point; the parts are concatenated in job
//! order once all jobs succeed, so the output does not depend on the thread
//! count. After a failure the part files are left in place.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{parse_config, Diagnostic, ExperimentConfig, Init, Kind, Metric, Overrides, ScanTarget, TimeGrid};
pub use output::{read_csv, CsvSink, Header, Row, CSV_COLUMNS};

use crate::analysis::{gradient_stats, log_linear_fit, powerlaw_fit, random_theta, default_window, FitResult, InitMode};
use crate::circuits::ParamCircuit;
use crate::metrics::{
    average_infidelity, circuit_approximation_error, circuit_spectral_distance, ground_state_exact, noise_floor, phase_error, ExactEvolution,
    GroundStateResult, NoiseModel,
};
use crate::mpo::HamiltonianSpec;
use crate::optimizers::sequential::{exact_sequence, sequential_optimize, SliceSchedule};
use crate::optimizers::OptRun;
use crate::propagators::propagator_defect;
use crate::trotter::{embed_trotter, trotter_circuit, TrotterOrder, TrotterSpec};

/// Why a run stopped. [`RunError::exit_code`] maps it to the process status.
#[derive(Debug)]
pub enum RunError {
    Config(Vec<Diagnostic>),
    Numeric(String),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) | RunError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(d) => {
                let lines: Vec<String> = d.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", lines.join("\n"))
            }
            RunError::Numeric(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<crate::Error> for RunError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Io(e) => RunError::Io(e),
            other => RunError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Relative input paths in the config are resolved against this.
    pub base_dir: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("."), threads: 1, base_dir: PathBuf::from(".") }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    /// All CSV rows, in file order.
    pub rows: Vec<Row>,
}

/// Reads and checks a config file. An unreadable file is a config error.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(vec![Diagnostic { line: 0, key: path.display().to_string(), message: format!("cannot read: {e}") }]))?;
    parse_config(&text, overrides).map_err(RunError::Config)
}

pub fn header_for(cfg: &ExperimentConfig) -> Header {
    Header { version: env!("CARGO_PKG_VERSION").into(), kind: cfg.kind.name().into(), seed: cfg.seed, config: cfg.resolved_text() }
}

/// A config listing every key with its default value, for `info`.
pub fn default_config_text() -> String {
    let cfg = parse_config("[experiment]\nkind = optimize-exact\n[time]\nstart = 0.02\nstop = 0.3\ncount = 20\n", &Overrides::default())
        .expect("defaults are valid");
    cfg.resolved_text()
}

/// `f(0), ..., f(len-1)` on up to `threads` scoped threads, in index order.
pub fn par_map<T: Send>(threads: usize, len: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = threads.clamp(1, len.max(1));
    if threads == 1 {
        return (0..len).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..len).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= len {
                    break;
                }
                let v = f(i);
                slots.lock().unwrap()[i] = Some(v);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|x| x.expect("every index ran")).collect()
}

/// One optimizer run in the trace document.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub n: usize,
    pub layers: usize,
    pub slices: Option<usize>,
    pub point: usize,
    pub t: f64,
    pub converged: bool,
    pub fallback_steps: usize,
    pub skipped_coordinates: usize,
    /// `[iteration, F, |∇F|]`.
    pub iterates: Vec<(usize, f64, f64)>,
}

impl TraceRecord {
    fn new(n: usize, layers: usize, slices: Option<usize>, point: usize, t: f64, run: &OptRun) -> Self {
        Self {
            n,
            layers,
            slices,
            point,
            t,
            converged: run.converged,
            fallback_steps: run.fallback_steps,
            skipped_coordinates: run.skipped_coordinates,
            iterates: run.iterates.iter().map(|r| (r.iteration, r.value, r.grad_norm)).collect(),
        }
    }
}

#[derive(Serialize)]
struct Traces<'a> {
    optimizer: String,
    runs: &'a [TraceRecord],
}

#[derive(Clone, Debug, Serialize)]
pub struct FitRecord {
    pub metric: String,
    pub n: usize,
    pub layers: Option<usize>,
    pub slices: Option<usize>,
    pub scheme: String,
    pub optimizer: String,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct Fits<'a> {
    fits: &'a [FitRecord],
}

/// Circuit metrics at one time, backed by the dense exact evolution.
struct Evaluator {
    ev: Option<ExactEvolution>,
    gs: Option<GroundStateResult>,
    metrics: Vec<Metric>,
    states: usize,
    seed: u64,
}

impl Evaluator {
    fn new(spec: &HamiltonianSpec, cfg: &ExperimentConfig) -> crate::Result<Self> {
        let needs = |m: Metric| cfg.metrics.contains(&m);
        let ev = if needs(Metric::Approx) || needs(Metric::Spectral) || needs(Metric::Infidelity) { Some(ExactEvolution::new(spec)?) } else { None };
        let gs = if needs(Metric::Phase) { Some(ground_state_exact(spec)?) } else { None };
        Ok(Self { ev, gs, metrics: cfg.metrics.clone(), states: cfg.states, seed: cfg.seed })
    }

    fn eval(&self, c: &ParamCircuit, t: f64) -> crate::Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        for &m in &self.metrics {
            match m {
                Metric::Approx => out.push((m.name().into(), circuit_approximation_error(c, self.ev.as_ref().unwrap(), t)?)),
                Metric::Spectral => out.push((m.name().into(), circuit_spectral_distance(c, self.ev.as_ref().unwrap(), t)?)),
                Metric::Phase => out.push((m.name().into(), phase_error(c, self.gs.as_ref().unwrap(), t)?)),
                Metric::Infidelity => {
                    let est = average_infidelity(c, self.ev.as_ref().unwrap(), t, self.states, self.seed)?;
                    out.push(("infidelity".into(), est.mean));
                    out.push(("infidelity_se".into(), est.std_error));
                }
                Metric::StartGradient => {}
            }
        }
        Ok(out)
    }
}

/// Per-job output: rows go to a part file as they are produced.
struct JobLog {
    sink: CsvSink,
    rows: Vec<Row>,
    traces: Vec<TraceRecord>,
}

impl JobLog {
    fn emit(&mut self, rows: Vec<Row>) -> crate::Result<()> {
        self.sink.write(&rows)?;
        self.rows.extend(rows);
        Ok(())
    }
}

/// Column values shared by the rows of one series.
#[derive(Clone)]
struct Series {
    n: usize,
    layers: Option<usize>,
    slices: Option<usize>,
    scheme: String,
    optimizer: String,
}

impl Series {
    fn row(&self, t: Option<f64>, j: f64, metric: impl Into<String>, value: f64) -> Row {
        Row {
            t,
            tj: t.map(|t| t * j),
            metric: metric.into(),
            value,
            n: self.n,
            layers: self.layers,
            slices: self.slices,
            scheme: self.scheme.clone(),
            optimizer: self.optimizer.clone(),
        }
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    header: Header,
}

impl Ctx<'_> {
    fn spec(&self, n: usize) -> crate::Result<HamiltonianSpec> {
        HamiltonianSpec::new(n, self.cfg.j, self.cfg.g, self.cfg.h)
    }

    fn raw_times(&self) -> Vec<f64> {
        self.cfg.times.as_ref().map_or(Vec::new(), |g| g.points()).iter().map(|tj| tj / self.cfg.j).collect()
    }

    fn snapshot(&self, label: &str, c: &ParamCircuit) -> crate::Result<()> {
        if !self.cfg.snapshots {
            return Ok(());
        }
        let dir = self.opts.out_dir.join(format!("{}.snapshots", self.cfg.name));
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{label}.circuit")), self.header.comment_block() + &c.to_text())?;
        Ok(())
    }

    fn initial_theta(&self, ansatz: &ParamCircuit, spec: &HamiltonianSpec, t: f64, job: usize) -> crate::Result<Vec<f64>> {
        match self.cfg.init {
            Init::Identity => Ok(vec![0.0; ansatz.num_params()]),
            Init::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(job as u64));
                Ok(random_theta(ansatz.num_params(), &mut rng))
            }
            Init::Trotter(order) => embed_trotter(ansatz, order, spec, t),
        }
    }

    /// Runs the jobs, merges their part files and returns the concatenated log.
    fn run_jobs<J: Sync>(&self, jobs: &[J], work: impl Fn(usize, &J, &mut JobLog) -> crate::Result<()> + Sync) -> Result<(Vec<Row>, Vec<TraceRecord>), RunError> {
        let part = |k: usize| self.opts.out_dir.join(format!("{}.part{k}.csv", self.cfg.name));
        let results = par_map(self.opts.threads, jobs.len(), |k| -> crate::Result<JobLog> {
            let mut log = JobLog { sink: CsvSink::create(&part(k), &self.header)?, rows: Vec::new(), traces: Vec::new() };
            work(k, &jobs[k], &mut log)?;
            Ok(log)
        });
        let mut rows = Vec::new();
        let mut traces = Vec::new();
        for r in results {
            let log = r?;
            rows.extend(log.rows);
            traces.extend(log.traces);
        }
        for k in 0..jobs.len() {
            std::fs::remove_file(part(k))?;
        }
        Ok((rows, traces))
    }
}

/// Runs an experiment, writing `<name>.csv` and its companions into `opts.out_dir`.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput, RunError> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let ctx = Ctx { cfg, opts, header: header_for(cfg) };
    let (mut rows, traces) = match cfg.kind {
        Kind::OptimizeExact => optimize_exact(&ctx)?,
        Kind::OptimizeSliced => optimize_sliced(&ctx)?,
        Kind::TrotterScan => trotter_scan(&ctx)?,
        Kind::MetricScan => metric_scan(&ctx)?,
        Kind::GradStats => gradstats(&ctx)?,
        Kind::Infidelity => infidelity(&ctx)?,
        Kind::NoiseFloor => (noise_floor_rows(cfg)?, Vec::new()),
        Kind::Fit => {
            let mut input = Vec::new();
            for p in &cfg.fit.inputs {
                input.extend(read_csv(&opts.base_dir.join(p))?);
            }
            (input, Vec::new())
        }
    };
    let mut files = Vec::new();
    if cfg.fit.enabled {
        let fit_metrics: Vec<String> = if !cfg.fit.metrics.is_empty() {
            cfg.fit.metrics.clone()
        } else if cfg.kind == Kind::MetricScan && cfg.scan == ScanTarget::Propagator {
            vec!["defect".into()]
        } else if cfg.kind == Kind::Fit {
            Vec::new()
        } else {
            cfg.metrics.iter().filter(|m| **m != Metric::StartGradient).map(|m| m.name().to_string()).collect()
        };
        let fits = fit_series(&rows, &fit_metrics, &cfg.fit);
        let fit_rows = fit_rows(&fits);
        if cfg.kind == Kind::Fit {
            rows = fit_rows;
        } else {
            rows.extend(fit_rows);
        }
        let path = opts.out_dir.join(format!("{}.fit.json", cfg.name));
        output::write_json(&path, &ctx.header, &Fits { fits: &fits })?;
        files.push(path);
    }
    let csv = opts.out_dir.join(format!("{}.csv", cfg.name));
    let mut sink = CsvSink::create(&csv, &ctx.header)?;
    sink.write(&rows)?;
    files.insert(0, csv);
    if cfg.traces && !traces.is_empty() {
        let path = opts.out_dir.join(format!("{}.trace.json", cfg.name));
        output::write_json(&path, &ctx.header, &Traces { optimizer: cfg.optimizer.name(), runs: &traces })?;
        files.push(path);
    }
    Ok(RunOutput { files, rows })
}

type Outcome = Result<(Vec<Row>, Vec<TraceRecord>), RunError>;

fn grid(cfg: &ExperimentConfig, with_slices: bool) -> Vec<(usize, usize, Option<usize>)> {
    let mut jobs = Vec::new();
    for &n in &cfg.sizes {
        for &l in &cfg.layers {
            if with_slices {
                jobs.extend(cfg.slices.iter().map(|&s| (n, l, Some(s))));
            } else {
                jobs.push((n, l, None));
            }
        }
    }
    jobs
}

fn optimize_exact(ctx: &Ctx) -> Outcome {
    let cfg = ctx.cfg;
    let times = ctx.raw_times();
    ctx.run_jobs(&grid(cfg, false), |k, &(n, layers, _), log| {
        let spec = ctx.spec(n)?;
        let ansatz = ParamCircuit::brickwall_with(n, layers, cfg.layout)?;
        let eval = Evaluator::new(&spec, cfg)?;
        let series = Series { n, layers: Some(layers), slices: None, scheme: "exact".into(), optimizer: cfg.optimizer.name() };
        let theta0 = ctx.initial_theta(&ansatz, &spec, times[0], k)?;
        let mut point = 0;
        exact_sequence(&spec, &ansatz, &theta0, &times, &cfg.optimizer, &mut |p| {
            let c = ansatz.with_theta(&p.theta)?;
            let rows = eval.eval(&c, p.t)?.into_iter().map(|(m, v)| series.row(Some(p.t), cfg.j, m, v)).collect();
            log.emit(rows)?;
            log.traces.push(TraceRecord::new(n, layers, None, point, p.t, &p.run));
            ctx.snapshot(&format!("n{n}_L{layers}_{point:04}"), &c)?;
            point += 1;
            Ok(())
        })?;
        Ok(())
    })
}

fn optimize_sliced(ctx: &Ctx) -> Outcome {
    let cfg = ctx.cfg;
    ctx.run_jobs(&grid(cfg, true), |k, &(n, layers, slices), log| {
        let slices = slices.unwrap();
        let spec = ctx.spec(n)?;
        let ansatz = ParamCircuit::brickwall_with(n, layers, cfg.layout)?;
        let eval = Evaluator::new(&spec, cfg)?;
        let schedule = SliceSchedule { total_time: cfg.slice_total / cfg.j, slices, scheme: cfg.scheme, chi_max: cfg.chi_max };
        let series = Series { n, layers: Some(layers), slices: Some(slices), scheme: cfg.scheme.name().into(), optimizer: cfg.optimizer.name() };
        let theta0 = ctx.initial_theta(&ansatz, &spec, schedule.tau(), k)?;
        sequential_optimize(&spec, &ansatz, &theta0, &schedule, &cfg.optimizer, &mut |o| {
            let c = ansatz.with_theta(&o.theta)?;
            let mut rows: Vec<Row> = eval.eval(&c, o.t)?.into_iter().map(|(m, v)| series.row(Some(o.t), cfg.j, m, v)).collect();
            if cfg.metrics.contains(&Metric::StartGradient) {
                rows.push(series.row(Some(o.t), cfg.j, "start_grad_mean", o.start_gradient.mean));
                rows.push(series.row(Some(o.t), cfg.j, "start_grad_median", o.start_gradient.median));
            }
            log.emit(rows)?;
            log.traces.push(TraceRecord::new(n, layers, Some(slices), o.slice, o.t, &o.run));
            ctx.snapshot(&format!("n{n}_L{layers}_S{slices}_{:04}", o.slice), &c)?;
            Ok(())
        })?;
        Ok(())
    })
}

fn trotter_jobs(cfg: &ExperimentConfig) -> Vec<(usize, TrotterOrder, usize)> {
    let mut jobs = Vec::new();
    for &n in &cfg.sizes {
        for &o in &cfg.trotter_orders {
            jobs.extend(cfg.trotter_reps.iter().map(|&r| (n, o, r)));
        }
    }
    jobs
}

/// Metric rows of Trotter circuits over the time grid.
fn trotter_rows(ctx: &Ctx, eval: &Evaluator, spec: &HamiltonianSpec, order: TrotterOrder, reps: usize, log: &mut JobLog) -> crate::Result<()> {
    let series = Series { n: spec.n, layers: Some(order.layers() * reps), slices: None, scheme: order.name().into(), optimizer: String::new() };
    for t in ctx.raw_times() {
        let c = trotter_circuit(&TrotterSpec { order, reps, spec: *spec, t })?;
        let rows = eval.eval(&c, t)?.into_iter().map(|(m, v)| series.row(Some(t), ctx.cfg.j, m, v)).collect();
        log.emit(rows)?;
    }
    Ok(())
}

fn trotter_scan(ctx: &Ctx) -> Outcome {
    ctx.run_jobs(&trotter_jobs(ctx.cfg), |_, &(n, order, reps), log| {
        let spec = ctx.spec(n)?;
        let eval = Evaluator::new(&spec, ctx.cfg)?;
        trotter_rows(ctx, &eval, &spec, order, reps, log)
    })
}

fn metric_scan(ctx: &Ctx) -> Outcome {
    let cfg = ctx.cfg;
    match &cfg.scan {
        ScanTarget::Propagator => ctx.run_jobs(&cfg.sizes, |_, &n, log| {
            let spec = ctx.spec(n)?;
            let series = Series { n, layers: None, slices: None, scheme: cfg.scheme.name().into(), optimizer: String::new() };
            for tau in ctx.raw_times() {
                log.emit(vec![series.row(Some(tau), cfg.j, "defect", propagator_defect(&spec, cfg.scheme, tau)?)])?;
            }
            Ok(())
        }),
        ScanTarget::Circuit(path) => {
            let text = std::fs::read_to_string(ctx.opts.base_dir.join(path))?;
            let c = ParamCircuit::from_text(&text)?;
            ctx.run_jobs(&[c], |_, c, log| {
                let spec = ctx.spec(c.n())?;
                let eval = Evaluator::new(&spec, cfg)?;
                let series = Series { n: c.n(), layers: Some(c.num_layers()), slices: None, scheme: "circuit".into(), optimizer: String::new() };
                for t in ctx.raw_times() {
                    let rows = eval.eval(c, t)?.into_iter().map(|(m, v)| series.row(Some(t), cfg.j, m, v)).collect();
                    log.emit(rows)?;
                }
                Ok(())
            })
        }
    }
}

fn init_mode_name(m: InitMode) -> &'static str {
    match m {
        InitMode::Random => "random",
        InitMode::Identity => "identity",
    }
}

/// Gradient statistics per size, then per `(L, init)` a log-linear fit of
/// the mean and median against `n`. Fit rows carry `n = 0`.
fn gradstats(ctx: &Ctx) -> Outcome {
    let cfg = ctx.cfg;
    let mut jobs = Vec::new();
    for &l in &cfg.layers {
        for &init in &cfg.grad_inits {
            jobs.extend(cfg.sizes.iter().map(|&n| (n, l, init)));
        }
    }
    let (mut rows, traces) = ctx.run_jobs(&jobs, |_, &(n, layers, init), log| {
        let spec = ctx.spec(n)?;
        let gs = gradient_stats(&spec, layers, cfg.grad_tau, cfg.scheme, init, cfg.grad_samples, cfg.seed)?;
        let series = Series { n, layers: Some(layers), slices: None, scheme: cfg.scheme.name().into(), optimizer: String::new() };
        let name = init_mode_name(init);
        log.emit(vec![
            series.row(Some(cfg.grad_tau), cfg.j, format!("grad_mean_abs:{name}"), gs.mean_abs),
            series.row(Some(cfg.grad_tau), cfg.j, format!("grad_median_abs:{name}"), gs.median_abs),
        ])
    })?;
    let mut fits = Vec::new();
    for &l in &cfg.layers {
        for &init in &cfg.grad_inits {
            for stat in ["grad_mean_abs", "grad_median_abs"] {
                let metric = format!("{stat}:{}", init_mode_name(init));
                let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.layers == Some(l) && r.metric == metric).map(|r| (r.n as f64, r.value)).collect();
                if pts.len() < 3 || pts.iter().any(|p| p.1 <= 0.0) {
                    continue;
                }
                let fit = log_linear_fit(&pts)?;
                let series = Series { n: 0, layers: Some(l), slices: None, scheme: cfg.scheme.name().into(), optimizer: String::new() };
                fits.push(series.row(Some(cfg.grad_tau), cfg.j, format!("decay_slope:{metric}"), fit.slope));
                fits.push(series.row(Some(cfg.grad_tau), cfg.j, format!("decay_slope_se:{metric}"), fit.slope_se));
                fits.push(series.row(Some(cfg.grad_tau), cfg.j, format!("decay_r2:{metric}"), fit.r_squared));
            }
        }
    }
    rows.extend(fits);
    Ok((rows, traces))
}

fn floor_rows(cfg: &ExperimentConfig, series: &Series, gates: usize) -> crate::Result<Vec<Row>> {
    cfg.noise_p
        .iter()
        .map(|&p| Ok(series.row(None, cfg.j, format!("noise_floor:p={}", config::fmt_f64(p)), noise_floor(&NoiseModel { p, gates })?)))
        .collect()
}

/// Optimized circuits over the time grid and the configured Trotter
/// circuits, with sampled infidelities and the noise floor of each family.
fn infidelity(ctx: &Ctx) -> Outcome {
    let cfg = ctx.cfg;
    let mut jobs: Vec<(usize, usize, Option<(TrotterOrder, usize)>)> = grid(cfg, false).into_iter().map(|(n, l, _)| (n, l, None)).collect();
    jobs.extend(trotter_jobs(cfg).into_iter().map(|(n, o, r)| (n, 0, Some((o, r)))));
    let times = ctx.raw_times();
    ctx.run_jobs(&jobs, |k, &(n, layers, trotter), log| {
        let spec = ctx.spec(n)?;
        let eval = Evaluator::new(&spec, cfg)?;
        if let Some((order, reps)) = trotter {
            trotter_rows(ctx, &eval, &spec, order, reps, log)?;
            let c = trotter_circuit(&TrotterSpec { order, reps, spec, t: 0.0 })?;
            let series = Series { n, layers: Some(order.layers() * reps), slices: None, scheme: order.name().into(), optimizer: String::new() };
            return log.emit(floor_rows(cfg, &series, c.two_qubit_count())?);
        }
        let ansatz = ParamCircuit::brickwall_with(n, layers, cfg.layout)?;
        let series = Series { n, layers: Some(layers), slices: None, scheme: "exact".into(), optimizer: cfg.optimizer.name() };
        let theta0 = ctx.initial_theta(&ansatz, &spec, times[0], k)?;
        let mut point = 0;
        exact_sequence(&spec, &ansatz, &theta0, &times, &cfg.optimizer, &mut |p| {
            let c = ansatz.with_theta(&p.theta)?;
            let rows = eval.eval(&c, p.t)?.into_iter().map(|(m, v)| series.row(Some(p.t), cfg.j, m, v)).collect();
            log.emit(rows)?;
            log.traces.push(TraceRecord::new(n, layers, None, point, p.t, &p.run));
            point += 1;
            Ok(())
        })?;
        log.emit(floor_rows(cfg, &series, ansatz.two_qubit_count())?)
    })
}

/// `1 - (1-p)^K` for brickwalls with `K = (n-1) L` two-qubit gates.
fn noise_floor_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>, RunError> {
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        for &l in &cfg.layers {
            let series = Series { n, layers: Some(l), slices: None, scheme: "brickwall".into(), optimizer: String::new() };
            rows.extend(floor_rows(cfg, &series, (n - 1) * l)?);
        }
    }
    Ok(rows)
}

type SeriesKey = (String, usize, Option<usize>, Option<usize>, String, String);

/// Fits `value = c (tJ)^m` per series of each listed metric (every metric
/// with a time axis when the list is empty).
pub fn fit_series(rows: &[Row], metrics: &[String], settings: &config::FitSettings) -> Vec<FitRecord> {
    let mut groups: BTreeMap<SeriesKey, Vec<(f64, f64)>> = BTreeMap::new();
    let mut order: Vec<SeriesKey> = Vec::new();
    for r in rows {
        let Some(tj) = r.tj else { continue };
        if r.metric.starts_with("fit_") || !(metrics.is_empty() || metrics.contains(&r.metric)) {
            continue;
        }
        let key = (r.metric.clone(), r.n, r.layers, r.slices, r.scheme.clone(), r.optimizer.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push((tj, r.value));
    }
    order
        .into_iter()
        .map(|key| {
            let pts = &groups[&key];
            let window = settings.window.or_else(|| default_window(pts, settings.floor, settings.ceiling));
            let result = match window {
                Some((a, b)) => powerlaw_fit(pts, a, b).map_err(|e| e.to_string()),
                None => Err(format!("no two consecutive points with value in [{}, {}]", settings.floor, settings.ceiling)),
            };
            let (metric, n, layers, slices, scheme, optimizer) = key;
            let (fit, error) = match result {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e)),
            };
            FitRecord { metric, n, layers, slices, scheme, optimizer, fit, error }
        })
        .collect()
}

/// `fit_c`, `fit_m`, their uncertainties and the window, per successful fit.
pub fn fit_rows(fits: &[FitRecord]) -> Vec<Row> {
    let mut rows = Vec::new();
    for f in fits {
        let Some(r) = &f.fit else { continue };
        let series = Series { n: f.n, layers: f.layers, slices: f.slices, scheme: f.scheme.clone(), optimizer: f.optimizer.clone() };
        for (name, v) in [("c", r.c), ("m", r.m), ("dc", r.dc), ("dm", r.dm), ("t_i", r.t_i), ("t_f", r.t_f), ("kappa", r.kappa as f64)] {
            rows.push(series.row(None, 1.0, format!("fit_{name}:{}", f.metric), v));
        }
    }
    rows
}
