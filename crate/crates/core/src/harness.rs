//! Multi-seed experiments: configuration, execution, failure classification,
//! best-seed selection and report files.
//!
//! Report files in the output directory:
//!
//! * `report.json`: the [`RunReport`] (configuration, per-seed rows, best
//!   seed, failure count, timing). Keys are the field names below.
//! * `summary.csv`: one row per seed,
//!   `seed,initial_loss,final_loss,final_original_loss,train_error,test_error,max_bound_ratio,failed`.
//! * `trace_seed<k>.csv`: one row per iteration; FNN tasks use
//!   `iter,actual_loss,mse_loss,bound_ratio`, PINN tasks
//!   `iter,actual_loss,J,J1,J2,bound_ratio`.
//!
//! Numbers in CSV files are written as `%.6e`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnn::{l2_error, Activation};
use crate::fnn_solvers::{
    alternating_run, initial_state, ls_fnn_run, FnnAuxState, FnnSolverConfig, Formulation,
    PenaltyWeights, TraceRow,
};
use crate::format::sci6;
use crate::pinn::{build_transport_data, solution_error, TransportProblem};
use crate::pinn_solvers::{
    alternating_pinn_run, initial_pinn_state, ls_pinn_run, PinnAuxState, PinnPenaltyWeights,
    PinnSolverConfig, PinnTraceRow,
};
use crate::rng::Stream;
use crate::sampling::{build_regression_dataset, Dataset, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ls,
    Pm,
    Sapm,
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Self::Ls),
            "pm" => Ok(Self::Pm),
            "sapm" => Ok(Self::Sapm),
            _ => Err(Error::Config(format!(
                "unknown model `{s}` (expected ls, pm or sapm)"
            ))),
        }
    }
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ls => "LS",
            Self::Pm => "PM",
            Self::Sapm => "SAPM",
        }
    }

    fn formulation(self) -> Option<Formulation> {
        match self {
            Self::Ls => None,
            Self::Pm => Some(Formulation::Penalty),
            Self::Sapm => Some(Formulation::SelfAdaptive),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Fnn,
    Pinn,
}

/// Starting auxiliaries: i.i.d. `U(−1, 1)` or the states and tangents of the
/// initial network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxInit {
    Random,
    Feasible,
}

impl FromStr for AuxInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "feasible" => Ok(Self::Feasible),
            _ => Err(Error::Config(format!(
                "unknown auxiliary initialization `{s}`"
            ))),
        }
    }
}

/// One experiment. Read from a flat TOML file; every key is optional and
/// falls back to [`RunConfig::new`] for the task.
///
/// Keys: `model`, `task`, `problem`, `depth`, `width`, `activation`,
/// `iterations`, `seeds`, `master_seed`, `train_size` (`N` or `N₁`),
/// `boundary_size` (`N₂`), `test_size`, `lr0`, `lr_decay`, `armijo_tau`,
/// `armijo_factor`, `armijo_c`, `armijo_max_backtracks`, `beta`, `alpha`,
/// `beta2`, `mu` (penalty weights, one value for every layer), `aux_init`,
/// `workers` (0 = all cores), `out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub task: Task,
    pub problem: String,
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub iterations: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub train_size: usize,
    pub boundary_size: usize,
    pub test_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub armijo_tau: f64,
    pub armijo_factor: f64,
    pub armijo_c: f64,
    pub armijo_max_backtracks: usize,
    pub beta: f64,
    pub alpha: f64,
    pub beta2: f64,
    pub mu: f64,
    pub aux_init: AuxInit,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    model: Option<Model>,
    task: Option<Task>,
    problem: Option<String>,
    depth: Option<usize>,
    width: Option<usize>,
    activation: Option<Activation>,
    iterations: Option<usize>,
    seeds: Option<usize>,
    master_seed: Option<u64>,
    train_size: Option<usize>,
    boundary_size: Option<usize>,
    test_size: Option<usize>,
    lr0: Option<f64>,
    lr_decay: Option<f64>,
    armijo_tau: Option<f64>,
    armijo_factor: Option<f64>,
    armijo_c: Option<f64>,
    armijo_max_backtracks: Option<usize>,
    beta: Option<f64>,
    alpha: Option<f64>,
    beta2: Option<f64>,
    mu: Option<f64>,
    aux_init: Option<AuxInit>,
    workers: Option<usize>,
    out: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults of the given task: `sin1d` with `N = 100` for FNNs, `t1d`
    /// with `N₁ = 1000`, `N₂ = 400` for PINNs; 10 seeds, 1000 test points.
    pub fn new(task: Task, model: Model) -> Self {
        let (problem, activation, train, boundary) = match task {
            Task::Fnn => ("sin1d", Activation::Relu, 100, 0),
            Task::Pinn => ("t1d", Activation::Sin, 1000, 400),
        };
        Self {
            model,
            task,
            problem: problem.into(),
            depth: 6,
            width: 10,
            activation,
            iterations: 1000,
            seeds: 10,
            master_seed: 0,
            train_size: train,
            boundary_size: boundary,
            test_size: 1000,
            lr0: match task {
                Task::Fnn => 1e-2,
                Task::Pinn => 1e-3,
            },
            lr_decay: 1e4,
            armijo_tau: 1.0,
            armijo_factor: 0.5,
            armijo_c: 1e-4,
            armijo_max_backtracks: 20,
            beta: 1.0,
            alpha: 1.0,
            beta2: 1.0,
            mu: 1.0,
            aux_init: AuxInit::Random,
            workers: 0,
            out: None,
        }
    }

    /// Parses a flat TOML document over the task defaults (`task` defaults to
    /// `fnn`).
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::parse(text, None)
    }

    /// As [`RunConfig::from_toml`] for a fixed task; an explicit `task` key
    /// must agree with it.
    pub fn from_toml_for(text: &str, task: Task) -> Result<Self> {
        Self::parse(text, Some(task))
    }

    fn parse(text: &str, required: Option<Task>) -> Result<Self> {
        let p: PartialConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let task = match (p.task, required) {
            (Some(t), Some(r)) if t != r => {
                return Err(Error::Config(
                    "configuration file is for a different task".into(),
                ))
            }
            (t, r) => t.or(r).unwrap_or(Task::Fnn),
        };
        let mut c = Self::new(task, p.model.unwrap_or(Model::Sapm));
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = p.$f { c.$f = v; } )* };
        }
        take!(
            problem,
            depth,
            width,
            activation,
            iterations,
            seeds,
            master_seed,
            train_size,
            boundary_size,
            test_size,
            lr0,
            lr_decay,
            armijo_tau,
            armijo_factor,
            armijo_c,
            armijo_max_backtracks,
            beta,
            alpha,
            beta2,
            mu,
            aux_init,
            workers
        );
        c.out = p.out;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, task: Task) -> Result<Self> {
        Self::from_toml_for(&std::fs::read_to_string(path)?, task)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.depth < 2 || self.width == 0 || self.train_size == 0 || self.test_size == 0 {
            return bad("depth must be ≥ 2 and width and sample counts positive");
        }
        if self.task == Task::Pinn {
            if self.activation != Activation::Sin {
                return bad("physics-informed tasks require the sin activation");
            }
            if self.boundary_size == 0 {
                return bad("physics-informed tasks need boundary points");
            }
            TransportProblem::by_name(&self.problem)?;
        } else {
            fnn_problem(&self.problem)?;
        }
        for (name, v) in [
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("beta2", self.beta2),
            ("mu", self.mu),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.fnn_solver_config().validate()?;
        Ok(())
    }

    fn armijo(&self) -> crate::fnn_solvers::Armijo {
        crate::fnn_solvers::Armijo {
            tau: self.armijo_tau,
            factor: self.armijo_factor,
            c: self.armijo_c,
            max_backtracks: self.armijo_max_backtracks,
        }
    }

    pub fn fnn_solver_config(&self) -> FnnSolverConfig {
        FnnSolverConfig {
            depth: self.depth,
            width: self.width,
            activation: self.activation,
            iterations: self.iterations,
            beta: PenaltyWeights {
                beta: vec![self.beta; self.depth - 1],
            },
            armijo: self.armijo(),
            lr0: self.lr0,
            lr_decay: self.lr_decay,
        }
    }

    pub fn pinn_solver_config(&self, bound_c: f64) -> PinnSolverConfig {
        PinnSolverConfig {
            depth: self.depth,
            width: self.width,
            iterations: self.iterations,
            weights: PinnPenaltyWeights {
                beta1: vec![self.beta; self.depth - 1],
                alpha1: vec![self.alpha; self.depth],
                beta2: vec![self.beta2; self.depth - 1],
                mu: self.mu,
            },
            armijo: self.armijo(),
            lr0: self.lr0,
            lr_decay: self.lr_decay,
            bound_c,
        }
    }
}

/// Regression targets: `sin1d` is `sin(x²)` on `[-1, 1]`, `ball10` is
/// `1/(2√d + Σxᵢ)` on the unit ball of `ℝ¹⁰`.
pub fn fnn_problem(name: &str) -> Result<(Domain, fn(&[f64]) -> f64)> {
    fn sin_sq(x: &[f64]) -> f64 {
        (x[0] * x[0]).sin()
    }
    fn ball(x: &[f64]) -> f64 {
        1.0 / (2.0 * (x.len() as f64).sqrt() + x.iter().sum::<f64>())
    }
    match name {
        "sin1d" => Ok((Domain::Interval, sin_sq)),
        "ball10" => Ok((Domain::UnitBall { dim: 10 }, ball)),
        _ => Err(Error::Config(format!(
            "unknown regression problem `{name}` (expected sin1d or ball10)"
        ))),
    }
}

/// Per-seed outcome. Losses are `None` when the solver aborted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    /// `𝓛` or `𝒥` of the final network.
    pub final_original_loss: Option<f64>,
    /// `ℰ_ℓ²` on the training set (regression tasks).
    pub train_error: Option<f64>,
    /// `ℰ′_ℓ²` on the test set.
    pub test_error: Option<f64>,
    pub max_bound_ratio: Option<f64>,
    pub failed: bool,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds since the Unix epoch at the end of the run.
    pub timestamp: u64,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seeds: Vec<SeedResult>,
    pub best_seed: Option<usize>,
    pub failures: usize,
    pub timing: Timing,
}

impl RunReport {
    pub fn best(&self) -> Option<&SeedResult> {
        self.best_seed
            .and_then(|k| self.seeds.iter().find(|s| s.seed == k))
    }

    /// `report.json` contents.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A report with each seed's trace rendered as CSV text.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub traces: Vec<(usize, String)>,
}

/// `final ≥ 0.1·initial`; aborted runs count as failed.
pub fn is_failure(initial: Option<f64>, last: Option<f64>) -> bool {
    match (initial, last) {
        (Some(i), Some(f)) => !(f < 0.1 * i),
        _ => true,
    }
}

/// Seed with the smallest final loss, ties to the lowest index.
pub fn best_seed(rows: &[SeedResult]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for r in rows {
        if let Some(v) = r.final_loss.filter(|v| !v.is_nan()) {
            if best.map_or(true, |(b, k)| v < b || (v == b && r.seed < k)) {
                best = Some((v, r.seed));
            }
        }
    }
    best.map(|(_, k)| k)
}

fn fnn_trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iter,actual_loss,mse_loss,bound_ratio\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.iter,
            sci6(r.actual),
            sci6(r.mse),
            sci6(r.bound_ratio)
        );
    }
    s
}

fn pinn_trace_csv(trace: &[PinnTraceRow]) -> String {
    let mut s = String::from("iter,actual_loss,J,J1,J2,bound_ratio\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.iter,
            sci6(r.actual),
            sci6(r.j),
            sci6(r.j1),
            sci6(r.j2),
            sci6(r.bound_ratio)
        );
    }
    s
}

fn aborted(seed: usize, initial: Option<f64>, e: &Error) -> SeedResult {
    SeedResult {
        seed,
        initial_loss: initial,
        final_loss: None,
        final_original_loss: None,
        train_error: None,
        test_error: None,
        max_bound_ratio: None,
        failed: true,
        diagnostic: Some(e.to_string()),
    }
}

fn max_ratio<'a>(it: impl Iterator<Item = &'a f64>) -> Option<f64> {
    it.copied()
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

struct FnnData {
    train: Dataset,
    test: Dataset,
}

fn fnn_seed(cfg: &RunConfig, data: &FnnData, seed: usize) -> (SeedResult, String) {
    let scfg = cfg.fnn_solver_config();
    let (x, y) = (&data.train.features, &data.train.labels);
    let mut rng = Stream::derive(cfg.master_seed, seed as u64);
    let (params, aux) = initial_state(&scfg, x, &mut rng);
    let aux = match cfg.aux_init {
        AuxInit::Random => Ok(aux),
        AuxInit::Feasible => FnnAuxState::feasible(&params, x),
    };
    let run = aux.and_then(|aux| match cfg.model.formulation() {
        Some(f) => alternating_run(f, &scfg, params.clone(), aux, x, y),
        None => ls_fnn_run(&scfg, params.clone(), x, y),
    });
    match run {
        Ok(run) => {
            let (initial, last) = (run.initial().actual, run.last().actual);
            let train_error = l2_error(&run.params, x, y).ok();
            let test_error = l2_error(&run.params, &data.test.features, &data.test.labels).ok();
            let row = SeedResult {
                seed,
                initial_loss: Some(initial),
                final_loss: Some(last),
                final_original_loss: Some(run.last().mse),
                train_error,
                test_error,
                max_bound_ratio: max_ratio(run.trace.iter().map(|r| &r.bound_ratio)),
                failed: is_failure(Some(initial), Some(last)),
                diagnostic: None,
            };
            (row, fnn_trace_csv(&run.trace))
        }
        Err(e) => (aborted(seed, None, &e), fnn_trace_csv(&[])),
    }
}

fn pinn_seed(
    cfg: &RunConfig,
    problem: &TransportProblem,
    data: &crate::pinn::TransportData,
    seed: usize,
) -> (SeedResult, String) {
    let scfg = cfg.pinn_solver_config(problem.bound_c);
    let train = &data.train;
    let mut rng = Stream::derive(cfg.master_seed, seed as u64);
    let (params, aux) = initial_pinn_state(&scfg, train, &mut rng);
    let aux = match cfg.aux_init {
        AuxInit::Random => Ok(aux),
        AuxInit::Feasible => PinnAuxState::feasible(&params, train),
    };
    let run = aux.and_then(|aux| match cfg.model.formulation() {
        Some(f) => alternating_pinn_run(f, &scfg, params.clone(), aux, train),
        None => ls_pinn_run(&scfg, params.clone(), train),
    });
    match run {
        Ok(run) => {
            let (initial, last) = (run.initial().actual, run.last().actual);
            let row = SeedResult {
                seed,
                initial_loss: Some(initial),
                final_loss: Some(last),
                final_original_loss: Some(run.last().j),
                train_error: None,
                test_error: solution_error(&run.params, &data.test_points, &data.test_values).ok(),
                max_bound_ratio: max_ratio(run.trace.iter().map(|r| &r.bound_ratio)),
                failed: is_failure(Some(initial), Some(last)),
                diagnostic: None,
            };
            (row, pinn_trace_csv(&run.trace))
        }
        Err(e) => (aborted(seed, None, &e), pinn_trace_csv(&[])),
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs every seed `1..=seeds` (in parallel) with the stream derived from
/// `(master_seed, seed)`. Solver errors mark the seed as failed.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds: Vec<usize> = (1..=cfg.seeds).collect();
    let results: Vec<(SeedResult, String)> = match cfg.task {
        Task::Fnn => {
            let (domain, target) = fnn_problem(&cfg.problem)?;
            let data = FnnData {
                train: build_regression_dataset(target, &domain, cfg.train_size, 0)?,
                test: build_regression_dataset(target, &domain, cfg.test_size, cfg.train_size)?,
            };
            in_pool(cfg.workers, || {
                seeds.par_iter().map(|&k| fnn_seed(cfg, &data, k)).collect()
            })?
        }
        Task::Pinn => {
            let problem = TransportProblem::by_name(&cfg.problem)?;
            let data =
                build_transport_data(&problem, cfg.train_size, cfg.boundary_size, cfg.test_size)?;
            in_pool(cfg.workers, || {
                seeds
                    .par_iter()
                    .map(|&k| pinn_seed(cfg, &problem, &data, k))
                    .collect()
            })?
        }
    };
    let (rows, csvs): (Vec<SeedResult>, Vec<String>) = results.into_iter().unzip();
    let report = RunReport {
        config: cfg.clone(),
        best_seed: best_seed(&rows),
        failures: rows.iter().filter(|r| r.failed).count(),
        seeds: rows,
        timing: Timing {
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    };
    Ok(RunOutcome {
        report,
        traces: seeds.into_iter().zip(csvs).collect(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(sci6).unwrap_or_default()
}

pub fn summary_csv(report: &RunReport) -> String {
    let mut s = String::from(
        "seed,initial_loss,final_loss,final_original_loss,train_error,test_error,max_bound_ratio,failed\n",
    );
    for r in &report.seeds {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            opt(r.initial_loss),
            opt(r.final_loss),
            opt(r.final_original_loss),
            opt(r.train_error),
            opt(r.test_error),
            opt(r.max_bound_ratio),
            r.failed
        );
    }
    s
}

/// Writes `report.json`, `summary.csv` and one `trace_seed<k>.csv` per seed.
pub fn emit_report(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    put("report.json".into(), &outcome.report.to_json()?)?;
    put("summary.csv".into(), &summary_csv(&outcome.report))?;
    for (k, csv) in &outcome.traces {
        put(format!("trace_seed{k}.csv"), csv)?;
    }
    Ok(written)
}

/// One row of a model comparison, taken from the best seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: Model,
    pub best_seed: Option<usize>,
    pub actual_loss: Option<f64>,
    pub original_loss: Option<f64>,
    pub train_error: Option<f64>,
    pub test_error: Option<f64>,
    pub failures: usize,
}

/// Best-seed rows ordered LS, PM, SAPM.
pub fn compare_models(reports: &[RunReport]) -> Result<Vec<ComparisonRow>> {
    if let Some(first) = reports.first() {
        let c = &first.config;
        for r in reports {
            let o = &r.config;
            if o.task != c.task
                || o.problem != c.problem
                || o.train_size != c.train_size
                || o.test_size != c.test_size
            {
                return Err(Error::Config(
                    "compared runs must share task, problem and data sizes".into(),
                ));
            }
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| {
            let best = r.best();
            ComparisonRow {
                model: r.config.model,
                best_seed: r.best_seed,
                actual_loss: best.and_then(|b| b.final_loss),
                original_loss: best.and_then(|b| b.final_original_loss),
                train_error: best.and_then(|b| b.train_error),
                test_error: best.and_then(|b| b.test_error),
                failures: r.failures,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.model);
    Ok(rows)
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s =
        String::from("model,best_seed,actual_loss,original_loss,train_error,test_error,failures\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.model.name(),
            r.best_seed.map(|k| k.to_string()).unwrap_or_default(),
            opt(r.actual_loss),
            opt(r.original_loss),
            opt(r.train_error),
            opt(r.test_error),
            r.failures
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: usize, initial: Option<f64>, last: Option<f64>) -> SeedResult {
        SeedResult {
            seed,
            initial_loss: initial,
            final_loss: last,
            final_original_loss: last,
            train_error: None,
            test_error: None,
            max_bound_ratio: None,
            failed: is_failure(initial, last),
            diagnostic: None,
        }
    }

    #[test]
    fn failure_rule() {
        assert!(!is_failure(Some(1.0), Some(0.099)));
        assert!(is_failure(Some(1.0), Some(0.1)));
        assert!(is_failure(Some(1.0), Some(0.5)));
        assert!(is_failure(Some(1.0), None));
        assert!(is_failure(Some(0.0), Some(0.0)));
    }

    #[test]
    fn best_seed_ties_go_to_lowest_index() {
        let rows = vec![
            row(1, Some(1.0), Some(0.3)),
            row(2, Some(1.0), Some(0.2)),
            row(3, Some(1.0), Some(0.2)),
        ];
        assert_eq!(best_seed(&rows), Some(2));
        let rows = vec![row(1, Some(1.0), None), row(2, Some(1.0), Some(5.0))];
        assert_eq!(best_seed(&rows), Some(2));
        assert_eq!(best_seed(&[]), None);
    }

    #[test]
    fn config_file_overrides_defaults() {
        let c = RunConfig::from_toml(
            "task = \"pinn\"\nmodel = \"pm\"\ndepth = 8\nwidth = 20\nmu = 2.5\n",
        )
        .unwrap();
        assert_eq!(
            (c.task, c.model, c.depth, c.width),
            (Task::Pinn, Model::Pm, 8, 20)
        );
        assert_eq!(
            (c.train_size, c.boundary_size, c.activation),
            (1000, 400, Activation::Sin)
        );
        assert_eq!(c.mu, 2.5);
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
        assert!(RunConfig::from_toml("task = \"pinn\"\nactivation = \"relu\"").is_err());
        assert!(RunConfig::from_toml("depth = 1").is_err());
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn degenerate_run_is_a_failure() {
        let mut c = RunConfig::new(Task::Fnn, Model::Sapm);
        c.seeds = 1;
        c.iterations = 0;
        c.depth = 3;
        c.width = 4;
        c.test_size = 10;
        let out = run_experiment(&c).unwrap();
        let r = &out.report.seeds[0];
        assert_eq!(r.initial_loss, r.final_loss);
        assert!(r.failed);
        assert_eq!(out.report.failures, 1);
    }

    #[test]
    fn empty_report_gives_header_only_summary() {
        let mut c = RunConfig::new(Task::Fnn, Model::Ls);
        c.seeds = 0;
        let out = run_experiment(&c).unwrap();
        assert_eq!(summary_csv(&out.report).lines().count(), 1);
        assert_eq!(out.report.best_seed, None);
    }

    #[test]
    fn report_round_trips_and_emits_all_files() {
        let mut c = RunConfig::new(Task::Fnn, Model::Pm);
        c.seeds = 10;
        c.iterations = 3;
        c.depth = 3;
        c.width = 4;
        c.test_size = 20;
        let out = run_experiment(&c).unwrap();
        let back = RunReport::from_json(&out.report.to_json().unwrap()).unwrap();
        assert_eq!(back, out.report);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&out, dir.path()).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 12);
        let trace = std::fs::read_to_string(dir.path().join("trace_seed3.csv")).unwrap();
        assert_eq!(
            trace.lines().next(),
            Some("iter,actual_loss,mse_loss,bound_ratio")
        );
        assert_eq!(trace.lines().count(), 5);
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let mut c = RunConfig::new(Task::Fnn, Model::Ls);
        c.seeds = 0;
        let out = run_experiment(&c).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(
            emit_report(&out, &file.path().join("x")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn comparison_rows_are_ordered() {
        let mk = |model| {
            let mut c = RunConfig::new(Task::Fnn, model);
            c.seeds = 2;
            c.iterations = 2;
            c.depth = 3;
            c.width = 3;
            c.test_size = 10;
            run_experiment(&c).unwrap().report
        };
        let reports = vec![mk(Model::Sapm), mk(Model::Ls), mk(Model::Pm)];
        let rows = compare_models(&reports).unwrap();
        let order: Vec<Model> = rows.iter().map(|r| r.model).collect();
        assert_eq!(order, vec![Model::Ls, Model::Pm, Model::Sapm]);
        assert_eq!(compare_models(&reports[..1]).unwrap().len(), 1);
        let again = compare_models(&[mk(Model::Sapm), mk(Model::Sapm)]).unwrap();
        assert_eq!(again[0], again[1]);
        let table = comparison_table(&rows);
        assert!(table.lines().nth(1).unwrap().starts_with("LS,"));
        let mut other = mk(Model::Pm);
        other.config.problem = "ball10".into();
        assert!(compare_models(&[reports[0].clone(), other]).is_err());
    }

    #[test]
    fn pinn_task_runs() {
        let mut c = RunConfig::new(Task::Pinn, Model::Sapm);
        c.seeds = 2;
        c.iterations = 2;
        c.depth = 3;
        c.width = 3;
        c.train_size = 20;
        c.boundary_size = 8;
        c.test_size = 10;
        let out = run_experiment(&c).unwrap();
        assert!(out
            .report
            .seeds
            .iter()
            .all(|r| r.final_loss.is_some() && r.test_error.is_some()));
        assert_eq!(
            out.traces[0].1.lines().next(),
            Some("iter,actual_loss,J,J1,J2,bound_ratio")
        );
    }
}
