//! Run configuration, result documents and the command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use log::warn;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::directional::{LocalModel, LocalOptions};
use crate::error::{GridError, Result};
use crate::network::load_network_file;
use crate::objective::{GridModel, ObjectiveEvaluation};
use crate::optimizer::{self, IterationTrace, OptimizationResult, OptimizerConfig, Termination};
use crate::sigma::{sigma_derivatives, SigmaConfig};
use crate::tolerances::MEMBERSHIP;

/// Version of the result document; bumped together with the network schema.
pub const RESULT_SCHEMA_VERSION: u32 = 1;

pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const SATURATION: i32 = 3;
    pub const DEGENERATE: i32 = 4;
    pub const ITERATION_CAP: i32 = 5;
}

/// Process exit status for an error.
pub fn exit_code(err: &GridError) -> i32 {
    use GridError::*;
    match err {
        Io(_) | Parse(_) | InvalidNetwork(_) | Disconnected { .. } | SupplyDeficit { .. } | InvalidConfig(_)
        | DimensionMismatch { .. } | Infeasible { .. } | InfeasibleDirection { .. } | ZeroDirection => exit::INPUT,
        Saturation { .. } => exit::SATURATION,
        NotHurwitz { .. } | DegenerateSpectrum { .. } | VanishingSigma { .. } | Eigen(_) | LyapunovResidual { .. } => {
            exit::DEGENERATE
        }
        IterationCap(_) | LineSearchCap { .. } => exit::ITERATION_CAP,
        Projection(_) => exit::OTHER,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Evaluate,
    Gradient,
    Init,
    Descend,
    TwoStep,
    Project,
}

/// Where a run starts.
#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    /// Centre of the capacity box, projected onto the polytope.
    Auto,
    /// Uniform interior sample drawn from the run seed.
    Random,
    Vector(Vec<f64>),
}

impl FromStr for StartSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "auto" => Ok(StartSpec::Auto),
            "random" => Ok(StartSpec::Random),
            list => list
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad start component {x:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(StartSpec::Vector),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: PathBuf,
    pub method: Method,
    pub start: StartSpec,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub trace_out: Option<PathBuf>,
    pub result_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(network: impl Into<PathBuf>, method: Method, r: f64) -> Self {
        Self {
            network: network.into(),
            method,
            start: StartSpec::Auto,
            seed: 0,
            optimizer: OptimizerConfig { r, ..Default::default() },
            trace_out: None,
            result_out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    /// Row `k` is the gradient of the standard deviation of line `k + 1`.
    pub grad_sigma: Vec<Vec<f64>>,
    /// A generalized gradient of the objective.
    pub subgradient: Vec<f64>,
    /// 1-based line that produced `subgradient`.
    pub source_line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub version: u32,
    pub method: Method,
    pub r: f64,
    pub start: Vec<f64>,
    pub p_s: Vec<f64>,
    /// Every supply node's output, including the balancing one.
    pub dispatch: Vec<f64>,
    pub f: f64,
    pub f_k: Vec<f64>,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    pub case: String,
    /// 1-based maximizing lines.
    pub max_lines: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gradient: Option<GradientReport>,
}

impl ResultDocument {
    fn from_evaluation(model: &GridModel, method: Method, start: &DVector<f64>, eval: &ObjectiveEvaluation) -> Self {
        Self {
            version: RESULT_SCHEMA_VERSION,
            method,
            r: eval.r,
            start: start.iter().copied().collect(),
            p_s: eval.p.iter().copied().collect(),
            dispatch: model.network().dispatch(&eval.p),
            f: eval.f,
            f_k: eval.f_k.iter().copied().collect(),
            mean: eval.mean.iter().copied().collect(),
            sigma: eval.sigma.iter().copied().collect(),
            case: eval.case.kind.to_string(),
            max_lines: eval.i_max.iter().map(|k| k + 1).collect(),
            termination: None,
            iterations: None,
            gradient: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.version != RESULT_SCHEMA_VERSION {
            return Err(GridError::InvalidConfig(format!("unsupported result version {}", doc.version)));
        }
        Ok(doc)
    }
}

/// Everything a run produced, before it is written anywhere.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: ResultDocument,
    pub trace: Option<IterationTrace>,
}

fn resolve_start(model: &GridModel, spec: &StartSpec, seed: u64) -> Result<DVector<f64>> {
    let poly = model.polytope();
    match spec {
        StartSpec::Auto => poly.auto_start(),
        StartSpec::Random => Ok(poly.sample_interior(&mut ChaCha8Rng::seed_from_u64(seed), 1e-6)),
        StartSpec::Vector(v) => {
            if v.len() != poly.dim() {
                return Err(GridError::DimensionMismatch { expected: poly.dim(), got: v.len() });
            }
            Ok(DVector::from_column_slice(v))
        }
    }
}

/// Executes a run in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.optimizer.validate()?;
    let model = GridModel::new(load_network_file(&cfg.network)?)?;
    let start = resolve_start(&model, &cfg.start, cfg.seed)?;
    let r = cfg.optimizer.r;
    let optimize = |run: fn(&GridModel, &DVector<f64>, &OptimizerConfig) -> Result<OptimizationResult>| -> Result<RunOutput> {
        let mut p0 = start.clone();
        let violation = model.polytope().violation(&p0)?;
        if violation > MEMBERSHIP {
            warn!("start violates the polytope by {violation:e}; projecting it");
            p0 = model.polytope().project(&p0)?;
        }
        let out = run(&model, &p0, &cfg.optimizer)?;
        if out.termination == Termination::IterationCap {
            return Err(GridError::IterationCap(cfg.optimizer.max_iters));
        }
        let eval = model.evaluate(&out.p, r)?;
        let mut result = ResultDocument::from_evaluation(&model, cfg.method, &start, &eval);
        result.termination = Some(out.termination);
        result.iterations = Some(out.trace.rows.len());
        Ok(RunOutput { result, trace: Some(out.trace) })
    };
    match cfg.method {
        Method::Evaluate => {
            let eval = model.evaluate(&start, r)?;
            Ok(RunOutput { result: ResultDocument::from_evaluation(&model, cfg.method, &start, &eval), trace: None })
        }
        Method::Gradient => {
            let sigma_cfg = SigmaConfig { delta_fd: cfg.optimizer.delta_fd, second_order: false };
            let derivs = sigma_derivatives(&model, &start, &sigma_cfg)?;
            let opts = LocalOptions { delta_fd: cfg.optimizer.delta_fd, theta: cfg.optimizer.theta, second_order: false };
            let local = LocalModel::new(&model, &start, r, &opts)?;
            let sub = local.subgradient();
            let mut result = ResultDocument::from_evaluation(&model, cfg.method, &start, &local.eval);
            result.gradient = Some(GradientReport {
                grad_sigma: derivs.grad_sigma.row_iter().map(|row| row.iter().copied().collect()).collect(),
                subgradient: sub.g.iter().copied().collect(),
                source_line: sub.source_edge + 1,
            });
            Ok(RunOutput { result, trace: None })
        }
        Method::Project => {
            let p = model.polytope().project(&start)?;
            let eval = model.evaluate(&p, r)?;
            Ok(RunOutput { result: ResultDocument::from_evaluation(&model, cfg.method, &start, &eval), trace: None })
        }
        Method::Init => optimize(optimizer::init_subgradient),
        Method::Descend => optimize(optimizer::steepest_descent),
        Method::TwoStep => optimize(optimizer::two_step),
    }
}

/// Writes through a sibling temporary file so a failed run leaves nothing half-written.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Executes a run and writes its artifacts. Nothing is written unless the run succeeds.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let out = execute(cfg)?;
    let json = out.result.to_json();
    let csv = match &out.trace {
        Some(trace) => Some(trace.to_csv_string()?),
        None => None,
    };
    if let Some(path) = &cfg.result_out {
        write_atomic(path, json.as_bytes())?;
    }
    if let (Some(path), Some(csv)) = (&cfg.trace_out, csv) {
        write_atomic(path, csv.as_bytes())?;
    }
    Ok(out)
}

/// Re-evaluates a stored result against its network.
pub fn reevaluate(doc: &ResultDocument, network: &Path) -> Result<ObjectiveEvaluation> {
    let model = GridModel::new(load_network_file(network)?)?;
    model.evaluate(&DVector::from_column_slice(&doc.p_s), doc.r)
}

#[derive(Debug, Parser)]
#[command(name = "gridmin", version, about = "Risk-aware supply dispatch on a stochastic power network")]
pub struct Cli {
    #[arg(value_enum)]
    pub method: Method,
    /// Network document (JSON).
    #[arg(long)]
    pub network: PathBuf,
    /// Weight of the standard deviation term.
    #[arg(long)]
    pub r: f64,
    /// Comma-separated supplies, `auto` or `random`.
    #[arg(long, default_value = "auto")]
    pub start: StartSpec,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Probe the curvature at three points and take the majority sign.
    #[arg(long)]
    pub xi_vote: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub init_iters: Option<usize>,
    #[arg(long)]
    pub init_step_scale: Option<f64>,
    #[arg(long)]
    pub delta_fd: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub result_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Cli {
    pub fn into_config(self) -> RunConfig {
        let d = OptimizerConfig::default();
        let optimizer = OptimizerConfig {
            r: self.r,
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            gamma: self.gamma.unwrap_or(d.gamma),
            inner_iters: self.inner_iters.unwrap_or(d.inner_iters),
            init_iters: self.init_iters.unwrap_or(d.init_iters),
            init_step_scale: self.init_step_scale.unwrap_or(d.init_step_scale),
            eps_stop: self.eps.unwrap_or(d.eps_stop),
            xi: self.xi.unwrap_or(d.xi),
            xi_vote: self.xi_vote,
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            delta_fd: self.delta_fd.unwrap_or(d.delta_fd),
            theta: self.theta.unwrap_or(d.theta),
            ..d
        };
        RunConfig {
            network: self.network,
            method: self.method,
            start: self.start,
            seed: self.seed,
            optimizer,
            trace_out: self.trace_out,
            result_out: self.result_out,
        }
    }
}

/// Parses arguments, runs, reports, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::INPUT } else { exit::OK };
        }
    };
    let cfg = cli.into_config();
    match run(&cfg) {
        Ok(out) => {
            if cfg.result_out.is_none() {
                println!("{}", out.result.to_json());
            } else {
                let termination = out.result.termination.map(|t| t.as_str()).unwrap_or("-");
                println!("f = {:.10}  case {}  {}", out.result.f, out.result.case, termination);
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("gridmin: {e}");
            exit_code(&e)
        }
    }
}
