//! Two-step minimization over the supply polytope.
//!
//! The first step runs a projected generalized-subgradient recursion
//! `p <- P(p - alpha_k g_k)` with step lengths `1/k^0.5` and then `1/k^1.1`,
//! keeping the best point seen. The second step is steepest descent: at each
//! iterate an inner projected-subgradient loop minimizes the convex map
//! `v -> f'(p, v)` over feasible displacements, then an Armijo backtracking
//! search fixes the step. Iterates where the best direction has zero slope are
//! examined through the second derivative at `p + xi v`.

use std::fmt;

use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::directional::{CaseKind, LocalModel, LocalOptions};
use crate::error::{GridError, Result};
use crate::objective::GridModel;
use crate::tolerances::{DELTA_FD, FPRIME_ZERO, FSECOND_ZERO, MEMBERSHIP};

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerConfig {
    /// Risk weight of the standard deviation term.
    pub r: f64,
    /// Armijo sufficient-decrease parameter in `(0, 0.5)`.
    pub alpha: f64,
    /// Backtracking factor in `(0, 1)`.
    pub beta: f64,
    /// Inner step exponent in `(0, 1)`.
    pub gamma: f64,
    pub inner_iters: usize,
    pub init_phase1_exp: f64,
    pub init_phase2_exp: f64,
    /// Iterations per initialization phase.
    pub init_iters: usize,
    /// Multiplier on the initialization step lengths.
    pub init_step_scale: f64,
    /// Outer stop threshold on the decrease of `f`.
    pub eps_stop: f64,
    /// Location of the inflection probe in `(0, 1)`.
    pub xi: f64,
    /// Probe at `{0.25, 0.5, 0.75}` and take the majority sign instead of a single `xi`.
    pub xi_vote: bool,
    pub max_iters: usize,
    pub max_halvings: usize,
    pub delta_fd: f64,
    pub theta: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.5,
            inner_iters: 600,
            init_phase1_exp: 0.5,
            init_phase2_exp: 1.1,
            init_iters: 300,
            init_step_scale: 20.0,
            eps_stop: 1e-6,
            xi: 0.5,
            xi_vote: false,
            max_iters: 500,
            max_halvings: 60,
            delta_fd: DELTA_FD,
            theta: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(GridError::InvalidConfig(what.to_string()));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad("r must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad("alpha must lie in (0, 0.5)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad("xi must lie in (0, 1)");
        }
        if !(self.eps_stop > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.init_phase1_exp > 0.0 && self.init_phase2_exp > 1.0) {
            return bad("initialization exponents must be positive, the second above one");
        }
        if !(self.init_step_scale > 0.0 && self.init_step_scale.is_finite()) {
            return bad("initialization step scale must be positive");
        }
        if !(self.delta_fd > 0.0) {
            return bad("delta-fd must be positive");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]");
        }
        if self.inner_iters == 0 || self.max_iters == 0 {
            return bad("iteration counts must be positive");
        }
        Ok(())
    }

    fn local_options(&self, second_order: bool) -> LocalOptions {
        LocalOptions { delta_fd: self.delta_fd, theta: self.theta, second_order }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init1,
    Init2,
    Descent,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init1 => "init1",
            Phase::Init2 => "init2",
            Phase::Descent => "descent",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub phase: Phase,
    pub p: Vec<f64>,
    pub f: f64,
    /// Slope of the chosen direction (descent only).
    pub fprime: Option<f64>,
    /// Accepted step length in descent, `alpha_k` in initialization.
    pub t: Option<f64>,
    pub case: CaseKind,
    /// Best value so far within the initialization.
    pub f_min: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.17e}")).unwrap_or_default()
}

impl IterationTrace {
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    /// CSV with columns `iter, phase, p1..pd, f, fprime, t, case`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let dim = self.rows.first().map(|r| r.p.len()).unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string(), "phase".to_string()];
        header.extend((1..=dim).map(|i| format!("p{i}")));
        header.extend(["f", "fprime", "t", "case"].map(String::from));
        w.write_record(&header).map_err(csv_error)?;
        for row in &self.rows {
            let mut rec = vec![row.iter.to_string(), row.phase.to_string()];
            rec.extend(row.p.iter().map(|x| format!("{x:.17e}")));
            rec.push(format!("{:.17e}", row.f));
            rec.push(fmt_opt(row.fprime));
            rec.push(fmt_opt(row.t));
            rec.push(row.case.to_string());
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn csv_error(e: csv::Error) -> GridError {
    GridError::Io(std::io::Error::other(e))
}

/// How the inner direction search resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DirectionCase {
    /// Only `v = 0` has zero slope.
    Stationary,
    /// A nonzero `v` with zero slope was found.
    FlatSegment,
    /// A direction with negative slope was found.
    Descent,
}

#[derive(Debug, Clone)]
pub struct Direction {
    pub v: DVector<f64>,
    pub fprime: f64,
    pub case: DirectionCase,
}

/// Projected subgradient minimization of `v -> f'(p, v)` over `{v : p + v feasible}`.
///
/// Steps are `alpha_j g_j / |g_j|` with `alpha_j = 1/j^gamma`.
pub fn steepest_direction(model: &GridModel, local: &LocalModel, cfg: &OptimizerConfig) -> Result<Direction> {
    let poly = model.polytope();
    let p = local.p();
    let dim = p.len();
    let mut v = DVector::zeros(dim);
    let mut best = (0.0, DVector::zeros(dim));
    let mut flat: Option<DVector<f64>> = None;
    for j in 1..=cfg.inner_iters {
        let g = local.fprime_subgradient(&v);
        let norm = g.norm();
        if norm == 0.0 {
            break;
        }
        let step = (j as f64).powf(-cfg.gamma) / norm;
        v = poly.project(&(p + &v - g * step))? - p;
        let value = local.fprime(&v);
        if value < best.0 {
            best = (value, v.clone());
        }
        if value.abs() <= FPRIME_ZERO && v.norm() > 0.0 && flat.as_ref().is_none_or(|f| v.norm() < f.norm()) {
            flat = Some(v.clone());
        }
    }
    if best.0 < -FPRIME_ZERO {
        return Ok(Direction { v: best.1, fprime: best.0, case: DirectionCase::Descent });
    }
    if let Some(v) = flat {
        let fprime = local.fprime(&v);
        return Ok(Direction { v, fprime, case: DirectionCase::FlatSegment });
    }
    Ok(Direction { v: DVector::zeros(dim), fprime: 0.0, case: DirectionCase::Stationary })
}

/// Armijo backtracking on `phi(t) = f(p + t v)`, starting at `t = 1`.
///
/// Trial points where `phi` reports saturation count as failures. Returns
/// `(t, phi(t), halvings)`.
pub fn armijo<F>(f0: f64, fprime: f64, alpha: f64, beta: f64, max_halvings: usize, mut phi: F) -> Result<(f64, f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut t = 1.0;
    for m in 0..=max_halvings {
        match phi(t) {
            Ok(ft) if ft <= f0 + alpha * t * fprime => return Ok((t, ft, m)),
            Ok(_) | Err(GridError::Saturation { .. }) => t *= beta,
            Err(e) => return Err(e),
        }
    }
    Err(GridError::LineSearchCap { halvings: max_halvings })
}

/// Armijo step along `v` from `p`.
pub fn line_search(
    model: &GridModel,
    p: &DVector<f64>,
    f0: f64,
    v: &DVector<f64>,
    fprime: f64,
    cfg: &OptimizerConfig,
) -> Result<(f64, f64, usize)> {
    armijo(f0, fprime, cfg.alpha, cfg.beta, cfg.max_halvings, |t| Ok(model.evaluate(&(p + v * t), cfg.r)?.f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The steepest direction is zero.
    Stationary,
    /// Zero slope along a segment with positive curvature.
    PositiveCurvature,
    /// Zero slope and zero curvature along a segment.
    FlatCurvature,
    /// Negative curvature, but the full step did not decrease `f`.
    InflectionRejected,
    /// The decrease of `f` fell to `eps` or below.
    SmallDecrease,
    /// The initialization ran its fixed number of iterations.
    Completed,
    IterationCap,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Stationary => "stationary",
            Termination::PositiveCurvature => "positive-curvature",
            Termination::FlatCurvature => "flat-curvature",
            Termination::InflectionRejected => "inflection-rejected",
            Termination::SmallDecrease => "small-decrease",
            Termination::Completed => "completed",
            Termination::IterationCap => "iteration-cap",
        }
    }

    /// Whether this is one of the stop rules of the descent method.
    pub fn is_converged(&self) -> bool {
        matches!(
            self,
            Termination::Stationary | Termination::PositiveCurvature | Termination::SmallDecrease | Termination::Completed
        )
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub p: DVector<f64>,
    pub f: f64,
    pub trace: IterationTrace,
    pub termination: Termination,
    /// Largest number of halvings used by any line search.
    pub max_halvings_used: usize,
}

/// Curvature at `p + xi v` along the rest of the segment, scaled back to `v`.
fn segment_curvature(model: &GridModel, p: &DVector<f64>, v: &DVector<f64>, xi: f64, cfg: &OptimizerConfig) -> Result<f64> {
    let q = p + v * xi;
    let local = LocalModel::new(model, &q, cfg.r, &cfg.local_options(true))?;
    let rest = v * (1.0 - xi);
    Ok(local.fsecond(&rest)? / ((1.0 - xi) * (1.0 - xi)))
}

fn probe_sign(model: &GridModel, p: &DVector<f64>, v: &DVector<f64>, cfg: &OptimizerConfig) -> Result<(i8, f64)> {
    let xis: &[f64] = if cfg.xi_vote { &[0.25, 0.5, 0.75] } else { std::slice::from_ref(&cfg.xi) };
    let mut votes = 0i32;
    let mut last = 0.0;
    for &xi in xis {
        let c = segment_curvature(model, p, v, xi, cfg)?;
        last = c;
        votes += if c > FSECOND_ZERO { 1 } else if c < -FSECOND_ZERO { -1 } else { 0 };
    }
    Ok((votes.signum() as i8, last))
}

/// Steepest descent from a feasible `p0`.
pub fn steepest_descent(model: &GridModel, p0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    model.polytope().require(p0)?;
    let mut p = p0.clone();
    let mut trace = IterationTrace::default();
    let mut max_used = 0;
    for iter in 0..cfg.max_iters {
        let local = LocalModel::new(model, &p, cfg.r, &cfg.local_options(false))?;
        let f = local.f();
        let case = local.eval.case.kind;
        let dir = steepest_direction(model, &local, cfg)?;
        let mut row = TraceRow { iter, phase: Phase::Descent, p: p.iter().copied().collect(), f, fprime: Some(dir.fprime), t: None, case, f_min: None };
        let finish = |row: TraceRow, mut trace: IterationTrace, p: DVector<f64>, termination| {
            trace.rows.push(row);
            Ok(OptimizationResult { p, f, trace, termination, max_halvings_used: max_used })
        };
        match dir.case {
            DirectionCase::Stationary => return finish(row, trace, p, Termination::Stationary),
            DirectionCase::FlatSegment => {
                let (sign, curvature) = probe_sign(model, &p, &dir.v, cfg)?;
                match sign {
                    1 => return finish(row, trace, p, Termination::PositiveCurvature),
                    0 => {
                        warn!("zero curvature {curvature:e} along a flat segment; treating the iterate as a local minimizer");
                        return finish(row, trace, p, Termination::FlatCurvature);
                    }
                    _ => {
                        let next = &p + &dir.v;
                        let f_next = model.evaluate(&next, cfg.r)?.f;
                        if f_next >= f {
                            return finish(row, trace, p, Termination::InflectionRejected);
                        }
                        row.t = Some(1.0);
                        trace.rows.push(row);
                        p = next;
                    }
                }
            }
            DirectionCase::Descent => {
                let (t, f_next, halvings) = line_search(model, &p, f, &dir.v, dir.fprime, cfg)?;
                max_used = max_used.max(halvings);
                row.t = Some(t);
                trace.rows.push(row);
                p = &p + &dir.v * t;
                if f - f_next <= cfg.eps_stop {
                    let last = LocalModel::new(model, &p, cfg.r, &cfg.local_options(false))?;
                    trace.rows.push(TraceRow {
                        iter: iter + 1,
                        phase: Phase::Descent,
                        p: p.iter().copied().collect(),
                        f: last.f(),
                        fprime: None,
                        t: None,
                        case: last.eval.case.kind,
                        f_min: None,
                    });
                    return Ok(OptimizationResult { p, f: last.f(), trace, termination: Termination::SmallDecrease, max_halvings_used: max_used });
                }
            }
        }
    }
    let f = model.evaluate(&p, cfg.r)?.f;
    warn!("steepest descent stopped at the cap of {} iterations", cfg.max_iters);
    Ok(OptimizationResult { p, f, trace, termination: Termination::IterationCap, max_halvings_used: max_used })
}

fn subgradient_phase(
    model: &GridModel,
    start: &DVector<f64>,
    exponent: f64,
    phase: Phase,
    cfg: &OptimizerConfig,
    trace: &mut IterationTrace,
) -> Result<(DVector<f64>, f64)> {
    let poly = model.polytope();
    let mut p = start.clone();
    let mut local = LocalModel::new(model, &p, cfg.r, &cfg.local_options(false))?;
    let mut best = (p.clone(), local.f());
    trace.rows.push(TraceRow {
        iter: 0,
        phase,
        p: p.iter().copied().collect(),
        f: local.f(),
        fprime: None,
        t: None,
        case: local.eval.case.kind,
        f_min: Some(best.1),
    });
    for k in 1..=cfg.init_iters {
        let g = local.subgradient().g;
        let alpha = cfg.init_step_scale * (k as f64).powf(-exponent);
        p = poly.project(&(&p - g * alpha))?;
        local = LocalModel::new(model, &p, cfg.r, &cfg.local_options(false))?;
        if local.f() < best.1 {
            best = (p.clone(), local.f());
        }
        trace.rows.push(TraceRow {
            iter: k,
            phase,
            p: p.iter().copied().collect(),
            f: local.f(),
            fprime: None,
            t: Some(alpha),
            case: local.eval.case.kind,
            f_min: Some(best.1),
        });
    }
    Ok(best)
}

/// Two-phase projected generalized-subgradient initialization.
///
/// Phase one uses `alpha_k = s/k^0.5`, phase two restarts from the best point of
/// phase one with `alpha_k = s/k^1.1`; the best point over both is returned.
pub fn init_subgradient(model: &GridModel, p0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    model.polytope().require(p0)?;
    let mut trace = IterationTrace::default();
    let (p1, f1) = subgradient_phase(model, p0, cfg.init_phase1_exp, Phase::Init1, cfg, &mut trace)?;
    let (p2, f2) = subgradient_phase(model, &p1, cfg.init_phase2_exp, Phase::Init2, cfg, &mut trace)?;
    let (p, f) = if f2 < f1 { (p2, f2) } else { (p1, f1) };
    info!("initialization reached f = {f:.6}");
    Ok(OptimizationResult { p, f, trace, termination: Termination::Completed, max_halvings_used: 0 })
}

/// Initialization followed by steepest descent from its best point.
pub fn two_step(model: &GridModel, p0: &DVector<f64>, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    let init = init_subgradient(model, p0, cfg)?;
    let descent = steepest_descent(model, &init.p, cfg)?;
    let mut trace = init.trace;
    trace.rows.extend(descent.trace.rows);
    Ok(OptimizationResult { trace, ..descent })
}

/// Running minimum of a sequence.
pub fn running_min(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut best = f64::INFINITY;
    values
        .into_iter()
        .map(|v| {
            best = best.min(v);
            best
        })
        .collect()
}

/// Checks that every trace row lies in the polytope.
pub fn trace_is_feasible(model: &GridModel, trace: &IterationTrace) -> bool {
    trace.rows.iter().all(|r| {
        let p = DVector::from_column_slice(&r.p);
        model.polytope().violation(&p).map(|v| v <= MEMBERSHIP).unwrap_or(false)
    })
}
