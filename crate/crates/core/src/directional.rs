//! Case analysis, directional derivatives and generalized gradients of the objective.
//!
//! Write `f_k(p) = asin|a_k' p + b_k| + r sigma_k(p)`. At a point `p` the
//! objective is smooth when a single line attains the max and its sine is
//! nonzero (case 1.1), has a kink in the mean term when that sine is zero
//! (case 1.2), and is a max of several pieces when lines tie (case 2).
//! In every case the one-sided derivative along `v` is a convex, positively
//! homogeneous function of `v`:
//!
//! ```text
//! case 1.1   s (1 - x^2)^{-1/2} a'v + r g'v          s = sign(x)
//! case 1.2   |a'v| + r g'v
//! case 2     max over tied lines of the above
//! ```
//!
//! Second derivatives are returned unhalved, so `f(p + t v) ~ f + t f' + t^2 f''/2`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GridError, Result};
use crate::objective::{GridModel, ObjectiveEvaluation};
use crate::sigma::{sigma_derivatives, SigmaConfig};
use crate::tolerances::{DELTA_FD, MAX_SET, MEMBERSHIP, ZERO_MEAN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseKind {
    /// Single maximizing line with a nonzero sine.
    #[serde(rename = "1.1")]
    Case11,
    /// Single maximizing line with a zero sine.
    #[serde(rename = "1.2")]
    Case12,
    /// Several maximizing lines.
    #[serde(rename = "2")]
    Case2,
}

impl CaseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseKind::Case11 => "1.1",
            CaseKind::Case12 => "1.2",
            CaseKind::Case2 => "2",
        }
    }
}

impl std::fmt::Display for CaseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseLabel {
    pub kind: CaseKind,
    /// Maximizing lines, ascending (0-based).
    pub edges: Vec<usize>,
    /// Maximizing lines whose sine is zero.
    pub zero_edges: Vec<usize>,
}

impl CaseLabel {
    pub(crate) fn placeholder() -> Self {
        Self { kind: CaseKind::Case11, edges: Vec::new(), zero_edges: Vec::new() }
    }

    /// The lowest-index maximizing line.
    pub fn edge(&self) -> usize {
        self.edges[0]
    }
}

pub fn classify(eval: &ObjectiveEvaluation) -> CaseLabel {
    let edges = eval.i_max.clone();
    let zero_edges: Vec<usize> = edges.iter().copied().filter(|&k| eval.sines[k].abs() <= ZERO_MEAN).collect();
    let kind = match (edges.len(), zero_edges.is_empty()) {
        (1, true) => CaseKind::Case11,
        (1, false) => CaseKind::Case12,
        _ => CaseKind::Case2,
    };
    CaseLabel { kind, edges, zero_edges }
}

/// Settings for building a [`LocalModel`].
#[derive(Debug, Clone, Copy)]
pub struct LocalOptions {
    pub delta_fd: f64,
    /// Tie parameter in `[0, 1]`; the generalized gradient of `|a'v|` at a kink is
    /// taken as `(2 theta - 1) a`.
    pub theta: f64,
    pub second_order: bool,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { delta_fd: DELTA_FD, theta: 0.5, second_order: true }
    }
}

/// First- and second-order data of one maximizing line.
#[derive(Debug, Clone)]
pub struct EdgeTerm {
    pub edge: usize,
    pub sine: f64,
    /// Row `A(k)` as a column vector.
    pub a: DVector<f64>,
    pub grad_sigma: DVector<f64>,
    pub hess_sigma: Option<DMatrix<f64>>,
    pub zero: bool,
}

/// A generalized gradient together with the branch that produced it.
#[derive(Debug, Clone)]
pub struct Subgradient {
    pub g: DVector<f64>,
    pub theta: f64,
    pub source_edge: usize,
}

/// Derivative information of the objective at one point, restricted to the
/// maximizing lines.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub eval: ObjectiveEvaluation,
    pub terms: Vec<EdgeTerm>,
    pub theta: f64,
}

impl LocalModel {
    pub fn new(model: &GridModel, p: &DVector<f64>, r: f64, opts: &LocalOptions) -> Result<Self> {
        let eval = model.evaluate(p, r)?;
        Self::from_evaluation(model, eval, opts)
    }

    pub fn from_evaluation(model: &GridModel, eval: ObjectiveEvaluation, opts: &LocalOptions) -> Result<Self> {
        if !(0.0..=1.0).contains(&opts.theta) {
            return Err(GridError::InvalidConfig(format!("theta must lie in [0, 1], got {}", opts.theta)));
        }
        let dim = model.dim();
        let derivs = if eval.r > 0.0 {
            Some(sigma_derivatives(
                model,
                &eval.p,
                &SigmaConfig { delta_fd: opts.delta_fd, second_order: opts.second_order },
            )?)
        } else {
            None
        };
        let a_sync = &model.linearization().a_sync;
        let terms = eval
            .i_max
            .iter()
            .map(|&k| EdgeTerm {
                edge: k,
                sine: eval.sines[k],
                a: a_sync.row(k).transpose(),
                grad_sigma: derivs.as_ref().map(|d| d.grad(k)).unwrap_or_else(|| DVector::zeros(dim)),
                hess_sigma: if opts.second_order {
                    Some(derivs.as_ref().map(|d| d.hess_sigma[k].clone()).unwrap_or_else(|| DMatrix::zeros(dim, dim)))
                } else {
                    None
                },
                zero: eval.sines[k].abs() <= ZERO_MEAN,
            })
            .collect();
        Ok(Self { eval, terms, theta: opts.theta })
    }

    pub fn r(&self) -> f64 {
        self.eval.r
    }

    pub fn f(&self) -> f64 {
        self.eval.f
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.eval.p
    }

    fn slope(term: &EdgeTerm) -> f64 {
        term.sine.signum() / (1.0 - term.sine * term.sine).sqrt()
    }

    /// Derivative of one maximizing line along `v`.
    pub fn term_fprime(&self, term: &EdgeTerm, v: &DVector<f64>) -> f64 {
        let av = term.a.dot(v);
        let mean = if term.zero { av.abs() } else { Self::slope(term) * av };
        mean + self.r() * term.grad_sigma.dot(v)
    }

    /// `f'(p, v)`; no feasibility check.
    pub fn fprime(&self, v: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| self.term_fprime(t, v)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn active_terms(&self, v: &DVector<f64>) -> Vec<&EdgeTerm> {
        let values: Vec<f64> = self.terms.iter().map(|t| self.term_fprime(t, v)).collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = MAX_SET * best.abs().max(1.0);
        self.terms.iter().zip(values).filter(|(_, x)| *x >= best - tol).map(|(t, _)| t).collect()
    }

    fn term_gradient(&self, term: &EdgeTerm, v: Option<&DVector<f64>>) -> DVector<f64> {
        let mean_factor = if term.zero {
            match v.map(|v| term.a.dot(v)) {
                Some(av) if av.abs() > ZERO_MEAN * term.a.norm().max(1.0) => av.signum(),
                _ => 2.0 * self.theta - 1.0,
            }
        } else {
            Self::slope(term)
        };
        &term.a * mean_factor + &term.grad_sigma * self.r()
    }

    /// A subgradient of the convex map `v -> f'(p, v)` at `v`, taken from the
    /// lowest-index line attaining the max.
    pub fn fprime_subgradient(&self, v: &DVector<f64>) -> DVector<f64> {
        let term = self.active_terms(v)[0];
        self.term_gradient(term, Some(v))
    }

    /// `f''(p, v)`. Requires the model to be built with second order.
    pub fn fsecond(&self, v: &DVector<f64>) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for term in self.active_terms(v) {
            let hess = term
                .hess_sigma
                .as_ref()
                .ok_or_else(|| GridError::InvalidConfig("local model was built without Hessians".into()))?;
            let curvature = self.r() * (v.transpose() * hess * v)[0];
            let mean = if term.zero {
                0.0
            } else {
                let c = 1.0 - term.sine * term.sine;
                term.sine.abs() / (c * c.sqrt()) * term.a.dot(v).powi(2)
            };
            best = best.max(mean + curvature);
        }
        Ok(best)
    }

    /// Element of the generalized gradient of `f` at `p` from the lowest maximizing line.
    pub fn subgradient(&self) -> Subgradient {
        let term = &self.terms[0];
        Subgradient { g: self.term_gradient(term, None), theta: self.theta, source_edge: term.edge }
    }
}

fn check_direction(model: &GridModel, p: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
    if v.len() != model.dim() {
        return Err(GridError::DimensionMismatch { expected: model.dim(), got: v.len() });
    }
    let violation = model.polytope().violation(&(p + v))?;
    if violation > MEMBERSHIP {
        return Err(GridError::InfeasibleDirection { violation });
    }
    Ok(())
}

/// `f'(p, v)`; `p + v` must be feasible.
pub fn first_directional_derivative(model: &GridModel, p: &DVector<f64>, v: &DVector<f64>, r: f64) -> Result<f64> {
    let local = LocalModel::new(model, p, r, &LocalOptions { second_order: false, ..Default::default() })?;
    check_direction(model, p, v)?;
    Ok(local.fprime(v))
}

/// `f''(p, v)` (unhalved); `p + v` must be feasible.
pub fn second_directional_derivative(model: &GridModel, p: &DVector<f64>, v: &DVector<f64>, r: f64) -> Result<f64> {
    let local = LocalModel::new(model, p, r, &LocalOptions::default())?;
    check_direction(model, p, v)?;
    local.fsecond(v)
}

/// One element of the generalized gradient of `f` at `p`.
pub fn generalized_subgradient(model: &GridModel, p: &DVector<f64>, r: f64, theta: f64) -> Result<Subgradient> {
    let local = LocalModel::new(model, p, r, &LocalOptions { theta, second_order: false, ..Default::default() })?;
    Ok(local.subgradient())
}
