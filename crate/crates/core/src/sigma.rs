//! Gradient and Hessian of the line standard deviations.
//!
//! Along a probe direction `mu` every matrix of the reduced system is expanded to
//! second order in the step `delta`. The weights have closed-form coefficients;
//! the eigenbasis `U` is differentiated by central differences of exact
//! eigen-decompositions. The covariance coefficients then follow from three
//! Lyapunov equations sharing the same system matrix:
//!
//! ```text
//! J0 Q0 + Q0 J0' + K0 K0'                                          = 0
//! J0 Q1 + Q1 J0' + J1 Q0 + Q0 J1' + K0 K1' + K1 K0'                = 0
//! J0 Q2 + Q2 J0' + J2 Q0 + Q0 J2' + J1 Q1 + Q1 J1' + K0 K2' + K1 K1' + K2 K0' = 0
//! ```
//!
//! With `V(delta) = diag(C Q C')` this gives `mu' grad V` as the first
//! coefficient and `mu' Hess V mu` as twice the second. Off-diagonal Hessian
//! entries come from probes along `e_k + e_j`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{GridError, Result};
use crate::lyapunov::LyapunovSolver;
use crate::objective::{
    assemble_c, assemble_j, assemble_k, damping_in_basis, diag_product, scaled_stiffness, sorted_eigen,
    GridModel, ReducedSystem,
};
use crate::tolerances::{DELTA_FD, SIGMA_FLOOR, SPECTRAL_GAP};

/// Knobs of the derivative engine.
#[derive(Debug, Clone, Copy)]
pub struct SigmaConfig {
    /// Central-difference step for the eigenbasis.
    pub delta_fd: f64,
    /// Compute Hessians as well as gradients.
    pub second_order: bool,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self { delta_fd: DELTA_FD, second_order: true }
    }
}

/// Taylor coefficients of the diagonal of `W(p + delta mu)`, given the line sines
/// `x` at `p` and their rates `a = A mu`.
pub fn weight_coefficients(weights: &DVector<f64>, x: &DVector<f64>, a: &DVector<f64>) -> [DVector<f64>; 3] {
    let n = x.len();
    let c = DVector::from_fn(n, |k, _| (1.0 - x[k] * x[k]).sqrt());
    let w0 = DVector::from_fn(n, |k, _| weights[k] * c[k]);
    let w1 = DVector::from_fn(n, |k, _| -weights[k] * x[k] * a[k] / c[k]);
    let w2 = DVector::from_fn(n, |k, _| -0.5 * weights[k] * a[k] * a[k] / (c[k] * c[k] * c[k]));
    [w0, w1, w2]
}

/// `W^(0)`, `W^(1)`, `W^(2)` at `p` along `mu`, as diagonal matrices.
pub fn weight_expansion(model: &GridModel, p: &DVector<f64>, mu: &DVector<f64>) -> Result<[DMatrix<f64>; 3]> {
    let x = model.safe_sines(p)?;
    let a = &model.linearization().a_sync * mu;
    let w = weight_coefficients(&model.linearization().weights, &x, &a);
    Ok(w.map(|d| DMatrix::from_diagonal(&d)))
}

/// Reorders and sign-flips the columns of `u` to match `reference`.
pub fn align_columns(reference: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = reference.ncols();
    let overlap = reference.transpose() * u;
    let mut used = vec![false; n];
    let mut out = DMatrix::zeros(u.nrows(), n);
    for j in 0..n {
        let mut best = (0, -1.0);
        for l in (0..n).filter(|&l| !used[l]) {
            if overlap[(j, l)].abs() > best.1 {
                best = (l, overlap[(j, l)].abs());
            }
        }
        used[best.0] = true;
        let sign = if overlap[(j, best.0)] < 0.0 { -1.0 } else { 1.0 };
        out.set_column(j, &(u.column(best.0) * sign));
    }
    out
}

/// Rejects spectra whose nonzero eigenvalues are too close to separate eigenvectors.
pub fn check_spectral_gaps(values: &DVector<f64>) -> Result<()> {
    for i in 1..values.len().saturating_sub(1) {
        let gap = values[i + 1] - values[i];
        if gap < SPECTRAL_GAP {
            return Err(GridError::DegenerateSpectrum {
                index: i + 1,
                next: i + 2,
                lower: values[i],
                upper: values[i + 1],
                gap: SPECTRAL_GAP,
            });
        }
    }
    Ok(())
}

/// Decision-fixed data shared by every probe direction at one point.
#[derive(Debug, Clone)]
pub struct SigmaPoint<'a> {
    model: &'a GridModel,
    pub p: DVector<f64>,
    pub sines: DVector<f64>,
    pub system: ReducedSystem,
    pub stiffness: DMatrix<f64>,
    solver: LyapunovSolver,
    pub q0: DMatrix<f64>,
    pub variance: DVector<f64>,
    pub sigma: DVector<f64>,
    pub delta_fd: f64,
}

/// All second-order intermediates of one probe direction.
#[derive(Debug, Clone)]
pub struct Probe {
    pub mu: DVector<f64>,
    pub w: [DVector<f64>; 3],
    pub u: [DMatrix<f64>; 3],
    pub j: [DMatrix<f64>; 3],
    pub k: [DMatrix<f64>; 3],
    pub c: [DMatrix<f64>; 3],
    /// `Q2` is zero when only first order was requested.
    pub q: [DMatrix<f64>; 3],
    /// `mu' grad V_k` for every line.
    pub v1: DVector<f64>,
    /// Second Taylor coefficient of `V_k`, i.e. `mu' Hess V_k mu / 2`.
    pub v2: DVector<f64>,
}

impl<'a> SigmaPoint<'a> {
    pub fn new(model: &'a GridModel, p: &DVector<f64>, delta_fd: f64) -> Result<Self> {
        if !(delta_fd > 0.0 && delta_fd.is_finite()) {
            return Err(GridError::InvalidConfig(format!("finite-difference step must be positive, got {delta_fd}")));
        }
        let sines = model.safe_sines(p)?;
        let system = model.reduce_at_sines(&sines)?;
        check_spectral_gaps(&system.stiffness_eigenvalues)?;
        let stiffness = scaled_stiffness(model.linearization(), &system.weights_p);
        let (solver, q0, variance) = model.covariance(&system)?;
        let sigma = variance.map(|v| v.max(0.0).sqrt());
        Ok(Self { model, p: p.clone(), sines, system, stiffness, solver, q0, variance, sigma, delta_fd })
    }

    /// Eigenbasis at the sines `x + t a`, aligned to `U(0)`.
    fn basis_at(&self, a: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let x = &self.sines + a * t;
        self.model.check_saturation(&x)?;
        let w = self.model.effective_weights(&x);
        let s = scaled_stiffness(self.model.linearization(), &w);
        let (values, u) = sorted_eigen(&s)?;
        check_spectral_gaps(&values)?;
        Ok(align_columns(&self.system.u_p, &u))
    }

    /// `U^(0)`, `U^(1)`, `U^(2)` for sine rates `a`.
    fn transform(&self, a: &DVector<f64>) -> Result<[DMatrix<f64>; 3]> {
        let d = self.delta_fd;
        let plus = self.basis_at(a, d)?;
        let minus = self.basis_at(a, -d)?;
        let u0 = self.system.u_p.clone();
        let u1 = (&plus - &minus) / (2.0 * d);
        let u2 = (&plus - &u0 * 2.0 + &minus) / (2.0 * d * d);
        Ok([u0, u1, u2])
    }

    pub fn transform_expansion(&self, mu: &DVector<f64>) -> Result<[DMatrix<f64>; 3]> {
        let a = &self.model.linearization().a_sync * mu;
        self.transform(&a)
    }

    /// Runs the cascade along `mu`.
    pub fn probe(&self, mu: &DVector<f64>, second_order: bool) -> Result<Probe> {
        let lin = self.model.linearization();
        let n = self.model.network().n_nodes();
        let a = &lin.a_sync * mu;
        let w = weight_coefficients(&lin.weights, &self.sines, &a);
        let s0 = &self.stiffness;
        let s1 = scaled_stiffness(lin, &w[1]);
        let s2 = scaled_stiffness(lin, &w[2]);
        let u = self.transform(&a)?;
        let [u0, u1, u2] = &u;

        let t = u1.transpose() * s0 * u0;
        let stiff1 = &t + t.transpose() + u0.transpose() * &s1 * u0;
        let d = damping_in_basis(lin, u1, u0);
        let damp1 = &d + d.transpose();
        let j1 = assemble_j(n, &stiff1, &damp1, false);

        let t2 = u2.transpose() * s0 * u0;
        let x1 = u1.transpose() * &s1 * u0;
        let stiff2 = &t2 + t2.transpose() + u0.transpose() * &s2 * u0 + &x1 + x1.transpose() + u1.transpose() * s0 * u1;
        let d2 = damping_in_basis(lin, u2, u0);
        let damp2 = &d2 + d2.transpose() + damping_in_basis(lin, u1, u1);
        let j2 = assemble_j(n, &stiff2, &damp2, false);

        let j0 = self.system.j_d.clone();
        let k0 = self.system.k_d.clone();
        let k1 = assemble_k(lin, u1);
        let k2 = assemble_k(lin, u2);
        let c0 = self.system.c_d.clone();
        let c1 = assemble_c(lin, u1);
        let c2 = assemble_c(lin, u2);

        let q0 = &self.q0;
        let q1 = self.solver.solve(&symmetric_sum(&[(&j1, q0), (&k0, &k1.transpose())]))?;
        let q2 = if second_order {
            let mut rhs = symmetric_sum(&[(&j2, q0), (&j1, &q1), (&k0, &k2.transpose())]);
            rhs += &k1 * k1.transpose();
            self.solver.solve(&((&rhs + rhs.transpose()) * 0.5))?
        } else {
            DMatrix::zeros(q0.nrows(), q0.ncols())
        };

        let v1 = diag_product(&c1, q0, &c0) * 2.0 + diag_product(&c0, &q1, &c0);
        let v2 = if second_order {
            diag_product(&c1, &q1, &c0) * 2.0
                + diag_product(&c1, q0, &c1)
                + diag_product(&c2, q0, &c0) * 2.0
                + diag_product(&c0, &q2, &c0)
        } else {
            DVector::zeros(v1.len())
        };
        Ok(Probe {
            mu: mu.clone(),
            w,
            u,
            j: [j0, j1, j2],
            k: [k0, k1, k2],
            c: [c0, c1, c2],
            q: [q0.clone(), q1, q2],
            v1,
            v2,
        })
    }
}

/// `sum_i (a_i b_i + (a_i b_i)')`.
fn symmetric_sum(terms: &[(&DMatrix<f64>, &DMatrix<f64>)]) -> DMatrix<f64> {
    let mut out = terms[0].0 * terms[0].1;
    for (a, b) in &terms[1..] {
        out += *a * *b;
    }
    &out + out.transpose()
}

/// Solves the three-equation cascade from scratch for given expansions of `J_d` and `K_d`.
pub fn cascade_solve(j: &[DMatrix<f64>; 3], k: &[DMatrix<f64>; 3]) -> Result<[DMatrix<f64>; 3]> {
    let solver = LyapunovSolver::new(&j[0])?;
    let kk = &k[0] * k[0].transpose();
    let q0 = solver.solve(&((&kk + kk.transpose()) * 0.5))?;
    let q1 = solver.solve(&symmetric_sum(&[(&j[1], &q0), (&k[0], &k[1].transpose())]))?;
    let mut rhs = symmetric_sum(&[(&j[2], &q0), (&j[1], &q1), (&k[0], &k[2].transpose())]);
    rhs += &k[1] * k[1].transpose();
    let q2 = solver.solve(&((&rhs + rhs.transpose()) * 0.5))?;
    Ok([q0, q1, q2])
}

/// Variance and standard-deviation derivatives of every line at one point.
#[derive(Debug, Clone)]
pub struct SigmaDerivatives {
    pub variance: DVector<f64>,
    pub sigma: DVector<f64>,
    /// Row `k` is the gradient of `V_k`.
    pub grad_variance: DMatrix<f64>,
    /// Row `k` is the gradient of `sigma_k`.
    pub grad_sigma: DMatrix<f64>,
    /// Empty unless second order was requested.
    pub hess_variance: Vec<DMatrix<f64>>,
    pub hess_sigma: Vec<DMatrix<f64>>,
}

impl SigmaDerivatives {
    pub fn grad(&self, k: usize) -> DVector<f64> {
        self.grad_sigma.row(k).transpose()
    }

    pub fn has_hessians(&self) -> bool {
        !self.hess_sigma.is_empty()
    }
}

fn unit(dim: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(dim);
    e[k] = 1.0;
    e
}

/// Runs all probes at `point` and returns them with the assembled variance derivatives.
fn collect(point: &SigmaPoint, second_order: bool) -> Result<(Vec<Probe>, DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let dim = point.p.len();
    let n_edges = point.sigma.len();
    let mut probes = Vec::new();
    let mut grad = DMatrix::zeros(n_edges, dim);
    let mut hess = if second_order { vec![DMatrix::zeros(dim, dim); n_edges] } else { Vec::new() };
    for k in 0..dim {
        let probe = point.probe(&unit(dim, k), second_order)?;
        grad.set_column(k, &probe.v1);
        for (e, h) in hess.iter_mut().enumerate() {
            h[(k, k)] = 2.0 * probe.v2[e];
        }
        probes.push(probe);
    }
    if second_order {
        for k in 0..dim {
            for j in k + 1..dim {
                let probe = point.probe(&(unit(dim, k) + unit(dim, j)), true)?;
                for (e, h) in hess.iter_mut().enumerate() {
                    let off = (2.0 * probe.v2[e] - h[(k, k)] - h[(j, j)]) * 0.5;
                    h[(k, j)] = off;
                    h[(j, k)] = off;
                }
                probes.push(probe);
            }
        }
    }
    Ok((probes, grad, hess))
}

/// `(grad sigma, Hess sigma)` from `(grad V, Hess V)` for one line.
fn to_sigma_level(
    edge: usize,
    sigma: f64,
    g: &DVector<f64>,
    h: Option<&DMatrix<f64>>,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    if sigma <= SIGMA_FLOOR {
        // a line without any noise reaching it has sigma identically zero
        if g.iter().all(|x| *x == 0.0) && h.is_none_or(|h| h.iter().all(|x| *x == 0.0)) {
            return Ok((g.clone(), h.cloned()));
        }
        return Err(GridError::VanishingSigma { edge: edge + 1, sigma });
    }
    let g1 = g / (2.0 * sigma);
    let h1 = h.map(|h| {
        let raw = (h - &g1 * g1.transpose() * 2.0) / (2.0 * sigma);
        (&raw + raw.transpose()) * 0.5
    });
    Ok((g1, h1))
}

/// Derivatives of every line's standard deviation at `p`.
pub fn sigma_derivatives(model: &GridModel, p: &DVector<f64>, cfg: &SigmaConfig) -> Result<SigmaDerivatives> {
    let point = SigmaPoint::new(model, p, cfg.delta_fd)?;
    let (_, grad_variance, hess_variance) = collect(&point, cfg.second_order)?;
    let n_edges = point.sigma.len();
    let mut grad_sigma = DMatrix::zeros(n_edges, p.len());
    let mut hess_sigma = Vec::new();
    for e in 0..n_edges {
        let g = grad_variance.row(e).transpose();
        let (g1, h1) = to_sigma_level(e, point.sigma[e], &g, hess_variance.get(e))?;
        grad_sigma.set_row(e, &g1.transpose());
        if let Some(h1) = h1 {
            hess_sigma.push(h1);
        }
    }
    Ok(SigmaDerivatives {
        variance: point.variance.clone(),
        sigma: point.sigma.clone(),
        grad_variance,
        grad_sigma,
        hess_variance,
        hess_sigma,
    })
}

/// Gradient and Hessian of one line's standard deviation with all cascade intermediates.
#[derive(Debug, Clone)]
pub struct SigmaDerivativeBundle {
    /// 0-based line index.
    pub edge: usize,
    pub sigma: f64,
    pub g1: DVector<f64>,
    pub h1: DMatrix<f64>,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    /// Unit probes first, then `e_k + e_j` for `k < j`.
    pub probes: Vec<Probe>,
    pub delta_fd: f64,
}

pub fn gradient_hessian_sigma(
    model: &GridModel,
    p: &DVector<f64>,
    edge: usize,
    delta_fd: f64,
) -> Result<SigmaDerivativeBundle> {
    if edge >= model.n_edges() {
        return Err(GridError::DimensionMismatch { expected: model.n_edges(), got: edge + 1 });
    }
    let point = SigmaPoint::new(model, p, delta_fd)?;
    let (probes, grad, hess) = collect(&point, true)?;
    let g = grad.row(edge).transpose();
    let h = hess[edge].clone();
    let (g1, h1) = to_sigma_level(edge, point.sigma[edge], &g, Some(&h))?;
    Ok(SigmaDerivativeBundle {
        edge,
        sigma: point.sigma[edge],
        g1,
        h1: h1.expect("second order requested"),
        g,
        h,
        probes,
        delta_fd,
    })
}

/// Largest relative change of any `grad sigma_k` when the eigenbasis step is halved.
/// Logs a warning above `1e-3`.
pub fn richardson_check(model: &GridModel, p: &DVector<f64>, delta_fd: f64) -> Result<f64> {
    let coarse = sigma_derivatives(model, p, &SigmaConfig { delta_fd, second_order: false })?;
    let fine = sigma_derivatives(model, p, &SigmaConfig { delta_fd: delta_fd / 2.0, second_order: false })?;
    let mut worst = 0.0f64;
    for k in 0..coarse.sigma.len() {
        let a = coarse.grad(k);
        let b = fine.grad(k);
        let scale = b.norm().max(f64::MIN_POSITIVE);
        worst = worst.max((a - b).norm() / scale);
    }
    if worst > 1e-3 {
        warn!("halving the eigenbasis step moved a sigma gradient by {worst:.2e} (relative)");
    }
    Ok(worst)
}
