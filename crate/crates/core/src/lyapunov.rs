//! Continuous Lyapunov equations `A X + X A^T + Q = 0` with Hurwitz `A`.
//!
//! [`LyapunovSolver`] factors `A` once (real Schur form) and then solves for any
//! number of right-hand sides by Bartels-Stewart back substitution. The
//! vectorized Kronecker solve [`solve_vectorized`] is kept as an independent
//! reference path.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{GridError, Result};
use crate::tolerances::{HURWITZ_MARGIN, LYAPUNOV_RESIDUAL, SYMMETRY};

/// A Lyapunov equation `A X + X A^T + Q = 0`.
#[derive(Debug, Clone)]
pub struct LyapunovProblem {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Solves one equation with a fresh factorization.
pub fn solve_lyapunov(problem: &LyapunovProblem) -> Result<DMatrix<f64>> {
    LyapunovSolver::new(&problem.a)?.solve(&problem.q)
}

/// `||A X + X A^T + Q||_F`.
pub fn residual(a: &DMatrix<f64>, x: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let ax = a * x;
    (&ax + ax.transpose() + q).norm()
}

fn check_symmetric(q: &DMatrix<f64>) -> Result<()> {
    let asym = (q - q.transpose()).norm();
    if asym > SYMMETRY * q.norm().max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(GridError::InvalidConfig(format!(
            "Lyapunov right-hand side is not symmetric (asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// A Hurwitz matrix together with its real Schur factorization `A = U T U^T`.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    a: DMatrix<f64>,
    u: DMatrix<f64>,
    t: DMatrix<f64>,
    /// Diagonal blocks of `T` as (start, size).
    blocks: Vec<(usize, usize)>,
}

impl LyapunovSolver {
    /// Factors `a`, failing if it is not square or not Hurwitz with margin [`HURWITZ_MARGIN`].
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(GridError::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        let n = a.nrows();
        let schur = Schur::try_new(a.clone(), 1e-15, 10_000)
            .ok_or_else(|| GridError::Eigen("real Schur iteration did not converge".into()))?;
        let (u, mut t) = schur.unpack();
        let scale = a.amax().max(f64::MIN_POSITIVE);
        for k in 0..n.saturating_sub(1) {
            if t[(k + 1, k)].abs() <= 1e-15 * scale {
                t[(k + 1, k)] = 0.0;
            }
        }
        for i in 0..n {
            for j in 0..i.saturating_sub(1) {
                t[(i, j)] = 0.0;
            }
        }
        let mut blocks = Vec::new();
        let mut k = 0;
        while k < n {
            if k + 1 < n && t[(k + 1, k)] != 0.0 {
                if k + 2 < n && t[(k + 2, k + 1)] != 0.0 {
                    return Err(GridError::Eigen("Schur form has an unreduced 3x3 block".into()));
                }
                blocks.push((k, 2));
                k += 2;
            } else {
                blocks.push((k, 1));
                k += 1;
            }
        }
        let solver = Self { a: a.clone(), u, t, blocks };
        let (re, im) = solver.rightmost_eigenvalue();
        if re >= -HURWITZ_MARGIN {
            return Err(GridError::NotHurwitz { re, im, margin: HURWITZ_MARGIN });
        }
        Ok(solver)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Eigenvalue with the largest real part, read from the Schur blocks.
    pub fn rightmost_eigenvalue(&self) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &(s, size) in &self.blocks {
            let candidates = if size == 1 {
                vec![(self.t[(s, s)], 0.0)]
            } else {
                let (a, b, c, d) = (self.t[(s, s)], self.t[(s, s + 1)], self.t[(s + 1, s)], self.t[(s + 1, s + 1)]);
                let half = 0.5 * (a - d);
                let disc = half * half + b * c;
                let mid = 0.5 * (a + d);
                if disc >= 0.0 {
                    vec![(mid + disc.sqrt(), 0.0), (mid - disc.sqrt(), 0.0)]
                } else {
                    vec![(mid, (-disc).sqrt())]
                }
            };
            for c in candidates {
                if c.0 > best.0 {
                    best = c;
                }
            }
        }
        best
    }

    /// Solves `A X + X A^T + Q = 0` and returns the symmetrized `X`.
    ///
    /// One step of iterative refinement is taken when the first pass misses the
    /// residual tolerance.
    pub fn solve(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if q.nrows() != self.dim() || q.ncols() != self.dim() {
            return Err(GridError::DimensionMismatch { expected: self.dim(), got: q.nrows() });
        }
        check_symmetric(q)?;
        let tolerance = LYAPUNOV_RESIDUAL * q.norm().max(1.0);
        let mut x = self.solve_unchecked(q);
        let mut res = residual(&self.a, &x, q);
        if res > tolerance {
            let ax = &self.a * &x;
            let r = &ax + ax.transpose() + q;
            x += self.solve_unchecked(&r);
            res = residual(&self.a, &x, q);
        }
        if res > tolerance {
            return Err(GridError::LyapunovResidual { residual: res, tolerance });
        }
        Ok(x)
    }

    /// Back substitution without the residual contract.
    pub fn solve_unchecked(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let f = self.u.transpose() * q * &self.u;
        let mut y = DMatrix::<f64>::zeros(n, n);
        let t = &self.t;
        for bi in (0..self.blocks.len()).rev() {
            let (si, pi) = self.blocks[bi];
            for bj in (0..self.blocks.len()).rev() {
                let (sj, qj) = self.blocks[bj];
                // T_ii Y_ij + Y_ij T_jj^T = -F_ij - sum_{k>i} T_ik Y_kj - sum_{l>j} Y_il T_jl^T
                let mut rhs = -f.view((si, sj), (pi, qj)).into_owned();
                let tail_i = si + pi;
                if tail_i < n {
                    rhs -= t.view((si, tail_i), (pi, n - tail_i)) * y.view((tail_i, sj), (n - tail_i, qj));
                }
                let tail_j = sj + qj;
                if tail_j < n {
                    rhs -= y.view((si, tail_j), (pi, n - tail_j)) * t.view((sj, tail_j), (qj, n - tail_j)).transpose();
                }
                let block = solve_small_sylvester(
                    &t.view((si, si), (pi, pi)).into_owned(),
                    &t.view((sj, sj), (qj, qj)).into_owned(),
                    &rhs,
                );
                y.view_mut((si, sj), (pi, qj)).copy_from(&block);
            }
        }
        let x = &self.u * y * self.u.transpose();
        (&x + x.transpose()) * 0.5
    }
}

/// Solves `P Y + Y R^T = C` for blocks of size at most two.
fn solve_small_sylvester(p: &DMatrix<f64>, r: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = (p.nrows(), r.nrows());
    if m == 1 && k == 1 {
        return DMatrix::from_element(1, 1, c[(0, 0)] / (p[(0, 0)] + r[(0, 0)]));
    }
    let op = DMatrix::<f64>::identity(k, k).kronecker(p) + r.kronecker(&DMatrix::identity(m, m));
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = op.lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(m * k, f64::NAN));
    DMatrix::from_column_slice(m, k, sol.as_slice())
}

/// Reference path: solves `(I (x) A + A (x) I) vec(X) = -vec(Q)` by dense LU.
/// Cost grows as `n^6`, so keep it to small systems.
pub fn solve_vectorized(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.nrows() != n || q.ncols() != n {
        return Err(GridError::DimensionMismatch { expected: n, got: q.nrows() });
    }
    let id = DMatrix::<f64>::identity(n, n);
    let op = id.kronecker(a) + a.kronecker(&id);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GridError::Eigen("vectorized Lyapunov operator is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}
