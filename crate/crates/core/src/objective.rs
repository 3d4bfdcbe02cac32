//! Synchronous state, reduced stochastic linearization and the control objective.
//!
//! For a decision `p` the sine of every line's synchronous phase difference is
//! affine, `x = A p + b`. Around that state the swing dynamics become a linear
//! SDE whose zero mode (the common rotation of all angles) is removed in the
//! eigenbasis `U(p)` of the mass-scaled stiffness matrix. The stationary
//! variance of line `k` is then `V_k = (C_d Q C_d^T)(k,k)` where
//! `J_d Q + Q J_d^T + K_d K_d^T = 0`, and the objective is
//!
//! ```text
//! f(p) = max_k  asin|x_k| + r sqrt(V_k)
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::directional::{classify, CaseLabel};
use crate::error::{GridError, Result};
use crate::lyapunov::LyapunovSolver;
use crate::network::PowerNetwork;
use crate::polytope::SupplyPolytope;
use crate::tolerances::{MAX_SET, SATURATION_MARGIN, ZERO_EIGENVALUE};

/// Network-level linear algebra that does not depend on the decision.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// `n_E x (n_supply - 1)`: sensitivity of the line sines to the decision.
    pub a_sync: DMatrix<f64>,
    pub b_sync: DVector<f64>,
    /// Rows are orthonormal eigenvectors of `B W B^T`, ascending eigenvalues.
    pub u0: DMatrix<f64>,
    /// Pseudo-inverted eigenvalues; the first entry (zero mode) is 0.
    pub lambda_dag: DVector<f64>,
    /// Columns `U_i - U_{n_supply}` of `u0` for `i != n_supply`.
    pub e: DMatrix<f64>,
    pub incidence: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub inv_sqrt_inertia: DVector<f64>,
    /// `M^{-1} D` diagonal.
    pub damping_rate: DVector<f64>,
    pub noise: DVector<f64>,
}

impl Linearization {
    /// `(B W B^T)^+ = U0^T diag(lambda_dag) U0`.
    pub fn laplacian_pinv(&self) -> DMatrix<f64> {
        self.u0.transpose() * DMatrix::from_diagonal(&self.lambda_dag) * &self.u0
    }

    /// `B^T M^{-1/2}`.
    pub fn scaled_incidence_t(&self) -> DMatrix<f64> {
        let mut out = self.incidence.transpose();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= self.inv_sqrt_inertia[j];
        }
        out
    }
}

/// Builds the decision-independent matrices.
pub fn build_linearization(net: &PowerNetwork) -> Result<Linearization> {
    let n = net.n_nodes();
    let ns = net.n_supply();
    let dim = net.decision_dim();
    let incidence = net.incidence_matrix();
    let laplacian = net.laplacian();
    let eig = sorted_eigen(&laplacian)?;
    let lmax = eig.0.max().abs().max(f64::MIN_POSITIVE);
    let zeros = eig.0.iter().filter(|l| l.abs() <= ZERO_EIGENVALUE * lmax).count();
    if zeros != 1 {
        return Err(GridError::Eigen(format!(
            "Laplacian has {zeros} near-zero eigenvalues; expected exactly one"
        )));
    }
    let lambda_dag = DVector::from_fn(n, |i, _| if i == 0 { 0.0 } else { 1.0 / eig.0[i] });
    let u0 = eig.1.transpose();
    let pivot = ns - 1;
    let mut e = DMatrix::zeros(n, n - 1);
    let mut col = 0;
    for i in 0..n {
        if i == pivot {
            continue;
        }
        let diff = u0.column(i) - u0.column(pivot);
        e.set_column(col, &diff);
        col += 1;
    }
    let left = incidence.transpose() * u0.transpose() * DMatrix::from_diagonal(&lambda_dag);
    // columns 0..dim of e are the supply differences, the rest the demand ones
    let a_sync = &left * e.columns(0, dim);
    let demand = DVector::from_iterator(net.n_demand(), net.demand().iter().map(|d| -d));
    let b_sync = &left * e.columns(dim, n - ns) * demand;

    let inertia = net.inertia();
    Ok(Linearization {
        a_sync,
        b_sync,
        u0,
        lambda_dag,
        e,
        incidence,
        weights: net.weights(),
        inv_sqrt_inertia: DVector::from_iterator(n, inertia.iter().map(|m| 1.0 / m.sqrt())),
        damping_rate: DVector::from_iterator(n, net.damping().iter().zip(inertia).map(|(d, m)| d / m)),
        noise: DVector::from_column_slice(net.noise()),
    })
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending and
/// eigenvectors as matching columns.
pub(crate) fn sorted_eigen(s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    let eig = SymmetricEigen::try_new(s.clone(), 1e-15, 10_000)
        .ok_or_else(|| GridError::Eigen("symmetric eigen-iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Reduced state-space at one decision. State is `(y_2..y_n, z_1..z_n)`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub j_d: DMatrix<f64>,
    pub k_d: DMatrix<f64>,
    pub c_d: DMatrix<f64>,
    /// Columns are the eigenvectors of the scaled stiffness matrix, ascending.
    pub u_p: DMatrix<f64>,
    pub stiffness_eigenvalues: DVector<f64>,
    /// Diagonal of `W(p)`.
    pub weights_p: DVector<f64>,
}

/// Assembles `J_d`, `K_d`, `C_d` from a stiffness `U^T S U` and damping `U^T M^{-1} D U`
/// expressed in some basis `u`.
pub(crate) fn assemble_j(n: usize, uts_u: &DMatrix<f64>, utd_u: &DMatrix<f64>, constant: bool) -> DMatrix<f64> {
    let size = 2 * n - 1;
    let mut j = DMatrix::zeros(size, size);
    if constant {
        for r in 0..n - 1 {
            j[(r, n - 1 + r + 1)] = 1.0;
        }
    }
    j.view_mut((n - 1, 0), (n, n - 1)).copy_from(&(-uts_u.columns(1, n - 1)));
    j.view_mut((n - 1, n - 1), (n, n)).copy_from(&(-utd_u));
    j
}

pub(crate) fn assemble_k(lin: &Linearization, u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let mut scaled = u.transpose();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= lin.inv_sqrt_inertia[j] * lin.noise[j];
    }
    let mut k = DMatrix::zeros(2 * n - 1, n);
    k.view_mut((n - 1, 0), (n, n)).copy_from(&scaled);
    k
}

pub(crate) fn assemble_c(lin: &Linearization, u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let projected = lin.scaled_incidence_t() * u;
    let mut c = DMatrix::zeros(projected.nrows(), 2 * n - 1);
    c.view_mut((0, 0), (projected.nrows(), n - 1)).copy_from(&projected.columns(1, n - 1));
    c
}

/// `M^{-1/2} B diag(w) B^T M^{-1/2}`.
pub(crate) fn scaled_stiffness(lin: &Linearization, w: &DVector<f64>) -> DMatrix<f64> {
    let bt = lin.scaled_incidence_t();
    let mut weighted = bt.clone();
    for (k, mut row) in weighted.row_iter_mut().enumerate() {
        row *= w[k];
    }
    let s = bt.transpose() * weighted;
    (&s + s.transpose()) * 0.5
}

/// `diag(D/M)` conjugated by `u`.
pub(crate) fn damping_in_basis(lin: &Linearization, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= lin.damping_rate[i];
    }
    a.transpose() * scaled
}

/// Everything needed to evaluate the objective on one network.
#[derive(Debug, Clone)]
pub struct GridModel {
    net: PowerNetwork,
    lin: Linearization,
    poly: SupplyPolytope,
}

impl GridModel {
    pub fn new(net: PowerNetwork) -> Result<Self> {
        let lin = build_linearization(&net)?;
        let poly = SupplyPolytope::new(&net)?;
        Ok(Self { net, lin, poly })
    }

    pub fn network(&self) -> &PowerNetwork {
        &self.net
    }

    pub fn linearization(&self) -> &Linearization {
        &self.lin
    }

    pub fn polytope(&self) -> &SupplyPolytope {
        &self.poly
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    pub fn n_edges(&self) -> usize {
        self.net.n_edges()
    }

    fn check_dim(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.dim() {
            return Err(GridError::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        Ok(())
    }

    /// `A p + b`, the sines of the synchronous phase differences.
    pub fn sines(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(p)?;
        Ok(&self.lin.a_sync * p + &self.lin.b_sync)
    }

    /// Sines, failing if any line is within [`SATURATION_MARGIN`] of `|sin| = 1`.
    pub fn safe_sines(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.sines(p)?;
        self.check_saturation(&x)?;
        Ok(x)
    }

    pub(crate) fn check_saturation(&self, x: &DVector<f64>) -> Result<()> {
        for (k, &v) in x.iter().enumerate() {
            if !(v.abs() < 1.0 - SATURATION_MARGIN) {
                let e = self.net.edges()[k];
                return Err(GridError::Saturation { edge: k + 1, from: e.from + 1, to: e.to + 1, value: v });
            }
        }
        Ok(())
    }

    /// Edge weights `w_k sqrt(1 - x_k^2)` of the linearized dynamics.
    pub fn effective_weights(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |k, _| self.lin.weights[k] * (1.0 - x[k] * x[k]).sqrt())
    }

    /// Reduced Hurwitz system at `p`.
    pub fn reduce(&self, p: &DVector<f64>) -> Result<ReducedSystem> {
        let x = self.safe_sines(p)?;
        self.reduce_at_sines(&x)
    }

    pub(crate) fn reduce_at_sines(&self, x: &DVector<f64>) -> Result<ReducedSystem> {
        let n = self.net.n_nodes();
        let weights_p = self.effective_weights(x);
        let s = scaled_stiffness(&self.lin, &weights_p);
        let (values, u) = sorted_eigen(&s)?;
        let scale = values.amax().max(f64::MIN_POSITIVE);
        if values[0].abs() > 1e-8 * scale.max(1.0) || values[1] <= ZERO_EIGENVALUE * scale {
            return Err(GridError::Eigen(format!(
                "scaled stiffness spectrum does not start with a single zero ({}, {})",
                values[0], values[1]
            )));
        }
        let uts_u = u.transpose() * &s * &u;
        let utd_u = damping_in_basis(&self.lin, &u, &u);
        Ok(ReducedSystem {
            j_d: assemble_j(n, &uts_u, &utd_u, true),
            k_d: assemble_k(&self.lin, &u),
            c_d: assemble_c(&self.lin, &u),
            u_p: u,
            stiffness_eigenvalues: values,
            weights_p,
        })
    }

    /// Stationary covariance of the reduced state and per-line variances.
    pub fn covariance(&self, sys: &ReducedSystem) -> Result<(LyapunovSolver, DMatrix<f64>, DVector<f64>)> {
        let solver = LyapunovSolver::new(&sys.j_d)?;
        let kk = &sys.k_d * sys.k_d.transpose();
        let q = solver.solve(&((&kk + kk.transpose()) * 0.5))?;
        let variance = diag_product(&sys.c_d, &q, &sys.c_d);
        Ok((solver, q, variance))
    }

    /// Per-line variances at `p`.
    pub fn variances(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let sys = self.reduce(p)?;
        Ok(self.covariance(&sys)?.2)
    }

    /// Standard deviations at `p`.
    pub fn sigmas(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.variances(p)?.map(|v| v.max(0.0).sqrt()))
    }

    /// Full evaluation at `p`. `p` must lie in the polytope.
    pub fn evaluate(&self, p: &DVector<f64>, r: f64) -> Result<ObjectiveEvaluation> {
        self.check_dim(p)?;
        self.poly.require(p)?;
        self.evaluate_unchecked(p, r)
    }

    /// Evaluation without the membership check, for points just outside the polytope
    /// (finite-difference probes).
    pub fn evaluate_unchecked(&self, p: &DVector<f64>, r: f64) -> Result<ObjectiveEvaluation> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(GridError::InvalidConfig(format!("risk weight must be nonnegative, got {r}")));
        }
        let x = self.safe_sines(p)?;
        let mean = x.map(|v| v.abs().asin());
        let (variance, sigma) = if r == 0.0 {
            let zeros = DVector::zeros(x.len());
            (zeros.clone(), zeros)
        } else {
            let sys = self.reduce_at_sines(&x)?;
            let variance = self.covariance(&sys)?.2;
            let sigma = variance.map(|v| v.max(0.0).sqrt());
            (variance, sigma)
        };
        Ok(ObjectiveEvaluation::assemble(p.clone(), x, mean, variance, sigma, r))
    }
}

/// `diag(a q b^T)` without forming the product.
pub(crate) fn diag_product(a: &DMatrix<f64>, q: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let aq = a * q;
    DVector::from_fn(a.nrows(), |k, _| aq.row(k).dot(&b.row(k)))
}

/// Objective value and its per-line parts at one decision.
#[derive(Debug, Clone)]
pub struct ObjectiveEvaluation {
    pub p: DVector<f64>,
    /// `A p + b`.
    pub sines: DVector<f64>,
    /// `asin|A p + b|`.
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub sigma: DVector<f64>,
    pub f_k: DVector<f64>,
    pub f: f64,
    pub r: f64,
    /// Lines whose `f_k` is within the max-set tolerance of `f`, ascending.
    pub i_max: Vec<usize>,
    pub case: CaseLabel,
}

impl ObjectiveEvaluation {
    fn assemble(
        p: DVector<f64>,
        sines: DVector<f64>,
        mean: DVector<f64>,
        variance: DVector<f64>,
        sigma: DVector<f64>,
        r: f64,
    ) -> Self {
        let f_k = &mean + &sigma * r;
        let f = f_k.max();
        let tol = MAX_SET * f.abs().max(1.0);
        let i_max = (0..f_k.len()).filter(|&k| f_k[k] >= f - tol).collect();
        let mut out = Self {
            p,
            sines,
            mean,
            variance,
            sigma,
            f_k,
            f,
            r,
            i_max,
            case: CaseLabel::placeholder(),
        };
        out.case = classify(&out);
        out
    }

    /// Lowest-index maximizing line.
    pub fn argmax(&self) -> usize {
        self.i_max[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lyapunov::{residual, solve_vectorized};
    use crate::tolerances::LYAPUNOV_RESIDUAL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn fixture() -> GridModel {
        GridModel::new(fixtures::two_ring()).unwrap()
    }

    #[test]
    fn two_node_closed_form() {
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 1.0)
            .demand(1.0, 1.0, 1.0, 0.4)
            .edge(1, 2, 1.0)
            .build()
            .unwrap();
        let lin = build_linearization(&net).unwrap();
        assert_eq!(lin.a_sync.ncols(), 0);
        assert!((lin.b_sync[0] - 0.4).abs() < 1e-14);
        // weight 2 halves the sine
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 1.0)
            .demand(1.0, 1.0, 1.0, 0.4)
            .edge(2, 1, 2.0)
            .build()
            .unwrap();
        let lin = build_linearization(&net).unwrap();
        assert!((lin.b_sync[0] + 0.2).abs() < 1e-14);
    }

    #[test]
    fn zero_demand_gives_zero_offset() {
        let mut doc = fixtures::two_ring().to_document();
        for node in doc.nodes.iter_mut().filter(|n| n.demand.is_some()) {
            node.demand = Some(0.0);
        }
        let net = PowerNetwork::from_document(&doc).unwrap();
        let lin = build_linearization(&net).unwrap();
        assert!(lin.b_sync.amax() < 1e-14);
    }

    #[test]
    fn eigenbasis_and_pseudoinverse() {
        let model = fixture();
        let lin = model.linearization();
        let n = 12;
        assert!((&lin.u0 * lin.u0.transpose() - DMatrix::<f64>::identity(n, n)).amax() < 1e-10);
        assert_eq!(lin.lambda_dag.iter().filter(|l| **l == 0.0).count(), 1);
        let pinv = model.network().laplacian().pseudo_inverse(1e-10).unwrap();
        assert!((lin.laplacian_pinv() - pinv).amax() < 1e-9);
        assert_eq!(lin.e.shape(), (12, 11));
    }

    #[test]
    fn power_balance_identity() {
        let model = fixture();
        let lin = model.linearization();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = model.polytope().sample_interior(&mut rng, 1e-6);
            let x = model.sines(&p).unwrap();
            let w = DMatrix::from_diagonal(&lin.weights);
            let injection = &lin.incidence * w * x;
            let expected = model.network().injection(&p);
            assert!((injection - expected).amax() < 1e-9);
        }
    }

    #[test]
    fn supply_difference_identity() {
        // B^T U0^T Lambda^+ E [p, -demand] reproduces A p + b
        let model = fixture();
        let lin = model.linearization();
        let p = v(&[23.0, 19.0, 24.0]);
        let mut stacked = p.iter().copied().collect::<Vec<_>>();
        stacked.extend(model.network().demand().iter().map(|d| -d));
        let lhs = lin.incidence.transpose() * lin.u0.transpose() * DMatrix::from_diagonal(&lin.lambda_dag)
            * &lin.e
            * DVector::from_vec(stacked);
        assert!((lhs - model.sines(&p).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn reduced_dimensions_and_stability() {
        let model = fixture();
        let sys = model.reduce(&v(&[23.0, 19.0, 24.0])).unwrap();
        assert_eq!(sys.j_d.shape(), (23, 23));
        assert_eq!(sys.k_d.shape(), (23, 12));
        assert_eq!(sys.c_d.shape(), (13, 23));
        assert!(sys.stiffness_eigenvalues[0].abs() < 1e-8);
        let eig = sys.j_d.complex_eigenvalues();
        assert!(eig.iter().all(|l| l.re < 0.0));
    }

    #[test]
    fn fixture_covariance_against_oracle() {
        let model = fixture();
        let sys = model.reduce(&v(&[23.0, 19.0, 24.0])).unwrap();
        let (_, q, _) = model.covariance(&sys).unwrap();
        let kk = &sys.k_d * sys.k_d.transpose();
        assert!(residual(&sys.j_d, &q, &kk) <= LYAPUNOV_RESIDUAL * kk.norm().max(1.0));
        let oracle = solve_vectorized(&sys.j_d, &kk).unwrap();
        assert!((&q - &oracle).norm() <= 1e-8 * oracle.norm());
    }

    #[test]
    fn variance_matches_unreduced_model() {
        // Stationary covariance of the full second-order model on the subspace
        // orthogonal to the zero mode, computed with a grounded node instead.
        let model = GridModel::new(fixtures::triangle()).unwrap();
        let p = v(&[1.2]);
        let x = model.sines(&p).unwrap();
        let lin = model.linearization();
        let w = model.effective_weights(&x);
        let n = 3;
        let l = &lin.incidence * DMatrix::from_diagonal(&w) * lin.incidence.transpose();
        // states: angle differences to node 3 (2 of them) and all 3 frequencies
        let mut t = DMatrix::zeros(2, 3);
        t[(0, 0)] = 1.0;
        t[(0, 2)] = -1.0;
        t[(1, 1)] = 1.0;
        t[(1, 2)] = -1.0;
        let minv = DMatrix::from_diagonal(&lin.inv_sqrt_inertia.map(|s| s * s));
        let mut a = DMatrix::zeros(5, 5);
        a.view_mut((0, 2), (2, 3)).copy_from(&t);
        // theta = G delta + c 1, L 1 = 0, so L theta = L G delta with G lifting differences
        let mut g = DMatrix::zeros(3, 2);
        g[(0, 0)] = 1.0;
        g[(1, 1)] = 1.0;
        a.view_mut((2, 0), (3, 2)).copy_from(&(-(&minv * &l * &g)));
        let damp = DMatrix::from_diagonal(&lin.damping_rate);
        a.view_mut((2, 2), (3, 3)).copy_from(&(-damp));
        let mut k = DMatrix::zeros(5, n);
        k.view_mut((2, 0), (3, 3)).copy_from(&(&minv * DMatrix::from_diagonal(&lin.noise)));
        let q = solve_vectorized(&a, &(&k * k.transpose())).unwrap();
        let mut c = DMatrix::zeros(3, 5);
        c.view_mut((0, 0), (3, 2)).copy_from(&(lin.incidence.transpose() * &g));
        let expected = diag_product(&c, &q, &c);
        let got = model.variances(&p).unwrap();
        assert!((&got - &expected).amax() <= 1e-10 * expected.amax(), "{got} vs {expected}");
    }

    #[test]
    fn saturation_is_reported() {
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 3.0)
            .supply(1.0, 1.0, 1.0, 3.0)
            .demand(1.0, 1.0, 1.0, 1.5)
            .edge(1, 3, 1.0)
            .edge(3, 2, 1.0)
            .build()
            .unwrap();
        let model = GridModel::new(net).unwrap();
        match model.evaluate(&v(&[1.2]), 1.0) {
            Err(GridError::Saturation { edge: 1, from: 1, to: 3, value }) => assert!((value - 1.2).abs() < 1e-12),
            other => panic!("expected saturation, got {other:?}"),
        }
    }

    #[test]
    fn zero_risk_and_zero_noise_reduce_to_mean_term() {
        let model = fixture();
        let p = v(&[23.0, 19.0, 24.0]);
        let eval = model.evaluate(&p, 0.0).unwrap();
        assert_eq!(eval.f, eval.mean.max());
        let quiet = GridModel::new(fixtures::two_ring().with_noise_scaled(0.0)).unwrap();
        let eval = quiet.evaluate(&p, 2.0).unwrap();
        assert!(eval.sigma.amax() < 1e-12);
        assert!((eval.f - eval.mean.max()).abs() < 1e-12);
    }

    #[test]
    fn noise_scaling_is_quadratic_in_variance() {
        let p = v(&[23.0, 19.0, 24.0]);
        let a = fixture().variances(&p).unwrap();
        let b = GridModel::new(fixtures::two_ring().with_noise_scaled(2.0)).unwrap().variances(&p).unwrap();
        assert!((b - a * 4.0).amax() < 1e-10);
    }

    #[test]
    fn orientation_invariance() {
        let model = fixture();
        let p = v(&[21.0, 18.0, 22.5]);
        let base = model.evaluate(&p, 1.0).unwrap();
        for k in [0, 5, 12] {
            let flipped = GridModel::new(model.network().with_edge_flipped(k)).unwrap();
            let eval = flipped.evaluate(&p, 1.0).unwrap();
            assert!((&eval.mean - &base.mean).amax() < 1e-10);
            assert!((&eval.sigma - &base.sigma).amax() < 1e-10);
            assert!((eval.f - base.f).abs() < 1e-10);
        }
    }

    #[test]
    fn evaluation_bookkeeping() {
        let model = fixture();
        let eval = model.evaluate(&v(&[23.0, 19.0, 24.0]), 1.0).unwrap();
        assert_eq!(eval.f_k.len(), 13);
        assert!(eval.sigma.iter().all(|s| *s > 0.0));
        assert_eq!(eval.f, eval.f_k.max());
        assert!(eval.i_max.contains(&eval.f_k.imax()));
        assert!(matches!(model.evaluate(&v(&[0.0, 0.0, 0.0]), 1.0), Err(GridError::Infeasible { .. })));
    }
}
