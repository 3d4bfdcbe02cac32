//! The feasible set of supply decisions and Euclidean projection onto it.
//!
//! A decision `p` holds the first `n_supply - 1` supplies; the last supply is
//! whatever balances total demand. Feasibility means
//!
//! ```text
//! p >= 0,   p <= b2,   b1 <= A1 p,   sum(p) <= total demand
//! ```
//!
//! where `(A1 p)(i) = p(1) + ... + p(i)` and `b1(i) = demand - (cap(i+1) + ... + cap(n_supply))`.
//! The constraint `b1 <= A1 p` at the last row keeps the balancing supply below its
//! cap, the sum constraint keeps it nonnegative.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{GridError, Result};
use crate::network::PowerNetwork;
use crate::tolerances::{MEMBERSHIP, PROJECTION_KKT};

#[derive(Debug, Clone)]
pub struct SupplyPolytope {
    a1: DMatrix<f64>,
    b1: DVector<f64>,
    b2: DVector<f64>,
    total_demand: f64,
    /// All constraints stacked as `g x <= h`.
    g: DMatrix<f64>,
    h: DVector<f64>,
    anchor: DVector<f64>,
}

/// Outcome of a membership test.
#[derive(Debug, Clone)]
pub struct Membership {
    pub inside: bool,
    /// `h - g p` for every constraint, in the order nonnegativity, caps, cumulative bounds, total.
    pub slacks: DVector<f64>,
}

impl Membership {
    pub fn min_slack(&self) -> f64 {
        self.slacks.min()
    }
}

impl SupplyPolytope {
    pub fn new(net: &PowerNetwork) -> Result<Self> {
        let dim = net.decision_dim();
        if dim == 0 {
            return Err(GridError::InvalidNetwork(
                "a single supply node leaves no decision variables".into(),
            ));
        }
        let caps = net.p_max();
        let demand = net.total_demand();
        let a1 = DMatrix::from_fn(dim, dim, |i, j| if j <= i { 1.0 } else { 0.0 });
        let b1 = DVector::from_fn(dim, |i, _| demand - caps[i + 1..].iter().sum::<f64>());
        let b2 = DVector::from_column_slice(&caps[..dim]);

        let m = 3 * dim + 1;
        let mut g = DMatrix::zeros(m, dim);
        let mut h = DVector::zeros(m);
        for i in 0..dim {
            g[(i, i)] = -1.0;
            g[(dim + i, i)] = 1.0;
            h[dim + i] = b2[i];
            for j in 0..=i {
                g[(2 * dim + i, j)] = -1.0;
            }
            h[2 * dim + i] = -b1[i];
        }
        g.row_mut(3 * dim).fill(1.0);
        h[3 * dim] = demand;

        // proportional dispatch is always feasible when capacity covers demand
        let capacity = net.total_capacity();
        let share = if capacity > 0.0 { demand / capacity } else { 0.0 };
        let anchor = DVector::from_fn(dim, |i, _| caps[i] * share);

        Ok(Self { a1, b1, b2, total_demand: demand, g, h, anchor })
    }

    pub fn dim(&self) -> usize {
        self.b2.len()
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    pub fn total_demand(&self) -> f64 {
        self.total_demand
    }

    /// Number of stacked affine constraints.
    pub fn n_constraints(&self) -> usize {
        self.h.len()
    }

    /// Stacked constraint matrix `g` and bound `h` with `P = {x : g x <= h}`.
    pub fn constraints(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.g, &self.h)
    }

    /// A feasible point: each supply takes the same share of its cap.
    pub fn proportional_point(&self) -> DVector<f64> {
        self.anchor.clone()
    }

    fn check_dim(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.dim() {
            return Err(GridError::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        Ok(())
    }

    pub fn slacks(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(p)?;
        Ok(&self.h - &self.g * p)
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> Result<Membership> {
        let slacks = self.slacks(p)?;
        let inside = slacks.iter().all(|&s| s >= -tol);
        Ok(Membership { inside, slacks })
    }

    /// Largest constraint violation, zero for feasible points.
    pub fn violation(&self, p: &DVector<f64>) -> Result<f64> {
        Ok(self.slacks(p)?.iter().fold(0.0f64, |acc, &s| acc.max(-s)))
    }

    /// Errors with [`GridError::Infeasible`] unless `p` is a member at [`MEMBERSHIP`].
    pub fn require(&self, p: &DVector<f64>) -> Result<()> {
        let violation = self.violation(p)?;
        if violation > MEMBERSHIP {
            return Err(GridError::Infeasible { violation });
        }
        Ok(())
    }

    /// Supply of the balancing node for decision `p`.
    pub fn balancing_supply(&self, p: &DVector<f64>) -> f64 {
        self.total_demand - p.sum()
    }

    /// Largest `t` with `p + t d` feasible.
    pub fn max_step_to_boundary(&self, p: &DVector<f64>, d: &DVector<f64>) -> Result<f64> {
        self.check_dim(p)?;
        self.check_dim(d)?;
        if d.iter().all(|&x| x == 0.0) {
            return Err(GridError::ZeroDirection);
        }
        let slack = &self.h - &self.g * p;
        let rate = &self.g * d;
        let mut t = f64::INFINITY;
        for (s, r) in slack.iter().zip(rate.iter()) {
            if *r > 0.0 {
                t = t.min(s.max(0.0) / r);
            }
        }
        Ok(t)
    }

    /// Euclidean projection by a primal active-set method.
    ///
    /// The iteration starts from the proportional point with an empty working set,
    /// so every iterate stays feasible and the working set only ever receives
    /// blocking constraints, which keeps it linearly independent.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(y)?;
        if self.violation(y)? == 0.0 {
            return Ok(y.clone());
        }
        let n = self.dim();
        let m = self.n_constraints();
        let mut x = self.anchor.clone();
        let mut working: Vec<usize> = Vec::new();
        let scale = 1.0 + y.amax() + self.h.amax();
        let max_iter = 50 * m;

        for _ in 0..max_iter {
            let (target, lambda) = self.equality_projection(y, &working)?;
            let step = &target - &x;
            if step.norm() <= 1e-14 * scale {
                let worst = lambda
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, &l)| (i, l));
                match worst {
                    Some((i, l)) if l < -PROJECTION_KKT * scale => {
                        working.remove(i);
                    }
                    _ => {
                        x = target;
                        return self.finish(x, y, &working, &lambda);
                    }
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let gi = self.g.row(i);
                let rate = gi.dot(&step.transpose());
                if rate > 1e-15 * scale {
                    let slack = (self.h[i] - gi.dot(&x.transpose())).max(0.0);
                    let t = slack / rate;
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            x += alpha * step;
            if let Some(i) = blocking {
                working.push(i);
                if working.len() > n {
                    return Err(GridError::Projection(
                        "working set outgrew the dimension".into(),
                    ));
                }
            }
        }
        Err(GridError::Projection(format!("no convergence in {max_iter} active-set iterations")))
    }

    /// Minimizer of `|x - y|` on `{g_W x = h_W}` and its multipliers.
    fn equality_projection(
        &self,
        y: &DVector<f64>,
        working: &[usize],
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if working.is_empty() {
            return Ok((y.clone(), DVector::zeros(0)));
        }
        let gw = DMatrix::from_fn(working.len(), self.dim(), |r, c| self.g[(working[r], c)]);
        let hw = DVector::from_fn(working.len(), |r, _| self.h[working[r]]);
        let gram = &gw * gw.transpose();
        let rhs = &gw * y - hw;
        let lambda = gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| GridError::Projection("singular working set".into()))?;
        let x = y - gw.transpose() * &lambda;
        Ok((x, lambda))
    }

    fn finish(
        &self,
        x: DVector<f64>,
        y: &DVector<f64>,
        working: &[usize],
        lambda: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let scale = 1.0 + y.amax() + self.h.amax();
        let violation = self.violation(&x)?;
        if violation > PROJECTION_KKT * scale {
            return Err(GridError::Projection(format!("result violates a constraint by {violation:e}")));
        }
        let mut stationarity = &x - y;
        for (k, &i) in working.iter().enumerate() {
            stationarity += lambda[k] * self.g.row(i).transpose();
        }
        let residual = stationarity.amax();
        if residual > PROJECTION_KKT * scale {
            return Err(GridError::Projection(format!("stationarity residual {residual:e}")));
        }
        Ok(x)
    }

    /// Uniform sample whose every slack exceeds `margin`, by rejection from the box.
    /// Falls back to the proportional point pulled slightly inward after many misses.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R, margin: f64) -> DVector<f64> {
        for _ in 0..100_000 {
            let p = DVector::from_fn(self.dim(), |i, _| rng.gen::<f64>() * self.b2[i]);
            if self.slacks(&p).map(|s| s.min() > margin).unwrap_or(false) {
                return p;
            }
        }
        self.anchor.clone()
    }

    /// Uniform sample from the box `[0, b2]` widened by `spread` on every side;
    /// mostly infeasible when `spread` is large.
    pub fn sample_around<R: Rng + ?Sized>(&self, rng: &mut R, spread: f64) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| rng.gen_range(-spread..self.b2[i] + spread))
    }

    /// The projected centre of the box `[0, b2]`.
    pub fn auto_start(&self) -> Result<DVector<f64>> {
        self.project(&(&self.b2 * 0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> SupplyPolytope {
        SupplyPolytope::new(&fixtures::two_ring()).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    /// Brute-force minimizer of `|x - y|` over a grid of feasible points.
    fn grid_projection(poly: &SupplyPolytope, y: &DVector<f64>, step: f64) -> DVector<f64> {
        let dim = poly.dim();
        let counts: Vec<usize> = (0..dim).map(|i| (poly.b2()[i] / step).round() as usize).collect();
        let mut best = (f64::INFINITY, DVector::zeros(dim));
        let mut idx = vec![0usize; dim];
        loop {
            let x = DVector::from_fn(dim, |i, _| idx[i] as f64 * step);
            if poly.violation(&x).unwrap() <= 1e-12 {
                let d = (&x - y).norm_squared();
                if d < best.0 {
                    best = (d, x);
                }
            }
            let mut k = 0;
            loop {
                if k == dim {
                    return best.1;
                }
                idx[k] += 1;
                if idx[k] <= counts[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn fixture_bounds() {
        let poly = fixture();
        assert_eq!(poly.dim(), 3);
        assert_eq!(poly.b1(), &v(&[5.0, 30.0, 55.0]));
        assert_eq!(poly.b2(), &v(&[25.0, 25.0, 25.0]));
    }

    #[test]
    fn two_supply_bounds() {
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 10.0)
            .supply(1.0, 1.0, 1.0, 10.0)
            .demand(1.0, 1.0, 1.0, 10.0)
            .edge(1, 2, 1.0)
            .edge(2, 3, 1.0)
            .build()
            .unwrap();
        let poly = SupplyPolytope::new(&net).unwrap();
        assert_eq!(poly.dim(), 1);
        assert_eq!(poly.b1(), &v(&[0.0]));
        assert_eq!(poly.b2(), &v(&[10.0]));
    }

    #[test]
    fn single_supply_rejected() {
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 10.0)
            .demand(1.0, 1.0, 1.0, 1.0)
            .edge(1, 2, 1.0)
            .build()
            .unwrap();
        assert!(SupplyPolytope::new(&net).is_err());
    }

    #[test]
    fn membership_examples() {
        let poly = fixture();
        let m = poly.contains(&v(&[23.0, 19.0, 24.0]), MEMBERSHIP).unwrap();
        assert!(m.inside);
        let cumulative: Vec<f64> = (0..3).map(|i| -m.slacks[6 + i]).collect();
        assert_eq!(cumulative, vec![5.0 - 23.0, 30.0 - 42.0, 55.0 - 66.0]);
        assert!(!poly.contains(&v(&[0.0, 0.0, 0.0]), MEMBERSHIP).unwrap().inside);
        assert!(poly.contains(&v(&[25.0, 25.0, 25.0]), MEMBERSHIP).unwrap().inside);
        assert_eq!(poly.balancing_supply(&v(&[25.0, 25.0, 25.0])), 5.0);
        assert!(matches!(
            poly.contains(&v(&[1.0, 2.0]), MEMBERSHIP),
            Err(GridError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn balancing_supply_bounds_are_encoded() {
        let poly = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = poly.sample_around(&mut rng, 2.0);
            let last = poly.balancing_supply(&p);
            let feasible = poly.violation(&p).unwrap() == 0.0;
            if feasible {
                assert!((0.0..=25.0).contains(&last));
            }
            let box_ok = p.iter().all(|&x| (0.0..=25.0).contains(&x));
            if box_ok && (0.0..=25.0).contains(&last) {
                assert!(feasible);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let poly = fixture();
        let inside = v(&[23.0, 19.0, 24.0]);
        assert_eq!(poly.project(&inside).unwrap(), inside);
        let p = poly.project(&v(&[30.0, 30.0, 30.0])).unwrap();
        assert!((p - v(&[25.0, 25.0, 25.0])).amax() < 1e-12);
    }

    #[test]
    fn projection_matches_grid() {
        let poly = fixture();
        for y in [v(&[-5.0, 10.0, 10.0]), v(&[-5.0, 20.0, 20.0]), v(&[30.0, 2.0, 8.0]), v(&[12.0, 40.0, -3.0]), v(&[0.0, 0.0, 0.0])] {
            let p = poly.project(&y).unwrap();
            let grid = grid_projection(&poly, &y, 0.25);
            assert!((&p - &y).norm() <= (&grid - &y).norm() + 1e-12, "{y} -> {p} vs grid {grid}");
            assert!((&p - &grid).norm() < 0.5);
        }
    }

    #[test]
    fn nonnegativity_clamps_first_coordinate() {
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 40.0)
            .supply(1.0, 1.0, 1.0, 40.0)
            .supply(1.0, 1.0, 1.0, 40.0)
            .supply(1.0, 1.0, 1.0, 40.0)
            .demand(1.0, 1.0, 1.0, 30.0)
            .edge(1, 5, 1.0)
            .edge(2, 5, 1.0)
            .edge(3, 5, 1.0)
            .edge(4, 5, 1.0)
            .build()
            .unwrap();
        let poly = SupplyPolytope::new(&net).unwrap();
        let y = v(&[-5.0, 10.0, 10.0]);
        let p = poly.project(&y).unwrap();
        assert!((&p - v(&[0.0, 10.0, 10.0])).amax() < 1e-12);
        let grid = grid_projection(&poly, &y, 0.5);
        assert!((&p - &grid).amax() < 1e-12);
    }

    #[test]
    fn projection_matches_fine_grid_in_one_dimension() {
        let poly = SupplyPolytope::new(&fixtures::toy_path()).unwrap();
        for y in [-0.7, 0.3, 1.9, 3.0] {
            let p = poly.project(&v(&[y])).unwrap();
            let grid = grid_projection(&poly, &v(&[y]), 1e-3);
            assert!((p[0] - grid[0]).abs() <= 1e-3);
        }
    }

    #[test]
    fn step_to_boundary() {
        let poly = fixture();
        let p = v(&[23.0, 19.0, 24.0]);
        assert!((poly.max_step_to_boundary(&p, &v(&[1.0, 0.0, 0.0])).unwrap() - 2.0).abs() < 1e-12);
        // facet p3 <= 25 from p3 = 24, moving at rate 2
        assert!((poly.max_step_to_boundary(&p, &v(&[0.0, 0.0, 2.0])).unwrap() - 0.5).abs() < 1e-12);
        let on_facet = v(&[25.0, 19.0, 24.0]);
        assert_eq!(poly.max_step_to_boundary(&on_facet, &v(&[1.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            poly.max_step_to_boundary(&p, &v(&[0.0, 0.0, 0.0])),
            Err(GridError::ZeroDirection)
        ));
        let t = poly.max_step_to_boundary(&p, &v(&[-1.0, -1.0, -1.0])).unwrap();
        let q = &p + t * v(&[-1.0, -1.0, -1.0]);
        assert!(poly.slacks(&q).unwrap().min().abs() < 1e-12);
    }

    #[test]
    fn interior_samples_respect_margin() {
        let poly = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = poly.sample_interior(&mut rng, 1e-6);
            assert!(poly.slacks(&p).unwrap().min() > 1e-6);
        }
        assert!(poly.contains(&poly.auto_start().unwrap(), MEMBERSHIP).unwrap().inside);
    }

    proptest! {
        #[test]
        fn projection_properties(
            y in proptest::collection::vec(-20.0f64..45.0, 3),
            z in proptest::collection::vec(-20.0f64..45.0, 3),
        ) {
            let poly = fixture();
            let y = DVector::from_vec(y);
            let z = DVector::from_vec(z);
            let py = poly.project(&y).unwrap();
            let pz = poly.project(&z).unwrap();
            prop_assert!(poly.contains(&py, 1e-9).unwrap().inside);
            let again = poly.project(&py).unwrap();
            prop_assert!((&again - &py).amax() <= 1e-10);
            prop_assert!((&py - &pz).norm() <= (&y - &z).norm() + 1e-10);
            for x in [poly.proportional_point(), DVector::from_column_slice(&[25.0, 25.0, 25.0]), DVector::from_column_slice(&[5.0, 25.0, 25.0])] {
                prop_assert!((&y - &py).dot(&(&x - &py)) <= 1e-8);
            }
        }
    }
}
