//! Solves the stationary covariance equation of the reduced swing dynamics and
//! compares the Schur solver with the vectorized reference.

use std::time::Instant;

use gridmin::fixtures;
use gridmin::lyapunov::{residual, solve_vectorized, LyapunovSolver};
use gridmin::objective::GridModel;
use nalgebra::dvector;

fn main() -> gridmin::Result<()> {
    let model = GridModel::new(fixtures::two_ring())?;
    let sys = model.reduce(&dvector![23.0, 19.0, 24.0])?;
    let q = &sys.k_d * sys.k_d.transpose();

    let t = Instant::now();
    let solver = LyapunovSolver::new(&sys.j_d)?;
    let x = solver.solve(&q)?;
    let schur_time = t.elapsed();
    let t = Instant::now();
    let reference = solve_vectorized(&sys.j_d, &q)?;
    let kron_time = t.elapsed();

    let (re, im) = solver.rightmost_eigenvalue();
    println!("dimension {}, rightmost eigenvalue {re:.6} {im:+.6}i", solver.dim());
    println!("residual {:.3e} (scale {:.3e})", residual(&sys.j_d, &x, &q), q.norm());
    println!("relative gap to reference {:.3e}", (&x - &reference).norm() / reference.norm());
    println!("schur {schur_time:?}, kronecker {kron_time:?}");
    Ok(())
}
