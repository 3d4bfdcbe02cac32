//! Steepest descent with Armijo backtracking from a corner-heavy start.

use gridmin::fixtures;
use gridmin::objective::GridModel;
use gridmin::optimizer::{steepest_descent, OptimizerConfig};
use nalgebra::dvector;

fn main() -> gridmin::Result<()> {
    let model = GridModel::new(fixtures::two_ring())?;
    let cfg = OptimizerConfig { r: 3.0, ..Default::default() };
    let out = steepest_descent(&model, &dvector![23.0, 19.0, 24.0], &cfg)?;
    for row in &out.trace.rows {
        println!(
            "{:>3}  p {:.4?}  f {:.8}  f' {:+.3e}  t {}  case {}",
            row.iter,
            row.p,
            row.f,
            row.fprime.unwrap_or(0.0),
            row.t.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into()),
            row.case
        );
    }
    println!("stopped: {} at f = {:.8}", out.termination.as_str(), out.f);
    Ok(())
}
