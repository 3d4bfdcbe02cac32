//! One-sided directional derivatives at a smooth point and at a kink where a
//! line carries no mean flow, compared with difference quotients.

use gridmin::directional::{first_directional_derivative, second_directional_derivative, LocalModel, LocalOptions};
use gridmin::fixtures;
use gridmin::objective::GridModel;
use nalgebra::{dvector, DVector};

fn report(model: &GridModel, p: &DVector<f64>, v: &DVector<f64>, r: f64) -> gridmin::Result<()> {
    let local = LocalModel::new(model, p, r, &LocalOptions::default())?;
    let f1 = first_directional_derivative(model, p, v, r)?;
    let f2 = second_directional_derivative(model, p, v, r)?;
    println!("p = {:?}, case {}, lines {:?}", p.as_slice(), local.eval.case.kind, local.eval.case.edges);
    for t in [1e-2, 1e-3, 1e-4] {
        let ft = model.evaluate(&(p + v * t), r)?.f;
        let quotient = (ft - local.f()) / t;
        let curvature = 2.0 * (ft - local.f() - t * f1) / (t * t);
        println!("  t={t:.0e}: quotient {quotient:+.8} vs f' {f1:+.8}; curvature {curvature:+.5} vs f'' {f2:+.5}");
    }
    Ok(())
}

fn main() -> gridmin::Result<()> {
    let ring = GridModel::new(fixtures::two_ring())?;
    report(&ring, &dvector![23.0, 19.0, 24.0], &dvector![-1.0, 0.5, -0.5], 1.0)?;

    // line 1-2 of the triangle has zero flow when both supplies are equal
    let triangle = GridModel::new(fixtures::triangle())?;
    report(&triangle, &dvector![1.5], &dvector![0.3], 40.0)?;
    report(&triangle, &dvector![1.5], &dvector![-0.3], 40.0)?;
    Ok(())
}
