//! Gradient and Hessian of each line's standard deviation, checked against
//! central differences of the objective evaluator.

use gridmin::fixtures;
use gridmin::objective::GridModel;
use gridmin::sigma::{sigma_derivatives, SigmaConfig};
use nalgebra::{dvector, DVector};

fn main() -> gridmin::Result<()> {
    let model = GridModel::new(fixtures::two_ring())?;
    let p = dvector![21.0, 18.5, 22.0];
    let d = sigma_derivatives(&model, &p, &SigmaConfig::default())?;
    let h = 1e-5;
    println!("{:>4} {:>10} {:>36} {:>10} {:>12}", "line", "sigma", "gradient", "fd error", "hess eigs");
    for k in 0..model.n_edges() {
        let fd = DVector::from_fn(model.dim(), |i, _| {
            let mut e = DVector::zeros(model.dim());
            e[i] = h;
            let up = model.sigmas(&(&p + &e)).unwrap()[k];
            let down = model.sigmas(&(&p - &e)).unwrap()[k];
            (up - down) / (2.0 * h)
        });
        let g = d.grad(k);
        let eig = d.hess_sigma[k].clone().symmetric_eigenvalues();
        println!(
            "{:>4} {:>10.6} {:>36} {:>10.2e} {:>+.2e}/{:+.2e}",
            k + 1,
            d.sigma[k],
            format!("{:+.5?}", g.as_slice()),
            (&g - &fd).norm() / fd.norm(),
            eig.min(),
            eig.max()
        );
    }
    Ok(())
}
