//! Evaluates the objective on the 12-node two-ring network and prints every line's parts.

use gridmin::fixtures;
use gridmin::objective::GridModel;
use nalgebra::dvector;

fn main() -> gridmin::Result<()> {
    let model = GridModel::new(fixtures::two_ring())?;
    let p = dvector![23.0, 19.0, 24.0];
    let eval = model.evaluate(&p, 1.0)?;
    println!("dispatch {:?}", model.network().dispatch(&p));
    println!("{:>4} {:>6} {:>10} {:>10} {:>10} {:>10}", "line", "ends", "sine", "asin", "sigma", "f_k");
    for (k, e) in model.network().edges().iter().enumerate() {
        println!(
            "{:>4} {:>3}-{:<2} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            k + 1,
            e.from + 1,
            e.to + 1,
            eval.sines[k],
            eval.mean[k],
            eval.sigma[k],
            eval.f_k[k]
        );
    }
    println!("f = {:.8} on line {} (case {})", eval.f, eval.argmax() + 1, eval.case.kind);
    Ok(())
}
