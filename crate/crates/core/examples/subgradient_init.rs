//! The two-phase projected subgradient initialization on the 12-node network.

use gridmin::fixtures;
use gridmin::objective::GridModel;
use gridmin::optimizer::{init_subgradient, OptimizerConfig, Phase};
use nalgebra::dvector;

fn main() -> gridmin::Result<()> {
    let model = GridModel::new(fixtures::two_ring())?;
    let cfg = OptimizerConfig { r: 3.0, ..Default::default() };
    let out = init_subgradient(&model, &dvector![23.0, 19.0, 24.0], &cfg)?;
    for phase in [Phase::Init1, Phase::Init2] {
        let rows: Vec<_> = out.trace.phase(phase).collect();
        for row in rows.iter().step_by(50).chain(rows.last()) {
            println!("{phase} {:>4}  f {:.8}  f_min {:.8}  case {}", row.iter, row.f, row.f_min.unwrap(), row.case);
        }
    }
    println!("best {:.6?} with f = {:.8}", out.p.as_slice(), out.f);
    Ok(())
}
