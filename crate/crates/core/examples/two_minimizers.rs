//! Runs the full two-step method from two starts and writes both traces as CSV.

use std::fs::File;

use gridmin::fixtures;
use gridmin::objective::GridModel;
use gridmin::optimizer::{two_step, OptimizerConfig};
use nalgebra::DVector;

fn main() -> gridmin::Result<()> {
    let model = GridModel::new(fixtures::two_ring())?;
    let cfg = OptimizerConfig { r: 3.0, ..Default::default() };
    let dir = std::env::temp_dir();
    let mut minima = Vec::new();
    for (name, start) in [("a", [23.0, 19.0, 24.0]), ("b", [19.0, 19.0, 19.0])] {
        let out = two_step(&model, &DVector::from_column_slice(&start), &cfg)?;
        let path = dir.join(format!("two_step_{name}.csv"));
        out.trace.write_csv(File::create(&path)?)?;
        println!("{start:?} -> {:.4?}  f = {:.8}  ({}, trace in {})", out.p.as_slice(), out.f, out.termination.as_str(), path.display());
        minima.push(out);
    }
    println!("distance {:.4}, gap {:.2e}", (&minima[0].p - &minima[1].p).norm(), (minima[0].f - minima[1].f).abs());
    Ok(())
}
