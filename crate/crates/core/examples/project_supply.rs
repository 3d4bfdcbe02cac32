//! Projects points onto the supply polytope and checks the projection inequality.

use gridmin::fixtures;
use gridmin::SupplyPolytope;
use nalgebra::dvector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gridmin::Result<()> {
    let poly = SupplyPolytope::new(&fixtures::two_ring())?;
    println!("dim {}, caps {:?}, cumulative floors {:?}", poly.dim(), poly.b2().as_slice(), poly.b1().as_slice());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for y in [dvector![40.0, -3.0, 10.0], dvector![0.0, 0.0, 0.0], dvector![23.0, 19.0, 24.0]] {
        let p = poly.project(&y)?;
        let worst = (0..200)
            .map(|_| {
                let x = poly.sample_interior(&mut rng, 0.0);
                (&y - &p).dot(&(x - &p))
            })
            .fold(f64::NEG_INFINITY, f64::max);
        println!("{:?} -> {:.6?}  violation {:.1e}  max <y-P(y), x-P(y)> {:.2e}", y.as_slice(), p.as_slice(), poly.violation(&p)?, worst);
    }
    Ok(())
}
