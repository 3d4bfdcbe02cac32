//! Searches random feasible points for a line whose standard deviation has an
//! indefinite Hessian.

use gridmin::fixtures;
use gridmin::objective::GridModel;
use gridmin::sigma::{sigma_derivatives, SigmaConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gridmin::Result<()> {
    let model = GridModel::new(fixtures::two_ring())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for attempt in 1..=200 {
        let p = model.polytope().sample_interior(&mut rng, 0.5);
        let d = sigma_derivatives(&model, &p, &SigmaConfig::default())?;
        for (k, h) in d.hess_sigma.iter().enumerate() {
            let eig = h.clone().symmetric_eigenvalues();
            if eig.max() > 1e-6 && eig.min() < -1e-6 {
                println!("attempt {attempt}: line {} at {:.4?}", k + 1, p.as_slice());
                println!("eigenvalues {:.4e}", nalgebra::DVector::from(eig).transpose());
                return Ok(());
            }
        }
    }
    println!("no indefinite Hessian found");
    Ok(())
}
