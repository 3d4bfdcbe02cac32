pub mod directional;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lyapunov;
pub mod network;
pub mod objective;
pub mod optimizer;
pub mod polytope;
pub mod sigma;
pub mod tolerances;

pub use error::{GridError, Result};
pub use network::{load_network, load_network_file, Edge, PowerNetwork};
pub use polytope::SupplyPolytope;
