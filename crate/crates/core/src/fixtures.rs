//! Bundled networks.

use crate::network::{load_network, PowerNetwork};

/// Source text of the twelve-node two-ring network.
pub const TWO_RING_JSON: &str = include_str!("../fixtures/two_ring_12.json");

/// Twelve nodes, four supplies with cap 25, total demand 80, thirteen lines of weight 30.
pub fn two_ring() -> PowerNetwork {
    load_network(TWO_RING_JSON).expect("bundled fixture is valid")
}

/// Three-node path `1 - 3 - 2`: two supplies feeding one demand of 1.5 through
/// lines of weight 2. The decision space is one-dimensional.
pub fn toy_path() -> PowerNetwork {
    PowerNetwork::builder()
        .name("toy-path-3")
        .supply(1.0, 1.0, 1.0, 1.5)
        .supply(1.0, 1.0, 1.0, 1.5)
        .demand(1.0, 1.0, 1.0, 1.5)
        .edge(1, 3, 2.0)
        .edge(3, 2, 2.0)
        .build()
        .expect("toy network is valid")
}

/// The toy path with unequal noise, so its optimum is not at the symmetric split.
pub fn toy_path_skewed() -> PowerNetwork {
    PowerNetwork::builder()
        .name("toy-path-3-skewed")
        .supply(1.0, 1.0, 0.6, 1.5)
        .supply(2.0, 0.5, 1.4, 1.5)
        .demand(1.0, 1.0, 1.0, 1.5)
        .edge(1, 3, 2.0)
        .edge(3, 2, 2.0)
        .build()
        .expect("toy network is valid")
}

/// Triangle with two supplies and one demand. Line 1-2 carries no flow when both
/// supplies deliver half of the demand.
pub fn triangle() -> PowerNetwork {
    PowerNetwork::builder()
        .name("triangle-3")
        .supply(2.0, 1.0, 0.8, 4.0)
        .supply(2.0, 1.0, 0.8, 4.0)
        .demand(1.0, 1.0, 0.5, 3.0)
        .edge(1, 2, 3.0)
        .edge(2, 3, 5.0)
        .edge(1, 3, 5.0)
        .build()
        .expect("triangle network is valid")
}
