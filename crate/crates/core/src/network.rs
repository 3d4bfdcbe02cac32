//! Power network description, validation and the node/edge matrices built from it.
//!
//! Nodes are numbered from 1 in documents and builders; the first `n_supply`
//! nodes supply power and the rest only consume it. Internally every index is
//! 0-based.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};

/// Version of the network document schema understood by [`load_network`].
pub const NETWORK_SCHEMA_VERSION: u32 = 1;

/// A transmission line between two nodes (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Node role in the network document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Supply,
    Demand,
}

/// One node entry of the network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    pub role: NodeRole,
    pub inertia: f64,
    pub damping: f64,
    pub noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<f64>,
}

/// One edge entry of the network document (1-based node ids).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// The serialized network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

/// A validated power network. Immutable once built.
#[derive(Debug, Clone)]
pub struct PowerNetwork {
    name: Option<String>,
    n_supply: usize,
    edges: Vec<Edge>,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    noise: Vec<f64>,
    p_max: Vec<f64>,
    demand: Vec<f64>,
}

/// Parses and validates a network document.
///
/// On top of the structural checks of [`PowerNetwork`] this requires at least two
/// supply nodes, since the supply decision vector has `n_supply - 1` entries.
pub fn load_network(source: &str) -> Result<PowerNetwork> {
    let doc: NetworkDocument = serde_json::from_str(source)?;
    let net = PowerNetwork::from_document(&doc)?;
    if net.n_supply() < 2 {
        return Err(GridError::InvalidNetwork(format!(
            "at least two supply nodes are required, found {}",
            net.n_supply()
        )));
    }
    Ok(net)
}

/// Reads a network document from disk; see [`load_network`].
pub fn load_network_file(path: impl AsRef<Path>) -> Result<PowerNetwork> {
    let text = std::fs::read_to_string(path)?;
    load_network(&text)
}

impl PowerNetwork {
    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::default()
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self> {
        if doc.version != NETWORK_SCHEMA_VERSION {
            return Err(GridError::InvalidNetwork(format!(
                "unsupported schema version {} (expected {NETWORK_SCHEMA_VERSION})",
                doc.version
            )));
        }
        let n = doc.nodes.len();
        let mut slots: Vec<Option<&NodeRecord>> = vec![None; n];
        for node in &doc.nodes {
            if node.id == 0 || node.id > n {
                return Err(GridError::InvalidNetwork(format!(
                    "node id {} outside 1..={n}",
                    node.id
                )));
            }
            if slots[node.id - 1].replace(node).is_some() {
                return Err(GridError::InvalidNetwork(format!("duplicate node id {}", node.id)));
            }
        }
        let mut builder = NetworkBuilder { name: doc.name.clone(), ..Default::default() };
        let mut seen_demand = false;
        for node in slots.into_iter().flatten() {
            match node.role {
                NodeRole::Supply => {
                    if seen_demand {
                        return Err(GridError::InvalidNetwork(format!(
                            "supply node {} follows a demand node; supply nodes must occupy ids 1..n_plus",
                            node.id
                        )));
                    }
                    if node.demand.is_some() {
                        return Err(GridError::InvalidNetwork(format!(
                            "supply node {} carries a demand field",
                            node.id
                        )));
                    }
                    let p_max = node.p_max.ok_or_else(|| {
                        GridError::InvalidNetwork(format!("supply node {} lacks p_max", node.id))
                    })?;
                    builder = builder.supply(node.inertia, node.damping, node.noise, p_max);
                }
                NodeRole::Demand => {
                    seen_demand = true;
                    if node.p_max.is_some() {
                        return Err(GridError::InvalidNetwork(format!(
                            "demand node {} carries a p_max field",
                            node.id
                        )));
                    }
                    let demand = node.demand.ok_or_else(|| {
                        GridError::InvalidNetwork(format!("demand node {} lacks demand", node.id))
                    })?;
                    builder = builder.demand(node.inertia, node.damping, node.noise, demand);
                }
            }
        }
        for e in &doc.edges {
            builder = builder.edge(e.from, e.to, e.weight);
        }
        builder.build()
    }

    /// Serializes back to the document schema.
    pub fn to_document(&self) -> NetworkDocument {
        let nodes = (0..self.n_nodes())
            .map(|i| {
                let supply = i < self.n_supply;
                NodeRecord {
                    id: i + 1,
                    role: if supply { NodeRole::Supply } else { NodeRole::Demand },
                    inertia: self.inertia[i],
                    damping: self.damping[i],
                    noise: self.noise[i],
                    p_max: supply.then(|| self.p_max[i]),
                    demand: (!supply).then(|| self.demand[i - self.n_supply]),
                }
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeRecord { from: e.from + 1, to: e.to + 1, weight: e.weight })
            .collect();
        NetworkDocument {
            version: NETWORK_SCHEMA_VERSION,
            name: self.name.clone(),
            notes: None,
            nodes,
            edges,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.n_supply == 0 {
            return Err(GridError::InvalidNetwork("no supply nodes".into()));
        }
        if self.edges.is_empty() {
            return Err(GridError::InvalidNetwork("no edges".into()));
        }
        for (i, ((&m, &d), &k)) in self.inertia.iter().zip(&self.damping).zip(&self.noise).enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(GridError::InvalidNetwork(format!("node {}: inertia must be positive, got {m}", i + 1)));
            }
            if !(d >= 0.0 && d.is_finite()) {
                return Err(GridError::InvalidNetwork(format!("node {}: damping must be nonnegative, got {d}", i + 1)));
            }
            if !(k >= 0.0 && k.is_finite()) {
                return Err(GridError::InvalidNetwork(format!("node {}: noise must be nonnegative, got {k}", i + 1)));
            }
        }
        for (i, &c) in self.p_max.iter().enumerate() {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(GridError::InvalidNetwork(format!("node {}: p_max must be nonnegative, got {c}", i + 1)));
            }
        }
        for (i, &c) in self.demand.iter().enumerate() {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(GridError::InvalidNetwork(format!(
                    "node {}: demand must be nonnegative, got {c}",
                    i + 1 + self.n_supply
                )));
            }
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(GridError::InvalidNetwork(format!(
                    "edge {}: endpoint outside 1..={n}",
                    k + 1
                )));
            }
            if e.from == e.to {
                return Err(GridError::InvalidNetwork(format!("edge {}: self loop at node {}", k + 1, e.from + 1)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(GridError::InvalidNetwork(format!(
                    "edge {}: weight must be positive, got {}",
                    k + 1,
                    e.weight
                )));
            }
        }
        if let Some(node) = self.unreachable_node() {
            return Err(GridError::Disconnected { node: node + 1 });
        }
        let capacity = self.total_capacity();
        let demand = self.total_demand();
        if capacity < demand {
            return Err(GridError::SupplyDeficit { capacity, demand });
        }
        Ok(())
    }

    fn unreachable_node(&self) -> Option<usize> {
        let n = self.n_nodes();
        let mut adjacency = vec![Vec::new(); n];
        for e in &self.edges {
            adjacency[e.from].push(e.to);
            adjacency[e.to].push(e.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn n_nodes(&self) -> usize {
        self.inertia.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_supply(&self) -> usize {
        self.n_supply
    }

    pub fn n_demand(&self) -> usize {
        self.demand.len()
    }

    /// Length of the supply decision vector, `n_supply - 1`.
    pub fn decision_dim(&self) -> usize {
        self.n_supply - 1
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn p_max(&self) -> &[f64] {
        &self.p_max
    }

    /// Demands of nodes `n_supply+1..=n`, stored positive.
    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn total_capacity(&self) -> f64 {
        self.p_max.iter().sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }

    /// Node-edge incidence matrix: column `k` has `+1` at the first-listed
    /// endpoint of edge `k` and `-1` at the second.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n_nodes(), self.n_edges());
        for (k, e) in self.edges.iter().enumerate() {
            b[(e.from, k)] = 1.0;
            b[(e.to, k)] = -1.0;
        }
        b
    }

    pub fn weights(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_edges(), self.edges.iter().map(|e| e.weight))
    }

    /// Weighted Laplacian `B W B^T`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n_nodes(), self.n_nodes());
        for e in &self.edges {
            l[(e.from, e.from)] += e.weight;
            l[(e.to, e.to)] += e.weight;
            l[(e.from, e.to)] -= e.weight;
            l[(e.to, e.from)] -= e.weight;
        }
        l
    }

    /// Full nodal injection vector `[p_1..p_{n_supply}, -demand]` for a decision
    /// vector `p_s`; the last supply absorbs the balance.
    pub fn injection(&self, p_s: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_nodes());
        let dim = self.decision_dim();
        for i in 0..dim {
            out[i] = p_s[i];
        }
        out[dim] = self.total_demand() - p_s.sum();
        for (j, &d) in self.demand.iter().enumerate() {
            out[self.n_supply + j] = -d;
        }
        out
    }

    /// Reconstructed supply of every supply node, including the balancing one.
    pub fn dispatch(&self, p_s: &DVector<f64>) -> Vec<f64> {
        let mut out: Vec<f64> = p_s.iter().copied().collect();
        out.push(self.total_demand() - p_s.sum());
        out
    }

    /// Copy of the network with every noise intensity multiplied by `factor`.
    pub fn with_noise_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.noise.iter_mut().for_each(|k| *k *= factor);
        out
    }

    /// Copy of the network with edge `k` reversed.
    pub fn with_edge_flipped(&self, k: usize) -> Self {
        let mut out = self.clone();
        let e = &mut out.edges[k];
        std::mem::swap(&mut e.from, &mut e.to);
        out
    }
}

/// Programmatic construction; node ids passed to [`NetworkBuilder::edge`] are 1-based.
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    name: Option<String>,
    supply: Vec<(f64, f64, f64, f64)>,
    demand: Vec<(f64, f64, f64, f64)>,
    edges: Vec<(usize, usize, f64)>,
}

impl NetworkBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn supply(mut self, inertia: f64, damping: f64, noise: f64, p_max: f64) -> Self {
        self.supply.push((inertia, damping, noise, p_max));
        self
    }

    pub fn demand(mut self, inertia: f64, damping: f64, noise: f64, demand: f64) -> Self {
        self.demand.push((inertia, damping, noise, demand));
        self
    }

    pub fn edge(mut self, from: usize, to: usize, weight: f64) -> Self {
        self.edges.push((from, to, weight));
        self
    }

    pub fn build(self) -> Result<PowerNetwork> {
        let nodes = self.supply.iter().chain(&self.demand);
        let n = self.supply.len() + self.demand.len();
        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, &(from, to, weight)) in self.edges.iter().enumerate() {
            if from == 0 || to == 0 || from > n || to > n {
                return Err(GridError::InvalidNetwork(format!(
                    "edge {}: endpoint ({from}, {to}) outside 1..={n}",
                    k + 1
                )));
            }
            edges.push(Edge { from: from - 1, to: to - 1, weight });
        }
        let net = PowerNetwork {
            name: self.name,
            n_supply: self.supply.len(),
            edges,
            inertia: nodes.clone().map(|n| n.0).collect(),
            damping: nodes.clone().map(|n| n.1).collect(),
            noise: nodes.map(|n| n.2).collect(),
            p_max: self.supply.iter().map(|n| n.3).collect(),
            demand: self.demand.iter().map(|n| n.3).collect(),
        };
        net.validate()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn triangle() -> PowerNetwork {
        PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 5.0)
            .supply(1.0, 1.0, 1.0, 5.0)
            .demand(1.0, 1.0, 1.0, 3.0)
            .edge(1, 2, 1.0)
            .edge(2, 3, 1.0)
            .edge(1, 3, 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn fixture_loads() {
        let net = fixtures::two_ring();
        assert_eq!(net.n_nodes(), 12);
        assert_eq!(net.n_edges(), 13);
        assert_eq!(net.n_supply(), 4);
        assert!(net.edges().iter().all(|e| e.weight == 30.0));
        assert_eq!(net.total_demand(), 80.0);
    }

    #[test]
    fn three_node_path() {
        let net = fixtures::toy_path();
        assert_eq!(net.n_edges(), 2);
        assert_eq!(net.decision_dim(), 1);
    }

    #[test]
    fn supply_deficit_rejected() {
        // capacity 80 against demand 81
        let mut doc = fixtures::two_ring().to_document();
        doc.nodes[0].p_max = Some(5.0);
        doc.nodes[11].demand = Some(10.0);
        let text = serde_json::to_string(&doc).unwrap();
        match load_network(&text) {
            Err(GridError::SupplyDeficit { capacity, demand }) => {
                assert_eq!(capacity, 80.0);
                assert_eq!(demand, 81.0);
            }
            other => panic!("expected supply deficit, got {other:?}"),
        }
    }

    #[test]
    fn disconnected_rejected() {
        let err = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 5.0)
            .supply(1.0, 1.0, 1.0, 5.0)
            .demand(1.0, 1.0, 1.0, 3.0)
            .demand(1.0, 1.0, 1.0, 1.0)
            .edge(1, 2, 1.0)
            .edge(3, 4, 1.0)
            .build()
            .unwrap_err();
        assert!(matches!(err, GridError::Disconnected { node: 3 }));
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        let bad_weight = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 5.0)
            .demand(1.0, 1.0, 1.0, 3.0)
            .edge(1, 2, 0.0)
            .build();
        assert!(matches!(bad_weight, Err(GridError::InvalidNetwork(_))));
        let bad_inertia = PowerNetwork::builder()
            .supply(0.0, 1.0, 1.0, 5.0)
            .demand(1.0, 1.0, 1.0, 3.0)
            .edge(1, 2, 1.0)
            .build();
        assert!(matches!(bad_inertia, Err(GridError::InvalidNetwork(_))));
    }

    #[test]
    fn interleaved_roles_rejected() {
        let mut doc = fixtures::two_ring().to_document();
        doc.nodes.swap(3, 4);
        doc.nodes[3].id = 4;
        doc.nodes[4].id = 5;
        let text = serde_json::to_string(&doc).unwrap();
        let err = load_network(&text).unwrap_err();
        assert!(err.to_string().contains("follows a demand node"), "{err}");
    }

    #[test]
    fn single_supply_rejected_by_loader() {
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 5.0)
            .demand(1.0, 1.0, 1.0, 3.0)
            .edge(1, 2, 1.0)
            .build()
            .unwrap();
        let text = serde_json::to_string(&net.to_document()).unwrap();
        assert!(matches!(load_network(&text), Err(GridError::InvalidNetwork(_))));
    }

    #[test]
    fn schema_violations() {
        assert!(matches!(load_network("{\"version\": 1}"), Err(GridError::Parse(_))));
        let mut doc = fixtures::two_ring().to_document();
        doc.version = 7;
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(load_network(&text), Err(GridError::InvalidNetwork(_))));
    }

    #[test]
    fn incidence_of_triangle() {
        let b = triangle().incidence_matrix();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, -1.0, 1.0, 0.0, 0.0, -1.0, -1.0]);
        assert_eq!(b, expected);
    }

    #[test]
    fn incidence_of_single_edge() {
        let net = PowerNetwork::builder()
            .supply(1.0, 1.0, 1.0, 5.0)
            .demand(1.0, 1.0, 1.0, 3.0)
            .edge(1, 2, 1.0)
            .build()
            .unwrap();
        assert_eq!(net.incidence_matrix(), DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
    }

    #[test]
    fn incidence_of_fixture_matches_degrees() {
        let net = fixtures::two_ring();
        let b = net.incidence_matrix();
        let mut degree = vec![0usize; net.n_nodes()];
        for e in net.edges() {
            degree[e.from] += 1;
            degree[e.to] += 1;
        }
        for k in 0..b.ncols() {
            assert_eq!(b.column(k).sum(), 0.0);
        }
        for (i, d) in degree.iter().enumerate() {
            let row_degree = b.row(i).iter().filter(|x| **x != 0.0).count();
            assert_eq!(row_degree, *d);
        }
        // ring nodes have degree 2, the shared line's endpoints degree 3
        assert_eq!(degree[0], 3);
        assert_eq!(degree[2], 3);
    }

    #[test]
    fn laplacian_spectrum_has_single_zero() {
        for net in [fixtures::two_ring(), triangle(), fixtures::toy_path()] {
            let b = net.incidence_matrix();
            let w = DMatrix::from_diagonal(&net.weights());
            let l = &b * w * b.transpose();
            assert!((&l - net.laplacian()).norm() < 1e-12);
            let eig = l.symmetric_eigenvalues();
            let max = eig.max();
            let zeros = eig.iter().filter(|x| x.abs() <= 1e-10 * max).count();
            assert_eq!(zeros, 1);
            let sv = b.singular_values();
            assert_eq!(sv.iter().filter(|s| **s > 1e-10).count(), net.n_nodes() - 1);
        }
    }

    #[test]
    fn document_round_trip() {
        let net = fixtures::two_ring();
        let text = serde_json::to_string(&net.to_document()).unwrap();
        let back = load_network(&text).unwrap();
        assert_eq!(back.incidence_matrix(), net.incidence_matrix());
        assert_eq!(back.noise(), net.noise());
        assert_eq!(back.demand(), net.demand());
    }
}
