//! Per-slot user conflict graph.
//!
//! Two UEs are adjacent when they may not share a PRB: always when they
//! share a serving RU, and across RUs when co-channel operation would push
//! either one below its tolerance-scaled demand. The cross-RU test uses
//! expected fading, so the per-PRB existence check collapses to a single
//! evaluation; a frequency-selective gain model would need the loop over
//! PRBs back.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ids::UeId;
use crate::radio::{per_prb_rate, RadioSnapshot, UeRadio};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    vertices: Vec<UeId>,
    index: BTreeMap<UeId, usize>,
    adjacency: Vec<Vec<bool>>,
    neighbors: Vec<Vec<usize>>,
}

impl ConflictGraph {
    /// Graph with the given vertices and no edges. Duplicates are merged.
    pub fn with_vertices(vertices: impl IntoIterator<Item = UeId>) -> Self {
        let mut vertices: Vec<UeId> = vertices.into_iter().collect();
        vertices.sort();
        vertices.dedup();
        let n = vertices.len();
        let index = vertices.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        Self {
            vertices,
            index,
            adjacency: vec![vec![false; n]; n],
            neighbors: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(
        vertices: impl IntoIterator<Item = UeId>,
        edges: impl IntoIterator<Item = (UeId, UeId)>,
    ) -> Result<Self> {
        let mut g = Self::with_vertices(vertices);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Adds an undirected edge; self-loops are ignored.
    pub fn add_edge(&mut self, u: UeId, v: UeId) -> Result<()> {
        let a = self.idx(u)?;
        let b = self.idx(v)?;
        if a == b || self.adjacency[a][b] {
            return Ok(());
        }
        self.adjacency[a][b] = true;
        self.adjacency[b][a] = true;
        insert_sorted(&mut self.neighbors[a], b);
        insert_sorted(&mut self.neighbors[b], a);
        Ok(())
    }

    fn idx(&self, u: UeId) -> Result<usize> {
        self.index.get(&u).copied().ok_or(Error::UnknownUe(u))
    }

    pub fn vertices(&self) -> &[UeId] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, u: UeId) -> bool {
        self.index.contains_key(&u)
    }

    pub fn adjacent(&self, u: UeId, v: UeId) -> bool {
        match (self.index.get(&u), self.index.get(&v)) {
            (Some(&a), Some(&b)) => self.adjacency[a][b],
            _ => false,
        }
    }

    /// Neighbors in ascending id.
    pub fn neighbors(&self, u: UeId) -> Result<impl Iterator<Item = UeId> + '_> {
        let a = self.idx(u)?;
        Ok(self.neighbors[a].iter().map(|&i| self.vertices[i]))
    }

    pub fn degree(&self, u: UeId) -> Result<usize> {
        Ok(self.neighbors[self.idx(u)?].len())
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(UeId, UeId)> {
        let mut out = Vec::new();
        for (a, ns) in self.neighbors.iter().enumerate() {
            for &b in ns.iter().filter(|&&b| b > a) {
                out.push((self.vertices[a], self.vertices[b]));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Priority-weighted degree `w_u * deg(u)`; missing weights count as 1.
    pub fn weighted_degree(&self, u: UeId, weights: &BTreeMap<UeId, f64>) -> Result<f64> {
        let deg = self.degree(u)?;
        Ok(weights.get(&u).copied().unwrap_or(1.0) * deg as f64)
    }

    /// One `u,v` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u},{v}");
        }
        s
    }
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

/// Rate `u` would get on any PRB with `interferer_ru` as the only
/// co-channel transmitter, under unit-mean fading.
fn expected_pairwise_rate(snapshot: &RadioSnapshot, u: &UeRadio, interferer: &UeRadio) -> f64 {
    let signal = snapshot.ru_power(u.serving_ru) * u.serving_link().pathloss;
    let interference = u
        .link(interferer.serving_ru)
        .map(|l| snapshot.ru_power(interferer.serving_ru) * l.pathloss)
        .unwrap_or(0.0);
    per_prb_rate(
        snapshot.prb_bandwidth_hz,
        signal / (interference + snapshot.noise_power_w),
    )
}

/// Cross-RU edge rule. UEs on the same RU always conflict.
pub fn pairwise_conflict(
    snapshot: &RadioSnapshot,
    u: &UeRadio,
    v: &UeRadio,
    tolerance_u: f64,
    tolerance_v: f64,
) -> bool {
    if u.serving_ru == v.serving_ru {
        return true;
    }
    let ru = expected_pairwise_rate(snapshot, u, v);
    let rv = expected_pairwise_rate(snapshot, v, u);
    ru < (1.0 - tolerance_u) * u.demand_bps || rv < (1.0 - tolerance_v) * v.demand_bps
}

/// Builds the slot's conflict graph. `tolerances` holds the resolved
/// per-UE tolerance; UEs missing from it use 0.
pub fn build_graph(
    snapshot: &RadioSnapshot,
    tolerances: &BTreeMap<UeId, f64>,
) -> Result<ConflictGraph> {
    let mut g = ConflictGraph::with_vertices(snapshot.ue_ids());
    let eta = |u: UeId| tolerances.get(&u).copied().unwrap_or(0.0);
    for (i, u) in snapshot.ues.iter().enumerate() {
        for v in &snapshot.ues[i + 1..] {
            if pairwise_conflict(snapshot, u, v, eta(u.id), eta(v.id)) {
                g.add_edge(u.id, v.id)?;
            }
        }
    }
    Ok(g)
}
