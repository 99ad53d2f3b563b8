//! PRB allocation as partial graph coloring with `P` colors.
//!
//! Every scheme returns a proper partial coloring: a UE that cannot be given
//! a PRB without clashing with a colored neighbor is left uncolored.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::graph::ConflictGraph;
use crate::ids::UeId;
use crate::policy::ColoringScheme;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub prb_count: usize,
    pub colors: BTreeMap<UeId, usize>,
    pub uncolored: BTreeSet<UeId>,
}

impl Coloring {
    pub fn empty(prb_count: usize) -> Self {
        Self {
            prb_count,
            colors: BTreeMap::new(),
            uncolored: BTreeSet::new(),
        }
    }

    pub fn colors_used(&self) -> usize {
        self.colors.values().collect::<BTreeSet<_>>().len()
    }

    pub fn color_of(&self, u: UeId) -> Option<usize> {
        self.colors.get(&u).copied()
    }
}

/// True iff no edge joins two UEs with the same PRB, every PRB is in range
/// and colored/uncolored partition the vertex set.
pub fn verify_coloring(g: &ConflictGraph, c: &Coloring) -> bool {
    if c.colors.values().any(|&p| p >= c.prb_count) {
        return false;
    }
    if c.colors.keys().any(|u| c.uncolored.contains(u)) {
        return false;
    }
    if c.colors.len() + c.uncolored.len() != g.len() {
        return false;
    }
    if !c.colors.keys().chain(&c.uncolored).all(|&u| g.contains(u)) {
        return false;
    }
    g.edges()
        .into_iter()
        .all(|(u, v)| match (c.color_of(u), c.color_of(v)) {
            (Some(a), Some(b)) => a != b,
            _ => true,
        })
}

fn blocked(g: &ConflictGraph, colors: &BTreeMap<UeId, usize>, u: UeId, prb_count: usize) -> Vec<bool> {
    let mut used = vec![false; prb_count];
    for v in g.neighbors(u).expect("vertex of graph") {
        if let Some(&p) = colors.get(&v) {
            used[p] = true;
        }
    }
    used
}

fn first_fit(g: &ConflictGraph, prb_count: usize, order: &[UeId]) -> Coloring {
    let mut c = Coloring::empty(prb_count);
    for &u in order {
        let used = blocked(g, &c.colors, u, prb_count);
        match used.iter().position(|&b| !b) {
            Some(p) => {
                c.colors.insert(u, p);
            }
            None => {
                c.uncolored.insert(u);
            }
        }
    }
    c
}

/// Vertices by descending weighted degree, ties by ascending id.
pub fn welsh_powell_order(g: &ConflictGraph, weights: &BTreeMap<UeId, f64>) -> Vec<UeId> {
    let mut order: Vec<(f64, UeId)> = g
        .vertices()
        .iter()
        .map(|&u| (g.weighted_degree(u, weights).expect("vertex"), u))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    order.into_iter().map(|(_, u)| u).collect()
}

fn dsatur(g: &ConflictGraph, prb_count: usize, weights: &BTreeMap<UeId, f64>) -> Coloring {
    let mut c = Coloring::empty(prb_count);
    let mut pending: BTreeSet<UeId> = g.vertices().iter().copied().collect();
    let wdeg: BTreeMap<UeId, f64> = g
        .vertices()
        .iter()
        .map(|&u| (u, g.weighted_degree(u, weights).expect("vertex")))
        .collect();
    while !pending.is_empty() {
        let saturation = |u: UeId| {
            g.neighbors(u)
                .expect("vertex")
                .filter_map(|v| c.colors.get(&v))
                .collect::<BTreeSet<_>>()
                .len()
        };
        let u = pending
            .iter()
            .copied()
            .map(|u| (saturation(u), wdeg[&u], u))
            .max_by(|a, b| {
                a.0.cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(b.2.cmp(&a.2))
            })
            .map(|t| t.2)
            .expect("non-empty");
        pending.remove(&u);
        let used = blocked(g, &c.colors, u, prb_count);
        match used.iter().position(|&b| !b) {
            Some(p) => {
                c.colors.insert(u, p);
            }
            None => {
                c.uncolored.insert(u);
            }
        }
    }
    c
}

fn random<R: Rng + ?Sized>(g: &ConflictGraph, prb_count: usize, rng: &mut R) -> Coloring {
    let mut c = Coloring::empty(prb_count);
    for &u in g.vertices() {
        let p = rng.random_range(0..prb_count);
        if blocked(g, &c.colors, u, prb_count)[p] {
            c.uncolored.insert(u);
        } else {
            c.colors.insert(u, p);
        }
    }
    c
}

/// PRB `k` to the `k`-th UE in id order until the PRBs run out. No PRB is
/// reused, so the result is proper for any graph.
fn sequential(g: &ConflictGraph, prb_count: usize) -> Coloring {
    let mut c = Coloring::empty(prb_count);
    for (k, &u) in g.vertices().iter().enumerate() {
        if k < prb_count {
            c.colors.insert(u, k);
        } else {
            c.uncolored.insert(u);
        }
    }
    c
}

/// Colors `g` with PRBs `0..prb_count` using `scheme`. `weights` maps UEs
/// to priorities (missing entries count as 1); `rng` is only drawn from by
/// the random scheme.
pub fn color<R: Rng + ?Sized>(
    g: &ConflictGraph,
    prb_count: usize,
    weights: &BTreeMap<UeId, f64>,
    scheme: ColoringScheme,
    rng: &mut R,
) -> Coloring {
    assert!(prb_count >= 1, "coloring needs at least one PRB");
    match scheme {
        ColoringScheme::Random => random(g, prb_count, rng),
        ColoringScheme::Sequential => sequential(g, prb_count),
        ColoringScheme::Greedy => first_fit(g, prb_count, g.vertices()),
        ColoringScheme::WelshPowell => first_fit(g, prb_count, &welsh_powell_order(g, weights)),
        ColoringScheme::Dsatur => dsatur(g, prb_count, weights),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn graph(n: u32, edges: &[(u32, u32)]) -> ConflictGraph {
        ConflictGraph::from_edges(
            (0..n).map(UeId),
            edges.iter().map(|&(a, b)| (UeId(a), UeId(b))),
        )
        .unwrap()
    }

    fn run(g: &ConflictGraph, p: usize, s: ColoringScheme) -> Coloring {
        let mut rng = stream_rng(9, Stream::Coloring, &[]);
        color(g, p, &BTreeMap::new(), s, &mut rng)
    }

    #[test]
    fn triangle_with_three_prbs() {
        let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        for s in [
            ColoringScheme::Sequential,
            ColoringScheme::Greedy,
            ColoringScheme::WelshPowell,
            ColoringScheme::Dsatur,
        ] {
            let c = run(&k3, 3, s);
            assert!(verify_coloring(&k3, &c));
            assert!(c.uncolored.is_empty(), "{s}");
            assert_eq!(c.colors_used(), 3);
        }
    }

    #[test]
    fn triangle_with_two_prbs_leaves_one_out() {
        let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        for s in [
            ColoringScheme::Sequential,
            ColoringScheme::Greedy,
            ColoringScheme::WelshPowell,
            ColoringScheme::Dsatur,
        ] {
            let c = run(&k3, 2, s);
            assert!(verify_coloring(&k3, &c));
            assert_eq!(c.uncolored.len(), 1, "{s}");
        }
        // random may lose more, never fewer
        for seed in 0..50 {
            let mut rng = stream_rng(seed, Stream::Coloring, &[]);
            let c = color(&k3, 2, &BTreeMap::new(), ColoringScheme::Random, &mut rng);
            assert!(verify_coloring(&k3, &c));
            assert!(!c.uncolored.is_empty());
        }
    }

    #[test]
    fn path_center_first_under_welsh_powell() {
        // a=0, b=1 (center), c=2
        let path = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(welsh_powell_order(&path, &BTreeMap::new())[0], UeId(1));
        let c = run(&path, 2, ColoringScheme::WelshPowell);
        assert_eq!(c.color_of(UeId(1)), Some(0));
        assert_eq!(c.color_of(UeId(0)), Some(1));
        assert_eq!(c.color_of(UeId(2)), Some(1));
        assert!(c.uncolored.is_empty());
    }

    #[test]
    fn weights_reorder_welsh_powell() {
        // two disjoint edges; weighting UE 3 puts it first
        let g = graph(4, &[(0, 1), (2, 3)]);
        let w: BTreeMap<UeId, f64> = [(UeId(3), 2.0)].into();
        assert_eq!(welsh_powell_order(&g, &w), vec![UeId(3), UeId(0), UeId(1), UeId(2)]);
    }

    #[test]
    fn dsatur_prefers_saturated_vertices() {
        // 5-cycle needs 3 colors; dsatur finds it
        let c5 = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let c = run(&c5, 3, ColoringScheme::Dsatur);
        assert!(verify_coloring(&c5, &c));
        assert!(c.uncolored.is_empty());
        assert_eq!(c.colors_used(), 3);
    }

    #[test]
    fn sequential_hands_out_each_prb_once() {
        let empty = graph(5, &[]);
        let c = run(&empty, 3, ColoringScheme::Sequential);
        assert_eq!(c.colors.len(), 3);
        assert_eq!(c.uncolored, [UeId(3), UeId(4)].into());
    }

    #[test]
    fn random_is_seed_deterministic() {
        let g = graph(12, &[(0, 1), (2, 3), (4, 5), (1, 7), (8, 9), (10, 11), (0, 11)]);
        let a = run(&g, 3, ColoringScheme::Random);
        let b = run(&g, 3, ColoringScheme::Random);
        assert_eq!(a, b);
    }

    #[test]
    fn verify_rejects_improper() {
        let g = graph(2, &[(0, 1)]);
        let mut bad = Coloring::empty(2);
        bad.colors.insert(UeId(0), 1);
        bad.colors.insert(UeId(1), 1);
        assert!(!verify_coloring(&g, &bad));
        let mut out_of_range = Coloring::empty(2);
        out_of_range.colors.insert(UeId(0), 2);
        out_of_range.uncolored.insert(UeId(1));
        assert!(!verify_coloring(&g, &out_of_range));
        let mut missing = Coloring::empty(2);
        missing.colors.insert(UeId(0), 0);
        assert!(!verify_coloring(&g, &missing));
        assert!(verify_coloring(&graph(0, &[]), &Coloring::empty(1)));
    }
}
