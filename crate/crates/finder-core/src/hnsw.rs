//! Hierarchical navigable small-world graph for approximate nearest
//! neighbor search.
//!
//! The build is single-threaded and fully deterministic: node levels come
//! from a seeded ChaCha stream, insertion follows storage order, and every
//! heap ordering breaks distance ties by node id. Neighbor lists are
//! diversity-pruned — a candidate is linked only if it is closer to the
//! base node than to any neighbor already linked — with the closest
//! rejected candidates backfilled so lists stay full. After the
//! incremental pass a refinement sweep re-selects every node's neighbors
//! against the finished graph; incremental insertion picks early nodes'
//! links from a small prefix of the data and never fully revisits them,
//! and the sweep recovers most of the beam recall that costs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Neighbors added per insertion; layer 0 keeps up to `LAYER0_DEGREE_FACTOR * m`.
    pub m: usize,
    /// Beam width while inserting.
    pub ef_construction: usize,
    /// Default beam width while searching (queries use `max(ef_search, top_k)`).
    pub ef_search: usize,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams { m: 16, ef_construction: 200, ef_search: 64 }
    }
}

/// Neighbor-refinement sweeps after the incremental build.
const REFINE_PASSES: usize = 1;

/// Base-layer degree cap as a multiple of `m`. The base layer carries the
/// whole corpus, and beam recall on unstructured vectors scales with its
/// degree, so it keeps more links than the routing layers.
const LAYER0_DEGREE_FACTOR: usize = 4;

/// f64 with a total order so it can live in heaps; ties elsewhere are
/// broken by node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct HnswGraph {
    pub(crate) entry: u32,
    /// layers[l][node] = neighbor node ids; nodes absent from a layer have
    /// empty lists.
    pub(crate) layers: Vec<Vec<Vec<u32>>>,
}

impl HnswGraph {
    /// Build over `n` nodes using `dist(a, b)` (non-negative, symmetric).
    pub(crate) fn build(n: usize, params: &HnswParams, seed: u64, dist: impl Fn(u32, u32) -> f64) -> HnswGraph {
        assert!(n > 0, "graph build needs at least one node");
        let ml = 1.0 / (params.m as f64).ln();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let levels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen::<f64>();
                let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
                (((-u.ln()) * ml).floor() as usize).min(31)
            })
            .collect();

        let mut graph = HnswGraph {
            entry: 0,
            layers: vec![vec![Vec::new(); n]; levels.iter().max().unwrap() + 1],
        };
        let mut entry_level = levels[0];
        let mut visited = vec![0u32; n];
        let mut epoch = 0u32;

        for i in 1..n as u32 {
            let li = levels[i as usize];
            let mut curr = graph.entry;
            for l in (li + 1..=entry_level).rev() {
                curr = graph.greedy_step(l, curr, |j| dist(i, j));
            }
            let mut entry_points = vec![curr];
            for l in (0..=li.min(entry_level)).rev() {
                epoch += 1;
                let found = graph.search_layer(
                    l,
                    &entry_points,
                    params.ef_construction,
                    |j| dist(i, j),
                    &mut visited,
                    epoch,
                );
                let max_m = if l == 0 { LAYER0_DEGREE_FACTOR * params.m } else { params.m };
                for j in select_diverse(&found, params.m, &dist) {
                    graph.layers[l][i as usize].push(j);
                    graph.layers[l][j as usize].push(i);
                    if graph.layers[l][j as usize].len() > max_m {
                        graph.prune(l, j, max_m, &dist);
                    }
                }
                entry_points = found.into_iter().map(|(_, j)| j).collect();
            }
            if li > entry_level {
                graph.entry = i;
                entry_level = li;
            }
        }
        for _ in 0..REFINE_PASSES {
            graph.refine(&levels, params, &dist, &mut visited, &mut epoch);
        }
        graph
    }

    /// Second pass over the finished graph: re-select every node's
    /// neighbors using the full corpus. The incremental build picks early
    /// nodes' links from a small prefix and never fully revisits them,
    /// which hurts beam recall on unstructured data; one refinement pass
    /// closes most of that gap.
    fn refine(
        &mut self,
        levels: &[usize],
        params: &HnswParams,
        dist: &impl Fn(u32, u32) -> f64,
        visited: &mut [u32],
        epoch: &mut u32,
    ) {
        let n = levels.len();
        let entry_level = self.layers.len() - 1;
        for i in 0..n as u32 {
            let li = levels[i as usize];
            let mut curr = self.entry;
            for l in (li + 1..=entry_level).rev() {
                curr = self.greedy_step(l, curr, |j| dist(i, j));
            }
            let mut entry_points = vec![curr];
            for l in (0..=li.min(entry_level)).rev() {
                *epoch += 1;
                let found = self.search_layer(
                    l,
                    &entry_points,
                    params.ef_construction,
                    |j| dist(i, j),
                    visited,
                    *epoch,
                );
                let max_m = if l == 0 { LAYER0_DEGREE_FACTOR * params.m } else { params.m };
                let mut candidates: Vec<(Dist, u32)> = found
                    .iter()
                    .map(|&(d, j)| (d, j))
                    .chain(
                        self.layers[l][i as usize]
                            .iter()
                            .map(|&j| (Dist(dist(i, j)), j)),
                    )
                    .filter(|&(_, j)| j != i)
                    .collect();
                candidates.sort_unstable();
                candidates.dedup_by_key(|&mut (_, j)| j);
                let selected = select_diverse_from(&candidates, max_m, |a, b| dist(a, b));
                self.layers[l][i as usize] = selected.clone();
                for j in selected {
                    if !self.layers[l][j as usize].contains(&i) {
                        self.layers[l][j as usize].push(i);
                        if self.layers[l][j as usize].len() > max_m {
                            self.prune(l, j, max_m, dist);
                        }
                    }
                }
                entry_points = found.into_iter().map(|(_, j)| j).collect();
            }
        }
    }

    /// Approximate nearest nodes: greedy descent through the upper layers,
    /// then a beam search on layer 0. Returns `(dist, node)` ascending.
    pub(crate) fn search(&self, ef: usize, top_k: usize, dist: impl Fn(u32) -> f64) -> Vec<(f64, u32)> {
        let n = self.layers[0].len();
        let mut curr = self.entry;
        for l in (1..self.layers.len()).rev() {
            curr = self.greedy_step(l, curr, &dist);
        }
        let mut visited = vec![0u32; n];
        let mut found = self.search_layer(0, &[curr], ef.max(top_k), &dist, &mut visited, 1);
        found.truncate(top_k);
        found.into_iter().map(|(d, node)| (d.0, node)).collect()
    }

    /// Move greedily within a layer until no neighbor is strictly closer.
    fn greedy_step(&self, layer: usize, start: u32, dist: impl Fn(u32) -> f64) -> u32 {
        let mut best = start;
        let mut best_d = dist(start);
        loop {
            let mut improved = false;
            for &nb in &self.layers[layer][best as usize] {
                let d = dist(nb);
                if d < best_d || (d == best_d && nb < best) {
                    best = nb;
                    best_d = d;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search within one layer; returns up to `ef` nodes as
    /// `(dist, node)` sorted ascending. `visited` is an epoch array reused
    /// across calls (stamped with `epoch`) to avoid reallocation.
    fn search_layer(
        &self,
        layer: usize,
        entry_points: &[u32],
        ef: usize,
        dist: impl Fn(u32) -> f64,
        visited: &mut [u32],
        epoch: u32,
    ) -> Vec<(Dist, u32)> {
        let mut candidates: BinaryHeap<Reverse<(Dist, u32)>> = BinaryHeap::new();
        let mut results: BinaryHeap<(Dist, u32)> = BinaryHeap::new();
        for &ep in entry_points {
            if visited[ep as usize] == epoch {
                continue;
            }
            visited[ep as usize] = epoch;
            let d = Dist(dist(ep));
            candidates.push(Reverse((d, ep)));
            results.push((d, ep));
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse((d, c))) = candidates.pop() {
            if results.len() >= ef && d > results.peek().unwrap().0 {
                break;
            }
            for &e in &self.layers[layer][c as usize] {
                if visited[e as usize] == epoch {
                    continue;
                }
                visited[e as usize] = epoch;
                let de = Dist(dist(e));
                if results.len() < ef || (de, e) < *results.peek().unwrap() {
                    candidates.push(Reverse((de, e)));
                    results.push((de, e));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out = results.into_vec();
        out.sort_unstable();
        out
    }

    /// Re-select the neighbors of an overfull `node` with the diversity
    /// rule, keeping at most `cap`.
    fn prune(&mut self, layer: usize, node: u32, cap: usize, dist: &impl Fn(u32, u32) -> f64) {
        let list = std::mem::take(&mut self.layers[layer][node as usize]);
        let mut candidates: Vec<(Dist, u32)> =
            list.into_iter().map(|j| (Dist(dist(node, j)), j)).collect();
        candidates.sort_unstable();
        candidates.dedup_by_key(|&mut (_, j)| j);
        self.layers[layer][node as usize] =
            select_diverse_from(&candidates, cap, |a, b| dist(a, b));
    }
}

/// Neighbor selection for a new node: candidates sorted ascending by
/// distance to it, thinned with the diversity rule.
fn select_diverse(
    candidates: &[(Dist, u32)],
    cap: usize,
    dist: &impl Fn(u32, u32) -> f64,
) -> Vec<u32> {
    select_diverse_from(candidates, cap, |a, b| dist(a, b))
}

/// Walk `candidates` (ascending by distance to the base point) and keep a
/// candidate only if it is strictly closer to the base point than to every
/// candidate already kept. Stops once `cap` survive. This is the standard
/// navigability heuristic: it spreads links across directions instead of
/// clustering them on one side.
fn select_diverse_from(
    candidates: &[(Dist, u32)],
    cap: usize,
    mut between: impl FnMut(u32, u32) -> f64,
) -> Vec<u32> {
    let mut kept: Vec<u32> = Vec::with_capacity(cap.min(candidates.len()));
    let mut rejected: Vec<u32> = Vec::new();
    for &(d, c) in candidates {
        if kept.len() >= cap {
            break;
        }
        if kept.iter().all(|&s| Dist(between(c, s)) > d) {
            kept.push(c);
        } else {
            rejected.push(c);
        }
    }
    // Backfill with the closest rejected candidates so every node keeps a full
    // complement of links; without this the graph thins out and beam search
    // misses true neighbors at moderate beam widths.
    for c in rejected {
        if kept.len() >= cap {
            break;
        }
        kept.push(c);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Points on a line: dist(a, b) = |a - b| over node index.
    fn line_graph(n: usize) -> HnswGraph {
        HnswGraph::build(n, &HnswParams::default(), 7, |a, b| {
            (a as f64 - b as f64).abs()
        })
    }

    #[test]
    fn search_finds_exact_point_on_line() {
        let g = line_graph(200);
        for target in [0u32, 17, 99, 199] {
            let hits = g.search(64, 3, |j| (j as f64 - target as f64).abs());
            assert_eq!(hits[0].1, target);
            assert_eq!(hits[0].0, 0.0);
        }
    }

    #[test]
    fn neighbors_stay_in_bounds_and_undirected_at_layer0() {
        let g = line_graph(120);
        let n = g.layers[0].len() as u32;
        for (layer, nodes) in g.layers.iter().enumerate() {
            for (i, nbs) in nodes.iter().enumerate() {
                for &nb in nbs {
                    assert!(nb < n);
                    assert_ne!(nb as usize, i, "self-loop at layer {layer}");
                }
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = line_graph(150);
        let b = line_graph(150);
        assert_eq!(a, b);
        let c = HnswGraph::build(150, &HnswParams::default(), 8, |x, y| {
            (x as f64 - y as f64).abs()
        });
        assert_ne!(a, c, "different seeds should differ at this size");
    }

    #[test]
    fn layer0_degree_is_capped() {
        let g = line_graph(400);
        let cap = LAYER0_DEGREE_FACTOR * HnswParams::default().m;
        assert!(g.layers[0].iter().all(|nbs| nbs.len() <= cap));
    }

    #[test]
    fn upper_layer_degree_is_capped() {
        let g = line_graph(400);
        let cap = HnswParams::default().m;
        for layer in g.layers.iter().skip(1) {
            assert!(layer.iter().all(|nbs| nbs.len() <= cap));
        }
    }
}
