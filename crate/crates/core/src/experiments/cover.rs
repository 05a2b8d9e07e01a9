//! Stable coordinate covers certifying the k-vertices of an `m = 1` realization.
//!
//! Write `L_v` for the coordinates whose edge ends at `v`. Fixing all of `L_v`
//! fixes every chain that passes through `v`, so `v` keeps at least its current
//! degree under any completion of the remaining coordinates. Every set built
//! here is a union of whole `L_v` blocks.

use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::MultiGraph;
use crate::model::{draw_xi, resolve_targets, ModelRng, XiSequence};
use crate::stats::second_degrees;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StableCover {
    pub k: u32,
    /// Vertices with second degree at least `k`, increasing.
    pub k_vertices: Vec<u32>,
    /// `sets[set_index[j]]` is the coordinate set of `k_vertices[j]`.
    pub set_index: Vec<usize>,
    /// Distinct coordinate sets, each sorted.
    pub sets: Vec<Vec<u32>>,
    /// `C(i)`: number of k-vertices whose set contains coordinate `i` (entry `i - 1`).
    pub multiplicity: Vec<u32>,
    /// `min(2k + 1, C(i))`.
    pub cost: Vec<u32>,
    /// Sizes of the high-degree set, its neighborhood, and the part of the
    /// neighborhood with no edge of its own into the high-degree set.
    pub high_degree: usize,
    pub neighborhood: usize,
    pub back_attached: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WitnessReport {
    pub sets_checked: usize,
    pub completions: u64,
    pub failures: u64,
}

/// Coordinates grouped by the vertex their edge ends at, in CSR form.
struct Arrivals {
    offsets: Vec<usize>,
    coords: Vec<u32>,
}

impl Arrivals {
    fn new(targets: &[u32]) -> Self {
        let n = targets.len();
        let mut offsets = vec![0usize; n + 2];
        for &t in targets {
            offsets[t as usize + 1] += 1;
        }
        for v in 1..offsets.len() {
            offsets[v] += offsets[v - 1];
        }
        let mut cursor = offsets.clone();
        let mut coords = vec![0u32; n];
        for (idx, &t) in targets.iter().enumerate() {
            coords[cursor[t as usize]] = idx as u32 + 1;
            cursor[t as usize] += 1;
        }
        Self { offsets, coords }
    }

    fn of(&self, v: u32) -> &[u32] {
        &self.coords[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }
}

fn chain_graph(targets: &[u32]) -> MultiGraph {
    let edges = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| (i as u32 + 1, t))
        .collect();
    MultiGraph::from_valid_edges(targets.len() as u32, edges)
}

fn check_chain(g: &MultiGraph, seq: &XiSequence) -> Result<()> {
    let n = seq.len();
    let matches = g.vertex_count() as usize == n
        && g.edge_count() == n
        && g.edges()
            .iter()
            .zip(seq.targets())
            .enumerate()
            .all(|(idx, (&(u, v), &t))| u == idx as u32 + 1 && v == t);
    if matches {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "stable covers need the uncollapsed (m = 1) realization of the sequence".into(),
        ))
    }
}

/// Builds the cover for every vertex with second degree at least `k`.
///
/// With `V` the vertices of degree at least `k + 2`, `NV` their other
/// endpoints, and `BV` the members of `NV` whose own edge does not end in `V`,
/// every k-vertex of `NV` gets the shared set `L(V) + L(BV)`. Any other
/// k-vertex `w` scans its neighbors in increasing order, keeping them until
/// their edges not touching `w` number at least `k`, and gets `L(w)` plus
/// the `L` blocks of the kept neighbors.
pub fn build_stable_cover(g: &MultiGraph, seq: &XiSequence, k: u32) -> Result<StableCover> {
    check_chain(g, seq)?;
    let n = seq.len();
    let targets = seq.targets();
    let arrivals = Arrivals::new(targets);
    let d2 = second_degrees(g);

    let high: Vec<bool> = (0..=n as u32)
        .map(|v| v >= 1 && g.degree(v) >= k.saturating_add(2))
        .collect();
    let mut near = vec![false; n + 1];
    for v in (1..=n as u32).filter(|&v| high[v as usize]) {
        for u in g.neighbors(v) {
            near[u as usize] = true;
        }
    }
    let back: Vec<bool> = (0..=n)
        .map(|u| {
            u >= 1 && near[u] && {
                let t = targets[u - 1];
                t == u as u32 || !high[t as usize]
            }
        })
        .collect();

    let mut sets: Vec<Vec<u32>> = Vec::new();
    let mut hub: Option<usize> = None;
    let mut k_vertices = Vec::new();
    let mut set_index = Vec::new();
    for w in 1..=n as u32 {
        if d2[w as usize - 1] < k {
            continue;
        }
        k_vertices.push(w);
        if near[w as usize] {
            let idx = *hub.get_or_insert_with(|| {
                let mut set: Vec<u32> = (1..=n as u32)
                    .filter(|&v| high[v as usize] || back[v as usize])
                    .flat_map(|v| arrivals.of(v).iter().copied())
                    .collect();
                set.sort_unstable();
                sets.push(set);
                sets.len() - 1
            });
            set_index.push(idx);
            continue;
        }
        let mut nbrs: Vec<u32> = g.neighbors(w).collect();
        nbrs.sort_unstable();
        let mut set: Vec<u32> = arrivals.of(w).to_vec();
        let mut reached = 0u32;
        for v in nbrs {
            if reached >= k {
                break;
            }
            reached += g.edges_at(v) - 1;
            set.extend_from_slice(arrivals.of(v));
        }
        set.sort_unstable();
        set.dedup();
        sets.push(set);
        set_index.push(sets.len() - 1);
    }

    let mut users = vec![0u32; sets.len()];
    for &s in &set_index {
        users[s] += 1;
    }
    let mut multiplicity = vec![0u32; n];
    for (set, &count) in sets.iter().zip(&users) {
        for &i in set {
            multiplicity[i as usize - 1] += count;
        }
    }
    let cap = 2 * k + 1;
    let cost = multiplicity.iter().map(|&c| c.min(cap)).collect();
    Ok(StableCover {
        k,
        k_vertices,
        set_index,
        sets,
        multiplicity,
        cost,
        high_degree: high.iter().filter(|&&h| h).count(),
        neighborhood: near.iter().filter(|&&b| b).count(),
        back_attached: back.iter().filter(|&&b| b).count(),
    })
}

/// `(sum of costs, (4k + 5) q)`.
pub fn check_cover_budget(cover: &StableCover) -> (u64, u64) {
    (cover.total_cost(), cover.budget())
}

impl StableCover {
    pub fn q(&self) -> usize {
        self.k_vertices.len()
    }

    pub fn total_cost(&self) -> u64 {
        self.cost.iter().map(|&c| c as u64).sum()
    }

    pub fn budget(&self) -> u64 {
        (4 * self.k as u64 + 5) * self.q() as u64
    }

    pub fn within_budget(&self) -> bool {
        self.total_cost() <= self.budget()
    }

    /// Whether every set that holds a coordinate ending at `w` holds all of them.
    pub fn is_stable(&self, seq: &XiSequence) -> bool {
        let targets = seq.targets();
        let arrivals = Arrivals::new(targets);
        let mut mark = vec![usize::MAX; targets.len() + 1];
        self.sets.iter().enumerate().all(|(s, set)| {
            for &i in set {
                mark[i as usize] = s;
            }
            set.iter().all(|&i| {
                arrivals
                    .of(targets[i as usize - 1])
                    .iter()
                    .all(|&j| mark[j as usize] == s)
            })
        })
    }

    /// Redraws every coordinate outside each set from the model law
    /// `completions` times and counts the completions in which some vertex
    /// certified by the set drops below second degree `k`.
    pub fn check_witness(
        &self,
        seq: &XiSequence,
        a: f64,
        completions: u64,
        seed: u64,
    ) -> WitnessReport {
        let mut members = vec![Vec::new(); self.sets.len()];
        for (&v, &s) in self.k_vertices.iter().zip(&self.set_index) {
            members[s].push(v);
        }
        let xi = seq.xi_values();
        let failures = self
            .sets
            .par_iter()
            .enumerate()
            .map(|(s, set)| {
                let mut fixed = vec![false; xi.len()];
                for &i in set {
                    fixed[i as usize - 1] = true;
                }
                let mut rng = ModelRng::seed_from_u64(seed.wrapping_add(s as u64));
                let mut redrawn = xi.to_vec();
                let mut failed = 0u64;
                for _ in 0..completions {
                    for (idx, x) in redrawn.iter_mut().enumerate() {
                        if !fixed[idx] {
                            *x = draw_xi(idx as u32 + 1, a, &mut rng);
                        }
                    }
                    let d2 = second_degrees(&chain_graph(&resolve_targets(&redrawn)));
                    if members[s].iter().any(|&v| d2[v as usize - 1] < self.k) {
                        failed += 1;
                    }
                }
                failed
            })
            .sum();
        WitnessReport {
            sets_checked: self.sets.len(),
            completions,
            failures,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_sequence, materialize, ModelParams};

    fn realization(a: f64, n: u32, seed: u64) -> (XiSequence, MultiGraph) {
        let p = ModelParams::new(a, 1, n).unwrap();
        let seq = build_sequence(&p, seed).unwrap();
        let g = materialize(&seq, &p).unwrap();
        (seq, g)
    }

    #[test]
    fn arrivals_group_coordinates() {
        let seq = XiSequence::from_xi(vec![1, 1, 3, 5], 0).unwrap();
        let arr = Arrivals::new(seq.targets());
        assert_eq!(arr.of(1), &[1, 2]);
        assert_eq!(arr.of(2), &[3]);
        assert_eq!(arr.of(3), &[4]);
        assert!(arr.of(4).is_empty());
    }

    #[test]
    fn star_uses_the_shared_set() {
        // vertex 1 has degree 6 with a loop; leaves 2..=5 each see 4 other edges
        let seq = XiSequence::from_xi(vec![1, 1, 1, 1, 1], 0).unwrap();
        let p = ModelParams::new(1.0, 1, 5).unwrap();
        let g = materialize(&seq, &p).unwrap();
        let cover = build_stable_cover(&g, &seq, 3).unwrap();
        assert_eq!(cover.k_vertices, vec![2, 3, 4, 5]);
        assert_eq!(cover.sets, vec![vec![1, 2, 3, 4, 5]]);
        assert_eq!(cover.multiplicity, vec![4; 5]);
        assert!(cover.is_stable(&seq));
        assert!(cover.within_budget());
        assert_eq!(cover.check_witness(&seq, 1.0, 20, 0).failures, 0);
    }

    #[test]
    fn empty_when_k_is_out_of_reach() {
        let (seq, g) = realization(1.0, 50, 1);
        let cover = build_stable_cover(&g, &seq, 200).unwrap();
        assert_eq!(cover.q(), 0);
        assert!(cover.sets.is_empty());
        assert_eq!(check_cover_budget(&cover), (0, 0));
    }

    #[test]
    fn rejects_collapsed_graphs() {
        let p = ModelParams::new(1.0, 2, 10).unwrap();
        let seq = build_sequence(&p, 0).unwrap();
        let g = materialize(&seq, &p).unwrap();
        assert!(matches!(
            build_stable_cover(&g, &seq, 2),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn random_realizations_satisfy_all_properties() {
        for (idx, &a) in [0.5, 1.0, 2.0].iter().enumerate() {
            for k in [2, 4, 8] {
                let (seq, g) = realization(a, 300, 40 + idx as u64);
                let cover = build_stable_cover(&g, &seq, k).unwrap();
                assert!(cover.is_stable(&seq), "a={a} k={k}");
                assert!(
                    cover.within_budget(),
                    "a={a} k={k} {:?}",
                    check_cover_budget(&cover)
                );
                let w = cover.check_witness(&seq, a, 10, 5);
                assert_eq!(w.failures, 0, "a={a} k={k}");
                let d2 = second_degrees(&g);
                let expected: Vec<u32> = (1..=300).filter(|&v| d2[v as usize - 1] >= k).collect();
                assert_eq!(cover.k_vertices, expected);
            }
        }
    }

    #[test]
    fn stability_checker_detects_partial_blocks() {
        let seq = XiSequence::from_xi(vec![1, 1, 1, 1, 1], 0).unwrap();
        let p = ModelParams::new(1.0, 1, 5).unwrap();
        let g = materialize(&seq, &p).unwrap();
        let mut cover = build_stable_cover(&g, &seq, 3).unwrap();
        cover.sets[0].pop();
        assert!(!cover.is_stable(&seq));
    }
}
