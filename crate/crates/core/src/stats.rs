//! Degree and second-degree statistics of a realized graph.
//!
//! The second degree `d2(t)` counts edge instances that do not touch `t` but
//! touch some neighbor of `t` (a vertex other than `t` sharing an edge with it).
//! Loops at a neighbor count once per loop edge; an edge joining two neighbors
//! counts once.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::MultiGraph;

pub const STATS_SCHEMA: &str = "second-degree/stats/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexStats {
    pub degree: u32,
    pub second_degree: u32,
    pub has_loop: bool,
}

/// Second degree of a single vertex.
pub fn second_degree(g: &MultiGraph, t: u32) -> Result<u32> {
    g.check_vertex(t)?;
    let mut seen: Vec<u32> = Vec::new();
    for u in g.neighbors(t) {
        for &id in g.incident_edges(u) {
            let (a, b) = g.edges()[id as usize];
            if a != t && b != t {
                seen.push(id);
            }
        }
    }
    seen.sort_unstable();
    seen.dedup();
    Ok(seen.len() as u32)
}

/// Second degrees of all vertices; entry `v - 1` belongs to vertex `v`.
///
/// Forests with loops (every `m = 1` realization) take an `O(n)` path where
/// `d2(t) = sum over neighbors u of (edges_at(u) - 1)`. Other multigraphs use a
/// marking pass costing `O(sum of deg(u)^2)`.
pub fn second_degrees(g: &MultiGraph) -> Vec<u32> {
    if g.is_forest_with_loops() {
        forest_second_degrees(g)
    } else {
        general_second_degrees(g)
    }
}

fn forest_second_degrees(g: &MultiGraph) -> Vec<u32> {
    let mut d2 = vec![0u32; g.vertex_count() as usize];
    for &(u, v) in g.edges() {
        if u != v {
            d2[u as usize - 1] += g.edges_at(v) - 1;
            d2[v as usize - 1] += g.edges_at(u) - 1;
        }
    }
    d2
}

pub(crate) fn general_second_degrees(g: &MultiGraph) -> Vec<u32> {
    let n = g.vertex_count() as usize;
    (1..=n as u32)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n + 1], vec![0u32; n + 1]),
            |(stamp, mult), t| {
                let mut distinct = Vec::new();
                for u in g.neighbors(t) {
                    if stamp[u as usize] != t {
                        stamp[u as usize] = t;
                        mult[u as usize] = 0;
                        distinct.push(u);
                    }
                    mult[u as usize] += 1;
                }
                let mut total: u64 = 0;
                let mut between: u64 = 0;
                for &u in &distinct {
                    total += (g.edges_at(u) - mult[u as usize]) as u64;
                    for w in g.neighbors(u) {
                        if w != t && stamp[w as usize] == t {
                            between += 1;
                        }
                    }
                }
                // an edge between two neighbors was seen from both ends
                (total - between / 2) as u32
            },
        )
        .collect()
}

pub fn vertex_stats(g: &MultiGraph) -> Vec<VertexStats> {
    second_degrees(g)
        .into_iter()
        .zip(1..=g.vertex_count())
        .map(|(second_degree, v)| VertexStats {
            degree: g.degree(v),
            second_degree,
            has_loop: g.has_loop(v),
        })
        .collect()
}

/// Count families of one realization, stored sparsely over observed keys.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountTables {
    pub vertex_count: u32,
    /// `k -> #{t : d2(t) = k}`
    pub x: BTreeMap<u32, u64>,
    /// `(l, k) -> #{t : d(t) = l, d2(t) = k, no loop at t}`
    pub n: BTreeMap<(u32, u32), u64>,
    /// `(l, k) -> #{t : d(t) = l, d2(t) = k, loop at t}`
    pub p: BTreeMap<(u32, u32), u64>,
}

impl CountTables {
    pub fn from_stats(stats: &[VertexStats]) -> Self {
        let mut x: HashMap<u32, u64> = HashMap::new();
        let mut n: HashMap<(u32, u32), u64> = HashMap::new();
        let mut p: HashMap<(u32, u32), u64> = HashMap::new();
        for s in stats {
            *x.entry(s.second_degree).or_default() += 1;
            let table = if s.has_loop { &mut p } else { &mut n };
            *table.entry((s.degree, s.second_degree)).or_default() += 1;
        }
        Self {
            vertex_count: stats.len() as u32,
            x: x.into_iter().collect(),
            n: n.into_iter().collect(),
            p: p.into_iter().collect(),
        }
    }

    /// Number of vertices with second degree exactly `k`.
    pub fn x(&self, k: u32) -> u64 {
        self.x.get(&k).copied().unwrap_or(0)
    }

    /// Number of `k`-vertices, i.e. vertices with second degree at least `k`.
    pub fn y(&self, k: u32) -> u64 {
        self.x.range(k..).map(|(_, &c)| c).sum()
    }

    pub fn n_count(&self, l: u32, k: u32) -> u64 {
        self.n.get(&(l, k)).copied().unwrap_or(0)
    }

    pub fn p_count(&self, l: u32, k: u32) -> u64 {
        self.p.get(&(l, k)).copied().unwrap_or(0)
    }

    pub fn max_second_degree(&self) -> u32 {
        self.x.keys().next_back().copied().unwrap_or(0)
    }

    /// Dense `Y(k)` for `k = 0..=max_second_degree + 1`.
    pub fn y_dense(&self) -> Vec<u64> {
        let mut y = vec![0u64; self.max_second_degree() as usize + 2];
        for (&k, &c) in &self.x {
            y[k as usize] += c;
        }
        for k in (0..y.len() - 1).rev() {
            y[k] += y[k + 1];
        }
        y
    }

    /// Dense `X(k)` for `k = 0..=max_second_degree + 1`.
    pub fn x_dense(&self) -> Vec<u64> {
        let mut x = vec![0u64; self.max_second_degree() as usize + 2];
        for (&k, &c) in &self.x {
            x[k as usize] = c;
        }
        x
    }

    /// Rows `k,Y,X` over the dense range.
    pub fn write_k_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# schema: {STATS_SCHEMA}")?;
        writeln!(w, "k,Y,X")?;
        for (k, (y, x)) in self.y_dense().iter().zip(self.x_dense()).enumerate() {
            writeln!(w, "{k},{y},{x}")?;
        }
        Ok(())
    }

    /// Rows `l,k,N,P` over the union of observed keys, sorted by `(l, k)`.
    pub fn write_lk_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# schema: {STATS_SCHEMA}")?;
        writeln!(w, "l,k,N,P")?;
        let mut keys: Vec<(u32, u32)> = self.n.keys().chain(self.p.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        for (l, k) in keys {
            writeln!(w, "{l},{k},{},{}", self.n_count(l, k), self.p_count(l, k))?;
        }
        Ok(())
    }
}

pub fn count_tables(g: &MultiGraph) -> CountTables {
    CountTables::from_stats(&vertex_stats(g))
}

pub fn degree_histogram(g: &MultiGraph) -> BTreeMap<u32, u64> {
    let mut hist: HashMap<u32, u64> = HashMap::new();
    for v in 1..=g.vertex_count() {
        *hist.entry(g.degree(v)).or_default() += 1;
    }
    hist.into_iter().collect()
}
