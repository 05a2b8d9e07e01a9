//! Loop- and multi-edge-aware undirected multigraph with a CSR incidence index.
//!
//! Vertices are 1-based. Each edge instance is stored once in `edges`; a loop
//! `(v, v)` appears once in the incidence list of `v` but contributes 2 to its
//! degree.

use crate::error::{Error, Result};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiGraph {
    vertex_count: u32,
    edges: Vec<(u32, u32)>,
    // offsets[v]..offsets[v + 1] indexes `incidence` for vertex v; slot 0 unused.
    offsets: Vec<usize>,
    incidence: Vec<u32>,
    loops: Vec<u32>,
}

impl MultiGraph {
    pub fn new(vertex_count: u32, edges: Vec<(u32, u32)>) -> Result<Self> {
        if let Some(&(u, v)) = edges
            .iter()
            .find(|&&(u, v)| u == 0 || v == 0 || u > vertex_count || v > vertex_count)
        {
            return Err(Error::Consistency(format!(
                "edge ({u}, {v}) has an endpoint outside 1..={vertex_count}"
            )));
        }
        if edges.len() > u32::MAX as usize {
            return Err(Error::Budget(format!(
                "{} edges exceed u32 ids",
                edges.len()
            )));
        }
        Ok(Self::from_valid_edges(vertex_count, edges))
    }

    pub(crate) fn from_valid_edges(vertex_count: u32, edges: Vec<(u32, u32)>) -> Self {
        let n = vertex_count as usize;
        let mut loops = vec![0u32; n + 1];
        let mut offsets = vec![0usize; n + 2];
        for &(u, v) in &edges {
            offsets[u as usize + 1] += 1;
            if u == v {
                loops[u as usize] += 1;
            } else {
                offsets[v as usize + 1] += 1;
            }
        }
        for v in 1..offsets.len() {
            offsets[v] += offsets[v - 1];
        }
        let mut cursor = offsets.clone();
        let mut incidence = vec![0u32; offsets[n + 1]];
        for (id, &(u, v)) in edges.iter().enumerate() {
            incidence[cursor[u as usize]] = id as u32;
            cursor[u as usize] += 1;
            if u != v {
                incidence[cursor[v as usize]] = id as u32;
                cursor[v as usize] += 1;
            }
        }
        Self {
            vertex_count,
            edges,
            offsets,
            incidence,
            loops,
        }
    }

    pub fn vertex_count(&self) -> u32 {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in insertion (coordinate) order.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn contains(&self, v: u32) -> bool {
        v >= 1 && v <= self.vertex_count
    }

    pub(crate) fn check_vertex(&self, v: u32) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "vertex {v} outside 1..={}",
                self.vertex_count
            )))
        }
    }

    /// Ids of edge instances incident to `v`; a loop is listed once.
    pub fn incident_edges(&self, v: u32) -> &[u32] {
        &self.incidence[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    /// Number of edge instances touching `v` (a loop counts once).
    pub fn edges_at(&self, v: u32) -> u32 {
        (self.offsets[v as usize + 1] - self.offsets[v as usize]) as u32
    }

    pub fn loop_count(&self, v: u32) -> u32 {
        self.loops[v as usize]
    }

    pub fn has_loop(&self, v: u32) -> bool {
        self.loops[v as usize] > 0
    }

    /// Degree of `v`, with every loop contributing 2.
    pub fn degree(&self, v: u32) -> u32 {
        self.edges_at(v) + self.loops[v as usize]
    }

    /// Degrees of all vertices; entry `v - 1` belongs to vertex `v`.
    pub fn degrees(&self) -> Vec<u32> {
        (1..=self.vertex_count).map(|v| self.degree(v)).collect()
    }

    /// Other endpoints of the non-loop edges at `v`, repeated once per parallel edge.
    pub fn neighbors(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.incident_edges(v).iter().filter_map(move |&id| {
            let (a, b) = self.edges[id as usize];
            match (a == v, b == v) {
                (true, true) => None,
                (true, false) => Some(b),
                _ => Some(a),
            }
        })
    }

    /// True when the non-loop edges form a forest: no cycles and no parallel edges.
    /// Every realization of the uncollapsed chain has this shape.
    pub fn is_forest_with_loops(&self) -> bool {
        let mut uf = UnionFind::new(self.vertex_count as usize + 1);
        self.edges.iter().all(|&(u, v)| u == v || uf.union(u, v))
    }
}
