//! Locally connected weighted graph over a voxel set and its normalized
//! Laplacian.

use std::collections::HashMap;

use crate::sparse::SparseSym;
use crate::voxel::VoxelSet;
use crate::{par, Error, Result};

/// Which grid neighborhood defines the edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face + edge neighbors.
    Eighteen,
    /// Full 3x3x3 shell (default).
    TwentySix,
    /// Every voxel within Chebyshev distance `r`; useful for sparser
    /// samplings where the 1-shell leaves the graph disconnected.
    Radius(u32),
}

impl Connectivity {
    fn radius(self) -> i32 {
        match self {
            Connectivity::Six | Connectivity::Eighteen | Connectivity::TwentySix => 1,
            Connectivity::Radius(r) => r.max(1) as i32,
        }
    }

    fn accepts(self, d: [i32; 3]) -> bool {
        let manhattan = d[0].abs() + d[1].abs() + d[2].abs();
        match self {
            Connectivity::Six => manhattan == 1,
            Connectivity::Eighteen => manhattan <= 2,
            Connectivity::TwentySix | Connectivity::Radius(_) => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphConfig {
    pub connectivity: Connectivity,
    /// The weight bandwidth is `nu = nu_factor * mean edge length`.
    pub nu_factor: f64,
    /// Reject shapes whose largest connected component is smaller than this.
    pub min_component_size: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            connectivity: Connectivity::TwentySix,
            nu_factor: 1.0,
            min_component_size: 10,
        }
    }
}

/// Sparse weighted adjacency + degrees over the retained connected
/// component of a voxel set.
///
/// Weights are `exp(-d^2/nu^2)` for neighboring voxel pairs (Euclidean
/// distance between centers), symmetric, zero diagonal, all in (0, 1].
#[derive(Debug, Clone)]
pub struct ShapeGraph {
    adjacency: SparseSym,
    degrees: Vec<f64>,
    nu: f64,
    /// Original voxel index of each graph node.
    kept: Vec<usize>,
    /// Number of input voxels dropped with smaller components.
    dropped: usize,
}

impl ShapeGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.n()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn dropped_nodes(&self) -> usize {
        self.dropped
    }

    /// Original voxel index behind graph node `i`.
    pub fn original_index(&self, i: usize) -> usize {
        self.kept[i]
    }

    pub fn original_indices(&self) -> &[usize] {
        &self.kept
    }

    pub fn adjacency(&self) -> &SparseSym {
        &self.adjacency
    }

    /// Undirected edges, each reported once with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes()).flat_map(move |i| {
            self.adjacency
                .row(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// Build a graph directly from an edge list (test and oracle helper).
    /// Edges are `(i, j, weight)` with `i != j`, listed once.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], nu: f64) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            assert!(i != j, "self loops are not allowed");
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let adjacency = SparseSym::from_rows(rows);
        let degrees: Vec<f64> = (0..n)
            .map(|i| adjacency.row(i).map(|(_, w)| w).sum())
            .collect();
        ShapeGraph {
            adjacency,
            degrees,
            nu,
            kept: (0..n).collect(),
            dropped: 0,
        }
    }
}

/// Build the weighted neighborhood graph of a voxel set and keep its
/// largest connected component.
pub fn build_graph(voxels: &VoxelSet, config: &GraphConfig) -> Result<ShapeGraph> {
    if voxels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = voxels.len();
    let index: HashMap<[i32; 3], usize> = voxels
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i))
        .collect();

    let offsets = neighbor_offsets(config.connectivity);

    // Neighbor lists with raw Euclidean distances.
    let neighbors: Vec<Vec<(usize, f64)>> = par::map_indexed(n, |i| {
        let p = voxels.points[i];
        let mut row = Vec::new();
        for &off in &offsets {
            let q = [p[0] + off[0], p[1] + off[1], p[2] + off[2]];
            if let Some(&j) = index.get(&q) {
                let d = ((off[0] * off[0] + off[1] * off[1] + off[2] * off[2]) as f64).sqrt();
                row.push((j, d));
            }
        }
        row
    });

    // Largest connected component by BFS.
    let component = largest_component(&neighbors);
    if component.len() < config.min_component_size.max(2) {
        return Err(Error::DegenerateGraph {
            size: component.len(),
            min: config.min_component_size.max(2),
        });
    }
    let dropped = n - component.len();
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in component.iter().enumerate() {
        remap[old] = new;
    }

    // Bandwidth from the mean edge length over the retained component.
    let remap = &remap;
    let (sum_d, count) = component
        .iter()
        .flat_map(|&i| neighbors[i].iter().filter(|&&(j, _)| remap[j] != usize::MAX))
        .fold((0.0f64, 0usize), |(s, c), &(_, d)| (s + d, c + 1));
    let mean_d = sum_d / count as f64; // count > 0: component size >= 2
    let nu = config.nu_factor * mean_d;

    let rows: Vec<Vec<(usize, f64)>> = component
        .iter()
        .map(|&old| {
            neighbors[old]
                .iter()
                .filter(|&&(j, _)| remap[j] != usize::MAX)
                .map(|&(j, d)| (remap[j], (-(d * d) / (nu * nu)).exp()))
                .collect()
        })
        .collect();
    let adjacency = SparseSym::from_rows(rows);
    let degrees: Vec<f64> = (0..component.len())
        .map(|i| adjacency.row(i).map(|(_, w)| w).sum())
        .collect();

    Ok(ShapeGraph {
        adjacency,
        degrees,
        nu,
        kept: component,
        dropped,
    })
}

fn neighbor_offsets(connectivity: Connectivity) -> Vec<[i32; 3]> {
    let r = connectivity.radius();
    let mut offsets = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                let d = [dx, dy, dz];
                if d == [0, 0, 0] || !connectivity.accepts(d) {
                    continue;
                }
                offsets.push(d);
            }
        }
    }
    offsets
}

fn largest_component(neighbors: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = neighbors.len();
    let mut visited = vec![false; n];
    let mut best: Vec<usize> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut comp = vec![start];
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &neighbors[i] {
                if !visited[j] {
                    visited[j] = true;
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort_unstable();
    best
}

/// Symmetric normalized Laplacian `L_sym = I - D^{-1/2} W D^{-1/2}`.
///
/// Its eigenvalues lie in [0, 2]; the smallest is 0 for a connected graph,
/// with eigenvector proportional to `D^{1/2} 1`.
pub fn normalized_laplacian(graph: &ShapeGraph) -> SparseSym {
    let n = graph.n_nodes();
    let inv_sqrt_d: Vec<f64> = graph.degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = graph
                .adjacency
                .row(i)
                .map(|(j, w)| (j, -w * inv_sqrt_d[i] * inv_sqrt_d[j]))
                .collect();
            row.push((i, 1.0));
            row
        })
        .collect();
    SparseSym::from_rows(rows)
}
