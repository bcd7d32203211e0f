//! Plug-in density-sensitive distance as shortest paths on the interior grid graph.
//!
//! Nodes are the interior nodes of a [`DensityModel`]. Neighboring nodes `u, v`
//! are joined by an edge of weight
//!
//! ```text
//! w(u, v) = |u - v| * (p_hat(u)^-alpha + p_hat(v)^-alpha) / 2
//! ```
//!
//! i.e. the trapezoid rule for the line integral of `p^-alpha` along the edge.
//! Query points snap to the node of the cell containing them; a query that
//! lands on a non-interior node is infinitely far from everything.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityModel, GridSpec};
use crate::error::{Error, Result};
use crate::model::Point;

const NONE: u32 = u32::MAX;

/// Largest graph [`oracle_distance`] will enumerate.
pub const ORACLE_NODE_LIMIT: usize = 16;

/// Neighborhood used to connect grid nodes.
///
/// In `d` dimensions, `N4` joins axis neighbors, `N8` every node of the
/// surrounding `3^d` block, and `N16` additionally the primitive moves with
/// components in `-2..=2` (knight moves in 2-D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    N4,
    #[serde(rename = "8")]
    N8,
    #[default]
    #[serde(rename = "16")]
    N16,
}

impl std::str::FromStr for Connectivity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(Connectivity::N4),
            "8" => Ok(Connectivity::N8),
            "16" => Ok(Connectivity::N16),
            other => Err(Error::Config(format!("connectivity must be 4, 8 or 16, got `{other}`"))),
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone)]
struct Move {
    delta: Vec<i64>,
    /// Nodes the segment passes between; they must be interior for the edge to exist.
    via: Vec<Vec<i64>>,
}

impl Connectivity {
    fn moves(self, d: usize) -> Vec<Move> {
        let reach: i64 = match self {
            Connectivity::N4 | Connectivity::N8 => 1,
            Connectivity::N16 => 2,
        };
        let side = (2 * reach + 1) as usize;
        let total = side.pow(d as u32);
        let mut moves = Vec::new();
        for code in 0..total {
            let mut c = code;
            let delta: Vec<i64> = (0..d)
                .map(|_| {
                    let v = (c % side) as i64 - reach;
                    c /= side;
                    v
                })
                .collect();
            let nonzero = delta.iter().filter(|&&x| x != 0).count();
            if nonzero == 0 {
                continue;
            }
            if self == Connectivity::N4 && nonzero != 1 {
                continue;
            }
            if delta.iter().fold(0, |g, &x| gcd(g, x)) != 1 {
                continue;
            }
            let via = if delta.iter().any(|x| x.abs() == 2) {
                let lo: Vec<i64> = delta.iter().map(|&x| x.div_euclid(2)).collect();
                let hi: Vec<i64> = delta.iter().map(|&x| -(-x).div_euclid(2)).collect();
                if lo == hi {
                    vec![lo]
                } else {
                    vec![lo, hi]
                }
            } else {
                Vec::new()
            };
            moves.push(Move { delta, via });
        }
        moves
    }
}

/// How query points that land on non-interior nodes are treated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapMode {
    /// Infinite distance to everything.
    #[default]
    Strict,
    /// Move to the nearest interior node within `radius`, if any.
    ToInterior { radius: f64 },
}

/// A distance value; `reachable` iff `value` is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub value: f64,
    pub reachable: bool,
}

impl DistanceResult {
    pub const UNREACHABLE: DistanceResult = DistanceResult { value: f64::INFINITY, reachable: false };

    pub fn from_value(value: f64) -> Self {
        DistanceResult { value, reachable: value.is_finite() }
    }
}

/// Single-source distances over the graph's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    values: Vec<f64>,
}

impl DistanceField {
    /// Distance to graph node `node` (compact index).
    pub fn at(&self, node: u32) -> f64 {
        self.values[node as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Weighted graph over the interior nodes of a density model.
#[derive(Debug, Clone)]
pub struct GeodesicGraph {
    grid: GridSpec,
    alpha: f64,
    connectivity: Connectivity,
    snap: SnapMode,
    /// grid index -> node id, or NONE
    node_of_cell: Vec<u32>,
    /// node id -> grid index
    cells: Vec<usize>,
    row_start: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

/// Builds the interior grid graph with trapezoid edge weights.
pub fn build_graph(model: &DensityModel, alpha: f64, connectivity: Connectivity) -> Result<GeodesicGraph> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let grid = model.grid().clone();
    let interior = model.interior_mask();
    let phat = model.phat();

    let cells: Vec<usize> = (0..grid.num_nodes()).filter(|&i| interior[i]).collect();
    if cells.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if cells.len() >= NONE as usize {
        return Err(Error::Domain("too many interior nodes".into()));
    }
    let mut node_of_cell = vec![NONE; grid.num_nodes()];
    for (id, &c) in cells.iter().enumerate() {
        node_of_cell[c] = id as u32;
    }
    let cost: Vec<f64> = cells
        .iter()
        .map(|&c| {
            assert!(phat[c] > 0.0, "interior node with zero density");
            phat[c].powf(-alpha)
        })
        .collect();

    let d = grid.dim();
    let res: Vec<i64> = grid.resolution().iter().map(|&r| r as i64).collect();
    let moves = connectivity.moves(d);
    let lengths: Vec<f64> = moves
        .iter()
        .map(|m| {
            m.delta
                .iter()
                .zip(grid.spacing())
                .map(|(&k, &s)| (k as f64 * s).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let cell_at = |base: &[i64], off: &[i64]| -> Option<u32> {
        let mut idx = 0usize;
        for k in 0..d {
            let c = base[k] + off[k];
            if c < 0 || c >= res[k] {
                return None;
            }
            idx += c as usize * grid.strides()[k];
        }
        let id = node_of_cell[idx];
        (id != NONE).then_some(id)
    };

    let adjacency: Vec<Vec<(u32, f64)>> = cells
        .par_iter()
        .enumerate()
        .map(|(u, &cell)| {
            let mut multi = vec![0usize; d];
            grid.multi_index(cell, &mut multi);
            let base: Vec<i64> = multi.iter().map(|&x| x as i64).collect();
            let mut out = Vec::new();
            for (mv, &len) in moves.iter().zip(&lengths) {
                let Some(v) = cell_at(&base, &mv.delta) else { continue };
                if !mv.via.iter().all(|off| cell_at(&base, off).is_some()) {
                    continue;
                }
                let w = len * (cost[u] + cost[v as usize]) / 2.0;
                out.push((v, w));
            }
            out
        })
        .collect();

    let mut row_start = Vec::with_capacity(cells.len() + 1);
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    row_start.push(0);
    for adj in adjacency {
        for (v, w) in adj {
            targets.push(v);
            weights.push(w);
        }
        row_start.push(targets.len());
    }

    Ok(GeodesicGraph {
        grid,
        alpha,
        connectivity,
        snap: SnapMode::Strict,
        node_of_cell,
        cells,
        row_start,
        targets,
        weights,
    })
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl GeodesicGraph {
    pub fn with_snap_mode(mut self, snap: SnapMode) -> Self {
        self.snap = snap;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        self.cells.len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn node_coords(&self, node: u32) -> Vec<f64> {
        self.grid.node_coords(self.cells[node as usize])
    }

    pub fn neighbors(&self, node: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let range = self.row_start[node as usize]..self.row_start[node as usize + 1];
        self.targets[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    /// Graph node for a query location, honoring the snap mode.
    pub fn snap(&self, x: &[f64]) -> Option<u32> {
        let cell = self.grid.locate(x)?;
        match self.node_of_cell[cell] {
            NONE => match self.snap {
                SnapMode::Strict => None,
                SnapMode::ToInterior { radius } => self.nearest_within(x, radius),
            },
            id => Some(id),
        }
    }

    fn nearest_within(&self, x: &[f64], radius: f64) -> Option<u32> {
        let d = self.grid.dim();
        let mut lo = vec![0usize; d];
        let mut hi = vec![0usize; d];
        for k in 0..d {
            let s = self.grid.spacing()[k];
            let t = (x[k] - self.grid.lower()[k]) / s - 0.5;
            lo[k] = (t - radius / s).ceil().max(0.0) as usize;
            hi[k] = ((t + radius / s).floor() as i64).clamp(0, self.grid.resolution()[k] as i64 - 1) as usize;
            if hi[k] < lo[k] {
                return None;
            }
        }
        let mut cur = lo.clone();
        let mut best: Option<(f64, u32)> = None;
        loop {
            let cell = self.grid.index_of(&cur);
            let id = self.node_of_cell[cell];
            if id != NONE {
                let c = self.grid.node_coords(cell);
                let dist = crate::model::euclidean(&c, x);
                if dist <= radius && best.is_none_or(|(bd, bid)| dist < bd || (dist == bd && id < bid)) {
                    best = Some((dist, id));
                }
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return best.map(|(_, id)| id);
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }

    /// Dijkstra from `source`; stops early once `target` is settled.
    fn shortest_paths(&self, source: u32, target: Option<u32>) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.cells.len()];
        let mut heap = BinaryHeap::new();
        dist[source as usize] = 0.0;
        heap.push(HeapEntry { cost: 0.0, node: source });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node as usize] {
                continue;
            }
            if Some(node) == target {
                break;
            }
            for (next, w) in self.neighbors(node) {
                let candidate = cost + w;
                if candidate < dist[next as usize] {
                    dist[next as usize] = candidate;
                    heap.push(HeapEntry { cost: candidate, node: next });
                }
            }
        }
        dist
    }

    /// Single-source field from graph node `source`.
    pub fn field_from_node(&self, source: u32) -> DistanceField {
        DistanceField { values: self.shortest_paths(source, None) }
    }

    /// Shortest-path distance between two graph nodes.
    pub fn node_distance(&self, a: u32, b: u32) -> f64 {
        self.shortest_paths(a, Some(b))[b as usize]
    }

    /// Distance between two arbitrary points.
    pub fn distance(&self, a: &Point, b: &Point) -> DistanceResult {
        match (self.snap(a.coords()), self.snap(b.coords())) {
            (Some(u), Some(v)) => DistanceResult::from_value(self.node_distance(u, v)),
            _ => DistanceResult::UNREACHABLE,
        }
    }

    /// Single-source field from an arbitrary point; all-infinite when the
    /// point does not snap to an interior node.
    pub fn distances_from(&self, source: &Point) -> DistanceField {
        match self.snap(source.coords()) {
            Some(node) => self.field_from_node(node),
            None => DistanceField { values: vec![f64::INFINITY; self.cells.len()] },
        }
    }

    /// Looks up a query point in a field.
    pub fn lookup(&self, field: &DistanceField, x: &Point) -> DistanceResult {
        match self.snap(x.coords()) {
            Some(node) => DistanceResult::from_value(field.at(node)),
            None => DistanceResult::UNREACHABLE,
        }
    }

    /// Pairwise distance matrix between points (rows computed in parallel).
    pub fn pairwise(&self, points: &[Point]) -> Vec<Vec<DistanceResult>> {
        points
            .par_iter()
            .map(|a| {
                let field = self.distances_from(a);
                points.iter().map(|b| self.lookup(&field, b)).collect()
            })
            .collect()
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..self.cells.len() as u32 {
            if seen[start as usize] {
                continue;
            }
            count += 1;
            seen[start as usize] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for (v, _) in self.neighbors(u) {
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Writes one `u v weight` line per undirected edge (`u < v`).
    pub fn write_edge_list(&self, mut out: impl Write) -> std::io::Result<()> {
        for u in 0..self.cells.len() as u32 {
            for (v, w) in self.neighbors(u) {
                if u < v {
                    writeln!(out, "{u} {v} {w}")?;
                }
            }
        }
        Ok(())
    }
}

/// Exact shortest-path weight between graph nodes by enumerating simple paths.
///
/// Branches whose partial weight already reaches the best complete path are
/// cut; with non-negative weights no cut branch can improve on it. Refuses
/// graphs with more than [`ORACLE_NODE_LIMIT`] nodes.
pub fn oracle_distance(g: &GeodesicGraph, a: u32, b: u32) -> Result<f64> {
    let n = g.node_count();
    if n > ORACLE_NODE_LIMIT {
        return Err(Error::OracleTooLarge { nodes: n, limit: ORACLE_NODE_LIMIT });
    }
    if a as usize >= n || b as usize >= n {
        return Err(Error::Domain(format!("node index out of range for a {n}-node graph")));
    }
    if a == b {
        return Ok(0.0);
    }
    fn walk(g: &GeodesicGraph, node: u32, target: u32, visited: u32, acc: f64, best: &mut f64) {
        for (next, w) in g.neighbors(node) {
            if visited & (1 << next) != 0 {
                continue;
            }
            let total = acc + w;
            if total >= *best {
                continue;
            }
            if next == target {
                *best = total;
            } else {
                walk(g, next, target, visited | (1 << next), total, best);
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(g, a, b, 1 << a, 0.0, &mut best);
    Ok(best)
}
