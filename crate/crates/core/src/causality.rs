//! Discrete causal order on a grid: stencil DAG, J±, longest-path time
//! separation and volume functions.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GridSpacetime, Metric2};
use crate::parser::{EvalError, Expr};

/// Metric samples per edge segment.
pub const K_EDGE: usize = 5;
pub const DEFAULT_STENCIL_RADIUS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CausalityError {
    #[error("stencil radius must be at least 1")]
    StencilRadius,
    #[error("density evaluation failed: {0}")]
    Density(#[from] EvalError),
    #[error("density is negative ({value}) at node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("total mass is not finite")]
    InfiniteMass,
    #[error("node {node} is not in the causal future of the slice")]
    NotInFuture { node: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub node: usize,
    pub weight: f64,
    pub null: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DagOptions {
    pub stencil_radius: usize,
    /// Drop p→q when some two-edge path p→m→q is at least as long.
    pub prune_dominated: bool,
    /// Where the outermost causal stencil direction on a side of the cone is
    /// timelike, add a zero-weight edge along the next direction outside it.
    pub close_cone: bool,
}

impl Default for DagOptions {
    fn default() -> Self {
        DagOptions {
            stencil_radius: DEFAULT_STENCIL_RADIUS,
            prune_dominated: false,
            close_cone: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DagStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub max_out_degree: usize,
    pub stencil_radius: usize,
}

/// Compressed adjacency in both directions.
#[derive(Debug, Clone)]
pub struct CausalDag<'g> {
    grid: &'g GridSpacetime,
    stencil_radius: usize,
    out_start: Vec<usize>,
    out_edges: Vec<Edge>,
    in_start: Vec<usize>,
    in_edges: Vec<Edge>,
}

/// Test the segment p→p+(di·ht, dj·hx) against the cone at K_EDGE samples.
/// Returns `(weight, null)` when every sample is future-directed causal.
fn edge_weight(grid: &GridSpacetime, p: usize, q: usize, v: [f64; 2]) -> Option<(f64, bool)> {
    let mut speeds = [0.0; K_EDGE];
    let mut all_null = true;
    for (k, speed) in speeds.iter_mut().enumerate() {
        let s = k as f64 / (K_EDGE - 1) as f64;
        let g: Metric2 = grid.metric_between(p, q, s);
        let qv = g.norm_sq(v);
        let band = g.null_band(v);
        if qv > band {
            return None;
        }
        if g.dot(v, [1.0, 0.0]) >= 0.0 {
            return None;
        }
        if qv.abs() > band {
            all_null = false;
        }
        *speed = (-qv).max(0.0).sqrt();
    }
    if all_null {
        return Some((0.0, true));
    }
    let n = (K_EDGE - 1) as f64;
    let inner: f64 = speeds[1..K_EDGE - 1].iter().sum();
    let w = (0.5 * (speeds[0] + speeds[K_EDGE - 1]) + inner) / n;
    Some((w, false))
}

pub fn build_causal_dag(grid: &GridSpacetime, stencil_radius: usize) -> Result<CausalDag<'_>, CausalityError> {
    build_causal_dag_with(
        grid,
        DagOptions {
            stencil_radius,
            ..DagOptions::default()
        },
    )
}

pub fn build_causal_dag_with(grid: &GridSpacetime, opts: DagOptions) -> Result<CausalDag<'_>, CausalityError> {
    let r = opts.stencil_radius;
    if r == 0 {
        return Err(CausalityError::StencilRadius);
    }
    let [ht, hx] = grid.spacing();
    let mut offsets = Vec::new();
    for di in 1..=r as isize {
        for dj in -(r as isize)..=r as isize {
            offsets.push((di, dj));
        }
    }
    let mut adjacency: Vec<Vec<Edge>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            offsets
                .iter()
                .filter_map(|&(di, dj)| {
                    let q = grid.offset(p, di, dj)?;
                    let v = [di as f64 * ht, dj as f64 * hx];
                    let (weight, null) = edge_weight(grid, p, q, v)?;
                    Some(Edge { node: q, weight, null })
                })
                .collect()
        })
        .collect();
    if opts.close_cone {
        close_cones(grid, &offsets, &mut adjacency);
    }
    if opts.prune_dominated {
        adjacency = prune(&adjacency);
    }
    Ok(CausalDag::from_adjacency(grid, r, adjacency))
}

/// One offset per slope dj/di, the one with smallest di, sorted by slope.
fn primitive_directions(offsets: &[(isize, isize)]) -> Vec<(isize, isize)> {
    let mut dirs: Vec<(isize, isize)> = Vec::new();
    for &(di, dj) in offsets {
        if !dirs.iter().any(|&(a, b)| b * di == dj * a) {
            dirs.push((di, dj));
        }
    }
    dirs.sort_by(|&(a, b), &(c, d)| (b * c).cmp(&(d * a)));
    dirs
}

fn close_cones(grid: &GridSpacetime, offsets: &[(isize, isize)], adj: &mut [Vec<Edge>]) {
    let [ht, hx] = grid.spacing();
    let dirs = primitive_directions(offsets);
    let vec_of = |(di, dj): (isize, isize)| [di as f64 * ht, dj as f64 * hx];
    adj.par_iter_mut().enumerate().for_each(|(p, out)| {
        let g = grid.metric(p);
        let causal: Vec<usize> = (0..dirs.len())
            .filter(|&k| {
                let v = vec_of(dirs[k]);
                g.norm_sq(v) <= g.null_band(v) && g.dot(v, [1.0, 0.0]) < 0.0
            })
            .collect();
        let (Some(&lo), Some(&hi)) = (causal.first(), causal.last()) else {
            return;
        };
        let timelike = |k: usize| {
            let v = vec_of(dirs[k]);
            g.norm_sq(v) < -g.null_band(v)
        };
        let mut extra = Vec::new();
        if timelike(lo) && lo > 0 {
            extra.push(dirs[lo - 1]);
        }
        if timelike(hi) && hi + 1 < dirs.len() {
            extra.push(dirs[hi + 1]);
        }
        for (di, dj) in extra {
            if let Some(q) = grid.offset(p, di, dj) {
                if !out.iter().any(|e| e.node == q) {
                    out.push(Edge {
                        node: q,
                        weight: 0.0,
                        null: true,
                    });
                }
            }
        }
    });
}

fn prune(adj: &[Vec<Edge>]) -> Vec<Vec<Edge>> {
    adj.par_iter()
        .map(|out| {
            out.iter()
                .filter(|e| {
                    !out.iter().any(|m| {
                        adj[m.node]
                            .iter()
                            .any(|e2| e2.node == e.node && m.weight + e2.weight >= e.weight - 1e-12)
                    })
                })
                .copied()
                .collect()
        })
        .collect()
}

impl<'g> CausalDag<'g> {
    fn from_adjacency(grid: &'g GridSpacetime, stencil_radius: usize, adj: Vec<Vec<Edge>>) -> CausalDag<'g> {
        let n = adj.len();
        let mut out_start = Vec::with_capacity(n + 1);
        let mut out_edges = Vec::new();
        let mut in_count = vec![0usize; n];
        out_start.push(0);
        for list in &adj {
            for e in list {
                in_count[e.node] += 1;
            }
            out_edges.extend_from_slice(list);
            out_start.push(out_edges.len());
        }
        let mut in_start = vec![0usize; n + 1];
        for q in 0..n {
            in_start[q + 1] = in_start[q] + in_count[q];
        }
        let mut fill = in_start.clone();
        let mut in_edges = vec![
            Edge {
                node: 0,
                weight: 0.0,
                null: false
            };
            out_edges.len()
        ];
        for (p, list) in adj.iter().enumerate() {
            for e in list {
                in_edges[fill[e.node]] = Edge { node: p, ..*e };
                fill[e.node] += 1;
            }
        }
        CausalDag {
            grid,
            stencil_radius,
            out_start,
            out_edges,
            in_start,
            in_edges,
        }
    }

    pub fn grid(&self) -> &'g GridSpacetime {
        self.grid
    }

    pub fn stencil_radius(&self) -> usize {
        self.stencil_radius
    }

    pub fn node_count(&self) -> usize {
        self.grid.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.len()
    }

    pub fn out_edges(&self, p: usize) -> &[Edge] {
        &self.out_edges[self.out_start[p]..self.out_start[p + 1]]
    }

    /// Incoming edges of `q`; `Edge::node` is the tail.
    pub fn in_edges(&self, q: usize) -> &[Edge] {
        &self.in_edges[self.in_start[q]..self.in_start[q + 1]]
    }

    /// All edges as `(tail, edge)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        (0..self.node_count()).flat_map(move |p| self.out_edges(p).iter().map(move |e| (p, e)))
    }

    pub fn has_edge(&self, p: usize, q: usize) -> bool {
        self.out_edges(p).iter().any(|e| e.node == q)
    }

    pub fn stats(&self) -> DagStats {
        DagStats {
            node_count: self.node_count(),
            edge_count: self.edge_count(),
            max_out_degree: (0..self.node_count())
                .map(|p| self.out_edges(p).len())
                .max()
                .unwrap_or(0),
            stencil_radius: self.stencil_radius,
        }
    }

    /// Kahn's algorithm; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.node_count();
        let mut indeg: Vec<usize> = (0..n).map(|q| self.in_edges(q).len()).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&q| indeg[q] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(p) = stack.pop() {
            order.push(p);
            for e in self.out_edges(p) {
                indeg[e.node] -= 1;
                if indeg[e.node] == 0 {
                    stack.push(e.node);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    fn reach(&self, seeds: &[usize], forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut stack = Vec::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(p) = stack.pop() {
            let next = if forward { self.out_edges(p) } else { self.in_edges(p) };
            for e in next {
                if !seen[e.node] {
                    seen[e.node] = true;
                    stack.push(e.node);
                }
            }
        }
        seen
    }

    /// Mask of J⁺(seeds), seeds included.
    pub fn future_mask(&self, seeds: &[usize]) -> Vec<bool> {
        self.reach(seeds, true)
    }

    /// Mask of J⁻(seeds), seeds included.
    pub fn past_mask(&self, seeds: &[usize]) -> Vec<bool> {
        self.reach(seeds, false)
    }
}

fn mask_to_nodes(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(n, _)| n).collect()
}

pub fn causal_future(dag: &CausalDag<'_>, p: usize) -> Vec<usize> {
    mask_to_nodes(&dag.future_mask(&[p]))
}

pub fn causal_past(dag: &CausalDag<'_>, p: usize) -> Vec<usize> {
    mask_to_nodes(&dag.past_mask(&[p]))
}

/// J(A, B) = J⁺(A) ∩ J⁻(B).
pub fn causal_diamond(dag: &CausalDag<'_>, from: &[usize], to: &[usize]) -> Vec<usize> {
    let f = dag.future_mask(from);
    let p = dag.past_mask(to);
    (0..f.len()).filter(|&n| f[n] && p[n]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceTable {
    pub source: usize,
    pub values: Vec<f64>,
    pub reachable: Vec<bool>,
}

impl DistanceTable {
    pub fn get(&self, q: usize) -> f64 {
        self.values[q]
    }

    /// Nodes with d > 0, the discrete I⁺(source).
    pub fn chronological_future(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&q| self.values[q] > 0.0).collect()
    }
}

/// Single-source longest path, processed one time row at a time.
pub fn time_separation(dag: &CausalDag<'_>, p: usize) -> DistanceTable {
    let grid = dag.grid();
    let n = grid.len();
    let nx = grid.nx();
    let mut values = vec![0.0; n];
    let mut reachable = vec![false; n];
    reachable[p] = true;
    let (row0, _) = grid.ij(p);
    for i in row0 + 1..grid.nt() {
        let row: Vec<(f64, bool)> = (0..nx)
            .into_par_iter()
            .map(|j| {
                let q = i * nx + j;
                let mut best = 0.0f64;
                let mut hit = false;
                for e in dag.in_edges(q) {
                    if reachable[e.node] {
                        let cand = values[e.node] + e.weight;
                        if !hit || cand > best {
                            best = cand;
                        }
                        hit = true;
                    }
                }
                (best, hit)
            })
            .collect();
        for (j, (d, hit)) in row.into_iter().enumerate() {
            values[i * nx + j] = d;
            reachable[i * nx + j] = hit;
        }
    }
    DistanceTable {
        source: p,
        values,
        reachable,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    pub density: Expr,
    pub finite_mass: bool,
}

impl MeasureSpec {
    pub fn lebesgue() -> MeasureSpec {
        MeasureSpec {
            density: Expr::Const(1.0),
            finite_mass: true,
        }
    }

    /// Density times cell area at every node.
    pub fn node_masses(&self, grid: &GridSpacetime) -> Result<Vec<f64>, CausalityError> {
        let area = grid.cell_area();
        let mut out = Vec::with_capacity(grid.len());
        for n in 0..grid.len() {
            let value = self.density.eval(&grid.coords(n))?;
            if value < 0.0 {
                return Err(CausalityError::NegativeDensity { node: n, value });
            }
            out.push(value * area);
        }
        if self.finite_mass && !out.iter().sum::<f64>().is_finite() {
            return Err(CausalityError::InfiniteMass);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    Future,
    Past,
}

fn mass_of(mask: &[bool], masses: &[f64]) -> f64 {
    mask.iter().zip(masses).filter(|(m, _)| **m).map(|(_, w)| w).sum()
}

/// μ(J^±(p)) with J as the discrete surrogate of I.
pub fn volume_function(
    dag: &CausalDag<'_>,
    measure: &MeasureSpec,
    p: usize,
    sign: Sign,
) -> Result<f64, CausalityError> {
    let masses = measure.node_masses(dag.grid())?;
    Ok(volume_with_masses(dag, &masses, p, sign))
}

pub fn volume_with_masses(dag: &CausalDag<'_>, masses: &[f64], p: usize, sign: Sign) -> f64 {
    let mask = match sign {
        Sign::Future => dag.future_mask(&[p]),
        Sign::Past => dag.past_mask(&[p]),
    };
    mass_of(&mask, masses)
}

/// μ(J(S, x)) with the slice nodes themselves excluded, so x on S gives 0.
pub fn past_volume_of_slab(
    dag: &CausalDag<'_>,
    measure: &MeasureSpec,
    slice: &[usize],
    x: usize,
) -> Result<f64, CausalityError> {
    let masses = measure.node_masses(dag.grid())?;
    let future = dag.future_mask(slice);
    slab_volume(dag, &masses, &future, slice, x)
}

/// Same as `past_volume_of_slab` with J⁺(S) and masses precomputed.
pub fn slab_volume(
    dag: &CausalDag<'_>,
    masses: &[f64],
    future_of_slice: &[bool],
    slice: &[usize],
    x: usize,
) -> Result<f64, CausalityError> {
    if !future_of_slice[x] {
        return Err(CausalityError::NotInFuture { node: x });
    }
    let mut mask = dag.past_mask(&[x]);
    for (m, f) in mask.iter_mut().zip(future_of_slice) {
        *m &= *f;
    }
    for &s in slice {
        mask[s] = false;
    }
    Ok(mass_of(&mask, masses))
}
