//! Edge-length least squares for the Riemannian stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{EmbeddingError, EmbeddingMap, RiemannianMetric, Stage};
use crate::geometry::GridSpacetime;

/// Half-stencil of neighbour offsets whose lengths are matched.
const OFFSETS: [(usize, isize); 12] = [
    (0, 1),
    (1, 0),
    (1, 1),
    (1, -1),
    (0, 2),
    (2, 0),
    (1, 2),
    (2, 1),
    (1, -2),
    (2, -1),
    (2, 2),
    (2, -2),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbedOptions {
    pub max_iter: usize,
    /// Stop once the rms relative edge residual drops below this.
    pub rms_tol: f64,
    pub jitter: f64,
    pub seed: u64,
    /// Identify column nx with column 0 (x is periodic with period nx·h_x).
    pub periodic_x: bool,
    /// Keep every k-th objective value in the outcome history.
    pub history_stride: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            max_iter: 100_000,
            rms_tol: 1e-6,
            jitter: 1e-3,
            seed: 0,
            periodic_x: false,
            history_stride: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbedOutcome {
    pub map: EmbeddingMap,
    pub objective: f64,
    /// sqrt of the mean squared relative edge residual (|Δf|² − ℓ²)/ℓ².
    pub rms_edge_residual: f64,
    pub max_edge_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

struct EdgeSet {
    ends: Vec<(usize, usize)>,
    target: Vec<f64>,
    weight: Vec<f64>,
    /// per node: (edge, +1 if the node is the head)
    incident: Vec<Vec<(usize, f64)>>,
}

fn edge_set(grid: &GridSpacetime, metric: &RiemannianMetric, periodic: bool) -> EdgeSet {
    let [ht, hx] = grid.spacing();
    let (nt, nx) = (grid.nt(), grid.nx());
    let mut ends = Vec::new();
    let mut target = Vec::new();
    for p in 0..grid.len() {
        let (i, j) = grid.ij(p);
        for &(di, dj) in &OFFSETS {
            if i + di >= nt {
                continue;
            }
            let jj = j as isize + dj;
            let jj = if periodic {
                jj.rem_euclid(nx as isize)
            } else if jj < 0 || jj >= nx as isize {
                continue;
            } else {
                jj
            };
            let q = grid.node(i + di, jj as usize);
            if q == p {
                continue;
            }
            let v = [di as f64 * ht, dj as f64 * hx];
            let (a, b) = (&metric.metrics[p], &metric.metrics[q]);
            let speed = |s: f64| a.lerp(b, s).norm_sq(v).sqrt();
            let len = (speed(0.0) + 4.0 * speed(0.5) + speed(1.0)) / 6.0;
            ends.push((p, q));
            target.push(len * len);
        }
    }
    let weight = target.iter().map(|l2| 1.0 / (l2 * l2)).collect();
    let mut incident = vec![Vec::new(); grid.len()];
    for (e, &(p, q)) in ends.iter().enumerate() {
        incident[p].push((e, -1.0));
        incident[q].push((e, 1.0));
    }
    EdgeSet {
        ends,
        target,
        weight,
        incident,
    }
}

fn initial_map(grid: &GridSpacetime, metric: &RiemannianMetric, dim: usize, opts: &EmbedOptions) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x_lo = grid.coords(0)[1];
    let period = grid.nx() as f64 * grid.spacing()[1];
    let radius = period / std::f64::consts::TAU;
    let mut coords = vec![0.0; grid.len() * dim];
    for n in 0..grid.len() {
        let x = grid.coords(n)[1];
        let c = &mut coords[n * dim..(n + 1) * dim];
        c[0] = 3f64.sqrt() * metric.tau.get(n);
        if opts.periodic_x && dim >= 3 {
            let theta = (x - x_lo) / radius;
            c[1] = radius * theta.cos();
            c[2] = radius * theta.sin();
        } else if dim >= 2 {
            c[1] = x;
        }
        for v in c.iter_mut() {
            *v += opts.jitter * rng.gen_range(-1.0..1.0);
        }
    }
    coords
}

/// Per-edge relative residuals (|Δf|² − ℓ²)/ℓ².
fn residuals(edges: &EdgeSet, f: &[f64], dim: usize, out: &mut [f64]) {
    out.par_iter_mut()
        .zip(edges.ends.par_iter().zip(&edges.target))
        .for_each(|(r, (&(p, q), &l2))| {
            let d2: f64 = (0..dim).map(|k| (f[q * dim + k] - f[p * dim + k]).powi(2)).sum();
            *r = (d2 - l2) / l2;
        });
}

fn objective(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum()
}

/// Preconditioned descent direction D⁻¹∇F, node by node in a fixed order.
fn direction(edges: &EdgeSet, f: &[f64], res: &[f64], dim: usize, dir: &mut [f64]) -> f64 {
    dir.par_chunks_mut(dim)
        .enumerate()
        .map(|(n, out)| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut h = 1e-12;
            for &(e, s) in &edges.incident[n] {
                let (p, q) = edges.ends[e];
                let coef = 4.0 * edges.weight[e] * res[e] * edges.target[e];
                let mut d2 = 0.0;
                for (k, o) in out.iter_mut().enumerate() {
                    let d = f[q * dim + k] - f[p * dim + k];
                    *o += s * coef * d;
                    d2 += d * d;
                }
                h += 8.0 * edges.weight[e] * d2;
            }
            let mut slope = 0.0;
            for o in out.iter_mut() {
                slope += *o * *o / h;
                *o /= h;
            }
            slope
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Minimises Σ w_e (|f(q) − f(p)|² − ℓ_e²)², w_e = ℓ_e⁻⁴, by diagonally
/// preconditioned gradient descent with backtracking. Not reaching
/// `rms_tol` is reported through `converged`, not as an error.
pub fn riemannian_embed(
    grid: &GridSpacetime,
    metric: &RiemannianMetric,
    dim: usize,
    opts: &EmbedOptions,
) -> Result<EmbedOutcome, EmbeddingError> {
    if dim == 0 {
        return Err(EmbeddingError::Dimension(dim));
    }
    let edges = edge_set(grid, metric, opts.periodic_x);
    let m = edges.ends.len().max(1) as f64;
    let mut f = initial_map(grid, metric, dim, opts);
    let mut res = vec![0.0; edges.ends.len()];
    residuals(&edges, &f, dim, &mut res);
    let mut obj = objective(&res);
    let mut history = vec![obj];
    let mut dir = vec![0.0; f.len()];
    let mut trial = vec![0.0; f.len()];
    let mut tres = vec![0.0; res.len()];
    let mut step = 1.0;
    let mut iterations = 0;
    let stride = opts.history_stride.max(1);
    while iterations < opts.max_iter && (obj / m).sqrt() >= opts.rms_tol {
        let slope = direction(&edges, &f, &res, dim, &mut dir);
        if !(slope > 0.0) {
            break;
        }
        let mut accepted = false;
        while step > 1e-20 {
            trial
                .par_iter_mut()
                .zip(f.par_iter().zip(&dir))
                .for_each(|(t, (a, d))| *t = a - step * d);
            residuals(&edges, &trial, dim, &mut tres);
            let tobj = objective(&tres);
            if tobj <= obj - 1e-4 * step * slope {
                std::mem::swap(&mut f, &mut trial);
                std::mem::swap(&mut res, &mut tres);
                obj = tobj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if iterations % stride == 0 {
            history.push(obj);
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1e3);
    }
    history.push(obj);
    let rms = (obj / m).sqrt();
    let max_edge_residual = res.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(EmbedOutcome {
        map: EmbeddingMap {
            stage: Stage::Riemannian,
            dim,
            shape: [grid.nt(), grid.nx()],
            coords: f,
        },
        objective: obj,
        rms_edge_residual: rms,
        max_edge_residual,
        iterations,
        converged: rms < opts.rms_tol,
        history,
    })
}
