//! Orthogonal splitting along a steep temporal function, the auxiliary
//! Riemannian metric and isometric embeddings into Minkowski space.

mod obstruction;
mod stress;

pub use obstruction::{embeddability_obstruction_check, ObstructionReport, ObstructionSchedule, PairEstimate, Verdict};
pub use stress::{riemannian_embed, EmbedOptions, EmbedOutcome};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::causality::CausalDag;
use crate::geometry::{GeometryError, GridSpacetime, Metric2, ScalarField};
use crate::temporal::{is_past_timelike, steepness_check, SteepnessReport, TOL_STEEP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("gradient of τ is not past-directed timelike at {} node(s)", nodes.len())]
    NotTimelike { nodes: Vec<usize> },
    #[error("lapse factor too large for the auxiliary metric at {} node(s)", nodes.len())]
    LapseTooLarge { nodes: Vec<usize> },
    #[error("auxiliary metric is not positive definite at {} node(s)", nodes.len())]
    NotPositiveDefinite { nodes: Vec<usize> },
    #[error("target dimension {0} is too small")]
    Dimension(usize),
    #[error("field has {got} values, grid has {want} nodes")]
    Shape { got: usize, want: usize },
    #[error("point {point:?} is not a node at spacing {h}")]
    NotRepresentable { point: [f64; 2], h: f64 },
    #[error(transparent)]
    Causality(#[from] crate::causality::CausalityError),
}

/// g = −β dτ² + g_τ with g_τ(∇τ, ·) = 0.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub tau: ScalarField,
    pub beta: ScalarField,
    /// g_τ in chart coordinates (rank one).
    pub slice_metric: Vec<Metric2>,
    /// g restricted to ker dτ, per unit of the x coordinate.
    pub slice_coefficient: ScalarField,
}

pub fn orthogonal_decomposition(grid: &GridSpacetime, tau: &ScalarField) -> Result<Decomposition, EmbeddingError> {
    check_len(grid, tau)?;
    let v = tau.values();
    let bad: Vec<usize> = (0..grid.len()).filter(|&n| !is_past_timelike(grid, v, n)).collect();
    if !bad.is_empty() {
        return Err(EmbeddingError::NotTimelike { nodes: bad });
    }
    let parts: Vec<(f64, Metric2, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let w = grid.differential(v, n);
            let g = grid.metric(n);
            let beta = -1.0 / grid.inverse_metric(n).norm_sq(w);
            let slice = g.add(&Metric2::outer(w).scaled(beta));
            let along = [-w[1] / w[0], 1.0];
            (beta, slice, g.norm_sq(along))
        })
        .collect();
    Ok(Decomposition {
        tau: tau.clone(),
        beta: ScalarField::new(parts.iter().map(|p| p.0).collect())?,
        slice_metric: parts.iter().map(|p| p.1).collect(),
        slice_coefficient: ScalarField::new(parts.iter().map(|p| p.2).collect())?,
    })
}

fn check_len(grid: &GridSpacetime, f: &ScalarField) -> Result<(), EmbeddingError> {
    if f.len() != grid.len() {
        return Err(EmbeddingError::Shape {
            got: f.len(),
            want: grid.len(),
        });
    }
    Ok(())
}

/// Max over nodes of |β·|∇τ|² − 1|.
pub fn lapse_identity_residual(grid: &GridSpacetime, d: &Decomposition) -> f64 {
    (0..grid.len())
        .map(|n| {
            let w = grid.differential(d.tau.values(), n);
            (d.beta.get(n) * -grid.inverse_metric(n).norm_sq(w) - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct RiemannianMetric {
    pub tau: ScalarField,
    /// Coefficient A of the dτ factor: g_R = (4A² − β) dτ² + g_τ.
    pub time_factor: ScalarField,
    pub metrics: Vec<Metric2>,
}

/// g_R = (4 − β) dτ² + g_τ, which equals g + 4 dτ².
pub fn build_riemannian_metric(grid: &GridSpacetime, d: &Decomposition) -> Result<RiemannianMetric, EmbeddingError> {
    build_riemannian_metric_with(grid, d, &ScalarField::new(vec![1.0; grid.len()])?)
}

/// Variant with a positive time factor A; A = 1/√ε for a lower bound ε on
/// the lapse.
pub fn build_riemannian_metric_with(
    grid: &GridSpacetime,
    d: &Decomposition,
    a: &ScalarField,
) -> Result<RiemannianMetric, EmbeddingError> {
    check_len(grid, a)?;
    let big: Vec<usize> = (0..grid.len())
        .filter(|&n| !(d.beta.get(n) < 4.0 * a.get(n) * a.get(n)))
        .collect();
    if !big.is_empty() {
        return Err(EmbeddingError::LapseTooLarge { nodes: big });
    }
    let metrics: Vec<Metric2> = (0..grid.len())
        .map(|n| {
            let w = grid.differential(d.tau.values(), n);
            let k = 4.0 * a.get(n) * a.get(n) - d.beta.get(n);
            Metric2::outer(w).scaled(k).add(&d.slice_metric[n])
        })
        .collect();
    let bad: Vec<usize> = (0..grid.len()).filter(|&n| !metrics[n].is_positive_definite()).collect();
    if !bad.is_empty() {
        return Err(EmbeddingError::NotPositiveDefinite { nodes: bad });
    }
    Ok(RiemannianMetric {
        tau: d.tau.clone(),
        time_factor: a.clone(),
        metrics,
    })
}

/// Max over nodes of ‖−4A²dτ² + g_R − g‖_F / ‖g‖_F.
pub fn splitting_identity_residual(grid: &GridSpacetime, r: &RiemannianMetric) -> f64 {
    (0..grid.len())
        .map(|n| {
            let w = grid.differential(r.tau.values(), n);
            let a2 = r.time_factor.get(n).powi(2);
            let back = r.metrics[n].sub(&Metric2::outer(w).scaled(4.0 * a2));
            back.sub(grid.metric(n)).frobenius() / grid.metric(n).frobenius()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Riemannian,
    /// Coordinate 0 is time.
    Lorentzian,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingMap {
    pub stage: Stage,
    pub dim: usize,
    pub shape: [usize; 2],
    /// Node-major, `dim` values per node.
    pub coords: Vec<f64>,
}

impl EmbeddingMap {
    pub fn node_count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn point(&self, n: usize) -> &[f64] {
        &self.coords[n * self.dim..(n + 1) * self.dim]
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.coords.iter().skip(k).step_by(self.dim).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

/// i(p) = (2τ(p), f_R(p)).
pub fn assemble_lorentz_embedding(tau: &ScalarField, f_r: &EmbeddingMap) -> EmbeddingMap {
    let dim = f_r.dim + 1;
    let mut coords = Vec::with_capacity(dim * f_r.node_count());
    for n in 0..f_r.node_count() {
        coords.push(2.0 * tau.get(n));
        coords.extend_from_slice(f_r.point(n));
    }
    EmbeddingMap {
        stage: Stage::Lorentzian,
        dim,
        shape: f_r.shape,
        coords,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PullbackReport {
    /// Pullback minus reference metric, one per node (zero on the boundary).
    #[serde(skip)]
    pub residual: Vec<Metric2>,
    /// Interior nodes, ‖residual‖_F / ‖reference‖_F.
    pub rms_relative: f64,
    pub max_relative: f64,
    pub worst_node: usize,
    pub x0_steepness: Option<SteepnessReport>,
}

/// Finite-difference Jacobian pullback of the flat target metric, compared
/// with `reference` at interior nodes.
pub fn verify_pullback(grid: &GridSpacetime, map: &EmbeddingMap, reference: &[Metric2]) -> PullbackReport {
    let comps: Vec<Vec<f64>> = (0..map.dim).map(|k| map.component(k)).collect();
    let sign = |k: usize| if map.stage == Stage::Lorentzian && k == 0 { -1.0 } else { 1.0 };
    let residual: Vec<Metric2> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            if grid.is_boundary(n) {
                return Metric2::new(0.0, 0.0, 0.0);
            }
            let pull = comps.iter().enumerate().fold(Metric2::new(0.0, 0.0, 0.0), |acc, (k, c)| {
                acc.add(&Metric2::outer(grid.differential(c, n)).scaled(sign(k)))
            });
            pull.sub(&reference[n])
        })
        .collect();
    let interior = grid.interior_nodes();
    let rel: Vec<f64> = interior
        .iter()
        .map(|&n| residual[n].frobenius() / reference[n].frobenius())
        .collect();
    let (worst, max_relative) = rel
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
    let rms_relative = (rel.iter().map(|r| r * r).sum::<f64>() / rel.len().max(1) as f64).sqrt();
    let x0_steepness = (map.stage == Stage::Lorentzian).then(|| {
        let x0 = ScalarField::new(comps[0].clone()).expect("finite embedding");
        steepness_check(grid, &x0, &interior, TOL_STEEP)
    });
    PullbackReport {
        residual,
        rms_relative,
        max_relative,
        worst_node: interior.get(worst).copied().unwrap_or(0),
        x0_steepness,
    }
}

/// Count of pairs with d(p,q) > x⁰(i(q)) − x⁰(i(p)) + allowance over the
/// given sources and every q in their future.
pub fn separation_bound_violations(dag: &CausalDag<'_>, map: &EmbeddingMap, sources: &[usize], allowance: f64) -> usize {
    let x0 = map.component(0);
    sources
        .par_iter()
        .map(|&p| {
            let d = crate::causality::time_separation(dag, p);
            (0..x0.len())
                .filter(|&q| d.reachable[q] && d.values[q] > x0[q] - x0[p] + allowance)
                .count()
        })
        .sum()
}
