//! One-sided embeddability test: time separation blowing up under refinement.

use serde::Serialize;

use super::EmbeddingError;
use crate::causality::{build_causal_dag, time_separation, DEFAULT_STENCIL_RADIUS};
use crate::geometry::{build_grid, Interval, SpacetimeSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionSchedule {
    /// Grid spacings, coarse to fine.
    pub spacings: Vec<f64>,
    /// Half-plane chart `coordinate > 0`: at spacing h the grid starts at h.
    pub floor_coordinate: Option<usize>,
    pub stencil_radius: usize,
    /// Each estimate must exceed this factor times the previous one...
    pub growth: f64,
    /// ...and the last one this factor times the flat-space value.
    pub flat_factor: f64,
}

impl Default for ObstructionSchedule {
    fn default() -> Self {
        ObstructionSchedule {
            spacings: vec![0.2, 0.1, 0.05],
            floor_coordinate: None,
            stencil_radius: DEFAULT_STENCIL_RADIUS,
            growth: 1.5,
            flat_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Divergent,
    /// No claim of embeddability.
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEstimate {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub estimates: Vec<f64>,
    /// √(Δt² − Δx²) of the coordinate pair, 0 if not timelike.
    pub flat_value: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionReport {
    pub schedule: ObstructionSchedule,
    pub pairs: Vec<PairEstimate>,
    pub verdict: Verdict,
}

fn verdict(estimates: &[f64], flat: f64, s: &ObstructionSchedule) -> Verdict {
    let growing = estimates.len() >= 3
        && estimates[0] > 0.0
        && estimates.windows(2).all(|w| w[1] > s.growth * w[0]);
    let last = estimates.last().copied().unwrap_or(0.0);
    if growing && last > s.flat_factor * flat {
        Verdict::Divergent
    } else {
        Verdict::Bounded
    }
}

pub fn embeddability_obstruction_check(
    spec: &SpacetimeSpec,
    pairs: &[([f64; 2], [f64; 2])],
    schedule: &ObstructionSchedule,
) -> Result<ObstructionReport, EmbeddingError> {
    let mut estimates = vec![Vec::with_capacity(schedule.spacings.len()); pairs.len()];
    for &h in &schedule.spacings {
        let mut domain = spec.domain;
        if let Some(k) = schedule.floor_coordinate {
            domain[k] = Interval { lo: h, hi: domain[k].hi };
        }
        let grid = build_grid(&spec.with_domain(domain), [h, h])?;
        let dag = build_causal_dag(&grid, schedule.stencil_radius)?;
        for (est, &(p, q)) in estimates.iter_mut().zip(pairs) {
            let node = |point: [f64; 2]| -> Result<usize, EmbeddingError> {
                let (n, dist) = grid.nearest_node(point)?;
                if dist > 1e-9 * (1.0 + h) {
                    return Err(EmbeddingError::NotRepresentable { point, h });
                }
                Ok(n)
            };
            let (a, b) = (node(p)?, node(q)?);
            est.push(time_separation(&dag, a).values[b]);
        }
    }
    let pairs: Vec<PairEstimate> = pairs
        .iter()
        .zip(estimates)
        .map(|(&(p, q), estimates)| {
            let (dt, dx) = (q[0] - p[0], q[1] - p[1]);
            let flat_value = if dt > 0.0 { (dt * dt - dx * dx).max(0.0).sqrt() } else { 0.0 };
            PairEstimate {
                p,
                q,
                verdict: verdict(&estimates, flat_value, schedule),
                estimates,
                flat_value,
            }
        })
        .collect();
    let verdict = if pairs.iter().any(|p| p.verdict == Verdict::Divergent) {
        Verdict::Divergent
    } else {
        Verdict::Bounded
    };
    Ok(ObstructionReport {
        schedule: schedule.clone(),
        pairs,
        verdict,
    })
}
