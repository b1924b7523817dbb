//! Fat cone coverings of grid slices.

use serde::Serialize;

use super::{ConeCache, TemporalError};
use crate::geometry::GridSpacetime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveringParams {
    /// Time from the inner apexes p_i up to the slice.
    pub depth: f64,
    /// Extra time from p_i down to p'_i.
    pub fat: f64,
    /// Neighbouring cones share at least this many slice nodes.
    pub overlap_cells: usize,
    pub k_max: usize,
}

impl Default for CoveringParams {
    fn default() -> Self {
        CoveringParams {
            depth: 0.5,
            fat: 0.4,
            overlap_cells: 2,
            k_max: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeCovering {
    pub level: f64,
    pub slice_row: usize,
    /// `(p'_i, p_i)` with p'_i ≪ p_i.
    pub pairs: Vec<(usize, usize)>,
    pub max_multiplicity: usize,
}

pub(crate) fn level_row(grid: &GridSpacetime, level: f64) -> Result<usize, TemporalError> {
    let row = grid.row_near(level).ok_or(TemporalError::NotALevel { level })?;
    if (grid.time_of_row(row) - level).abs() > 1e-9 * (1.0 + level.abs()) {
        return Err(TemporalError::NotALevel { level });
    }
    Ok(row)
}

/// Greedy left-to-right sweep with the inner apexes `depth` below the slice.
pub fn fat_cone_covering(
    cache: &ConeCache<'_>,
    level: f64,
    params: &CoveringParams,
) -> Result<ConeCovering, TemporalError> {
    let grid = cache.dag().grid();
    let slice_row = level_row(grid, level)?;
    let ht = grid.spacing()[0];
    let inner_steps = (params.depth / ht).round() as usize;
    let outer_steps = inner_steps + (params.fat / ht).round().max(1.0) as usize;
    if slice_row < outer_steps + 1 || slice_row + 2 > grid.nt() {
        return Err(TemporalError::SliceTooClose { level });
    }
    let prow = slice_row - inner_steps;
    let orow = slice_row - outer_steps;
    let nx = grid.nx();
    // covered columns of the slice for each candidate inner apex
    let reach: Vec<Vec<bool>> = (0..nx)
        .map(|j| {
            let t = cache.table(grid.node(prow, j));
            (0..nx).map(|c| t.values[grid.node(slice_row, c)] > 0.0).collect()
        })
        .collect();

    let mut pairs = Vec::new();
    let mut multiplicity = vec![0usize; nx];
    let mut cur = 0usize;
    while cur < nx {
        let from = cur.saturating_sub(params.overlap_cells);
        let run_end = |j: usize| {
            let mut e = cur;
            while e < nx && reach[j][e] {
                e += 1;
            }
            e
        };
        let pick = (0..nx)
            .filter(|&j| (from..=cur).all(|c| reach[j][c]))
            .max_by_key(|&j| run_end(j))
            .or_else(|| (0..nx).filter(|&j| reach[j][cur]).max_by_key(|&j| run_end(j)));
        let Some(j) = pick else {
            return Err(TemporalError::Uncovered {
                nodes: vec![grid.node(slice_row, cur)],
            });
        };
        let p = grid.node(prow, j);
        let p_outer = grid.node(orow, j);
        if cache.table(p_outer).values[p] <= 0.0 {
            return Err(TemporalError::Uncovered { nodes: vec![p] });
        }
        pairs.push((p_outer, p));
        for c in 0..nx {
            if reach[j][c] {
                multiplicity[c] += 1;
            }
        }
        let next = run_end(j);
        cur = next;
    }
    let max_multiplicity = multiplicity.iter().copied().max().unwrap_or(0);
    if max_multiplicity > params.k_max {
        let nodes = (0..nx)
            .filter(|&c| multiplicity[c] > params.k_max)
            .map(|c| grid.node(slice_row, c))
            .collect();
        return Err(TemporalError::Property {
            property: "local finiteness".into(),
            nodes,
        });
    }
    Ok(ConeCovering {
        level,
        slice_row,
        pairs,
        max_multiplicity,
    })
}
