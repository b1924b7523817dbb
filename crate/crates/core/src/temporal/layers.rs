//! Layer functions h⁺_a assembled from steep forward cone functions.

use rayon::prelude::*;
use serde::Serialize;

use super::covering::level_row;
use super::{build_cone_semitime, is_past_causal, scale_constant, ConeCache, ConeCovering, Semitime, SemitimeParams, TemporalError, TOL_STEEP};
use crate::geometry::{GridSpacetime, ScalarField};

/// Relative band for "past-directed causal".
const FRINGE_REL: f64 = TOL_STEEP;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCheck {
    pub support_ok: bool,
    /// min of h on S_{a+1} minus (|a|+1)
    pub slice_excess: f64,
    pub past_causal_violations: usize,
    /// min of −g(∇h,∇h) − 1 on J(S_a, S_{a+1})
    pub steep_margin: f64,
    /// min of −g(∇(h_prev + h),∇(h_prev + h)) − 1 on J(S_a, S_{a+1}) for
    /// extended layers, where a is the previous level
    pub combined_margin: Option<f64>,
    /// same on J(S_{a-1}, S_{a+1})
    pub combined_wide_margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerFunction {
    pub level: f64,
    #[serde(skip)]
    pub values: ScalarField,
    pub constants: Vec<f64>,
    pub covering: ConeCovering,
    pub sfcs: Vec<Semitime>,
    pub check: LayerCheck,
}

fn rows_between(grid: &GridSpacetime, lo: usize, hi: usize) -> Vec<usize> {
    (lo * grid.nx()..(hi + 1) * grid.nx())
        .filter(|&n| !grid.is_boundary(n))
        .collect()
}

/// One steep forward cone function per covering pair.
fn build_sfcs(
    cache: &ConeCache<'_>,
    covering: &ConeCovering,
    params: &SemitimeParams,
) -> Result<Vec<Semitime>, TemporalError> {
    let grid = cache.dag().grid();
    let level = covering.level;
    let s_row = level_row(grid, level + 1.0)?;
    let cap_row = level_row(grid, level + 2.0)?;
    covering
        .pairs
        .par_iter()
        .map(|&(outer, inner)| {
            let from_outer = cache.table(outer);
            let allowed: Vec<bool> = (0..grid.len())
                .map(|n| grid.ij(n).0 < cap_row && from_outer.values[n] > 0.0)
                .collect();
            build_cone_semitime(cache, inner, s_row, &allowed, params)
        })
        .collect()
}

fn min_margin(grid: &GridSpacetime, f: &[f64], region: &[usize]) -> f64 {
    region
        .iter()
        .map(|&n| -grid.gradient_norm_sq_at(f, n) - 1.0)
        .fold(f64::INFINITY, f64::min)
}

fn check_layer(grid: &GridSpacetime, level: f64, h: &[f64]) -> Result<LayerCheck, TemporalError> {
    let row_lo = level_row(grid, level - 1.0)?;
    let row_a = level_row(grid, level)?;
    let row_s = level_row(grid, level + 1.0)?;
    let row_cap = level_row(grid, level + 2.0)?;
    let weight = level.abs() + 1.0;

    let outside: Vec<usize> = (0..grid.len())
        .filter(|&n| {
            let r = grid.ij(n).0;
            h[n] != 0.0 && (r < row_lo || r >= row_cap)
        })
        .collect();
    if !outside.is_empty() {
        return Err(TemporalError::Property {
            property: "support in J(S_{a-1}, S_{a+2})".into(),
            nodes: outside,
        });
    }
    let slice_excess = grid.row(row_s).map(|n| h[n] - weight).fold(f64::INFINITY, f64::min);
    if !(slice_excess > 0.0) {
        return Err(TemporalError::Property {
            property: "h > |a|+1 on S_{a+1}".into(),
            nodes: grid.row(row_s).filter(|&n| h[n] <= weight).collect(),
        });
    }
    let bad: Vec<usize> = rows_between(grid, 0, row_s)
        .into_iter()
        .filter(|&n| h[n] != 0.0 && !is_past_causal(grid, h, n, FRINGE_REL))
        .collect();
    if !bad.is_empty() {
        return Err(TemporalError::Property {
            property: "past-directed causal gradient below S_{a+1}".into(),
            nodes: bad,
        });
    }
    let region = rows_between(grid, row_a, row_s);
    let steep_margin = min_margin(grid, h, &region);
    if !(steep_margin > 0.0) {
        return Err(TemporalError::Property {
            property: "steep on J(S_a, S_{a+1})".into(),
            nodes: region
                .into_iter()
                .filter(|&n| grid.gradient_norm_sq_at(h, n) >= -1.0)
                .collect(),
        });
    }
    Ok(LayerCheck {
        support_ok: true,
        slice_excess,
        past_causal_violations: 0,
        steep_margin,
        combined_margin: None,
        combined_wide_margin: None,
    })
}

/// h⁺_a = (|a|+1) Σ SFC_i with every c_i = 1.
pub fn build_layer_function(
    cache: &ConeCache<'_>,
    covering: ConeCovering,
    params: &SemitimeParams,
) -> Result<LayerFunction, TemporalError> {
    let grid = cache.dag().grid();
    let level = covering.level;
    let sfcs = build_sfcs(cache, &covering, params)?;
    let weight = level.abs() + 1.0;
    let mut h = vec![0.0; grid.len()];
    for s in &sfcs {
        for (a, v) in h.iter_mut().zip(s.values.values()) {
            *a += weight * v;
        }
    }
    let check = check_layer(grid, level, &h)?;
    Ok(LayerFunction {
        level,
        values: ScalarField::new(h)?,
        constants: vec![1.0; sfcs.len()],
        covering,
        sfcs,
        check,
    })
}

/// Next layer with per-cone constants making h_prev + h_next steep on
/// J(S_{a+1}, S_{a+2}), `a` the previous level.
pub fn extend_layer(
    cache: &ConeCache<'_>,
    prev: &LayerFunction,
    covering: ConeCovering,
    params: &SemitimeParams,
) -> Result<LayerFunction, TemporalError> {
    let grid = cache.dag().grid();
    let level = covering.level;
    let sfcs = build_sfcs(cache, &covering, params)?;
    let weight = level.abs() + 1.0;
    let top = level_row(grid, level + 1.0)?;
    let f = prev.values.values();
    let constants: Vec<f64> = sfcs
        .par_iter()
        .map(|s| {
            let tau: Vec<f64> = s.values.values().iter().map(|v| weight * v).collect();
            let reach = cache.table(s.apex);
            let region: Vec<usize> = rows_between(grid, 0, top)
                .into_iter()
                .filter(|&n| reach.reachable[n])
                .collect();
            scale_constant(grid, f, &tau, &region, params.margin_c).map(|c| c.max(1.0))
        })
        .collect::<Result<_, _>>()?;
    let mut h = vec![0.0; grid.len()];
    for (s, c) in sfcs.iter().zip(&constants) {
        for (a, v) in h.iter_mut().zip(s.values.values()) {
            *a += weight * c * v;
        }
    }
    let mut check = check_layer(grid, level, &h)?;
    let sum: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a + b).collect();
    let row_a = level_row(grid, level)?;
    let row_prev = level_row(grid, prev.level)?;
    let combined = min_margin(grid, &sum, &rows_between(grid, row_a, top));
    let wide = min_margin(grid, &sum, &rows_between(grid, row_prev, top));
    if !(combined > 0.0) || !(wide > 0.0) {
        let region = rows_between(grid, row_prev, top);
        return Err(TemporalError::Property {
            property: "combined layers steep".into(),
            nodes: region
                .into_iter()
                .filter(|&n| grid.gradient_norm_sq_at(&sum, n) >= -1.0)
                .collect(),
        });
    }
    check.combined_margin = Some(combined);
    check.combined_wide_margin = Some(wide);
    Ok(LayerFunction {
        level,
        values: ScalarField::new(h)?,
        constants,
        covering,
        sfcs,
        check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::build_causal_dag;
    use crate::geometry::{build_grid, Interval, SpacetimeSpec};
    use crate::temporal::{fat_cone_covering, CoveringParams};

    fn strip() -> GridSpacetime {
        let spec = SpacetimeSpec::minkowski(Interval { lo: -2.0, hi: 3.0 }, Interval { lo: -3.0, hi: 3.0 });
        build_grid(&spec, [0.1, 0.1]).unwrap()
    }

    #[test]
    fn minkowski_layers_zero_and_one() {
        let g = strip();
        let dag = build_causal_dag(&g, 3).unwrap();
        let cache = ConeCache::new(&dag);
        let params = SemitimeParams::default();
        let cov0 = fat_cone_covering(&cache, 0.0, &CoveringParams::default()).unwrap();
        let l0 = build_layer_function(&cache, cov0, &params).unwrap();
        let h = l0.values.values();
        let below = level_row(&g, -1.0).unwrap();
        assert!((0..below * g.nx()).all(|n| h[n] == 0.0));
        let s1 = level_row(&g, 1.0).unwrap();
        assert!(g.row(s1).all(|n| h[n] > 1.0));
        assert!(l0.check.slice_excess > 0.0 && l0.check.steep_margin > 0.0);
        assert!(l0.constants.iter().all(|&c| c == 1.0));

        let cov1 = fat_cone_covering(&cache, 1.0, &CoveringParams::default()).unwrap();
        let l1 = extend_layer(&cache, &l0, cov1, &params).unwrap();
        assert!(l1.constants.iter().all(|&c| c >= 1.0));
        let h1 = l1.values.values();
        let s2 = level_row(&g, 2.0).unwrap();
        assert!(g.row(s2).all(|n| h1[n] > 2.0));
        assert!(l1.check.combined_margin.unwrap() > 0.0);
        // the combined inequality then holds on all of J(S_0, S_2)
        let sum: Vec<f64> = h.iter().zip(h1).map(|(a, b)| a + b).collect();
        let s0 = level_row(&g, 0.0).unwrap();
        assert!(min_margin(&g, &sum, &rows_between(&g, s0, s2)) > 0.0);
    }

    #[test]
    fn layer_check_reports_property() {
        let g = strip();
        let h = vec![1.0; g.len()];
        assert!(matches!(
            check_layer(&g, 0.0, &h),
            Err(TemporalError::Property { .. })
        ));
    }
}
