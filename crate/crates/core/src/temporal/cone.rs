//! Cone semi-time functions built slab by slab from cone functions.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::Serialize;

use super::{cone_function, is_past_timelike, scale_constant, TemporalError, MARGIN_C};
use crate::causality::{time_separation, CausalDag, DistanceTable};
use crate::geometry::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemitimeParams {
    /// Thickness of the slabs the induction walks through.
    pub slab: f64,
    /// Cutoff runs from `t_S + delta/2` down to zero at `t_S + delta`.
    pub delta: f64,
    /// A cone function only counts at targets with d ≥ d_lo from its apex...
    pub d_lo: f64,
    /// ...and −g(∇d,∇d) ≥ grad_min there.
    pub grad_min: f64,
    /// Apexes are searched this far below each slab.
    pub apex_depth: f64,
    pub col_stride: usize,
    /// Final values on S exceed 1 + value_margin.
    pub value_margin: f64,
    pub margin_c: f64,
}

impl Default for SemitimeParams {
    fn default() -> Self {
        SemitimeParams {
            slab: 0.25,
            delta: 0.5,
            d_lo: 0.25,
            grad_min: 0.5,
            apex_depth: 1.0,
            col_stride: 2,
            value_margin: 0.05,
            margin_c: MARGIN_C,
        }
    }
}

/// Shared longest-path tables keyed by apex node.
pub struct ConeCache<'a> {
    dag: &'a CausalDag<'a>,
    tables: RwLock<HashMap<usize, Arc<DistanceTable>>>,
}

impl<'a> ConeCache<'a> {
    pub fn new(dag: &'a CausalDag<'a>) -> ConeCache<'a> {
        ConeCache {
            dag,
            tables: RwLock::new(HashMap::new()),
        }
    }

    pub fn dag(&self) -> &'a CausalDag<'a> {
        self.dag
    }

    pub fn table(&self, p: usize) -> Arc<DistanceTable> {
        if let Some(t) = self.tables.read().expect("cache lock").get(&p) {
            return Arc::clone(t);
        }
        let t = Arc::new(time_separation(self.dag, p));
        self.tables
            .write()
            .expect("cache lock")
            .entry(p)
            .or_insert(t)
            .clone()
    }

    pub fn len(&self) -> usize {
        self.tables.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 1 up to `start`, smoothstep down to 0 at `end`.
pub fn smoothstep_cutoff(t: f64, start: f64, end: f64) -> f64 {
    if t <= start {
        1.0
    } else if t >= end {
        0.0
    } else {
        let u = (t - start) / (end - start);
        1.0 - u * u * (3.0 - 2.0 * u)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Semitime {
    #[serde(skip)]
    pub values: ScalarField,
    pub apex: usize,
    pub slice_row: usize,
    pub cone_apexes: Vec<usize>,
    pub slab_constants: Vec<f64>,
    pub final_scale: f64,
}

pub fn build_cone_semitime(
    cache: &ConeCache<'_>,
    p: usize,
    slice_row: usize,
    allowed: &[bool],
    params: &SemitimeParams,
) -> Result<Semitime, TemporalError> {
    let dag = cache.dag();
    let grid = dag.grid();
    let (prow, pcol) = grid.ij(p);
    if prow > slice_row {
        return Err(TemporalError::NotInPast { node: p, row: slice_row });
    }
    let from_p = cache.table(p);
    let diamond: Vec<usize> = (0..((slice_row + 1) * grid.nx()).min(grid.len()))
        .filter(|&n| from_p.reachable[n] && grid.ij(n).0 <= slice_row)
        .collect();
    let outside: Vec<usize> = diamond.iter().copied().filter(|&n| !allowed[n]).collect();
    if !outside.is_empty() {
        return Err(TemporalError::SupportOutside { nodes: outside });
    }

    let t_p = grid.time_of_row(prow);
    let t_s = grid.time_of_row(slice_row);
    let slabs = (((t_s - t_p) / params.slab) - 1e-9).ceil().max(1.0) as usize;
    let slab_of = |row: usize| -> usize {
        let t = grid.time_of_row(row);
        ((((t - t_p) / params.slab) - 1e-9).ceil().max(1.0) as usize - 1).min(slabs - 1)
    };

    let n = grid.len();
    let mut tau = vec![0.0; n];
    let mut done: Vec<usize> = Vec::new();
    let mut cone_apexes = Vec::new();
    let mut slab_constants = Vec::with_capacity(slabs);
    let target = -1.0 - params.margin_c;

    for k in 0..slabs {
        let slab_targets: Vec<usize> = diamond.iter().copied().filter(|&q| slab_of(grid.ij(q).0) == k).collect();
        if slab_targets.is_empty() {
            slab_constants.push(0.0);
            continue;
        }
        let first_row = slab_targets.iter().map(|&q| grid.ij(q).0).min().unwrap();
        let a_k = t_p + k as f64 * params.slab;
        let lowest = a_k - params.apex_depth - 1e-9;
        let candidates: Vec<usize> = (0..first_row)
            .filter(|&r| grid.time_of_row(r) >= lowest)
            .flat_map(|r| grid.row(r).collect::<Vec<_>>())
            .filter(|&x| allowed[x] && grid.ij(x).1.abs_diff(pcol) % params.col_stride == 0)
            .collect();
        let chosen = cover_targets(cache, &slab_targets, &candidates, params)?;
        let mut sum = vec![0.0; n];
        for &x in &chosen {
            let j = cone_function(&cache.table(x).values);
            for (s, v) in sum.iter_mut().zip(j.values()) {
                *s += v;
            }
        }
        cone_apexes.extend_from_slice(&chosen);

        done.extend(slab_targets.iter().copied().filter(|&q| !grid.is_boundary(q)));
        // nodes where the new sum is not timelike are left to the check below
        let region: Vec<usize> = done.iter().copied().filter(|&q| is_past_timelike(grid, &sum, q)).collect();
        let c = scale_constant(grid, &tau, &sum, &region, params.margin_c)?;
        for (t, s) in tau.iter_mut().zip(&sum) {
            *t += c * s;
        }
        slab_constants.push(c);
        let failing: Vec<usize> = done
            .iter()
            .copied()
            .filter(|&q| grid.gradient_norm_sq_at(&tau, q) > target + 0.5 * params.margin_c)
            .collect();
        if !failing.is_empty() {
            return Err(TemporalError::Property {
                property: "steep on J(p,S)".into(),
                nodes: failing,
            });
        }
    }

    let on_slice: Vec<usize> = grid.row(slice_row).filter(|&q| from_p.reachable[q]).collect();
    let low = on_slice.iter().map(|&q| tau[q]).fold(f64::INFINITY, f64::min);
    if !(low > 0.0) {
        let nodes = on_slice.iter().copied().filter(|&q| tau[q] <= 0.0).collect();
        return Err(TemporalError::Uncovered { nodes });
    }
    let final_scale = ((1.0 + params.value_margin) / low).max(1.0);
    let start = t_s + 0.5 * params.delta;
    let end = t_s + params.delta;
    for (q, t) in tau.iter_mut().enumerate() {
        *t *= final_scale * smoothstep_cutoff(grid.coords(q)[0], start, end);
    }
    let outside: Vec<usize> = (0..n).filter(|&q| tau[q] != 0.0 && !allowed[q]).collect();
    if !outside.is_empty() {
        return Err(TemporalError::SupportOutside { nodes: outside });
    }
    Ok(Semitime {
        values: ScalarField::new(tau)?,
        apex: p,
        slice_row,
        cone_apexes,
        slab_constants,
        final_scale,
    })
}

/// Greedy set cover of `targets` by admissible cone functions from `candidates`.
fn cover_targets(
    cache: &ConeCache<'_>,
    targets: &[usize],
    candidates: &[usize],
    params: &SemitimeParams,
) -> Result<Vec<usize>, TemporalError> {
    let grid = cache.dag().grid();
    let covers: Vec<Vec<usize>> = candidates
        .par_iter()
        .map(|&x| {
            let table = cache.table(x);
            let d = &table.values;
            targets
                .iter()
                .enumerate()
                .filter(|&(_, &q)| {
                    if d[q] < params.d_lo {
                        return false;
                    }
                    if grid.is_boundary(q) {
                        return true;
                    }
                    let w = grid.differential(d, q);
                    w[0] > 0.0 && -grid.inverse_metric(q).norm_sq(w) >= params.grad_min
                })
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let mut uncovered = vec![true; targets.len()];
    let mut left = targets.len();
    let mut chosen = Vec::new();
    while left > 0 {
        let (best, gain) = covers
            .iter()
            .enumerate()
            .map(|(c, set)| (c, set.iter().filter(|&&i| uncovered[i]).count()))
            .fold((usize::MAX, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if gain == 0 {
            let nodes = (0..targets.len()).filter(|&i| uncovered[i]).map(|i| targets[i]).collect();
            return Err(TemporalError::Uncovered { nodes });
        }
        for &i in &covers[best] {
            if uncovered[i] {
                uncovered[i] = false;
                left -= 1;
            }
        }
        chosen.push(candidates[best]);
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::build_causal_dag;
    use crate::geometry::{build_grid, GridSpacetime, Interval, SpacetimeSpec};
    use crate::temporal::{is_past_causal, steepness_check, TOL_STEEP};

    fn strip() -> GridSpacetime {
        let spec = SpacetimeSpec::minkowski(Interval { lo: -2.0, hi: 3.0 }, Interval { lo: -3.0, hi: 3.0 });
        build_grid(&spec, [0.1, 0.1]).unwrap()
    }

    fn at(g: &GridSpacetime, t: f64, x: f64) -> usize {
        g.nearest_node([t, x]).unwrap().0
    }

    /// V = I⁺(p') below t = 2.
    fn fat_past(cache: &ConeCache<'_>, outer: usize) -> Vec<bool> {
        let g = cache.dag().grid();
        let cap = g.row_near(2.0).unwrap();
        let from = cache.table(outer);
        (0..g.len()).map(|n| g.ij(n).0 < cap && from.values[n] > 0.0).collect()
    }

    #[test]
    fn minkowski_semitime_conditions() {
        let g = strip();
        let dag = build_causal_dag(&g, 3).unwrap();
        let cache = ConeCache::new(&dag);
        let p = at(&g, 0.0, 0.0);
        let allowed = fat_past(&cache, at(&g, -0.4, 0.0));
        let s_row = g.row_near(1.0).unwrap();
        let s = build_cone_semitime(&cache, p, s_row, &allowed, &SemitimeParams::default()).unwrap();
        let v = s.values.values();
        for q in g.row(s_row) {
            if g.coords(q)[1].abs() <= 1.0 + 1e-9 {
                assert!(v[q] > 1.0, "{:?} {}", g.coords(q), v[q]);
            }
        }
        assert!((0..g.len()).all(|q| v[q] == 0.0 || allowed[q]));
        assert!(v.iter().all(|&x| x >= 0.0));
        let from_p = cache.table(p);
        let diamond: Vec<usize> = g
            .interior_nodes()
            .into_iter()
            .filter(|&q| from_p.reachable[q] && g.ij(q).0 <= s_row)
            .collect();
        let rep = steepness_check(&g, &s.values, &diamond, 0.0);
        assert!(rep.steep, "{}", rep.min_margin);
        for q in g.interior_nodes() {
            if g.ij(q).0 <= s_row && v[q] > 0.0 {
                assert!(is_past_causal(&g, v, q, TOL_STEEP), "{:?}", g.coords(q));
            }
        }
    }

    #[test]
    fn single_slab_is_one_cut_off_cone() {
        let g = strip();
        let dag = build_causal_dag(&g, 3).unwrap();
        let cache = ConeCache::new(&dag);
        let p = at(&g, 0.0, 0.0);
        let allowed = fat_past(&cache, at(&g, -0.4, 0.0));
        let s_row = g.row_near(0.2).unwrap();
        let params = SemitimeParams::default();
        let s = build_cone_semitime(&cache, p, s_row, &allowed, &params).unwrap();
        assert_eq!(s.slab_constants.len(), 1);
        assert_eq!(s.cone_apexes.len(), 1);
        let x = s.cone_apexes[0];
        assert!(g.ij(x).0 < g.ij(p).0);
        let j = cone_function(&cache.table(x).values);
        let t_s = g.time_of_row(s_row);
        let mut ratio = None;
        for q in 0..g.len() {
            let base = j.get(q) * smoothstep_cutoff(g.coords(q)[0], t_s + 0.5 * params.delta, t_s + params.delta);
            let v = s.values.get(q);
            if base == 0.0 {
                assert_eq!(v, 0.0);
                continue;
            }
            let r = v / base;
            let r0 = *ratio.get_or_insert(r);
            assert!((r - r0).abs() <= 1e-9 * r0);
        }
    }

    #[test]
    fn apex_above_slice_is_rejected() {
        let g = strip();
        let dag = build_causal_dag(&g, 3).unwrap();
        let cache = ConeCache::new(&dag);
        let allowed = vec![true; g.len()];
        let s_row = g.row_near(0.0).unwrap();
        let p = at(&g, 0.5, 0.0);
        assert!(matches!(
            build_cone_semitime(&cache, p, s_row, &allowed, &SemitimeParams::default()),
            Err(TemporalError::NotInPast { .. })
        ));
    }

    #[test]
    fn diamond_outside_v_is_rejected() {
        let g = strip();
        let dag = build_causal_dag(&g, 3).unwrap();
        let cache = ConeCache::new(&dag);
        let p = at(&g, 0.0, 0.0);
        let allowed: Vec<bool> = (0..g.len()).map(|n| g.coords(n)[1] < 0.5).collect();
        let s_row = g.row_near(1.0).unwrap();
        assert!(matches!(
            build_cone_semitime(&cache, p, s_row, &allowed, &SemitimeParams::default()),
            Err(TemporalError::SupportOutside { .. })
        ));
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(smoothstep_cutoff(0.0, 1.0, 2.0), 1.0);
        assert_eq!(smoothstep_cutoff(1.5, 1.0, 2.0), 0.5);
        assert_eq!(smoothstep_cutoff(2.0, 1.0, 2.0), 0.0);
        assert!((smoothstep_cutoff(1.25, 1.0, 2.0) - 0.84375).abs() < 1e-15);
    }
}
