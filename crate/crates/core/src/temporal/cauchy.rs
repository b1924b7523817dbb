//! T = T⁺ − T⁻ from stacked layers, and its independent certification.

use serde::Serialize;

use super::covering::level_row;
use super::{
    build_layer_function, extend_layer, fat_cone_covering, steepness_check, ConeCache, CoveringParams, LayerFunction,
    SemitimeParams, SteepnessReport, TemporalError, TOL_STEEP,
};
use crate::causality::{build_causal_dag, build_causal_dag_with, CausalDag, DagOptions, DEFAULT_STENCIL_RADIUS};
use crate::geometry::{GridSpacetime, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemporalConfig {
    /// Certified slab is t ∈ [−n_max, n_max].
    pub n_max: usize,
    pub stencil_radius: usize,
    pub tol_steep: f64,
    /// Cauchy levels are sampled in [−level_bound, level_bound].
    pub level_bound: f64,
    pub level_samples: usize,
    pub semitime: SemitimeParams,
    pub covering: CoveringParams,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            n_max: 2,
            stencil_radius: DEFAULT_STENCIL_RADIUS,
            tol_steep: TOL_STEEP,
            level_bound: 1.0,
            level_samples: 21,
            semitime: SemitimeParams::default(),
            covering: CoveringParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyReport {
    pub levels: Vec<f64>,
    /// Fewest and most crossings of each level over maximal slab paths.
    pub min_crossings: Vec<usize>,
    pub max_crossings: Vec<usize>,
    pub cauchy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalCertificate {
    pub slab: [f64; 2],
    pub steepness: SteepnessReport,
    pub edges_checked: usize,
    pub non_increasing_edges: usize,
    pub cauchy: CauchyReport,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TemporalBuild {
    #[serde(skip)]
    pub t: ScalarField,
    #[serde(skip)]
    pub t_plus: ScalarField,
    #[serde(skip)]
    pub t_minus: ScalarField,
    pub layers_plus: Vec<LayerFunction>,
    pub layers_minus: Vec<LayerFunction>,
    pub certificate: TemporalCertificate,
}

/// Layers are built on the closed-cone dag so cone functions vanish
/// continuously where the stencil cone is narrower than the light cone.
fn construction_dag<'g>(grid: &'g GridSpacetime, cfg: &TemporalConfig) -> Result<CausalDag<'g>, TemporalError> {
    Ok(build_causal_dag_with(
        grid,
        DagOptions {
            stencil_radius: cfg.stencil_radius,
            prune_dominated: false,
            close_cone: true,
        },
    )?)
}

fn layer_stack(dag: &CausalDag<'_>, cfg: &TemporalConfig) -> Result<(Vec<f64>, Vec<LayerFunction>), TemporalError> {
    let cache = ConeCache::new(dag);
    let mut layers: Vec<LayerFunction> = Vec::new();
    for n in 0..=cfg.n_max {
        let covering = fat_cone_covering(&cache, n as f64, &cfg.covering)?;
        let layer = match layers.last() {
            None => build_layer_function(&cache, covering, &cfg.semitime)?,
            Some(prev) => extend_layer(&cache, prev, covering, &cfg.semitime)?,
        };
        layers.push(layer);
    }
    let mut total = vec![0.0; dag.grid().len()];
    for l in &layers {
        for (t, v) in total.iter_mut().zip(l.values.values()) {
            *t += v;
        }
    }
    Ok((total, layers))
}

pub fn build_steep_cauchy_temporal(grid: &GridSpacetime, cfg: &TemporalConfig) -> Result<TemporalBuild, TemporalError> {
    let reach = cfg.n_max as f64 + 2.0;
    level_row(grid, -reach)?;
    level_row(grid, reach)?;
    let dag = build_causal_dag(grid, cfg.stencil_radius)?;
    let (plus, layers_plus) = layer_stack(&construction_dag(grid, cfg)?, cfg)?;

    let reversed = grid.time_reversed();
    let (rplus, layers_minus) = layer_stack(&construction_dag(&reversed, cfg)?, cfg)?;
    let minus: Vec<f64> = (0..grid.len()).map(|n| rplus[grid.mirror_node(n)]).collect();

    let t = ScalarField::new(plus.iter().zip(&minus).map(|(a, b)| a - b).collect())?;
    let w = cfg.n_max as f64;
    let certificate = certify_temporal(&dag, &t, [-w, w], cfg)?;
    let build = TemporalBuild {
        t,
        t_plus: ScalarField::new(plus)?,
        t_minus: ScalarField::new(minus)?,
        layers_plus,
        layers_minus,
        certificate,
    };
    Ok(build)
}

/// Steepness, edge monotonicity and discrete Cauchy property on a slab.
/// Reads only the grid, the dag and the field.
pub fn certify_temporal(
    dag: &CausalDag<'_>,
    t: &ScalarField,
    slab: [f64; 2],
    cfg: &TemporalConfig,
) -> Result<TemporalCertificate, TemporalError> {
    let grid = dag.grid();
    let lo = level_row(grid, slab[0])?;
    let hi = level_row(grid, slab[1])?;
    let nx = grid.nx();
    let in_slab = |n: usize| (lo..=hi).contains(&grid.ij(n).0);
    let region: Vec<usize> = (lo * nx..(hi + 1) * nx).collect();
    let steepness = steepness_check(grid, t, &region, cfg.tol_steep);

    let v = t.values();
    let mut edges_checked = 0;
    let mut non_increasing_edges = 0;
    for &p in &region {
        for e in dag.out_edges(p) {
            if in_slab(e.node) {
                edges_checked += 1;
                if !(v[e.node] > v[p]) {
                    non_increasing_edges += 1;
                }
            }
        }
    }

    let k = cfg.level_samples.max(2);
    let levels: Vec<f64> = (0..k)
        .map(|i| -cfg.level_bound + 2.0 * cfg.level_bound * i as f64 / (k - 1) as f64)
        .collect();
    let mut min_crossings = Vec::with_capacity(k);
    let mut max_crossings = Vec::with_capacity(k);
    for &level in &levels {
        let (mn, mx) = crossing_range(dag, v, lo, hi, level);
        min_crossings.push(mn);
        max_crossings.push(mx);
    }
    let cauchy = min_crossings.iter().chain(&max_crossings).all(|&c| c == 1);
    let passed = steepness.steep && non_increasing_edges == 0 && cauchy;
    Ok(TemporalCertificate {
        slab,
        steepness,
        edges_checked,
        non_increasing_edges,
        cauchy: CauchyReport {
            levels,
            min_crossings,
            max_crossings,
            cauchy,
        },
        passed,
    })
}

/// Min and max number of level crossings over maximal paths of the dag
/// restricted to rows `lo..=hi`. Paths start on row `lo` and end on row `hi`.
fn crossing_range(dag: &CausalDag<'_>, v: &[f64], lo: usize, hi: usize, level: f64) -> (usize, usize) {
    let grid = dag.grid();
    let nx = grid.nx();
    let crosses = |a: f64, b: f64| (a < level && b >= level) || (a >= level && b < level);
    let mut mn = vec![usize::MAX; grid.len()];
    let mut mx = vec![0usize; grid.len()];
    for n in lo * nx..(lo + 1) * nx {
        mn[n] = 0;
        mx[n] = 0;
    }
    for i in lo + 1..=hi {
        for q in i * nx..(i + 1) * nx {
            for e in dag.in_edges(q) {
                let p = e.node;
                if grid.ij(p).0 < lo || mn[p] == usize::MAX {
                    continue;
                }
                let c = usize::from(crosses(v[p], v[q]));
                mn[q] = mn[q].min(mn[p] + c);
                mx[q] = mx[q].max(mx[p] + c);
            }
        }
    }
    let top = hi * nx..(hi + 1) * nx;
    let lo_count = top.clone().map(|n| mn[n]).min().unwrap_or(0);
    let hi_count = top.map(|n| mx[n]).max().unwrap_or(0);
    (lo_count, hi_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Interval, SpacetimeSpec};
    use crate::parser::parse_spec;

    fn minkowski() -> GridSpacetime {
        let spec = SpacetimeSpec::minkowski(Interval { lo: -4.0, hi: 4.0 }, Interval { lo: -3.0, hi: 3.0 });
        build_grid(&spec, [0.1, 0.1]).unwrap()
    }

    fn certified(grid: &GridSpacetime) -> TemporalBuild {
        let b = build_steep_cauchy_temporal(grid, &TemporalConfig::default()).unwrap();
        let c = &b.certificate;
        assert!(c.passed, "{c:?}");
        assert!(c.steepness.steep && c.non_increasing_edges == 0 && c.edges_checked > 0);
        assert!(c.cauchy.min_crossings.iter().chain(&c.cauchy.max_crossings).all(|&k| k == 1));
        assert_eq!(b.layers_plus.len(), 3);
        assert_eq!(b.layers_minus.len(), 3);
        b
    }

    #[test]
    fn minkowski_is_certified() {
        let g = minkowski();
        let b = certified(&g);
        // time-symmetric metric: T⁻(t, x) = T⁺(−t, x)
        let (tp, tm) = (b.t_plus.values(), b.t_minus.values());
        let scale = tp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (n, v) in tm.iter().enumerate() {
            let (i, j) = g.ij(n);
            let m = g.node(g.nt() - 1 - i, j);
            assert!((v - tp[m]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn sin_lapse_is_certified() {
        let spec = parse_spec(
            "spacetime \"sin-lapse\" { coords: t, x; domain: t in [-4, 4], x in [-3, 3];
             g_tt = -(2 + sin(t)); g_tx = 0; g_xx = 1; }",
        )
        .unwrap();
        certified(&build_grid(&spec, [0.1, 0.1]).unwrap());
    }

    #[test]
    fn certifier_rejects_bad_fields() {
        let g = minkowski();
        let dag = build_causal_dag(&g, 3).unwrap();
        let cfg = TemporalConfig::default();
        let t = ScalarField::from_fn(&g, |t, _| t);
        let c = certify_temporal(&dag, &t, [-2.0, 2.0], &cfg).unwrap();
        assert!(c.passed && c.steepness.min_margin.abs() < 1e-9);
        let half = t.scale(0.5);
        let c = certify_temporal(&dag, &half, [-2.0, 2.0], &cfg).unwrap();
        assert!(!c.steepness.steep && !c.passed);
        let wave = ScalarField::from_fn(&g, |t, x| 2.0 * t + (3.0 * t).sin() * x);
        let c = certify_temporal(&dag, &wave, [-2.0, 2.0], &cfg).unwrap();
        assert!(c.non_increasing_edges > 0 && !c.passed);
        let flat = ScalarField::from_fn(&g, |t, _| 5.0 * t.tanh().powi(3));
        let c = certify_temporal(&dag, &flat, [-2.0, 2.0], &cfg).unwrap();
        assert!(!c.passed);
    }
}
