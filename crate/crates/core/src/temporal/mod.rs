//! Temporal functions: steepness certification, conformal rescaling, cone
//! functions and the layered construction of a steep Cauchy temporal function.

mod cauchy;
mod cone;
mod covering;
mod layers;

pub use cauchy::{build_steep_cauchy_temporal, certify_temporal, CauchyReport, TemporalBuild, TemporalCertificate, TemporalConfig};
pub use cone::{build_cone_semitime, smoothstep_cutoff, ConeCache, Semitime, SemitimeParams};
pub use covering::{fat_cone_covering, ConeCovering, CoveringParams};
pub use layers::{build_layer_function, extend_layer, LayerCheck, LayerFunction};

use serde::Serialize;
use thiserror::Error;

use crate::causality::CausalityError;
use crate::geometry::{GeometryError, GridSpacetime, Metric2, ScalarField};

pub const TOL_STEEP: f64 = 0.1;
pub const MARGIN_C: f64 = 0.05;
pub const C_MAX: f64 = 1e12;
const BISECTION_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemporalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Causality(#[from] CausalityError),
    #[error("gradient is not timelike at {} node(s), first {:?}", nodes.len(), nodes.first())]
    NotTimelike { nodes: Vec<usize> },
    #[error("gradient is not past-directed timelike at {} node(s), first {:?}", nodes.len(), nodes.first())]
    NotTemporal { nodes: Vec<usize> },
    #[error("gradients lie in opposite cones at {} node(s)", nodes.len())]
    OppositeCones { nodes: Vec<usize> },
    #[error("scale constant search exceeded {C_MAX:e}")]
    ScaleOverflow,
    #[error("node {node} is not in the causal past of the slice at row {row}")]
    NotInPast { node: usize, row: usize },
    #[error("no admissible cone covers {} node(s), first {:?}", nodes.len(), nodes.first())]
    Uncovered { nodes: Vec<usize> },
    #[error("support leaves the allowed region at {} node(s)", nodes.len())]
    SupportOutside { nodes: Vec<usize> },
    #[error("level {level} is not a grid row")]
    NotALevel { level: f64 },
    #[error("slice at level {level} is too close to the grid boundary")]
    SliceTooClose { level: f64 },
    #[error("property `{property}` fails at {} node(s), first {:?}", nodes.len(), nodes.first())]
    Property { property: String, nodes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteepnessReport {
    pub region_size: usize,
    /// min over the region of −g(∇τ,∇τ) − 1
    pub min_margin: f64,
    pub violating_nodes: Vec<usize>,
    pub steep: bool,
    pub tol: f64,
}

/// Boundary nodes in `region` are ignored.
pub fn steepness_check(grid: &GridSpacetime, tau: &ScalarField, region: &[usize], tol: f64) -> SteepnessReport {
    let v = tau.values();
    let mut min_margin = f64::INFINITY;
    let mut violating_nodes = Vec::new();
    let mut region_size = 0;
    for &n in region {
        if grid.is_boundary(n) {
            continue;
        }
        region_size += 1;
        let margin = -grid.gradient_norm_sq_at(v, n) - 1.0;
        min_margin = min_margin.min(margin);
        if margin < -tol {
            violating_nodes.push(n);
        }
    }
    SteepnessReport {
        region_size,
        min_margin,
        steep: violating_nodes.is_empty(),
        violating_nodes,
        tol,
    }
}

/// `|∇f|² = -g(∇f,∇f)` and `g(∇f,∇f)`-band at a node for classification.
fn gradient_class(grid: &GridSpacetime, field: &[f64], n: usize) -> (f64, f64, [f64; 2]) {
    let w = grid.differential(field, n);
    let ginv = grid.inverse_metric(n);
    (ginv.norm_sq(w), ginv.null_band(w), w)
}

/// ∇f past-directed timelike: g(∇f,∇f) < 0 beyond the null band and `∂_t f > 0`.
pub fn is_past_timelike(grid: &GridSpacetime, field: &[f64], n: usize) -> bool {
    let (q, band, w) = gradient_class(grid, field, n);
    q < -band && w[0] > 0.0
}

/// ∇f lies in the closed past cone up to the relative band `rel·‖df‖²`.
pub fn is_past_causal(grid: &GridSpacetime, field: &[f64], n: usize, rel: f64) -> bool {
    let w = grid.differential(field, n);
    let ginv = grid.inverse_metric(n);
    let q = ginv.norm_sq(w);
    let scale = ginv.frobenius() * (w[0] * w[0] + w[1] * w[1]);
    q <= rel * scale && w[0] >= 0.0
}

#[derive(Debug, Clone)]
pub struct ConformalRescale {
    /// Nodal metrics Ω·g; `grid.spec()` still names the unscaled chart.
    pub grid: GridSpacetime,
    pub omega: ScalarField,
}

pub fn conformal_rescale(grid: &GridSpacetime, tau: &ScalarField) -> Result<ConformalRescale, TemporalError> {
    let v = tau.values();
    let bad: Vec<usize> = (0..grid.len()).filter(|&n| !is_past_timelike(grid, v, n)).collect();
    if !bad.is_empty() {
        return Err(TemporalError::NotTemporal { nodes: bad });
    }
    let omega: Vec<f64> = (0..grid.len())
        .map(|n| (-grid.gradient_norm_sq_at(v, n)).min(1.0))
        .collect();
    let metrics: Vec<Metric2> = (0..grid.len()).map(|n| grid.metric(n).scaled(omega[n])).collect();
    let mut spec = grid.spec().clone();
    spec.name = format!("{}-conformal", spec.name);
    Ok(ConformalRescale {
        grid: GridSpacetime::from_metrics(spec, grid.spacing(), metrics)?,
        omega: ScalarField::new(omega)?,
    })
}

/// `j_p = exp(-1/d²)` on d > 0, zero elsewhere.
pub fn cone_function(distances: &[f64]) -> ScalarField {
    let values = distances
        .iter()
        .map(|&d| if d > 0.0 { (-1.0 / (d * d)).exp() } else { 0.0 })
        .collect();
    ScalarField::new(values).expect("cone function values are finite")
}

/// Per-node quadratic `Q(c) = g(∇(f+cτ),∇(f+cτ)) = a + 2bc + Cc²`.
#[derive(Debug, Clone, Copy)]
struct Quadratic {
    a: f64,
    b: f64,
    c: f64,
}

impl Quadratic {
    fn at(&self, x: f64) -> f64 {
        self.a + x * (2.0 * self.b + x * self.c)
    }

    /// `Q(x) ≤ target` and stays so for every larger x.
    fn holds_from(&self, x: f64, target: f64) -> bool {
        let vertex = -self.b / self.c;
        self.at(x) <= target && (x >= vertex || self.at(vertex) <= target)
    }
}

/// Smallest c ≥ 0 (doubling then bisection) with
/// g(∇(f+cτ), ∇(f+cτ)) ≤ −1 − margin on every node of `region`.
pub fn choose_scale_constant(
    grid: &GridSpacetime,
    f: &ScalarField,
    tau: &ScalarField,
    region: &[usize],
) -> Result<f64, TemporalError> {
    scale_constant(grid, f.values(), tau.values(), region, MARGIN_C)
}

pub(crate) fn scale_constant(
    grid: &GridSpacetime,
    f: &[f64],
    tau: &[f64],
    region: &[usize],
    margin: f64,
) -> Result<f64, TemporalError> {
    let mut quads = Vec::with_capacity(region.len());
    let mut bad = Vec::new();
    for &n in region {
        let ginv = grid.inverse_metric(n);
        let df = grid.differential(f, n);
        let dt = grid.differential(tau, n);
        let c = ginv.norm_sq(dt);
        if !(c < -ginv.null_band(dt)) {
            bad.push(n);
            continue;
        }
        quads.push(Quadratic {
            a: ginv.norm_sq(df),
            b: ginv.dot(df, dt),
            c,
        });
    }
    if !bad.is_empty() {
        return Err(TemporalError::NotTimelike { nodes: bad });
    }
    let target = -1.0 - margin;
    let ok = |x: f64| quads.iter().all(|q| q.holds_from(x, target));
    if ok(0.0) {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > C_MAX {
            return Err(TemporalError::ScaleOverflow);
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumCertificate {
    /// min over nodes of |∇(T+τ)| − |∇T| − |∇τ|
    pub min_slack: f64,
    pub violating_nodes: Vec<usize>,
    pub tol: f64,
}

fn timelike_length(g: &Metric2, w: [f64; 2]) -> f64 {
    (-g.norm_sq(w)).max(0.0).sqrt()
}

/// Pointwise sum with a reversed-triangle-inequality certificate on `region`.
pub fn sum_temporal(
    grid: &GridSpacetime,
    t: &ScalarField,
    tau: &ScalarField,
    region: &[usize],
    tol: f64,
) -> Result<(ScalarField, SumCertificate), TemporalError> {
    let sum = t.add(tau);
    let mut opposite = Vec::new();
    let mut not_timelike = Vec::new();
    let mut min_slack = f64::INFINITY;
    let mut violating_nodes = Vec::new();
    for &n in region {
        let ginv = grid.inverse_metric(n);
        let a = grid.differential(t.values(), n);
        let b = grid.differential(tau.values(), n);
        let s = grid.differential(sum.values(), n);
        if ginv.norm_sq(a) >= 0.0 || ginv.norm_sq(b) >= 0.0 {
            not_timelike.push(n);
            continue;
        }
        // same cone iff g(∇T,∇τ) < 0
        if ginv.dot(a, b) >= 0.0 {
            opposite.push(n);
            continue;
        }
        let slack = timelike_length(ginv, s) - timelike_length(ginv, a) - timelike_length(ginv, b);
        min_slack = min_slack.min(slack);
        if slack < -tol {
            violating_nodes.push(n);
        }
    }
    if !opposite.is_empty() {
        return Err(TemporalError::OppositeCones { nodes: opposite });
    }
    if !not_timelike.is_empty() {
        return Err(TemporalError::NotTimelike { nodes: not_timelike });
    }
    Ok((
        sum,
        SumCertificate {
            min_slack,
            violating_nodes,
            tol,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::{build_causal_dag, time_separation};
    use crate::geometry::{build_grid, Interval, SpacetimeSpec};
    use crate::parser::parse_spec;
    use proptest::prelude::*;

    fn mink(h: f64) -> GridSpacetime {
        let iv = Interval { lo: -2.0, hi: 2.0 };
        build_grid(&SpacetimeSpec::minkowski(iv, iv), [h, h]).unwrap()
    }

    fn example_ex(h: f64) -> GridSpacetime {
        let s = parse_spec(
            "spacetime \"ex\" { coords: t, x; domain: t in [-2, 2], x in [0.1, 2.5];
             g_tt = -1/(x*x); g_tx = 0; g_xx = 1/(x*x); }",
        )
        .unwrap();
        build_grid(&s, [h, h]).unwrap()
    }

    #[test]
    fn steepness_examples() {
        let g = mink(0.1);
        let all = g.interior_nodes();
        let t = ScalarField::from_fn(&g, |t, _| t);
        let r = steepness_check(&g, &t, &all, TOL_STEEP);
        assert!(r.steep && r.min_margin.abs() < 1e-12);
        let half = t.scale(0.5);
        let r = steepness_check(&g, &half, &all, TOL_STEEP);
        assert!(!r.steep && (r.min_margin + 0.75).abs() < 1e-12);

        let ex = example_ex(0.05);
        let t = ScalarField::from_fn(&ex, |t, _| t);
        for n in ex.interior_nodes() {
            let steep = steepness_check(&ex, &t, &[n], 1e-9).steep;
            assert_eq!(steep, ex.coords(n)[1] >= 1.0 - 1e-9, "x = {}", ex.coords(n)[1]);
        }
    }

    #[test]
    fn rescale_examples() {
        let g = mink(0.25);
        let t = ScalarField::from_fn(&g, |t, _| t);
        let r = conformal_rescale(&g, &t).unwrap();
        assert!(r.omega.values().iter().all(|&w| w == 1.0));
        assert_eq!(r.grid.metrics(), g.metrics());

        let ex = example_ex(0.05);
        let t = ScalarField::from_fn(&ex, |t, _| t);
        let r = conformal_rescale(&ex, &t).unwrap();
        for n in 0..ex.len() {
            let x = ex.coords(n)[1];
            assert!((r.omega.get(n) - (x * x).min(1.0)).abs() < 1e-9);
        }
        let rep = steepness_check(&r.grid, &t, &ex.interior_nodes(), 1e-6);
        assert!(rep.steep, "{}", rep.min_margin);

        let x = ScalarField::from_fn(&g, |_, x| x);
        assert!(matches!(conformal_rescale(&g, &x), Err(TemporalError::NotTemporal { .. })));
    }

    #[test]
    fn cone_function_values() {
        let j = cone_function(&[0.0, 2.0, 1.0]);
        assert_eq!(j.get(0), 0.0);
        assert!((j.get(1) - 0.7788007830714049).abs() < 1e-15);
        assert!((j.get(2) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn cone_function_monotone_along_edges() {
        let g = mink(0.1);
        let dag = build_causal_dag(&g, 3).unwrap();
        let p = g.nearest_node([-1.5, 0.0]).unwrap().0;
        let d = time_separation(&dag, p);
        let j = cone_function(&d.values);
        for (a, e) in dag.edges() {
            assert!(j.get(e.node) >= j.get(a));
        }
        for q in 0..g.len() {
            let v = j.get(q);
            assert!((0.0..1.0).contains(&v));
            assert_eq!(v == 0.0, d.get(q) == 0.0);
        }
    }

    /// Largest root of the nodewise quadratic, the closed-form oracle.
    fn oracle_root(g: &GridSpacetime, f: &ScalarField, tau: &ScalarField, region: &[usize]) -> f64 {
        let target = -1.0 - MARGIN_C;
        region
            .iter()
            .map(|&n| {
                let ginv = g.inverse_metric(n);
                let df = g.differential(f.values(), n);
                let dt = g.differential(tau.values(), n);
                let (a, b, c) = (ginv.norm_sq(df) - target, ginv.dot(df, dt), ginv.norm_sq(dt));
                let disc = b * b - a * c;
                if disc <= 0.0 {
                    0.0
                } else {
                    ((b + disc.sqrt()) / -c).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn scale_constant_examples() {
        let g = mink(0.1);
        let all = g.interior_nodes();
        let zero = ScalarField::zeros(g.len());
        let tau2 = ScalarField::from_fn(&g, |t, _| 2.0 * t);
        let c = choose_scale_constant(&g, &zero, &tau2, &all).unwrap();
        assert!(c >= 0.5 && c <= 0.5 * (1.0 + MARGIN_C).sqrt() + 1e-6, "{c}");
        let t = ScalarField::from_fn(&g, |t, _| t);
        let c = choose_scale_constant(&g, &zero, &t, &all).unwrap();
        assert!((c - (1.0 + MARGIN_C).sqrt()).abs() < 1e-5, "{c}");

        let x = ScalarField::from_fn(&g, |_, x| x);
        assert!(matches!(
            choose_scale_constant(&g, &zero, &x, &all),
            Err(TemporalError::NotTimelike { .. })
        ));
        assert_eq!(choose_scale_constant(&g, &t.scale(3.0), &t, &all).unwrap(), 0.0);
    }

    #[test]
    fn scale_constant_with_cone_function() {
        let g = mink(0.05);
        let dag = build_causal_dag(&g, 3).unwrap();
        let p = g.nearest_node([0.0, 0.0]).unwrap().0;
        let j = cone_function(&time_separation(&dag, p).values);
        let t = ScalarField::from_fn(&g, |t, _| t);
        let region: Vec<usize> = g
            .interior_nodes()
            .into_iter()
            .filter(|&n| {
                let [tt, x] = g.coords(n);
                (0.0..=1.0 + 1e-9).contains(&tt) && x.abs() <= tt + 1e-9
            })
            .collect();
        let c = choose_scale_constant(&g, &j, &t, &region).unwrap();
        let root = oracle_root(&g, &j, &t, &region);
        assert!(c.is_finite() && c >= root && c <= root * (1.0 + 1e-5) + 1e-5, "{c} vs {root}");
        let combined = j.axpy(c, &t);
        let rep = steepness_check(&g, &combined, &region, 0.0);
        assert!(rep.min_margin >= MARGIN_C - 1e-9);
    }

    #[test]
    fn sum_examples() {
        let g = mink(0.1);
        let all = g.interior_nodes();
        let t = ScalarField::from_fn(&g, |t, _| t);
        let (s, cert) = sum_temporal(&g, &t, &t, &all, 1e-8).unwrap();
        assert!(cert.violating_nodes.is_empty() && cert.min_slack.abs() < 1e-9);
        let n = all[0];
        assert!((-g.gradient_norm_sq_at(s.values(), n) - 4.0).abs() < 1e-9);

        let tau = ScalarField::from_fn(&g, |t, x| 0.6 * t + 0.3 * x);
        let (s, cert) = sum_temporal(&g, &t, &tau, &all, 1e-8).unwrap();
        assert!(cert.violating_nodes.is_empty());
        let len = (-g.gradient_norm_sq_at(s.values(), n)).sqrt();
        assert!((len - (1.6f64 * 1.6 - 0.09).sqrt()).abs() < 1e-9);
        assert!((len - 1.5716233645501712).abs() < 1e-9 && len >= 1.0 + 0.27f64.sqrt());

        let past = t.scale(-1.0);
        assert!(matches!(
            sum_temporal(&g, &t, &past, &all, 1e-8),
            Err(TemporalError::OppositeCones { .. })
        ));
    }

    proptest! {
        #[test]
        fn scale_constant_monotone(
            a in -0.5..0.5f64, b in -0.5..0.5f64, grow in 1.0..3.0f64, k in 0.2..2.0f64,
            rows in 3usize..14,
        ) {
            let g = mink(0.25);
            let tau = ScalarField::from_fn(&g, |t, x| k * t + 0.2 * k * x);
            let f = ScalarField::from_fn(&g, |t, x| a * t * x + b * x);
            let interior = g.interior_nodes();
            let small: Vec<usize> = interior.iter().copied().filter(|&n| g.ij(n).0 < rows).collect();
            let c_small = choose_scale_constant(&g, &f, &tau, &small).unwrap();
            let c_big = choose_scale_constant(&g, &f, &tau, &interior).unwrap();
            prop_assert!(c_big >= c_small);
            prop_assert!(c_big >= oracle_root(&g, &f, &tau, &interior) - 1e-12);
            // spacelike gradient g-orthogonal to ∇τ, scaled up
            let side = ScalarField::from_fn(&g, |t, x| b * (0.2 * t + x));
            let c1 = choose_scale_constant(&g, &side, &tau, &interior).unwrap();
            let c2 = choose_scale_constant(&g, &side.scale(grow), &tau, &interior).unwrap();
            prop_assert!(c2 >= c1);
        }

        #[test]
        fn reversed_triangle_on_random_pairs(
            a1 in 1.5..3.0f64, b1 in -0.9..0.9f64, a2 in 1.0..3.0f64, b2 in -0.9..0.9f64,
        ) {
            let g = mink(0.25);
            let t = ScalarField::from_fn(&g, |t, x| a1 * t + b1 * x + 0.1 * (t * x).sin());
            let tau = ScalarField::from_fn(&g, |t, x| a2 * t + b2 * x);
            let (_, cert) = sum_temporal(&g, &t, &tau, &g.interior_nodes(), 1e-8).unwrap();
            prop_assert!(cert.violating_nodes.is_empty());
        }
    }

    #[test]
    fn rescale_keeps_edges_on_example_ex() {
        let ex = example_ex(0.1);
        let t = ScalarField::from_fn(&ex, |t, _| t);
        let r = conformal_rescale(&ex, &t).unwrap();
        let a = build_causal_dag(&ex, 3).unwrap();
        let b = build_causal_dag(&r.grid, 3).unwrap();
        assert_eq!(a.edge_count(), b.edge_count());
        for p in 0..ex.len() {
            let ea: Vec<_> = a.out_edges(p).iter().map(|e| e.node).collect();
            let eb: Vec<_> = b.out_edges(p).iter().map(|e| e.node).collect();
            assert_eq!(ea, eb);
        }
    }
}
