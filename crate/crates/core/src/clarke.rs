//! Clarke construction on diagonal metrics `g = −V² dτ² + M² dy²`, and a
//! finite-difference probe of the smoothness of μ(J(S,·)).

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::causality::{build_causal_dag, CausalDag, CausalityError, MeasureSpec, DEFAULT_STENCIL_RADIUS};
use crate::geometry::{build_grid, GeometryError, GridSpacetime, ScalarField, SpacetimeSpec};

/// A test holds when its margin exceeds this, and tests whose margins are
/// within this of each other are not counted as discordant.
pub const MARGIN_TOL: f64 = 1e-9;
pub const SHRINK_FACTOR: f64 = 1.8;
pub const STABLE_CHANGE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClarkeError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Causality(#[from] CausalityError),
    #[error("metric is not diagonal at node {node} (g_tx = {g_tx})")]
    NotDiagonal { node: usize, g_tx: f64 },
    #[error("σ must be finite and nonnegative, got {value} at node {node}")]
    Sigma { node: usize, value: f64 },
    #[error("the grid has no row at τ = 0")]
    NoInitialRow,
    #[error("τ = {tau} at node {node} is not above ε = {eps}")]
    TooEarly { node: usize, tau: f64, eps: f64 },
    #[error("node {node} lies in the excluded neighbourhood of Y")]
    NearY { node: usize },
    #[error("node {node} is not in I⁺(S)")]
    NotInFuture { node: usize },
    #[error("point {point:?} is not a grid node at spacing {h}")]
    NotRepresentable { point: [f64; 2], h: f64 },
    #[error("probe stencil leaves the grid at spacing {h}")]
    OutsideGrid { h: f64 },
}

#[derive(Debug, Clone)]
pub struct ClarkeSetup {
    pub grid: GridSpacetime,
    /// V = √(−g_ττ)
    pub lapse: ScalarField,
    /// M = √g_yy
    pub scale: ScalarField,
    pub sigma: ScalarField,
    /// σ ≤ 1
    pub in_y: Vec<bool>,
    /// ω density times cell area.
    pub masses: Vec<f64>,
    pub omega_multiplier: f64,
    pub eps: f64,
    /// When set, nodes with σ ≤ 1 + band are outside the domain of f.
    pub exclude_y: Option<f64>,
    initial_row: usize,
}

impl ClarkeSetup {
    /// σ = y², Lebesgue ω, ε half a time step, Y not excluded.
    pub fn new(grid: GridSpacetime) -> Result<ClarkeSetup, ClarkeError> {
        for (node, g) in grid.metrics().iter().enumerate() {
            if g.tx.abs() > 1e-12 * g.frobenius() {
                return Err(ClarkeError::NotDiagonal { node, g_tx: g.tx });
            }
        }
        let initial_row = grid.row_near(0.0).ok_or(ClarkeError::NoInitialRow)?;
        if grid.time_of_row(initial_row).abs() > 1e-9 * grid.spacing()[0] {
            return Err(ClarkeError::NoInitialRow);
        }
        let lapse = ScalarField::new(grid.metrics().iter().map(|g| (-g.tt).sqrt()).collect())?;
        let scale = ScalarField::new(grid.metrics().iter().map(|g| g.xx.sqrt()).collect())?;
        let sigma = ScalarField::from_fn(&grid, |_, y| y * y);
        let masses = MeasureSpec::lebesgue().node_masses(&grid)?;
        let eps = 0.5 * grid.spacing()[0];
        let mut setup = ClarkeSetup {
            lapse,
            scale,
            in_y: Vec::new(),
            sigma,
            masses,
            omega_multiplier: 1.0,
            eps,
            exclude_y: None,
            initial_row,
            grid,
        };
        setup.in_y = setup.sigma.values().iter().map(|&s| s <= 1.0).collect();
        Ok(setup)
    }

    pub fn with_sigma(mut self, sigma: ScalarField) -> Result<ClarkeSetup, ClarkeError> {
        if sigma.len() != self.grid.len() {
            return Err(GeometryError::LengthMismatch {
                expected: self.grid.len(),
                got: sigma.len(),
            }
            .into());
        }
        if let Some((node, &value)) = sigma.values().iter().enumerate().find(|(_, s)| !(**s >= 0.0)) {
            return Err(ClarkeError::Sigma { node, value });
        }
        self.in_y = sigma.values().iter().map(|&s| s <= 1.0).collect();
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_measure(mut self, measure: &MeasureSpec) -> Result<ClarkeSetup, ClarkeError> {
        self.masses = measure.node_masses(&self.grid)?;
        Ok(self)
    }

    fn eligible(&self, x: usize) -> Result<(), ClarkeError> {
        let tau = self.grid.coords(x)[0];
        if !(tau > self.eps) {
            return Err(ClarkeError::TooEarly {
                node: x,
                tau,
                eps: self.eps,
            });
        }
        if let Some(band) = self.exclude_y {
            if self.sigma.get(x) <= 1.0 + band {
                return Err(ClarkeError::NearY { node: x });
            }
        }
        Ok(())
    }

    fn initial_slice(&self) -> Vec<usize> {
        self.grid.row(self.initial_row).collect()
    }
}

/// f(x) given J⁺(τ⁻¹(0)).
fn f_with(setup: &ClarkeSetup, dag: &CausalDag<'_>, future0: &[bool], x: usize) -> f64 {
    let grid = &setup.grid;
    let s = setup.sigma.get(x);
    let cut = s + 1e-12 * (1.0 + s);
    let targets: Vec<usize> = grid
        .row(grid.ij(x).0)
        .filter(|&n| setup.sigma.get(n) <= cut)
        .collect();
    let past = dag.past_mask(&targets);
    let mass: f64 = (0..grid.len())
        .filter(|&n| past[n] && future0[n])
        .map(|n| setup.masses[n])
        .sum();
    setup.omega_multiplier * mass
}

/// ω-measure of H⁺(τ(x), σ(x)) = J⁺(τ⁻¹(0)) ∩ J⁻(τ⁻¹(τ(x)) ∩ σ⁻¹[0, σ(x)]).
pub fn clarke_f(setup: &ClarkeSetup, dag: &CausalDag<'_>, x: usize) -> Result<f64, ClarkeError> {
    setup.eligible(x)?;
    let future0 = dag.future_mask(&setup.initial_slice());
    Ok(f_with(setup, dag, &future0, x))
}

#[derive(Debug, Clone)]
pub struct ClarkeField {
    /// 0 outside the domain of f.
    pub values: ScalarField,
    pub domain: Vec<bool>,
    /// Interior domain nodes whose four neighbours are in the domain.
    pub region: Vec<usize>,
}

pub fn clarke_field(setup: &ClarkeSetup, dag: &CausalDag<'_>) -> Result<ClarkeField, ClarkeError> {
    let grid = &setup.grid;
    let future0 = dag.future_mask(&setup.initial_slice());
    let domain: Vec<bool> = (0..grid.len()).map(|n| setup.eligible(n).is_ok()).collect();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|n| if domain[n] { f_with(setup, dag, &future0, n) } else { 0.0 })
        .collect();
    let region = grid
        .interior_nodes()
        .into_iter()
        .filter(|&n| {
            [(1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)]
                .iter()
                .all(|&(di, dj)| grid.offset(n, di, dj).is_some_and(|m| domain[m]))
        })
        .collect();
    Ok(ClarkeField {
        values: ScalarField::new(values)?,
        domain,
        region,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClarkeInequalityReport {
    pub nodes: usize,
    pub squares_holds: usize,
    pub product_holds: usize,
    pub steep_holds: usize,
    /// Nodes where the three tests disagree by more than `MARGIN_TOL`.
    pub discordant: Vec<usize>,
    pub min_squares_margin: f64,
    pub min_steep_margin: f64,
    pub max_margin_gap: f64,
}

impl ClarkeInequalityReport {
    pub fn all_hold(&self) -> bool {
        self.nodes > 0 && self.squares_holds == self.nodes && self.product_holds == self.nodes && self.steep_holds == self.nodes
    }
}

/// Margins of M²f_τ² − V²f_y² > V²M², (A₊f)(A₋f) > V²M² with
/// A± = M∂_τ ± V∂_σ along y, and g(∇f,∇f) < −1, all relative to V²M².
pub fn clarke_margins(setup: &ClarkeSetup, f: &[f64], n: usize) -> [f64; 3] {
    let grid = &setup.grid;
    let [ft, fy] = grid.differential(f, n);
    let (v, m) = (setup.lapse.get(n), setup.scale.get(n));
    let vm = v * v * m * m;
    let squares = (m * m * ft * ft - v * v * fy * fy - vm) / vm;
    let sign = if grid.coords(n)[1] < 0.0 { -1.0 } else { 1.0 };
    let a_plus = m * ft + v * sign * fy;
    let a_minus = m * ft - v * sign * fy;
    let product = (a_plus * a_minus - vm) / vm;
    let steep = -1.0 - grid.gradient_norm_sq_at(f, n);
    [squares, product, steep]
}

pub fn check_clarke_inequality(setup: &ClarkeSetup, f: &ScalarField, region: &[usize]) -> ClarkeInequalityReport {
    let f = f.values();
    let mut rep = ClarkeInequalityReport {
        nodes: region.len(),
        squares_holds: 0,
        product_holds: 0,
        steep_holds: 0,
        discordant: Vec::new(),
        min_squares_margin: f64::INFINITY,
        min_steep_margin: f64::INFINITY,
        max_margin_gap: 0.0,
    };
    for &n in region {
        let m = clarke_margins(setup, f, n);
        let holds = m.map(|v| v > MARGIN_TOL);
        rep.squares_holds += holds[0] as usize;
        rep.product_holds += holds[1] as usize;
        rep.steep_holds += holds[2] as usize;
        let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
        let gap = hi - lo;
        rep.max_margin_gap = rep.max_margin_gap.max(gap);
        if (holds[0] != holds[1] || holds[1] != holds[2]) && gap > MARGIN_TOL {
            rep.discordant.push(n);
        }
        rep.min_squares_margin = rep.min_squares_margin.min(m[0]);
        rep.min_steep_margin = rep.min_steep_margin.min(m[2]);
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaScanEntry {
    pub multiplier: f64,
    pub squares_holds: usize,
    pub nodes: usize,
    pub all_hold: bool,
}

/// The squares test for f_k = k·f₁, where `f1` was computed with multiplier 1.
pub fn omega_scan(setup: &ClarkeSetup, f1: &ScalarField, region: &[usize], multipliers: &[f64]) -> Vec<OmegaScanEntry> {
    multipliers
        .iter()
        .map(|&k| {
            let rep = check_clarke_inequality(setup, &f1.scale(k), region);
            OmegaScanEntry {
                multiplier: k,
                squares_holds: rep.squares_holds,
                nodes: rep.nodes,
                all_hold: rep.nodes > 0 && rep.squares_holds == rep.nodes,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceProfile {
    Flat { t: f64 },
    /// t = base + clamp(x − start, 0, height)
    NullFlank { base: f64, start: f64, height: f64 },
}

impl SliceProfile {
    pub fn time_at(&self, x: f64) -> f64 {
        match *self {
            SliceProfile::Flat { t } => t,
            SliceProfile::NullFlank { base, start, height } => base + (x - start).clamp(0.0, height),
        }
    }

    /// One node per column, at the row nearest to the graph.
    pub fn nodes(&self, grid: &GridSpacetime) -> Result<Vec<usize>, ClarkeError> {
        (0..grid.nx())
            .map(|j| {
                let x = grid.coords(grid.node(0, j))[1];
                let t = self.time_at(x);
                let i = grid
                    .row_near(t)
                    .ok_or(GeometryError::OutsideDomain { point: [t, x] })?;
                Ok(grid.node(i, j))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGeometry {
    pub spec: SpacetimeSpec,
    pub slice: SliceProfile,
    pub stencil_radius: usize,
}

/// Probe point on the null line continuing the flank of `fig1_geometry`.
pub const FIG1_PROBE_POINT: [f64; 2] = [1.3, 1.0];
pub const PROBE_SPACINGS: [f64; 3] = [0.1, 0.05, 0.025];

pub fn fig1_geometry() -> ProbeGeometry {
    ProbeGeometry {
        spec: crate::specs::bundled("fig1").expect("fig1 is bundled"),
        slice: SliceProfile::NullFlank {
            base: 0.0,
            start: -0.3,
            height: 0.5,
        },
        stencil_radius: DEFAULT_STENCIL_RADIUS,
    }
}

/// Same rectangle with S = {t = 0}.
pub fn flat_control_geometry() -> ProbeGeometry {
    ProbeGeometry {
        slice: SliceProfile::Flat { t: 0.0 },
        ..fig1_geometry()
    }
}

/// μ(J(S, x)) by two row sweeps, S excluded. Edges always climb rows, so
/// increasing row order is topological.
pub fn slab_volume_by_sweep(
    dag: &CausalDag<'_>,
    masses: &[f64],
    slice: &[usize],
    x: usize,
) -> Result<f64, ClarkeError> {
    let grid = dag.grid();
    let nx = grid.nx();
    let mut above = vec![false; grid.len()];
    for &s in slice {
        above[s] = true;
    }
    for n in 0..grid.len() {
        if !above[n] {
            above[n] = dag.in_edges(n).iter().any(|e| above[e.node]);
        }
    }
    let mut on_slice = vec![false; grid.len()];
    for &s in slice {
        on_slice[s] = true;
    }
    if !above[x] || on_slice[x] {
        return Err(ClarkeError::NotInFuture { node: x });
    }
    let top = grid.ij(x).0;
    let mut below = vec![false; (top + 1) * nx];
    below[x] = true;
    let mut total = 0.0;
    for n in (0..below.len()).rev() {
        if !below[n] {
            continue;
        }
        if above[n] && !on_slice[n] {
            total += masses[n];
        }
        for e in dag.in_edges(n) {
            below[e.node] = true;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessProbeReport {
    pub z: [f64; 2],
    /// Lattice steps (rows, columns) per sample.
    pub direction: [i64; 2],
    pub slice: SliceProfile,
    pub spacings: Vec<f64>,
    /// μ at z − h·d, z, z + h·d.
    pub values: Vec<[f64; 3]>,
    /// Backward and forward.
    pub first_differences: Vec<[f64; 2]>,
    pub second_differences: Vec<f64>,
    /// Second difference over h. Tends to the jump of the first derivative
    /// across a kink, and to 0 where μ is C².
    pub normalized_second: Vec<f64>,
    pub first_shrink: Vec<f64>,
    pub second_shrink: Vec<f64>,
    pub continuous: bool,
    pub c2_failure: bool,
    pub second_difference_shrinks: bool,
}

fn ratio(coarse: f64, fine: f64) -> f64 {
    if fine.abs() <= 1e-300 {
        f64::INFINITY
    } else {
        coarse.abs() / fine.abs()
    }
}

fn probe_level(geometry: &ProbeGeometry, z: [f64; 2], direction: [i64; 2], h: f64) -> Result<[f64; 3], ClarkeError> {
    let grid = build_grid(&geometry.spec, [h, h])?;
    let dag = build_causal_dag(&grid, geometry.stencil_radius)?;
    let slice = geometry.slice.nodes(&grid)?;
    let masses = vec![grid.cell_area(); grid.len()];
    let (center, dist) = grid.nearest_node(z)?;
    if dist > 1e-9 * (1.0 + h) {
        return Err(ClarkeError::NotRepresentable { point: z, h });
    }
    let mut out = [0.0; 3];
    for (k, v) in [-1isize, 0, 1].iter().zip(out.iter_mut()) {
        let n = grid
            .offset(center, k * direction[0] as isize, k * direction[1] as isize)
            .ok_or(ClarkeError::OutsideGrid { h })?;
        *v = slab_volume_by_sweep(&dag, &masses, &slice, n)?;
    }
    Ok(out)
}

/// μ(J(S,·)) at z and its two neighbours along `direction`, at each spacing.
pub fn probe_volume_smoothness(
    geometry: &ProbeGeometry,
    z: [f64; 2],
    direction: [i64; 2],
    spacings: &[f64],
) -> Result<SmoothnessProbeReport, ClarkeError> {
    let values = spacings
        .par_iter()
        .map(|&h| probe_level(geometry, z, direction, h))
        .collect::<Result<Vec<_>, _>>()?;
    let first_differences: Vec<[f64; 2]> = values.iter().map(|v| [v[1] - v[0], v[2] - v[1]]).collect();
    let second_differences: Vec<f64> = values.iter().map(|v| v[2] - 2.0 * v[1] + v[0]).collect();
    let normalized_second: Vec<f64> = second_differences.iter().zip(spacings).map(|(d, h)| d / h).collect();
    let first_max: Vec<f64> = first_differences.iter().map(|d| d[0].abs().max(d[1].abs())).collect();
    let first_shrink: Vec<f64> = first_max.windows(2).map(|w| ratio(w[0], w[1])).collect();
    let second_shrink: Vec<f64> = normalized_second.windows(2).map(|w| ratio(w[0], w[1])).collect();
    let scale = values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let c2_failure = normalized_second.len() >= 2
        && normalized_second.iter().all(|d| d.abs() > 1e-9 * (1.0 + scale))
        && normalized_second
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() < STABLE_CHANGE * w[0].abs());
    Ok(SmoothnessProbeReport {
        z,
        direction,
        slice: geometry.slice,
        spacings: spacings.to_vec(),
        continuous: !first_shrink.is_empty() && first_shrink.iter().all(|&r| r >= SHRINK_FACTOR),
        second_difference_shrinks: !second_shrink.is_empty() && second_shrink.iter().all(|&r| r >= SHRINK_FACTOR),
        c2_failure,
        values,
        first_differences,
        second_differences,
        normalized_second,
        first_shrink,
        second_shrink,
    })
}
