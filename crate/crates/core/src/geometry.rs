//! Chart spacetimes: symbolic specs, sampled grids, vectors and fields.
//!
//! All spacetimes are 2D with coordinates `(t, x)`, `t` the time coordinate.
//! Nodes are indexed row-major: `node = i * nx + j` with `i` the time index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{EvalError, Expr};

/// Relative band used to call a vector null on floating point input.
pub const EPS_NULL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: [f64; 2] },
    #[error("metric is not Lorentzian at {point:?} (det = {det}, g_tt = {g_tt})")]
    Signature { point: [f64; 2], det: f64, g_tt: f64 },
    #[error("metric evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("grid spacing must be positive, got {0:?}")]
    InvalidSpacing([f64; 2]),
    #[error("axis {axis} has {count} nodes, at least 8 are required")]
    TooFewNodes { axis: usize, count: usize },
    #[error("field value at node {node} is not finite")]
    NonFinite { node: usize },
    #[error("field has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.lo.abs().max(self.hi.abs()));
        v >= self.lo - slack && v <= self.hi + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeOrientation {
    /// Future is the direction of increasing `t`.
    IncreasingT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeSpec {
    pub name: String,
    pub coord_names: [String; 2],
    pub domain: [Interval; 2],
    /// `g_tt`, `g_tx`, `g_xx`.
    pub metric_exprs: [Expr; 3],
    pub time_orientation: TimeOrientation,
}

impl SpacetimeSpec {
    pub fn minkowski(t: Interval, x: Interval) -> SpacetimeSpec {
        SpacetimeSpec {
            name: "minkowski".into(),
            coord_names: ["t".into(), "x".into()],
            domain: [t, x],
            metric_exprs: [Expr::Const(-1.0), Expr::Const(0.0), Expr::Const(1.0)],
            time_orientation: TimeOrientation::IncreasingT,
        }
    }

    pub fn with_domain(&self, domain: [Interval; 2]) -> SpacetimeSpec {
        SpacetimeSpec {
            domain,
            ..self.clone()
        }
    }

    pub fn contains(&self, point: [f64; 2]) -> bool {
        self.domain[0].contains(point[0]) && self.domain[1].contains(point[1])
    }

    /// Evaluate the metric at a chart point and check its signature.
    pub fn metric_at(&self, point: [f64; 2]) -> Result<Metric2, GeometryError> {
        if !self.contains(point) {
            return Err(GeometryError::OutsideDomain { point });
        }
        let [tt, tx, xx] = &self.metric_exprs;
        let g = Metric2 {
            tt: tt.eval(&point)?,
            tx: tx.eval(&point)?,
            xx: xx.eval(&point)?,
        };
        g.check_lorentzian(point)?;
        Ok(g)
    }
}

/// Symmetric 2×2 matrix in the chart basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric2 {
    pub tt: f64,
    pub tx: f64,
    pub xx: f64,
}

impl Metric2 {
    pub const MINKOWSKI: Metric2 = Metric2 {
        tt: -1.0,
        tx: 0.0,
        xx: 1.0,
    };

    pub fn new(tt: f64, tx: f64, xx: f64) -> Metric2 {
        Metric2 { tt, tx, xx }
    }

    pub fn det(&self) -> f64 {
        self.tt * self.xx - self.tx * self.tx
    }

    pub fn inverse(&self) -> Metric2 {
        let d = self.det();
        Metric2 {
            tt: self.xx / d,
            tx: -self.tx / d,
            xx: self.tt / d,
        }
    }

    pub fn dot(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        self.tt * u[0] * v[0] + self.tx * (u[0] * v[1] + u[1] * v[0]) + self.xx * u[1] * v[1]
    }

    pub fn norm_sq(&self, v: [f64; 2]) -> f64 {
        self.dot(v, v)
    }

    /// Matrix-vector product; maps covectors to vectors when applied to an inverse.
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.tt * v[0] + self.tx * v[1],
            self.tx * v[0] + self.xx * v[1],
        ]
    }

    pub fn matmul(&self, other: &Metric2) -> [[f64; 2]; 2] {
        let a = self.as_array();
        let b = other.as_array();
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.tt, self.tx], [self.tx, self.xx]]
    }

    pub fn scaled(&self, f: f64) -> Metric2 {
        Metric2 {
            tt: self.tt * f,
            tx: self.tx * f,
            xx: self.xx * f,
        }
    }

    pub fn add(&self, o: &Metric2) -> Metric2 {
        Metric2 {
            tt: self.tt + o.tt,
            tx: self.tx + o.tx,
            xx: self.xx + o.xx,
        }
    }

    pub fn sub(&self, o: &Metric2) -> Metric2 {
        self.add(&o.scaled(-1.0))
    }

    /// Symmetric tensor product `w ⊗ w` of a covector.
    pub fn outer(w: [f64; 2]) -> Metric2 {
        Metric2 {
            tt: w[0] * w[0],
            tx: w[0] * w[1],
            xx: w[1] * w[1],
        }
    }

    pub fn lerp(&self, o: &Metric2, s: f64) -> Metric2 {
        self.scaled(1.0 - s).add(&o.scaled(s))
    }

    pub fn frobenius(&self) -> f64 {
        (self.tt * self.tt + 2.0 * self.tx * self.tx + self.xx * self.xx).sqrt()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.tt > 0.0 && self.det() > 0.0
    }

    pub fn check_lorentzian(&self, point: [f64; 2]) -> Result<(), GeometryError> {
        let det = self.det();
        if !(det < 0.0) || !(self.tt < 0.0) {
            return Err(GeometryError::Signature {
                point,
                det,
                g_tt: self.tt,
            });
        }
        Ok(())
    }

    /// Tolerance below which `g(v, v)` counts as zero. Scales with `‖g‖·|v|²`
    /// so the band is invariant under conformal rescaling.
    pub fn null_band(&self, v: [f64; 2]) -> f64 {
        EPS_NULL * self.frobenius() * (v[0] * v[0] + v[1] * v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorClass {
    Timelike,
    Lightlike,
    Spacelike,
    Zero,
}

impl VectorClass {
    pub fn is_causal(self) -> bool {
        matches!(self, VectorClass::Timelike | VectorClass::Lightlike)
    }
}

/// The zero vector is its own class: neither causal nor spacelike.
pub fn classify_vector(metric: &Metric2, v: [f64; 2]) -> VectorClass {
    if v[0] == 0.0 && v[1] == 0.0 {
        return VectorClass::Zero;
    }
    let q = metric.norm_sq(v);
    let band = metric.null_band(v);
    if q.abs() <= band {
        VectorClass::Lightlike
    } else if q < 0.0 {
        VectorClass::Timelike
    } else {
        VectorClass::Spacelike
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub components: [f64; 2],
    pub base_node: usize,
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<ScalarField, GeometryError> {
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { node });
        }
        Ok(ScalarField { values })
    }

    pub fn zeros(n: usize) -> ScalarField {
        ScalarField {
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: &GridSpacetime, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = (0..grid.len())
            .map(|n| {
                let [t, x] = grid.coords(n);
                f(t, x)
            })
            .collect();
        ScalarField { values }
    }

    pub fn from_expr(grid: &GridSpacetime, e: &Expr) -> Result<ScalarField, GeometryError> {
        let values = (0..grid.len())
            .map(|n| e.eval(&grid.coords(n)))
            .collect::<Result<Vec<_>, _>>()?;
        ScalarField::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, o: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.len(), o.len(), "field length mismatch");
        ScalarField {
            values: self.values.iter().zip(&o.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, o: &ScalarField) -> ScalarField {
        self.zip_with(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &ScalarField) -> ScalarField {
        self.zip_with(o, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| v * c)
    }

    /// `self + c·o`.
    pub fn axpy(&self, c: f64, o: &ScalarField) -> ScalarField {
        self.zip_with(o, |a, b| a + c * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sampled chart: regular lattice with cached metric and inverse per node.
#[derive(Debug, Clone)]
pub struct GridSpacetime {
    spec: SpacetimeSpec,
    spacing: [f64; 2],
    origin: [f64; 2],
    shape: [usize; 2],
    metrics: Vec<Metric2>,
    inverses: Vec<Metric2>,
}

pub fn build_grid(spec: &SpacetimeSpec, spacing: [f64; 2]) -> Result<GridSpacetime, GeometryError> {
    if !(spacing[0] > 0.0 && spacing[1] > 0.0) || !spacing.iter().all(|h| h.is_finite()) {
        return Err(GeometryError::InvalidSpacing(spacing));
    }
    let mut shape = [0usize; 2];
    for axis in 0..2 {
        let count = (spec.domain[axis].len() / spacing[axis] + 1e-9).floor() as usize + 1;
        if count < 8 {
            return Err(GeometryError::TooFewNodes { axis, count });
        }
        shape[axis] = count;
    }
    let origin = [spec.domain[0].lo, spec.domain[1].lo];
    let mut metrics = Vec::with_capacity(shape[0] * shape[1]);
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            let point = [
                origin[0] + i as f64 * spacing[0],
                origin[1] + j as f64 * spacing[1],
            ];
            metrics.push(spec.metric_at(point)?);
        }
    }
    GridSpacetime::from_metrics(spec.clone(), spacing, metrics)
}

impl GridSpacetime {
    /// Grid over `spec.domain` with the given nodal metrics (e.g. after a
    /// nodewise conformal change). Signature is re-checked.
    pub fn from_metrics(
        spec: SpacetimeSpec,
        spacing: [f64; 2],
        metrics: Vec<Metric2>,
    ) -> Result<GridSpacetime, GeometryError> {
        let mut shape = [0usize; 2];
        for axis in 0..2 {
            shape[axis] = (spec.domain[axis].len() / spacing[axis] + 1e-9).floor() as usize + 1;
        }
        if metrics.len() != shape[0] * shape[1] {
            return Err(GeometryError::LengthMismatch {
                expected: shape[0] * shape[1],
                got: metrics.len(),
            });
        }
        let origin = [spec.domain[0].lo, spec.domain[1].lo];
        let grid = GridSpacetime {
            spec,
            spacing,
            origin,
            shape,
            inverses: metrics.iter().map(Metric2::inverse).collect(),
            metrics,
        };
        for n in 0..grid.len() {
            grid.metrics[n].check_lorentzian(grid.coords(n))?;
        }
        Ok(grid)
    }

    /// Same lattice under `t ↦ -t`: rows are reversed and `g_tx` flips sign,
    /// so future-directed edges of the copy are past-directed edges here.
    pub fn time_reversed(&self) -> GridSpacetime {
        let [tt, tx, xx] = &self.spec.metric_exprs;
        let t = self.spec.domain[0];
        let spec = SpacetimeSpec {
            name: format!("{}-reversed", self.spec.name),
            domain: [
                Interval {
                    lo: -t.hi,
                    hi: -t.lo,
                },
                self.spec.domain[1],
            ],
            metric_exprs: [
                tt.reflect_coord(0),
                Expr::Neg(Box::new(tx.reflect_coord(0))),
                xx.reflect_coord(0),
            ],
            ..self.spec.clone()
        };
        let metrics = (0..self.len())
            .map(|n| {
                let g = self.metrics[self.mirror_node(n)];
                Metric2::new(g.tt, -g.tx, g.xx)
            })
            .collect();
        let mut out = GridSpacetime::from_metrics(spec, self.spacing, metrics)
            .expect("mirrored metrics keep their signature");
        // keep rows exactly aligned when the domain is not a multiple of h
        out.origin[0] = -self.time_of_row(self.shape[0] - 1);
        out
    }

    /// Node with the same column and mirrored row.
    pub fn mirror_node(&self, n: usize) -> usize {
        let (i, j) = self.ij(n);
        self.node(self.shape[0] - 1 - i, j)
    }

    pub fn spec(&self) -> &SpacetimeSpec {
        &self.spec
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn nt(&self) -> usize {
        self.shape[0]
    }

    pub fn nx(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.shape[0] && j < self.shape[1]);
        i * self.shape[1] + j
    }

    pub fn ij(&self, n: usize) -> (usize, usize) {
        (n / self.shape[1], n % self.shape[1])
    }

    /// Node at integer lattice offset, if inside the grid.
    pub fn offset(&self, n: usize, di: isize, dj: isize) -> Option<usize> {
        let (i, j) = self.ij(n);
        let i2 = i as isize + di;
        let j2 = j as isize + dj;
        if i2 < 0 || j2 < 0 || i2 >= self.shape[0] as isize || j2 >= self.shape[1] as isize {
            return None;
        }
        Some(self.node(i2 as usize, j2 as usize))
    }

    pub fn coords(&self, n: usize) -> [f64; 2] {
        let (i, j) = self.ij(n);
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
        ]
    }

    pub fn time_of_row(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.spacing[0]
    }

    /// Row whose time is nearest to `t`, if `t` is inside the grid.
    pub fn row_near(&self, t: f64) -> Option<usize> {
        let r = ((t - self.origin[0]) / self.spacing[0]).round();
        if r < 0.0 || r >= self.shape[0] as f64 {
            None
        } else {
            Some(r as usize)
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.shape[1]).map(move |j| self.node(i, j))
    }

    /// Nearest node to a chart point and the snap distance (chart units).
    pub fn nearest_node(&self, point: [f64; 2]) -> Result<(usize, f64), GeometryError> {
        if !self.spec.contains(point) {
            return Err(GeometryError::OutsideDomain { point });
        }
        let mut idx = [0usize; 2];
        for a in 0..2 {
            let r = ((point[a] - self.origin[a]) / self.spacing[a]).round();
            idx[a] = (r.max(0.0) as usize).min(self.shape[a] - 1);
        }
        let n = self.node(idx[0], idx[1]);
        let c = self.coords(n);
        let dist = ((c[0] - point[0]).powi(2) + (c[1] - point[1]).powi(2)).sqrt();
        Ok((n, dist))
    }

    pub fn metric(&self, n: usize) -> &Metric2 {
        &self.metrics[n]
    }

    pub fn inverse_metric(&self, n: usize) -> &Metric2 {
        &self.inverses[n]
    }

    pub fn metrics(&self) -> &[Metric2] {
        &self.metrics
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        let (i, j) = self.ij(n);
        i == 0 || j == 0 || i + 1 == self.shape[0] || j + 1 == self.shape[1]
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| !self.is_boundary(n)).collect()
    }

    /// Metric at a point on the segment between two nodes, by linear
    /// interpolation of components.
    pub fn metric_between(&self, p: usize, q: usize, s: f64) -> Metric2 {
        self.metrics[p].lerp(&self.metrics[q], s)
    }

    /// Partial derivatives `(∂_t f, ∂_x f)` at a node: central differences in
    /// the interior, first-order one-sided on the boundary.
    pub fn differential(&self, field: &[f64], n: usize) -> [f64; 2] {
        let (i, j) = self.ij(n);
        let d = |idx: usize, len: usize, h: f64, at: &dyn Fn(usize) -> f64| -> f64 {
            if idx == 0 {
                (at(1) - at(0)) / h
            } else if idx + 1 == len {
                (at(idx) - at(idx - 1)) / h
            } else {
                (at(idx + 1) - at(idx - 1)) / (2.0 * h)
            }
        };
        let dt = d(i, self.shape[0], self.spacing[0], &|ii| field[self.node(ii, j)]);
        let dx = d(j, self.shape[1], self.spacing[1], &|jj| field[self.node(i, jj)]);
        [dt, dx]
    }

    /// Index-raised gradient `∇f = g^{ab} ∂_b f` at every node.
    pub fn gradient(&self, field: &ScalarField) -> Vec<TangentVector> {
        let values = field.values();
        assert_eq!(values.len(), self.len(), "field length mismatch");
        (0..self.len())
            .map(|n| TangentVector {
                components: self.inverses[n].apply(self.differential(values, n)),
                base_node: n,
            })
            .collect()
    }

    /// `g(∇f, ∇f) = g^{ab} ∂_a f ∂_b f` at one node.
    pub fn gradient_norm_sq_at(&self, field: &[f64], n: usize) -> f64 {
        self.inverses[n].norm_sq(self.differential(field, n))
    }

    /// `g(∇f, ∇f)` at every node.
    pub fn gradient_norm_sq(&self, field: &ScalarField) -> Vec<f64> {
        let v = field.values();
        (0..self.len()).map(|n| self.gradient_norm_sq_at(v, n)).collect()
    }
}

/// Free-function form of the module's metric evaluation.
pub fn metric_at(spec: &SpacetimeSpec, point: [f64; 2]) -> Result<Metric2, GeometryError> {
    spec.metric_at(point)
}

pub fn gradient(grid: &GridSpacetime, field: &ScalarField) -> Vec<TangentVector> {
    grid.gradient(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_spec;
    use proptest::prelude::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    fn example_ex() -> SpacetimeSpec {
        parse_spec(
            "spacetime \"ex\" { coords: t, x; domain: t in [-4, 4], x in [0.05, 4];
             g_tt = -1/(x*x); g_tx = 0; g_xx = 1/(x*x); }",
        )
        .unwrap()
    }

    #[test]
    fn metric_examples() {
        let m = SpacetimeSpec::minkowski(iv(-2.0, 2.0), iv(-2.0, 2.0));
        assert_eq!(m.metric_at([0.3, -1.1]).unwrap(), Metric2::MINKOWSKI);
        let ex = example_ex();
        let g = ex.metric_at([0.0, 2.0]).unwrap();
        assert_eq!(g, Metric2::new(-0.25, 0.0, 0.25));
        assert!(matches!(
            ex.metric_at([0.0, 0.0]),
            Err(GeometryError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn signature_error_names_point() {
        let s = parse_spec(
            "spacetime \"bad\" { coords: t, x; domain: t in [0, 1], x in [0, 1];
             g_tt = x - 0.5; g_tx = 0; g_xx = 1; }",
        )
        .unwrap();
        match s.metric_at([0.0, 0.75]) {
            Err(GeometryError::Signature { point, .. }) => assert_eq!(point, [0.0, 0.75]),
            other => panic!("{other:?}"),
        }
        let err = build_grid(&s, [0.1, 0.1]).unwrap_err();
        assert!(matches!(err, GeometryError::Signature { .. }));
    }

    #[test]
    fn classify_examples() {
        let g = Metric2::MINKOWSKI;
        assert_eq!(classify_vector(&g, [1.0, 0.0]), VectorClass::Timelike);
        assert_eq!(classify_vector(&g, [1.0, 1.0]), VectorClass::Lightlike);
        assert_eq!(classify_vector(&g, [0.0, 1.0]), VectorClass::Spacelike);
        assert_eq!(classify_vector(&g, [0.0, 0.0]), VectorClass::Zero);
        assert!(!VectorClass::Zero.is_causal());
    }

    #[test]
    fn build_grid_examples() {
        let m = SpacetimeSpec::minkowski(iv(-2.0, 2.0), iv(-2.0, 2.0));
        let g = build_grid(&m, [0.5, 0.5]).unwrap();
        assert_eq!(g.shape(), [9, 9]);
        assert!(g.metrics().iter().all(|m| *m == Metric2::MINKOWSKI));

        let ex = build_grid(&example_ex(), [0.05, 0.05]).unwrap();
        assert!((0..ex.len()).all(|n| ex.coords(n)[1] > 0.0));

        assert!(matches!(
            build_grid(&m, [0.0, 0.5]),
            Err(GeometryError::InvalidSpacing(_))
        ));
        assert!(matches!(
            build_grid(&m, [1.0, 0.5]),
            Err(GeometryError::TooFewNodes { axis: 0, .. })
        ));
    }

    #[test]
    fn inverse_identity_everywhere() {
        let ex = build_grid(&example_ex(), [0.1, 0.1]).unwrap();
        for n in 0..ex.len() {
            let p = ex.metric(n).matmul(ex.inverse_metric(n));
            assert!((p[0][0] - 1.0).abs() < 1e-10 && (p[1][1] - 1.0).abs() < 1e-10);
            assert!(p[0][1].abs() < 1e-10 && p[1][0].abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_examples() {
        let m = build_grid(&SpacetimeSpec::minkowski(iv(-2.0, 2.0), iv(-2.0, 2.0)), [0.1, 0.1]).unwrap();
        let t = ScalarField::from_fn(&m, |t, _| t);
        let grad = m.gradient(&t);
        for n in m.interior_nodes() {
            let v = grad[n].components;
            assert!((v[0] + 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
            assert!((m.metric(n).norm_sq(v) + 1.0).abs() < 1e-12);
        }
        let c = ScalarField::from_fn(&m, |_, _| 3.5);
        assert!(m.gradient(&c).iter().all(|v| v.components == [0.0, 0.0]));

        let ex = build_grid(&example_ex(), [0.05, 0.05]).unwrap();
        let t = ScalarField::from_fn(&ex, |t, _| t);
        let nsq = ex.gradient_norm_sq(&t);
        for n in ex.interior_nodes() {
            let x = ex.coords(n)[1];
            assert!((nsq[n] + x * x).abs() < 1e-9, "{} vs {}", nsq[n], -x * x);
        }
    }

    #[test]
    fn time_reversal_mirrors_rows() {
        let spec = parse_spec(
            "spacetime \"tilt\" { coords: t, x; domain: t in [0, 1], x in [0, 1];
             g_tt = -1 - t; g_tx = 0.3 * x; g_xx = 1; }",
        )
        .unwrap();
        let g = build_grid(&spec, [0.1, 0.1]).unwrap();
        let r = g.time_reversed();
        for n in 0..g.len() {
            let m = r.mirror_node(n);
            let [t, x] = g.coords(n);
            let c = r.coords(m);
            assert!((c[0] + t).abs() < 1e-12 && (c[1] - x).abs() < 1e-12);
            let a = g.metric(n);
            let b = r.metric(m);
            assert_eq!((a.tt, -a.tx, a.xx), (b.tt, b.tx, b.xx));
            let sym = r.spec().metric_at([-t, x]).unwrap();
            assert!((sym.tt - b.tt).abs() < 1e-12 && (sym.tx - b.tx).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_node_snaps() {
        let m = build_grid(&SpacetimeSpec::minkowski(iv(-2.0, 2.0), iv(-2.0, 2.0)), [0.5, 0.5]).unwrap();
        let (n, d) = m.nearest_node([0.1, 0.0]).unwrap();
        assert_eq!(m.coords(n), [0.0, 0.0]);
        assert!((d - 0.1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn classification_scale_invariant(
            a in -3.0..3.0f64, b in -3.0..3.0f64, c in 0.2..3.0f64,
            vt in -5.0..5.0f64, vx in -5.0..5.0f64, lambda in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64],
        ) {
            // Lorentzian metric built as  -c²dt² + (dx + b dt)² scaled, symmetric part with a
            let g = Metric2::new(-c * c + b * b, b, 1.0 + a * a);
            prop_assume!(g.det() < 0.0);
            let v = [vt, vx];
            let w = [lambda * vt, lambda * vx];
            prop_assert_eq!(classify_vector(&g, v), classify_vector(&g, w));
        }

        #[test]
        fn linear_gradient_exact(a in -3.0..3.0f64, b in -3.0..3.0f64, tx in -0.4..0.4f64) {
            let spec = SpacetimeSpec {
                metric_exprs: [Expr::Const(-1.0), Expr::Const(tx), Expr::Const(1.5)],
                ..SpacetimeSpec::minkowski(iv(-1.0, 1.0), iv(-1.0, 1.0))
            };
            let grid = build_grid(&spec, [0.2, 0.25]).unwrap();
            let f = ScalarField::from_fn(&grid, |t, x| a * t + b * x);
            let grad = grid.gradient(&f);
            let exact = grid.inverse_metric(0).apply([a, b]);
            for n in grid.interior_nodes() {
                prop_assert!((grad[n].components[0] - exact[0]).abs() < 1e-8);
                prop_assert!((grad[n].components[1] - exact[1]).abs() < 1e-8);
                // two routes to g(∇f, ∇f)
                let via_vec = grid.metric(n).norm_sq(grad[n].components);
                let via_cov = grid.gradient_norm_sq_at(f.values(), n);
                prop_assert!((via_vec - via_cov).abs() < 1e-10 * (1.0 + via_cov.abs()));
            }
        }
    }
}
