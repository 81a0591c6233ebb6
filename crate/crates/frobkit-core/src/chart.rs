//! Charts, grids, scalar fields, interpolation, and finite differences.
//!
//! A [`Chart`] is a 2- or 3-dimensional box of coordinates with a per-axis
//! margin; the margin-shrunk interior is where flows of bounded duration are
//! guaranteed to stay inside the chart. A [`ScalarField`] is either analytic
//! (an expression), sampled on a grid with multilinear interpolation, a
//! mollification of another field, or a pointwise combination of fields.
//! Norms and distances are Euclidean in the chart coordinates.

use crate::error::{Error, Result};
use crate::expr::Expression;
use std::sync::Arc;

pub type Point = [f64; 3];

/// Declared smoothness of a field. Never inferred: a sampled field is
/// continuous unless the caller promises more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Smoothness {
    #[serde(rename = "c0")]
    Continuous,
    #[serde(rename = "c1")]
    C1,
    #[serde(rename = "c2")]
    C2,
}

impl Smoothness {
    pub fn differentiable(self) -> bool {
        self >= Smoothness::C1
    }

    pub fn tag(self) -> &'static str {
        match self {
            Smoothness::Continuous => "c0",
            Smoothness::C1 => "c1",
            Smoothness::C2 => "c2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub dim: usize,
    pub bounds: [[f64; 2]; 3],
    pub margin: [f64; 3],
}

impl Chart {
    pub fn new(dim: usize, bounds: &[[f64; 2]], margin: &[f64]) -> Result<Chart> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidChart(format!("dim must be 2 or 3, got {dim}")));
        }
        if bounds.len() != dim || margin.len() != dim {
            return Err(Error::InvalidChart(format!(
                "expected {dim} bounds and margins, got {} and {}",
                bounds.len(),
                margin.len()
            )));
        }
        let mut b = [[0.0, 0.0]; 3];
        let mut m = [0.0; 3];
        for i in 0..dim {
            let [lo, hi] = bounds[i];
            if !(lo < hi) {
                return Err(Error::InvalidChart(format!(
                    "axis {i} interval [{lo}, {hi}] is degenerate"
                )));
            }
            if margin[i] < 0.0 || margin[i] >= (hi - lo) / 2.0 {
                return Err(Error::InvalidChart(format!(
                    "axis {i} margin {} must lie in [0, {})",
                    margin[i],
                    (hi - lo) / 2.0
                )));
            }
            b[i] = [lo, hi];
            m[i] = margin[i];
        }
        Ok(Chart {
            dim,
            bounds: b,
            margin: m,
        })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64, margin: f64) -> Result<Chart> {
        let b: Vec<[f64; 2]> = (0..dim).map(|_| [lo, hi]).collect();
        let m: Vec<f64> = (0..dim).map(|_| margin).collect();
        Chart::new(dim, &b, &m)
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.bounds[axis][1] - self.bounds[axis][0]
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|i| p[i] >= self.bounds[i][0] && p[i] <= self.bounds[i][1])
    }

    /// The margin-shrunk interior where flow-based operations are run.
    pub fn interior_bounds(&self) -> [[f64; 2]; 3] {
        let mut b = self.bounds;
        for i in 0..self.dim {
            b[i][0] += self.margin[i];
            b[i][1] -= self.margin[i];
        }
        b
    }

    pub fn contains_interior(&self, p: &Point) -> bool {
        let b = self.interior_bounds();
        (0..self.dim).all(|i| p[i] >= b[i][0] && p[i] <= b[i][1])
    }

    pub fn min_margin(&self) -> f64 {
        (0..self.dim).map(|i| self.margin[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn clamp(&self, p: &Point) -> Point {
        let mut q = *p;
        for i in 0..self.dim {
            q[i] = q[i].clamp(self.bounds[i][0], self.bounds[i][1]);
        }
        q
    }

    /// Default finite-difference step for an axis: 1e-5 of the axis width.
    pub fn default_step(&self, axis: usize) -> f64 {
        self.width(axis) * 1e-5
    }
}

/// A rectilinear evaluation grid (node counts plus the box it spans).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub bounds: [[f64; 2]; 3],
    pub counts: [usize; 3],
}

impl Grid {
    pub fn new(dim: usize, bounds: &[[f64; 2]], counts: &[usize]) -> Result<Grid> {
        if bounds.len() != dim || counts.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} bounds and counts"
            )));
        }
        let mut b = [[0.0, 0.0]; 3];
        let mut c = [1usize; 3];
        for i in 0..dim {
            if counts[i] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {i} needs at least 2 nodes, got {}",
                    counts[i]
                )));
            }
            if !(bounds[i][0] < bounds[i][1]) {
                return Err(Error::InvalidGrid(format!("axis {i} interval degenerate")));
            }
            b[i] = bounds[i];
            c[i] = counts[i];
        }
        Ok(Grid {
            dim,
            bounds: b,
            counts: c,
        })
    }

    /// Grid spanning the full chart bounds.
    pub fn covering(chart: &Chart, counts: &[usize]) -> Result<Grid> {
        Grid::new(chart.dim, &chart.bounds[..chart.dim], counts)
    }

    /// Grid spanning the margin-shrunk interior of the chart.
    pub fn interior(chart: &Chart, counts: &[usize]) -> Result<Grid> {
        let b = chart.interior_bounds();
        Grid::new(chart.dim, &b[..chart.dim], counts)
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|i| self.counts[i]).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bounds[axis][1] - self.bounds[axis][0]) / (self.counts[axis] - 1) as f64
    }

    pub fn axis_coord(&self, axis: usize, index: usize) -> f64 {
        if index + 1 == self.counts[axis] {
            self.bounds[axis][1]
        } else {
            self.bounds[axis][0] + self.spacing(axis) * index as f64
        }
    }

    /// Node point for a flat row-major index (last axis fastest).
    pub fn node(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for i in 0..self.dim {
            p[i] = self.axis_coord(i, idx[i]);
        }
        p
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rest = flat;
        for i in (0..self.dim).rev() {
            idx[i] = rest % self.counts[i];
            rest /= self.counts[i];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for i in 0..self.dim {
            flat = flat * self.counts[i] + idx[i];
        }
        flat
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        (0..self.len()).map(move |i| (i, self.node(i)))
    }

    /// True if every node lies inside the chart's margin-shrunk interior.
    pub fn within_interior(&self, chart: &Chart) -> bool {
        let ib = chart.interior_bounds();
        let tol = 1e-12;
        (0..self.dim).all(|i| {
            self.bounds[i][0] >= ib[i][0] - tol && self.bounds[i][1] <= ib[i][1] + tol
        })
    }
}

#[derive(Debug, Clone)]
pub struct SampledData {
    pub grid: Grid,
    pub values: Arc<Vec<f64>>,
}

impl SampledData {
    /// Multilinear interpolation; queries are clamped to the grid box.
    fn interpolate(&self, p: &Point) -> f64 {
        let g = &self.grid;
        let dim = g.dim;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..dim {
            let lo = g.bounds[i][0];
            let h = g.spacing(i);
            let t = ((p[i] - lo) / h).clamp(0.0, (g.counts[i] - 1) as f64);
            let mut b = t.floor() as usize;
            if b + 1 >= g.counts[i] {
                b = g.counts[i] - 2;
            }
            base[i] = b;
            frac[i] = t - b as f64;
        }
        let corners = 1usize << dim;
        let mut acc = 0.0;
        for corner in 0..corners {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for i in 0..dim {
                if corner >> i & 1 == 1 {
                    idx[i] = base[i] + 1;
                    w *= frac[i];
                } else {
                    idx[i] = base[i];
                    w *= 1.0 - frac[i];
                }
            }
            acc += w * self.values[g.flat_index(&idx[..dim])];
        }
        acc
    }
}

/// One node of the mollifier quadrature: an offset in kernel coordinates
/// (scaled by epsilon at evaluation time) and its normalized weight.
#[derive(Debug, Clone)]
pub struct MollifierQuad {
    pub offsets: Vec<Point>,
    pub weights: Vec<f64>,
    pub axes: [bool; 3],
}

#[derive(Clone)]
pub enum Source {
    Constant(f64),
    Analytic(Expression),
    Sampled(SampledData),
    Mollified {
        inner: Arc<ScalarField>,
        eps: f64,
        quad: Arc<MollifierQuad>,
    },
    Partial {
        inner: Arc<ScalarField>,
        axis: usize,
        step: f64,
    },
    Sum(Arc<ScalarField>, Arc<ScalarField>),
    Product(Arc<ScalarField>, Arc<ScalarField>),
    Quotient(Arc<ScalarField>, Arc<ScalarField>),
    Scale(Arc<ScalarField>, f64),
    Computed {
        f: Arc<dyn Fn(&Point) -> Result<f64> + Send + Sync>,
        label: String,
        deps: [bool; 3],
    },
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("smoothness", &self.smoothness)
            .field("kind", &self.describe())
            .finish()
    }
}

/// A scalar field over a chart.
#[derive(Clone)]
pub struct ScalarField {
    pub chart: Chart,
    pub smoothness: Smoothness,
    source: Source,
}

impl ScalarField {
    pub fn constant(chart: Chart, value: f64) -> ScalarField {
        ScalarField {
            chart,
            smoothness: Smoothness::C2,
            source: Source::Constant(value),
        }
    }

    pub fn analytic(chart: Chart, expr: Expression, smoothness: Smoothness) -> Result<ScalarField> {
        if let Some(max) = expr.max_var() {
            if max >= chart.dim {
                return Err(Error::VariableDim {
                    name: format!("x{}", max + 1),
                    dim: chart.dim,
                });
            }
        }
        Ok(ScalarField {
            chart,
            smoothness,
            source: Source::Analytic(expr),
        })
    }

    pub fn parse(chart: Chart, text: &str, smoothness: Smoothness) -> Result<ScalarField> {
        ScalarField::analytic(chart, Expression::parse(text)?, smoothness)
    }

    /// Wrap precomputed node values; the grid must cover the chart exactly.
    pub fn sampled(chart: Chart, grid: Grid, values: Vec<f64>, smoothness: Smoothness) -> Result<ScalarField> {
        let tol = 1e-12;
        for i in 0..chart.dim {
            if (grid.bounds[i][0] - chart.bounds[i][0]).abs() > tol * chart.width(i)
                || (grid.bounds[i][1] - chart.bounds[i][1]).abs() > tol * chart.width(i)
            {
                return Err(Error::InvalidGrid(format!(
                    "sampled grid must cover chart bounds exactly on axis {i}"
                )));
            }
        }
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField {
            chart,
            smoothness,
            source: Source::Sampled(SampledData {
                grid,
                values: Arc::new(values),
            }),
        })
    }

    pub fn computed(
        chart: Chart,
        label: impl Into<String>,
        deps: [bool; 3],
        smoothness: Smoothness,
        f: impl Fn(&Point) -> Result<f64> + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField {
            chart,
            smoothness,
            source: Source::Computed {
                f: Arc::new(f),
                label: label.into(),
                deps,
            },
        }
    }

    pub(crate) fn from_source(chart: Chart, smoothness: Smoothness, source: Source) -> ScalarField {
        ScalarField {
            chart,
            smoothness,
            source,
        }
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn describe(&self) -> String {
        match &self.source {
            Source::Constant(v) => format!("constant {v}"),
            Source::Analytic(e) => format!("analytic {e}"),
            Source::Sampled(s) => format!("sampled {:?}", &s.grid.counts[..s.grid.dim]),
            Source::Mollified { eps, .. } => format!("mollified eps={eps}"),
            Source::Partial { axis, step, .. } => format!("partial axis={axis} h={step}"),
            Source::Sum(..) => "sum".into(),
            Source::Product(..) => "product".into(),
            Source::Quotient(..) => "quotient".into(),
            Source::Scale(_, c) => format!("scale {c}"),
            Source::Computed { label, .. } => label.clone(),
        }
    }

    /// Axes the field actually depends on.
    pub fn deps(&self) -> [bool; 3] {
        match &self.source {
            Source::Constant(_) => [false; 3],
            Source::Analytic(e) => e.vars_used(),
            Source::Sampled(_) => {
                let mut d = [false; 3];
                for item in d.iter_mut().take(self.chart.dim) {
                    *item = true;
                }
                d
            }
            Source::Mollified { inner, .. } => inner.deps(),
            Source::Partial { inner, axis, .. } => {
                let mut d = inner.deps();
                d[*axis] = true;
                d
            }
            Source::Sum(a, b) | Source::Product(a, b) | Source::Quotient(a, b) => {
                let da = a.deps();
                let db = b.deps();
                [da[0] || db[0], da[1] || db[1], da[2] || db[2]]
            }
            Source::Scale(a, _) => a.deps(),
            Source::Computed { deps, .. } => *deps,
        }
    }

    pub fn eval(&self, p: &Point) -> Result<f64> {
        match &self.source {
            Source::Constant(v) => Ok(*v),
            Source::Analytic(e) => e.evaluate(p),
            Source::Sampled(s) => Ok(s.interpolate(p)),
            Source::Mollified { inner, eps, quad } => {
                let mut acc = 0.0;
                for (off, w) in quad.offsets.iter().zip(quad.weights.iter()) {
                    let mut q = *p;
                    for i in 0..self.chart.dim {
                        q[i] -= eps * off[i];
                    }
                    // Clamped extension outside the chart.
                    let q = self.chart.clamp(&q);
                    acc += w * inner.eval(&q)?;
                }
                Ok(acc)
            }
            Source::Partial { inner, axis, step } => partial(inner, *axis, p, *step),
            Source::Sum(a, b) => Ok(a.eval(p)? + b.eval(p)?),
            Source::Product(a, b) => Ok(a.eval(p)? * b.eval(p)?),
            Source::Quotient(a, b) => {
                let den = b.eval(p)?;
                if den == 0.0 {
                    return Err(Error::Singularity {
                        expr: self.describe(),
                        point: *p,
                        message: "division by zero".into(),
                    });
                }
                Ok(a.eval(p)? / den)
            }
            Source::Scale(a, c) => Ok(c * a.eval(p)?),
            Source::Computed { f, .. } => f(p),
        }
    }

    // Pointwise combinators. Smoothness is the weakest of the inputs.

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        ScalarField {
            chart: self.chart,
            smoothness: self.smoothness.min(other.smoothness),
            source: Source::Sum(Arc::new(self.clone()), Arc::new(other.clone())),
        }
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        ScalarField {
            chart: self.chart,
            smoothness: self.smoothness.min(other.smoothness),
            source: Source::Product(Arc::new(self.clone()), Arc::new(other.clone())),
        }
    }

    pub fn div(&self, other: &ScalarField) -> ScalarField {
        ScalarField {
            chart: self.chart,
            smoothness: self.smoothness.min(other.smoothness),
            source: Source::Quotient(Arc::new(self.clone()), Arc::new(other.clone())),
        }
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        ScalarField {
            chart: self.chart,
            smoothness: self.smoothness,
            source: Source::Scale(Arc::new(self.clone()), c),
        }
    }

    pub fn neg(&self) -> ScalarField {
        self.scale(-1.0)
    }

    /// The partial derivative along `axis` as a lazily-evaluated field.
    /// Requires a differentiable tag.
    pub fn partial_field(&self, axis: usize, step: f64) -> Result<ScalarField> {
        if !self.smoothness.differentiable() {
            return Err(Error::SmoothnessTag {
                tag: self.smoothness.tag().into(),
            });
        }
        let out_tag = match self.smoothness {
            Smoothness::C2 => Smoothness::C1,
            _ => Smoothness::Continuous,
        };
        Ok(ScalarField {
            chart: self.chart,
            smoothness: out_tag,
            source: Source::Partial {
                inner: Arc::new(self.clone()),
                axis,
                step,
            },
        })
    }
}

/// Sample a field on a grid; node values are exact pointwise evaluations.
pub fn sample(field: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    let mut values = Vec::with_capacity(grid.len());
    for (i, p) in grid.nodes() {
        let v = field.eval(&p).map_err(|e| Error::NodeEvaluation {
            index: i,
            source: Box::new(e),
        })?;
        values.push(v);
    }
    // Sampled fields interpolate multilinearly, which is only continuous.
    ScalarField::sampled(field.chart, grid.clone(), values, Smoothness::Continuous)
}

/// Central-difference partial derivative; falls back to a second-order
/// one-sided stencil only when the centered stencil leaves the chart.
pub fn partial(field: &ScalarField, axis: usize, p: &Point, h: f64) -> Result<f64> {
    let chart = &field.chart;
    if axis >= chart.dim {
        return Err(Error::invalid("partial", format!("axis {axis} out of range")));
    }
    if !field.smoothness.differentiable() {
        return Err(Error::SmoothnessTag {
            tag: field.smoothness.tag().into(),
        });
    }
    let width = chart.width(axis);
    if h <= 0.0 || h < 1e-9 * width {
        return Err(Error::StepUnderflow {
            step: h,
            axis,
            width,
        });
    }
    let mut fwd = *p;
    fwd[axis] += h;
    let mut bwd = *p;
    bwd[axis] -= h;
    let lo = chart.bounds[axis][0];
    let hi = chart.bounds[axis][1];
    if fwd[axis] <= hi && bwd[axis] >= lo {
        let a = field.eval(&fwd)?;
        let b = field.eval(&bwd)?;
        return Ok((a - b) / (2.0 * h));
    }
    // One-sided 3-point stencils at the boundary.
    if fwd[axis] > hi {
        let mut p1 = *p;
        p1[axis] -= h;
        let mut p2 = *p;
        p2[axis] -= 2.0 * h;
        if p2[axis] < lo {
            return Err(Error::StencilOutOfBounds { point: *p, axis });
        }
        let f0 = field.eval(p)?;
        let f1 = field.eval(&p1)?;
        let f2 = field.eval(&p2)?;
        Ok((3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h))
    } else {
        let mut p1 = *p;
        p1[axis] += h;
        let mut p2 = *p;
        p2[axis] += 2.0 * h;
        if p2[axis] > hi {
            return Err(Error::StencilOutOfBounds { point: *p, axis });
        }
        let f0 = field.eval(p)?;
        let f1 = field.eval(&p1)?;
        let f2 = field.eval(&p2)?;
        Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
    }
}

// ---------------------------------------------------------------------------
// CSV import/export of sampled fields
// ---------------------------------------------------------------------------

/// Write a sampled (or sampleable) field as CSV with header
/// `axis1,axis2[,axis3],value` in row-major node order.
pub fn write_field_csv<W: std::io::Write>(
    out: &mut W,
    field: &ScalarField,
    grid: &Grid,
) -> Result<()> {
    let dim = grid.dim;
    let header: Vec<&str> = match dim {
        2 => vec!["axis1", "axis2", "value"],
        _ => vec!["axis1", "axis2", "axis3", "value"],
    };
    writeln!(out, "{}", header.join(","))?;
    for (i, p) in grid.nodes() {
        let v = field.eval(&p).map_err(|e| Error::NodeEvaluation {
            index: i,
            source: Box::new(e),
        })?;
        let coords: Vec<String> = (0..dim).map(|k| format!("{}", p[k])).collect();
        writeln!(out, "{},{}", coords.join(","), v)?;
    }
    Ok(())
}

/// Read a sampled field from CSV written by [`write_field_csv`]. The node
/// order must be row-major over a rectilinear grid covering the chart.
pub fn read_field_csv<R: std::io::BufRead>(
    input: R,
    chart: Chart,
    smoothness: Smoothness,
) -> Result<ScalarField> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Csv {
            line: 1,
            message: "empty file".into(),
        })??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let dim = cols.len() - 1;
    if dim != chart.dim || cols.last() != Some(&"value") {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header axis1,..,axis{},value", chart.dim),
        });
    }
    let mut rows: Vec<(Point, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != dim + 1 {
            return Err(Error::Csv {
                line: lineno + 2,
                message: format!("expected {} columns", dim + 1),
            });
        }
        let mut p = [0.0; 3];
        for i in 0..dim {
            p[i] = parts[i].trim().parse().map_err(|_| Error::Csv {
                line: lineno + 2,
                message: format!("bad number `{}`", parts[i]),
            })?;
        }
        let v: f64 = parts[dim].trim().parse().map_err(|_| Error::Csv {
            line: lineno + 2,
            message: format!("bad number `{}`", parts[dim]),
        })?;
        rows.push((p, v));
    }
    // Infer per-axis node counts from coordinate repetition in row-major
    // order: the last axis varies fastest.
    let total = rows.len();
    if total < 4 {
        return Err(Error::Csv {
            line: 2,
            message: "too few rows".into(),
        });
    }
    let mut counts = [1usize; 3];
    let mut stride = 1usize;
    for axis in (0..dim).rev() {
        let first = rows[0].0[axis];
        let mut n = 1;
        while n * stride < total && (rows[n * stride].0[axis] - first).abs() > 1e-12 {
            n += 1;
        }
        counts[axis] = n;
        stride *= n;
    }
    if (0..dim).map(|i| counts[i]).product::<usize>() != total {
        return Err(Error::Csv {
            line: 2,
            message: "rows do not form a rectilinear row-major grid".into(),
        });
    }
    let grid = Grid::new(dim, &chart.bounds[..dim], &counts[..dim])?;
    let values: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
    ScalarField::sampled(chart, grid, values, smoothness)
}
