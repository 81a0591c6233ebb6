//! Canonical kernel frames of transversal 1-forms, constant-scalar
//! normalization, and the signed Lie-bracket magnitude h.

use crate::chart::{partial, Chart, Grid, Point, ScalarField, Smoothness};
use crate::error::{Error, Result};
use crate::forms::{OneForm, VectorField};

/// The kernel frame X = d/dx1 + a d/dx3, Y = d/dx2 + b d/dx3 of a 1-form
/// transversal to d/dx3. On 2-D charts only `a`, with X = d/dz1 + a d/dz2.
#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    pub chart: Chart,
    pub a: ScalarField,
    pub b: Option<ScalarField>,
}

impl CanonicalFrame {
    pub fn new3(a: ScalarField, b: ScalarField) -> CanonicalFrame {
        CanonicalFrame {
            chart: a.chart,
            a,
            b: Some(b),
        }
    }

    pub fn new2(a: ScalarField) -> CanonicalFrame {
        CanonicalFrame {
            chart: a.chart,
            a,
            b: None,
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match &self.b {
            Some(b) => self.a.smoothness.min(b.smoothness),
            None => self.a.smoothness,
        }
    }

    pub fn x_field(&self) -> VectorField {
        let chart = self.chart;
        let one = ScalarField::constant(chart, 1.0);
        let zero = ScalarField::constant(chart, 0.0);
        let comps = if chart.dim == 2 {
            vec![one, self.a.clone()]
        } else {
            vec![one, zero, self.a.clone()]
        };
        VectorField::new(chart, comps).expect("component count matches dim")
    }

    pub fn y_field(&self) -> Result<VectorField> {
        let b = self.b.as_ref().ok_or_else(|| {
            Error::invalid("CanonicalFrame", "no Y field on a 2-dimensional chart")
        })?;
        let chart = self.chart;
        let zero = ScalarField::constant(chart, 0.0);
        let one = ScalarField::constant(chart, 1.0);
        VectorField::new(chart, vec![zero, one, b.clone()])
    }

    /// Evaluate X at a point: (1, 0, a) in 3-D, (1, a) in 2-D.
    pub fn x_at(&self, p: &Point) -> Result<[f64; 3]> {
        let a = self.a.eval(p)?;
        Ok(if self.chart.dim == 2 {
            [1.0, a, 0.0]
        } else {
            [1.0, 0.0, a]
        })
    }

    pub fn y_at(&self, p: &Point) -> Result<[f64; 3]> {
        let b = self.b.as_ref().ok_or_else(|| {
            Error::invalid("CanonicalFrame", "no Y field on a 2-dimensional chart")
        })?;
        Ok([0.0, 1.0, b.eval(p)?])
    }
}

/// Transversality threshold relative to the sup of the transversal
/// coefficient over the probe grid.
const TRANSVERSALITY_REL: f64 = 1e-8;
/// Probe resolution per axis used by the transversality check.
const PROBE_NODES: usize = 17;

fn probe_grid(chart: &Chart) -> Result<Grid> {
    let counts: Vec<usize> = (0..chart.dim).map(|_| PROBE_NODES).collect();
    Grid::covering(chart, &counts)
}

/// Check min |r| over a dense probe grid and return (min, max, sign-consistent).
fn transversal_stats(r: &ScalarField) -> Result<(f64, f64, bool, Point)> {
    let grid = probe_grid(&r.chart)?;
    let mut min_abs = f64::INFINITY;
    let mut max_abs: f64 = 0.0;
    let mut min_point = [0.0; 3];
    let mut pos = false;
    let mut neg = false;
    for (_, p) in grid.nodes() {
        let v = r.eval(&p)?;
        if v > 0.0 {
            pos = true;
        }
        if v < 0.0 {
            neg = true;
        }
        if v.abs() < min_abs {
            min_abs = v.abs();
            min_point = p;
        }
        max_abs = max_abs.max(v.abs());
    }
    Ok((min_abs, max_abs, !(pos && neg), min_point))
}

fn require_transversal(r: &ScalarField) -> Result<()> {
    let (min_abs, max_abs, consistent, at) = transversal_stats(r)?;
    let threshold = TRANSVERSALITY_REL * max_abs.max(1.0);
    if !consistent || min_abs <= threshold {
        return Err(Error::Transversality {
            point: at,
            value: min_abs,
            threshold,
        });
    }
    Ok(())
}

/// Kernel frame of a transversal form: a = -p/r, b = -q/r. The returned
/// fields carry the weakest smoothness tag of the inputs.
pub fn canonical_frame(eta: &OneForm) -> Result<CanonicalFrame> {
    let r = eta.transversal_coeff();
    require_transversal(r)?;
    if eta.chart.dim == 2 {
        let a = eta.coeff(0).neg().div(r);
        Ok(CanonicalFrame::new2(a))
    } else {
        let a = eta.coeff(0).neg().div(r);
        let b = eta.coeff(1).neg().div(r);
        Ok(CanonicalFrame::new3(a, b))
    }
}

/// Rescale by the constant s = sign / min(region) |r| so the transversal
/// coefficient is >= 1 on the region; the kernel is unchanged and smoothness
/// tags are preserved.
pub fn normalize(eta: &OneForm, region: &Grid) -> Result<OneForm> {
    let r = eta.transversal_coeff();
    require_transversal(r)?;
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut min_val = f64::INFINITY;
    let mut sign = 0.0f64;
    for (_, p) in region.nodes() {
        let v = r.eval(&p)?;
        if sign == 0.0 {
            sign = v.signum();
        }
        min_val = min_val.min(v * sign);
    }
    if !(min_val > 0.0) {
        return Err(Error::Transversality {
            point: region.node(0),
            value: min_val,
            threshold: 0.0,
        });
    }
    let s = sign / min_val;
    if s == 1.0 {
        return Ok(eta.clone());
    }
    Ok(eta.scale(s))
}

/// Signed magnitude of [X, Y] for a canonical frame:
/// h = d_1 b - d_2 a + a d_3 b - b d_3 a.
pub fn bracket_h(frame: &CanonicalFrame, p: &Point, h_step: f64) -> Result<f64> {
    let b = frame.b.as_ref().ok_or_else(|| {
        Error::invalid("bracket_h", "the bracket magnitude needs a 3-dimensional frame")
    })?;
    if !frame.a.smoothness.differentiable() || !b.smoothness.differentiable() {
        return Err(Error::SmoothnessTag {
            tag: frame.smoothness().tag().into(),
        });
    }
    let d1b = partial(b, 0, p, h_step)?;
    let d2a = partial(&frame.a, 1, p, h_step)?;
    let d3b = partial(b, 2, p, h_step)?;
    let d3a = partial(&frame.a, 2, p, h_step)?;
    let av = frame.a.eval(p)?;
    let bv = b.eval(p)?;
    Ok(d1b - d2a + av * d3b - bv * d3a)
}

/// The 1-form dx3 - a dx1 - b dx2 (or dz2 - a dz1) whose kernel is the frame.
pub fn one_form(frame: &CanonicalFrame) -> OneForm {
    let chart = frame.chart;
    let one = ScalarField::constant(chart, 1.0);
    let coeffs = if chart.dim == 2 {
        vec![frame.a.neg(), one]
    } else {
        vec![
            frame.a.neg(),
            frame.b.as_ref().expect("3-D frame").neg(),
            one,
        ]
    };
    OneForm::new(chart, coeffs).expect("coefficient count matches dim")
}
