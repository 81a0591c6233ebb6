//! Differential 1-, 2- and 3-forms on a chart: exterior derivative, wedge
//! product, sup norms, and the Cartan identity residual.
//!
//! The 2-form component basis is fixed to dx1^dx3, dx2^dx3, dx1^dx2 so that
//! component indices line up with the averaged quantities built on top of
//! them. On 2-D charts a 2-form has the single component of dz1^dz2.

use crate::chart::{Chart, Grid, Point, ScalarField, Smoothness};
use crate::error::{Error, Result};

/// eta = p dx1 + q dx2 + r dx3 (two coefficients on a 2-D chart).
#[derive(Debug, Clone)]
pub struct OneForm {
    pub chart: Chart,
    coeffs: Vec<ScalarField>,
}

impl OneForm {
    pub fn new(chart: Chart, coeffs: Vec<ScalarField>) -> Result<OneForm> {
        if coeffs.len() != chart.dim {
            return Err(Error::invalid(
                "OneForm",
                format!("expected {} coefficients, got {}", chart.dim, coeffs.len()),
            ));
        }
        Ok(OneForm { chart, coeffs })
    }

    pub fn coeff(&self, i: usize) -> &ScalarField {
        &self.coeffs[i]
    }

    pub fn coeffs(&self) -> &[ScalarField] {
        &self.coeffs
    }

    /// The coefficient of the transversal coordinate: r on 3-D charts, the
    /// dz2 coefficient on 2-D charts.
    pub fn transversal_coeff(&self) -> &ScalarField {
        &self.coeffs[self.chart.dim - 1]
    }

    pub fn smoothness(&self) -> Smoothness {
        self.coeffs
            .iter()
            .map(|c| c.smoothness)
            .min()
            .unwrap_or(Smoothness::C2)
    }

    pub fn eval(&self, p: &Point) -> Result<Vec<f64>> {
        self.coeffs.iter().map(|c| c.eval(p)).collect()
    }

    /// Pointwise Euclidean norm of the coefficient vector.
    pub fn norm_at(&self, p: &Point) -> Result<f64> {
        let v = self.eval(p)?;
        Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    /// Apply eta to a tangent vector.
    pub fn apply(&self, p: &Point, v: &[f64; 3]) -> Result<f64> {
        let c = self.eval(p)?;
        Ok(c.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
    }

    pub fn scale(&self, s: f64) -> OneForm {
        OneForm {
            chart: self.chart,
            coeffs: self.coeffs.iter().map(|c| c.scale(s)).collect(),
        }
    }
}

/// Components in the basis dx1^dx3, dx2^dx3, dx1^dx2; a single dz1^dz2
/// component on 2-D charts.
#[derive(Debug, Clone)]
pub struct TwoForm {
    pub chart: Chart,
    comps: Vec<ScalarField>,
}

impl TwoForm {
    pub fn new(chart: Chart, comps: Vec<ScalarField>) -> Result<TwoForm> {
        let expected = if chart.dim == 3 { 3 } else { 1 };
        if comps.len() != expected {
            return Err(Error::invalid(
                "TwoForm",
                format!("expected {expected} components, got {}", comps.len()),
            ));
        }
        Ok(TwoForm { chart, comps })
    }

    pub fn comp(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn comps(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn eval(&self, p: &Point) -> Result<Vec<f64>> {
        self.comps.iter().map(|c| c.eval(p)).collect()
    }

    pub fn norm_at(&self, p: &Point) -> Result<f64> {
        let v = self.eval(p)?;
        Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    /// Evaluate the 2-form on a pair of tangent vectors.
    pub fn apply(&self, p: &Point, u: &[f64; 3], v: &[f64; 3]) -> Result<f64> {
        if self.chart.dim == 2 {
            let d = self.comps[0].eval(p)?;
            return Ok(d * (u[0] * v[1] - u[1] * v[0]));
        }
        let c = self.eval(p)?;
        let m13 = u[0] * v[2] - u[2] * v[0];
        let m23 = u[1] * v[2] - u[2] * v[1];
        let m12 = u[0] * v[1] - u[1] * v[0];
        Ok(c[0] * m13 + c[1] * m23 + c[2] * m12)
    }
}

/// Coefficient of dx1^dx2^dx3 on a 3-D chart.
#[derive(Debug, Clone)]
pub struct ThreeForm {
    pub chart: Chart,
    pub coeff: ScalarField,
}

impl ThreeForm {
    pub fn norm_at(&self, p: &Point) -> Result<f64> {
        Ok(self.coeff.eval(p)?.abs())
    }
}

/// A vector field with one scalar component per chart axis.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub chart: Chart,
    comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(chart: Chart, comps: Vec<ScalarField>) -> Result<VectorField> {
        if comps.len() != chart.dim {
            return Err(Error::invalid(
                "VectorField",
                format!("expected {} components", chart.dim),
            ));
        }
        Ok(VectorField { chart, comps })
    }

    pub fn comp(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn eval(&self, p: &Point) -> Result<[f64; 3]> {
        let mut v = [0.0; 3];
        for i in 0..self.chart.dim {
            v[i] = self.comps[i].eval(p)?;
        }
        Ok(v)
    }

    pub fn norm_at(&self, p: &Point) -> Result<f64> {
        let v = self.eval(p)?;
        Ok((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
    }
}

/// d of a 1-form by finite differences of its coefficients.
///
/// On 3-D charts: d1 = d_1 r - d_3 p, d2 = d_2 r - d_3 q, d3 = d_1 q - d_2 p.
/// Refuses coefficient fields that are not tagged differentiable.
pub fn exterior_derivative(eta: &OneForm, h: f64) -> Result<TwoForm> {
    for c in eta.coeffs() {
        if !c.smoothness.differentiable() {
            return Err(Error::SmoothnessTag {
                tag: c.smoothness.tag().into(),
            });
        }
    }
    let chart = eta.chart;
    if chart.dim == 2 {
        let p = eta.coeff(0);
        let q = eta.coeff(1);
        let comp = q.partial_field(0, h)?.add(&p.partial_field(1, h)?.neg());
        return TwoForm::new(chart, vec![comp]);
    }
    let p = eta.coeff(0);
    let q = eta.coeff(1);
    let r = eta.coeff(2);
    let d1 = r.partial_field(0, h)?.add(&p.partial_field(2, h)?.neg());
    let d2 = r.partial_field(1, h)?.add(&q.partial_field(2, h)?.neg());
    let d3 = q.partial_field(0, h)?.add(&p.partial_field(1, h)?.neg());
    TwoForm::new(chart, vec![d1, d2, d3])
}

/// eta ^ omega for a 1-form and a 2-form on a 3-D chart:
/// the dx1^dx2^dx3 coefficient is p*d2 - q*d1 + r*d3.
pub fn wedge13(eta: &OneForm, omega: &TwoForm) -> Result<ThreeForm> {
    if eta.chart.dim != 3 || omega.chart.dim != 3 {
        return Err(Error::invalid("wedge13", "requires a 3-dimensional chart"));
    }
    let p = eta.coeff(0);
    let q = eta.coeff(1);
    let r = eta.coeff(2);
    let v = p
        .mul(omega.comp(1))
        .add(&q.mul(omega.comp(0)).neg())
        .add(&r.mul(omega.comp(2)));
    Ok(ThreeForm {
        chart: eta.chart,
        coeff: v,
    })
}

/// Sup-norm over a grid with the achieving node.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SupNorm {
    pub value: f64,
    pub node: usize,
    pub point: Point,
}

pub trait PointwiseNorm {
    fn pointwise_norm(&self, p: &Point) -> Result<f64>;
}

impl PointwiseNorm for ScalarField {
    fn pointwise_norm(&self, p: &Point) -> Result<f64> {
        Ok(self.eval(p)?.abs())
    }
}

impl PointwiseNorm for OneForm {
    fn pointwise_norm(&self, p: &Point) -> Result<f64> {
        self.norm_at(p)
    }
}

impl PointwiseNorm for TwoForm {
    fn pointwise_norm(&self, p: &Point) -> Result<f64> {
        self.norm_at(p)
    }
}

impl PointwiseNorm for ThreeForm {
    fn pointwise_norm(&self, p: &Point) -> Result<f64> {
        self.norm_at(p)
    }
}

/// Max over grid nodes of the pointwise Euclidean coefficient norm.
pub fn sup_norm<T: PointwiseNorm + Sync>(object: &T, region: &Grid) -> Result<SupNorm> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    use rayon::prelude::*;
    let values: Vec<f64> = (0..region.len())
        .into_par_iter()
        .map(|i| object.pointwise_norm(&region.node(i)))
        .collect::<Result<_>>()?;
    let mut best = (0usize, values[0]);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(SupNorm {
        value: best.1,
        node: best.0,
        point: region.node(best.0),
    })
}

/// [X, Y] at a point by finite differences of the component fields.
pub fn lie_bracket(x: &VectorField, y: &VectorField, p: &Point, h: f64) -> Result<[f64; 3]> {
    let dim = x.chart.dim;
    let xv = x.eval(p)?;
    let yv = y.eval(p)?;
    let mut out = [0.0; 3];
    for i in 0..dim {
        let mut acc = 0.0;
        for j in 0..dim {
            let dyi = crate::chart::partial(y.comp(i), j, p, h)?;
            let dxi = crate::chart::partial(x.comp(i), j, p, h)?;
            acc += xv[j] * dyi - yv[j] * dxi;
        }
        out[i] = acc;
    }
    Ok(out)
}

/// |d(eta)(X, Y) + eta([X, Y])| at a point. For kernel fields of a C2 form
/// this is the Cartan-identity residual and vanishes to discretization order.
pub fn cartan_residual(
    eta: &OneForm,
    x: &VectorField,
    y: &VectorField,
    p: &Point,
    h: f64,
) -> Result<f64> {
    let deta = exterior_derivative(eta, h)?;
    let xv = x.eval(p)?;
    let yv = y.eval(p)?;
    let d_xy = deta.apply(p, &xv, &yv)?;
    let bracket = lie_bracket(x, y, p, h)?;
    let eta_bracket = eta.apply(p, &bracket)?;
    Ok((d_xy + eta_bracket).abs())
}
