//! Mollifier smoothing with quantitative bound verification, and modulus of
//! continuity estimation.
//!
//! The kernel is the standard bump exp(-1/(1-|u|^2)) supported in the unit
//! ball, discretized by a tensor-product trapezoid rule and renormalized so
//! the discrete mass is exactly 1. Convolution acts only along the axes a
//! field actually depends on (along the remaining axes a unit-mass kernel is
//! the identity). Fields are extended by nearest-point clamping outside the
//! chart.

use crate::chart::{Grid, ScalarField, Smoothness, Source};
#[cfg(test)]
use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::Expression;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

/// Default quadrature nodes per active axis.
pub const KERNEL_NODES: usize = 33;

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Tensor-product quadrature of the radial bump over the active axes,
/// renormalized to unit discrete mass.
pub(crate) fn kernel_quadrature(
    axes: [bool; 3],
    nodes_per_axis: usize,
) -> crate::chart::MollifierQuad {
    let n = nodes_per_axis.max(3);
    let active: Vec<usize> = (0..3).filter(|&i| axes[i]).collect();
    if active.is_empty() {
        return crate::chart::MollifierQuad {
            offsets: vec![[0.0; 3]],
            weights: vec![1.0],
            axes,
        };
    }
    let coords: Vec<f64> = (0..n)
        .map(|j| -1.0 + 2.0 * j as f64 / (n - 1) as f64)
        .collect();
    let w1: Vec<f64> = (0..n)
        .map(|j| if j == 0 || j == n - 1 { 0.5 } else { 1.0 })
        .collect();
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    let total = n.pow(active.len() as u32);
    for flat in 0..total {
        let mut rest = flat;
        let mut off = [0.0f64; 3];
        let mut w = 1.0f64;
        let mut r2 = 0.0f64;
        for &ax in active.iter().rev() {
            let j = rest % n;
            rest /= n;
            off[ax] = coords[j];
            w *= w1[j];
            r2 += coords[j] * coords[j];
        }
        let phi = bump(r2);
        if phi > 0.0 {
            offsets.push(off);
            weights.push(w * phi);
        }
    }
    let mass: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= mass;
    }
    crate::chart::MollifierQuad {
        offsets,
        weights,
        axes,
    }
}

/// Mollify a field at scale `eps`. The result is C2-tagged and can be
/// differentiated by the chart module.
pub fn mollify(g: &ScalarField, eps: f64) -> Result<ScalarField> {
    mollify_with_nodes(g, eps, KERNEL_NODES)
}

pub fn mollify_with_nodes(g: &ScalarField, eps: f64, nodes_per_axis: usize) -> Result<ScalarField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "scale must be positive, got {eps}"
        )));
    }
    let chart = g.chart;
    let axes = g.deps();
    for i in 0..chart.dim {
        if axes[i] && eps > chart.margin[i] {
            return Err(Error::ScaleExceedsMargin {
                eps,
                margin: chart.margin[i],
                axis: i,
            });
        }
    }
    let quad = kernel_quadrature(axes, nodes_per_axis);
    Ok(ScalarField::from_source(
        chart,
        Smoothness::C2,
        Source::Mollified {
            inner: Arc::new(g.clone()),
            eps,
            quad: Arc::new(quad),
        },
    ))
}

/// A decreasing schedule of mollification scales.
#[derive(Debug, Clone, Serialize)]
pub struct MollifierSchedule {
    pub scales: Vec<f64>,
}

impl MollifierSchedule {
    pub fn new(scales: Vec<f64>) -> Result<MollifierSchedule> {
        if scales.is_empty() {
            return Err(Error::InvalidSchedule("empty schedule".into()));
        }
        for w in scales.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidSchedule(format!(
                    "scales must strictly decrease: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidSchedule("scales must be positive".into()));
        }
        Ok(MollifierSchedule { scales })
    }

    /// Geometric schedule start * ratio^k for k = 0..count.
    pub fn geometric(start: f64, ratio: f64, count: usize) -> Result<MollifierSchedule> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "ratio must be in (0,1), got {ratio}"
            )));
        }
        MollifierSchedule::new((0..count).map(|k| start * ratio.powi(k as i32)).collect())
    }
}

/// A modulus of continuity: analytic in one variable t >= 0, or empirical
/// (scale, sup-increment) samples interpolated log-log between sample points.
#[derive(Debug, Clone)]
pub enum Modulus {
    Analytic(Expression),
    Empirical(Vec<(f64, f64)>),
}

impl Modulus {
    pub fn parse(text: &str) -> Result<Modulus> {
        Ok(Modulus::Analytic(Expression::parse_with_vars(
            text,
            &["t"],
            false,
        )?))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Modulus::Analytic(e) => e.evaluate(&[t, 0.0, 0.0]),
            Modulus::Empirical(samples) => {
                if samples.is_empty() {
                    return Err(Error::InvalidSchedule("empty empirical modulus".into()));
                }
                if samples.len() == 1 {
                    return Ok(samples[0].1);
                }
                // Power-law interpolation between neighboring samples; the
                // boundary segments extrapolate with their own exponent.
                let mut pairs: Vec<(f64, f64)> = samples.clone();
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let idx = match pairs.iter().position(|&(s, _)| s >= t) {
                    Some(0) => 0,
                    Some(i) => i - 1,
                    None => pairs.len() - 2,
                };
                let (t0, v0) = pairs[idx];
                let (t1, v1) = pairs[idx + 1];
                if v0 <= 0.0 || v1 <= 0.0 || t0 <= 0.0 || t <= 0.0 {
                    let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                    return Ok(v0 + w * (v1 - v0));
                }
                let slope = (v1.ln() - v0.ln()) / (t1.ln() - t0.ln());
                Ok((v0.ln() + slope * (t.ln() - t0.ln())).exp())
            }
        }
    }
}

/// Integral of the modulus over [0, eps] by geometric subdivision with
/// Simpson quadrature per cell. The singular endpoint is cut at 1e-12; the
/// last cell's contribution is bounded and returned as an error bar.
pub fn modulus_integral(w: &Modulus, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "integral bound must be positive, got {eps}"
        )));
    }
    // Absolute cut at 1e-12, pushed further down for tiny eps so the
    // omitted tail stays negligible relative to the whole integral.
    let floor = 1e-12f64.min(eps * 1e-6).min(eps / 2.0);
    let mut hi = eps;
    let mut total = 0.0;
    while hi > floor {
        let lo = (hi / 2.0).max(floor);
        total += simpson(w, lo, hi, 16)?;
        hi = lo;
    }
    let tail = floor * w.eval(floor)?.abs().max(w.eval(floor / 2.0)?.abs());
    Ok((total, tail))
}

fn simpson(w: &Modulus, lo: f64, hi: f64, cells: usize) -> Result<f64> {
    let n = cells * 2;
    let h = (hi - lo) / n as f64;
    let mut acc = w.eval(lo)? + w.eval(hi)?;
    for i in 1..n {
        let t = lo + h * i as f64;
        let coeff = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += coeff * w.eval(t)?;
    }
    Ok(acc * h / 3.0)
}

/// For each scale, the sup of |g(x) - g(y)| over sampled pairs with
/// |x - y| <= scale. Sampling mixes random-direction pairs with exact-scale
/// axis-aligned pairs from a sweep grid; seeded, hence deterministic.
pub fn estimate_modulus(g: &ScalarField, scales: &[f64]) -> Result<Modulus> {
    if scales.is_empty() {
        return Err(Error::InvalidSchedule("empty scale list".into()));
    }
    let chart = g.chart;
    let max_width = (0..chart.dim)
        .map(|i| chart.width(i))
        .fold(0.0f64, f64::max);
    for &s in scales {
        if !(s > 0.0) || s > max_width {
            return Err(Error::InvalidSchedule(format!(
                "scale {s} outside (0, {max_width}]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f6475);
    let deps = g.deps();
    let mut samples = Vec::with_capacity(scales.len());
    for &scale in scales {
        let mut sup = 0.0f64;
        for _ in 0..5000 {
            let mut x = [0.0; 3];
            for i in 0..chart.dim {
                x[i] = rng.random_range(chart.bounds[i][0]..=chart.bounds[i][1]);
            }
            let mut y = x;
            let mut norm2 = 0.0f64;
            let mut dir = [0.0; 3];
            for d in dir.iter_mut().take(chart.dim) {
                *d = rng.random_range(-1.0..=1.0);
                norm2 += *d * *d;
            }
            if norm2 < 1e-12 {
                continue;
            }
            let r = scale * rng.random_range(0.0f64..=1.0).powf(0.25);
            let norm = norm2.sqrt();
            for i in 0..chart.dim {
                y[i] += dir[i] / norm * r;
            }
            if !chart.contains(&y) {
                continue;
            }
            let inc = (g.eval(&x)? - g.eval(&y)?).abs();
            sup = sup.max(inc);
        }
        // Axis-aligned exact-scale pairs along each dependent axis.
        for axis in 0..chart.dim {
            if !deps[axis] {
                continue;
            }
            let n = 2000;
            for j in 0..n {
                let mut x = [0.0; 3];
                for i in 0..chart.dim {
                    x[i] = 0.5 * (chart.bounds[i][0] + chart.bounds[i][1]);
                }
                let lo = chart.bounds[axis][0];
                let hi = chart.bounds[axis][1] - scale;
                if hi <= lo {
                    continue;
                }
                x[axis] = lo + (hi - lo) * j as f64 / (n - 1) as f64;
                let mut y = x;
                y[axis] += scale;
                let inc = (g.eval(&x)? - g.eval(&y)?).abs();
                sup = sup.max(inc);
            }
        }
        samples.push((scale, sup));
    }
    Ok(Modulus::Empirical(samples))
}

#[derive(Debug, Clone, Serialize)]
pub struct MollifierBoundRow {
    pub eps: f64,
    /// Observed sup |g^eps - g| over the verification grid.
    pub sup_err: f64,
    /// Observed sup |d g^eps| over the verification grid (max over axes).
    pub sup_deriv: f64,
    /// (1/eps) int_0^eps w(t) dt, the sup-error bound at K = 1.
    pub bound_err_unit: f64,
    /// (1/eps^2) int_0^eps w(t) dt, the derivative bound at K = 1.
    pub bound_deriv_unit: f64,
    /// Smallest K making both bounds hold on this row.
    pub fitted_k: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MollifierBoundReport {
    pub schema_version: u32,
    pub rows: Vec<MollifierBoundRow>,
    /// Smallest single K satisfying both bounds across the whole schedule.
    pub fitted_k: f64,
    /// Log-log slope of sup_err against eps.
    pub err_slope: f64,
    /// Log-log slope of sup_deriv against eps.
    pub deriv_slope: f64,
    pub consistent: bool,
}

/// Least-squares slope of y against x.
pub(crate) fn lsq_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y.iter()) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Verify the mollifier bounds sup|g^eps - g| <= (K/eps) int_0^eps w and
/// sup|d g^eps| <= (K/eps^2) int_0^eps w, fitting the smallest constant K.
/// The verdict is "consistent" when a single K <= 100 works across the
/// schedule. The modulus is spot-checked on random pairs first.
pub fn verify_mollifier_bounds(
    g: &ScalarField,
    w: &Modulus,
    schedule: &MollifierSchedule,
    region: &Grid,
) -> Result<MollifierBoundReport> {
    spot_check_modulus(g, w, 10_000)?;
    let chart = g.chart;
    let deps = g.deps();
    let mut rows = Vec::with_capacity(schedule.scales.len());
    for &eps in &schedule.scales {
        let geps = mollify(g, eps)?;
        let mut sup_err = 0.0f64;
        let mut sup_deriv = 0.0f64;
        use rayon::prelude::*;
        let pairs: Vec<(f64, f64)> = (0..region.len())
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let p = region.node(i);
                let err = (geps.eval(&p)? - g.eval(&p)?).abs();
                let mut deriv = 0.0f64;
                // The difference step scales with eps so the measurement
                // tracks the mollified derivative instead of the kernel
                // quadrature's sub-scale structure.
                let h = eps / 16.0;
                for axis in 0..chart.dim {
                    if !deps[axis] {
                        continue;
                    }
                    deriv = deriv.max(crate::chart::partial(&geps, axis, &p, h)?.abs());
                }
                Ok((err, deriv))
            })
            .collect::<Result<_>>()?;
        for (e, d) in pairs {
            sup_err = sup_err.max(e);
            sup_deriv = sup_deriv.max(d);
        }
        let (integral, _tail) = modulus_integral(w, eps)?;
        let bound_err_unit = integral / eps;
        let bound_deriv_unit = integral / (eps * eps);
        let k_err = if bound_err_unit > 0.0 {
            sup_err / bound_err_unit
        } else if sup_err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let k_deriv = if bound_deriv_unit > 0.0 {
            sup_deriv / bound_deriv_unit
        } else if sup_deriv == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        rows.push(MollifierBoundRow {
            eps,
            sup_err,
            sup_deriv,
            bound_err_unit,
            bound_deriv_unit,
            fitted_k: k_err.max(k_deriv),
        });
    }
    let fitted_k = rows.iter().map(|r| r.fitted_k).fold(0.0f64, f64::max);
    let log_eps: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let log_err: Vec<f64> = rows.iter().map(|r| r.sup_err.max(1e-300).ln()).collect();
    let log_deriv: Vec<f64> = rows.iter().map(|r| r.sup_deriv.max(1e-300).ln()).collect();
    Ok(MollifierBoundReport {
        schema_version: crate::SCHEMA_VERSION,
        err_slope: lsq_slope(&log_eps, &log_err),
        deriv_slope: lsq_slope(&log_eps, &log_deriv),
        consistent: fitted_k <= 100.0,
        rows,
        fitted_k,
    })
}

/// Check |g(x) - g(y)| <= w(|x - y|) on seeded random pairs.
fn spot_check_modulus(g: &ScalarField, w: &Modulus, pairs: usize) -> Result<()> {
    let chart = g.chart;
    let mut rng = ChaCha8Rng::seed_from_u64(0x73706f74);
    for _ in 0..pairs {
        let mut x = [0.0; 3];
        let mut y = [0.0; 3];
        for i in 0..chart.dim {
            x[i] = rng.random_range(chart.bounds[i][0]..=chart.bounds[i][1]);
            y[i] = rng.random_range(chart.bounds[i][0]..=chart.bounds[i][1]);
        }
        let mut dist2 = 0.0;
        for i in 0..chart.dim {
            dist2 += (x[i] - y[i]) * (x[i] - y[i]);
        }
        let dist = dist2.sqrt();
        if dist == 0.0 {
            continue;
        }
        let inc = (g.eval(&x)? - g.eval(&y)?).abs();
        let bound = w.eval(dist)?;
        if inc > bound * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::ModulusViolated {
                x,
                y,
                dist,
                increment: inc,
                bound,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart2() -> Chart {
        Chart::cube(2, -1.0, 1.0, 0.25).unwrap()
    }

    #[test]
    fn kernel_mass_is_one() {
        for axes in [[true, false, false], [true, true, false], [true, true, true]] {
            let q = kernel_quadrature(axes, KERNEL_NODES);
            let mass: f64 = q.weights.iter().sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_is_fixed() {
        let chart = chart2();
        let g = ScalarField::constant(chart, 2.5);
        let m = mollify(&g, 0.1).unwrap();
        for p in [[0.0, 0.0, 0.0], [0.5, -0.3, 0.0]] {
            assert!((m.eval(&p).unwrap() - 2.5).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_preservation_of_one() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "1", Smoothness::C2).unwrap();
        let m = mollify(&g, 0.2).unwrap();
        let grid = Grid::interior(&chart, &[21, 5]).unwrap();
        for (_, p) in grid.nodes() {
            assert!((m.eval(&p).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_is_fixed_in_the_interior() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "0.3*x1 - 0.2", Smoothness::C2).unwrap();
        let m = mollify(&g, 0.2).unwrap();
        let grid = Grid::interior(&chart, &[21, 3]).unwrap();
        for (_, p) in grid.nodes() {
            let want = g.eval(&p).unwrap();
            assert!((m.eval(&p).unwrap() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn abs_error_small_and_near_origin() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "abs(x1)", Smoothness::Continuous).unwrap();
        let eps = 0.1;
        let m = mollify(&g, eps).unwrap();
        let mut sup = 0.0f64;
        let mut arg = 0.0f64;
        for j in 0..10_000 {
            let x = -0.75 + 1.5 * j as f64 / 9999.0;
            let p = [x, 0.0, 0.0];
            let e = (m.eval(&p).unwrap() - g.eval(&p).unwrap()).abs();
            if e > sup {
                sup = e;
                arg = x;
            }
        }
        assert!(sup <= eps, "sup err {sup}");
        assert!(arg.abs() <= eps, "attained at {arg}");
        assert!(sup > 0.01, "mollification should move the kink value");
    }

    #[test]
    fn monotone_approximation_on_abs() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "abs(x1)", Smoothness::Continuous).unwrap();
        let mut errs = Vec::new();
        for eps in [0.2, 0.1, 0.05, 0.025] {
            let m = mollify(&g, eps).unwrap();
            let mut sup = 0.0f64;
            for j in 0..2000 {
                let x = -0.7 + 1.4 * j as f64 / 1999.0;
                let p = [x, 0.0, 0.0];
                sup = sup.max((m.eval(&p).unwrap() - g.eval(&p).unwrap()).abs());
            }
            errs.push(sup);
        }
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] * 1.1, "{errs:?}");
        }
    }

    #[test]
    fn mollified_fields_pass_fd_order_check() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "sin(3*x1)", Smoothness::C2).unwrap();
        let m = mollify(&g, 0.15).unwrap();
        for x in [-0.4, 0.0, 0.3] {
            let p = [x, 0.0, 0.0];
            let h = 1e-3;
            let d1 = crate::chart::partial(&m, 0, &p, h).unwrap();
            let d2 = crate::chart::partial(&m, 0, &p, h / 2.0).unwrap();
            let d4 = crate::chart::partial(&m, 0, &p, h / 4.0).unwrap();
            let e1 = (d1 - d2).abs();
            let e2 = (d2 - d4).abs();
            if e1 < 1e-12 || e2 < 1e-13 {
                continue;
            }
            let order = (e1 / e2).log2();
            assert!(order >= 1.9, "observed order {order}");
        }
    }

    #[test]
    fn scale_beyond_margin_rejected() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "x1", Smoothness::C2).unwrap();
        assert!(matches!(
            mollify(&g, 0.3),
            Err(Error::ScaleExceedsMargin { .. })
        ));
    }

    #[test]
    fn integral_of_linear_modulus() {
        let w = Modulus::parse("t").unwrap();
        for eps in [0.1, 0.05, 0.0125] {
            let (v, tail) = modulus_integral(&w, eps).unwrap();
            let exact = eps * eps / 2.0;
            assert!((v - exact).abs() <= 1e-10 * exact + tail, "{v} vs {exact}");
        }
    }

    #[test]
    fn integral_of_sqrt_modulus() {
        let w = Modulus::parse("t^0.5").unwrap();
        let eps = 0.09;
        let (v, _) = modulus_integral(&w, eps).unwrap();
        let exact = 2.0 / 3.0 * eps.powf(1.5);
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
    }

    #[test]
    fn estimate_modulus_linear() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "x1", Smoothness::C2).unwrap();
        let m = estimate_modulus(&g, &[0.1]).unwrap();
        let v = m.eval(0.1).unwrap();
        assert!((v - 0.1).abs() <= 0.05 * 0.1, "estimate {v}");
    }

    #[test]
    fn estimate_modulus_sqrt() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "abs(x1)^0.5", Smoothness::Continuous).unwrap();
        let m = estimate_modulus(&g, &[0.2, 0.1, 0.05]).unwrap();
        for t in [0.2f64, 0.1, 0.05] {
            let v = m.eval(t).unwrap();
            let want = t.sqrt();
            assert!((v - want).abs() <= 0.1 * want, "estimate {v} vs {want}");
        }
    }

    #[test]
    fn estimate_modulus_constant() {
        let chart = chart2();
        let g = ScalarField::constant(chart, 3.0);
        let m = estimate_modulus(&g, &[0.1, 0.05]).unwrap();
        match &m {
            Modulus::Empirical(samples) => {
                for (_, v) in samples {
                    assert_eq!(*v, 0.0);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn bounds_for_lipschitz_field() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "abs(x1)", Smoothness::Continuous).unwrap();
        let w = Modulus::parse("t").unwrap();
        let schedule = MollifierSchedule::new(vec![0.2, 0.1, 0.05, 0.025]).unwrap();
        let region = Grid::interior(&chart, &[801, 3]).unwrap();
        let report = verify_mollifier_bounds(&g, &w, &schedule, &region).unwrap();
        assert!(report.consistent);
        assert!(report.fitted_k <= 2.0 + 1e-6, "K = {}", report.fitted_k);
    }

    #[test]
    fn constant_field_any_k() {
        let chart = chart2();
        let g = ScalarField::constant(chart, 1.0);
        let w = Modulus::parse("t").unwrap();
        let schedule = MollifierSchedule::new(vec![0.2, 0.1]).unwrap();
        let region = Grid::interior(&chart, &[51, 3]).unwrap();
        let report = verify_mollifier_bounds(&g, &w, &schedule, &region).unwrap();
        for row in &report.rows {
            assert!(row.sup_err < 1e-10);
            assert!(row.sup_deriv < 1e-10);
        }
        assert!(report.fitted_k < 1e-6);
    }

    #[test]
    fn sqrt_derivative_growth_slope() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "abs(x1)^0.5", Smoothness::Continuous).unwrap();
        let w = Modulus::parse("t^0.5").unwrap();
        let schedule = MollifierSchedule::new(vec![0.2, 0.1, 0.05, 0.025]).unwrap();
        let region = Grid::interior(&chart, &[2001, 3]).unwrap();
        let report = verify_mollifier_bounds(&g, &w, &schedule, &region).unwrap();
        assert!(report.consistent, "K = {}", report.fitted_k);
        assert!(
            (report.deriv_slope + 0.5).abs() <= 0.1,
            "slope {}",
            report.deriv_slope
        );
    }

    #[test]
    fn modulus_violation_detected() {
        let chart = chart2();
        let g = ScalarField::parse(chart, "2*x1", Smoothness::C2).unwrap();
        // w(t) = t is not a modulus for a slope-2 function.
        let w = Modulus::parse("t").unwrap();
        let schedule = MollifierSchedule::new(vec![0.2]).unwrap();
        let region = Grid::interior(&chart, &[11, 3]).unwrap();
        assert!(matches!(
            verify_mollifier_bounds(&g, &w, &schedule, &region),
            Err(Error::ModulusViolated { .. })
        ));
    }
}
