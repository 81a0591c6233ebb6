//! The involutivity-restoring perturbation of a canonical frame, its PDE
//! residual and norm-bound verification, and the closed-form rescaling of a
//! 1-form on a surface.
//!
//! The perturbation alpha is built from a single Y-trajectory through each
//! point: with t_x the flow time from the section plane {x2 = section},
//!
//!   alpha(x) = int_0^{t_x} h(Y(tau)) exp(int_tau^{t_x} b_3(Y(s)) ds) dtau,
//!
//! where h is the bracket magnitude and b_3 the third partial of b. Both
//! quadratures share the trajectory nodes: with E the cumulative integral of
//! b_3 and H the cumulative integral of h e^{-E}, alpha(t) = e^{E(t)} H(t).

use crate::chart::{partial, Grid, Point, ScalarField, Smoothness};
use crate::error::{Error, Result};
use crate::flow::{averaged_profile, trajectory, FrameAxis};
use crate::forms::{exterior_derivative, sup_norm, wedge13, OneForm, SupNorm};
use crate::frames::{bracket_h, canonical_frame, CanonicalFrame};
use serde::Serialize;

/// The alpha trajectory through `x`: Y-flow nodes parameterized so that
/// node parameter 0 sits on the section and t_x at `x`.
struct AlphaTrajectory {
    /// Parameters in [min(0, t_x), max(0, t_x)], increasing.
    params: Vec<f64>,
    t_x: f64,
    /// Cumulative integral of d3(b) from parameter 0.
    e_cum: Vec<f64>,
    /// Cumulative integral of h * exp(-E) from parameter 0.
    h_cum: Vec<f64>,
}

impl AlphaTrajectory {
    fn build(
        frame: &CanonicalFrame,
        x: Point,
        section: f64,
        step: f64,
    ) -> Result<AlphaTrajectory> {
        if frame.chart.dim != 3 {
            return Err(Error::invalid("alpha", "requires a 3-dimensional frame"));
        }
        if frame.smoothness() < Smoothness::C2 {
            return Err(Error::SmoothnessTag {
                tag: frame.smoothness().tag().into(),
            });
        }
        let t_x = x[1] - section;
        // Walk from x back to the section; reindex so the section sits at
        // parameter 0.
        let back = trajectory(frame, FrameAxis::Y, x, -t_x, step)?;
        let raw_params: Vec<f64> = back.times.iter().map(|t| t_x + t).collect();
        let raw_points = back.points;
        let mut order: Vec<usize> = (0..raw_params.len()).collect();
        order.sort_by(|&i, &j| raw_params[i].partial_cmp(&raw_params[j]).unwrap());
        let params: Vec<f64> = order.iter().map(|&i| raw_params[i]).collect();
        let points: Vec<Point> = order.iter().map(|&i| raw_points[i]).collect();

        let b = frame.b.as_ref().expect("3-D frame");
        let h3 = frame.chart.default_step(2);
        // Cumulative integrals anchored at parameter 0 (the section end).
        let zero_idx = params
            .iter()
            .position(|&t| t.abs() < 1e-12)
            .unwrap_or(0);
        let n = params.len();
        let mut e_cum = vec![0.0; n];
        let mut b3 = vec![0.0; n];
        for i in 0..n {
            b3[i] = partial(b, 2, &points[i], h3)?;
        }
        for i in (0..zero_idx).rev() {
            e_cum[i] =
                e_cum[i + 1] - 0.5 * (b3[i] + b3[i + 1]) * (params[i + 1] - params[i]);
        }
        for i in zero_idx + 1..n {
            e_cum[i] =
                e_cum[i - 1] + 0.5 * (b3[i] + b3[i - 1]) * (params[i] - params[i - 1]);
        }
        let hstep = frame.chart.default_step(0).min(frame.chart.default_step(1));
        let mut hw = vec![0.0; n];
        for i in 0..n {
            let h_val = bracket_h(frame, &points[i], hstep)?;
            hw[i] = h_val * (-e_cum[i]).exp();
        }
        let mut h_cum = vec![0.0; n];
        for i in (0..zero_idx).rev() {
            h_cum[i] = h_cum[i + 1] - 0.5 * (hw[i] + hw[i + 1]) * (params[i + 1] - params[i]);
        }
        for i in zero_idx + 1..n {
            h_cum[i] = h_cum[i - 1] + 0.5 * (hw[i] + hw[i - 1]) * (params[i] - params[i - 1]);
        }
        Ok(AlphaTrajectory {
            params,
            t_x,
            e_cum,
            h_cum,
        })
    }

    /// alpha at trajectory parameter t: e^{E(t)} H(t), interpolating
    /// between nodes.
    fn alpha_at_param(&self, t: f64) -> Result<f64> {
        let e = self.interp(&self.e_cum, t)?;
        let h = self.interp(&self.h_cum, t)?;
        Ok(e.exp() * h)
    }

    fn interp(&self, values: &[f64], t: f64) -> Result<f64> {
        let params = &self.params;
        let n = params.len();
        if n == 1 {
            return Ok(values[0]);
        }
        if t < params[0] - 1e-9 || t > params[n - 1] + 1e-9 {
            return Err(Error::invalid(
                "alpha",
                format!("parameter {t} outside trajectory range"),
            ));
        }
        let mut i = 1;
        while i < n - 1 && params[i] < t {
            i += 1;
        }
        let (t0, t1) = (params[i - 1], params[i]);
        if (t1 - t0).abs() < 1e-300 {
            return Ok(values[i]);
        }
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(values[i - 1] + w * (values[i] - values[i - 1]))
    }
}

/// alpha at one point.
pub fn alpha_at(frame: &CanonicalFrame, x: Point, section: f64, step: f64) -> Result<f64> {
    let traj = AlphaTrajectory::build(frame, x, section, step)?;
    traj.alpha_at_param(traj.t_x)
}

/// alpha as a lazily evaluated scalar field (one trajectory per evaluation).
pub fn alpha_field(frame: &CanonicalFrame, section: f64, step: f64) -> ScalarField {
    let frame = frame.clone();
    ScalarField::computed(
        frame.chart,
        format!("alpha(section x2 = {section})"),
        [true, true, true],
        Smoothness::C1,
        move |p| alpha_at(&frame, *p, section, step),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationSummary {
    pub schema_version: u32,
    pub section: f64,
    pub step: f64,
    pub residual_sup: f64,
    pub residual_at: Point,
    pub alpha_sup: f64,
    pub alpha_at: Point,
}

/// The perturbed frame {X + alpha d/dx3, Y} together with its alpha field.
#[derive(Debug, Clone)]
pub struct PerturbationResult {
    pub alpha: ScalarField,
    pub perturbed: CanonicalFrame,
    pub section: f64,
    pub step: f64,
}

pub fn perturbation(frame: &CanonicalFrame, section: f64, step: f64) -> Result<PerturbationResult> {
    if frame.chart.dim != 3 {
        return Err(Error::invalid("perturbation", "requires a 3-dimensional frame"));
    }
    let alpha = alpha_field(frame, section, step);
    let perturbed = CanonicalFrame::new3(
        frame.a.add(&alpha),
        frame.b.clone().expect("3-D frame"),
    );
    Ok(PerturbationResult {
        alpha,
        perturbed,
        section,
        step,
    })
}

/// Sup over the region of |h + alpha * d3(b) - Y(alpha)|, the residual of
/// the involutivity PDE. Y(alpha) is a directional difference along the
/// Y-flow with offset `step`.
pub fn involutivity_residual(
    frame: &CanonicalFrame,
    alpha: &ScalarField,
    region: &Grid,
    step: f64,
) -> Result<SupNorm> {
    if frame.chart.dim != 3 {
        return Err(Error::invalid(
            "involutivity_residual",
            "requires a 3-dimensional frame",
        ));
    }
    let b = frame.b.as_ref().expect("3-D frame");
    let hstep = frame.chart.default_step(0).min(frame.chart.default_step(1));
    let h3 = frame.chart.default_step(2);
    use rayon::prelude::*;
    let values: Vec<f64> = (0..region.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let x = region.node(i);
            let h_val = bracket_h(frame, &x, hstep)?;
            let b3 = partial(b, 2, &x, h3)?;
            let a_val = alpha.eval(&x)?;
            let fwd = trajectory(frame, FrameAxis::Y, x, step, step)?.endpoint();
            let bwd = trajectory(frame, FrameAxis::Y, x, -step, step)?.endpoint();
            let y_alpha = (alpha.eval(&fwd)? - alpha.eval(&bwd)?) / (2.0 * step);
            Ok((h_val + a_val * b3 - y_alpha).abs())
        })
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

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub schema_version: u32,
    /// sup |alpha| over the region.
    pub alpha_sup: f64,
    /// sup over region x [-t0, t0] of |eta|_x |eta ^ d eta|_x e^{davg(x,t)}.
    pub bound_sup: f64,
    pub main_ok: bool,
    /// Worst violation of |h| <= |X| |Y| |eta ^ d eta| along the sampled
    /// alpha trajectories (negative when satisfied everywhere).
    pub bracket_violation: f64,
    /// Worst violation of exp(int b_3) <= |eta| exp(davg2) along the sampled
    /// alpha trajectories.
    pub exponent_violation: f64,
    pub ok: bool,
    pub notes: Vec<String>,
}

const BOUND_ABS_SLACK: f64 = 1e-6;
const BOUND_REL_SLACK: f64 = 0.01;

/// Check the perturbation bound sup|alpha| <= sup |eta| |eta^deta| e^{davg}
/// together with the two trajectory-level inequalities behind it. `eta`
/// must be normalized so its transversal coefficient is >= 1 on the region.
#[allow(clippy::too_many_arguments)]
pub fn bound_check(
    eta: &OneForm,
    frame: &CanonicalFrame,
    alpha: &ScalarField,
    region: &Grid,
    t0: f64,
    section: f64,
    step: f64,
    h: f64,
) -> Result<BoundReport> {
    let chart = eta.chart;
    if chart.dim != 3 {
        return Err(Error::invalid("bound_check", "requires a 3-dimensional chart"));
    }
    let deta = exterior_derivative(eta, h)?;
    let wedge = wedge13(eta, &deta)?;
    // Normalization precondition.
    for (_, p) in region.nodes() {
        let c = eta.transversal_coeff().eval(&p)?;
        if c < 1.0 - 1e-9 {
            return Err(Error::invalid(
                "bound_check",
                format!("form is not normalized: transversal coefficient {c} < 1 at {p:?}"),
            ));
        }
    }
    let alpha_sup = sup_norm(alpha, region)?;
    // Main bound: sup over region x [-t0, t0].
    let t_samples: Vec<f64> = (0..9).map(|i| -t0 + t0 * i as f64 / 4.0).collect();
    use rayon::prelude::*;
    let bound_vals: Vec<f64> = (0..region.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let x = region.node(i);
            let eta_x = eta.norm_at(&x)?;
            let wedge_x = wedge.norm_at(&x)?;
            let profile = averaged_profile(&deta, frame, x, t0, step, &t_samples)?;
            let mut best = f64::NEG_INFINITY;
            for (_, avg) in profile {
                best = best.max(eta_x * wedge_x * avg.dmax.exp());
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let bound_sup = bound_vals.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let main_ok = alpha_sup.value <= bound_sup * (1.0 + BOUND_REL_SLACK) + BOUND_ABS_SLACK;

    // Trajectory-level inequalities on a subsample of region nodes.
    let hstep = chart.default_step(0).min(chart.default_step(1));
    let h3 = chart.default_step(2);
    let b = frame.b.as_ref().expect("3-D frame");
    let mut bracket_violation = f64::NEG_INFINITY;
    let mut exponent_violation = f64::NEG_INFINITY;
    let sample_stride = (region.len() / 27).max(1);
    for i in (0..region.len()).step_by(sample_stride) {
        let x = region.node(i);
        let t_x = x[1] - section;
        let back = trajectory(frame, FrameAxis::Y, x, -t_x, step)?;
        // Node parameters measured from the section: tau = t_x + time.
        let b3_cum = back.cumulative(|p| partial(b, 2, p, h3))?;
        let d2_cum = back.cumulative(|p| deta.comp(1).eval(p))?;
        for (j, p) in back.points.iter().enumerate() {
            let h_val = bracket_h(frame, p, hstep)?.abs();
            let a_val = frame.a.eval(p)?;
            let b_val = b.eval(p)?;
            let xn = (1.0 + a_val * a_val).sqrt();
            let yn = (1.0 + b_val * b_val).sqrt();
            let wedge_p = wedge.norm_at(p)?;
            let rhs1 = xn * yn * wedge_p;
            bracket_violation =
                bracket_violation.max(h_val - (rhs1 * (1.0 + BOUND_REL_SLACK) + BOUND_ABS_SLACK));
            // exp(int_tau^{t_x} b_3) against |eta| exp(int_tau^{t_x} d2):
            // the cumulative arrays run from x (time 0) toward the section
            // (time -t_x), so the integral from node j to x is -cum[j].
            let lhs2 = (-b3_cum[j]).exp();
            let rhs2 = eta.norm_at(p)? * (-d2_cum[j]).exp();
            exponent_violation =
                exponent_violation.max(lhs2 - (rhs2 * (1.0 + BOUND_REL_SLACK) + BOUND_ABS_SLACK));
        }
    }
    let ok = main_ok && bracket_violation <= 0.0 && exponent_violation <= 0.0;
    Ok(BoundReport {
        schema_version: crate::SCHEMA_VERSION,
        alpha_sup: alpha_sup.value,
        bound_sup,
        main_ok,
        bracket_violation,
        exponent_violation,
        ok,
        notes: vec![
            "the sup on the bound side runs over the verification region and |t| <= t0".into(),
            format!("slack: {BOUND_REL_SLACK:.0e} relative plus {BOUND_ABS_SLACK:.0e} absolute"),
        ],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RescaleReport {
    pub schema_version: u32,
    /// sup over the region of the single exterior-derivative component of
    /// the rescaled form.
    pub closedness_residual: f64,
    /// max |beta - 1| over section nodes.
    pub beta_section_dev: f64,
    /// Worst violation of |w_hat|_z <= sup_t e^{davg(z,t)} |w|_z.
    pub norm_bound_violation: f64,
    /// max |p_hat q - q_hat p| over the region (kernel preservation).
    pub kernel_dev: f64,
    pub ok: bool,
}

/// Closed-form rescaling on a 2-D chart: w = c(dz2 - b dz1) becomes
/// w_hat = beta (dz2 - b dz1) with beta = exp(-int_0^{t_z} d2(b) along the
/// X-flow), which is closed. Returns the rescaled form and its diagnostics.
pub fn rescale_closed_2d(
    w: &OneForm,
    section_z1: f64,
    step: f64,
    region: &Grid,
    t0: f64,
    h: f64,
) -> Result<(OneForm, RescaleReport)> {
    let chart = w.chart;
    if chart.dim != 2 {
        return Err(Error::invalid("rescale_closed_2d", "requires a 2-dimensional chart"));
    }
    for (_, p) in region.nodes() {
        let c = w.transversal_coeff().eval(&p)?;
        if c < 1.0 - 1e-9 {
            return Err(Error::invalid(
                "rescale_closed_2d",
                format!("form is not normalized: c = {c} < 1 at {p:?}"),
            ));
        }
    }
    // The kernel frame X = d1 + b d2 with b = -p/q.
    let frame = canonical_frame(w)?;
    let b_field = frame.a.clone();
    let beta = {
        let frame = frame.clone();
        let chart2 = chart;
        ScalarField::computed(
            chart,
            format!("beta(section z1 = {section_z1})"),
            [true, true, false],
            Smoothness::C1,
            move |p| {
                let t_z = p[0] - section_z1;
                let back = trajectory(&frame, FrameAxis::X, *p, -t_z, step)?;
                let h2 = chart2.default_step(1);
                let integral = back.integrate(|q| partial(&frame.a, 1, q, h2))?;
                // back runs from p to the section; the defining integral
                // runs section -> p, so flip the sign.
                Ok((integral).exp())
            },
        )
    };
    let p_hat = beta.mul(&b_field).neg();
    let q_hat = beta.clone();
    let w_hat = OneForm::new(chart, vec![p_hat.clone(), q_hat.clone()])?;

    // Closedness: the single component of d(w_hat).
    let dw_hat = exterior_derivative(&w_hat, h)?;
    let closedness = sup_norm(dw_hat.comp(0), region)?.value;

    // beta on the section.
    let mut beta_dev = 0.0f64;
    let n_sec = 9;
    for j in 0..n_sec {
        let z2 = region.bounds[1][0]
            + (region.bounds[1][1] - region.bounds[1][0]) * j as f64 / (n_sec - 1) as f64;
        let p = [section_z1, z2, 0.0];
        if chart.contains(&p) {
            beta_dev = beta_dev.max((beta.eval(&p)? - 1.0).abs());
        }
    }

    // Norm bound |w_hat|_z <= sup_{|t|<=t0} e^{davg(z,t)} |w|_z.
    let dw = exterior_derivative(w, h)?;
    let t_samples: Vec<f64> = (0..9).map(|i| -t0 + t0 * i as f64 / 4.0).collect();
    let mut norm_violation = f64::NEG_INFINITY;
    for (_, z) in region.nodes() {
        let lhs = w_hat.norm_at(&z)?;
        let wz = w.norm_at(&z)?;
        let profile = averaged_profile(&dw, &frame, z, t0, step, &t_samples)?;
        let mut rhs = f64::NEG_INFINITY;
        for (_, avg) in profile {
            rhs = rhs.max(avg.dmax.exp() * wz);
        }
        norm_violation =
            norm_violation.max(lhs - (rhs * (1.0 + BOUND_REL_SLACK) + BOUND_ABS_SLACK));
    }

    // Kernel preservation: p_hat q - q_hat p = 0 pointwise.
    let mut kernel_dev = 0.0f64;
    for (_, z) in region.nodes() {
        let cross = p_hat.eval(&z)? * w.coeff(1).eval(&z)? - q_hat.eval(&z)? * w.coeff(0).eval(&z)?;
        kernel_dev = kernel_dev.max(cross.abs());
    }

    let report = RescaleReport {
        schema_version: crate::SCHEMA_VERSION,
        closedness_residual: closedness,
        beta_section_dev: beta_dev,
        norm_bound_violation: norm_violation,
        kernel_dev,
        ok: beta_dev <= 1e-10 && norm_violation <= 0.0 && kernel_dev <= 1e-10,
    };
    Ok((w_hat, report))
}
