//! Flow maps of canonical frame fields and the flow-averaged
//! exterior-derivative quantities.
//!
//! The integrator is classical fixed-step fourth-order Runge-Kutta with a
//! final partial step; quadrature along trajectories reuses the trajectory
//! nodes (composite trapezoid). Everything here is deterministic.

use crate::chart::{Chart, Point};
use crate::error::{Error, Result};
use crate::forms::TwoForm;
use crate::frames::CanonicalFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FrameAxis {
    X,
    Y,
}

/// One fixed-step RK4 step of an autonomous field.
pub fn rk4_step<F>(field: &F, p: &Point, h: f64) -> Result<Point>
where
    F: Fn(&Point) -> Result<[f64; 3]>,
{
    let k1 = field(p)?;
    let p2 = offset(p, &k1, h / 2.0);
    let k2 = field(&p2)?;
    let p3 = offset(p, &k2, h / 2.0);
    let k3 = field(&p3)?;
    let p4 = offset(p, &k3, h);
    let k4 = field(&p4)?;
    let mut out = *p;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

fn offset(p: &Point, v: &[f64; 3], h: f64) -> Point {
    [p[0] + h * v[0], p[1] + h * v[1], p[2] + h * v[2]]
}

fn frame_field<'a>(
    frame: &'a CanonicalFrame,
    which: FrameAxis,
) -> Result<impl Fn(&Point) -> Result<[f64; 3]> + 'a> {
    if which == FrameAxis::Y && frame.chart.dim == 2 {
        return Err(Error::invalid("flow", "no Y field on a 2-dimensional chart"));
    }
    Ok(move |p: &Point| match which {
        FrameAxis::X => frame.x_at(p),
        FrameAxis::Y => frame.y_at(p),
    })
}

/// A flow trajectory with its (increasing or decreasing) parameter values.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub field: FrameAxis,
}

impl Trajectory {
    pub fn endpoint(&self) -> Point {
        *self.points.last().expect("trajectory has at least one node")
    }

    /// Composite-trapezoid integral of `f` along the trajectory with respect
    /// to the flow parameter (signed for decreasing parameters).
    pub fn integrate<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(&Point) -> Result<f64>,
    {
        let mut acc = 0.0;
        let mut prev = f(&self.points[0])?;
        for i in 1..self.points.len() {
            let cur = f(&self.points[i])?;
            acc += 0.5 * (prev + cur) * (self.times[i] - self.times[i - 1]);
            prev = cur;
        }
        Ok(acc)
    }

    /// Cumulative trapezoid values of `f` at every trajectory node.
    pub fn cumulative<F>(&self, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(&Point) -> Result<f64>,
    {
        let mut out = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        let mut prev = f(&self.points[0])?;
        out.push(0.0);
        for i in 1..self.points.len() {
            let cur = f(&self.points[i])?;
            acc += 0.5 * (prev + cur) * (self.times[i] - self.times[i - 1]);
            out.push(acc);
            prev = cur;
        }
        Ok(out)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,x1,x2,x3")?;
        for (t, p) in self.times.iter().zip(self.points.iter()) {
            writeln!(out, "{},{},{},{}", t, p[0], p[1], p[2])?;
        }
        Ok(())
    }
}

fn check_inside(chart: &Chart, p: &Point, time: f64) -> Result<()> {
    // Roundoff slack: a flow that mathematically stays in the closed chart
    // may overshoot the boundary by a few ulps.
    for i in 0..chart.dim {
        let slack = 1e-9 * chart.width(i);
        if p[i] < chart.bounds[i][0] - slack || p[i] > chart.bounds[i][1] + slack {
            return Err(Error::FlowExit { time, point: *p });
        }
    }
    Ok(())
}

/// Integrate the frame field for duration `t` (possibly negative), recording
/// every node. Errors out as soon as an intermediate point leaves the chart.
pub fn trajectory(
    frame: &CanonicalFrame,
    which: FrameAxis,
    x: Point,
    t: f64,
    step: f64,
) -> Result<Trajectory> {
    if step <= 0.0 {
        return Err(Error::NonPositiveStep(step));
    }
    let chart = frame.chart;
    check_inside(&chart, &x, 0.0)?;
    let field = frame_field(frame, which)?;
    let mut times = vec![0.0];
    let mut points = vec![x];
    if t != 0.0 {
        let dir = t.signum();
        let total = t.abs();
        let n_full = (total / step).floor() as usize;
        let mut cur = x;
        let mut tau = 0.0;
        for _ in 0..n_full {
            cur = rk4_step(&field, &cur, dir * step)?;
            tau += dir * step;
            check_inside(&chart, &cur, tau)?;
            times.push(tau);
            points.push(cur);
        }
        let rem = total - n_full as f64 * step;
        if rem > 1e-15 * total.max(1.0) {
            cur = rk4_step(&field, &cur, dir * rem)?;
            check_inside(&chart, &cur, t)?;
            times.push(t);
            points.push(cur);
        } else if let Some(last) = times.last_mut() {
            *last = t;
        }
    }
    Ok(Trajectory {
        times,
        points,
        field: which,
    })
}

/// Endpoint of the flow e^{t X} or e^{t Y} from `x`.
pub fn flow(
    frame: &CanonicalFrame,
    which: FrameAxis,
    x: Point,
    t: f64,
    step: f64,
) -> Result<Point> {
    Ok(trajectory(frame, which, x, t, step)?.endpoint())
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SectionTime {
    /// Flow time from the section plane to the point (exact: x2 advances at
    /// unit rate along Y).
    pub t: f64,
    /// The base point on the section, obtained by flowing for -t.
    pub base: Point,
    /// Value of 1/(|X| |Y|) at the point.
    pub eq_t_bound: f64,
    /// Whether |t| <= 1/(|X| |Y|) holds at the point.
    pub eq_t_satisfied: bool,
}

/// Time to the section plane {x2 = section} along Y, plus the base point.
pub fn section_time(
    frame: &CanonicalFrame,
    x: Point,
    section: f64,
    step: f64,
) -> Result<SectionTime> {
    let chart = frame.chart;
    if chart.dim != 3 {
        return Err(Error::invalid("section_time", "requires a 3-dimensional chart"));
    }
    if section < chart.bounds[1][0] || section > chart.bounds[1][1] {
        return Err(Error::SectionOutsideChart { section });
    }
    let t = x[1] - section;
    let base = flow(frame, FrameAxis::Y, x, -t, step)?;
    let a = frame.a.eval(&x)?;
    let b = frame.b.as_ref().expect("3-D frame").eval(&x)?;
    let bound = 1.0 / ((1.0 + a * a) * (1.0 + b * b)).sqrt();
    Ok(SectionTime {
        t,
        base,
        eq_t_bound: bound,
        eq_t_satisfied: t.abs() <= bound,
    })
}

/// The averaged quantities at a single (x, t).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct AveragedD {
    /// Integral of the dx1^dx3 component along the X-flow.
    pub d1: f64,
    /// Integral of the dx2^dx3 component along the Y-flow (3-D only).
    pub d2: Option<f64>,
    /// max{d1, d2} of the signed values, as defined.
    pub dmax: f64,
    /// max of absolute values; reported for inspection, never used in
    /// verdicts.
    pub dmax_abs: f64,
}

/// Averaged exterior derivative at (x, t): integrate the first component
/// along e^{tau X} and the second along e^{tau Y}.
pub fn averaged_d(
    deta: &TwoForm,
    frame: &CanonicalFrame,
    x: Point,
    t: f64,
    step: f64,
) -> Result<AveragedD> {
    let profile = averaged_profile(deta, frame, x, t, step, &[t])?;
    Ok(profile[0].1)
}

/// Averaged quantities at several t values sharing one trajectory pair.
/// `span` bounds the flow duration; each sample must satisfy |t| <= |span|.
pub fn averaged_profile(
    deta: &TwoForm,
    frame: &CanonicalFrame,
    x: Point,
    span: f64,
    step: f64,
    t_samples: &[f64],
) -> Result<Vec<(f64, AveragedD)>> {
    let dim = frame.chart.dim;
    let span = span.abs();
    let cum_x = DirectionalCumulative::build(deta, frame, FrameAxis::X, x, span, step, 0)?;
    let cum_y = if dim == 3 {
        Some(DirectionalCumulative::build(
            deta,
            frame,
            FrameAxis::Y,
            x,
            span,
            step,
            1,
        )?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(t_samples.len());
    for &t in t_samples {
        let d1 = cum_x.value_at(t)?;
        let d2 = match &cum_y {
            Some(c) => Some(c.value_at(t)?),
            None => None,
        };
        let dmax = match d2 {
            Some(v) => d1.max(v),
            None => d1,
        };
        let dmax_abs = match d2 {
            Some(v) => d1.abs().max(v.abs()),
            None => d1.abs(),
        };
        out.push((
            t,
            AveragedD {
                d1,
                d2,
                dmax,
                dmax_abs,
            },
        ));
    }
    Ok(out)
}

/// Cumulative trapezoid of one 2-form component along forward and backward
/// trajectories of one frame field.
struct DirectionalCumulative {
    fwd_times: Vec<f64>,
    fwd_values: Vec<f64>,
    bwd_times: Vec<f64>,
    bwd_values: Vec<f64>,
}

impl DirectionalCumulative {
    fn build(
        deta: &TwoForm,
        frame: &CanonicalFrame,
        which: FrameAxis,
        x: Point,
        span: f64,
        step: f64,
        comp: usize,
    ) -> Result<DirectionalCumulative> {
        let comp_field = deta.comp(comp);
        let fwd = trajectory(frame, which, x, span, step)?;
        let bwd = trajectory(frame, which, x, -span, step)?;
        let fwd_values = fwd.cumulative(|p| comp_field.eval(p))?;
        let bwd_values = bwd.cumulative(|p| comp_field.eval(p))?;
        Ok(DirectionalCumulative {
            fwd_times: fwd.times,
            fwd_values,
            bwd_times: bwd.times,
            bwd_values,
        })
    }

    fn value_at(&self, t: f64) -> Result<f64> {
        let (times, values) = if t >= 0.0 {
            (&self.fwd_times, &self.fwd_values)
        } else {
            (&self.bwd_times, &self.bwd_values)
        };
        let n = times.len();
        if n == 1 {
            if t.abs() < 1e-300 {
                return Ok(0.0);
            }
            return Err(Error::invalid(
                "averaged_profile",
                format!("t = {t} beyond integrated span 0"),
            ));
        }
        let last = times[n - 1];
        if (t >= 0.0 && t > last + 1e-12) || (t < 0.0 && t < last - 1e-12) {
            return Err(Error::invalid(
                "averaged_profile",
                format!("t = {t} beyond integrated span {last}"),
            ));
        }
        let mut i = 1;
        while i < n - 1 && ((t >= 0.0 && times[i] < t) || (t < 0.0 && times[i] > t)) {
            i += 1;
        }
        let (t0, t1) = (times[i - 1], times[i]);
        let (v0, v1) = (values[i - 1], values[i]);
        if (t1 - t0).abs() < 1e-300 {
            return Ok(v1);
        }
        let w = (t - t0) / (t1 - t0);
        Ok(v0 + w * (v1 - v0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Chart, ScalarField, Smoothness};
    use crate::forms::{exterior_derivative, OneForm, TwoForm};
    use crate::frames::{canonical_frame, CanonicalFrame};

    fn frame_ab(chart: Chart, a: &str, b: &str) -> CanonicalFrame {
        CanonicalFrame::new3(
            ScalarField::parse(chart, a, Smoothness::C2).unwrap(),
            ScalarField::parse(chart, b, Smoothness::C2).unwrap(),
        )
    }

    #[test]
    fn straight_line_flow() {
        let chart = Chart::cube(3, -1.0, 1.0, 0.1).unwrap();
        let frame = frame_ab(chart, "0", "0");
        let p = flow(&frame, FrameAxis::X, [0.0; 3], 0.5, 1e-3).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn constant_b_flow() {
        let chart = Chart::cube(3, -1.0, 1.0, 0.1).unwrap();
        let frame = frame_ab(chart, "0", "1");
        let p = flow(&frame, FrameAxis::Y, [0.0; 3], 0.25, 1e-3).unwrap();
        assert!((p[1] - 0.25).abs() < 1e-12);
        assert!((p[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn exponential_flow() {
        // b = x3: dx3/dt = x3 integrates to e^t.
        let chart = Chart::new(3, &[[-2.0, 2.0], [-2.0, 2.0], [0.0, 3.0]], &[0.1, 0.1, 0.1])
            .unwrap();
        let frame = frame_ab(chart, "0", "x3");
        let p = flow(&frame, FrameAxis::Y, [0.0, 0.0, 1.0], 1.0, 1e-3).unwrap();
        assert!((p[0]).abs() < 1e-14);
        assert!((p[1] - 1.0).abs() < 1e-12);
        assert!((p[2] - std::f64::consts::E).abs() < 1e-8, "{}", p[2]);
    }

    #[test]
    fn per_step_local_order() {
        // One-step residual against the exact e^h solution stays below
        // 10 h^5 on a C2 field.
        let chart = Chart::new(3, &[[-2.0, 2.0], [-2.0, 2.0], [0.0, 3.0]], &[0.1, 0.1, 0.1])
            .unwrap();
        let frame = frame_ab(chart, "0", "x3");
        let h = 1e-2;
        let traj = trajectory(&frame, FrameAxis::Y, [0.0, 0.0, 1.0], 0.5, h).unwrap();
        for i in 1..traj.points.len() {
            let prev = traj.points[i - 1];
            let exact = prev[2] * ((traj.times[i] - traj.times[i - 1]).exp());
            let got = traj.points[i][2];
            assert!(
                (got - exact).abs() <= 10.0 * h.powi(5),
                "step {i}: |{got} - {exact}|"
            );
        }
    }

    #[test]
    fn unit_rate_coordinates() {
        let chart = Chart::cube(3, -2.0, 2.0, 0.1).unwrap();
        let frame = frame_ab(chart, "0.3*sin(x2)", "0.2*x1");
        let t = 0.37;
        let px = flow(&frame, FrameAxis::X, [0.1, -0.2, 0.0], t, 1e-3).unwrap();
        assert!((px[0] - (0.1 + t)).abs() < 1e-13);
        let py = flow(&frame, FrameAxis::Y, [0.1, -0.2, 0.0], t, 1e-3).unwrap();
        assert!((py[1] - (-0.2 + t)).abs() < 1e-13);
    }

    #[test]
    fn domain_exit_detected() {
        let chart = Chart::cube(3, -1.0, 1.0, 0.1).unwrap();
        let frame = frame_ab(chart, "0", "0");
        let err = flow(&frame, FrameAxis::X, [0.9, 0.0, 0.0], 0.5, 1e-3).unwrap_err();
        match err {
            Error::FlowExit { time, .. } => assert!(time > 0.0 && time <= 0.5),
            other => panic!("expected FlowExit, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_step_rejected() {
        let chart = Chart::cube(3, -1.0, 1.0, 0.1).unwrap();
        let frame = frame_ab(chart, "0", "0");
        assert!(matches!(
            flow(&frame, FrameAxis::X, [0.0; 3], 0.1, 0.0),
            Err(Error::NonPositiveStep(_))
        ));
    }

    #[test]
    fn group_law() {
        let chart = Chart::cube(3, -2.0, 2.0, 0.2).unwrap();
        let frame = frame_ab(chart, "0.3*cos(x2)*x3", "0.4*sin(x1+x3)");
        let x = [0.1, -0.3, 0.2];
        let (s, t) = (0.21, 0.33);
        let one = flow(&frame, FrameAxis::X, x, s + t, 1e-3).unwrap();
        let mid = flow(&frame, FrameAxis::X, x, s, 1e-3).unwrap();
        let two = flow(&frame, FrameAxis::X, mid, t, 1e-3).unwrap();
        for i in 0..3 {
            assert!((one[i] - two[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn endpoint_error_order_check() {
        // Halving the step shrinks the endpoint error by at least 2^3 * 0.8
        // on the b = x3 field.
        let chart = Chart::new(3, &[[-2.0, 2.0], [-2.0, 2.0], [0.0, 3.0]], &[0.1, 0.1, 0.1])
            .unwrap();
        let frame = frame_ab(chart, "0", "x3");
        let exact = std::f64::consts::E;
        let mut errs = Vec::new();
        for step in [2e-2, 1e-2, 5e-3] {
            let p = flow(&frame, FrameAxis::Y, [0.0, 0.0, 1.0], 1.0, step).unwrap();
            errs.push((p[2] - exact).abs());
        }
        assert!(errs[0] / errs[1] >= 8.0 * 0.8, "{errs:?}");
        assert!(errs[1] / errs[2] >= 8.0 * 0.8, "{errs:?}");
    }

    #[test]
    fn section_time_cases() {
        let chart = Chart::cube(3, -1.0, 1.0, 0.1).unwrap();
        let frame = frame_ab(chart, "0", "0");
        let on = section_time(&frame, [0.2, 0.0, 0.1], 0.0, 1e-3).unwrap();
        assert_eq!(on.t, 0.0);
        assert_eq!(on.base, [0.2, 0.0, 0.1]);
        let off = section_time(&frame, [0.2, 0.3, 0.1], 0.0, 1e-3).unwrap();
        assert!((off.t - 0.3).abs() < 1e-14);
        assert!((off.base[1]).abs() < 1e-12);
        // For a = b = 0 the bound is exactly 1 and |t| <= 1 holds.
        assert_eq!(off.eq_t_bound, 1.0);
        assert!(off.eq_t_satisfied);
    }

    fn contact_deta(chart: Chart) -> (OneForm, TwoForm, CanonicalFrame) {
        let eta = OneForm::new(
            chart,
            vec![
                ScalarField::parse(chart, "-x2", Smoothness::C2).unwrap(),
                ScalarField::constant(chart, 0.0),
                ScalarField::constant(chart, 1.0),
            ],
        )
        .unwrap();
        let deta = exterior_derivative(&eta, 1e-4).unwrap();
        let frame = canonical_frame(&eta).unwrap();
        (eta, deta, frame)
    }

    #[test]
    fn averaged_ignores_third_component() {
        // The contact form has d1 = d2 = 0, d3 = 1; the averaged quantities
        // all vanish.
        let chart = Chart::cube(3, -1.0, 1.0, 0.2).unwrap();
        let (_, deta, frame) = contact_deta(chart);
        let got = averaged_d(&deta, &frame, [0.1, 0.2, 0.0], 0.4, 1e-3).unwrap();
        assert!(got.d1.abs() < 1e-10);
        assert!(got.d2.unwrap().abs() < 1e-10);
        assert!(got.dmax.abs() < 1e-10);
    }

    #[test]
    fn averaged_constant_component() {
        // d2 == 1 with b = 0 integrates to t along the Y flow.
        let chart = Chart::cube(3, -1.0, 1.0, 0.2).unwrap();
        let frame = frame_ab(chart, "0", "0");
        let deta = TwoForm::new(
            chart,
            vec![
                ScalarField::constant(chart, 0.0),
                ScalarField::constant(chart, 1.0),
                ScalarField::constant(chart, 0.0),
            ],
        )
        .unwrap();
        let got = averaged_d(&deta, &frame, [0.0; 3], 0.5, 1e-3).unwrap();
        assert!((got.d2.unwrap() - 0.5).abs() < 1e-10);
        assert!((got.dmax - 0.5).abs() < 1e-10);
        let neg = averaged_d(&deta, &frame, [0.0; 3], -0.5, 1e-3).unwrap();
        assert!((neg.d2.unwrap() + 0.5).abs() < 1e-10);
    }

    #[test]
    fn averaged_additive_in_t() {
        let chart = Chart::cube(3, -2.0, 2.0, 0.3).unwrap();
        let eta = OneForm::new(
            chart,
            vec![
                ScalarField::parse(chart, "-0.3*sin(x3)", Smoothness::C2).unwrap(),
                ScalarField::parse(chart, "-0.2*x1", Smoothness::C2).unwrap(),
                ScalarField::constant(chart, 1.0),
            ],
        )
        .unwrap();
        let deta = exterior_derivative(&eta, 1e-4).unwrap();
        let frame = canonical_frame(&eta).unwrap();
        let x = [0.1, 0.0, 0.2];
        let (s, t) = (0.2, 0.15);
        let whole = averaged_d(&deta, &frame, x, s + t, 1e-3).unwrap().d1;
        let first = averaged_d(&deta, &frame, x, s, 1e-3).unwrap().d1;
        let mid = flow(&frame, FrameAxis::X, x, s, 1e-3).unwrap();
        let second = averaged_d(&deta, &frame, mid, t, 1e-3).unwrap().d1;
        assert!(
            (whole - first - second).abs() < 1e-6,
            "{whole} vs {}",
            first + second
        );
    }

    #[test]
    fn averaged_bounded_by_sup() {
        let chart = Chart::cube(3, -2.0, 2.0, 0.3).unwrap();
        let eta = OneForm::new(
            chart,
            vec![
                ScalarField::parse(chart, "-0.4*sin(x3)", Smoothness::C2).unwrap(),
                ScalarField::constant(chart, 0.0),
                ScalarField::constant(chart, 1.0),
            ],
        )
        .unwrap();
        let deta = exterior_derivative(&eta, 1e-4).unwrap();
        let frame = canonical_frame(&eta).unwrap();
        let region = crate::chart::Grid::interior(&chart, &[5, 5, 5]).unwrap();
        let sup = crate::forms::sup_norm(&deta, &region).unwrap().value;
        for t in [0.1, 0.3, -0.25] {
            let got = averaged_d(&deta, &frame, [0.2, -0.1, 0.3], t, 1e-3).unwrap();
            assert!(got.dmax_abs <= t.abs() * sup + 1e-9);
        }
    }

    #[test]
    fn trajectory_csv() {
        let chart = Chart::cube(3, -1.0, 1.0, 0.1).unwrap();
        let frame = frame_ab(chart, "0", "0");
        let traj = trajectory(&frame, FrameAxis::X, [0.0; 3], 0.01, 5e-3).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,x3\n"));
        assert_eq!(text.lines().count(), 1 + traj.points.len());
    }
}
