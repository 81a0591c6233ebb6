//! Uniqueness conditions on moduli of continuity.
//!
//! Three conditions are evaluated along a decreasing epsilon schedule:
//!
//! * the integral-exponential condition
//!   (1/e) int_0^e w(t) dt * exp((1/e^2) int_0^e w(t) dt) -> 0,
//! * its direct pointwise form w(t) e^{w(t)/t} -> 0 (meaningful for
//!   increasing moduli), and
//! * the classical divergence condition int_0^e dt/w(t) = infinity.
//!
//! No finite computation can prove a limit or the divergence of an improper
//! integral; verdicts are trend judgments. Quantities are tracked in log
//! space so schedules reaching 1e-8 do not overflow.

use crate::error::{Error, Result};
use crate::mollify::{lsq_slope, modulus_integral, Modulus};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    OdeStar,
    OdeStarB,
    Osgood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleRow {
    pub epsilon: f64,
    /// int_0^epsilon w(t) dt for the integral condition; the partial
    /// integral of 1/w from epsilon up to the largest scale for the
    /// divergence condition.
    pub integral: Option<f64>,
    /// ln of the monitored quantity.
    pub log_quantity: f64,
    /// The quantity itself when it fits in a double.
    pub quantity: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionVerdict {
    pub schema_version: u32,
    pub condition: Condition,
    pub rows: Vec<ScheduleRow>,
    pub verdict: Verdict,
    pub rationale: String,
}

fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.len() < 4 {
        return Err(Error::InvalidSchedule(
            "the schedule needs at least 4 scales".into(),
        ));
    }
    for w in schedule.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidSchedule(
                "schedule must strictly decrease".into(),
            ));
        }
    }
    if schedule.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidSchedule("scales must be positive".into()));
    }
    Ok(())
}

fn check_positive(w: &Modulus, schedule: &[f64]) -> Result<()> {
    for &t in schedule {
        let v = w.eval(t)?;
        if !(v > 0.0) {
            return Err(Error::NonPositiveModulus { t, value: v });
        }
    }
    Ok(())
}

fn finite_or_none(x: f64) -> Option<f64> {
    if x.is_finite() {
        Some(x)
    } else {
        None
    }
}

/// Evaluate one condition along the schedule.
pub fn check(w: &Modulus, condition: Condition, schedule: &[f64]) -> Result<ConditionVerdict> {
    validate_schedule(schedule)?;
    check_positive(w, schedule)?;
    match condition {
        Condition::OdeStar => check_limit_condition(w, condition, schedule, |w, eps| {
            let (integral, _) = modulus_integral(w, eps)?;
            // ln Q = ln(I/eps) + I/eps^2, tracked in log space.
            let log_q = (integral / eps).max(1e-300).ln() + integral / (eps * eps);
            Ok((Some(integral), log_q))
        }),
        Condition::OdeStarB => check_limit_condition(w, condition, schedule, |w, t| {
            let wt = w.eval(t)?;
            let log_q = wt.max(1e-300).ln() + wt / t;
            Ok((None, log_q))
        }),
        Condition::Osgood => check_osgood(w, schedule),
    }
}

/// Shared trend machinery for the two vanishing-limit conditions: satisfied
/// needs the last three quantities strictly decreasing along the schedule
/// and a fitted d(ln Q)/d(ln eps) slope beyond +0.1; violated mirrors it.
fn check_limit_condition(
    w: &Modulus,
    condition: Condition,
    schedule: &[f64],
    quantity: impl Fn(&Modulus, f64) -> Result<(Option<f64>, f64)>,
) -> Result<ConditionVerdict> {
    let mut rows = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let (integral, log_q) = quantity(w, eps)?;
        rows.push(ScheduleRow {
            epsilon: eps,
            integral,
            log_quantity: log_q,
            quantity: finite_or_none(log_q.exp()),
        });
    }
    let log_eps: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
    let log_q: Vec<f64> = rows.iter().map(|r| r.log_quantity).collect();
    let slope = lsq_slope(&log_eps, &log_q);
    let n = rows.len();
    let last3 = &log_q[n - 3..];
    let decreasing = last3[0] > last3[1] && last3[1] > last3[2];
    let increasing = last3[0] < last3[1] && last3[1] < last3[2];
    let (verdict, rationale) = if decreasing && slope >= 0.1 {
        (
            Verdict::Satisfied,
            format!("last three quantities strictly decrease; d(lnQ)/d(ln eps) = {slope:.3} >= 0.1"),
        )
    } else if increasing && slope <= -0.1 {
        (
            Verdict::Violated,
            format!("last three quantities strictly increase; d(lnQ)/d(ln eps) = {slope:.3} <= -0.1"),
        )
    } else {
        (
            Verdict::Inconclusive,
            format!("trend not decisive: d(lnQ)/d(ln eps) = {slope:.3}, |slope| threshold 0.1"),
        )
    };
    Ok(ConditionVerdict {
        schema_version: crate::SCHEMA_VERSION,
        condition,
        rows,
        verdict,
        rationale,
    })
}

/// Divergence judgment for int dt/w: the per-decade log-slopes
/// s_i = (J(e_{i+1}) - J(e_i)) / (ln e_i - ln e_{i+1}) of the partial
/// integrals J feed a decay fit; geometric decay of s means the improper
/// integral converges.
fn check_osgood(w: &Modulus, schedule: &[f64]) -> Result<ConditionVerdict> {
    let top = schedule[0];
    let mut partials = Vec::with_capacity(schedule.len());
    let mut acc = 0.0;
    let mut prev = top;
    for &eps in schedule {
        if eps < prev {
            acc += integrate_reciprocal(w, eps, prev)?;
        }
        partials.push(acc);
        prev = eps;
    }
    let mut slopes = Vec::with_capacity(schedule.len() - 1);
    for i in 0..schedule.len() - 1 {
        let dj = partials[i + 1] - partials[i];
        let dln = schedule[i].ln() - schedule[i + 1].ln();
        slopes.push(dj / dln);
    }
    let rows: Vec<ScheduleRow> = schedule
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let s = if i == 0 { slopes[0] } else { slopes[i - 1] };
            ScheduleRow {
                epsilon: eps,
                integral: Some(partials[i]),
                log_quantity: s.max(1e-300).ln(),
                quantity: finite_or_none(s),
            }
        })
        .collect();
    // Fit the decay rate r = d(ln s)/d(ln eps) over the late slopes, where
    // the asymptotic behavior lives.
    let tail = slopes.len().saturating_sub(4);
    let xs: Vec<f64> = (tail..slopes.len()).map(|i| schedule[i + 1].ln()).collect();
    let ys: Vec<f64> = slopes[tail..].iter().map(|s| s.max(1e-300).ln()).collect();
    let r = lsq_slope(&xs, &ys);
    let n = slopes.len();
    let last3 = &slopes[n.saturating_sub(3)..];
    let strictly_decaying = last3.windows(2).all(|w| w[1] < w[0]);
    let s_first = slopes[0];
    let min_late = last3.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let (verdict, rationale) = if r >= 0.1 && strictly_decaying {
        (
            Verdict::Violated,
            format!(
                "partial-integral slopes decay geometrically (d(ln s)/d(ln eps) = {r:.3} >= 0.1): the integral converges"
            ),
        )
    } else if r < 0.1 && min_late >= 0.5 * s_first {
        (
            Verdict::Satisfied,
            format!(
                "partial-integral slopes stay bounded away from flattening (d(ln s)/d(ln eps) = {r:.3}, late slopes >= half the first): divergence trend"
            ),
        )
    } else {
        (
            Verdict::Inconclusive,
            format!(
                "slope trend not decisive (d(ln s)/d(ln eps) = {r:.3}, late slope {min_late:.3e} vs first {s_first:.3e})"
            ),
        )
    };
    Ok(ConditionVerdict {
        schema_version: crate::SCHEMA_VERSION,
        condition: Condition::Osgood,
        rows,
        verdict,
        rationale,
    })
}

/// Simpson quadrature of 1/w over [lo, hi] with geometric subdivision.
fn integrate_reciprocal(w: &Modulus, lo: f64, hi: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut upper = hi;
    while upper > lo * (1.0 + 1e-12) {
        let lower = (upper / 2.0).max(lo);
        let n = 32;
        let h = (upper - lower) / n as f64;
        let mut acc = 1.0 / w.eval(lower)? + 1.0 / w.eval(upper)?;
        for i in 1..n {
            let t = lower + h * i as f64;
            let coeff = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += coeff / w.eval(t)?;
        }
        total += acc * h / 3.0;
        upper = lower;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule() -> Vec<f64> {
        (1..=8).map(|k| 10f64.powi(-k)).collect()
    }

    fn run(w: &str, c: Condition) -> ConditionVerdict {
        check(&Modulus::parse(w).unwrap(), c, &schedule()).unwrap()
    }

    #[test]
    fn lipschitz_satisfies_all_three() {
        assert_eq!(run("t", Condition::OdeStar).verdict, Verdict::Satisfied);
        assert_eq!(run("t", Condition::OdeStarB).verdict, Verdict::Satisfied);
        assert_eq!(run("t", Condition::Osgood).verdict, Verdict::Satisfied);
    }

    #[test]
    fn integral_condition_closed_form_for_linear_modulus() {
        // I = eps^2/2 makes the quantity (eps/2) e^{1/2}.
        let v = run("t", Condition::OdeStar);
        for row in &v.rows {
            let want = row.epsilon / 2.0 * 0.5f64.exp();
            let got = row.quantity.unwrap();
            assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn sqrt_violates_all_three() {
        assert_eq!(run("t^0.5", Condition::OdeStar).verdict, Verdict::Violated);
        assert_eq!(run("t^0.5", Condition::OdeStarB).verdict, Verdict::Violated);
        assert_eq!(run("t^0.5", Condition::Osgood).verdict, Verdict::Violated);
    }

    #[test]
    fn holder_power_violates() {
        assert_eq!(run("t^0.8", Condition::OdeStar).verdict, Verdict::Violated);
        assert_eq!(run("t^0.8", Condition::Osgood).verdict, Verdict::Violated);
    }

    #[test]
    fn t_log_satisfies_integral_condition() {
        // w = t |ln t|: I/eps ~ (eps/2)|ln eps| and the exponent is
        // |ln eps|/2 + 1/4, so Q ~ sqrt(eps) |ln eps| -> 0.
        let v = run("t*abs(ln(t))", Condition::OdeStar);
        assert_eq!(v.verdict, Verdict::Satisfied, "{}", v.rationale);
    }

    #[test]
    fn t_log_direct_quantity_diverges_slowly() {
        // The displayed pointwise quantity is w e^{w/t} = |ln t|, which
        // grows without bound; the fitted trend classifies this as
        // violated even though the integral condition is satisfied.
        let v = run("t*abs(ln(t))", Condition::OdeStarB);
        for row in &v.rows {
            let want = -row.epsilon.ln();
            let got = row.quantity.unwrap();
            assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
        }
        assert_eq!(v.verdict, Verdict::Violated, "{}", v.rationale);
    }

    #[test]
    fn t_log_squared_violates() {
        let w = "t*abs(ln(t))^2";
        assert_eq!(run(w, Condition::OdeStar).verdict, Verdict::Violated);
        assert_eq!(run(w, Condition::OdeStarB).verdict, Verdict::Violated);
        assert_eq!(run(w, Condition::Osgood).verdict, Verdict::Violated);
    }

    #[test]
    fn t_log_osgood_is_inconclusive() {
        // int dt/(t|ln t|) diverges like ln ln, which eight decades cannot
        // distinguish from a convergent tail; the verdict stays humble.
        let v = run("t*abs(ln(t))", Condition::Osgood);
        assert_eq!(v.verdict, Verdict::Inconclusive, "{}", v.rationale);
    }

    #[test]
    fn star_conditions_agree_on_battery() {
        // For each increasing analytic modulus here the two vanishing-limit
        // conditions give the same verdict.
        for (w, want) in [
            ("t", Verdict::Satisfied),
            ("2*t", Verdict::Satisfied),
            ("t^0.5", Verdict::Violated),
            ("t^0.8", Verdict::Violated),
            ("t*abs(ln(t))^2", Verdict::Violated),
        ] {
            let star = run(w, Condition::OdeStar).verdict;
            let starb = run(w, Condition::OdeStarB).verdict;
            assert_eq!(star, want, "{w}");
            assert_eq!(starb, want, "{w}");
        }
    }

    #[test]
    fn quantity_monotone_under_domination() {
        // w1 <= w2 pointwise implies the integral-condition quantity of w1
        // is no larger at each scale.
        let w1 = Modulus::parse("0.5*t").unwrap();
        let w2 = Modulus::parse("t").unwrap();
        let v1 = check(&w1, Condition::OdeStar, &schedule()).unwrap();
        let v2 = check(&w2, Condition::OdeStar, &schedule()).unwrap();
        for (r1, r2) in v1.rows.iter().zip(v2.rows.iter()) {
            assert!(r1.log_quantity <= r2.log_quantity + 1e-12);
        }
    }

    #[test]
    fn overflowing_quantity_reported_in_log_space() {
        let v = run("t^0.5", Condition::OdeStarB);
        let last = v.rows.last().unwrap();
        // w/t = t^{-1/2} = 1e4 at 1e-8; the raw quantity overflows.
        assert!(last.quantity.is_none());
        assert!(last.log_quantity > 9000.0);
    }

    #[test]
    fn non_positive_modulus_rejected() {
        let w = Modulus::parse("t - 0.05").unwrap();
        assert!(matches!(
            check(&w, Condition::OdeStar, &schedule()),
            Err(Error::NonPositiveModulus { .. })
        ));
    }

    #[test]
    fn short_schedule_rejected() {
        let w = Modulus::parse("t").unwrap();
        assert!(matches!(
            check(&w, Condition::OdeStar, &[0.1, 0.01, 0.001]),
            Err(Error::InvalidSchedule(_))
        ));
    }

    #[test]
    fn empirical_modulus_accepted() {
        let samples: Vec<(f64, f64)> = schedule().iter().map(|&t| (t, t)).collect();
        let w = Modulus::Empirical(samples);
        let v = check(&w, Condition::OdeStar, &schedule()).unwrap();
        assert_eq!(v.verdict, Verdict::Satisfied);
    }
}
