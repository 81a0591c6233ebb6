//! Involutivity-defect functionals for approximating 1-form sequences and
//! sequence-level certification of (uniform) asymptotic involutivity, plain
//! and averaged.
//!
//! Verdicts are numerical evidence about a finite schedule, not proofs: a
//! sequence is called "decreasing" when the last three defect values
//! strictly decrease and the fitted log-slope against the index is below
//! -0.1. The output notes record the interpretation choices.

use crate::chart::{Grid, Point, ScalarField};
use crate::error::{Error, Result};
use crate::flow::averaged_profile;
use crate::forms::{exterior_derivative, sup_norm, wedge13, OneForm};
use crate::frames::canonical_frame;
use crate::mollify::{lsq_slope, mollify, MollifierSchedule};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MollifiedFromTarget,
    UserSupplied,
}

/// An indexed family of differentiable 1-forms approximating a continuous
/// target, with a strictly decreasing scale schedule.
#[derive(Debug, Clone)]
pub struct ApproxSequence {
    pub target: OneForm,
    pub approximants: Vec<(f64, OneForm)>,
    pub provenance: Provenance,
}

impl ApproxSequence {
    pub fn new(
        target: OneForm,
        approximants: Vec<(f64, OneForm)>,
        provenance: Provenance,
    ) -> Result<ApproxSequence> {
        if approximants.is_empty() {
            return Err(Error::InvalidSchedule("no approximants".into()));
        }
        for w in approximants.windows(2) {
            if !(w[1].0 < w[0].0) {
                return Err(Error::InvalidSchedule(
                    "approximant scales must strictly decrease".into(),
                ));
            }
        }
        for (_, form) in &approximants {
            for c in form.coeffs() {
                if !c.smoothness.differentiable() {
                    return Err(Error::SmoothnessTag {
                        tag: c.smoothness.tag().into(),
                    });
                }
            }
        }
        Ok(ApproxSequence {
            target,
            approximants,
            provenance,
        })
    }

    /// Build the sequence by mollifying each coefficient of the target at
    /// every scale of the schedule.
    pub fn mollified(target: OneForm, schedule: &MollifierSchedule) -> Result<ApproxSequence> {
        let mut approximants = Vec::with_capacity(schedule.scales.len());
        for &eps in &schedule.scales {
            let coeffs: Vec<ScalarField> = target
                .coeffs()
                .iter()
                .map(|c| mollify(c, eps))
                .collect::<Result<_>>()?;
            approximants.push((eps, OneForm::new(target.chart, coeffs)?));
        }
        ApproxSequence::new(target, approximants, Provenance::MollifiedFromTarget)
    }

    pub fn len(&self) -> usize {
        self.approximants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.approximants.is_empty()
    }
}

/// Pointwise Euclidean norm of (eta_k - eta) at a point.
fn diff_norm(etak: &OneForm, eta: &OneForm, p: &Point) -> Result<f64> {
    let a = etak.eval(p)?;
    let b = eta.eval(p)?;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn sup_diff_norm(etak: &OneForm, eta: &OneForm, region: &Grid) -> Result<f64> {
    use rayon::prelude::*;
    let vals: Vec<f64> = (0..region.len())
        .into_par_iter()
        .map(|i| diff_norm(etak, eta, &region.node(i)))
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct DefectRow {
    pub scale: f64,
    /// sup |eta_k - eta| over the region.
    pub sup_diff: f64,
    /// sup |d eta_k| over the region.
    pub sup_d: f64,
    /// sup |eta_k ^ d eta_k| over the region.
    pub sup_wedge: f64,
    /// sup_wedge * exp(sup_d).
    pub defect: f64,
    /// sup_diff * exp(sup_d).
    pub uniform_defect: f64,
}

/// The two products of the plain definition, composed from region sups.
pub fn plain_defects(seq: &ApproxSequence, region: &Grid, h: f64) -> Result<Vec<DefectRow>> {
    if !region.within_interior(&seq.target.chart) {
        return Err(Error::invalid(
            "plain_defects",
            "region must lie within the chart margins",
        ));
    }
    seq.approximants
        .iter()
        .map(|(scale, etak)| {
            let deta = exterior_derivative(etak, h)?;
            let wedge = wedge13(etak, &deta)?;
            let sup_d = sup_norm(&deta, region)?.value;
            let sup_wedge = sup_norm(&wedge, region)?.value;
            let sup_diff = sup_diff_norm(etak, &seq.target, region)?;
            Ok(DefectRow {
                scale: *scale,
                sup_diff,
                sup_d,
                sup_wedge,
                defect: sup_wedge * sup_d.exp(),
                uniform_defect: sup_diff * sup_d.exp(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AveragedRow {
    pub scale: f64,
    /// sup over (x, t) of |eta_k ^ d eta_k|_x * exp(davg(x, t)).
    pub defect: f64,
    /// sup over (x, t) of |eta_k - eta|_x * exp(davg(x, t)).
    pub uniform_defect: f64,
    /// sup over (x, t) of the signed averaged quantity itself.
    pub sup_davg: f64,
}

/// Averaged defects: pointwise products scanned over region x [-t0, t0]
/// with 9 equispaced t samples (endpoints and 0 included).
pub fn averaged_defects(
    seq: &ApproxSequence,
    region: &Grid,
    t0: f64,
    h: f64,
    step: f64,
) -> Result<Vec<AveragedRow>> {
    if !(t0 > 0.0) {
        return Err(Error::invalid("averaged_defects", "t0 must be positive"));
    }
    if !region.within_interior(&seq.target.chart) {
        return Err(Error::invalid(
            "averaged_defects",
            "region must lie within the chart margins",
        ));
    }
    let t_samples: Vec<f64> = (0..9).map(|i| -t0 + t0 * i as f64 / 4.0).collect();
    seq.approximants
        .iter()
        .map(|(scale, etak)| {
            let deta = exterior_derivative(etak, h)?;
            let wedge = wedge13(etak, &deta)?;
            let frame = canonical_frame(etak)?;
            use rayon::prelude::*;
            let rows: Vec<(f64, f64, f64)> = (0..region.len())
                .into_par_iter()
                .map(|i| -> Result<(f64, f64, f64)> {
                    let x = region.node(i);
                    let wedge_x = wedge.norm_at(&x)?;
                    let diff_x = diff_norm(etak, &seq.target, &x)?;
                    let profile = averaged_profile(&deta, &frame, x, t0, step, &t_samples)?;
                    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
                    for (_, avg) in profile {
                        let e = avg.dmax.exp();
                        best.0 = best.0.max(wedge_x * e);
                        best.1 = best.1.max(diff_x * e);
                        best.2 = best.2.max(avg.dmax);
                    }
                    Ok(best)
                })
                .collect::<Result<_>>()?;
            let mut defect = 0.0f64;
            let mut uniform = 0.0f64;
            let mut sup_davg = f64::NEG_INFINITY;
            for (d, u, m) in rows {
                defect = defect.max(d);
                uniform = uniform.max(u);
                sup_davg = sup_davg.max(m);
            }
            Ok(AveragedRow {
                scale: *scale,
                defect,
                uniform_defect: uniform,
                sup_davg,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    NonDecreasing,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendFit {
    pub verdict: Trend,
    /// Fitted slope of ln(defect) against the index k.
    pub slope: Option<f64>,
    pub identically_zero: bool,
}

/// Values below this absolute floor count as identically zero.
const ZERO_TOL: f64 = 1e-12;

/// Trend of a defect series: "decreasing" needs the last three values
/// strictly decreasing and fitted log-slope < -0.1; an identically zero
/// series is decreasing trivially and flagged.
pub fn fit_trend(values: &[f64]) -> TrendFit {
    if values.iter().all(|v| v.abs() <= ZERO_TOL) {
        return TrendFit {
            verdict: Trend::Decreasing,
            slope: None,
            identically_zero: true,
        };
    }
    let idx: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let logs: Vec<f64> = values.iter().map(|v| v.max(1e-300).ln()).collect();
    let slope = lsq_slope(&idx, &logs);
    let n = values.len();
    let verdict = if n >= 3 {
        let last3 = &values[n - 3..];
        if last3[0] > last3[1] && last3[1] > last3[2] && slope < -0.1 {
            Trend::Decreasing
        } else if last3[0] <= last3[1] && last3[1] <= last3[2] {
            Trend::NonDecreasing
        } else {
            Trend::Inconclusive
        }
    } else {
        Trend::Inconclusive
    };
    TrendFit {
        verdict,
        slope: Some(slope),
        identically_zero: false,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub t0: f64,
    pub rows: Vec<CertRow>,
    pub plain: TrendFit,
    pub uniform: TrendFit,
    pub averaged: TrendFit,
    pub averaged_uniform: TrendFit,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertRow {
    pub scale: f64,
    pub sup_diff: f64,
    pub sup_d: f64,
    pub sup_wedge: f64,
    pub plain_defect: f64,
    pub uniform_defect: f64,
    pub averaged_defect: f64,
    pub averaged_uniform_defect: f64,
    pub sup_davg: f64,
}

impl CertificationReport {
    pub fn all_decreasing(&self) -> bool {
        [&self.plain, &self.uniform, &self.averaged, &self.averaged_uniform]
            .iter()
            .all(|t| t.verdict == Trend::Decreasing)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
            "scale",
            "|ek-e|",
            "|dek|",
            "|ek^dek|",
            "plain",
            "uniform",
            "averaged",
            "avg-unif"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:>10.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}\n",
                r.scale,
                r.sup_diff,
                r.sup_d,
                r.sup_wedge,
                r.plain_defect,
                r.uniform_defect,
                r.averaged_defect,
                r.averaged_uniform_defect
            ));
        }
        let label = |t: &TrendFit| {
            let mut s = format!("{:?}", t.verdict).to_lowercase();
            if t.identically_zero {
                s.push_str(" (identically zero)");
            }
            if let Some(sl) = t.slope {
                s.push_str(&format!(" [slope {sl:.3}]"));
            }
            s
        };
        out.push_str(&format!("plain:            {}\n", label(&self.plain)));
        out.push_str(&format!("uniform:          {}\n", label(&self.uniform)));
        out.push_str(&format!("averaged:         {}\n", label(&self.averaged)));
        out.push_str(&format!("averaged uniform: {}\n", label(&self.averaged_uniform)));
        out
    }
}

/// Assemble both defect families and issue the four trend verdicts.
/// `t0` is capped at min(1, chart margin) so the averaged defects are
/// comparable with the plain ones.
pub fn certify(seq: &ApproxSequence, region: &Grid, t0: f64, h: f64, step: f64) -> Result<CertificationReport> {
    if seq.len() < 4 {
        return Err(Error::InvalidSchedule(format!(
            "certification needs at least 4 approximants, got {}",
            seq.len()
        )));
    }
    let chart = seq.target.chart;
    let t0_capped = t0.min(1.0).min(chart.min_margin());
    if !(t0_capped > 0.0) {
        return Err(Error::invalid("certify", "chart margin leaves no room for flows"));
    }
    let plain = plain_defects(seq, region, h)?;
    let averaged = averaged_defects(seq, region, t0_capped, h, step)?;
    let rows: Vec<CertRow> = plain
        .iter()
        .zip(averaged.iter())
        .map(|(p, a)| CertRow {
            scale: p.scale,
            sup_diff: p.sup_diff,
            sup_d: p.sup_d,
            sup_wedge: p.sup_wedge,
            plain_defect: p.defect,
            uniform_defect: p.uniform_defect,
            averaged_defect: a.defect,
            averaged_uniform_defect: a.uniform_defect,
            sup_davg: a.sup_davg,
        })
        .collect();
    let collect = |f: fn(&CertRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let mut notes = vec![
        "verdicts are numerical evidence along a finite schedule, not proofs".to_string(),
        "averaged defects take the sup over the sampled region; the defining condition is pointwise in x".to_string(),
        "exponents use the signed max of the averaged components, as defined".to_string(),
    ];
    if (t0_capped - t0).abs() > 1e-15 {
        notes.push(format!("t0 capped at {t0_capped} (min of 1 and the chart margin)"));
    }
    Ok(CertificationReport {
        schema_version: crate::SCHEMA_VERSION,
        provenance: seq.provenance,
        t0: t0_capped,
        plain: fit_trend(&collect(|r| r.plain_defect)),
        uniform: fit_trend(&collect(|r| r.uniform_defect)),
        averaged: fit_trend(&collect(|r| r.averaged_defect)),
        averaged_uniform: fit_trend(&collect(|r| r.averaged_uniform_defect)),
        rows,
        notes,
    })
}
