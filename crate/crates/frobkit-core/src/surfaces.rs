//! Integral-surface synthesis from composed frame flows, tangency
//! diagnostics, and convergence reports across approximant sequences.
//!
//! A mesh node is e^{s1 X}(e^{s2 Y}(x)); the composition order is fixed
//! (Y first, then X) and the discrepancy under swapping the order is
//! reported as a holonomy diagnostic - it vanishes exactly when the frame
//! fields commute.

use crate::chart::{Grid, Point};
use crate::error::{Error, Result};
use crate::flow::{flow, FrameAxis};
use crate::forms::OneForm;
use crate::frames::CanonicalFrame;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub base: Point,
    pub eps: f64,
    pub n1: usize,
    pub n2: usize,
    /// Parameter values along the X and Y flow directions.
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    /// Row-major points: index i * n2 + j.
    pub points: Vec<Point>,
    /// Per-node |sin| tangency angles, filled by [`tangency_residual`].
    pub angles: Option<Vec<f64>>,
}

impl SurfaceMesh {
    pub fn point(&self, i: usize, j: usize) -> Point {
        self.points[i * self.n2 + j]
    }

    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "i,j,s1,s2,x1,x2,x3,angle")?;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let p = self.point(i, j);
                let angle = self
                    .angles
                    .as_ref()
                    .map(|a| a[i * self.n2 + j])
                    .unwrap_or(f64::NAN);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    i, j, self.s1[i], self.s2[j], p[0], p[1], p[2], angle
                )?;
            }
        }
        Ok(())
    }
}

fn param_values(eps: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -eps + 2.0 * eps * i as f64 / (n - 1) as f64)
        .collect()
}

/// Mesh node (i, j) = flow_X(flow_Y(x, s2(j)), s1(i)). Rows are built
/// cumulatively along the X direction from the central column outward; on
/// 2-D charts the mesh degenerates to a curve in s1 (n2 = 1).
pub fn synthesize(
    frame: &CanonicalFrame,
    x: Point,
    eps: f64,
    resolution: (usize, usize),
    step: f64,
) -> Result<SurfaceMesh> {
    let (n1, n2) = resolution;
    let dim = frame.chart.dim;
    if n1 < 2 || (dim == 3 && n2 < 2) {
        return Err(Error::InvalidGrid("mesh needs at least 2 nodes per axis".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("synthesize", "parameter range must be positive"));
    }
    let n2 = if dim == 2 { 1 } else { n2 };
    let s1 = param_values(eps, n1);
    let s2 = if dim == 2 {
        vec![0.0]
    } else {
        param_values(eps, n2)
    };
    let mut points = vec![[0.0f64; 3]; n1 * n2];
    use rayon::prelude::*;
    let columns: Vec<Vec<Point>> = (0..n2)
        .into_par_iter()
        .map(|j| -> Result<Vec<Point>> {
            let base_j = if dim == 2 {
                x
            } else {
                flow(frame, FrameAxis::Y, x, s2[j], step).map_err(|e| column_err(e, 0, j))?
            };
            // March outward from s1 = 0 in both directions so errors do not
            // accumulate across the whole range twice.
            let mut col = vec![[0.0f64; 3]; n1];
            let center = s1.iter().position(|&v| v >= 0.0).unwrap_or(0);
            let mut cur = base_j;
            let mut prev_s = 0.0;
            for i in (0..s1.len()).skip(center) {
                cur = flow(frame, FrameAxis::X, cur, s1[i] - prev_s, step)
                    .map_err(|e| column_err(e, i, j))?;
                prev_s = s1[i];
                col[i] = cur;
            }
            cur = base_j;
            prev_s = 0.0;
            for i in (0..center).rev() {
                cur = flow(frame, FrameAxis::X, cur, s1[i] - prev_s, step)
                    .map_err(|e| column_err(e, i, j))?;
                prev_s = s1[i];
                col[i] = cur;
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;
    for (j, col) in columns.into_iter().enumerate() {
        for (i, p) in col.into_iter().enumerate() {
            points[i * n2 + j] = p;
        }
    }
    // The center node is the base point itself when 0 is a mesh parameter.
    if n1 % 2 == 1 && (dim == 2 || n2 % 2 == 1) {
        points[(n1 / 2) * n2 + n2 / 2] = x;
    }
    Ok(SurfaceMesh {
        base: x,
        eps,
        n1,
        n2,
        s1,
        s2,
        points,
        angles: None,
    })
}

fn column_err(e: Error, i: usize, j: usize) -> Error {
    match e {
        Error::FlowExit { time, point } => Error::Invalid {
            context: "synthesize".into(),
            message: format!("flow left the chart at node ({i}, {j}), time {time}, point {point:?}"),
        },
        other => other,
    }
}

/// Build a mesh directly from a graph z = f(x, y) sampled on a 2-D grid.
pub fn mesh_from_graph(grid: &Grid, values: &[f64]) -> Result<SurfaceMesh> {
    if grid.dim != 2 {
        return Err(Error::invalid("mesh_from_graph", "needs a 2-D grid"));
    }
    if values.len() != grid.len() {
        return Err(Error::MeshMismatch(format!(
            "expected {} values, got {}",
            grid.len(),
            values.len()
        )));
    }
    let n1 = grid.counts[0];
    let n2 = grid.counts[1];
    let mut points = Vec::with_capacity(values.len());
    for i in 0..n1 {
        for j in 0..n2 {
            let x = grid.axis_coord(0, i);
            let y = grid.axis_coord(1, j);
            points.push([x, y, values[i * n2 + j]]);
        }
    }
    Ok(SurfaceMesh {
        base: points[(n1 / 2) * n2 + n2 / 2],
        eps: 0.0,
        n1,
        n2,
        s1: (0..n1).map(|i| grid.axis_coord(0, i)).collect(),
        s2: (0..n2).map(|j| grid.axis_coord(1, j)).collect(),
        points,
        angles: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TangencyReport {
    /// |sin| of the angle between the finite-difference tangent plane's
    /// normal and the form's coefficient covector, per node (NaN on the
    /// boundary ring where no centered stencil exists).
    pub angles: Vec<f64>,
    pub sup: f64,
    pub sup_at: (usize, usize),
    /// Nodes with a near-singular tangent parallelogram.
    pub degenerate: Vec<(usize, usize)>,
}

/// Tangency of a mesh against a reference 1-form. Tangent vectors come
/// from central differences of the mesh map over interior nodes.
pub fn tangency_residual(mesh: &SurfaceMesh, delta: &OneForm) -> Result<TangencyReport> {
    if delta.chart.dim != 3 {
        return Err(Error::invalid("tangency_residual", "needs a 3-dimensional form"));
    }
    if mesh.n1 < 3 || mesh.n2 < 3 {
        return Err(Error::MeshMismatch(
            "tangency needs interior nodes (at least 3 per axis)".into(),
        ));
    }
    let mut angles = vec![f64::NAN; mesh.n1 * mesh.n2];
    let mut sup = 0.0f64;
    let mut sup_at = (1, 1);
    let mut degenerate = Vec::new();
    for i in 1..mesh.n1 - 1 {
        for j in 1..mesh.n2 - 1 {
            let t1 = sub(mesh.point(i + 1, j), mesh.point(i - 1, j));
            let t2 = sub(mesh.point(i, j + 1), mesh.point(i, j - 1));
            let normal = cross(t1, t2);
            let nn = norm(normal);
            if nn <= 1e-12 * norm(t1) * norm(t2) {
                degenerate.push((i, j));
                continue;
            }
            let p = mesh.point(i, j);
            let cov = delta.eval(&p)?;
            let cov = [cov[0], cov[1], cov[2]];
            let cn = norm(cov);
            if cn == 0.0 {
                return Err(Error::invalid("tangency_residual", "reference form vanishes"));
            }
            let s = norm(cross(normal, cov)) / (nn * cn);
            angles[i * mesh.n2 + j] = s;
            if s > sup {
                sup = s;
                sup_at = (i, j);
            }
        }
    }
    Ok(TangencyReport {
        angles,
        sup,
        sup_at,
        degenerate,
    })
}

fn sub(a: Point, b: Point) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Sup distance between the Y-then-X mesh and the X-then-Y mesh over a
/// coarse corner probe. Zero for commuting frames.
pub fn order_swap_sup(
    frame: &CanonicalFrame,
    x: Point,
    eps: f64,
    probes: usize,
    step: f64,
) -> Result<f64> {
    let vals = param_values(eps, probes.max(2));
    let mut sup = 0.0f64;
    for &s1 in &vals {
        for &s2 in &vals {
            let yx = flow(frame, FrameAxis::X, flow(frame, FrameAxis::Y, x, s2, step)?, s1, step)?;
            let xy = flow(frame, FrameAxis::Y, flow(frame, FrameAxis::X, x, s1, step)?, s2, step)?;
            sup = sup.max(norm(sub(yx, xy)));
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    /// Sup node distance between consecutive meshes.
    pub successive_sups: Vec<f64>,
    /// Cauchy-like when the last three sups strictly decrease.
    pub cauchy_like: bool,
    /// Tangency of the final mesh against the continuous reference form.
    pub final_tangency_sup: f64,
}

/// Compare per-scale meshes (same base point, ranges, resolution) and test
/// the final mesh's tangency against the reference form.
pub fn convergence_report(meshes: &[SurfaceMesh], reference: &OneForm) -> Result<ConvergenceReport> {
    if meshes.len() < 2 {
        return Err(Error::MeshMismatch("need at least two meshes".into()));
    }
    let first = &meshes[0];
    for m in meshes.iter().skip(1) {
        if m.n1 != first.n1 || m.n2 != first.n2 {
            return Err(Error::MeshMismatch(format!(
                "resolution mismatch: {}x{} vs {}x{}",
                m.n1, m.n2, first.n1, first.n2
            )));
        }
        if norm(sub(m.base, first.base)) > 1e-12 || (m.eps - first.eps).abs() > 1e-12 {
            return Err(Error::MeshMismatch("base point or range mismatch".into()));
        }
    }
    let mut sups = Vec::with_capacity(meshes.len() - 1);
    for pair in meshes.windows(2) {
        let mut sup = 0.0f64;
        for (p, q) in pair[0].points.iter().zip(pair[1].points.iter()) {
            sup = sup.max(norm(sub(*p, *q)));
        }
        sups.push(sup);
    }
    let n = sups.len();
    let cauchy_like = if n >= 3 {
        sups[n - 3] > sups[n - 2] && sups[n - 2] > sups[n - 1]
    } else {
        sups.windows(2).all(|w| w[0] > w[1])
    };
    let final_tangency = tangency_residual(meshes.last().unwrap(), reference)?;
    Ok(ConvergenceReport {
        schema_version: crate::SCHEMA_VERSION,
        successive_sups: sups,
        cauchy_like,
        final_tangency_sup: final_tangency.sup,
    })
}
