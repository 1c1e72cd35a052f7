//! Laplace fundamental solution and collocation matrices of the single- and
//! double-layer operators on closed curves.
//!
//! Densities are represented by their nodal values at the equispaced
//! parameters `τ_j = 2πj/M`; since the trigonometric Lagrange basis is
//! cardinal there, the quadrature rules act on nodal values directly.
//! The logarithmic singularity of the single layer is split off and integrated
//! exactly against trigonometric polynomials; the double-layer kernel is
//! smooth on smooth curves and is handled by the trapezoidal rule with its
//! diagonal limit.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{EmiError, Result};
use crate::geometry::{ParamCurve, Point};

/// `G(x, y) = −ln‖x − y‖ / 2π`.
pub fn greens(x: Point, y: Point) -> Result<f64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(EmiError::CoincidentPoints);
    }
    Ok(-r.ln() / (2.0 * PI))
}

/// `∇_y G(x, y) · n_y = ⟨x − y, n_y⟩ / (2π‖x − y‖²)`.
pub fn greens_normal(x: Point, y: Point, n_y: Point) -> Result<f64> {
    let d = x - y;
    let r2 = d.norm_squared();
    if r2 == 0.0 {
        return Err(EmiError::CoincidentPoints);
    }
    Ok(d.dot(&n_y) / (2.0 * PI * r2))
}

/// Where the layer potentials are collocated.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    /// The source curve's own nodes (self-interaction).
    SourceNodes,
    /// Points away from the source curve.
    Points(&'a [Point]),
}

/// Collocation matrices, one row per target and one column per source node.
#[derive(Clone, Debug)]
pub struct LayerOperators {
    pub v: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub self_interaction: bool,
}

/// Quadrature weights `R(ℓ)` for `∫₀^{2π} ln(4 sin²((t − τ)/2)) f(τ) dτ`
/// with `t − τ = ℓπ/n`, `M = 2n`.
fn log_weights(m: usize) -> Vec<f64> {
    let n = m / 2;
    let nf = n as f64;
    (0..m)
        .map(|l| {
            let mut s = 0.0;
            for k in 1..n {
                s += (k as f64 * l as f64 * PI / nf).cos() / k as f64;
            }
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * PI / nf * s - PI / (nf * nf) * sign
        })
        .collect()
}

fn self_interaction(src: &ParamCurve) -> LayerOperators {
    let m = src.len();
    let h = 2.0 * PI / m as f64;
    let r = log_weights(m);
    let inv4pi = 1.0 / (4.0 * PI);
    let speed: Vec<f64> = (0..m).map(|j| src.speed_tau(j)).collect();
    let normals: Vec<Point> = (0..m).map(|j| src.node_normal(j)).collect();
    let nodes = src.nodes();
    let mut v = DMatrix::zeros(m, m);
    let mut k = DMatrix::zeros(m, m);
    for kk in 0..m {
        let x = nodes[kk];
        for j in 0..m {
            let l = if kk >= j { kk - j } else { j - kk };
            let (hk, kern) = if j == kk {
                (-inv4pi * (speed[j] * speed[j]).ln(), -src.node_curvature(j) * inv4pi)
            } else {
                let d = x - nodes[j];
                let r2 = d.norm_squared();
                let s = ((kk as f64 - j as f64) * PI / m as f64).sin();
                (
                    -inv4pi * (r2 / (4.0 * s * s)).ln(),
                    d.dot(&normals[j]) / (2.0 * PI * r2),
                )
            };
            v[(kk, j)] = (-inv4pi * r[l] + h * hk) * speed[j];
            k[(kk, j)] = h * kern * speed[j];
        }
        // Gauss identity imposed row by row: the double layer of a constant
        // density is exactly −½ on the curve. On smooth curves this changes
        // the curvature diagonal by a spectrally small amount; near corners
        // of an interpolated boundary it removes an O(1) quadrature defect
        // that the inverse single layer would otherwise amplify like M.
        let off: f64 = (0..m).filter(|&j| j != kk).map(|j| k[(kk, j)]).sum();
        k[(kk, kk)] = -0.5 - off;
    }
    LayerOperators {
        v,
        k,
        self_interaction: true,
    }
}

/// Distance from `p` to the node polygon of `curve`.
fn polygon_distance(curve: &ParamCurve, p: Point) -> f64 {
    let pts = curve.nodes();
    let m = pts.len();
    (0..m)
        .map(|j| {
            let a = pts[j];
            let b = pts[(j + 1) % m];
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (p - (a + ab * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Assemble `V` and `K` of `source` collocated at `targets`.
pub fn assemble_layers(source: &ParamCurve, targets: Targets<'_>) -> Result<LayerOperators> {
    let pts = match targets {
        Targets::SourceNodes => return Ok(self_interaction(source)),
        Targets::Points(p) => p,
    };
    let m = source.len();
    let h = 2.0 * PI / m as f64;
    let tol = 1e-10 * source.length();
    let weights: Vec<f64> = (0..m).map(|j| h * source.speed_tau(j)).collect();
    let normals: Vec<Point> = (0..m).map(|j| source.node_normal(j)).collect();
    let nodes = source.nodes();
    let mut v = DMatrix::zeros(pts.len(), m);
    let mut k = DMatrix::zeros(pts.len(), m);
    for (row, &x) in pts.iter().enumerate() {
        if !x.x.is_finite() || !x.y.is_finite() {
            return Err(EmiError::NonFinite {
                what: "target point".into(),
                index: row,
            });
        }
        if polygon_distance(source, x) <= tol {
            return Err(EmiError::TargetOnCurve(row));
        }
        for j in 0..m {
            let d = x - nodes[j];
            let r2 = d.norm_squared();
            v[(row, j)] = -0.25 / PI * r2.ln() * weights[j];
            k[(row, j)] = d.dot(&normals[j]) / (2.0 * PI * r2) * weights[j];
        }
    }
    Ok(LayerOperators {
        v,
        k,
        self_interaction: false,
    })
}

/// Write `row,col,value` lines for every entry of `a`.
pub fn write_matrix_csv<W: std::io::Write>(a: &DMatrix<f64>, mut w: W) -> Result<()> {
    writeln!(w, "row,col,value")?;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            writeln!(w, "{r},{c},{:.17e}", a[(r, c)])?;
        }
    }
    Ok(())
}
