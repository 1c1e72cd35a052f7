//! Closed curves interpolated through collocation nodes by trigonometric
//! polynomials.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use super::Point;
use crate::error::{EmiError, Result};

/// Smooth 1-periodic parametrization `γ: [0,1) → ℝ²` interpolating the
/// collocation nodes `x_j = γ(t_j)` at `t_j = t₀ + j/M`.
///
/// Internally the curve is stored in the angular parameter `τ = 2π(t − t₀)`
/// so that the nodes sit at `τ_j = 2πj/M`, which is what the boundary
/// quadratures consume. Node positions are stored verbatim: evaluating at a
/// node returns the caller's coordinates bit-exactly.
#[derive(Clone, Debug)]
pub struct ParamCurve {
    nodes: Vec<Point>,
    t0: f64,
    /// Real trigonometric coefficients per coordinate: `a₀, (a_m, b_m)_{m<n}, a_n`.
    coeffs: [TrigCoeffs; 2],
    /// dγ/dτ at the nodes.
    d1: Vec<Point>,
    /// d²γ/dτ² at the nodes.
    d2: Vec<Point>,
    reversed: bool,
}

#[derive(Clone, Debug)]
struct TrigCoeffs {
    a0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    nyquist: f64,
}

impl TrigCoeffs {
    fn eval(&self, tau: f64) -> (f64, f64, f64) {
        let n = self.a.len() + 1;
        let mut v = self.a0;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (i, (&am, &bm)) in self.a.iter().zip(&self.b).enumerate() {
            let m = (i + 1) as f64;
            let (s, c) = (m * tau).sin_cos();
            v += am * c + bm * s;
            d1 += m * (bm * c - am * s);
            d2 -= m * m * (am * c + bm * s);
        }
        let nf = n as f64;
        let (s, c) = (nf * tau).sin_cos();
        v += self.nyquist * c;
        d1 -= nf * self.nyquist * s;
        d2 -= nf * nf * self.nyquist * c;
        (v, d1, d2)
    }
}

/// Spectrum, first and second derivative at the nodes of one coordinate.
fn spectral_data(values: &[f64], planner: &mut FftPlanner<f64>) -> (TrigCoeffs, Vec<f64>, Vec<f64>) {
    let m = values.len();
    let n = m / 2;
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut spec: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut spec);

    let scale = 1.0 / m as f64;
    let coeffs = TrigCoeffs {
        a0: spec[0].re * scale,
        a: (1..n).map(|k| 2.0 * spec[k].re * scale).collect(),
        b: (1..n).map(|k| -2.0 * spec[k].im * scale).collect(),
        nyquist: spec[n].re * scale,
    };

    let freq = |k: usize| -> f64 {
        if k < n {
            k as f64
        } else {
            k as f64 - m as f64
        }
    };
    let mut d1: Vec<Complex64> = spec
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if k == n {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::new(0.0, freq(k))
            }
        })
        .collect();
    let mut d2: Vec<Complex64> = spec
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let f = if k == n { n as f64 } else { freq(k) };
            c * (-f * f)
        })
        .collect();
    inv.process(&mut d1);
    inv.process(&mut d2);
    (
        coeffs,
        d1.iter().map(|c| c.re * scale).collect(),
        d2.iter().map(|c| c.re * scale).collect(),
    )
}

/// Twice the signed area of the polygon through `pts` (shoelace formula).
pub(crate) fn signed_area(pts: &[Point]) -> f64 {
    let m = pts.len();
    (0..m)
        .map(|j| {
            let p = pts[j];
            let q = pts[(j + 1) % m];
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        * 0.5
}

impl ParamCurve {
    /// Fourier interpolation through `nodes`, given in counterclockwise
    /// order. Clockwise input is reversed (the first node is kept first) and
    /// flagged by [`ParamCurve::was_reversed`].
    ///
    /// `params`, when given, must be `t_j = t₀ + j/M` for some offset `t₀`:
    /// the boundary quadratures are built on equispaced parameters.
    pub fn fourier_closed_curve(nodes: &[Point], params: Option<&[f64]>) -> Result<Self> {
        let m = nodes.len();
        if m < 4 {
            return Err(EmiError::Geometry(format!(
                "closed curve needs at least 4 nodes, got {m}"
            )));
        }
        if m % 2 != 0 {
            return Err(EmiError::Geometry(format!(
                "closed curve needs an even node count, got {m}"
            )));
        }
        if let Some(i) = nodes.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(EmiError::NonFinite {
                what: "curve node".into(),
                index: i,
            });
        }
        let scale = nodes.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
        for j in 0..m {
            let d = (nodes[(j + 1) % m] - nodes[j]).norm();
            if d <= 1e-14 * scale {
                return Err(EmiError::Geometry(format!(
                    "duplicate consecutive nodes at index {j}"
                )));
            }
        }
        let t0 = match params {
            None => 0.0,
            Some(t) => {
                if t.len() != m {
                    return Err(EmiError::Dimension(format!(
                        "{} parameters for {m} nodes",
                        t.len()
                    )));
                }
                for (j, &tj) in t.iter().enumerate() {
                    let expected = t[0] + j as f64 / m as f64;
                    if (tj - expected).abs() > 1e-12 {
                        return Err(EmiError::Geometry(format!(
                            "parameters must be equispaced t0 + j/M; t[{j}] = {tj}"
                        )));
                    }
                }
                if !(0.0..1.0).contains(&t[0]) {
                    return Err(EmiError::Geometry("t0 must lie in [0, 1)".into()));
                }
                t[0]
            }
        };

        let area = signed_area(nodes);
        if area == 0.0 {
            return Err(EmiError::Geometry("degenerate curve with zero area".into()));
        }
        let reversed = area < 0.0;
        let pts: Vec<Point> = if reversed {
            std::iter::once(nodes[0])
                .chain(nodes[1..].iter().rev().copied())
                .collect()
        } else {
            nodes.to_vec()
        };

        let mut planner = FftPlanner::new();
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
        let (cx, dx1, dx2) = spectral_data(&xs, &mut planner);
        let (cy, dy1, dy2) = spectral_data(&ys, &mut planner);
        let d1: Vec<Point> = dx1.iter().zip(&dy1).map(|(&x, &y)| Point::new(x, y)).collect();
        let d2: Vec<Point> = dx2.iter().zip(&dy2).map(|(&x, &y)| Point::new(x, y)).collect();

        let speed_scale = d1.iter().map(|d| d.norm()).fold(0.0, f64::max);
        if let Some(j) = d1.iter().position(|d| d.norm() <= 1e-12 * speed_scale) {
            return Err(EmiError::Geometry(format!(
                "degenerate parametrization: vanishing speed at node {j}"
            )));
        }

        Ok(Self {
            nodes: pts,
            t0,
            coeffs: [cx, cy],
            d1,
            d2,
            reversed,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> Point {
        self.nodes[j]
    }

    /// Parameter value `t_j` of node `j`.
    pub fn param(&self, j: usize) -> f64 {
        self.t0 + j as f64 / self.len() as f64
    }

    pub fn was_reversed(&self) -> bool {
        self.reversed
    }

    fn tau(&self, t: f64) -> f64 {
        2.0 * PI * (t - self.t0)
    }

    /// γ(t).
    pub fn eval(&self, t: f64) -> Point {
        let tau = self.tau(t);
        Point::new(self.coeffs[0].eval(tau).0, self.coeffs[1].eval(tau).0)
    }

    /// γ'(t) with respect to `t ∈ [0, 1)`.
    pub fn deriv(&self, t: f64) -> Point {
        let tau = self.tau(t);
        Point::new(self.coeffs[0].eval(tau).1, self.coeffs[1].eval(tau).1) * (2.0 * PI)
    }

    /// ‖γ'(t)‖.
    pub fn speed(&self, t: f64) -> f64 {
        self.deriv(t).norm()
    }

    /// Unit outward normal (tangent rotated clockwise) at `t`.
    pub fn normal(&self, t: f64) -> Point {
        let d = self.deriv(t);
        Point::new(d.y, -d.x) / d.norm()
    }

    /// |dγ/dτ| at node `j`.
    pub fn speed_tau(&self, j: usize) -> f64 {
        self.d1[j].norm()
    }

    /// Unit outward normal at node `j`.
    pub fn node_normal(&self, j: usize) -> Point {
        let d = self.d1[j];
        Point::new(d.y, -d.x) / d.norm()
    }

    /// Signed curvature at node `j` (positive on convex parts).
    pub fn node_curvature(&self, j: usize) -> f64 {
        let d = self.d1[j];
        let dd = self.d2[j];
        (d.x * dd.y - d.y * dd.x) / d.norm().powi(3)
    }

    /// Trapezoidal weights `(2π/M)·|dγ/dτ(τ_j)|` for `∫_Γ f ds`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let h = 2.0 * PI / self.len() as f64;
        (0..self.len()).map(|j| h * self.speed_tau(j)).collect()
    }

    /// Length of the interpolated curve.
    pub fn length(&self) -> f64 {
        self.quadrature_weights().iter().sum()
    }

    /// Same curve with all coordinates multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        let sc = |c: &TrigCoeffs| TrigCoeffs {
            a0: c.a0 * s,
            a: c.a.iter().map(|v| v * s).collect(),
            b: c.b.iter().map(|v| v * s).collect(),
            nyquist: c.nyquist * s,
        };
        Self {
            nodes: self.nodes.iter().map(|p| p * s).collect(),
            t0: self.t0,
            coeffs: [sc(&self.coeffs[0]), sc(&self.coeffs[1])],
            d1: self.d1.iter().map(|p| p * s).collect(),
            d2: self.d2.iter().map(|p| p * s).collect(),
            reversed: self.reversed,
        }
    }

    /// Ratio of the largest to the smallest chord between consecutive nodes.
    pub fn spacing_ratio(&self) -> f64 {
        let m = self.len();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for j in 0..m {
            let d = (self.nodes[(j + 1) % m] - self.nodes[j]).norm();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi / lo
    }

    /// Signed area enclosed by the interpolant, sampled at `samples` points.
    pub fn sampled_area(&self, samples: usize) -> f64 {
        let pts: Vec<Point> = (0..samples)
            .map(|k| self.eval(self.t0 + k as f64 / samples as f64))
            .collect();
        signed_area(&pts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(m: usize, r: f64) -> Vec<Point> {
        (0..m)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / m as f64;
                Point::new(r * th.cos(), r * th.sin())
            })
            .collect()
    }

    #[test]
    fn four_point_diamond_interpolates() {
        let pts = vec![
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(-1.0, 0.0),
            Point::new(0.0, -1.0),
        ];
        let t = [0.0, 0.25, 0.5, 0.75];
        let c = ParamCurve::fourier_closed_curve(&pts, Some(&t)).unwrap();
        assert!((c.eval(0.0) - Point::new(1.0, 0.0)).norm() < 1e-15);
        assert!((c.eval(0.25) - Point::new(0.0, 1.0)).norm() < 1e-15);
        assert!(!c.was_reversed());
    }

    #[test]
    fn circle_radius_two_is_reproduced() {
        let c = ParamCurve::fourier_closed_curve(&circle(64, 2.0), None).unwrap();
        let worst = (0..1000)
            .map(|k| (c.eval(k as f64 / 1000.0).norm() - 2.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
        // exact circle: |γ'(t)| = 2π·2, curvature 1/2
        for j in 0..64 {
            assert!((c.speed_tau(j) - 2.0).abs() < 1e-12);
            assert!((c.node_curvature(j) - 0.5).abs() < 1e-12);
            let n = c.node_normal(j);
            assert!((n - c.node(j) / 2.0).norm() < 1e-12);
        }
        assert!((c.length() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn square_nodes_are_interpolated() {
        // 8 nodes per side of the unit square, corners excluded
        let mut pts = Vec::new();
        let side = |a: Point, b: Point, pts: &mut Vec<Point>| {
            for k in 0..8 {
                let s = (k as f64 + 0.5) / 8.0;
                pts.push(a + (b - a) * s);
            }
        };
        side(Point::new(0.0, 0.0), Point::new(1.0, 0.0), &mut pts);
        side(Point::new(1.0, 0.0), Point::new(1.0, 1.0), &mut pts);
        side(Point::new(1.0, 1.0), Point::new(0.0, 1.0), &mut pts);
        side(Point::new(0.0, 1.0), Point::new(0.0, 0.0), &mut pts);
        let c = ParamCurve::fourier_closed_curve(&pts, None).unwrap();
        for (j, p) in pts.iter().enumerate() {
            assert!((c.eval(c.param(j)) - p).norm() < 1e-12);
        }
        assert!(c.sampled_area(320) > 0.0);
    }

    #[test]
    fn clockwise_input_is_reversed() {
        let mut pts = circle(16, 1.0);
        pts[1..].reverse();
        pts.swap(0, 0);
        let cw: Vec<Point> = std::iter::once(pts[0]).chain(pts[1..].iter().copied()).collect();
        let c = ParamCurve::fourier_closed_curve(&cw, None).unwrap();
        assert!(c.was_reversed());
        assert!(c.sampled_area(160) > 0.0);
        assert_eq!(c.node(0), cw[0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ParamCurve::fourier_closed_curve(&circle(7, 1.0), None).is_err());
        assert!(ParamCurve::fourier_closed_curve(&circle(2, 1.0), None).is_err());
        let mut dup = circle(8, 1.0);
        dup[3] = dup[2];
        assert!(ParamCurve::fourier_closed_curve(&dup, None).is_err());
        let t = [0.0, 0.1, 0.5, 0.75];
        assert!(ParamCurve::fourier_closed_curve(&circle(4, 1.0), Some(&t)).is_err());
    }

    #[test]
    fn scaling_scales_geometry() {
        let c = ParamCurve::fourier_closed_curve(&circle(32, 1.0), None).unwrap();
        let s = c.scaled(2.0);
        assert!((s.length() - 2.0 * c.length()).abs() < 1e-12);
        assert!((s.node_curvature(3) - 0.5).abs() < 1e-12);
    }
}
