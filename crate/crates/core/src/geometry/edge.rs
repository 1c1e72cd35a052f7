//! Open boundary pieces (segments of the interfaces Γ_ij) and node placement
//! along them.

use std::f64::consts::PI;

use super::Point;
use crate::error::{EmiError, Result};

/// Geometric shape of one boundary piece, traversed from its start to its end.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Line {
        a: Point,
        b: Point,
    },
    /// Counterclockwise arc from `theta0` to `theta1 > theta0`.
    Arc {
        center: Point,
        radius: f64,
        theta0: f64,
        theta1: f64,
    },
    /// Full counterclockwise circle starting at angle 0.
    Circle {
        center: Point,
        radius: f64,
    },
    /// `x = x0 + a·sin(2πk·u)`, `y = y0 + u·(y1 − y0)` for `u ∈ [0, 1]`.
    Sine {
        x0: f64,
        y0: f64,
        y1: f64,
        amplitude: f64,
        k: u32,
    },
}

/// Where the nodes of an open piece go. Both are equispaced in arclength and
/// keep the end points free of nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Placement {
    /// `n` nodes at the cell midpoints `(k + ½)·L/n`: uniform spacing also
    /// across corners. Nested only under odd refinement factors.
    #[default]
    Centered,
    /// `n` nodes at `k·L/(n + 1)`, `k = 1…n`: the end points act as
    /// missing nodes. Nested under any integer refinement of the `n + 1`
    /// intervals, in particular under doubling.
    Nested,
}

/// A boundary piece owned by the domain pair `(i, j)`, `i > j`: domain `i`
/// lies on the left of the traversal direction, domain `j` on the right.
#[derive(Clone, Debug)]
pub struct Edge {
    pub shape: Shape,
    pub owner: (usize, usize),
    /// Number of collocation nodes placed on the piece.
    pub nodes: usize,
    pub placement: Placement,
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

impl Shape {
    pub fn is_closed(&self) -> bool {
        matches!(self, Shape::Circle { .. })
    }

    /// Position at the shape's natural parameter `u ∈ [0, 1]`.
    pub fn point(&self, u: f64) -> Point {
        match *self {
            Shape::Line { a, b } => a + (b - a) * u,
            Shape::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let th = theta0 + u * (theta1 - theta0);
                center + Point::new(th.cos(), th.sin()) * radius
            }
            Shape::Circle { center, radius } => {
                let th = 2.0 * PI * u;
                center + Point::new(th.cos(), th.sin()) * radius
            }
            Shape::Sine {
                x0,
                y0,
                y1,
                amplitude,
                k,
            } => Point::new(
                x0 + amplitude * (2.0 * PI * k as f64 * u).sin(),
                y0 + u * (y1 - y0),
            ),
        }
    }

    fn speed(&self, u: f64) -> f64 {
        match *self {
            Shape::Line { a, b } => (b - a).norm(),
            Shape::Arc {
                radius,
                theta0,
                theta1,
                ..
            } => radius * (theta1 - theta0),
            Shape::Circle { radius, .. } => 2.0 * PI * radius,
            Shape::Sine {
                y0,
                y1,
                amplitude,
                k,
                ..
            } => {
                let w = 2.0 * PI * k as f64;
                (amplitude * w * (w * u).cos()).hypot(y1 - y0)
            }
        }
    }

    fn panels(&self) -> usize {
        match *self {
            Shape::Sine { k, .. } => 64 * (k as usize).max(1),
            _ => 1,
        }
    }

    /// Arclength from the start to parameter `u`.
    fn arclength_to(&self, u: f64) -> f64 {
        match self {
            Shape::Sine { .. } => {
                let panels = self.panels();
                let h = 1.0 / panels as f64;
                let mut s = 0.0;
                let full = (u / h).floor() as usize;
                for p in 0..full.min(panels) {
                    s += self.gauss(p as f64 * h, (p + 1) as f64 * h);
                }
                if full < panels {
                    s += self.gauss(full as f64 * h, u);
                }
                s
            }
            _ => self.speed(0.0) * u,
        }
    }

    fn gauss(&self, a: f64, b: f64) -> f64 {
        let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(&x, w)| w * self.speed(m + r * x))
            .sum::<f64>()
            * r
    }

    pub fn length(&self) -> f64 {
        self.arclength_to(1.0)
    }

    /// Parameter `u` at which the arclength from the start equals `s`.
    fn param_at_arclength(&self, s: f64) -> f64 {
        match self {
            Shape::Sine { .. } => {
                let total = self.length();
                let mut u = s / total;
                for _ in 0..50 {
                    let f = self.arclength_to(u) - s;
                    let du = f / self.speed(u);
                    u = (u - du).clamp(0.0, 1.0);
                    if du.abs() < 1e-15 {
                        break;
                    }
                }
                u
            }
            _ => s / self.length(),
        }
    }

    pub fn start(&self) -> Point {
        self.point(0.0)
    }

    pub fn end(&self) -> Point {
        self.point(1.0)
    }

    /// `n` nodes in the open interior, equispaced in arclength as selected
    /// by `placement`. Closed circles place nodes at `2πk/n` instead.
    pub fn sample(&self, n: usize, placement: Placement) -> Vec<Point> {
        self.params(n, placement).into_iter().map(|u| self.point(u)).collect()
    }

    /// Nodes as in [`Shape::sample`] with the unit normals pointing to the
    /// right of the traversal direction.
    pub fn sample_with_normals(&self, n: usize, placement: Placement) -> (Vec<Point>, Vec<Point>) {
        let u = self.params(n, placement);
        (
            u.iter().map(|&u| self.point(u)).collect(),
            u.iter().map(|&u| self.normal(u)).collect(),
        )
    }

    fn params(&self, n: usize, placement: Placement) -> Vec<f64> {
        if self.is_closed() {
            return (0..n).map(|k| k as f64 / n as f64).collect();
        }
        let len = self.length();
        let s = |k: usize| match placement {
            Placement::Centered => (k as f64 + 0.5) * len / n as f64,
            Placement::Nested => (k + 1) as f64 * len / (n + 1) as f64,
        };
        (0..n).map(|k| self.param_at_arclength(s(k))).collect()
    }

    fn normal(&self, u: f64) -> Point {
        let t = match *self {
            Shape::Line { a, b } => b - a,
            Shape::Arc {
                theta0, theta1, ..
            } => {
                let th = theta0 + u * (theta1 - theta0);
                Point::new(-th.sin(), th.cos())
            }
            Shape::Circle { .. } => {
                let th = 2.0 * PI * u;
                Point::new(-th.sin(), th.cos())
            }
            Shape::Sine {
                y0,
                y1,
                amplitude,
                k,
                ..
            } => {
                let w = 2.0 * PI * k as f64;
                Point::new(amplitude * w * (w * u).cos(), y1 - y0)
            }
        };
        Point::new(t.y, -t.x) / t.norm()
    }

    /// Mirror image in the vertical line `x = axis`. The traversal direction
    /// is flipped as well, so that a counterclockwise boundary piece stays
    /// counterclockwise.
    pub fn mirrored_x(&self, axis: f64) -> Shape {
        let m = |p: Point| Point::new(2.0 * axis - p.x, p.y);
        match *self {
            Shape::Line { a, b } => Shape::Line { a: m(b), b: m(a) },
            Shape::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => Shape::Arc {
                center: m(center),
                radius,
                theta0: PI - theta1,
                theta1: PI - theta0,
            },
            Shape::Circle { center, radius } => Shape::Circle {
                center: m(center),
                radius,
            },
            Shape::Sine {
                x0,
                y0,
                y1,
                amplitude,
                k,
            } => Shape::Sine {
                x0: 2.0 * axis - x0,
                y0: y1,
                y1: y0,
                amplitude,
                k,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Line { a, b } => (b - a).norm() > 0.0,
            Shape::Arc {
                radius,
                theta0,
                theta1,
                ..
            } => radius > 0.0 && theta1 > theta0 && theta1 - theta0 < 2.0 * PI,
            Shape::Circle { radius, .. } => radius > 0.0,
            Shape::Sine { y0, y1, k, .. } => y0 != y1 && k >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(EmiError::Geometry(format!("degenerate boundary piece {self:?}")))
        }
    }
}

impl Edge {
    /// Piece with [`Placement::Centered`] nodes; the count must be even.
    pub fn new(shape: Shape, owner: (usize, usize), nodes: usize) -> Result<Self> {
        shape.validate()?;
        if owner.0 <= owner.1 {
            return Err(EmiError::Topology(format!(
                "edge owner ({}, {}) must satisfy i > j",
                owner.0, owner.1
            )));
        }
        if nodes < 2 || nodes % 2 != 0 {
            return Err(EmiError::Geometry(format!(
                "edge node count must be even and at least 2, got {nodes}"
            )));
        }
        Ok(Self {
            shape,
            owner,
            nodes,
            placement: Placement::Centered,
        })
    }

    /// Piece with [`Placement::Nested`] nodes cutting it into `intervals`
    /// equal parts; `intervals` must be even so that the node count is odd
    /// and loops of an even number of such pieces have even node counts.
    pub fn nested(shape: Shape, owner: (usize, usize), intervals: usize) -> Result<Self> {
        if intervals < 2 || intervals % 2 != 0 {
            return Err(EmiError::Geometry(format!(
                "interval count must be even and at least 2, got {intervals}"
            )));
        }
        let mut e = Self::new(shape, owner, 2)?;
        e.nodes = intervals - 1;
        e.placement = Placement::Nested;
        Ok(e)
    }
}

/// Even node count closest to `length / spacing`, at least 2.
pub fn even_count(length: f64, spacing: f64) -> usize {
    let n = (length / spacing / 2.0).round() as usize * 2;
    n.max(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_nodes_at_midpoints() {
        let s = Shape::Line {
            a: Point::new(0.0, 0.0),
            b: Point::new(4.0, 0.0),
        };
        let p = s.sample(4, Placement::Centered);
        let xs: Vec<f64> = p.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn nested_line_nodes_skip_end_points() {
        let s = Shape::Line {
            a: Point::new(0.0, 0.0),
            b: Point::new(4.0, 0.0),
        };
        let xs: Vec<f64> = s.sample(3, Placement::Nested).iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
        let e = Edge::nested(s.clone(), (1, 0), 4).unwrap();
        assert_eq!(e.nodes, 3);
        assert!(Edge::nested(s, (1, 0), 3).is_err());
    }

    #[test]
    fn sine_length_and_spacing() {
        let s = Shape::Sine {
            x0: 0.0,
            y0: 0.0,
            y1: 20.0,
            amplitude: 0.5,
            k: 3,
        };
        // reference length by a fine midpoint sum
        let n = 200_000;
        let mut reference = 0.0;
        for i in 0..n {
            let a = s.point(i as f64 / n as f64);
            let b = s.point((i + 1) as f64 / n as f64);
            reference += (b - a).norm();
        }
        assert!((s.length() - reference).abs() < 1e-6);
        let u = s.param_at_arclength(0.3 * s.length());
        assert!((s.arclength_to(u) - 0.3 * s.length()).abs() < 1e-10);
        assert!((s.end() - Point::new(0.0, 20.0)).norm() < 1e-12);
    }

    #[test]
    fn mirror_reverses_traversal() {
        let arc = Shape::Arc {
            center: Point::new(1.0, 0.0),
            radius: 1.0,
            theta0: -0.5 * PI,
            theta1: 0.5 * PI,
        };
        let m = arc.mirrored_x(0.0);
        assert!((m.start() - Point::new(-1.0, 1.0)).norm() < 1e-15);
        assert!((m.end() - Point::new(-1.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn even_counts() {
        assert_eq!(even_count(100.0, 10.0), 10);
        assert_eq!(even_count(20.0, 10.0), 2);
        assert_eq!(even_count(3.0, 10.0), 2);
        assert_eq!(even_count(31.0, 10.0), 4);
    }
}
