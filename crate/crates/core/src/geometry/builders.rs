//! Scene constructors for the test geometries and cell arrays.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::curve::ParamCurve;
use super::edge::{even_count, Edge, Placement, Shape};
use super::scene::{circle_curve, Scene};
use super::Point;
use crate::error::{EmiError, Result};

/// Disc of radius `inner_radius` (Ω₁) inside the annulus bounded by the
/// circle Σ of radius `outer_radius`, both discretized with `m` nodes.
pub fn build_single_cell(inner_radius: f64, outer_radius: f64, m: usize) -> Result<Scene> {
    if !(inner_radius > 0.0 && inner_radius < outer_radius) {
        return Err(EmiError::Geometry(format!(
            "radii must satisfy 0 < {inner_radius} < {outer_radius}"
        )));
    }
    if m < 4 || m % 2 != 0 {
        return Err(EmiError::Geometry(format!(
            "node count must be even and at least 4, got {m}"
        )));
    }
    let edge = Edge::new(
        Shape::Circle {
            center: Point::zeros(),
            radius: inner_radius,
        },
        (1, 0),
        m,
    )?;
    let outer = circle_curve(Point::zeros(), outer_radius, m)?;
    Scene::from_edges(1, vec![edge], Some(outer))
}

/// Two half discs of radius `radius` side by side, inside a circle Σ.
#[derive(Clone, Debug)]
pub struct SplitCircle {
    pub radius: f64,
    pub outer_radius: f64,
    /// Horizontal gap between the flat faces; 0 makes them share a junction.
    pub gap: f64,
    /// Radius of the arcs rounding the four corners; 0 keeps them sharp.
    pub fillet: f64,
    /// Approximate node count on each cell boundary.
    pub m_cell: usize,
    /// Node count on Σ; `None` picks one matching the cell spacing, capped.
    pub m_outer: Option<usize>,
    /// Every piece is split `refine` times finer than nominal: with nested
    /// placement any factor keeps the unrefined nodes, with centered
    /// placement only odd ones do. Σ is not refined.
    pub refine: usize,
    pub placement: Placement,
}

impl SplitCircle {
    pub fn new(radius: f64, outer_radius: f64, gap: f64, fillet: f64, m_cell: usize) -> Self {
        Self {
            radius,
            outer_radius,
            gap,
            fillet,
            m_cell,
            m_outer: None,
            refine: 1,
            placement: Placement::Nested,
        }
    }
}

/// Boundary pieces of the right half disc `{|x| < R, x₁ > 0}` with optional
/// fillets, counterclockwise.
fn right_half_disc(r: f64, fillet: f64) -> Vec<Shape> {
    let o = Point::zeros();
    if fillet == 0.0 {
        return vec![
            Shape::Arc {
                center: o,
                radius: r,
                theta0: -0.5 * PI,
                theta1: 0.5 * PI,
            },
            Shape::Line {
                a: Point::new(0.0, r),
                b: Point::new(0.0, -r),
            },
        ];
    }
    let yc = ((r - fillet).powi(2) - fillet * fillet).sqrt();
    let th = yc.atan2(fillet);
    vec![
        Shape::Arc {
            center: o,
            radius: r,
            theta0: -th,
            theta1: th,
        },
        Shape::Arc {
            center: Point::new(fillet, yc),
            radius: fillet,
            theta0: th,
            theta1: PI,
        },
        Shape::Line {
            a: Point::new(0.0, yc),
            b: Point::new(0.0, -yc),
        },
        Shape::Arc {
            center: Point::new(fillet, -yc),
            radius: fillet,
            theta0: PI,
            theta1: 2.0 * PI - th,
        },
    ]
}

fn translate(s: &Shape, dx: f64) -> Shape {
    let t = Point::new(dx, 0.0);
    match s.clone() {
        Shape::Line { a, b } => Shape::Line { a: a + t, b: b + t },
        Shape::Arc {
            center,
            radius,
            theta0,
            theta1,
        } => Shape::Arc {
            center: center + t,
            radius,
            theta0,
            theta1,
        },
        Shape::Circle { center, radius } => Shape::Circle {
            center: center + t,
            radius,
        },
        Shape::Sine {
            x0,
            y0,
            y1,
            amplitude,
            k,
        } => Shape::Sine {
            x0: x0 + dx,
            y0,
            y1,
            amplitude,
            k,
        },
    }
}

/// Split disc: cell 1 on the left, cell 2 on the right. With `gap = 0` the
/// flat faces form the junction Γ₂₁; otherwise both cells are isolated and
/// shifted by `±gap/2`.
pub fn build_split_circle(p: &SplitCircle) -> Result<Scene> {
    let r = p.radius;
    if !(r > 0.0 && r < p.outer_radius) {
        return Err(EmiError::Geometry("need 0 < radius < outer radius".into()));
    }
    if !(p.gap >= 0.0) || !(p.fillet >= 0.0) {
        return Err(EmiError::Geometry("gap and fillet must be nonnegative".into()));
    }
    if p.gap == 0.0 && p.fillet > 0.0 {
        return Err(EmiError::Geometry(
            "fillets require separated cells (gap > 0)".into(),
        ));
    }
    // the flat face has length 2R; each fillet consumes more than its radius
    if p.fillet > 0.0 && p.fillet >= 0.5 * r {
        return Err(EmiError::Geometry(format!(
            "fillet {} too large for half discs of radius {r}",
            p.fillet
        )));
    }
    if p.m_cell < 8 || p.refine == 0 {
        return Err(EmiError::Geometry("need at least 8 nodes per cell".into()));
    }
    let right: Vec<Shape> = right_half_disc(r, p.fillet);
    let perimeter: f64 = right.iter().map(|s| s.length()).sum();
    let h = perimeter / p.m_cell as f64;
    let half = 0.5 * p.gap;

    let piece = |shape: Shape, owner: (usize, usize), len: f64| {
        let n = even_count(len, h) * p.refine;
        match p.placement {
            Placement::Centered => Edge::new(shape, owner, n),
            Placement::Nested => Edge::nested(shape, owner, n),
        }
    };
    let mut edges = Vec::new();
    if p.gap == 0.0 {
        let [arc, line] = [&right[0], &right[1]];
        edges.push(piece(arc.mirrored_x(0.0), (1, 0), arc.length())?);
        edges.push(piece(arc.clone(), (2, 0), arc.length())?);
        // junction owned by cell 2, traversed top to bottom
        edges.push(piece(line.clone(), (2, 1), line.length())?);
    } else {
        for s in &right {
            edges.push(piece(translate(&s.mirrored_x(0.0), -half), (1, 0), s.length())?);
            edges.push(piece(translate(s, half), (2, 0), s.length())?);
        }
    }
    let m_outer = p.m_outer.unwrap_or_else(|| {
        let n = even_count(2.0 * PI * p.outer_radius, h);
        n.clamp(64, 256)
    });
    let outer = circle_curve(Point::zeros(), p.outer_radius, m_outer)?;
    Scene::from_edges(2, edges, Some(outer))
}

/// Shape of the vertical boundaries between neighbouring cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Junction {
    Flat,
    /// Sine wave of amplitude `a` (µm) with `k` periods across the cell width.
    Sinusoid { a: f64, k: u32 },
}

/// Rectangular cells arranged in `rows × cols`, surrounded by a rectangular
/// bath whose boundary Σ is insulated.
#[derive(Clone, Debug)]
pub struct CellArray {
    pub rows: usize,
    pub cols: usize,
    /// Cell width (µm, along y).
    pub c_w: f64,
    /// Cell length (µm, along x).
    pub c_l: f64,
    /// Bath extent along y and x (µm).
    pub bath_w: f64,
    pub bath_l: f64,
    pub junction: Junction,
    /// Target node spacing on the cell boundaries (µm).
    pub dx: f64,
    /// Target node spacing on Σ (µm).
    pub dx_outer: f64,
}

impl CellArray {
    pub fn new(rows: usize, cols: usize, c_w: f64, c_l: f64, bath_w: f64, bath_l: f64, dx: f64) -> Self {
        Self {
            rows,
            cols,
            c_w,
            c_l,
            bath_w,
            bath_l,
            junction: Junction::Flat,
            dx,
            dx_outer: 4.0 * dx,
        }
    }

    /// Index of the cell in row `r`, column `c`.
    pub fn cell(&self, r: usize, c: usize) -> usize {
        r * self.cols + c + 1
    }

    /// Center of the cell block.
    pub fn center(&self) -> Point {
        Point::new(
            0.5 * self.cols as f64 * self.c_l,
            0.5 * self.rows as f64 * self.c_w,
        )
    }
}

/// Even node count per side of an axis-aligned rectangle, nodes at side
/// midpoints.
pub(crate) fn rectangle_curve(lo: Point, hi: Point, spacing: f64) -> Result<ParamCurve> {
    let corners = [lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)];
    let mut pts = Vec::new();
    for k in 0..4 {
        let s = Shape::Line {
            a: corners[k],
            b: corners[(k + 1) % 4],
        };
        pts.extend(s.sample(even_count(s.length(), spacing), Placement::Centered));
    }
    ParamCurve::fourier_closed_curve(&pts, None)
}

pub fn build_cell_array(p: &CellArray) -> Result<Scene> {
    if p.rows == 0 || p.cols == 0 {
        return Err(EmiError::Geometry("need at least one row and column".into()));
    }
    if !(p.c_w > 0.0 && p.c_l > 0.0 && p.dx > 0.0 && p.dx_outer > 0.0) {
        return Err(EmiError::Geometry("cell sizes and spacings must be positive".into()));
    }
    let block = Point::new(p.cols as f64 * p.c_l, p.rows as f64 * p.c_w);
    let center = p.center();
    let lo = center - Point::new(0.5 * p.bath_l, 0.5 * p.bath_w);
    let hi = center + Point::new(0.5 * p.bath_l, 0.5 * p.bath_w);
    if !(lo.x < 0.0 && lo.y < 0.0 && hi.x > block.x && hi.y > block.y) {
        return Err(EmiError::Geometry(format!(
            "bath {} x {} um does not strictly contain the {} x {} um cell block",
            p.bath_l, p.bath_w, block.x, block.y
        )));
    }
    if let Junction::Sinusoid { a, k } = p.junction {
        if !(a >= 0.0) || a >= 0.5 * p.c_l {
            return Err(EmiError::Geometry(format!(
                "junction amplitude {a} must lie in [0, c_l/2)"
            )));
        }
        if k == 0 {
            return Err(EmiError::Geometry("junction frequency must be at least 1".into()));
        }
    }

    let n_len = even_count(p.c_l, p.dx);
    let n_wid = even_count(p.c_w, p.dx);
    let mut edges = Vec::new();
    for r in 0..p.rows {
        for c in 0..p.cols {
            let i = p.cell(r, c);
            let (x0, y0) = (c as f64 * p.c_l, r as f64 * p.c_w);
            let (x1, y1) = (x0 + p.c_l, y0 + p.c_w);
            let below = if r == 0 { 0 } else { i - p.cols };
            edges.push(Edge::new(
                Shape::Line {
                    a: Point::new(x0, y0),
                    b: Point::new(x1, y0),
                },
                (i, below),
                n_len,
            )?);
            if r + 1 == p.rows {
                edges.push(Edge::new(
                    Shape::Line {
                        a: Point::new(x1, y1),
                        b: Point::new(x0, y1),
                    },
                    (i, 0),
                    n_len,
                )?);
            }
            let left = if c == 0 { 0 } else { i - 1 };
            let left_shape = match p.junction {
                Junction::Sinusoid { a, k } if left != 0 && a > 0.0 => Shape::Sine {
                    x0,
                    y0: y1,
                    y1: y0,
                    amplitude: a,
                    k,
                },
                _ => Shape::Line {
                    a: Point::new(x0, y1),
                    b: Point::new(x0, y0),
                },
            };
            let n_left = even_count(left_shape.length(), p.dx);
            edges.push(Edge::new(left_shape, (i, left), n_left)?);
            if c + 1 == p.cols {
                edges.push(Edge::new(
                    Shape::Line {
                        a: Point::new(x1, y0),
                        b: Point::new(x1, y1),
                    },
                    (i, 0),
                    n_wid,
                )?);
            }
        }
    }
    let outer = rectangle_curve(lo, hi, p.dx_outer)?;
    Scene::from_edges(p.rows * p.cols, edges, Some(outer))
}
