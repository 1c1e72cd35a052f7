//! Multi-domain topology: cells Ω₁…Ω_N, the extracellular domain Ω₀, the
//! interfaces Γ_ij with their collocation nodes and the optional outer
//! boundary Σ.

use std::collections::BTreeMap;

use super::curve::ParamCurve;
use super::edge::{Edge, Placement, Shape};
use super::Point;
use crate::error::{EmiError, Result};

/// Default conductivities in mS/cm: extracellular and intracellular.
pub const SIGMA_EXTRA: f64 = 20.0;
pub const SIGMA_INTRA: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    /// Γ_i0: cell membrane facing the extracellular space.
    Transmembrane,
    /// Γ_ij with j ≥ 1: gap junction between two cells.
    GapJunction,
}

/// All collocation nodes on one interface Γ_ij.
#[derive(Clone, Debug)]
pub struct Segment {
    pub owner: (usize, usize),
    pub nodes: Vec<usize>,
}

impl Segment {
    pub fn kind(&self) -> SegmentKind {
        if self.owner.1 == 0 {
            SegmentKind::Transmembrane
        } else {
            SegmentKind::GapJunction
        }
    }
}

/// One closed boundary loop of a domain and the global indices of its nodes.
#[derive(Clone, Debug)]
pub struct Boundary {
    pub curve: ParamCurve,
    pub global: Vec<usize>,
}

/// The boundary of one domain: the union of its loops. Local node numbering
/// is the concatenation of the loops in order.
#[derive(Clone, Debug)]
pub struct DomainBoundary {
    pub loops: Vec<Boundary>,
}

impl DomainBoundary {
    pub fn len(&self) -> usize {
        self.loops.iter().map(|l| l.curve.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global index of every local node.
    pub fn global(&self) -> Vec<usize> {
        self.loops.iter().flat_map(|l| l.global.iter().copied()).collect()
    }

    /// Trapezoidal `∫ ds` weights for every local node.
    pub fn weights(&self) -> Vec<f64> {
        self.loops
            .iter()
            .flat_map(|l| l.curve.quadrature_weights())
            .collect()
    }

    pub fn curves(&self) -> Vec<&ParamCurve> {
        self.loops.iter().map(|l| &l.curve).collect()
    }
}

/// Sparse connectivity: `A_i` as global indices, `B_i` as the matching signs.
#[derive(Clone, Debug)]
pub struct Connectivity {
    pub m: usize,
    /// `a[i][k] = l` iff `(A_i)_{kl} = 1`.
    pub a: Vec<Vec<usize>>,
    /// `(B_i)_{k, a[i][k]}`.
    pub b: Vec<Vec<f64>>,
    /// Global indices of Γ₀ nodes in the local order of Ω₀.
    pub a0: Vec<usize>,
    /// Global indices of gap-junction nodes, increasing.
    pub ag: Vec<usize>,
}

impl Connectivity {
    pub fn n_domains(&self) -> usize {
        self.a.len()
    }

    /// `A_i v`.
    pub fn restrict(&self, i: usize, v: &[f64]) -> Vec<f64> {
        self.a[i].iter().map(|&l| v[l]).collect()
    }

    /// `B_i v`.
    pub fn restrict_signed(&self, i: usize, v: &[f64]) -> Vec<f64> {
        self.a[i].iter().zip(&self.b[i]).map(|(&l, s)| s * v[l]).collect()
    }

    /// `out += A_iᵀ w`.
    pub fn add_extend(&self, i: usize, w: &[f64], out: &mut [f64]) {
        for (&l, x) in self.a[i].iter().zip(w) {
            out[l] += x;
        }
    }

    /// `out += B_iᵀ w`.
    pub fn add_extend_signed(&self, i: usize, w: &[f64], out: &mut [f64]) {
        for ((&l, s), x) in self.a[i].iter().zip(&self.b[i]).zip(w) {
            out[l] += s * x;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    n_cells: usize,
    sigma: Vec<f64>,
    nodes: Vec<Point>,
    /// Exact unit normal of the boundary piece at every node, pointing out of
    /// the owner `i` of the pair `(i, j)`.
    normals: Vec<Point>,
    /// Owner pair of every global node.
    node_owner: Vec<(usize, usize)>,
    segments: Vec<Segment>,
    domains: Vec<DomainBoundary>,
    outer: Option<ParamCurve>,
    edges: Vec<Edge>,
}

fn close(a: Point, b: Point, scale: f64) -> bool {
    (a - b).norm() <= 1e-9 * scale
}

impl Scene {
    /// Assemble a scene from boundary pieces. Every piece is owned by a pair
    /// `(i, j)`, `i > j`, with domain `i` on its left. The pieces of each
    /// domain must chain into closed loops.
    pub fn from_edges(n_cells: usize, edges: Vec<Edge>, outer: Option<ParamCurve>) -> Result<Self> {
        if n_cells == 0 {
            return Err(EmiError::Topology("scene needs at least one cell".into()));
        }
        if edges.is_empty() {
            return Err(EmiError::Topology("scene has no boundary pieces".into()));
        }
        for e in &edges {
            if e.owner.0 > n_cells {
                return Err(EmiError::Topology(format!(
                    "edge owner ({}, {}) exceeds cell count {n_cells}",
                    e.owner.0, e.owner.1
                )));
            }
        }

        let mut nodes = Vec::new();
        let mut normals = Vec::new();
        let mut node_owner = Vec::new();
        let mut edge_nodes: Vec<Vec<usize>> = Vec::with_capacity(edges.len());
        for e in &edges {
            let (pts, nrm) = e.shape.sample_with_normals(e.nodes, e.placement);
            normals.extend(nrm);
            let start = nodes.len();
            edge_nodes.push((start..start + pts.len()).collect());
            node_owner.extend(std::iter::repeat_n(e.owner, pts.len()));
            nodes.extend(pts);
        }
        let scale = nodes.iter().map(|p| p.norm()).fold(1.0, f64::max);

        let mut by_owner: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (e, idx) in edges.iter().zip(&edge_nodes) {
            by_owner.entry(e.owner).or_default().extend(idx);
        }
        let segments = by_owner
            .into_iter()
            .map(|(owner, nodes)| Segment { owner, nodes })
            .collect();

        let mut domains = Vec::with_capacity(n_cells + 1);
        for d in 0..=n_cells {
            // Pieces of domain d oriented with d on the left; Ω₀ keeps the
            // cells' orientation so its inner loops are counterclockwise.
            let mut pieces: Vec<(usize, bool)> = Vec::new();
            for (k, e) in edges.iter().enumerate() {
                if e.owner.0 == d || (d == 0 && e.owner.1 == 0) {
                    pieces.push((k, false));
                } else if e.owner.1 == d {
                    pieces.push((k, true));
                }
            }
            if pieces.is_empty() {
                return Err(EmiError::Topology(format!("domain {d} has no boundary")));
            }
            let ends = |&(k, rev): &(usize, bool)| -> (Point, Point) {
                let s = &edges[k].shape;
                if rev {
                    (s.end(), s.start())
                } else {
                    (s.start(), s.end())
                }
            };
            let mut used = vec![false; pieces.len()];
            let mut loops = Vec::new();
            while let Some(first) = used.iter().position(|u| !u) {
                used[first] = true;
                let mut chain = vec![pieces[first]];
                if !edges[pieces[first].0].shape.is_closed() {
                    let (origin, mut tip) = ends(&pieces[first]);
                    while !close(tip, origin, scale) {
                        let next = (0..pieces.len())
                            .find(|&q| !used[q] && close(ends(&pieces[q]).0, tip, scale))
                            .ok_or_else(|| {
                                EmiError::Topology(format!(
                                    "boundary of domain {d} is not closed near ({:.6}, {:.6})",
                                    tip.x, tip.y
                                ))
                            })?;
                        used[next] = true;
                        chain.push(pieces[next]);
                        tip = ends(&pieces[next]).1;
                    }
                }
                let mut pts = Vec::new();
                let mut global = Vec::new();
                for &(k, rev) in &chain {
                    let idx: Vec<usize> = if rev {
                        edge_nodes[k].iter().rev().copied().collect()
                    } else {
                        edge_nodes[k].clone()
                    };
                    pts.extend(idx.iter().map(|&l| nodes[l]));
                    global.extend(idx);
                }
                let curve = ParamCurve::fourier_closed_curve(&pts, None)?;
                if curve.was_reversed() {
                    global[1..].reverse();
                }
                loops.push(Boundary { curve, global });
            }
            domains.push(DomainBoundary { loops });
        }

        if let Some(sigma_curve) = &outer {
            let inner: Vec<&Point> = nodes.iter().collect();
            if !inner.iter().all(|p| winding_inside(sigma_curve, **p)) {
                return Err(EmiError::Geometry(
                    "outer boundary does not contain all cells".into(),
                ));
            }
        }

        let mut sigma = vec![SIGMA_INTRA; n_cells + 1];
        sigma[0] = SIGMA_EXTRA;
        Ok(Self {
            n_cells,
            sigma,
            nodes,
            normals,
            node_owner,
            segments,
            domains,
            outer,
            edges,
        })
    }

    /// Replace the conductivities (mS/cm), `sigma[0]` extracellular.
    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.n_cells + 1 {
            return Err(EmiError::Dimension(format!(
                "{} conductivities for {} domains",
                sigma.len(),
                self.n_cells + 1
            )));
        }
        if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(EmiError::Parameter("conductivities must be positive".into()));
        }
        self.sigma = sigma;
        Ok(self)
    }

    /// Mirror image in the line `x = axis`, with the same cells, pieces and
    /// conductivities. Node numbering follows the mirrored pieces.
    pub fn mirrored_x(&self, axis: f64) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                shape: e.shape.mirrored_x(axis),
                ..e.clone()
            })
            .collect();
        let outer = match &self.outer {
            Some(c) => {
                let pts: Vec<Point> = c.nodes().iter().rev().map(|p| Point::new(2.0 * axis - p.x, p.y)).collect();
                Some(ParamCurve::fourier_closed_curve(&pts, None)?)
            }
            None => None,
        };
        Scene::from_edges(self.n_cells, edges, outer)?.with_sigma(self.sigma.clone())
    }

    /// Set all intracellular conductivities to `intra` and Ω₀ to `extra`.
    pub fn with_uniform_sigma(self, extra: f64, intra: f64) -> Result<Self> {
        let n = self.n_cells;
        let mut s = vec![intra; n + 1];
        s[0] = extra;
        self.with_sigma(s)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_domains(&self) -> usize {
        self.n_cells + 1
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    /// Exact normal at global node `l`, pointing out of the higher-indexed
    /// domain of its owner pair.
    pub fn node_normal(&self, l: usize) -> Point {
        self.normals[l]
    }

    /// Exact outward normal of domain `i` at every node of its boundary, in
    /// local order.
    pub fn domain_normals(&self, i: usize) -> Vec<Point> {
        self.domains[i]
            .global()
            .iter()
            .map(|&l| {
                if self.node_owner[l].0 == i {
                    self.normals[l]
                } else {
                    -self.normals[l]
                }
            })
            .collect()
    }

    /// Coordinates of the boundary nodes of domain `i`, in local order.
    pub fn domain_nodes(&self, i: usize) -> Vec<Point> {
        self.domains[i].global().iter().map(|&l| self.nodes[l]).collect()
    }

    pub fn node_owner(&self, l: usize) -> (usize, usize) {
        self.node_owner[l]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn domain(&self, i: usize) -> &DomainBoundary {
        &self.domains[i]
    }

    pub fn outer(&self) -> Option<&ParamCurve> {
        self.outer.as_ref()
    }

    /// Total number of collocation nodes `M`.
    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    /// `M_i`, nodes on the boundary of domain `i`.
    pub fn m_domain(&self, i: usize) -> usize {
        self.domains[i].len()
    }

    /// `M₀`, nodes on the transmembrane boundary.
    pub fn m0(&self) -> usize {
        self.node_owner.iter().filter(|o| o.1 == 0).count()
    }

    /// `M_g`, nodes on gap junctions.
    pub fn mg(&self) -> usize {
        self.m() - self.m0()
    }

    pub fn connectivity(&self) -> Result<Connectivity> {
        let m = self.m();
        let mut count = vec![0usize; m];
        let mut a = Vec::with_capacity(self.n_domains());
        let mut b = Vec::with_capacity(self.n_domains());
        for (i, dom) in self.domains.iter().enumerate() {
            let g = dom.global();
            let mut signs = Vec::with_capacity(g.len());
            for &l in &g {
                let (hi, lo) = self.node_owner[l];
                if hi == i {
                    signs.push(1.0);
                } else if lo == i {
                    signs.push(-1.0);
                } else {
                    return Err(EmiError::Topology(format!(
                        "node {l} listed on domain {i} but owned by ({hi}, {lo})"
                    )));
                }
                count[l] += 1;
            }
            a.push(g);
            b.push(signs);
        }
        if let Some(l) = count.iter().position(|&c| c != 2) {
            return Err(EmiError::Topology(format!(
                "node {l} belongs to {} domains instead of 2",
                count[l]
            )));
        }
        let a0 = a[0].clone();
        let ag = (0..m).filter(|&l| self.node_owner[l].1 != 0).collect();
        Ok(Connectivity { m, a, b, a0, ag })
    }

    /// Largest ratio between the longest and shortest node spacing over all
    /// domain curves; values above 2 degrade the equispaced quadratures.
    pub fn spacing_ratio(&self) -> f64 {
        self.domains
            .iter()
            .flat_map(|d| d.loops.iter().map(|l| l.curve.spacing_ratio()))
            .fold(1.0, f64::max)
    }

    /// Axis-aligned bounding box `(min, max)` of the nodes of domain `i`.
    pub fn bounding_box(&self, i: usize) -> (Point, Point) {
        bbox(self.domains[i].loops.iter().flat_map(|l| l.curve.nodes().iter()))
    }

    /// Write `global_index,x,y,domain_i,domain_j` rows.
    pub fn write_nodes_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "global_index,x_um,y_um,domain_i,domain_j")?;
        for (l, (p, o)) in self.nodes.iter().zip(&self.node_owner).enumerate() {
            writeln!(w, "{l},{:.17e},{:.17e},{},{}", p.x, p.y, o.0, o.1)?;
        }
        Ok(())
    }

    /// Plain-text summary: counts, conductivities and bounding boxes.
    pub fn report(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "cells N           {}", self.n_cells);
        let _ = writeln!(s, "nodes M           {}", self.m());
        let _ = writeln!(s, "transmembrane M0  {}", self.m0());
        let _ = writeln!(s, "gap junction Mg   {}", self.mg());
        let _ = writeln!(s, "spacing ratio     {:.3}", self.spacing_ratio());
        for i in 0..self.n_domains() {
            let (lo, hi) = self.bounding_box(i);
            let _ = writeln!(
                s,
                "domain {i:>4}: M_i = {:>6}, loops = {}, sigma = {} mS/cm, bbox = [{:.3}, {:.3}] x [{:.3}, {:.3}] um",
                self.m_domain(i),
                self.domains[i].loops.len(),
                self.sigma[i],
                lo.x,
                hi.x,
                lo.y,
                hi.y
            );
        }
        match &self.outer {
            Some(c) => {
                let (lo, hi) = bbox(c.nodes().iter());
                let _ = writeln!(
                    s,
                    "outer boundary: {} nodes, bbox = [{:.3}, {:.3}] x [{:.3}, {:.3}] um",
                    c.len(),
                    lo.x,
                    hi.x,
                    lo.y,
                    hi.y
                );
            }
            None => {
                let _ = writeln!(s, "outer boundary: none (unbounded)");
            }
        }
        s
    }

    /// For every coarse global node, the node of `fine` at the same position,
    /// where `fine` carries `factor` times the nodes (centered placement, odd
    /// factor: node `k` ↦ `f·k + (f−1)/2`) or the intervals (nested
    /// placement: node `k` ↦ `f·(k+1) − 1`) on every piece.
    pub fn nested_indices(&self, fine: &Scene, factor: usize) -> Result<Vec<usize>> {
        let not_nested = || EmiError::Parameter("reference scene is not a refinement of the coarse one".into());
        if factor == 0 || self.edges.len() != fine.edges.len() {
            return Err(not_nested());
        }
        let mut out = Vec::with_capacity(self.m());
        let mut f0 = 0;
        for (ce, fe) in self.edges.iter().zip(&fine.edges) {
            if ce.shape != fe.shape || ce.owner != fe.owner || ce.placement != fe.placement {
                return Err(not_nested());
            }
            let f = factor;
            let ok = match (ce.shape.is_closed(), ce.placement) {
                (true, _) => fe.nodes == f * ce.nodes,
                (false, Placement::Centered) => f % 2 == 1 && fe.nodes == f * ce.nodes,
                (false, Placement::Nested) => fe.nodes + 1 == f * (ce.nodes + 1),
            };
            if !ok {
                return Err(not_nested());
            }
            out.extend((0..ce.nodes).map(|k| {
                f0 + match (ce.shape.is_closed(), ce.placement) {
                    (true, _) => f * k,
                    (false, Placement::Centered) => f * k + (f - 1) / 2,
                    (false, Placement::Nested) => f * (k + 1) - 1,
                }
            }));
            f0 += fe.nodes;
        }
        Ok(out)
    }
}

fn bbox<'a>(pts: impl Iterator<Item = &'a Point>) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Point-in-polygon test against the node polygon of a closed curve.
pub(crate) fn winding_inside(curve: &ParamCurve, p: Point) -> bool {
    let pts = curve.nodes();
    let n = pts.len();
    let mut inside = false;
    for j in 0..n {
        let a = pts[j];
        let b = pts[(j + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Shape of the outer boundary Σ used by the builders.
pub(crate) fn circle_curve(center: Point, radius: f64, m: usize) -> Result<ParamCurve> {
    let pts = Shape::Circle { center, radius }.sample(m, Placement::Centered);
    ParamCurve::fourier_closed_curve(&pts, None)
}
