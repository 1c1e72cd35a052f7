//! Curves, multi-cell scenes and the connectivity algebra between global
//! collocation nodes and the boundaries of each domain.

mod builders;
mod curve;
mod edge;
mod scene;

pub use builders::{build_cell_array, build_single_cell, build_split_circle, CellArray, Junction, SplitCircle};
pub use curve::ParamCurve;
pub use edge::{even_count, Edge, Placement, Shape};
pub use scene::{
    Boundary, Connectivity, DomainBoundary, Scene, Segment, SegmentKind, SIGMA_EXTRA, SIGMA_INTRA,
};

pub(crate) use scene::winding_inside;

/// Point or vector in the plane, coordinates in µm.
pub type Point = nalgebra::Vector2<f64>;

/// Trigonometric interpolant through `nodes`; see [`ParamCurve`].
pub fn fourier_closed_curve(nodes: &[Point], params: Option<&[f64]>) -> crate::Result<ParamCurve> {
    ParamCurve::fourier_closed_curve(nodes, params)
}
