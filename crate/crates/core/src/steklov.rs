//! Discrete Dirichlet-to-Neumann (Poincaré–Steklov) maps of the cells and of
//! the extracellular domain, and their rank-one regularization.

use nalgebra::{DMatrix, DVector};

use crate::bem::{assemble_layers, LayerOperators, Targets};
use crate::error::{EmiError, Result};
use crate::geometry::{ParamCurve, Point, Scene};
use crate::linalg::{norm_inf, DenseLu};

/// Growth of a single-layer solve (relative to its size) above which the
/// curve is treated as having logarithmic capacity close to one.
const CAPACITY_GROWTH: f64 = 1e4;
const RESCALE: f64 = 2.0;

/// Dense DtN map `P` of one domain together with a factorization of the
/// regularized `P⁺ = P + α e eᵀ`.
#[derive(Clone, Debug)]
pub struct SteklovOperator {
    p: DMatrix<f64>,
    alpha: f64,
    lu: DenseLu,
    unbounded: bool,
    rescaled: bool,
}

/// `α = ‖P‖∞ / M`.
pub fn default_alpha(p: &DMatrix<f64>) -> f64 {
    norm_inf(p) / p.nrows() as f64
}

impl SteklovOperator {
    fn from_matrix(p: DMatrix<f64>, unbounded: bool, rescaled: bool) -> Result<Self> {
        let alpha = if unbounded { 0.0 } else { default_alpha(&p) };
        let lu = factor_plus(&p, alpha)?;
        Ok(Self {
            p,
            alpha,
            lu,
            unbounded,
            rescaled,
        })
    }

    /// Same map with regularization weight `alpha`. Zero is accepted only for
    /// the unbounded exterior, whose map is already invertible.
    pub fn regularize(&self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(EmiError::Parameter(format!(
                "regularization weight must be nonnegative, got {alpha}"
            )));
        }
        if alpha == 0.0 && !self.unbounded {
            return Err(EmiError::Parameter(
                "zero regularization leaves a singular map on a bounded domain".into(),
            ));
        }
        Ok(Self {
            p: self.p.clone(),
            alpha,
            lu: factor_plus(&self.p, alpha)?,
            unbounded: self.unbounded,
            rescaled: self.rescaled,
        })
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_unbounded(&self) -> bool {
        self.unbounded
    }

    /// Whether the single-layer solve was carried out on a rescaled copy.
    pub fn was_rescaled(&self) -> bool {
        self.rescaled
    }

    /// Explicit `P⁺`.
    pub fn p_plus(&self) -> DMatrix<f64> {
        self.p.add_scalar(self.alpha)
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.p * u
    }

    pub fn apply_plus(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut y = &self.p * u;
        y.add_scalar_mut(self.alpha * u.sum());
        y
    }

    /// `(P⁺)⁻¹ b`.
    pub fn solve_plus(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve_vec(b)
    }

    /// `(P⁺)⁻¹ B` for a block of right-hand sides.
    pub fn solve_plus_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve_mat(b)
    }

    /// `‖P e‖∞`.
    pub fn kernel_residual(&self) -> f64 {
        self.p.column_sum().amax()
    }

    /// `‖P − Pᵀ‖_F / ‖P‖_F`.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.p - self.p.transpose()).norm() / self.p.norm()
    }
}

fn factor_plus(p: &DMatrix<f64>, alpha: f64) -> Result<DenseLu> {
    DenseLu::factor(p.add_scalar(alpha), "regularized Steklov map")
}

fn half_identity_plus(k: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    let mut a = k * sign;
    for i in 0..a.nrows() {
        a[(i, i)] += 0.5;
    }
    a
}

fn capacity_suspect(lu: &DenseLu) -> bool {
    lu.growth() > CAPACITY_GROWTH * lu.dim() as f64
}

/// `P = V⁻¹ (K + ½I)`: Dirichlet trace to outward normal derivative of the
/// harmonic extension into the region enclosed by `curve`.
pub fn interior_dtn(curve: &ParamCurve) -> Result<SteklovOperator> {
    if curve.len() < 8 {
        return Err(EmiError::Geometry(format!(
            "interior map needs at least 8 nodes, got {}",
            curve.len()
        )));
    }
    match interior_matrix(curve) {
        Ok(p) => SteklovOperator::from_matrix(p, false, false),
        Err(_) => {
            let p = interior_matrix(&curve.scaled(RESCALE))? * RESCALE;
            SteklovOperator::from_matrix(p, false, true)
        }
    }
}

fn interior_matrix(curve: &ParamCurve) -> Result<DMatrix<f64>> {
    let LayerOperators { v, k, .. } = assemble_layers(curve, Targets::SourceNodes)?;
    let lu = DenseLu::factor(v, "single layer")?;
    if capacity_suspect(&lu) {
        return Err(EmiError::Singular {
            what: "single layer (logarithmic capacity near one)".into(),
            estimate: lu.growth(),
        });
    }
    Ok(lu.solve_mat(&half_identity_plus(&k, 1.0)))
}

/// Blocks of the single and double layer over a union of curves, collocated
/// at the nodes of the same union.
fn union_layers(curves: &[&ParamCurve]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sizes: Vec<usize> = curves.iter().map(|c| c.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut v = DMatrix::zeros(total, total);
    let mut k = DMatrix::zeros(total, total);
    let mut col = 0;
    for (s, src) in curves.iter().enumerate() {
        let mut row = 0;
        for (t, tgt) in curves.iter().enumerate() {
            let ops = if s == t {
                assemble_layers(src, Targets::SourceNodes)?
            } else {
                assemble_layers(src, Targets::Points(tgt.nodes()))?
            };
            v.view_mut((row, col), (sizes[t], sizes[s])).copy_from(&ops.v);
            k.view_mut((row, col), (sizes[t], sizes[s])).copy_from(&ops.k);
            row += sizes[t];
        }
        col += sizes[s];
    }
    Ok((v, k))
}

/// DtN map of the region outside the `inner` curves (counterclockwise, normals
/// pointing out of the cells). With `outer = Some(Σ)` the region is bounded by
/// Σ carrying a homogeneous Neumann condition; with `None` it is unbounded and
/// the map is invertible.
///
/// The returned map sends the trace on the inner curves to the normal
/// derivative pointing out of the extracellular region, i.e. into the cells.
pub fn exterior_dtn(inner: &[&ParamCurve], outer: Option<&ParamCurve>) -> Result<SteklovOperator> {
    if inner.is_empty() {
        return Err(EmiError::Geometry("exterior map needs at least one inner curve".into()));
    }
    check_disjoint(inner, outer)?;
    match exterior_matrix(inner, outer) {
        Ok(p) => SteklovOperator::from_matrix(p, outer.is_none(), false),
        Err(EmiError::Singular { .. }) => {
            let si: Vec<ParamCurve> = inner.iter().map(|c| c.scaled(RESCALE)).collect();
            let so = outer.map(|c| c.scaled(RESCALE));
            let refs: Vec<&ParamCurve> = si.iter().collect();
            let p = exterior_matrix(&refs, so.as_ref())? * RESCALE;
            SteklovOperator::from_matrix(p, outer.is_none(), true)
        }
        Err(e) => Err(e),
    }
}

fn exterior_matrix(inner: &[&ParamCurve], outer: Option<&ParamCurve>) -> Result<DMatrix<f64>> {
    let (v_gg, k_gg) = union_layers(inner)?;
    let mg = v_gg.nrows();
    // double layer with the extracellular normal, which is −n on the cells
    let rhs_top = half_identity_plus(&k_gg, -1.0);
    let Some(sigma) = outer else {
        let lu = DenseLu::factor(v_gg, "exterior single layer")?;
        if capacity_suspect(&lu) {
            return Err(EmiError::Singular {
                what: "exterior single layer".into(),
                estimate: lu.growth(),
            });
        }
        return Ok(lu.solve_mat(&rhs_top));
    };

    let ms = sigma.len();
    let inner_nodes: Vec<Point> = inner.iter().flat_map(|c| c.nodes().iter().copied()).collect();
    let on_gamma = assemble_layers(sigma, Targets::Points(&inner_nodes))?;
    let on_sigma = assemble_layers(sigma, Targets::SourceNodes)?;
    let mut v_sg = DMatrix::zeros(ms, mg);
    let mut k_sg = DMatrix::zeros(ms, mg);
    let mut col = 0;
    for c in inner {
        let ops = assemble_layers(c, Targets::Points(sigma.nodes()))?;
        v_sg.view_mut((0, col), (ms, c.len())).copy_from(&ops.v);
        k_sg.view_mut((0, col), (ms, c.len())).copy_from(&(-ops.k));
        col += c.len();
    }

    let n = mg + ms;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (mg, mg)).copy_from(&v_gg);
    a.view_mut((0, mg), (mg, ms)).copy_from(&(-&on_gamma.k));
    a.view_mut((mg, 0), (ms, mg)).copy_from(&v_sg);
    a.view_mut((mg, mg), (ms, ms)).copy_from(&(-half_identity_plus(&on_sigma.k, 1.0)));
    let mut rhs = DMatrix::zeros(n, mg);
    rhs.view_mut((0, 0), (mg, mg)).copy_from(&rhs_top);
    rhs.view_mut((mg, 0), (ms, mg)).copy_from(&k_sg);

    let lu = DenseLu::factor(a, "exterior block system")?;
    if capacity_suspect(&lu) {
        return Err(EmiError::Singular {
            what: "exterior block system".into(),
            estimate: lu.growth(),
        });
    }
    let x = lu.solve_mat(&rhs);
    Ok(x.rows(0, mg).into_owned())
}

fn check_disjoint(inner: &[&ParamCurve], outer: Option<&ParamCurve>) -> Result<()> {
    use crate::geometry::winding_inside;
    for (a, ca) in inner.iter().enumerate() {
        for (b, cb) in inner.iter().enumerate() {
            if a != b && ca.nodes().iter().any(|p| winding_inside(cb, *p)) {
                return Err(EmiError::Geometry(format!(
                    "inner curves {a} and {b} overlap"
                )));
            }
        }
        if let Some(s) = outer {
            if !ca.nodes().iter().all(|p| winding_inside(s, *p)) {
                return Err(EmiError::Geometry(format!(
                    "inner curve {a} is not strictly inside the outer boundary"
                )));
            }
        }
    }
    Ok(())
}

/// One operator per domain of the scene: Ω₀ first, then the cells.
pub fn domain_operators(scene: &Scene) -> Result<Vec<SteklovOperator>> {
    let mut ops = Vec::with_capacity(scene.n_domains());
    ops.push(exterior_dtn(&scene.domain(0).curves(), scene.outer())?);
    for i in 1..scene.n_domains() {
        let loops = &scene.domain(i).loops;
        if loops.len() != 1 {
            return Err(EmiError::Topology(format!(
                "cell {i} has {} boundary loops; cells must be simply connected",
                loops.len()
            )));
        }
        ops.push(interior_dtn(&loops[0].curve)?);
    }
    Ok(ops)
}
