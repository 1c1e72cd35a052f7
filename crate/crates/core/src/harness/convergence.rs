//! Convergence of the maps `Ψ_i` on the four circle-based test geometries.

use std::fmt;
use std::str::FromStr;

use crate::coupling::{build_coupled, CoupledSystem, Potentials, KAPPA_DEFAULT};
use crate::error::{EmiError, Result};
use crate::geometry::{build_single_cell, build_split_circle, Point, Scene, SplitCircle};
use crate::harness::{l2_norm, quotient_norm};
use crate::steklov::domain_operators;

const RADIUS: f64 = 2.0;
const OUTER_RADIUS: f64 = 4.0;
const GAP: f64 = 0.4;
const FILLET: f64 = 0.2;
/// Refinement of the reference mesh beyond the finest level for geometries
/// without a closed form solution.
pub const REFERENCE_FACTOR: usize = 4;

/// (a) one disc, (b) disc split by a junction, (c) two separated half discs,
/// (d) as (c) with rounded corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvGeometry {
    A,
    B,
    C,
    D,
}

impl FromStr for ConvGeometry {
    type Err = EmiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "d" => Ok(Self::D),
            other => Err(EmiError::Parameter(format!("unknown geometry '{other}', expected a, b, c or d"))),
        }
    }
}

impl fmt::Display for ConvGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
            Self::D => "d",
        };
        f.write_str(c)
    }
}

impl ConvGeometry {
    /// Default discretization levels of the study.
    pub fn default_levels(self) -> Vec<usize> {
        match self {
            Self::A => vec![16, 32, 64, 128],
            Self::B => vec![64, 128, 256, 512, 1024],
            Self::C | Self::D => vec![64, 128, 256, 512],
        }
    }

    /// Scene at level `m`: nodes per curve for (a), approximate nodes per
    /// cell boundary otherwise, with every piece refined `refine` times.
    pub fn scene(self, m: usize, refine: usize) -> Result<Scene> {
        match self {
            Self::A => build_single_cell(RADIUS, OUTER_RADIUS, m * refine),
            Self::B | Self::C | Self::D => {
                let (gap, fillet) = match self {
                    Self::B => (0.0, 0.0),
                    Self::C => (GAP, 0.0),
                    _ => (GAP, FILLET),
                };
                let mut p = SplitCircle::new(RADIUS, OUTER_RADIUS, gap, fillet, m);
                p.refine = refine;
                build_split_circle(&p)
            }
        }
    }
}

/// Closed-form solution on the annulus `2 < r < 4` with the disc inside,
/// also valid for the split disc: `u₀ = (σ₁/σ₀)(16 + r²)/(6r²)·x₂`,
/// `u_i = −x₂/2`. It satisfies `σ₀∂_n u₀ = σ₁∂_n u_i` at `r = 2` and
/// `∂_n u₀ = 0` at `r = 4`.
#[derive(Clone, Copy, Debug)]
pub struct ExactPair {
    pub sigma0: f64,
    pub sigma1: f64,
}

impl ExactPair {
    pub fn u(&self, domain: usize, x: Point) -> f64 {
        if domain == 0 {
            let r2 = x.norm_squared();
            self.sigma1 / self.sigma0 * (16.0 + r2) / (6.0 * r2) * x.y
        } else {
            -0.5 * x.y
        }
    }

    pub fn grad(&self, domain: usize, x: Point) -> Point {
        if domain == 0 {
            let r2 = x.norm_squared();
            let f = (16.0 + r2) / (6.0 * r2);
            let df_dr_over_r = -32.0 / (6.0 * r2 * r2);
            Point::new(0.0, f) * (self.sigma1 / self.sigma0) + x * (x.y * df_dr_over_r * self.sigma1 / self.sigma0)
        } else {
            Point::new(0.0, -0.5)
        }
    }
}

/// Errors on the traces (`e0`, modulo constants) and on the Neumann data
/// (`e1`), maximum over the domains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorPair {
    pub e0: f64,
    pub e1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvRow {
    /// Level parameter as passed in.
    pub level: usize,
    /// Total number of collocation nodes `M`.
    pub m: usize,
    pub errors: ErrorPair,
}

fn solve(scene: &Scene, v: &[f64]) -> Result<(CoupledSystem, Potentials)> {
    let ops = domain_operators(scene)?;
    let sys = build_coupled(scene, &ops, KAPPA_DEFAULT, 1.0)?;
    let pots = sys.solve_full(v)?;
    Ok((sys, pots))
}

/// Jump vector `V = Σ B_iᵀ u_i` of a field given per domain.
fn jumps(scene: &Scene, u: impl Fn(usize, Point) -> f64) -> Vec<f64> {
    (0..scene.m())
        .map(|l| {
            let (i, j) = scene.node_owner(l);
            let x = scene.nodes()[l];
            u(i, x) - u(j, x)
        })
        .collect()
}

/// Errors of the computed traces and fluxes against the exact pair.
pub fn exact_errors(scene: &Scene, pots: &Potentials, sys: &CoupledSystem, exact: &ExactPair) -> ErrorPair {
    let fluxes = pots.fluxes(sys.connectivity());
    let mut out = ErrorPair { e0: 0.0, e1: 0.0 };
    for i in 0..scene.n_domains() {
        let x = scene.domain_nodes(i);
        let n = scene.domain_normals(i);
        let w = scene.domain(i).weights();
        let du: Vec<f64> = x.iter().zip(pots.u[i].iter()).map(|(p, u)| u - exact.u(i, *p)).collect();
        let sigma = scene.sigma()[i];
        let dq: Vec<f64> = x
            .iter()
            .zip(&n)
            .zip(&fluxes[i])
            .map(|((p, n), q)| q - sigma * exact.grad(i, *p).dot(n))
            .collect();
        out.e0 = out.e0.max(quotient_norm(&du, &w));
        out.e1 = out.e1.max(l2_norm(&dq, &w));
    }
    out
}

/// Datum used where no closed form is available.
pub fn smooth_datum(x: Point) -> f64 {
    (std::f64::consts::PI * x.x).cos() * (std::f64::consts::PI * x.y).sin()
}

fn inverse_index(a: &[usize], m: usize) -> Vec<usize> {
    let mut inv = vec![usize::MAX; m];
    for (k, &l) in a.iter().enumerate() {
        inv[l] = k;
    }
    inv
}

/// Errors of a coarse solve against a reference solve on a nested mesh.
fn reference_errors(
    coarse: &Scene,
    cp: &Potentials,
    cs: &CoupledSystem,
    fine: &Scene,
    fp: &Potentials,
    fs: &CoupledSystem,
    factor: usize,
) -> Result<ErrorPair> {
    let nest = coarse.nested_indices(fine, factor)?;
    let (cf, ff) = (cp.fluxes(cs.connectivity()), fp.fluxes(fs.connectivity()));
    let mut out = ErrorPair { e0: 0.0, e1: 0.0 };
    for i in 0..coarse.n_domains() {
        let ca = &cs.connectivity().a[i];
        let inv = inverse_index(&fs.connectivity().a[i], fine.m());
        let w = coarse.domain(i).weights();
        let mut du = Vec::with_capacity(ca.len());
        let mut dq = Vec::with_capacity(ca.len());
        for (k, &l) in ca.iter().enumerate() {
            let kf = inv[nest[l]];
            if kf == usize::MAX {
                return Err(EmiError::Topology("reference node missing from domain".into()));
            }
            du.push(cp.u[i][k] - fp.u[i][kf]);
            dq.push(cf[i][k] - ff[i][kf]);
        }
        out.e0 = out.e0.max(quotient_norm(&du, &w));
        out.e1 = out.e1.max(l2_norm(&dq, &w));
    }
    Ok(out)
}

/// Run the study on `levels`. Geometries (a) and (b) are compared with the
/// closed-form pair; (c) and (d) with a solve on a mesh refined
/// [`REFERENCE_FACTOR`] times beyond the finest level, driven by
/// `V = cos(πx₁) sin(πx₂)`. Every level is built as a refinement of the
/// coarsest one, so for (c) and (d) the levels must be integer multiples of
/// the smallest.
pub fn run_convergence(geom: ConvGeometry, levels: &[usize]) -> Result<Vec<ConvRow>> {
    let base = *levels
        .iter()
        .min()
        .ok_or_else(|| EmiError::Parameter("no discretization levels given".into()))?;
    let nested = levels.iter().all(|&m| m % base == 0);
    let level_scene = |m: usize| {
        if nested {
            geom.scene(base, m / base)
        } else {
            geom.scene(m, 1)
        }
    };
    let mut rows = Vec::with_capacity(levels.len());
    match geom {
        ConvGeometry::A | ConvGeometry::B => {
            for &m in levels {
                let scene = level_scene(m)?;
                let exact = ExactPair {
                    sigma0: scene.sigma()[0],
                    sigma1: scene.sigma()[1],
                };
                let v = jumps(&scene, |i, x| exact.u(i, x));
                let (sys, pots) = solve(&scene, &v)?;
                rows.push(ConvRow {
                    level: m,
                    m: scene.m(),
                    errors: exact_errors(&scene, &pots, &sys, &exact),
                });
            }
        }
        ConvGeometry::C | ConvGeometry::D => {
            if !nested {
                return Err(EmiError::Parameter(format!(
                    "levels must be multiples of the coarsest level {base} to nest in the reference"
                )));
            }
            let finest = *levels.iter().max().unwrap();
            let fine = geom.scene(base, REFERENCE_FACTOR * finest / base)?;
            let coarse: Vec<Scene> = levels.iter().map(|&m| level_scene(m)).collect::<Result<_>>()?;
            if coarse.iter().any(|s| s.m() >= fine.m()) {
                return Err(EmiError::Parameter("reference mesh is not strictly finer".into()));
            }
            let fv: Vec<f64> = fine.nodes().iter().map(|&x| smooth_datum(x)).collect();
            let (fs, fp) = solve(&fine, &fv)?;
            for (&m, scene) in levels.iter().zip(&coarse) {
                let v: Vec<f64> = scene.nodes().iter().map(|&x| smooth_datum(x)).collect();
                let (sys, pots) = solve(scene, &v)?;
                let factor = REFERENCE_FACTOR * finest / m;
                rows.push(ConvRow {
                    level: m,
                    m: scene.m(),
                    errors: reference_errors(scene, &pots, &sys, &fine, &fp, &fs, factor)?,
                });
            }
        }
    }
    Ok(rows)
}

/// Write `level,M,e0,e1` rows; the test geometries are nondimensional.
pub fn write_csv<W: std::io::Write>(rows: &[ConvRow], mut w: W) -> Result<()> {
    writeln!(w, "level_nodes,m_nodes,e0_nondim,e1_nondim")?;
    for r in rows {
        writeln!(w, "{},{},{:.6e},{:.6e}", r.level, r.m, r.errors.e0, r.errors.e1)?;
    }
    Ok(())
}
