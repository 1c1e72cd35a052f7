//! Lagrange-multiplier coupling of the domains: the saddle systems that map
//! the jump data to interface currents, and the reduction to the linear map
//! `Ψ: V_m ↦ λ₀` on the transmembrane boundary.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{EmiError, Result};
use crate::geometry::{Connectivity, Scene};
use crate::linalg::DenseLu;
use crate::steklov::SteklovOperator;

/// Converts `σ ∂u/∂n` with σ in mS/cm, lengths in µm and potentials in mV
/// into a current density in µA/cm².
pub const FLUX_SCALE: f64 = 1e4;

/// Default gap-junction permeability in mS/cm².
pub const KAPPA_DEFAULT: f64 = 690.0;

/// `F = −Σ σ_i⁻¹ B_iᵀ (P_i⁺)⁻¹ B_i` together with the per-domain blocks
/// `(P_i⁺)⁻¹` used for recovering potentials.
#[derive(Debug)]
struct Assembled {
    conn: Connectivity,
    sigma: Vec<f64>,
    inv_plus: Vec<DMatrix<f64>>,
    f: DMatrix<f64>,
    alpha: Vec<f64>,
}

fn assemble(scene: &Scene, ops: &[SteklovOperator], flux_scale: f64) -> Result<Assembled> {
    if ops.len() != scene.n_domains() {
        return Err(EmiError::Dimension(format!(
            "{} Steklov maps for {} domains",
            ops.len(),
            scene.n_domains()
        )));
    }
    if !(flux_scale > 0.0) {
        return Err(EmiError::Parameter("flux scale must be positive".into()));
    }
    let conn = scene.connectivity()?;
    let m = conn.m;
    let mut f = DMatrix::zeros(m, m);
    let mut inv_plus = Vec::with_capacity(ops.len());
    let sigma: Vec<f64> = scene.sigma().iter().map(|s| s * flux_scale).collect();
    for (i, op) in ops.iter().enumerate() {
        let mi = conn.a[i].len();
        if op.dim() != mi {
            return Err(EmiError::Dimension(format!(
                "Steklov map of domain {i} has size {}, boundary has {mi} nodes",
                op.dim()
            )));
        }
        if i > 0 && op.is_unbounded() {
            return Err(EmiError::Parameter(format!("domain {i} is a cell but its map is unbounded")));
        }
        // (P⁺)⁻¹ by solves against unit vectors; B_i only flips signs.
        let inv = op.solve_plus_mat(&DMatrix::identity(mi, mi));
        let (a, b) = (&conn.a[i], &conn.b[i]);
        let w = 1.0 / sigma[i];
        for l in 0..mi {
            for k in 0..mi {
                f[(a[k], a[l])] -= w * b[k] * inv[(k, l)] * b[l];
            }
        }
        inv_plus.push(inv);
    }
    let alpha = ops.iter().map(|o| o.alpha()).collect();
    Ok(Assembled {
        conn,
        sigma,
        inv_plus,
        f,
        alpha,
    })
}

impl Assembled {
    fn n_cells(&self) -> usize {
        self.conn.n_domains() - 1
    }

    /// `G = (B₁ᵀe₁, …, B_Nᵀe_N)`.
    fn g(&self) -> DMatrix<f64> {
        let n = self.n_cells();
        let mut g = DMatrix::zeros(self.conn.m, n);
        for i in 1..=n {
            for (&l, &s) in self.conn.a[i].iter().zip(&self.conn.b[i]) {
                g[(l, i - 1)] = s;
            }
        }
        g
    }

    /// `u_i = −σ_i⁻¹ (P_i⁺)⁻¹ B_i λ + β_i e_i`, `β₀ = 0`.
    fn potentials(&self, lambda: &[f64], beta: &[f64]) -> Vec<DVector<f64>> {
        (0..self.conn.n_domains())
            .map(|i| {
                let bl = DVector::from_vec(self.conn.restrict_signed(i, lambda));
                let mut u = &self.inv_plus[i] * bl * (-1.0 / self.sigma[i]);
                if i > 0 {
                    u.add_scalar_mut(beta[i - 1]);
                }
                u
            })
            .collect()
    }
}

/// Potentials of all domains recovered from a solve.
#[derive(Clone, Debug)]
pub struct Potentials {
    /// `u_i` in the local node order of domain `i`.
    pub u: Vec<DVector<f64>>,
    pub beta: Vec<f64>,
    /// Full multiplier `λ ∈ ℝ^M`.
    pub lambda: Vec<f64>,
    /// Full jump vector `V ∈ ℝ^M` the solve corresponds to.
    pub v: Vec<f64>,
}

impl Potentials {
    /// Neumann data `Ψ_i = −B_i λ` in the local order of domain `i`.
    pub fn fluxes(&self, conn: &Connectivity) -> Vec<Vec<f64>> {
        (0..conn.n_domains())
            .map(|i| conn.restrict_signed(i, &self.lambda).iter().map(|x| -x).collect())
            .collect()
    }
}

/// Saddle system for one cell in Ω₀:
/// `[[F, e], [eᵀ, 0]] (λ, β₁) = (V_m, 0)` in the node order of Γ₁₀.
#[derive(Debug)]
pub struct UnicellSystem {
    asm: Assembled,
    lu: DenseLu,
}

pub fn build_unicell(scene: &Scene, ops: &[SteklovOperator], flux_scale: f64) -> Result<UnicellSystem> {
    if scene.n_cells() != 1 {
        return Err(EmiError::Dimension(format!(
            "unicell system needs one cell, scene has {}",
            scene.n_cells()
        )));
    }
    let asm = assemble(scene, ops, flux_scale)?;
    let lu = DenseLu::factor(saddle(&asm.f, &asm.g()), "unicell saddle system")?;
    Ok(UnicellSystem { asm, lu })
}

fn saddle(f: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = (f.nrows(), g.ncols());
    let mut a = DMatrix::zeros(m + n, m + n);
    a.view_mut((0, 0), (m, m)).copy_from(f);
    a.view_mut((0, m), (m, n)).copy_from(g);
    a.view_mut((m, 0), (n, m)).copy_from(&g.transpose());
    a
}

impl UnicellSystem {
    pub fn f(&self) -> &DMatrix<f64> {
        &self.asm.f
    }

    /// The assembled `(M+1)×(M+1)` saddle matrix.
    pub fn saddle_matrix(&self) -> DMatrix<f64> {
        saddle(&self.asm.f, &self.asm.g())
    }

    /// Solve for `λ` (global node order) and `β₁`.
    pub fn solve(&self, v_m: &[f64]) -> Result<(Vec<f64>, f64)> {
        let m = self.asm.conn.m;
        check_input(v_m, m)?;
        let mut rhs = DVector::zeros(m + 1);
        rhs.rows_mut(0, m).copy_from_slice(v_m);
        let x = self.lu.solve_vec(&rhs);
        Ok((x.rows(0, m).iter().copied().collect(), x[m]))
    }

    /// Transmembrane current `λ₀` in the node order of Γ₀.
    pub fn psi(&self, v_m: &[f64]) -> Result<Vec<f64>> {
        let (lambda, _) = self.solve(v_m)?;
        Ok(self.asm.conn.a0.iter().map(|&l| lambda[l]).collect())
    }

    pub fn recover(&self, v_m: &[f64]) -> Result<Potentials> {
        let (lambda, beta) = self.solve(v_m)?;
        let u = self.asm.potentials(&lambda, &[beta]);
        Ok(Potentials {
            u,
            beta: vec![beta],
            lambda,
            v: v_m.to_vec(),
        })
    }
}

fn check_input(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(EmiError::Dimension(format!("expected {n} values, got {}", v.len())));
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(EmiError::NonFinite {
            what: "voltage input".into(),
            index,
        });
    }
    Ok(())
}

/// Reduced system on the transmembrane boundary:
///
/// ```text
/// [ F₀₀   F₀g        A₀G ] [λ₀]   [V_m]
/// [ Fg₀   Fgg − κ⁻¹I A_gG] [λ_g] = [ 0 ]
/// [ GᵀA₀ᵀ GᵀA_gᵀ     0   ] [β ]   [ 0 ]
/// ```
///
/// factored once; [`CoupledSystem::psi`] is a pair of triangular solves.
#[derive(Debug)]
pub struct CoupledSystem {
    asm: Assembled,
    kappa: f64,
    lu: DenseLu,
    full: OnceLock<std::result::Result<DenseLu, String>>,
}

pub fn build_coupled(scene: &Scene, ops: &[SteklovOperator], kappa: f64, flux_scale: f64) -> Result<CoupledSystem> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(EmiError::Parameter(format!("permeability must be positive, got {kappa}")));
    }
    let asm = assemble(scene, ops, flux_scale)?;
    let lu = DenseLu::factor(reduced_matrix(&asm, kappa), "reduced coupled system")?;
    Ok(CoupledSystem {
        asm,
        kappa,
        lu,
        full: OnceLock::new(),
    })
}

fn reduced_matrix(asm: &Assembled, kappa: f64) -> DMatrix<f64> {
    let c = &asm.conn;
    let idx: Vec<usize> = c.a0.iter().chain(&c.ag).copied().collect();
    let (m0, k, n) = (c.a0.len(), idx.len(), asm.n_cells());
    let g = asm.g();
    let mut a = DMatrix::zeros(k + n, k + n);
    for (r, &lr) in idx.iter().enumerate() {
        for (q, &lq) in idx.iter().enumerate() {
            a[(r, q)] = asm.f[(lr, lq)];
        }
        for j in 0..n {
            a[(r, k + j)] = g[(lr, j)];
            a[(k + j, r)] = g[(lr, j)];
        }
    }
    for r in m0..k {
        a[(r, r)] -= 1.0 / kappa;
    }
    a
}

impl CoupledSystem {
    pub fn connectivity(&self) -> &Connectivity {
        &self.asm.conn
    }

    pub fn m0(&self) -> usize {
        self.asm.conn.a0.len()
    }

    pub fn mg(&self) -> usize {
        self.asm.conn.ag.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alphas(&self) -> &[f64] {
        &self.asm.alpha
    }

    /// Full `F ∈ ℝ^{M×M}` in global node order.
    pub fn f(&self) -> &DMatrix<f64> {
        &self.asm.f
    }

    pub fn g(&self) -> DMatrix<f64> {
        self.asm.g()
    }

    /// The assembled reduced matrix.
    pub fn reduced_matrix(&self) -> DMatrix<f64> {
        reduced_matrix(&self.asm, self.kappa)
    }

    /// `(λ₀, λ_g, β)`.
    pub fn solve(&self, v_m: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (m0, mg) = (self.m0(), self.mg());
        check_input(v_m, m0)?;
        let mut rhs = DVector::zeros(self.lu.dim());
        rhs.rows_mut(0, m0).copy_from_slice(v_m);
        self.lu.solve_in_place(&mut rhs);
        let x = rhs.as_slice();
        Ok((
            x[..m0].to_vec(),
            x[m0..m0 + mg].to_vec(),
            x[m0 + mg..].to_vec(),
        ))
    }

    /// `Ψ(V_m) = λ₀`.
    pub fn psi(&self, v_m: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(v_m)?.0)
    }

    /// Matrix of `Ψ`, one column per unit input (for spectral analysis).
    pub fn psi_matrix(&self) -> DMatrix<f64> {
        let m0 = self.m0();
        let mut rhs = DMatrix::zeros(self.lu.dim(), m0);
        for k in 0..m0 {
            rhs[(k, k)] = 1.0;
        }
        self.lu.solve_mat(&rhs).rows(0, m0).into_owned()
    }

    /// Potentials in every domain for the transmembrane voltage `v_m`, with
    /// the gap voltage `V_g = λ_g / κ`.
    pub fn recover_all_potentials(&self, v_m: &[f64]) -> Result<Potentials> {
        let (l0, lg, beta) = self.solve(v_m)?;
        let c = &self.asm.conn;
        let mut lambda = vec![0.0; c.m];
        let mut v = vec![0.0; c.m];
        for (k, &l) in c.a0.iter().enumerate() {
            lambda[l] = l0[k];
            v[l] = v_m[k];
        }
        for (k, &l) in c.ag.iter().enumerate() {
            lambda[l] = lg[k];
            v[l] = lg[k] / self.kappa;
        }
        let u = self.asm.potentials(&lambda, &beta);
        Ok(Potentials { u, beta, lambda, v })
    }

    /// Solve the full saddle system `[[F, G], [Gᵀ, 0]] (λ, β) = (V, 0)` for a
    /// jump vector `V` given on every node, without any gap-junction law.
    pub fn solve_full(&self, v: &[f64]) -> Result<Potentials> {
        let c = &self.asm.conn;
        check_input(v, c.m)?;
        let lu = self
            .full
            .get_or_init(|| {
                DenseLu::factor(saddle(&self.asm.f, &self.asm.g()), "full saddle system")
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| EmiError::Singular {
                what: e.clone(),
                estimate: f64::INFINITY,
            })?;
        let mut rhs = DVector::zeros(lu.dim());
        rhs.rows_mut(0, c.m).copy_from_slice(v);
        lu.solve_in_place(&mut rhs);
        let lambda = rhs.as_slice()[..c.m].to_vec();
        let beta = rhs.as_slice()[c.m..].to_vec();
        let u = self.asm.potentials(&lambda, &beta);
        Ok(Potentials {
            u,
            beta,
            lambda,
            v: v.to_vec(),
        })
    }
}
