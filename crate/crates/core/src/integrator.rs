//! Time stepping of the reduced membrane system
//! `C_m V' = Ψ(V) − I_ion(V, z) − I_stim`, `z' = g(V, z)`
//! with the first-order damped Runge–Kutta–Chebyshev method.
//!
//! The right-hand side is kept split into the stiff linear part
//! `f_F(V) = Ψ(V)/C_m` and the pointwise part `f_S`. Both are advanced in the
//! same Chebyshev stages; the stage count is sized from the spectral radius of
//! `f_F` plus a bound on the diagonal of the Jacobian of `f_S`.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::coupling::CoupledSystem;
use crate::error::{EmiError, Result};
use crate::ionic::{eval_rhs, IonicModel, MembraneState, Stimulus};

/// Real stability interval per squared stage count used for sizing `s`.
pub const STABILITY_SLOPE: f64 = 0.65;

/// Right-hand side `(V', z')` advanced by [`rkc_step`]; `z` is node-major
/// with [`StageRhs::n_state`] entries per node.
pub trait StageRhs {
    fn nodes(&self) -> usize;
    fn n_state(&self) -> usize;
    fn eval(&self, v: &[f64], z: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// `C_m V' = Ψ(V) − I_ion − I_stim`, `z' = g`, split into `f_F + f_S`.
pub struct SplitRhs<'a> {
    psi: DMatrix<f64>,
    model: &'a dyn IonicModel,
    stim: &'a Stimulus,
    c_m: f64,
}

impl<'a> SplitRhs<'a> {
    /// Uses the explicit matrix of `Ψ`, computed once.
    pub fn new(system: &CoupledSystem, model: &'a dyn IonicModel, stim: &'a Stimulus, c_m: f64) -> Result<Self> {
        Self::from_matrix(system.psi_matrix(), model, stim, c_m)
    }

    pub fn from_matrix(psi: DMatrix<f64>, model: &'a dyn IonicModel, stim: &'a Stimulus, c_m: f64) -> Result<Self> {
        if psi.nrows() != psi.ncols() {
            return Err(EmiError::Dimension("Ψ must be square".into()));
        }
        if !(c_m > 0.0) {
            return Err(EmiError::Parameter(format!("membrane capacitance must be positive, got {c_m}")));
        }
        if let Some(&k) = stim.targets.iter().find(|&&k| k >= psi.nrows()) {
            return Err(EmiError::Dimension(format!("stimulus target {k} out of range")));
        }
        Ok(Self { psi, model, stim, c_m })
    }

    pub fn c_m(&self) -> f64 {
        self.c_m
    }

    pub fn model(&self) -> &dyn IonicModel {
        self.model
    }

    pub fn stimulus(&self) -> &Stimulus {
        self.stim
    }

    /// `f_F(V) = Ψ V / C_m`.
    pub fn fast(&self, v: &[f64]) -> Vec<f64> {
        let y = &self.psi * DVector::from_column_slice(v);
        y.iter().map(|x| x / self.c_m).collect()
    }

    /// `f_S(V, z, t) = (−(I_ion + I_stim)/C_m, g)`.
    pub fn slow(&self, v: &[f64], z: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (i_ion, g, i_stim) = eval_rhs(self.model, v, z, t, self.stim)?;
        let dv = i_ion.iter().zip(&i_stim).map(|(a, b)| -(a + b) / self.c_m).collect();
        Ok((dv, g))
    }

    /// Largest ionic stiffness bound over the nodes.
    pub fn slow_stiffness(&self, state: &MembraneState) -> f64 {
        let ns = self.model.n_state();
        state
            .v
            .iter()
            .enumerate()
            .map(|(i, &v)| self.model.stiffness(v, &state.z[i * ns..(i + 1) * ns], self.c_m))
            .fold(0.0, f64::max)
    }

    /// Spectral radius of `f_F`.
    pub fn fast_radius(&self) -> SpectralEstimate {
        let inv = 1.0 / self.c_m;
        estimate_spectral_radius(
            |x, y| {
                let r = &self.psi * DVector::from_column_slice(x);
                for (o, v) in y.iter_mut().zip(r.iter()) {
                    *o = v * inv;
                }
            },
            self.nodes(),
        )
    }
}

impl StageRhs for SplitRhs<'_> {
    fn nodes(&self) -> usize {
        self.psi.nrows()
    }

    fn n_state(&self) -> usize {
        self.model.n_state()
    }

    /// Full right-hand side `f_F + f_S`.
    fn eval(&self, v: &[f64], z: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut dv, dz) = self.slow(v, z, t)?;
        for (d, f) in dv.iter_mut().zip(self.fast(v)) {
            *d += f;
        }
        Ok((dv, dz))
    }
}

/// Result of the power iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
}

const POWER_TOL: f64 = 1e-2;
const POWER_MAX_ITER: usize = 2000;
const POWER_RESTARTS: usize = 3;

/// Spectral radius of a linear map on `ℝ^dim` by power iteration on two
/// consecutive applications (so that pairs `±λ` and real negative spectra
/// converge alike), restarted from a different start vector when a run
/// stalls. The best estimate is returned with `converged = false` if no run
/// settles within the iteration budget.
pub fn estimate_spectral_radius(mut apply: impl FnMut(&[f64], &mut [f64]), dim: usize) -> SpectralEstimate {
    if dim == 0 {
        return SpectralEstimate {
            rho: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    let mut best = 0.0_f64;
    let mut total = 0;
    let mut y = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    for restart in 0..POWER_RESTARTS {
        // deterministic, spread start vector
        let mut x: Vec<f64> = (0..dim)
            .map(|k| 1.0 + ((k as f64 + 1.0) * (0.754_877_666 + restart as f64 * 0.31)).fract())
            .collect();
        let n0 = norm(&x);
        x.iter_mut().for_each(|v| *v /= n0);
        let mut prev = f64::NAN;
        for it in 0..POWER_MAX_ITER {
            total += 1;
            apply(&x, &mut y);
            apply(&y, &mut w);
            let nw = norm(&w);
            if nw == 0.0 {
                // the start vector lies in the kernel of the squared map
                break;
            }
            if !nw.is_finite() {
                return SpectralEstimate {
                    rho: f64::INFINITY,
                    converged: false,
                    iterations: total,
                };
            }
            let rho = nw.sqrt();
            best = best.max(rho);
            x.iter_mut().zip(&w).for_each(|(a, b)| *a = b / nw);
            if it > 2 && (rho - prev).abs() <= 1e-3 * POWER_TOL * rho {
                return SpectralEstimate {
                    rho: best.max(rho),
                    converged: true,
                    iterations: total,
                };
            }
            prev = rho;
        }
    }
    SpectralEstimate {
        rho: best,
        converged: best == 0.0,
        iterations: total,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Chebyshev polynomial `T_s(x)`.
pub fn chebyshev(s: usize, x: f64) -> f64 {
    let sf = s as f64;
    if x.abs() <= 1.0 {
        (sf * x.acos()).cos()
    } else if x > 1.0 {
        (sf * x.acosh()).cosh()
    } else {
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        sign * (sf * (-x).acosh()).cosh()
    }
}

/// Coefficients of the `s`-stage first-order damped RKC method.
#[derive(Clone, Debug, PartialEq)]
pub struct RkcCoefficients {
    pub s: usize,
    pub w0: f64,
    pub w1: f64,
    /// `μ_j`, `ν_j`, `μ̃_j` for `j = 1…s` (index 0 unused), and stage times
    /// `c_j` for `j = 0…s`.
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu_t: Vec<f64>,
    pub c: Vec<f64>,
}

impl RkcCoefficients {
    pub fn new(s: usize, damping: f64) -> Result<Self> {
        if s == 0 {
            return Err(EmiError::Parameter("stage count must be at least 1".into()));
        }
        if !(damping >= 0.0) {
            return Err(EmiError::Parameter(format!("damping must be nonnegative, got {damping}")));
        }
        let sf = s as f64;
        let w0 = 1.0 + damping / (sf * sf);
        // T_j(w0) and T_j'(w0) by the three-term recurrences
        let mut t = vec![0.0; s + 1];
        let mut dt = vec![0.0; s + 1];
        t[0] = 1.0;
        dt[0] = 0.0;
        t[1] = w0;
        dt[1] = 1.0;
        for j in 2..=s {
            t[j] = 2.0 * w0 * t[j - 1] - t[j - 2];
            dt[j] = 2.0 * t[j - 1] + 2.0 * w0 * dt[j - 1] - dt[j - 2];
        }
        let w1 = t[s] / dt[s];
        let b: Vec<f64> = t.iter().map(|x| 1.0 / x).collect();
        let mut mu = vec![0.0; s + 1];
        let mut nu = vec![0.0; s + 1];
        let mut mu_t = vec![0.0; s + 1];
        mu_t[1] = b[1] * w1;
        for j in 2..=s {
            mu[j] = 2.0 * w0 * b[j] / b[j - 1];
            nu[j] = -b[j] / b[j - 2];
            mu_t[j] = 2.0 * w1 * b[j] / b[j - 1];
        }
        let c = (0..=s).map(|j| if j == 0 { 0.0 } else { w1 * dt[j] / t[j] }).collect();
        Ok(Self {
            s,
            w0,
            w1,
            mu,
            nu,
            mu_t,
            c,
        })
    }

    /// Stability polynomial `R_s(z) = T_s(w0 + w1 z) / T_s(w0)`.
    pub fn stability(&self, z: f64) -> f64 {
        chebyshev(self.s, self.w0 + self.w1 * z) / chebyshev(self.s, self.w0)
    }

    /// Left end `−(1 + w0)/w1` of the real stability interval.
    pub fn stability_boundary(&self) -> f64 {
        -(1.0 + self.w0) / self.w1
    }
}

/// How many stages to use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StageChoice {
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperConfig {
    /// Time step (ms).
    pub dt: f64,
    pub stages: StageChoice,
    /// Damping `ε` of the Chebyshev polynomial.
    pub damping: f64,
    /// Multiplier on the spectral radius estimate.
    pub rho_safety: f64,
    /// Steps between refreshes of the ionic stiffness bound.
    pub refresh: usize,
    pub max_stages: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            stages: StageChoice::Auto,
            damping: 0.05,
            rho_safety: 1.2,
            refresh: 50,
            max_stages: 10_000,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(EmiError::Parameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.rho_safety >= 1.0) {
            return Err(EmiError::Parameter("rho safety factor must be at least 1".into()));
        }
        if !(self.damping >= 0.0) {
            return Err(EmiError::Parameter("damping must be nonnegative".into()));
        }
        if self.refresh == 0 || self.max_stages == 0 {
            return Err(EmiError::Parameter("refresh cadence and stage cap must be positive".into()));
        }
        if self.stages == StageChoice::Fixed(0) {
            return Err(EmiError::Parameter("stage count must be at least 1".into()));
        }
        Ok(())
    }

    /// `s = ⌈√(dt·ρ·safety / 0.65)⌉ + 1`, or the fixed count.
    pub fn stage_count(&self, rho: f64) -> Result<usize> {
        let s = match self.stages {
            StageChoice::Fixed(s) => s,
            StageChoice::Auto => {
                let need = self.dt * rho * self.rho_safety / STABILITY_SLOPE;
                if !need.is_finite() {
                    return Err(EmiError::Config(format!("spectral radius {rho} gives no finite stage count")));
                }
                need.sqrt().ceil() as usize + 1
            }
        };
        if s > self.max_stages {
            return Err(EmiError::Config(format!(
                "{s} stages needed for dt·ρ = {:.3e}, cap is {}",
                self.dt * rho,
                self.max_stages
            )));
        }
        Ok(s)
    }
}

/// `|R_s(−dt·ρ)| ≤ 1 + 1e−12`: the step is stable for the estimated spectrum.
pub fn certificate(coeffs: &RkcCoefficients, dt_rho: f64) -> (bool, f64) {
    let r = coeffs.stability(-dt_rho).abs();
    (r <= 1.0 + 1e-12, r)
}

/// One RKC step of size `dt` with the given coefficients.
pub fn rkc_step<R: StageRhs + ?Sized>(
    state: &MembraneState,
    rhs: &R,
    dt: f64,
    coeffs: &RkcCoefficients,
) -> Result<MembraneState> {
    let n = state.v.len();
    if n != rhs.nodes() || state.z.len() != n * rhs.n_state() {
        return Err(EmiError::Dimension(format!(
            "state with {n} nodes does not fit a system with {} nodes",
            rhs.nodes()
        )));
    }
    let fail = |stage: usize, e: EmiError| EmiError::StepFailure {
        stage,
        reason: e.to_string(),
    };
    let t0 = state.t;
    let (mut v_prev, mut z_prev) = (state.v.clone(), state.z.clone());
    let (fv, fz) = rhs.eval(&state.v, &state.z, t0).map_err(|e| fail(0, e))?;
    let mut v_cur: Vec<f64> = v_prev.iter().zip(&fv).map(|(y, f)| y + coeffs.mu_t[1] * dt * f).collect();
    let mut z_cur: Vec<f64> = z_prev.iter().zip(&fz).map(|(y, f)| y + coeffs.mu_t[1] * dt * f).collect();
    check_stage(&v_cur, &z_cur, 1)?;
    for j in 2..=coeffs.s {
        let (fv, fz) = rhs
            .eval(&v_cur, &z_cur, t0 + coeffs.c[j - 1] * dt)
            .map_err(|e| fail(j, e))?;
        // μ_j + ν_j = 1, so μ_j y_{j−1} + ν_j y_{j−2} is written as an
        // increment; a zero right-hand side then leaves the state bit-exact
        let (nu, mt) = (coeffs.nu[j], coeffs.mu_t[j] * dt);
        let v_next: Vec<f64> = (0..n)
            .map(|k| v_cur[k] + nu * (v_prev[k] - v_cur[k]) + mt * fv[k])
            .collect();
        let z_next: Vec<f64> = (0..z_cur.len())
            .map(|k| z_cur[k] + nu * (z_prev[k] - z_cur[k]) + mt * fz[k])
            .collect();
        check_stage(&v_next, &z_next, j)?;
        v_prev = std::mem::replace(&mut v_cur, v_next);
        z_prev = std::mem::replace(&mut z_cur, z_next);
    }
    Ok(MembraneState {
        v: v_cur,
        z: z_cur,
        t: t0 + dt,
    })
}

fn check_stage(v: &[f64], z: &[f64], stage: usize) -> Result<()> {
    if let Some(k) = v.iter().chain(z).position(|x| !x.is_finite()) {
        return Err(EmiError::StepFailure {
            stage,
            reason: format!("non-finite value at component {k}"),
        });
    }
    Ok(())
}

/// What to record during [`simulate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub t_end: f64,
    /// Transmembrane node indices whose voltage is recorded.
    pub probes: Vec<usize>,
    /// Activation threshold (mV).
    pub threshold: f64,
    /// Record probe voltages every this many steps (the first and last
    /// steps are always recorded).
    pub every: usize,
    /// Times (ms) at which the full state is copied.
    pub snapshots: Vec<f64>,
    /// End the run as soon as every probe has activated.
    pub stop_when_activated: bool,
}

impl Recording {
    pub fn new(t_end: f64, probes: Vec<usize>) -> Self {
        Self {
            t_end,
            probes,
            threshold: -20.0,
            every: 1,
            snapshots: Vec::new(),
            stop_when_activated: false,
        }
    }
}

/// Output of [`simulate`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub probes: Vec<usize>,
    pub times: Vec<f64>,
    /// `probe_v[r][p]`: voltage of probe `p` at record `r`.
    pub probe_v: Vec<Vec<f64>>,
    /// First upcrossing of the threshold per probe, linearly interpolated.
    pub activation: Vec<Option<f64>>,
    pub snapshots: Vec<MembraneState>,
    pub final_state: MembraneState,
    /// Stage count and spectral radius used, one entry per refresh.
    pub stage_history: Vec<(f64, usize, f64)>,
    pub rho_fast: SpectralEstimate,
    pub steps: usize,
    pub total_stages: usize,
    /// Largest `|R_s(−dt·ρ)|` seen; at most `1 + 1e−12` when every step was
    /// certified.
    pub worst_certificate: f64,
    pub certified: bool,
    pub wall_time: f64,
    /// Set when a step failed; the trajectory ends at the last good state.
    pub failure: Option<String>,
}

impl Trajectory {
    /// `t_ms,probe,node,V_mV` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_ms,probe,node,V_mV")?;
        for (t, vs) in self.times.iter().zip(&self.probe_v) {
            for (p, (node, v)) in self.probes.iter().zip(vs).enumerate() {
                writeln!(w, "{t:.6},{p},{node},{v:.9e}")?;
            }
        }
        Ok(())
    }

    /// Run metadata as plain text.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps              {}", self.steps);
        let _ = writeln!(s, "final time (ms)    {:.6}", self.final_state.t);
        let _ = writeln!(s, "total stages       {}", self.total_stages);
        let _ = writeln!(
            s,
            "rho(f_F) (1/ms)    {:.6e} ({} power iterations{})",
            self.rho_fast.rho,
            self.rho_fast.iterations,
            if self.rho_fast.converged { "" } else { ", not converged" }
        );
        let _ = writeln!(s, "certificate        {} (max |R| = {:.15})", self.certified, self.worst_certificate);
        let _ = writeln!(s, "wall time (s)      {:.3}", self.wall_time);
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "failure            {f}");
        }
        let _ = writeln!(s, "stage history (t_ms, s, rho_1/ms):");
        for (t, st, rho) in &self.stage_history {
            let _ = writeln!(s, "  {t:.4} {st} {rho:.6e}");
        }
        let _ = writeln!(s, "activation times (ms):");
        for (p, a) in self.probes.iter().zip(&self.activation) {
            match a {
                Some(t) => {
                    let _ = writeln!(s, "  node {p}: {t:.6}");
                }
                None => {
                    let _ = writeln!(s, "  node {p}: none");
                }
            }
        }
        s
    }
}

/// Advance `init` to `rec.t_end` (or until every probe has activated, if
/// requested). A failing step ends the run; the trajectory up to the last
/// good state is returned with the diagnostic in `failure`.
pub fn simulate(init: MembraneState, rhs: &SplitRhs<'_>, cfg: &StepperConfig, rec: &Recording) -> Result<Trajectory> {
    cfg.validate()?;
    if !(rec.t_end > init.t) {
        return Err(EmiError::Parameter("end time must lie after the initial time".into()));
    }
    if let Some(&k) = rec.probes.iter().find(|&&k| k >= rhs.nodes()) {
        return Err(EmiError::Dimension(format!("probe node {k} out of range")));
    }
    let every = rec.every.max(1);
    let clock = Instant::now();
    let rho_fast = rhs.fast_radius();
    let mut snaps: Vec<f64> = rec.snapshots.clone();
    snaps.sort_by(f64::total_cmp);
    let mut snap_iter = snaps.into_iter().peekable();

    let mut out = Trajectory {
        probes: rec.probes.clone(),
        times: vec![init.t],
        probe_v: vec![rec.probes.iter().map(|&k| init.v[k]).collect()],
        activation: vec![None; rec.probes.len()],
        snapshots: Vec::new(),
        final_state: init.clone(),
        stage_history: Vec::new(),
        rho_fast,
        steps: 0,
        total_stages: 0,
        worst_certificate: 0.0,
        certified: true,
        wall_time: 0.0,
        failure: None,
    };
    let mut state = init;
    let mut coeffs: Option<RkcCoefficients> = None;
    let mut rho = 0.0;
    let n_steps = ((rec.t_end - state.t) / cfg.dt - 1e-9).ceil() as usize;
    for step in 0..n_steps {
        while let Some(&ts) = snap_iter.peek() {
            if ts <= state.t + 1e-12 {
                out.snapshots.push(state.clone());
                snap_iter.next();
            } else {
                break;
            }
        }
        if step % cfg.refresh == 0 {
            rho = rho_fast.rho + rhs.slow_stiffness(&state);
            let s = cfg.stage_count(rho)?;
            if coeffs.as_ref().map(|c| c.s) != Some(s) {
                coeffs = Some(RkcCoefficients::new(s, cfg.damping)?);
            }
            out.stage_history.push((state.t, s, rho));
        }
        let c = coeffs.as_ref().expect("coefficients set on the first step");
        let (ok, r) = certificate(c, cfg.dt * rho);
        out.worst_certificate = out.worst_certificate.max(r);
        out.certified &= ok;
        let dt = cfg.dt.min(rec.t_end - state.t);
        let next = match rkc_step(&state, rhs, dt, c) {
            Ok(n) => n,
            Err(e) => {
                out.failure = Some(format!("step {step} at t = {:.6} ms: {e}", state.t));
                break;
            }
        };
        out.steps += 1;
        out.total_stages += c.s;
        for (p, &k) in rec.probes.iter().enumerate() {
            if out.activation[p].is_none() && state.v[k] < rec.threshold && next.v[k] >= rec.threshold {
                let frac = (rec.threshold - state.v[k]) / (next.v[k] - state.v[k]);
                out.activation[p] = Some(state.t + frac * (next.t - state.t));
            }
        }
        state = next;
        let done = rec.stop_when_activated && out.activation.iter().all(Option::is_some);
        if (step + 1) % every == 0 || step + 1 == n_steps || done {
            out.times.push(state.t);
            out.probe_v.push(rec.probes.iter().map(|&k| state.v[k]).collect());
        }
        if done {
            break;
        }
    }
    for ts in snap_iter {
        if ts <= state.t + 1e-12 {
            out.snapshots.push(state.clone());
        }
    }
    out.final_state = state;
    out.wall_time = clock.elapsed().as_secs_f64();
    Ok(out)
}
