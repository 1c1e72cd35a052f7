//! Membrane models on the transmembrane nodes and the stimulus current.
//!
//! Units: V in mV, t in ms, currents in µA/cm², capacitance in µF/cm².

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{EmiError, Result};

/// Pointwise membrane dynamics `I_ion(V, z)` and `z' = g(V, z)`.
pub trait IonicModel: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of state variables per node (width of `z`).
    fn n_state(&self) -> usize;

    /// Resting potential and state; an equilibrium of the model.
    fn rest(&self) -> (f64, Vec<f64>);

    fn i_ion(&self, v: f64, z: &[f64]) -> f64;

    fn gating(&self, v: f64, z: &[f64], out: &mut [f64]);

    /// Bounds of each state variable, `None` when unconstrained.
    fn bounds(&self) -> Vec<Option<(f64, f64)>>;

    /// Physiological voltage range `(min, max)`.
    fn v_range(&self) -> (f64, f64);

    /// Upper bound on the magnitude of the diagonal of the Jacobian of
    /// `(−I_ion/C_m, g)` at `(v, z)`, in 1/ms.
    fn stiffness(&self, v: f64, z: &[f64], c_m: f64) -> f64;
}

/// Two-variable model of Mitchell and Schaeffer with gate `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitchellSchaeffer {
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    pub v_gate: f64,
    pub v_rest: f64,
    pub v_peak: f64,
    pub c_m: f64,
}

impl Default for MitchellSchaeffer {
    fn default() -> Self {
        Self {
            tau_in: 0.3,
            tau_out: 6.0,
            tau_open: 120.0,
            tau_close: 150.0,
            v_gate: 0.13,
            v_rest: -85.0,
            v_peak: 15.0,
            c_m: 1.0,
        }
    }
}

impl MitchellSchaeffer {
    fn normalized(&self, v: f64) -> f64 {
        (v - self.v_rest) / (self.v_peak - self.v_rest)
    }
}

impl IonicModel for MitchellSchaeffer {
    fn name(&self) -> &'static str {
        "mitchell-schaeffer"
    }

    fn n_state(&self) -> usize {
        1
    }

    fn rest(&self) -> (f64, Vec<f64>) {
        (self.v_rest, vec![1.0])
    }

    fn i_ion(&self, v: f64, z: &[f64]) -> f64 {
        let u = self.normalized(v);
        let h = z[0];
        let j = h * u * u * (1.0 - u) / self.tau_in - u / self.tau_out;
        -self.c_m * (self.v_peak - self.v_rest) * j
    }

    fn gating(&self, v: f64, z: &[f64], out: &mut [f64]) {
        let h = z[0];
        out[0] = if self.normalized(v) < self.v_gate {
            (1.0 - h) / self.tau_open
        } else {
            -h / self.tau_close
        };
    }

    fn bounds(&self) -> Vec<Option<(f64, f64)>> {
        vec![Some((0.0, 1.0))]
    }

    fn v_range(&self) -> (f64, f64) {
        let span = self.v_peak - self.v_rest;
        (self.v_rest - 0.2 * span, self.v_peak + 0.2 * span)
    }

    fn stiffness(&self, v: f64, z: &[f64], c_m: f64) -> f64 {
        let u = self.normalized(v);
        let dj = z[0].abs() * (2.0 * u - 3.0 * u * u).abs() / self.tau_in + 1.0 / self.tau_out;
        let dv = dj * self.c_m / c_m;
        let dh = 1.0 / self.tau_open.min(self.tau_close);
        dv.max(dh)
    }
}

/// FitzHugh–Nagumo model `v' = v − v³/3 − w`, `w' = ε(v + a − b w)`, with
/// the dimensionless `v` mapped to `V = v_offset + v_scale·v` mV and time
/// measured in units of `tau` ms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitzHughNagumo {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub v_offset: f64,
    pub v_scale: f64,
    pub tau: f64,
    pub c_m: f64,
}

impl Default for FitzHughNagumo {
    fn default() -> Self {
        Self {
            a: 0.7,
            b: 0.8,
            epsilon: 0.08,
            v_offset: -30.0,
            v_scale: 30.0,
            tau: 1.0,
            c_m: 1.0,
        }
    }
}

impl FitzHughNagumo {
    fn to_dimless(&self, v: f64) -> f64 {
        (v - self.v_offset) / self.v_scale
    }

    /// Fixed point `(v*, w*)` of the dimensionless system by Newton's method.
    pub fn fixed_point(&self) -> (f64, f64) {
        // v − v³/3 − (v + a)/b = 0
        let mut v = -1.2;
        for _ in 0..100 {
            let f = v - v * v * v / 3.0 - (v + self.a) / self.b;
            let df = 1.0 - v * v - 1.0 / self.b;
            let dv = f / df;
            v -= dv;
            if dv.abs() < 1e-15 {
                break;
            }
        }
        (v, (v + self.a) / self.b)
    }
}

impl IonicModel for FitzHughNagumo {
    fn name(&self) -> &'static str {
        "fitzhugh-nagumo"
    }

    fn n_state(&self) -> usize {
        1
    }

    fn rest(&self) -> (f64, Vec<f64>) {
        let (v, w) = self.fixed_point();
        (self.v_offset + self.v_scale * v, vec![w])
    }

    fn i_ion(&self, v: f64, z: &[f64]) -> f64 {
        let x = self.to_dimless(v);
        -self.c_m * self.v_scale * (x - x * x * x / 3.0 - z[0]) / self.tau
    }

    fn gating(&self, v: f64, z: &[f64], out: &mut [f64]) {
        let x = self.to_dimless(v);
        out[0] = self.epsilon * (x + self.a - self.b * z[0]) / self.tau;
    }

    fn bounds(&self) -> Vec<Option<(f64, f64)>> {
        vec![None]
    }

    fn v_range(&self) -> (f64, f64) {
        (self.v_offset - 2.5 * self.v_scale, self.v_offset + 2.5 * self.v_scale)
    }

    fn stiffness(&self, v: f64, _z: &[f64], c_m: f64) -> f64 {
        let x = self.to_dimless(v);
        let dv = (1.0 - x * x).abs() / self.tau * self.c_m / c_m;
        dv.max(self.epsilon * self.b / self.tau)
    }
}

/// The membrane models shipped with the crate.
pub fn builtin_models() -> Vec<Box<dyn IonicModel>> {
    vec![
        Box::new(MitchellSchaeffer::default()),
        Box::new(FitzHughNagumo::default()),
    ]
}

/// Model selection as written in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelChoice {
    MitchellSchaeffer(MitchellSchaeffer),
    FitzhughNagumo(FitzHughNagumo),
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice::MitchellSchaeffer(MitchellSchaeffer::default())
    }
}

impl ModelChoice {
    pub fn build(&self) -> Box<dyn IonicModel> {
        match self {
            ModelChoice::MitchellSchaeffer(m) => Box::new(m.clone()),
            ModelChoice::FitzhughNagumo(m) => Box::new(m.clone()),
        }
    }

    /// Membrane capacitance (µF/cm²).
    pub fn c_m(&self) -> f64 {
        match self {
            ModelChoice::MitchellSchaeffer(m) => m.c_m,
            ModelChoice::FitzhughNagumo(m) => m.c_m,
        }
    }
}

/// Current `amplitude` (µA/cm², added to `I_ion`, so negative values
/// depolarize) applied on `targets` during `[start, start + duration)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stimulus {
    pub amplitude: f64,
    pub start: f64,
    pub duration: f64,
    /// Indices into the transmembrane node ordering.
    pub targets: Vec<usize>,
}

impl Stimulus {
    pub fn new(amplitude: f64, start: f64, duration: f64, targets: Vec<usize>) -> Result<Self> {
        if !(duration > 0.0) || !amplitude.is_finite() || !start.is_finite() {
            return Err(EmiError::Parameter(format!(
                "stimulus needs a positive duration and finite amplitude/start, got {amplitude}, {start}, {duration}"
            )));
        }
        Ok(Self {
            amplitude,
            start,
            duration,
            targets,
        })
    }

    /// No stimulus at all.
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            start: 0.0,
            duration: f64::MIN_POSITIVE,
            targets: Vec::new(),
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }

    /// Write `I_stim(t)` for every node into `out`.
    pub fn current(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        if self.is_active(t) {
            for &k in &self.targets {
                out[k] = self.amplitude;
            }
        }
    }
}

/// Voltage and state on the transmembrane nodes; `z` is node-major with
/// `n_state` entries per node.
#[derive(Clone, Debug, PartialEq)]
pub struct MembraneState {
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub t: f64,
}

impl MembraneState {
    /// Every node at the model's rest state.
    pub fn at_rest(model: &dyn IonicModel, nodes: usize) -> Self {
        let (v, z) = model.rest();
        Self {
            v: vec![v; nodes],
            z: z.iter().copied().cycle().take(nodes * z.len()).collect(),
            t: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Write `t,node,V,z0,z1,…` rows.
    pub fn write_csv<W: std::io::Write>(&self, n_state: usize, mut w: W, header: bool) -> Result<()> {
        if header {
            write!(w, "t_ms,node,V_mV")?;
            for k in 0..n_state {
                write!(w, ",z{k}")?;
            }
            writeln!(w)?;
        }
        for (i, v) in self.v.iter().enumerate() {
            write!(w, "{},{i},{v}", self.t)?;
            for k in 0..n_state {
                write!(w, ",{}", self.z[i * n_state + k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Nodewise `I_ion`, `g` and `I_stim` at time `t`.
pub fn eval_rhs(
    model: &dyn IonicModel,
    v: &[f64],
    z: &[f64],
    t: f64,
    stim: &Stimulus,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let ns = model.n_state();
    if z.len() != v.len() * ns {
        return Err(EmiError::Dimension(format!(
            "{} state values for {} nodes with {ns} states each",
            z.len(),
            v.len()
        )));
    }
    if let Some(&k) = stim.targets.iter().find(|&&k| k >= v.len()) {
        return Err(EmiError::Dimension(format!("stimulus target {k} out of range")));
    }
    let mut i_ion = vec![0.0; v.len()];
    let mut g = vec![0.0; z.len()];
    for (i, &vi) in v.iter().enumerate() {
        let zi = &z[i * ns..(i + 1) * ns];
        i_ion[i] = model.i_ion(vi, zi);
        model.gating(vi, zi, &mut g[i * ns..(i + 1) * ns]);
        if !i_ion[i].is_finite() || g[i * ns..(i + 1) * ns].iter().any(|x| !x.is_finite()) {
            return Err(EmiError::NonFinite {
                what: "ionic right-hand side".into(),
                index: i,
            });
        }
    }
    let mut i_stim = vec![0.0; v.len()];
    stim.current(t, &mut i_stim);
    Ok((i_ion, g, i_stim))
}
