//! Run configuration read from TOML.
//!
//! ```toml
//! [geometry]
//! kind = "cell-array"
//! rows = 2
//! cols = 10
//! c_w = 20.0
//! c_l = 100.0
//! bath_w = 440.0
//! bath_l = 2000.0
//!
//! [protocol]
//! p_offset = 0.5
//! q_offset = 3.5
//! dx = 10.0
//!
//! [membrane]
//! model = "mitchell-schaeffer"
//!
//! [time]
//! dt = 0.02
//! t_end = 20.0
//! ```
//!
//! Every section and field not given takes the default shown by
//! [`RunConfig::default`]. Lengths are in µm, conductivities in mS/cm,
//! permeabilities in mS/cm², currents in µA/cm² and times in ms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coupling::KAPPA_DEFAULT;
use crate::error::{EmiError, Result};
use crate::geometry::{
    build_cell_array, build_single_cell, build_split_circle, CellArray, Junction, Scene, SplitCircle, SIGMA_EXTRA,
    SIGMA_INTRA,
};
use crate::integrator::{StageChoice, StepperConfig};
use crate::ionic::ModelChoice;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub conductivity: ConductivityConfig,
    /// Membrane model, tagged by `model`; its `c_m` is the capacitance.
    pub membrane: ModelChoice,
    pub stimulus: StimulusConfig,
    pub time: TimeConfig,
    pub protocol: ProtocolConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometryConfig {
    CellArray {
        #[serde(default = "d_rows")]
        rows: usize,
        #[serde(default = "d_cols")]
        cols: usize,
        #[serde(default = "d_cw")]
        c_w: f64,
        #[serde(default = "d_cl")]
        c_l: f64,
        /// Bath extent; when absent the bath keeps `bath_margin` around the
        /// block on every side.
        #[serde(default)]
        bath_w: Option<f64>,
        #[serde(default)]
        bath_l: Option<f64>,
        #[serde(default = "d_margin")]
        bath_margin: [f64; 2],
        #[serde(default = "d_junction")]
        junction: Junction,
        #[serde(default = "d_dx")]
        dx: f64,
        /// Spacing on Σ; four times `dx` when absent.
        #[serde(default)]
        dx_outer: Option<f64>,
    },
    SingleCell {
        inner_radius: f64,
        outer_radius: f64,
        nodes: usize,
    },
    SplitCircle {
        radius: f64,
        outer_radius: f64,
        #[serde(default)]
        gap: f64,
        #[serde(default)]
        fillet: f64,
        nodes_per_cell: usize,
    },
}

fn d_rows() -> usize {
    2
}
fn d_cols() -> usize {
    30
}
fn d_cw() -> f64 {
    20.0
}
fn d_cl() -> f64 {
    100.0
}
fn d_margin() -> [f64; 2] {
    [200.0, 500.0]
}
fn d_junction() -> Junction {
    Junction::Flat
}
fn d_dx() -> f64 {
    10.0
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig::CellArray {
            rows: d_rows(),
            cols: d_cols(),
            c_w: d_cw(),
            c_l: d_cl(),
            bath_w: Some(440.0),
            bath_l: Some(5000.0),
            bath_margin: d_margin(),
            junction: Junction::Flat,
            dx: d_dx(),
            dx_outer: None,
        }
    }
}

impl GeometryConfig {
    /// The cell array described, if this is one. The bath is derived from
    /// the margins `[across, along]` when its extent is not given.
    pub fn cell_array(&self) -> Option<CellArray> {
        match *self {
            GeometryConfig::CellArray {
                rows,
                cols,
                c_w,
                c_l,
                bath_w,
                bath_l,
                bath_margin,
                junction,
                dx,
                dx_outer,
            } => {
                let bw = bath_w.unwrap_or(rows as f64 * c_w + 2.0 * bath_margin[0]);
                let bl = bath_l.unwrap_or(cols as f64 * c_l + 2.0 * bath_margin[1]);
                let mut a = CellArray::new(rows, cols, c_w, c_l, bw, bl, dx);
                a.junction = junction;
                if let Some(d) = dx_outer {
                    a.dx_outer = d;
                }
                Some(a)
            }
            _ => None,
        }
    }

    /// Set the node spacing of a cell array; other geometries are sized by
    /// node counts and reject it.
    pub fn set_dx(&mut self, spacing: f64) -> Result<()> {
        match self {
            GeometryConfig::CellArray { dx, .. } => {
                *dx = spacing;
                Ok(())
            }
            _ => Err(EmiError::Config("node spacing applies to cell arrays only".into())),
        }
    }

    pub fn build(&self) -> Result<Scene> {
        match *self {
            GeometryConfig::CellArray { .. } => build_cell_array(&self.cell_array().expect("cell array")),
            GeometryConfig::SingleCell {
                inner_radius,
                outer_radius,
                nodes,
            } => build_single_cell(inner_radius, outer_radius, nodes),
            GeometryConfig::SplitCircle {
                radius,
                outer_radius,
                gap,
                fillet,
                nodes_per_cell,
            } => build_split_circle(&SplitCircle::new(radius, outer_radius, gap, fillet, nodes_per_cell)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConductivityConfig {
    pub sigma_i: f64,
    pub sigma_e: f64,
    pub kappa: f64,
}

impl Default for ConductivityConfig {
    fn default() -> Self {
        Self {
            sigma_i: SIGMA_INTRA,
            sigma_e: SIGMA_EXTRA,
            kappa: KAPPA_DEFAULT,
        }
    }
}

/// Which transmembrane nodes receive the stimulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StimulusTarget {
    /// Every cell of the first column of a cell array.
    LeftColumn,
    /// The listed cells (1-based domain indices).
    Cells(Vec<usize>),
    /// Every transmembrane node.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusConfig {
    /// Added to `I_ion`: negative values depolarize.
    pub amplitude: f64,
    pub start: f64,
    pub duration: f64,
    pub target: StimulusTarget,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        Self {
            amplitude: -300.0,
            start: 0.0,
            duration: 1.0,
            target: StimulusTarget::LeftColumn,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Stage count; 0 selects it from the spectral radius.
    pub stages: usize,
    pub damping: f64,
    pub rho_safety: f64,
    pub refresh: usize,
    pub max_stages: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        let s = StepperConfig::default();
        Self {
            dt: s.dt,
            t_end: 40.0,
            stages: 0,
            damping: s.damping,
            rho_safety: s.rho_safety,
            refresh: s.refresh,
            max_stages: s.max_stages,
        }
    }
}

impl TimeConfig {
    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            stages: if self.stages == 0 {
                StageChoice::Auto
            } else {
                StageChoice::Fixed(self.stages)
            },
            damping: self.damping,
            rho_safety: self.rho_safety,
            refresh: self.refresh,
            max_stages: self.max_stages,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Activation threshold (mV).
    pub threshold: f64,
    /// Probes `p_k = ((p_offset + k)·c_l, 0)` and `q_k = ((q_offset + k)·c_l, 0)`.
    pub p_offset: f64,
    pub q_offset: f64,
    pub probe_pairs: usize,
    /// Reference velocity (µm/ms) for the relative error.
    pub reference_cv: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            threshold: -20.0,
            p_offset: 7.5,
            q_offset: 17.5,
            probe_pairs: 5,
            reference_cv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Record probe voltages every this many steps.
    pub record_every: usize,
    /// Transmembrane node indices to record in `simulate`; the protocol
    /// probes of a cell array are used when empty.
    pub probes: Vec<usize>,
    /// Times (ms) of full-state snapshots.
    pub snapshots: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            record_every: 5,
            probes: Vec::new(),
            snapshots: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| EmiError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EmiError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.conductivity;
        if !(c.sigma_i > 0.0 && c.sigma_e > 0.0 && c.kappa > 0.0) {
            return Err(EmiError::Config("conductivities and permeability must be positive".into()));
        }
        if !(self.membrane.c_m() > 0.0) {
            return Err(EmiError::Config("membrane capacitance must be positive".into()));
        }
        if !(self.stimulus.duration > 0.0) {
            return Err(EmiError::Config("stimulus duration must be positive".into()));
        }
        if !(self.time.t_end > 0.0) {
            return Err(EmiError::Config("end time must be positive".into()));
        }
        self.time.stepper().validate().map_err(|e| EmiError::Config(e.to_string()))?;
        let p = &self.protocol;
        if p.probe_pairs == 0 || !(p.q_offset > p.p_offset) {
            return Err(EmiError::Config("need at least one probe pair with q_offset > p_offset".into()));
        }
        if let Some(r) = p.reference_cv {
            if !(r > 0.0) {
                return Err(EmiError::Config("reference velocity must be positive".into()));
            }
        }
        if let GeometryConfig::CellArray { cols, .. } = self.geometry {
            if p.q_offset + p.probe_pairs as f64 >= cols as f64 {
                return Err(EmiError::Config(format!(
                    "probe q_{} lies beyond the {cols} columns of the array",
                    p.probe_pairs
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections() {
        let cfg = RunConfig::from_toml(
            r#"
            [geometry]
            kind = "cell-array"
            cols = 12
            bath_margin = [200.0, 500.0]
            junction = { kind = "sinusoid", a = 0.5, k = 3 }

            [protocol]
            p_offset = 0.5
            q_offset = 3.5

            [membrane]
            model = "fitzhugh-nagumo"
            epsilon = 0.1

            [time]
            dt = 0.01
            "#,
        )
        .unwrap();
        let a = cfg.geometry.cell_array().unwrap();
        assert_eq!(a.cols, 12);
        assert_eq!(a.junction, Junction::Sinusoid { a: 0.5, k: 3 });
        assert_eq!(a.bath_l, 12.0 * 100.0 + 1000.0);
        assert_eq!(cfg.time.dt, 0.01);
        match cfg.membrane {
            ModelChoice::FitzhughNagumo(m) => assert_eq!(m.epsilon, 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("[time]\ndtt = 0.1").is_err());
        assert!(RunConfig::from_toml("[conductivity]\nkappa = -1.0").is_err());
        assert!(RunConfig::from_toml("[protocol]\nq_offset = 30.0").is_err());
    }
}
