//! One-parameter sweeps of the conduction velocity protocol.

use std::fmt;
use std::str::FromStr;

use crate::error::{EmiError, Result};
use crate::geometry::Junction;
use crate::harness::config::{GeometryConfig, RunConfig};
use crate::harness::cv::run_cv;

/// Amplitude used by the frequency sweep and frequency used by the
/// amplitude sweep when the base junction is flat.
pub const DISC_AMPLITUDE: f64 = 0.5;
pub const DISC_FREQUENCY: u32 = 3;
/// Aspect ratio `c_l / c_w` held by the area sweep.
pub const AREA_ASPECT: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    /// Gap-junction permeability κ (mS/cm²).
    Kappa,
    /// Intracellular conductivity (mS/cm).
    SigmaI,
    /// Periods `k` of the sinusoidal intercalated disc.
    DiscFreq,
    /// Amplitude `a` of the sinusoidal intercalated disc (µm).
    DiscAmp,
    /// Cell length `c_l` (µm) at fixed width.
    CellLength,
    /// Cell width `c_w` (µm) at fixed length.
    CellWidth,
    /// Cell area `c_w·c_l` (µm²) at `c_l = 10·c_w`.
    CellArea,
}

impl SweepKind {
    pub const ALL: [SweepKind; 7] = [
        Self::Kappa,
        Self::SigmaI,
        Self::DiscFreq,
        Self::DiscAmp,
        Self::CellLength,
        Self::CellWidth,
        Self::CellArea,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kappa => "kappa",
            Self::SigmaI => "sigma_i",
            Self::DiscFreq => "disc_freq",
            Self::DiscAmp => "disc_amp",
            Self::CellLength => "cell_length",
            Self::CellWidth => "cell_width",
            Self::CellArea => "cell_area",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::Kappa => "mS_per_cm2",
            Self::SigmaI => "mS_per_cm",
            Self::DiscFreq => "periods",
            Self::DiscAmp | Self::CellLength | Self::CellWidth => "um",
            Self::CellArea => "um2",
        }
    }

    /// `base` with the swept parameter set to `value`. Geometric sweeps keep
    /// the bath margins of `base` around the resized block.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        if !value.is_finite() {
            return Err(EmiError::Parameter(format!("{} value {value} is not finite", self.name())));
        }
        let mut cfg = base.clone();
        match self {
            Self::Kappa => cfg.conductivity.kappa = value,
            Self::SigmaI => cfg.conductivity.sigma_i = value,
            Self::DiscFreq | Self::DiscAmp => {
                let (a0, k0) = match base_junction(base)? {
                    Junction::Sinusoid { a, k } => (a, k),
                    Junction::Flat => (DISC_AMPLITUDE, DISC_FREQUENCY),
                };
                let junction = if self == Self::DiscFreq {
                    if value < 1.0 || value.fract() != 0.0 {
                        return Err(EmiError::Parameter(format!(
                            "disc frequency must be a positive integer, got {value}"
                        )));
                    }
                    Junction::Sinusoid { a: a0, k: value as u32 }
                } else if value == 0.0 {
                    Junction::Flat
                } else {
                    Junction::Sinusoid { a: value, k: k0 }
                };
                if let GeometryConfig::CellArray { junction: j, .. } = &mut cfg.geometry {
                    *j = junction;
                }
            }
            Self::CellLength | Self::CellWidth | Self::CellArea => {
                base_junction(base)?;
                let a = base.geometry.cell_array().expect("cell array");
                let (w, l) = match self {
                    Self::CellLength => (a.c_w, value),
                    Self::CellWidth => (value, a.c_l),
                    _ => {
                        let w = (value / AREA_ASPECT).sqrt();
                        (w, AREA_ASPECT * w)
                    }
                };
                cfg.geometry = resized(&base.geometry, w, l);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn base_junction(base: &RunConfig) -> Result<Junction> {
    match base.geometry {
        GeometryConfig::CellArray { junction, .. } => Ok(junction),
        _ => Err(EmiError::Config("sweeps need a cell-array geometry".into())),
    }
}

fn resized(g: &GeometryConfig, w: f64, l: f64) -> GeometryConfig {
    let mut out = g.clone();
    let a = g.cell_array().expect("cell array");
    let margin = [
        0.5 * (a.bath_w - a.rows as f64 * a.c_w),
        0.5 * (a.bath_l - a.cols as f64 * a.c_l),
    ];
    if let GeometryConfig::CellArray {
        c_w,
        c_l,
        bath_w,
        bath_l,
        bath_margin,
        ..
    } = &mut out
    {
        *c_w = w;
        *c_l = l;
        *bath_w = None;
        *bath_l = None;
        *bath_margin = margin;
    }
    out
}

impl FromStr for SweepKind {
    type Err = EmiError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| EmiError::Parameter(format!("unknown sweep kind '{s}'")))
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// µm/ms, NaN on failure.
    pub cv: f64,
    pub failure: bool,
    pub reason: Option<String>,
}

/// One velocity measurement per value, in the order given. A value whose
/// run fails (no propagation, invalid geometry, breakdown) yields a row with
/// the failure flag; the sweep carries on.
pub fn run_sweep(base: &RunConfig, kind: SweepKind, values: &[f64]) -> Result<Vec<SweepRow>> {
    base_junction(base)?;
    Ok(values
        .iter()
        .map(|&value| match kind.apply(base, value).and_then(|c| run_cv(&c)) {
            Ok(r) => SweepRow {
                value,
                cv: r.cv,
                failure: r.failure,
                reason: r.reason,
            },
            Err(e) => SweepRow {
                value,
                cv: f64::NAN,
                failure: true,
                reason: Some(e.to_string()),
            },
        })
        .collect())
}

pub fn write_csv<W: std::io::Write>(kind: SweepKind, rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{}_{},cv_um_per_ms,failure", kind.name(), kind.unit())?;
    for r in rows {
        writeln!(w, "{},{:.9e},{}", r.value, r.cv, u8::from(r.failure))?;
    }
    Ok(())
}

/// True when the successful rows are nondecreasing (`sign = 1`) or
/// nonincreasing (`sign = −1`) in CV, and none failed.
pub fn is_monotone(rows: &[SweepRow], sign: f64) -> bool {
    rows.iter().all(|r| !r.failure) && rows.windows(2).all(|p| sign * (p[1].cv - p[0].cv) >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_kinds() {
        for k in SweepKind::ALL {
            assert_eq!(k.name().parse::<SweepKind>().unwrap(), k);
        }
        assert_eq!("cell-area".parse::<SweepKind>().unwrap(), SweepKind::CellArea);
        assert!("speed".parse::<SweepKind>().is_err());
    }

    #[test]
    fn geometric_sweeps_keep_margins() {
        let base = RunConfig::default();
        let a0 = base.geometry.cell_array().unwrap();
        let cfg = SweepKind::CellArea.apply(&base, 4000.0).unwrap();
        let a = cfg.geometry.cell_array().unwrap();
        assert!((a.c_w - 20.0).abs() < 1e-12 && (a.c_l - 200.0).abs() < 1e-12);
        assert!((a.bath_w - a.rows as f64 * a.c_w - (a0.bath_w - 40.0)).abs() < 1e-9);
        assert!((a.bath_l - a.cols as f64 * a.c_l - (a0.bath_l - 3000.0)).abs() < 1e-9);
    }

    #[test]
    fn disc_values() {
        let base = RunConfig::default();
        let j = |c: RunConfig| c.geometry.cell_array().unwrap().junction;
        assert_eq!(
            j(SweepKind::DiscFreq.apply(&base, 5.0).unwrap()),
            Junction::Sinusoid { a: 0.5, k: 5 }
        );
        assert_eq!(
            j(SweepKind::DiscAmp.apply(&base, 1.5).unwrap()),
            Junction::Sinusoid { a: 1.5, k: 3 }
        );
        assert_eq!(j(SweepKind::DiscAmp.apply(&base, 0.0).unwrap()), Junction::Flat);
        assert!(SweepKind::DiscFreq.apply(&base, 2.5).is_err());
    }
}
