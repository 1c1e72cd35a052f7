//! Conduction velocity along a strand of cells.
//!
//! The left column is stimulated; activation times are read at probe pairs
//! `p_k = ((p_offset + k)·c_l, 0)`, `q_k = ((q_offset + k)·c_l, 0)` on the
//! bottom membrane and the velocity is the mean of `|q_k − p_k| / (t_q − t_p)`.

use std::time::Instant;

use crate::coupling::{build_coupled, CoupledSystem, FLUX_SCALE};
use crate::error::{EmiError, Result};
use crate::geometry::{CellArray, Point, Scene};
use crate::harness::config::{RunConfig, StimulusTarget};
use crate::integrator::{simulate, Recording, SplitRhs, Trajectory};
use crate::ionic::{IonicModel, MembraneState, Stimulus};
use crate::steklov::domain_operators;

/// Velocity plotted for the 2×30 strand with the Courtemanche membrane
/// model, units as plotted. The membrane models shipped here differ, so this
/// is kept for reference only and never used as a target.
pub const COURTEMANCHE_PLOTTED_CV: f64 = 1.27153;

/// Scene, coupled operator, membrane model and stimulus of one run.
#[derive(Debug)]
pub struct Experiment {
    pub config: RunConfig,
    pub scene: Scene,
    pub system: CoupledSystem,
    pub model: Box<dyn IonicModel>,
    pub stimulus: Stimulus,
    /// Seconds spent building the scene and the operators.
    pub assembly_time: f64,
}

impl Experiment {
    pub fn build(config: &RunConfig) -> Result<Self> {
        let c = &config.conductivity;
        let scene = config.geometry.build()?.with_uniform_sigma(c.sigma_e, c.sigma_i)?;
        Self::from_scene(config, scene)
    }

    /// Run `config` on a prebuilt scene, whose conductivities are kept.
    pub fn from_scene(config: &RunConfig, scene: Scene) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let c = &config.conductivity;
        let ops = domain_operators(&scene)?;
        let system = build_coupled(&scene, &ops, c.kappa, FLUX_SCALE)?;
        let model = config.membrane.build();
        let cells = stimulated_cells(config, &scene);
        let a0 = &system.connectivity().a0;
        let targets: Vec<usize> = match config.stimulus.target {
            StimulusTarget::All => (0..a0.len()).collect(),
            _ => (0..a0.len())
                .filter(|&k| cells.contains(&scene.node_owner(a0[k]).0))
                .collect(),
        };
        if targets.is_empty() {
            return Err(EmiError::Config("stimulus reaches no membrane node".into()));
        }
        let s = &config.stimulus;
        let stimulus = Stimulus::new(s.amplitude, s.start, s.duration, targets)?;
        Ok(Self {
            config: config.clone(),
            scene,
            system,
            model,
            stimulus,
            assembly_time: start.elapsed().as_secs_f64(),
        })
    }

    /// Number of transmembrane nodes, the length of the voltage vector.
    pub fn m0(&self) -> usize {
        self.system.m0()
    }

    /// Global node index of membrane unknown `k`.
    pub fn global_node(&self, k: usize) -> usize {
        self.system.connectivity().a0[k]
    }

    /// Membrane unknown closest to `x` and its distance.
    pub fn nearest_membrane_node(&self, x: Point) -> (usize, f64) {
        let nodes = self.scene.nodes();
        self.system
            .connectivity()
            .a0
            .iter()
            .enumerate()
            .map(|(k, &l)| (k, (nodes[l] - x).norm()))
            .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    pub fn rhs(&self) -> Result<SplitRhs<'_>> {
        SplitRhs::new(&self.system, self.model.as_ref(), &self.stimulus, self.config.membrane.c_m())
    }

    pub fn rest_state(&self) -> MembraneState {
        MembraneState::at_rest(self.model.as_ref(), self.m0())
    }

    /// Integrate from rest over `[0, t_end]`.
    pub fn run(&self, rec: &Recording) -> Result<Trajectory> {
        let rhs = self.rhs()?;
        simulate(self.rest_state(), &rhs, &self.config.time.stepper(), rec)
    }

    /// Snapped probe pairs of a cell array: `(p, q, |x_q − x_p|)` as membrane
    /// indices. A probe may move by at most one node spacing.
    pub fn probe_pairs(&self) -> Result<Vec<(usize, usize, f64)>> {
        self.probe_pairs_mapped(|x| x)
    }

    /// As [`Experiment::probe_pairs`] with every probe point moved by `map`
    /// before snapping.
    pub fn probe_pairs_mapped(&self, map: impl Fn(Point) -> Point) -> Result<Vec<(usize, usize, f64)>> {
        let a = self
            .config
            .geometry
            .cell_array()
            .ok_or_else(|| EmiError::Config("velocity probes need a cell array".into()))?;
        let p = &self.config.protocol;
        let nodes = self.scene.nodes();
        let a0 = &self.system.connectivity().a0;
        let upstream = self
            .stimulus
            .targets
            .iter()
            .fold(Point::zeros(), |acc, &k| acc + nodes[a0[k]])
            / self.stimulus.targets.len() as f64;
        let snap = |offset: f64| -> Result<usize> {
            let target = map(Point::new(offset * a.c_l, 0.0));
            let (_, d) = self.nearest_membrane_node(target);
            // equidistant nodes are common on uniform grids: take the one
            // nearest the stimulated cells, a rule that commutes with mirroring
            let tie = d * (1.0 + 1e-9) + 1e-12;
            let k = (0..a0.len())
                .filter(|&k| (nodes[a0[k]] - target).norm() <= tie)
                .min_by(|&i, &j| {
                    let di = (nodes[a0[i]] - upstream).norm();
                    let dj = (nodes[a0[j]] - upstream).norm();
                    di.total_cmp(&dj).then(i.cmp(&j))
                })
                .expect("nearest node exists");
            if d > a.dx {
                return Err(EmiError::Config(format!(
                    "no membrane node within {} um of probe ({:.1}, {:.1})",
                    a.dx, target.x, target.y
                )));
            }
            Ok(k)
        };
        (1..=p.probe_pairs)
            .map(|k| {
                let kp = snap(p.p_offset + k as f64)?;
                let kq = snap(p.q_offset + k as f64)?;
                let dist = (nodes[self.global_node(kq)] - nodes[self.global_node(kp)]).norm();
                Ok((kp, kq, dist))
            })
            .collect()
    }
}

fn stimulated_cells(config: &RunConfig, scene: &Scene) -> Vec<usize> {
    match (&config.stimulus.target, config.geometry.cell_array()) {
        (StimulusTarget::LeftColumn, Some(a)) => left_column(&a),
        (StimulusTarget::LeftColumn, None) => vec![1],
        (StimulusTarget::Cells(c), _) => c.clone(),
        (StimulusTarget::All, _) => (1..=scene.n_cells()).collect(),
    }
}

fn left_column(a: &CellArray) -> Vec<usize> {
    (0..a.rows).map(|r| a.cell(r, 0)).collect()
}

#[derive(Clone, Debug)]
pub struct CvResult {
    /// Mean velocity (µm/ms); NaN when `failure` is set.
    pub cv: f64,
    /// Velocity of each probe pair, `None` when either probe stayed below
    /// threshold.
    pub pair_cv: Vec<Option<f64>>,
    /// `(t_p, t_q)` per pair.
    pub activation: Vec<(Option<f64>, Option<f64>)>,
    /// Set when a probe never activated or the integration broke down.
    pub failure: bool,
    pub reason: Option<String>,
    /// Signed `(cv − reference) / reference` when a reference is configured.
    pub relative_error: Option<f64>,
    pub m: usize,
    pub m0: usize,
    pub assembly_time: f64,
    pub trajectory: Trajectory,
}

impl CvResult {
    pub fn report(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "nodes M / M0      {} / {}", self.m, self.m0);
        let _ = writeln!(s, "assembly          {:.2} s", self.assembly_time);
        for (k, (cv, (tp, tq))) in self.pair_cv.iter().zip(&self.activation).enumerate() {
            let f = |t: &Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.4} ms"));
            let v = cv.map_or("-".to_string(), |v| format!("{v:.4} um/ms"));
            let _ = writeln!(s, "pair {}: t_p = {}, t_q = {}, cv = {}", k + 1, f(tp), f(tq), v);
        }
        let _ = writeln!(s, "conduction velocity {:.4} um/ms", self.cv);
        if let Some(e) = self.relative_error {
            let _ = writeln!(s, "relative error    {e:.3e}");
        }
        if let Some(r) = &self.reason {
            let _ = writeln!(s, "failure           {r}");
        }
        s.push_str(&self.trajectory.report());
        s
    }
}

/// Run the velocity protocol on `config`, which must describe a cell array.
pub fn run_cv(config: &RunConfig) -> Result<CvResult> {
    let exp = Experiment::build(config)?;
    measure_cv(&exp)
}

pub fn measure_cv(exp: &Experiment) -> Result<CvResult> {
    measure_cv_with(exp, &exp.probe_pairs()?)
}

/// The protocol with explicit probe pairs `(p, q, distance)`.
pub fn measure_cv_with(exp: &Experiment, pairs: &[(usize, usize, f64)]) -> Result<CvResult> {
    let mut probes = Vec::with_capacity(2 * pairs.len());
    for &(p, q, _) in pairs {
        probes.push(p);
        probes.push(q);
    }
    let cfg = &exp.config;
    let mut rec = Recording::new(cfg.time.t_end, probes);
    rec.threshold = cfg.protocol.threshold;
    rec.every = cfg.output.record_every.max(1);
    rec.snapshots = cfg.output.snapshots.clone();
    rec.stop_when_activated = true;
    let traj = exp.run(&rec)?;

    let mut pair_cv = Vec::with_capacity(pairs.len());
    let mut activation = Vec::with_capacity(pairs.len());
    for (k, &(_, _, dist)) in pairs.iter().enumerate() {
        let (tp, tq) = (traj.activation[2 * k], traj.activation[2 * k + 1]);
        activation.push((tp, tq));
        pair_cv.push(match (tp, tq) {
            (Some(tp), Some(tq)) if tq > tp => Some(dist / (tq - tp)),
            _ => None,
        });
    }
    let mut reason = traj.failure.clone();
    if reason.is_none() {
        if let Some(k) = pair_cv.iter().position(Option::is_none) {
            reason = Some(match activation[k] {
                (Some(tp), Some(tq)) => format!("probe pair {} activated out of order (t_p = {tp:.5}, t_q = {tq:.5} ms)", k + 1),
                _ => format!("probe pair {} did not activate by t = {} ms", k + 1, cfg.time.t_end),
            });
        }
    }
    let failure = reason.is_some();
    let cv = if failure {
        f64::NAN
    } else {
        pair_cv.iter().flatten().sum::<f64>() / pair_cv.len() as f64
    };
    let relative_error = cfg
        .protocol
        .reference_cv
        .filter(|_| !failure)
        .map(|r| (cv - r) / r);
    Ok(CvResult {
        cv,
        pair_cv,
        activation,
        failure,
        reason,
        relative_error,
        m: exp.scene.m(),
        m0: exp.m0(),
        assembly_time: exp.assembly_time,
        trajectory: traj,
    })
}
