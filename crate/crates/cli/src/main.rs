//! Command-line driver.
//!
//! Exit status: 0 on success, 1 when a requested check fails, 2 on errors
//! (bad input, singular systems, I/O).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use emi_bem::bem::write_matrix_csv;
use emi_bem::harness::config::RunConfig;
use emi_bem::harness::convergence::{self, run_convergence, ConvGeometry};
use emi_bem::harness::cv::{measure_cv, Experiment};
use emi_bem::harness::fit_loglog_slope;
use emi_bem::harness::sweep::{self, is_monotone, run_sweep, SweepKind};
use emi_bem::integrator::Recording;

#[derive(Parser)]
#[command(name = "emi-bem", version, about = "Boundary element solver for the cell-by-cell cardiac model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// CSV output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print a plain-text summary (to stderr when the CSV goes to stdout).
    #[arg(long)]
    report: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence of the boundary maps on test geometry a, b, c or d.
    Converge {
        #[arg(long)]
        geometry: ConvGeometry,
        /// Discretization levels; the study defaults when absent.
        #[arg(long = "M", value_delimiter = ',')]
        m: Vec<usize>,
        /// Fail unless the study meets its expected accuracy (a: e1 < 1e-8
        /// at the finest level; b: slopes -1.5 and -0.5 within 0.3; c, d:
        /// errors decrease).
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate a configured scene and write probe traces.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory for probes.csv, nodes.csv, psi.csv, snapshots and report.txt.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Skip the dense operator export.
        #[arg(long)]
        no_operators: bool,
        /// Fail if a step breaks down or misses its stability certificate.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        report: bool,
    },
    /// Conduction velocity of a cell array.
    Cv {
        #[arg(long)]
        config: PathBuf,
        /// Node spacing (µm), overriding the configuration.
        #[arg(long)]
        dx: Option<f64>,
        /// Time step (ms), overriding the configuration.
        #[arg(long)]
        dt: Option<f64>,
        /// Reference velocity (µm/ms) for the relative error.
        #[arg(long)]
        reference_cv: Option<f64>,
        /// Fail on propagation failure or a relative error above this bound.
        #[arg(long)]
        max_error: Option<f64>,
        /// Fail on propagation failure.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Conduction velocity over a list of parameter values.
    Sweep {
        #[arg(long)]
        kind: SweepKind,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Base configuration; built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fail unless every run propagates and CV follows this trend.
        #[arg(long)]
        expect: Option<Trend>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Trend {
    Nondecreasing,
    Nonincreasing,
}

/// A run that completed but whose result failed a requested check.
struct CheckFailed(String);

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(CheckFailed(msg))) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Option<CheckFailed>> {
    match cli.command {
        Command::Converge {
            geometry,
            m,
            check,
            common,
        } => converge(geometry, m, check, &common),
        Command::Simulate {
            config,
            out_dir,
            no_operators,
            check,
            report,
        } => simulate(&config, &out_dir, !no_operators, check, report),
        Command::Cv {
            config,
            dx,
            dt,
            reference_cv,
            max_error,
            check,
            common,
        } => {
            let mut cfg = load(&config)?;
            if let Some(dx) = dx {
                cfg.geometry.set_dx(dx)?;
            }
            if let Some(dt) = dt {
                cfg.time.dt = dt;
            }
            if reference_cv.is_some() {
                cfg.protocol.reference_cv = reference_cv;
            }
            cfg.validate()?;
            cv(&cfg, max_error, check, &common)
        }
        Command::Sweep {
            kind,
            values,
            config,
            expect,
            common,
        } => {
            let cfg = match config {
                Some(p) => load(&p)?,
                None => RunConfig::default(),
            };
            sweep(&cfg, kind, &values, expect, &common)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

/// Write CSV through `f` to the chosen sink, then the report if requested.
fn emit(common: &Common, csv: impl FnOnce(&mut dyn Write) -> Result<()>, report: impl FnOnce() -> String) -> Result<()> {
    match &common.out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            csv(&mut w)?;
            w.flush()?;
            if common.report {
                print!("{}", report());
            }
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            csv(&mut w)?;
            w.flush()?;
            if common.report {
                eprint!("{}", report());
            }
        }
    }
    Ok(())
}

fn converge(geometry: ConvGeometry, m: Vec<usize>, check: bool, common: &Common) -> Result<Option<CheckFailed>> {
    let levels = if m.is_empty() { geometry.default_levels() } else { m };
    let start = std::time::Instant::now();
    let rows = run_convergence(geometry, &levels)?;
    let elapsed = start.elapsed().as_secs_f64();
    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let e0: Vec<f64> = rows.iter().map(|r| r.errors.e0).collect();
    let e1: Vec<f64> = rows.iter().map(|r| r.errors.e1).collect();
    let slopes = (rows.len() > 1).then(|| (fit_loglog_slope(&ms, &e0), fit_loglog_slope(&ms, &e1)));
    emit(
        common,
        |w| Ok(convergence::write_csv(&rows, w)?),
        || {
            let mut s = format!("geometry {geometry}, {} levels, {elapsed:.2} s\n", rows.len());
            for r in &rows {
                s += &format!("  M = {:>6}: e0 = {:.3e}, e1 = {:.3e}\n", r.m, r.errors.e0, r.errors.e1);
            }
            if let Some((s0, s1)) = slopes {
                s += &format!("fitted slope vs M: e0 {s0:.3}, e1 {s1:.3}\n");
            }
            s
        },
    )?;
    if !check {
        return Ok(None);
    }
    let last = rows.last().expect("at least one level");
    let failed = match geometry {
        ConvGeometry::A => (last.errors.e1 >= 1e-8).then(|| format!("e1 = {:.3e} at M = {}", last.errors.e1, last.m)),
        ConvGeometry::B => match slopes {
            Some((s0, s1)) if (s0 + 1.5).abs() <= 0.3 && (s1 + 0.5).abs() <= 0.3 => None,
            Some((s0, s1)) => Some(format!("slopes e0 {s0:.3}, e1 {s1:.3}")),
            None => Some("need at least two levels".into()),
        },
        ConvGeometry::C | ConvGeometry::D => rows
            .windows(2)
            .any(|p| p[1].errors.e0 >= p[0].errors.e0 || p[1].errors.e1 >= p[0].errors.e1)
            .then(|| "errors do not decrease under refinement".into()),
    };
    Ok(failed.map(CheckFailed))
}

fn simulate(config: &Path, out_dir: &Path, operators: bool, check: bool, report: bool) -> Result<Option<CheckFailed>> {
    let cfg = load(config)?;
    let exp = Experiment::build(&cfg)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        let p = out_dir.join(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    };

    let mut w = create("nodes.csv")?;
    exp.scene.write_nodes_csv(&mut w)?;
    w.flush()?;
    if operators {
        let mut w = create("psi.csv")?;
        write_matrix_csv(&exp.system.psi_matrix(), &mut w)?;
        w.flush()?;
    }

    let probes = if !cfg.output.probes.is_empty() {
        cfg.output.probes.clone()
    } else if cfg.geometry.cell_array().is_some() {
        exp.probe_pairs()?.iter().flat_map(|&(p, q, _)| [p, q]).collect()
    } else {
        vec![0]
    };
    let mut rec = Recording::new(cfg.time.t_end, probes);
    rec.threshold = cfg.protocol.threshold;
    rec.every = cfg.output.record_every.max(1);
    rec.snapshots = cfg.output.snapshots.clone();
    let traj = exp.run(&rec)?;

    let mut w = create("probes.csv")?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    let n_state = exp.model.n_state();
    for snap in &traj.snapshots {
        let mut w = create(&format!("snapshot_{:.3}ms.csv", snap.t))?;
        snap.write_csv(n_state, &mut w, true)?;
        w.flush()?;
    }
    let text = format!(
        "model             {}\nassembly (s)      {:.3}\n{}{}",
        exp.model.name(),
        exp.assembly_time,
        exp.scene.report(),
        traj.report()
    );
    fs::write(out_dir.join("report.txt"), &text)?;
    if report {
        print!("{text}");
    }
    if check {
        if let Some(f) = &traj.failure {
            return Ok(Some(CheckFailed(f.clone())));
        }
        if !traj.certified {
            return Ok(Some(CheckFailed(format!(
                "stability certificate violated (max |R| = {})",
                traj.worst_certificate
            ))));
        }
    }
    Ok(None)
}

fn cv(cfg: &RunConfig, max_error: Option<f64>, check: bool, common: &Common) -> Result<Option<CheckFailed>> {
    let exp = Experiment::build(cfg)?;
    let r = measure_cv(&exp)?;
    emit(
        common,
        |w| {
            writeln!(w, "pair,t_p_ms,t_q_ms,cv_um_per_ms")?;
            let f = |x: Option<f64>| x.map_or(String::from("NaN"), |v| format!("{v:.9e}"));
            for (k, (cv, (tp, tq))) in r.pair_cv.iter().zip(&r.activation).enumerate() {
                writeln!(w, "{},{},{},{}", k + 1, f(*tp), f(*tq), f(*cv))?;
            }
            writeln!(w, "mean,,,{:.9e}", r.cv)?;
            Ok(())
        },
        || r.report(),
    )?;
    if r.failure && (check || max_error.is_some()) {
        return Ok(Some(CheckFailed(r.reason.clone().unwrap_or_default())));
    }
    if let Some(bound) = max_error {
        match r.relative_error {
            Some(e) if e.abs() <= bound => {}
            Some(e) => return Ok(Some(CheckFailed(format!("relative CV error {e:.3e} exceeds {bound:.3e}")))),
            None => bail!("--max-error needs a reference velocity"),
        }
    }
    Ok(None)
}

fn sweep(
    cfg: &RunConfig,
    kind: SweepKind,
    values: &[f64],
    expect: Option<Trend>,
    common: &Common,
) -> Result<Option<CheckFailed>> {
    let rows = run_sweep(cfg, kind, values)?;
    emit(
        common,
        |w| Ok(sweep::write_csv(kind, &rows, w)?),
        || {
            let mut s = format!("{kind} ({})\n", kind.unit());
            for r in &rows {
                s += &format!("  {:>12} -> {:>12.4} um/ms", r.value, r.cv);
                if let Some(why) = &r.reason {
                    s += &format!("  [{why}]");
                }
                s.push('\n');
            }
            s
        },
    )?;
    let sign = match expect {
        None => return Ok(None),
        Some(Trend::Nondecreasing) => 1.0,
        Some(Trend::Nonincreasing) => -1.0,
    };
    Ok((!is_monotone(&rows, sign)).then(|| CheckFailed(format!("{kind} sweep does not follow the expected trend"))))
}
