//! Scenario assembly and the batch time loop.

use std::path::{Path, PathBuf};
use std::time::Instant;

use boussinesq::asc::{load_ascii_grid, write_atomic, AsciiGrid};
use boussinesq::boundary::{boundary_depth, jonswap_components, BoundaryKind, BoundarySet, Side, SpectrumSpec, WaveComponent};
use boussinesq::error::Error;
use boussinesq::grid::{Bathymetry, Field2, FieldState, Grid, PhysParams};
use boussinesq::hydro::NumericsParams;
use boussinesq::implicit::SolverKind;
use boussinesq::multistep::RatioGuard;
use boussinesq::scenario::{
    conical_island_bathymetry, hamm_bathymetry, runup_csv, runup_profile, solitary_wave_ic, ConicalIsland, Gauge, GaugeSpec,
    Heading, MaxAccumulator, RunupSpec, SolitaryWaveSpec,
};
use boussinesq::stepper::{
    write_dt_history, ControllerParams, CrossTermScheme, Simulation, SimulationConfig, StepMode, StepRecord,
};
use log::info;
use serde::Serialize;

use crate::config::{
    BedConfig, BoundaryConfig, CrossTermConfig, FieldName, HeadingConfig, InitialConfig, ModeConfig, RatioGuardConfig, RunConfig,
    SolverConfig,
};

/// Why a run stopped early.
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Instability(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Instability(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Instability(m) => write!(f, "aborted: {m}"),
            RunError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

fn setup_err(e: Error) -> RunError {
    RunError::Config(e.to_string())
}

fn io_err(e: Error) -> RunError {
    RunError::Io(e.to_string())
}

/// A fully assembled run.
pub struct Prepared {
    pub sim: Simulation,
    pub gauges: Vec<Gauge>,
    pub island: Option<ConicalIsland>,
}

fn bed(cfg: &RunConfig, grid: &Grid) -> Result<(Bathymetry, Option<ConicalIsland>), RunError> {
    Ok(match &cfg.scenario.bathymetry {
        BedConfig::Flat { depth } => (Bathymetry::flat(grid, *depth).map_err(setup_err)?, None),
        BedConfig::GaussianHump { depth, height, center, radius } => {
            let b = Field2::from_fn(grid, |x, y| {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                height * (-r2 / (radius * radius)).exp()
            });
            (Bathymetry::build(grid, &b, *depth).map_err(setup_err)?, None)
        }
        BedConfig::ConicalIsland { center, base_radius, slope, crest_height, depth } => {
            let island = ConicalIsland {
                center: (center[0], center[1]),
                base_radius: *base_radius,
                slope: *slope,
                crest_height: *crest_height,
                depth: *depth,
            };
            (conical_island_bathymetry(grid, &island).map_err(setup_err)?, Some(island))
        }
        BedConfig::Hamm => (hamm_bathymetry(grid).map_err(setup_err)?, None),
        BedConfig::File { path, ws } => {
            let b = load_ascii_grid(path, grid).map_err(setup_err)?;
            (Bathymetry::build(grid, &b, *ws).map_err(setup_err)?, None)
        }
    })
}

fn boundary(cfg: &RunConfig, b: &BoundaryConfig, side: Side, grid: &Grid, bathy: &Bathymetry, g: f64) -> Result<BoundaryKind, RunError> {
    Ok(match b {
        BoundaryConfig::Wall => BoundaryKind::Wall,
        BoundaryConfig::Sponge { width, lambda_max } => BoundaryKind::Sponge { width: *width, lambda_max: *lambda_max },
        BoundaryConfig::Sine { amplitude, period, phase } => {
            let depth = boundary_depth(grid, bathy, side);
            BoundaryKind::Maker(vec![WaveComponent::new(*amplitude, *period, *phase, depth, g).map_err(setup_err)?])
        }
        BoundaryConfig::Irregular { hs, tp, gamma, n_components, df } => {
            let depth = boundary_depth(grid, bathy, side);
            let spec = SpectrumSpec { hs: *hs, tp: *tp, gamma: *gamma, n_components: *n_components, df: *df, seed: cfg.seed };
            BoundaryKind::Maker(jonswap_components(&spec, depth, g).map_err(setup_err)?)
        }
    })
}

pub fn simulation_config(cfg: &RunConfig, max_depth: f64) -> SimulationConfig {
    let n = &cfg.numerics;
    let p = &cfg.physics;
    SimulationConfig {
        numerics: NumericsParams { theta: n.theta, cfl_target: n.cfl_target },
        phys: PhysParams { g: p.g, b_disp: p.b_disp, c_f: p.c_f, h_eps: p.h_eps.unwrap_or(PhysParams::default_h_eps(max_depth)) },
        controller: ControllerParams {
            alpha: n.alpha,
            dt_init: n.dt_init,
            dt_min: n.dt_min,
            dt_max: cfg.dt_max(),
            mode: match n.mode {
                ModeConfig::Adaptive => StepMode::Adaptive,
                ModeConfig::Fixed => StepMode::Fixed,
            },
            ratio_guard: match n.ratio_guard {
                RatioGuardConfig::Clamp => RatioGuard::Clamp,
                RatioGuardConfig::Reject => RatioGuard::Reject,
            },
        },
        solver: match n.tridiag_solver {
            SolverConfig::Thomas => SolverKind::Thomas,
            SolverConfig::Cr => SolverKind::CyclicReduction,
        },
        cross_term: match n.cross_term {
            CrossTermConfig::Lagged => CrossTermScheme::Lagged,
            CrossTermConfig::Extrapolated => CrossTermScheme::Extrapolated,
        },
        blowup_bound: cfg.blowup_bound,
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    let gc = &cfg.grid;
    let grid = Grid::with_origin(gc.nx, gc.ny, gc.dx, gc.dy, gc.x0, gc.y0).map_err(setup_err)?;
    let (bathy, island) = bed(cfg, &grid)?;
    let sim_cfg = simulation_config(cfg, bathy.max_depth());
    let state = match &cfg.scenario.initial {
        InitialConfig::Still => FieldState::still(&grid, &bathy),
        InitialConfig::Solitary { height, x0, heading, depth } => {
            let depth = match depth {
                Some(d) => *d,
                None => {
                    let (i, j) = grid.cell_at(*x0, gc.y0 + 0.5 * grid.height());
                    bathy.d.at(i, j)
                }
            };
            let mut spec = SolitaryWaveSpec::new(*height, depth, *x0);
            spec.heading = match heading {
                HeadingConfig::East => Heading::East,
                HeadingConfig::West => Heading::West,
            };
            solitary_wave_ic(&spec, &grid, &bathy, &sim_cfg.phys).map_err(setup_err)?
        }
    };
    let g = sim_cfg.phys.g;
    let bc = &cfg.boundaries;
    let boundaries = BoundarySet::new(
        &grid,
        &bathy,
        boundary(cfg, &bc.west, Side::West, &grid, &bathy, g)?,
        boundary(cfg, &bc.east, Side::East, &grid, &bathy, g)?,
        boundary(cfg, &bc.south, Side::South, &grid, &bathy, g)?,
        boundary(cfg, &bc.north, Side::North, &grid, &bathy, g)?,
    )
    .map_err(setup_err)?;
    let gauges = cfg
        .gauges
        .iter()
        .map(|gs| {
            let spec = GaugeSpec { id: gs.id.clone(), x: gs.x, y: gs.y, record_interval: gs.record_interval };
            Gauge::new(spec, &grid).map_err(setup_err)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sim = Simulation::new(grid, bathy, state, boundaries, sim_cfg).map_err(setup_err)?;
    Ok(Prepared { sim, gauges, island })
}

/// Run totals written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub wall_time_s: f64,
    pub steps: u64,
    pub final_time: f64,
    pub dt_mean: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_cfl: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub mass_drift_rel: f64,
    pub abort_reason: Option<String>,
}

fn summarize(records: &[StepRecord], elapsed: f64, final_time: f64, m0: f64, m1: f64, abort: Option<String>) -> Summary {
    let n = records.len().max(1) as f64;
    let dt_sum: f64 = records.iter().map(|r| r.dt).sum();
    Summary {
        wall_time_s: elapsed,
        steps: records.len() as u64,
        final_time,
        dt_mean: if records.is_empty() { 0.0 } else { dt_sum / n },
        dt_min: records.iter().map(|r| r.dt).fold(f64::INFINITY, f64::min).min(if records.is_empty() { 0.0 } else { f64::INFINITY }),
        dt_max: records.iter().map(|r| r.dt).fold(0.0, f64::max),
        max_cfl: records.iter().map(|r| r.max_cfl).fold(0.0, f64::max),
        initial_mass: m0,
        final_mass: m1,
        mass_drift_rel: if m0 != 0.0 { (m1 - m0).abs() / m0.abs() } else { (m1 - m0).abs() },
        abort_reason: abort,
    }
}

struct Writer<'a> {
    dir: &'a Path,
    grid: &'a Grid,
}

impl Writer<'_> {
    fn field(&self, name: &str, f: &Field2) -> Result<(), RunError> {
        let raster = AsciiGrid::from_field(self.grid, f).map_err(io_err)?;
        write_atomic(&self.dir.join(format!("{name}.asc")), raster.to_text().as_bytes()).map_err(io_err)
    }

    fn snapshot(&self, fields: &[FieldName], state: &FieldState, max: &MaxAccumulator, tag: &str) -> Result<(), RunError> {
        for f in fields {
            let data = match f {
                FieldName::W => &state.w,
                FieldName::P => &state.p,
                FieldName::Q => &state.q,
                FieldName::MaxW => &max.max_w,
            };
            self.field(&format!("{}_{tag}", f.label()), data)?;
        }
        Ok(())
    }
}

/// Output of a finished or aborted run.
pub struct Outcome {
    pub summary: Summary,
    pub records: Vec<StepRecord>,
    pub output_dir: PathBuf,
}

/// Runs the configured scenario and writes every artifact. An instability
/// abort still writes the gauges, step history, a diagnostic snapshot and
/// the summary before returning the error.
pub fn run(cfg: &RunConfig) -> Result<Outcome, (Option<Outcome>, RunError)> {
    let Prepared { mut sim, mut gauges, island } = prepare(cfg).map_err(|e| (None, e))?;
    let dir = cfg.outputs.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| (None, RunError::Io(format!("{}: {e}", dir.display()))))?;

    let start = Instant::now();
    let grid = sim.grid().clone();
    let m0 = sim.state().volume(&grid, sim.bathymetry());
    let mut max = MaxAccumulator::new(sim.state());
    let mut records: Vec<StepRecord> = Vec::new();
    for g in gauges.iter_mut() {
        g.record(sim.state(), sim.bathymetry(), sim.phys(), 0.0);
    }
    let writer = Writer { dir: &dir, grid: &grid };
    let fields = &cfg.outputs.fields;
    let interval = cfg.outputs.snapshot_interval;
    let mut next_snapshot = interval;
    let mut snapshot_index = 0usize;
    if interval > 0.0 && !fields.is_empty() {
        writer.snapshot(fields, sim.state(), &max, "0000").map_err(|e| (None, e))?;
    }
    let mut next_report = 1.0;
    let mut abort = None;

    while sim.time() < cfg.duration - 1e-12 {
        match sim.advance() {
            Ok(r) => {
                let t = sim.time();
                max.update(sim.state());
                for g in gauges.iter_mut() {
                    g.record(sim.state(), sim.bathymetry(), sim.phys(), t);
                }
                records.push(r);
                if t >= next_report {
                    eprintln!(
                        "t = {t:8.3} s  step {:7}  dt = {:.4e} s  max CFL = {:.4}",
                        sim.step_index(),
                        r.dt,
                        r.max_cfl
                    );
                    while next_report <= t {
                        next_report += 1.0;
                    }
                }
                if interval > 0.0 && !fields.is_empty() && t >= next_snapshot - 1e-12 {
                    snapshot_index += 1;
                    writer.snapshot(fields, sim.state(), &max, &format!("{snapshot_index:04}")).map_err(|e| (None, e))?;
                    while next_snapshot <= t + 1e-12 {
                        next_snapshot += interval;
                    }
                }
            }
            Err(e) => {
                abort = Some(e.to_string());
                break;
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let m1 = sim.state().volume(&grid, sim.bathymetry());
    let summary = summarize(&records, elapsed, sim.time(), m0, m1, abort.clone());
    let outcome = Outcome { summary, records, output_dir: dir.clone() };
    let written = write_outputs(cfg, &sim, &gauges, &max, island.as_ref(), &outcome, &writer, abort.is_some());
    if let Err(e) = written {
        return Err((Some(outcome), e));
    }
    match abort {
        Some(reason) => Err((Some(outcome), RunError::Instability(reason))),
        None => {
            info!("finished {} steps in {elapsed:.1} s", outcome.summary.steps);
            Ok(outcome)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    cfg: &RunConfig,
    sim: &Simulation,
    gauges: &[Gauge],
    max: &MaxAccumulator,
    island: Option<&ConicalIsland>,
    outcome: &Outcome,
    writer: &Writer<'_>,
    aborted: bool,
) -> Result<(), RunError> {
    let dir = writer.dir;
    for g in gauges {
        g.write_csv(&dir.join(format!("gauge_{}.csv", g.spec.id))).map_err(io_err)?;
    }
    write_dt_history(&dir.join("dt_history.csv"), &outcome.records).map_err(io_err)?;
    if aborted {
        let all = [FieldName::W, FieldName::P, FieldName::Q, FieldName::MaxW];
        writer.snapshot(&all, sim.state(), max, "abort")?;
    } else {
        if !cfg.outputs.fields.is_empty() {
            writer.snapshot(&cfg.outputs.fields, sim.state(), max, "final")?;
        }
        if let (Some(r), Some(island)) = (&cfg.outputs.runup, island) {
            let spec = RunupSpec::for_island(island, sim.grid());
            let points = runup_profile(&max.max_w, sim.bathymetry(), sim.grid(), &spec, r.azimuths).map_err(io_err)?;
            write_atomic(&dir.join("runup.csv"), runup_csv(&points).as_bytes()).map_err(io_err)?;
        }
    }
    let json = serde_json::to_string_pretty(&outcome.summary).map_err(|e| RunError::Io(e.to_string()))?;
    write_atomic(&dir.join("summary.json"), json.as_bytes()).map_err(io_err)
}
