//! Time stepping: stage evaluation, multistep prediction of `w`, `U*`,
//! `V*`, implicit recovery of `P`, `Q`, and CFL-driven step control.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::asc::write_atomic;
use crate::boundary::BoundarySet;
use crate::dispersion::{compute_stages, compute_ustar_vstar, StageHistory, StageSet};
use crate::error::{Error, Result};
use crate::grid::{Bathymetry, Field2, FieldState, Grid, PhysParams, GHOST};
use crate::hydro::{NumericsParams, CFL_STABILITY_LIMIT};
use crate::implicit::{MomentumOperator, SolverKind};
use crate::multistep::{ab3_weights, integrated_derivative_weights, RatioGuard, StepTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    #[default]
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub alpha: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub mode: StepMode,
    pub ratio_guard: RatioGuard,
}

impl ControllerParams {
    /// Defaults around a user-supplied initial step.
    pub fn with_dt(dt_init: f64) -> Self {
        Self {
            alpha: 0.2,
            dt_init,
            dt_min: 1e-7,
            dt_max: 10.0 * dt_init,
            mode: StepMode::Adaptive,
            ratio_guard: RatioGuard::Clamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max && self.dt_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        Ok(())
    }
}

/// Step-size bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeController {
    pub params: ControllerParams,
    pub cfl_target: f64,
    /// Step about to be taken.
    pub dt_n: f64,
    /// Previous two steps; NaN until taken.
    pub dt_nm1: f64,
    pub dt_nm2: f64,
    pub step_index: u64,
    pub sim_time: f64,
}

impl TimeController {
    pub fn new(params: ControllerParams, cfl_target: f64) -> Result<Self> {
        params.validate()?;
        if !(cfl_target > 0.0 && cfl_target < CFL_STABILITY_LIMIT) {
            return Err(Error::Config(format!("cfl_target must lie in (0, {CFL_STABILITY_LIMIT}), got {cfl_target}")));
        }
        Ok(Self {
            params,
            cfl_target,
            dt_n: params.dt_init,
            dt_nm1: f64::NAN,
            dt_nm2: f64::NAN,
            step_index: 0,
            sim_time: 0.0,
        })
    }

    /// Number of leading steps taken with forward Euler.
    pub const BOOTSTRAP_STEPS: u64 = 2;

    pub fn in_bootstrap(&self) -> bool {
        self.step_index < Self::BOOTSTRAP_STEPS
    }

    /// Records the step just taken and selects the next one from the CFL
    /// limit of the new state (`max_rate` in 1/s). Returns whether the
    /// ratio guard altered the step.
    pub fn finish_step(&mut self, max_rate: f64) -> Result<bool> {
        self.sim_time += self.dt_n;
        self.step_index += 1;
        self.dt_nm2 = self.dt_nm1;
        self.dt_nm1 = self.dt_n;
        let p = &self.params;
        if p.mode == StepMode::Fixed || self.in_bootstrap() {
            return Ok(false);
        }
        let candidate = cfl_dt_from_rate(max_rate, self.cfl_target, p.dt_min, p.dt_max);
        let smoothed = lazy_ema(candidate, self.dt_nm1, p.alpha).clamp(p.dt_min, p.dt_max);
        let (steps, clamped) = StepTriple::guarded(smoothed, self.dt_nm1, self.dt_nm2, p.ratio_guard)?;
        if clamped {
            warn!("step ratio clamped at step {}: {} -> {}", self.step_index, smoothed, steps.dt_i());
        }
        self.dt_n = steps.dt_i();
        Ok(clamped)
    }
}

/// Smooths upward changes of the step and lets it drop at once.
pub fn lazy_ema(dt_candidate: f64, dt_prev: f64, alpha: f64) -> f64 {
    if dt_candidate <= dt_prev {
        dt_candidate
    } else {
        alpha * dt_candidate + (1.0 - alpha) * dt_prev
    }
}

/// Per-state quantities behind the CFL limit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CflStats {
    /// `max((|u| + c) / dx, (|v| + c) / dy)` over interior cells (1/s).
    pub max_rate: f64,
    /// Largest velocity magnitude (m/s).
    pub max_speed: f64,
    pub max_depth: f64,
}

pub fn cfl_stats(state: &FieldState, bathy: &Bathymetry, grid: &Grid, phys: &PhysParams) -> Result<CflStats> {
    let rows: Vec<std::result::Result<CflStats, (usize, usize, &'static str)>> = grid
        .interior_rows()
        .into_par_iter()
        .map(|j| {
            let mut s = CflStats::default();
            for i in grid.interior_cols() {
                let (w, p, q) = (state.w.at(i, j), state.p.at(i, j), state.q.at(i, j));
                if !w.is_finite() {
                    return Err((i, j, "w"));
                }
                if !(p.is_finite() && q.is_finite()) {
                    return Err((i, j, "flux"));
                }
                let h = (w - bathy.b.at(i, j)).max(0.0);
                let (u, v) = (phys.velocity(h, p), phys.velocity(h, q));
                let c = (phys.g * h).sqrt();
                let rate = ((u.abs() + c) / grid.dx).max((v.abs() + c) / grid.dy);
                s.max_rate = s.max_rate.max(rate);
                s.max_speed = s.max_speed.max(u.hypot(v));
                s.max_depth = s.max_depth.max(h);
            }
            Ok(s)
        })
        .collect();
    let mut out = CflStats::default();
    for r in rows {
        let s = r.map_err(|(i, j, term)| Error::NonFinite { term, i, j })?;
        out.max_rate = out.max_rate.max(s.max_rate);
        out.max_speed = out.max_speed.max(s.max_speed);
        out.max_depth = out.max_depth.max(s.max_depth);
    }
    Ok(out)
}

fn cfl_dt_from_rate(max_rate: f64, cfl_target: f64, dt_min: f64, dt_max: f64) -> f64 {
    if max_rate <= 0.0 {
        return dt_max;
    }
    (cfl_target / max_rate).clamp(dt_min, dt_max)
}

/// Largest step meeting the target CFL number in the current state.
pub fn compute_cfl_dt(
    state: &FieldState,
    bathy: &Bathymetry,
    grid: &Grid,
    phys: &PhysParams,
    cfl_target: f64,
    dt_min: f64,
    dt_max: f64,
) -> Result<f64> {
    let s = cfl_stats(state, bathy, grid, phys)?;
    Ok(cfl_dt_from_rate(s.max_rate, cfl_target, dt_min, dt_max))
}

/// Time discretisation of the cross-derivative terms `(F*)_t`, `(G*)_t`.
///
/// `Extrapolated` integrates the second-order three-level difference
/// stencils, which reduce to `2F*^n - 3F*^{n-1} + F*^{n-2}` for equal steps.
/// Through the implicit solve this feeds back with a gain
/// `G = m / sqrt((1 + a)(1 + b))`, where `a`, `b`, `m` are the symbols of
/// `(B + 1/3) d^2` times `-d_xx`, `-d_yy`, `d_xy`. The recurrence is unstable
/// once `G > 1/3`, which happens for grid modes whenever `d` exceeds the cell
/// size. `Lagged` uses the first-order difference `F*^n - F*^{n-1}` scaled by
/// the step ratio and is stable for every `G < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossTermScheme {
    Extrapolated,
    #[default]
    Lagged,
}

/// How the stage history is combined over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    /// Forward Euler; `prev_dt` is the previous step when a second stage
    /// level exists, giving a backward difference for the cross terms.
    Euler { dt: f64, prev_dt: Option<f64> },
    /// Equal-step Adams-Bashforth with the classical coefficients.
    Uniform { dt: f64 },
    /// Variable-step Adams-Bashforth.
    Adaptive(StepTriple),
}

impl Predictor {
    pub fn dt(&self) -> f64 {
        match *self {
            Predictor::Euler { dt, .. } | Predictor::Uniform { dt } => dt,
            Predictor::Adaptive(s) => s.dt_i(),
        }
    }

    fn levels(&self) -> usize {
        match self {
            Predictor::Euler { prev_dt: None, .. } => 1,
            Predictor::Euler { .. } => 2,
            _ => 3,
        }
    }

    /// Increment of a quantity with rate levels `r` and cross-term levels
    /// `s` (whose time derivative enters the rate).
    #[inline(always)]
    fn increment(&self, q: &[f64; 3], dw: &[f64; 3], r: [f64; 3], s: [f64; 3]) -> f64 {
        match *self {
            Predictor::Uniform { dt } => {
                dt / 12.0 * (23.0 * r[0] - 16.0 * r[1] + 5.0 * r[2]) + (dw[0] * s[0] + dw[1] * s[1] + dw[2] * s[2])
            }
            _ => q[0] * r[0] + q[1] * r[1] + q[2] * r[2] + dw[0] * s[0] + dw[1] * s[1] + dw[2] * s[2],
        }
    }

    /// Quadrature weights on the rate levels.
    fn quadrature(&self) -> [f64; 3] {
        match *self {
            Predictor::Euler { dt, .. } => [dt, 0.0, 0.0],
            Predictor::Uniform { dt } => {
                let q = crate::multistep::QuadratureWeights::uniform(dt);
                [q.w_i, q.w_im1, q.w_im2]
            }
            Predictor::Adaptive(s) => {
                let q = ab3_weights(s);
                [q.w_i, q.w_im1, q.w_im2]
            }
        }
    }

    /// Weights on the cross-term levels.
    fn derivative(&self, scheme: CrossTermScheme) -> [f64; 3] {
        match (*self, scheme) {
            (Predictor::Euler { prev_dt: None, .. }, _) => [0.0; 3],
            (Predictor::Euler { dt, prev_dt: Some(p) }, _) => [dt / p, -dt / p, 0.0],
            (Predictor::Uniform { .. }, CrossTermScheme::Extrapolated) => [2.0, -3.0, 1.0],
            (Predictor::Uniform { .. }, CrossTermScheme::Lagged) => [1.0, -1.0, 0.0],
            (Predictor::Adaptive(s), CrossTermScheme::Extrapolated) => integrated_derivative_weights(s),
            (Predictor::Adaptive(s), CrossTermScheme::Lagged) => {
                let r = s.dt_i() / s.dt_im1();
                [r, -r, 0.0]
            }
        }
    }
}

fn level_values<'a>(history: &'a StageHistory, n: usize, pick: impl Fn(&'a StageSet) -> &'a [f64]) -> Result<[&'a [f64]; 3]> {
    let mut out: [&[f64]; 3] = [&[], &[], &[]];
    for (k, slot) in out.iter_mut().enumerate().take(n) {
        *slot = pick(history.get(k).ok_or_else(|| Error::InvalidInput(format!("stage level {k} missing")))?);
    }
    Ok(out)
}

#[inline(always)]
fn gather(levels: &[&[f64]; 3], n: usize, c: usize) -> [f64; 3] {
    let mut v = [0.0; 3];
    for k in 0..n {
        v[k] = levels[k][c];
    }
    v
}

/// `w` at the next level, interior cells only (ghosts copied). If the plain
/// update would leave any cell below the bed, it is redone in flux form
/// with outgoing fluxes of draining cells scaled down, which conserves mass
/// and keeps every depth non-negative.
pub fn predict_w(w: &Field2, bathy: &Bathymetry, grid: &Grid, history: &StageHistory, predictor: &Predictor) -> Result<Field2> {
    let n = predictor.levels();
    let e = level_values(history, n, |s| &s.e)?;
    let q = predictor.quadrature();
    let nx = grid.nx;
    let mut out = w.clone();
    let mut negative = false;
    for cj in 0..grid.ny {
        let j = cj + GHOST;
        for ci in 0..nx {
            let i = ci + GHOST;
            let c = cj * nx + ci;
            let r = gather(&e, n, c);
            let v = w.at(i, j) + predictor.increment(&q, &[0.0; 3], r, [0.0; 3]);
            negative |= v < bathy.b.at(i, j);
            out.set(i, j, v);
        }
    }
    if negative {
        drain_limited_update(w, bathy, grid, history, n, &q, &mut out);
    }
    Ok(out)
}

fn drain_limited_update(w: &Field2, bathy: &Bathymetry, grid: &Grid, history: &StageHistory, n: usize, q: &[f64; 3], out: &mut Field2) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut tx = vec![0.0; (nx + 1) * ny];
    let mut ty = vec![0.0; nx * (ny + 1)];
    for (k, wk) in q.iter().enumerate().take(n) {
        let m = &history.get(k).expect("level checked").mass;
        for (t, h) in tx.iter_mut().zip(&m.x) {
            *t += wk * h;
        }
        for (t, h) in ty.iter_mut().zip(&m.y) {
            *t += wk * h;
        }
    }
    let (dx, dy) = (grid.dx, grid.dy);
    let mut factor = vec![1.0; nx * ny];
    for cj in 0..ny {
        for ci in 0..nx {
            let west = tx[cj * (nx + 1) + ci];
            let east = tx[cj * (nx + 1) + ci + 1];
            let south = ty[cj * nx + ci];
            let north = ty[(cj + 1) * nx + ci];
            let outflow = (east.max(0.0) - west.min(0.0)) / dx + (north.max(0.0) - south.min(0.0)) / dy;
            let h = (w.at(ci + GHOST, cj + GHOST) - bathy.b.at(ci + GHOST, cj + GHOST)).max(0.0);
            if outflow > h {
                factor[cj * nx + ci] = h / outflow;
            }
        }
    }
    // Scale each face by the factor of the cell it drains.
    for cj in 0..ny {
        for fi in 0..=nx {
            let t = &mut tx[cj * (nx + 1) + fi];
            let src = if *t > 0.0 { fi.checked_sub(1) } else if fi < nx { Some(fi) } else { None };
            if let Some(ci) = src {
                *t *= factor[cj * nx + ci];
            }
        }
    }
    for fj in 0..=ny {
        for ci in 0..nx {
            let t = &mut ty[fj * nx + ci];
            let src = if *t > 0.0 { fj.checked_sub(1) } else if fj < ny { Some(fj) } else { None };
            if let Some(cj) = src {
                *t *= factor[cj * nx + ci];
            }
        }
    }
    for cj in 0..ny {
        let j = cj + GHOST;
        for ci in 0..nx {
            let i = ci + GHOST;
            let div = (tx[cj * (nx + 1) + ci + 1] - tx[cj * (nx + 1) + ci]) / dx
                + (ty[(cj + 1) * nx + ci] - ty[cj * nx + ci]) / dy;
            // Round-off can still leave a sliver below the bed.
            out.set(i, j, (w.at(i, j) - div).max(bathy.b.at(i, j)));
        }
    }
}

/// `U*` and `V*` at the next level from their current values.
pub fn predict_uvstar(
    ustar: &[f64],
    vstar: &[f64],
    history: &StageHistory,
    predictor: &Predictor,
    scheme: CrossTermScheme,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = predictor.levels();
    let f = level_values(history, n, |s| &s.f)?;
    let g = level_values(history, n, |s| &s.g)?;
    let fs = level_values(history, n, |s| &s.fstar)?;
    let gs = level_values(history, n, |s| &s.gstar)?;
    let q = predictor.quadrature();
    let dw = predictor.derivative(scheme);
    let mut us = ustar.to_vec();
    let mut vs = vstar.to_vec();
    us.par_iter_mut().zip(vs.par_iter_mut()).enumerate().for_each(|(c, (u, v))| {
        *u += predictor.increment(&q, &dw, gather(&f, n, c), gather(&fs, n, c));
        *v += predictor.increment(&q, &dw, gather(&g, n, c), gather(&gs, n, c));
    });
    Ok((us, vs))
}

/// One line of the step log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// Time at the start of the step (s).
    pub time: f64,
    pub dt: f64,
    /// CFL number of this step in the state it started from.
    pub max_cfl: f64,
    pub max_speed: f64,
    pub max_depth: f64,
    pub ratio_clamped: bool,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,time,dt,max_cfl,max_speed,max_depth";
}

/// Writes the step log as CSV.
pub fn write_dt_history(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(StepRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", r.step, r.time, r.dt, r.max_cfl, r.max_speed, r.max_depth);
    }
    write_atomic(path, s.as_bytes())
}

/// Solver settings besides grid, bed and boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub numerics: NumericsParams,
    pub phys: PhysParams,
    pub controller: ControllerParams,
    pub solver: SolverKind,
    pub cross_term: CrossTermScheme,
    /// Abort when `max |w - ws|` over wet cells exceeds this; defaults to
    /// ten times the initial amplitude plus one metre.
    pub blowup_bound: Option<f64>,
}

impl SimulationConfig {
    pub fn new(dt_init: f64) -> Self {
        Self {
            numerics: NumericsParams::default(),
            phys: PhysParams::default(),
            controller: ControllerParams::with_dt(dt_init),
            solver: SolverKind::Thomas,
            cross_term: CrossTermScheme::default(),
            blowup_bound: None,
        }
    }
}

/// A running simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    grid: Grid,
    bathy: Bathymetry,
    numerics: NumericsParams,
    phys: PhysParams,
    boundaries: BoundarySet,
    operator: MomentumOperator,
    cross_term: CrossTermScheme,
    state: FieldState,
    history: StageHistory,
    controller: TimeController,
    stats: CflStats,
    blowup_bound: f64,
    pending_clamp: bool,
}

/// Largest `|w - ws|` over cells with positive still-water depth.
pub fn max_surface_deviation(state: &FieldState, bathy: &Bathymetry, grid: &Grid) -> f64 {
    let mut m: f64 = 0.0;
    for j in grid.interior_rows() {
        for i in grid.interior_cols() {
            if bathy.d.at(i, j) > 0.0 {
                m = m.max((state.w.at(i, j) - bathy.ws).abs());
            }
        }
    }
    m
}

impl Simulation {
    pub fn new(grid: Grid, bathy: Bathymetry, state: FieldState, boundaries: BoundarySet, config: SimulationConfig) -> Result<Self> {
        config.numerics.validate()?;
        config.phys.validate()?;
        state.check(&grid, &bathy)?;
        let controller = TimeController::new(config.controller, config.numerics.cfl_target)?;
        let operator = MomentumOperator::new(&grid, &bathy, &config.phys, boundaries.closures(), config.solver);
        let stats = cfl_stats(&state, &bathy, &grid, &config.phys)?;
        let amplitude = max_surface_deviation(&state, &bathy, &grid).max(boundaries.max_forcing_amplitude());
        let blowup_bound = config.blowup_bound.unwrap_or(10.0 * amplitude + 1.0);
        Ok(Self {
            grid,
            bathy,
            numerics: config.numerics,
            phys: config.phys,
            boundaries,
            operator,
            cross_term: config.cross_term,
            state,
            history: StageHistory::new(),
            controller,
            stats,
            blowup_bound,
            pending_clamp: false,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bathymetry(&self) -> &Bathymetry {
        &self.bathy
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn phys(&self) -> &PhysParams {
        &self.phys
    }

    pub fn controller(&self) -> &TimeController {
        &self.controller
    }

    pub fn time(&self) -> f64 {
        self.controller.sim_time
    }

    pub fn step_index(&self) -> u64 {
        self.controller.step_index
    }

    /// Duration of the next step.
    pub fn next_dt(&self) -> f64 {
        self.controller.dt_n
    }

    pub fn stats(&self) -> CflStats {
        self.stats
    }

    pub fn blowup_bound(&self) -> f64 {
        self.blowup_bound
    }

    pub fn history(&self) -> &StageHistory {
        &self.history
    }

    /// Advances one step and returns its log entry. On an instability
    /// error the offending state is kept for inspection.
    pub fn advance(&mut self) -> Result<StepRecord> {
        let t = self.controller.sim_time;
        let dt = self.controller.dt_n;
        let step = self.controller.step_index;
        let record = StepRecord {
            step,
            time: t,
            dt,
            max_cfl: dt * self.stats.max_rate,
            max_speed: self.stats.max_speed,
            max_depth: self.stats.max_depth,
            ratio_clamped: self.pending_clamp,
        };
        let (grid, bathy) = (&self.grid, &self.bathy);

        self.boundaries.apply_ghosts(grid, bathy, &mut self.state, t);
        let mut stage = compute_stages(&self.state, bathy, grid, &self.numerics, &self.phys, t)
            .map_err(|e| self.instability(format!("stage evaluation failed: {e}")))?;
        stage.dt_after = dt;
        let (us, vs) = compute_ustar_vstar(&self.state, bathy, grid, &self.phys);
        self.history.push(stage);

        let predictor = if self.controller.in_bootstrap() {
            Predictor::Euler { dt, prev_dt: self.history.get(1).map(|s| s.dt_after) }
        } else {
            match self.controller.params.mode {
                StepMode::Fixed => Predictor::Uniform { dt },
                StepMode::Adaptive => Predictor::Adaptive(StepTriple::new(
                    dt,
                    self.history.get(1).map_or(f64::NAN, |s| s.dt_after),
                    self.history.get(2).map_or(f64::NAN, |s| s.dt_after),
                )?),
            }
        };

        let w_new = predict_w(&self.state.w, bathy, grid, &self.history, &predictor)?;
        let (us_new, vs_new) = predict_uvstar(&us, &vs, &self.history, &predictor, self.cross_term)?;
        let mut p = self.state.p.clone();
        let mut q = self.state.q.clone();
        self.boundaries.apply_flux_ghosts(grid, &mut p, &mut q, t + dt);
        self.operator.solve_momentum(&us_new, &vs_new, &mut p, &mut q)?;
        self.state = FieldState { w: w_new, p, q };
        self.desingularize_fluxes();
        self.boundaries.apply_sponges(&self.grid, &self.bathy, &mut self.state, dt);

        let dev = max_surface_deviation(&self.state, &self.bathy, &self.grid);
        if !dev.is_finite() || dev > self.blowup_bound {
            self.controller.sim_time = t + dt;
            return Err(self.instability(format!(
                "surface deviation {dev:.4e} m exceeds the bound {:.4e} m",
                self.blowup_bound
            )));
        }
        self.stats = match cfl_stats(&self.state, &self.bathy, &self.grid, &self.phys) {
            Ok(s) => s,
            Err(e) => return Err(self.instability(e.to_string())),
        };
        self.pending_clamp = self.controller.finish_step(self.stats.max_rate)?;
        Ok(record)
    }

    fn instability(&self, reason: String) -> Error {
        Error::Instability { step: self.controller.step_index, time: self.controller.sim_time, reason }
    }

    /// Below `h_eps` the discharge is rebuilt as depth times the regularised
    /// velocity, so thin films cannot carry momentum at spurious speeds.
    fn desingularize_fluxes(&mut self) {
        let phys = self.phys;
        for j in self.grid.interior_rows() {
            for i in self.grid.interior_cols() {
                let h = (self.state.w.at(i, j) - self.bathy.b.at(i, j)).max(0.0);
                if h < phys.h_eps {
                    let (p, q) = (self.state.p.at(i, j), self.state.q.at(i, j));
                    self.state.p.set(i, j, h * phys.velocity(h, p));
                    self.state.q.set(i, j, h * phys.velocity(h, q));
                }
            }
        }
    }

    /// Advances until the clock reaches `t_end` (the last step may overshoot
    /// by less than one step), handing every record to `on_step`.
    pub fn run_until(&mut self, t_end: f64, mut on_step: impl FnMut(&Simulation, &StepRecord)) -> Result<()> {
        while self.time() < t_end - 1e-12 {
            let r = self.advance()?;
            on_step(self, &r);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::FaceFluxes;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(n: usize, h: f64) -> Grid {
        Grid::new(n, n, h, h).unwrap()
    }

    #[test]
    fn cfl_still_water() {
        let g = grid(8, 0.05);
        let bathy = Bathymetry::flat(&g, 0.32).unwrap();
        let s = FieldState::still(&g, &bathy);
        let phys = PhysParams::default();
        let dt = compute_cfl_dt(&s, &bathy, &g, &phys, 0.125, 1e-7, 1.0).unwrap();
        let oracle = 0.125 * 0.05 / (9.81f64 * 0.32).sqrt();
        assert_relative_eq!(dt, oracle, max_relative = 1e-14);
        assert!((dt - 3.527e-3).abs() < 1e-6);

        let g2 = grid(8, 0.1);
        let b2 = Bathymetry::flat(&g2, 0.32).unwrap();
        let dt2 = compute_cfl_dt(&FieldState::still(&g2, &b2), &b2, &g2, &phys, 0.125, 1e-7, 1.0).unwrap();
        assert_relative_eq!(dt2, 2.0 * dt, max_relative = 1e-14);
    }

    #[test]
    fn cfl_dry_domain_gives_cap() {
        let g = grid(6, 0.1);
        let bed = Field2::filled(&g, 1.0);
        let bathy = Bathymetry::build(&g, &bed, 0.32).unwrap();
        let s = FieldState::still(&g, &bathy);
        let dt = compute_cfl_dt(&s, &bathy, &g, &PhysParams::default(), 0.125, 1e-7, 0.02).unwrap();
        assert_eq!(dt, 0.02);
    }

    #[test]
    fn cfl_reports_non_finite() {
        let g = grid(6, 0.1);
        let bathy = Bathymetry::flat(&g, 1.0).unwrap();
        let mut s = FieldState::still(&g, &bathy);
        s.p.set(4, 5, f64::NAN);
        match cfl_stats(&s, &bathy, &g, &PhysParams::default()) {
            Err(Error::NonFinite { i: 4, j: 5, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lazy_ema_branches() {
        assert_eq!(lazy_ema(0.0005, 0.001, 0.2), 0.0005);
        assert_eq!(lazy_ema(0.0005, 0.001, 0.9), 0.0005);
        assert_relative_eq!(lazy_ema(0.002, 0.001, 0.2), 0.0012, max_relative = 1e-15);
        assert_eq!(lazy_ema(0.002, 0.001, 1.0), 0.002);
    }

    proptest! {
        #[test]
        fn lazy_ema_never_exceeds_candidate(c in 1e-6f64..1.0, p in 1e-6f64..1.0, a in 0.01f64..1.0) {
            let r = lazy_ema(c, p, a);
            prop_assert!(r <= c * (1.0 + 1e-15));
            prop_assert!(r >= c.min(p) * (1.0 - 1e-15));
        }
    }

    #[test]
    fn controller_rejects_bad_params() {
        let p = ControllerParams::with_dt(1e-3);
        assert!(TimeController::new(p, 0.3).is_err());
        assert!(TimeController::new(ControllerParams { alpha: 0.0, ..p }, 0.1).is_err());
        assert!(TimeController::new(ControllerParams { dt_min: 1.0, ..p }, 0.1).is_err());
        assert!(TimeController::new(p, 0.125).is_ok());
    }

    #[test]
    fn controller_bootstrap_keeps_initial_step() {
        let mut c = TimeController::new(ControllerParams::with_dt(1e-3), 0.125).unwrap();
        c.finish_step(1.0).unwrap();
        assert_eq!(c.dt_n, 1e-3);
        c.finish_step(1.0).unwrap();
        // First post-bootstrap step: candidate 0.125 s capped at dt_max.
        assert_relative_eq!(c.dt_n, 0.2 * 1e-2 + 0.8 * 1e-3, max_relative = 1e-15);
        assert!(!c.finish_step(100.0).unwrap());
        assert_relative_eq!(c.dt_n, 0.125 / 100.0, max_relative = 1e-15);
        // A twentyfold drop is clamped to the ratio guard.
        let prev = c.dt_n;
        assert!(c.finish_step(2000.0).unwrap());
        assert_relative_eq!(c.dt_n, 0.1 * prev, max_relative = 1e-15);
    }

    fn flat_mass(nx: usize, ny: usize) -> FaceFluxes {
        FaceFluxes { nx, ny, x: vec![0.0; (nx + 1) * ny], y: vec![0.0; nx * (ny + 1)] }
    }

    fn level(n: usize, nx: usize, e: f64, f: f64, fstar: f64) -> StageSet {
        StageSet {
            e: vec![e; n],
            f: vec![f; n],
            g: vec![-f; n],
            fstar: vec![fstar; n],
            gstar: vec![-fstar; n],
            mass: flat_mass(nx, n / nx),
            taken_at: 0.0,
            dt_after: f64::NAN,
        }
    }

    /// History sampled from functions of time at `t_n - back_k`.
    fn history_from(steps: StepTriple, nx: usize, ny: usize, e: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64, fs: impl Fn(f64) -> f64) -> StageHistory {
        let times = [-(steps.dt_im1() + steps.dt_im2()), -steps.dt_im1(), 0.0];
        let dts = [steps.dt_im2(), steps.dt_im1(), steps.dt_i()];
        let mut h = StageHistory::new();
        for (t, dt) in times.iter().zip(dts) {
            let mut s = level(nx * ny, nx, e(*t), f(*t), fs(*t));
            s.taken_at = *t;
            s.dt_after = dt;
            h.push(s);
        }
        h
    }

    #[test]
    fn zero_rates_leave_w_unchanged() {
        let g = grid(5, 1.0);
        let bathy = Bathymetry::flat(&g, 1.0).unwrap();
        let mut w = Field2::filled(&g, 1.0);
        w.set(3, 3, 1.25);
        let steps = StepTriple::new(0.1, 0.07, 0.13).unwrap();
        let h = history_from(steps, 5, 5, |_| 0.0, |_| 0.0, |_| 0.0);
        let out = predict_w(&w, &bathy, &g, &h, &Predictor::Adaptive(steps)).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn uniform_w_update_matches_classic_formula() {
        let g = grid(5, 1.0);
        let bathy = Bathymetry::flat(&g, 1.0).unwrap();
        let w = Field2::filled(&g, 0.3);
        let dt = 0.0123;
        let h = history_from(StepTriple::uniform(dt).unwrap(), 5, 5, |t| 1.0 + 37.0 * t, |_| 0.0, |_| 0.0);
        let out = predict_w(&w, &bathy, &g, &h, &Predictor::Uniform { dt }).unwrap();
        let (e0, e1, e2) = (h.get(0).unwrap().e[0], h.get(1).unwrap().e[0], h.get(2).unwrap().e[0]);
        assert_eq!(out.at(3, 3), 0.3 + dt / 12.0 * (23.0 * e0 - 16.0 * e1 + 5.0 * e2));
    }

    proptest! {
        #[test]
        fn w_update_exact_for_quadratic_rates(
            dt in 1e-3f64..1e-1, r1 in 0.5f64..2.0, r2 in 0.5f64..2.0,
            c0 in -1.0f64..1.0, c1 in -5.0f64..5.0, c2 in -20.0f64..20.0,
        ) {
            let steps = StepTriple::new(dt, dt * r1, dt * r1 * r2).unwrap();
            let g = grid(5, 1.0);
            let bathy = Bathymetry::flat(&g, 10.0).unwrap();
            let w = Field2::filled(&g, 10.0);
            let rate = move |t: f64| c0 + c1 * t + c2 * t * t;
            let h = history_from(steps, 5, 5, rate, |_| 0.0, |_| 0.0);
            let out = predict_w(&w, &bathy, &g, &h, &Predictor::Adaptive(steps)).unwrap();
            let exact = c0 * dt + c1 * dt * dt / 2.0 + c2 * dt.powi(3) / 3.0;
            prop_assert!((out.at(3, 3) - 10.0 - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
        }

        #[test]
        fn cross_term_increment_exact_for_quadratics(
            dt in 1e-3f64..1e-1, r1 in 0.5f64..2.0, r2 in 0.5f64..2.0,
            c0 in -1.0f64..1.0, c1 in -5.0f64..5.0, c2 in -20.0f64..20.0,
        ) {
            let steps = StepTriple::new(dt, dt * r1, dt * r1 * r2).unwrap();
            let fs = move |t: f64| c0 + c1 * t + c2 * t * t;
            let h = history_from(steps, 5, 5, |_| 0.0, |_| 0.0, fs);
            let zero = vec![0.0; 25];
            let (us, vs) = predict_uvstar(&zero, &zero, &h, &Predictor::Adaptive(steps), CrossTermScheme::Extrapolated).unwrap();
            let exact = fs(dt) - fs(0.0);
            let scale = c0.abs() + c1.abs() * dt + c2.abs() * dt * dt + 1e-300;
            prop_assert!((us[7] - exact).abs() <= 1e-10 * scale.max(exact.abs()));
            prop_assert!((vs[7] + exact).abs() <= 1e-10 * scale.max(exact.abs()));
        }

        #[test]
        fn lagged_cross_term_exact_for_linear(
            dt in 1e-3f64..1e-1, r1 in 0.5f64..2.0, r2 in 0.5f64..2.0,
            c0 in -1.0f64..1.0, c1 in -5.0f64..5.0,
        ) {
            let steps = StepTriple::new(dt, dt * r1, dt * r1 * r2).unwrap();
            let fs = move |t: f64| c0 + c1 * t;
            let h = history_from(steps, 5, 5, |_| 0.0, |_| 0.0, fs);
            let zero = vec![0.0; 25];
            let (us, _) = predict_uvstar(&zero, &zero, &h, &Predictor::Adaptive(steps), CrossTermScheme::Lagged).unwrap();
            prop_assert!((us[0] - c1 * dt).abs() <= 1e-12 * (1.0 + (c1 * dt).abs()));
        }
    }

    #[test]
    fn uniform_uvstar_matches_classic_formula() {
        let dt = 0.004;
        let h = history_from(StepTriple::uniform(dt).unwrap(), 5, 5, |_| 0.0, |t| 2.0 - 9.0 * t, |t| 0.5 + 3.0 * t * t);
        let u0 = vec![0.7; 25];
        let (us, _) = predict_uvstar(&u0, &u0, &h, &Predictor::Uniform { dt }, CrossTermScheme::Extrapolated).unwrap();
        let l = |k: usize| h.get(k).unwrap();
        let classic = 0.7 + dt / 12.0 * (23.0 * l(0).f[3] - 16.0 * l(1).f[3] + 5.0 * l(2).f[3])
            + (2.0 * l(0).fstar[3] - 3.0 * l(1).fstar[3] + l(2).fstar[3]);
        assert_eq!(us[3], classic);
    }

    /// Characteristic roots of the cross-term feedback `x_{n+1} - x_n =
    /// -G sum_k c_k x_{n-k}`, as a per-step growth factor.
    fn feedback_radius(gain: f64, c: [f64; 3]) -> f64 {
        let n = 4000;
        let mut x = [1.0, 0.3, -0.2];
        let mut log_growth = 0.0;
        for step in 0..2 * n {
            let next = x[0] - gain * (c[0] * x[0] + c[1] * x[1] + c[2] * x[2]);
            let before = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x = [next, x[0], x[1]];
            let after = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step >= n {
                log_growth += (after / before).ln();
            }
            for v in &mut x {
                *v /= after;
            }
        }
        (log_growth / n as f64).exp()
    }

    #[test]
    fn extrapolated_cross_term_feedback_threshold() {
        // Second-order extrapolation: stable below G = 1/3, unstable above.
        assert!(feedback_radius(0.30, [2.0, -3.0, 1.0]) <= 1.0 + 1e-6);
        assert!(feedback_radius(0.45, [2.0, -3.0, 1.0]) > 1.2);
        // First-order lag: stable up to G = 1.
        for g in [0.3, 0.45, 0.9, 0.99] {
            assert!(feedback_radius(g, [1.0, -1.0, 0.0]) <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn draining_keeps_depth_and_mass() {
        // One shallow cell pushes mass east faster than it holds.
        let g = grid(5, 1.0);
        let bathy = Bathymetry::flat(&g, 1.0).unwrap();
        let mut w = FieldState::still(&g, &bathy).w;
        let w_rest = w.at(4, 3);
        w.set(3, 3, bathy.b.at(3, 3) + 0.01);
        let nx = 5;
        let mut mass = flat_mass(5, 5);
        // Face between interior cells (1, 1) and (2, 1), i.e. padded (3, 3)-(4, 3).
        mass.x[nx + 1 + 2] = 0.5;
        let mut e = vec![0.0; 25];
        e[5 + 1] = -0.5;
        e[5 + 2] = 0.5;
        let mut lvl = level(25, nx, 0.0, 0.0, 0.0);
        lvl.e = e;
        lvl.mass = mass;
        lvl.dt_after = 0.1;
        let mut h = StageHistory::new();
        h.push(lvl);
        let before: f64 = w.interior_values(&g).iter().sum();
        let out = predict_w(&w, &bathy, &g, &h, &Predictor::Euler { dt: 0.1, prev_dt: None }).unwrap();
        let after: f64 = out.interior_values(&g).iter().sum();
        assert!((after - before).abs() < 1e-14);
        for j in g.interior_rows() {
            for i in g.interior_cols() {
                assert!(out.at(i, j) >= bathy.b.at(i, j));
            }
        }
        assert_eq!(out.at(3, 3), bathy.b.at(3, 3));
        assert_relative_eq!(out.at(4, 3), w_rest + 0.01, max_relative = 1e-14);
    }
}
