//! Benchmark beds, initial conditions, gauges and post-processing.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::asc::write_atomic;
use crate::boundary::{jonswap_components, BoundaryKind, BoundarySet, SpectrumSpec};
use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, Bathymetry, Field2, FieldState, Grid, PhysParams, GHOST};

/// Truncated cone standing on a flat floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicalIsland {
    pub center: (f64, f64),
    pub base_radius: f64,
    pub slope: f64,
    pub crest_height: f64,
    /// Still-water depth over the floor (m).
    pub depth: f64,
}

impl Default for ConicalIsland {
    fn default() -> Self {
        Self { center: (15.0, 15.0), base_radius: 3.6, slope: 0.25, crest_height: 0.625, depth: 0.32 }
    }
}

impl ConicalIsland {
    pub fn bed(&self, x: f64, y: f64) -> f64 {
        let r = (x - self.center.0).hypot(y - self.center.1);
        if r >= self.base_radius {
            0.0
        } else {
            self.crest_height.min(self.slope * (self.base_radius - r))
        }
    }

    /// Radius where the cone meets the still-water level.
    pub fn shoreline_radius(&self) -> f64 {
        self.base_radius - self.depth / self.slope
    }
}

pub fn conical_island_bathymetry(grid: &Grid, island: &ConicalIsland) -> Result<Bathymetry> {
    let (cx, cy) = island.center;
    let r = island.base_radius;
    let fits = cx - r >= grid.x0 && cx + r <= grid.x0 + grid.width() && cy - r >= grid.y0 && cy + r <= grid.y0 + grid.height();
    if !fits {
        return Err(Error::InvalidInput("island does not fit in the domain".into()));
    }
    Bathymetry::build(grid, &Field2::from_fn(grid, |x, y| island.bed(x, y)), island.depth)
}

/// Plane beach cut by a rip channel along `y = 0`; `x` runs onshore from
/// the wave maker.
pub fn hamm_bed(x: f64, y: f64) -> f64 {
    let s = 18.0 - x;
    0.1 - (s / 30.0) * (1.0 + 3.0 * (-s / 3.0).exp() * (PI * y / 30.0).cos().powi(10))
}

pub fn hamm_bathymetry(grid: &Grid) -> Result<Bathymetry> {
    Bathymetry::build(grid, &Field2::from_fn(grid, hamm_bed), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    East,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitaryWaveSpec {
    pub height: f64,
    /// Ambient depth under the wave (m).
    pub depth: f64,
    /// Crest position (m).
    pub x0: f64,
    pub heading: Heading,
    /// Largest accepted height-to-depth ratio.
    pub max_ratio: f64,
}

impl SolitaryWaveSpec {
    pub fn new(height: f64, depth: f64, x0: f64) -> Self {
        Self { height, depth, x0, heading: Heading::East, max_ratio: 0.78 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0 && self.height > 0.0 && self.height < self.max_ratio * self.depth && self.x0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "solitary wave needs 0 < H < {} d0, got H = {}, d0 = {}",
                self.max_ratio, self.height, self.depth
            )));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        (3.0 * self.height / (4.0 * self.depth.powi(3))).sqrt()
    }

    pub fn eta(&self, x: f64) -> f64 {
        let s = 1.0 / (self.kappa() * (x - self.x0)).cosh();
        self.height * s * s
    }

    pub fn flux(&self, eta: f64, g: f64) -> f64 {
        let sign = match self.heading {
            Heading::East => 1.0,
            Heading::West => -1.0,
        };
        sign * eta * (g * self.depth).sqrt() * (1.0 + eta / self.depth)
    }
}

/// Solitary wave over still water. Cells dry at rest stay dry.
pub fn solitary_wave_ic(spec: &SolitaryWaveSpec, grid: &Grid, bathy: &Bathymetry, phys: &PhysParams) -> Result<FieldState> {
    spec.validate()?;
    let tail = spec.eta(grid.x0).max(spec.eta(grid.x0 + grid.width()));
    if tail > 1e-6 * spec.height {
        warn!("solitary wave tail not contained: eta at the boundary is {:.3e} H", tail / spec.height);
    }
    let mut state = FieldState::still(grid, bathy);
    for j in 0..grid.nj() {
        for i in 0..grid.ni() {
            if bathy.d.at(i, j) <= 0.0 {
                continue;
            }
            let eta = spec.eta(grid.xc(i));
            state.w.set(i, j, bathy.ws + eta);
            state.p.set(i, j, spec.flux(eta, phys.g));
        }
    }
    state.check(grid, bathy)?;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSpec {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Sampling interval (s); 0 samples every step.
    pub record_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeSample {
    pub t: f64,
    pub eta: f64,
    pub p: f64,
    pub q: f64,
    pub u: f64,
    pub v: f64,
}

/// A gauge bound to the cell whose centre is nearest to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauge {
    pub spec: GaugeSpec,
    pub cell: (usize, usize),
    pub samples: Vec<GaugeSample>,
    next_time: f64,
}

impl Gauge {
    pub fn new(spec: GaugeSpec, grid: &Grid) -> Result<Self> {
        if !grid.contains(spec.x, spec.y) {
            return Err(Error::InvalidInput(format!("gauge {} at ({}, {}) lies outside the domain", spec.id, spec.x, spec.y)));
        }
        if !(spec.record_interval >= 0.0) {
            return Err(Error::InvalidInput(format!("gauge {} has a negative interval", spec.id)));
        }
        let cell = grid.cell_at(spec.x, spec.y);
        Ok(Self { spec, cell, samples: Vec::new(), next_time: f64::NEG_INFINITY })
    }

    pub fn sample(&self, state: &FieldState, bathy: &Bathymetry, phys: &PhysParams, t: f64) -> GaugeSample {
        let (i, j) = self.cell;
        let (w, p, q) = (state.w.at(i, j), state.p.at(i, j), state.q.at(i, j));
        let h = (w - bathy.b.at(i, j)).max(0.0);
        GaugeSample { t, eta: w - bathy.ws, p, q, u: phys.velocity(h, p), v: phys.velocity(h, q) }
    }

    /// Appends a sample if the sampling interval has elapsed.
    pub fn record(&mut self, state: &FieldState, bathy: &Bathymetry, phys: &PhysParams, t: f64) {
        if t + 1e-9 * self.spec.record_interval.max(1e-12) < self.next_time {
            return;
        }
        self.samples.push(self.sample(state, bathy, phys, t));
        self.next_time = if self.spec.record_interval > 0.0 {
            let k = (t / self.spec.record_interval).floor() + 1.0;
            k * self.spec.record_interval
        } else {
            t
        };
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,eta,P,Q,u,v\n");
        for g in &self.samples {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", g.t, g.eta, g.p, g.q, g.u, g.v);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

pub fn record_gauges(gauges: &mut [Gauge], state: &FieldState, bathy: &Bathymetry, phys: &PhysParams, t: f64) {
    for g in gauges {
        g.record(state, bathy, phys, t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAverages {
    pub mwl: f64,
    pub u_avg: f64,
    pub v_avg: f64,
    /// `4 sigma` of the surface elevation.
    pub hs: f64,
    pub n: usize,
}

/// Minimum number of samples for meaningful averages.
pub const MIN_AVERAGE_SAMPLES: usize = 100;

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    pairwise_sum(&v)
}

/// Statistics over samples with `t0 <= t <= t1`. The result does not depend
/// on the order of the samples.
pub fn time_averages(samples: &[GaugeSample], t0: f64, t1: f64) -> Result<TimeAverages> {
    let win: Vec<&GaugeSample> = samples.iter().filter(|s| s.t >= t0 && s.t <= t1).collect();
    if win.is_empty() {
        return Err(Error::InvalidInput(format!("no samples in [{t0}, {t1}]")));
    }
    if win.len() < MIN_AVERAGE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "{} samples in [{t0}, {t1}], need at least {MIN_AVERAGE_SAMPLES}",
            win.len()
        )));
    }
    let n = win.len() as f64;
    let mwl = sorted_sum(win.iter().map(|s| s.eta).collect()) / n;
    let u_avg = sorted_sum(win.iter().map(|s| s.u).collect()) / n;
    let v_avg = sorted_sum(win.iter().map(|s| s.v).collect()) / n;
    let var = sorted_sum(win.iter().map(|s| (s.eta - mwl).powi(2)).collect()) / n;
    Ok(TimeAverages { mwl, u_avg, v_avg, hs: 4.0 * var.sqrt(), n: win.len() })
}

/// Running per-cell maximum of `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAccumulator {
    pub max_w: Field2,
}

impl MaxAccumulator {
    pub fn new(state: &FieldState) -> Self {
        Self { max_w: state.w.clone() }
    }

    pub fn update(&mut self, state: &FieldState) {
        for (m, w) in self.max_w.as_mut_slice().iter_mut().zip(state.w.as_slice()) {
            if *w > *m {
                *m = *w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunupSpec {
    pub slope: f64,
    /// Depth above which a cell counts as inundated (m).
    pub delta: f64,
    pub center: (f64, f64),
    /// Radius used to normalise the profile.
    pub shoreline_radius: f64,
}

impl RunupSpec {
    /// Threshold `s dx / 3`.
    pub fn new(slope: f64, dx: f64, center: (f64, f64), shoreline_radius: f64) -> Self {
        Self { slope, delta: slope * dx / 3.0, center, shoreline_radius }
    }

    pub fn for_island(island: &ConicalIsland, grid: &Grid) -> Self {
        Self::new(island.slope, grid.dx, island.center, island.shoreline_radius())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunupPoint {
    pub azimuth_deg: f64,
    /// Innermost inundated radius along the ray (m).
    pub radius: f64,
    pub normalized: f64,
}

/// Bilinear interpolation of cell-centre values.
pub fn bilinear(field: &Field2, grid: &Grid, x: f64, y: f64) -> f64 {
    let fx = ((x - grid.x0) / grid.dx - 0.5).clamp(0.0, (grid.nx - 1) as f64);
    let fy = ((y - grid.y0) / grid.dy - 0.5).clamp(0.0, (grid.ny - 1) as f64);
    let (i0, j0) = ((fx.floor() as usize).min(grid.nx.saturating_sub(2)), (fy.floor() as usize).min(grid.ny.saturating_sub(2)));
    let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
    let (i, j) = (i0 + GHOST, j0 + GHOST);
    let i1 = if grid.nx > 1 { i + 1 } else { i };
    let j1 = if grid.ny > 1 { j + 1 } else { j };
    let a = field.at(i, j) * (1.0 - tx) + field.at(i1, j) * tx;
    let b = field.at(i, j1) * (1.0 - tx) + field.at(i1, j1) * tx;
    a * (1.0 - ty) + b * ty
}

/// Inundation extent around an island: along each ray from the centre, the
/// innermost radius where the peak depth `max_w - b` reaches `delta`. Rays
/// are sampled at a quarter cell and the crossing is interpolated linearly.
pub fn runup_profile(max_w: &Field2, bathy: &Bathymetry, grid: &Grid, spec: &RunupSpec, n_azimuths: usize) -> Result<Vec<RunupPoint>> {
    if !(spec.delta > 0.0) || n_azimuths == 0 {
        return Err(Error::InvalidInput("runup needs delta > 0 and at least one azimuth".into()));
    }
    let mut depth = max_w.clone();
    for (d, b) in depth.as_mut_slice().iter_mut().zip(bathy.b.as_slice()) {
        *d = (*d - b).max(0.0);
    }
    let (cx, cy) = spec.center;
    if bilinear(&depth, grid, cx, cy) >= spec.delta {
        return Err(Error::InvalidInput("runup centre is inundated; no shoreline to trace".into()));
    }
    let ds = 0.25 * grid.dx.min(grid.dy);
    let mut out = Vec::with_capacity(n_azimuths);
    for k in 0..n_azimuths {
        let az = 360.0 * k as f64 / n_azimuths as f64;
        let (sn, cs) = az.to_radians().sin_cos();
        let mut prev = (0.0, bilinear(&depth, grid, cx, cy) - spec.delta);
        let mut radius = None;
        let mut r = ds;
        loop {
            let (x, y) = (cx + r * cs, cy + r * sn);
            if !grid.contains(x, y) {
                break;
            }
            let f = bilinear(&depth, grid, x, y) - spec.delta;
            if f >= 0.0 {
                let t = -prev.1 / (f - prev.1);
                radius = Some(prev.0 + t * (r - prev.0));
                break;
            }
            prev = (r, f);
            r += ds;
        }
        let radius = radius.ok_or_else(|| Error::InvalidInput(format!("no inundated cell along azimuth {az} deg")))?;
        out.push(RunupPoint { azimuth_deg: az, radius, normalized: radius / spec.shoreline_radius });
    }
    Ok(out)
}

pub fn runup_csv(points: &[RunupPoint]) -> String {
    let mut s = String::from("azimuth_deg,radius_m,normalized\n");
    for p in points {
        let _ = writeln!(s, "{:.6},{:.17e},{:.17e}", p.azimuth_deg, p.radius, p.normalized);
    }
    s
}

/// Everything needed to start a run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub bathy: Bathymetry,
    pub state: FieldState,
    pub boundaries: BoundarySet,
    pub gauges: Vec<GaugeSpec>,
}

fn gauge(id: &str, x: f64, y: f64) -> GaugeSpec {
    GaugeSpec { id: id.into(), x, y, record_interval: 0.0 }
}

/// Solitary wave attacking a conical island from the west.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicalIslandParams {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub width: f64,
    pub island: ConicalIsland,
    pub wave_height: f64,
    pub crest_x: f64,
    pub sponge_width: f64,
    pub sponge_strength: f64,
}

impl Default for ConicalIslandParams {
    fn default() -> Self {
        Self {
            nx: 301,
            ny: 301,
            length: 30.0,
            width: 30.0,
            island: ConicalIsland::default(),
            wave_height: 0.0576,
            crest_x: 7.0,
            sponge_width: 1.5,
            sponge_strength: 5.0,
        }
    }
}

impl ConicalIslandParams {
    /// Gauges in front of, beside and behind the island.
    pub fn gauges(&self) -> Vec<GaugeSpec> {
        let (cx, cy) = self.island.center;
        vec![
            gauge("g6", cx - 3.6, cy),
            gauge("g9", cx - 2.6, cy),
            gauge("g16", cx, cy + 2.58),
            gauge("g22", cx + 2.6, cy),
        ]
    }

    pub fn build(&self, phys: &PhysParams) -> Result<Setup> {
        let grid = Grid::new(self.nx, self.ny, self.length / self.nx as f64, self.width / self.ny as f64)?;
        let bathy = conical_island_bathymetry(&grid, &self.island)?;
        let wave = SolitaryWaveSpec::new(self.wave_height, self.island.depth, self.crest_x);
        let state = solitary_wave_ic(&wave, &grid, &bathy, phys)?;
        let sponge = BoundaryKind::Sponge { width: self.sponge_width, lambda_max: self.sponge_strength };
        let boundaries = BoundarySet::new(&grid, &bathy, sponge.clone(), sponge, BoundaryKind::Wall, BoundaryKind::Wall)?;
        Ok(Setup { grid, bathy, state, boundaries, gauges: self.gauges() })
    }
}

/// Irregular waves over a plane beach with a rip channel. With `half` set
/// only `y >= 0` is modelled and the channel axis is a wall, which the
/// symmetric bed makes exact for the mean flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HammParams {
    pub cell: f64,
    pub length: f64,
    pub half: bool,
    pub spectrum: SpectrumSpec,
}

impl Default for HammParams {
    fn default() -> Self {
        Self {
            cell: 0.05,
            length: 18.0,
            half: true,
            spectrum: SpectrumSpec { hs: 0.13, tp: 1.6, gamma: 3.3, n_components: 68, df: 0.01, seed: 1 },
        }
    }
}

impl HammParams {
    /// Cross-shore transects along the channel axis and over the plane
    /// beach, sampled every metre from 2 m to 15 m.
    pub fn transects(&self) -> (Vec<GaugeSpec>, Vec<GaugeSpec>) {
        let y_beach = 13.5;
        let y_channel = 0.5 * self.cell;
        let xs: Vec<f64> = (2..=15).map(|k| k as f64).collect();
        let channel = xs.iter().map(|&x| gauge(&format!("rip_x{x:02}"), x, y_channel)).collect();
        let beach = xs.iter().map(|&x| gauge(&format!("beach_x{x:02}"), x, y_beach)).collect();
        (channel, beach)
    }

    pub fn build(&self, phys: &PhysParams) -> Result<Setup> {
        let nx = (self.length / self.cell).round() as usize;
        let (ny, y0) = if self.half { ((15.0 / self.cell).round() as usize, 0.0) } else { ((30.0 / self.cell).round() as usize, -15.0) };
        let grid = Grid::with_origin(nx, ny, self.cell, self.cell, 0.0, y0)?;
        let bathy = hamm_bathymetry(&grid)?;
        let state = FieldState::still(&grid, &bathy);
        let depth = crate::boundary::boundary_depth(&grid, &bathy, crate::boundary::Side::West);
        let comps = jonswap_components(&self.spectrum, depth, phys.g)?;
        let boundaries = BoundarySet::new(&grid, &bathy, BoundaryKind::Maker(comps), BoundaryKind::Wall, BoundaryKind::Wall, BoundaryKind::Wall)?;
        let (mut gauges, beach) = self.transects();
        gauges.extend(beach);
        Ok(Setup { grid, bathy, state, boundaries, gauges })
    }
}
