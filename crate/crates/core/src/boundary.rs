//! Boundary policies. Each side of the domain is a reflective wall, a
//! wave maker (one or many linear components) or a sponge layer backed by a
//! wall. Ghost cells are filled west, east, south, north in that order, the
//! last two covering the corner blocks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Bathymetry, Field2, FieldState, Grid, GHOST};
use crate::implicit::LineClosure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    fn index(self) -> usize {
        match self {
            Side::West => 0,
            Side::East => 1,
            Side::South => 2,
            Side::North => 3,
        }
    }

    /// `+1` if the inward normal points along `+x`/`+y`.
    fn inward_sign(self) -> f64 {
        match self {
            Side::West | Side::South => 1.0,
            Side::East | Side::North => -1.0,
        }
    }
}

/// One linear progressive wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveComponent {
    pub amplitude: f64,
    pub omega: f64,
    pub k: f64,
    pub phase: f64,
}

impl WaveComponent {
    /// Component of the given period on water of depth `depth`.
    pub fn new(amplitude: f64, period: f64, phase: f64, depth: f64, g: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::InvalidInput(format!("wave amplitude must be >= 0, got {amplitude}")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!("wave period must be positive, got {period}")));
        }
        let omega = 2.0 * PI / period;
        let k = solve_dispersion(omega, depth, g)?;
        Ok(Self { amplitude, omega, k, phase })
    }

    pub fn celerity(&self) -> f64 {
        self.omega / self.k
    }

    #[inline]
    pub fn eta(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin()
    }
}

/// Wavenumber of linear waves: `omega^2 = g k tanh(k d)`. Newton iteration
/// from the deep-water value, kept inside a bracket that is bisected
/// whenever a Newton step would leave it.
pub fn solve_dispersion(omega: f64, depth: f64, g: f64) -> Result<f64> {
    if !(omega > 0.0 && depth > 0.0 && g > 0.0 && omega.is_finite() && depth.is_finite() && g.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "dispersion relation needs positive omega, depth and g (got {omega}, {depth}, {g})"
        )));
    }
    let w2 = omega * omega;
    let residual = |k: f64| g * k * (k * depth).tanh() - w2;
    let k_deep = w2 / g;
    let k_shallow = omega / (g * depth).sqrt();
    // tanh(x) <= min(1, x) gives the lower bound.
    let mut lo = k_deep.max(k_shallow) * (1.0 - 1e-12);
    let mut hi = (k_deep + k_shallow) * 2.0;
    while residual(hi) < 0.0 {
        hi *= 2.0;
    }
    if residual(lo) > 0.0 {
        lo = 0.0;
    }
    let mut k = k_deep.clamp(lo, hi);
    for _ in 0..100 {
        let r = residual(k);
        if r.abs() <= 1e-14 * w2 {
            return Ok(k);
        }
        if r < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let th = (k * depth).tanh();
        let slope = g * th + g * k * depth * (1.0 - th * th);
        let next = k - r / slope;
        k = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    if residual(k).abs() <= 1e-12 * w2 {
        Ok(k)
    } else {
        Err(Error::NoConvergence { omega, depth })
    }
}

/// Parameters of a discretised JONSWAP sea.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSpec {
    pub hs: f64,
    pub tp: f64,
    pub gamma: f64,
    pub n_components: usize,
    /// Frequency spacing (Hz).
    pub df: f64,
    pub seed: u64,
}

impl SpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hs > 0.0
            && self.tp > 0.0
            && self.df > 0.0
            && self.gamma >= 1.0
            && self.n_components >= 1
            && self.hs.is_finite()
            && self.tp.is_finite()
            && self.df.is_finite()
            && self.gamma.is_finite();
        if !ok {
            return Err(Error::InvalidInput(format!("invalid spectrum {self:?}")));
        }
        Ok(())
    }
}

/// JONSWAP spectral density (m^2/Hz) up to the scale factor, which is
/// removed by normalising to the requested significant height.
pub fn jonswap_density(f: f64, fp: f64, gamma: f64, g: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let sigma = if f <= fp { 0.07 } else { 0.09 };
    let r = (-(f - fp).powi(2) / (2.0 * sigma * sigma * fp * fp)).exp();
    g * g * (2.0 * PI).powi(-4) * f.powi(-5) * (-1.25 * (fp / f).powi(4)).exp() * gamma.powf(r)
}

/// Frequencies centred on the peak with spacing `df`, amplitudes from the
/// spectrum rescaled so that `4 sqrt(sum a^2 / 2) = Hs`, and seeded random
/// phases.
pub fn jonswap_components(spec: &SpectrumSpec, depth: f64, g: f64) -> Result<Vec<WaveComponent>> {
    spec.validate()?;
    let fp = 1.0 / spec.tp;
    let half = (spec.n_components / 2) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut raw = Vec::with_capacity(spec.n_components);
    for m in 0..spec.n_components {
        let f = fp + (m as f64 - half) * spec.df;
        // Draw the phase even for skipped frequencies so phases do not
        // depend on the clipping.
        let phase = rng.gen_range(0.0..2.0 * PI);
        if f <= 0.0 {
            continue;
        }
        let a = (2.0 * jonswap_density(f, fp, spec.gamma, g) * spec.df).sqrt();
        raw.push((f, a, phase));
    }
    let m0: f64 = raw.iter().map(|(_, a, _)| a * a / 2.0).sum();
    if m0 <= 0.0 {
        return Err(Error::InvalidInput("spectrum has no energy on the discrete band".into()));
    }
    let scale = spec.hs / (4.0 * m0.sqrt());
    raw.into_iter()
        .map(|(f, a, phase)| {
            let omega = 2.0 * PI * f;
            let k = solve_dispersion(omega, depth, g)?;
            Ok(WaveComponent { amplitude: a * scale, omega, k, phase })
        })
        .collect()
}

/// Significant height implied by a set of components.
pub fn components_hs(components: &[WaveComponent]) -> f64 {
    4.0 * (components.iter().map(|c| c.amplitude * c.amplitude / 2.0).sum::<f64>()).sqrt()
}

/// Surface elevation and normal flux magnitude generated by a maker.
pub fn maker_signal(components: &[WaveComponent], t: f64) -> (f64, f64) {
    let mut eta = 0.0;
    let mut flux = 0.0;
    for c in components {
        let e = c.eta(t);
        eta += e;
        flux += e * c.celerity();
    }
    (eta, flux)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryKind {
    Wall,
    /// Damping band of width `width` (m) behind which sits a wall.
    Sponge { width: f64, lambda_max: f64 },
    /// Linear wave maker; a single component is the sine maker.
    Maker(Vec<WaveComponent>),
}

impl BoundaryKind {
    pub fn closure(&self) -> LineClosure {
        match self {
            BoundaryKind::Maker(_) => LineClosure::Prescribed,
            _ => LineClosure::Reflect,
        }
    }
}

/// Per-side boundary policies.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    sides: [BoundaryKind; 4],
}

impl BoundarySet {
    pub fn walls() -> Self {
        Self { sides: [BoundaryKind::Wall, BoundaryKind::Wall, BoundaryKind::Wall, BoundaryKind::Wall] }
    }

    /// Validates sponge widths and maker depths against the grid.
    pub fn new(grid: &Grid, bathy: &Bathymetry, west: BoundaryKind, east: BoundaryKind, south: BoundaryKind, north: BoundaryKind) -> Result<Self> {
        let set = Self { sides: [west, east, south, north] };
        for side in Side::ALL {
            match set.get(side) {
                BoundaryKind::Wall => {}
                BoundaryKind::Sponge { width, lambda_max } => {
                    let cell = match side {
                        Side::West | Side::East => grid.dx,
                        Side::South | Side::North => grid.dy,
                    };
                    if !(width.is_finite() && *width >= 2.0 * cell) {
                        return Err(Error::Config(format!("{side:?} sponge must span at least two cells, got {width} m")));
                    }
                    if !(lambda_max.is_finite() && *lambda_max >= 0.0) {
                        return Err(Error::Config(format!("{side:?} sponge strength must be >= 0")));
                    }
                }
                BoundaryKind::Maker(components) => {
                    let d = boundary_depth(grid, bathy, side);
                    if !(d > 0.0) {
                        return Err(Error::Config(format!("{side:?} wave maker needs wet cells along the boundary")));
                    }
                    let amp: f64 = components.iter().map(|c| c.amplitude).sum();
                    if amp >= d {
                        return Err(Error::Config(format!(
                            "{side:?} wave maker amplitude sum {amp} m reaches the boundary depth {d} m"
                        )));
                    }
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, side: Side) -> &BoundaryKind {
        &self.sides[side.index()]
    }

    /// Closures for the implicit solve, in west, east, south, north order.
    pub fn closures(&self) -> [LineClosure; 4] {
        [
            self.sides[0].closure(),
            self.sides[1].closure(),
            self.sides[2].closure(),
            self.sides[3].closure(),
        ]
    }

    /// Fills every ghost cell of `w`, `P`, `Q` for time `t`.
    pub fn apply_ghosts(&self, grid: &Grid, bathy: &Bathymetry, state: &mut FieldState, t: f64) {
        for side in Side::ALL {
            match self.get(side) {
                BoundaryKind::Wall | BoundaryKind::Sponge { .. } => apply_wall(grid, state, side),
                BoundaryKind::Maker(c) => apply_maker(grid, bathy, state, side, c, t),
            }
        }
    }

    /// Ghost fluxes needed by prescribed closures of the implicit solve.
    pub fn apply_flux_ghosts(&self, grid: &Grid, p: &mut Field2, q: &mut Field2, t: f64) {
        for side in Side::ALL {
            if let BoundaryKind::Maker(c) = self.get(side) {
                let (_, flux) = maker_signal(c, t);
                let flux = side.inward_sign() * flux;
                for_each_ghost(grid, side, |i, j, _| match side {
                    Side::West | Side::East => p.set(i, j, flux),
                    Side::South | Side::North => q.set(i, j, flux),
                });
            }
        }
    }

    /// Damps all sponge bands over a step of length `dt`.
    pub fn apply_sponges(&self, grid: &Grid, bathy: &Bathymetry, state: &mut FieldState, dt: f64) {
        for side in Side::ALL {
            if let BoundaryKind::Sponge { width, lambda_max } = self.get(side) {
                apply_sponge(grid, bathy, state, side, *width, *lambda_max, dt);
            }
        }
    }

    /// Largest generated amplitude, used to scale blow-up detection.
    pub fn max_forcing_amplitude(&self) -> f64 {
        self.sides
            .iter()
            .map(|s| match s {
                BoundaryKind::Maker(c) => c.iter().map(|w| w.amplitude).sum(),
                _ => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

/// Mean still-water depth of the first interior line along `side`.
pub fn boundary_depth(grid: &Grid, bathy: &Bathymetry, side: Side) -> f64 {
    let vals: Vec<f64> = match side {
        Side::West => grid.interior_rows().map(|j| bathy.d.at(GHOST, j)).collect(),
        Side::East => grid.interior_rows().map(|j| bathy.d.at(GHOST + grid.nx - 1, j)).collect(),
        Side::South => grid.interior_cols().map(|i| bathy.d.at(i, GHOST)).collect(),
        Side::North => grid.interior_cols().map(|i| bathy.d.at(i, GHOST + grid.ny - 1)).collect(),
    };
    if vals.iter().any(|&d| d <= 0.0) {
        return 0.0;
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Visits ghost cells of `side` as `(i, j, mirror)`, where `mirror` is the
/// interior (or already filled) cell reflected across the boundary. West and
/// east cover interior rows; south and north cover full padded rows.
fn for_each_ghost(grid: &Grid, side: Side, mut f: impl FnMut(usize, usize, (usize, usize))) {
    match side {
        Side::West | Side::East => {
            for j in grid.interior_rows() {
                for k in 0..GHOST {
                    let i = if side == Side::West { k } else { grid.ni() - 1 - k };
                    f(i, j, (grid.mirror_i(i), j));
                }
            }
        }
        Side::South | Side::North => {
            for k in 0..GHOST {
                let j = if side == Side::South { k } else { grid.nj() - 1 - k };
                for i in 0..grid.ni() {
                    f(i, j, (i, grid.mirror_j(j)));
                }
            }
        }
    }
}

/// Solid wall: even `w`, odd normal flux, even tangential flux.
pub fn apply_wall(grid: &Grid, state: &mut FieldState, side: Side) {
    let FieldState { w, p, q } = state;
    for_each_ghost(grid, side, |i, j, (mi, mj)| {
        w.set(i, j, w.at(mi, mj));
        match side {
            Side::West | Side::East => {
                p.set(i, j, -p.at(mi, mj));
                q.set(i, j, q.at(mi, mj));
            }
            Side::South | Side::North => {
                p.set(i, j, p.at(mi, mj));
                q.set(i, j, -q.at(mi, mj));
            }
        }
    });
}

/// Wave maker: ghost surface `ws + eta(t)`, normal flux `eta c` per
/// component directed into the domain, no tangential flux. Ghosts never read
/// the interior.
pub fn apply_maker(grid: &Grid, bathy: &Bathymetry, state: &mut FieldState, side: Side, components: &[WaveComponent], t: f64) {
    let (eta, flux) = maker_signal(components, t);
    let flux = side.inward_sign() * flux;
    let FieldState { w, p, q } = state;
    for_each_ghost(grid, side, |i, j, _| {
        w.set(i, j, (bathy.ws + eta).max(bathy.b.at(i, j)));
        let (pn, qn) = match side {
            Side::West | Side::East => (flux, 0.0),
            Side::South | Side::North => (0.0, flux),
        };
        p.set(i, j, pn);
        q.set(i, j, qn);
    });
}

/// Sine maker for a single component.
pub fn apply_sine_maker(grid: &Grid, bathy: &Bathymetry, state: &mut FieldState, side: Side, component: &WaveComponent, t: f64) {
    apply_maker(grid, bathy, state, side, std::slice::from_ref(component), t);
}

pub fn apply_irregular_maker(grid: &Grid, bathy: &Bathymetry, state: &mut FieldState, side: Side, components: &[WaveComponent], t: f64) {
    apply_maker(grid, bathy, state, side, components, t);
}

/// Damping rate at distance `s` from the boundary edge.
#[inline]
pub fn sponge_rate(s: f64, width: f64, lambda_max: f64) -> f64 {
    if s >= width {
        0.0
    } else {
        let r = (width - s) / width;
        lambda_max * r * r
    }
}

/// Multiplies `(w - ws, P, Q)` by `exp(-lambda dt)` in the band along
/// `side`, over wet still-water cells only.
pub fn apply_sponge(grid: &Grid, bathy: &Bathymetry, state: &mut FieldState, side: Side, width: f64, lambda_max: f64, dt: f64) {
    if lambda_max == 0.0 {
        return;
    }
    for j in grid.interior_rows() {
        for i in grid.interior_cols() {
            let s = match side {
                Side::West => (i - GHOST) as f64 * grid.dx + 0.5 * grid.dx,
                Side::East => (GHOST + grid.nx - 1 - i) as f64 * grid.dx + 0.5 * grid.dx,
                Side::South => (j - GHOST) as f64 * grid.dy + 0.5 * grid.dy,
                Side::North => (GHOST + grid.ny - 1 - j) as f64 * grid.dy + 0.5 * grid.dy,
            };
            let lambda = sponge_rate(s, width, lambda_max);
            if lambda == 0.0 || bathy.d.at(i, j) <= 0.0 {
                continue;
            }
            let f = (-lambda * dt).exp();
            let w = bathy.ws + (state.w.at(i, j) - bathy.ws) * f;
            state.w.set(i, j, w.max(bathy.b.at(i, j)));
            state.p.set(i, j, state.p.at(i, j) * f);
            state.q.set(i, j, state.q.at(i, j) * f);
        }
    }
}
