//! Central-upwind finite-volume evaluation of the shallow-water part of the
//! model: piecewise-linear reconstruction of `(w, P, Q)` with a generalised
//! minmod limiter, a depth positivity correction at the faces, the
//! central-upwind numerical flux, and a bed-slope source that cancels the
//! hydrostatic flux gradient exactly for water at rest.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Bathymetry, Field2, FieldState, Grid, PhysParams, GHOST};

/// Largest CFL number the finite-volume scheme is stable for.
pub const CFL_STABILITY_LIMIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericsParams {
    /// Minmod sharpness, 1 (most dissipative) to 2.
    pub theta: f64,
    pub cfl_target: f64,
}

impl Default for NumericsParams {
    fn default() -> Self {
        Self { theta: 1.5, cfl_target: 0.125 }
    }
}

impl NumericsParams {
    pub fn validate(&self) -> Result<()> {
        if !(1.0..=2.0).contains(&self.theta) {
            return Err(Error::InvalidInput(format!("theta must lie in [1, 2], got {}", self.theta)));
        }
        if !(self.cfl_target > 0.0 && self.cfl_target < CFL_STABILITY_LIMIT) {
            return Err(Error::InvalidInput(format!(
                "cfl_target must lie in (0, {CFL_STABILITY_LIMIT}), got {}",
                self.cfl_target
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Generalised minmod of `theta (c - l)`, `(r - l) / 2`, `theta (r - c)`.
/// Returns the undivided slope (change across one cell).
#[inline(always)]
pub fn minmod_slope(a_left: f64, a_center: f64, a_right: f64, theta: f64) -> f64 {
    let a = theta * (a_center - a_left);
    let b = 0.5 * (a_right - a_left);
    let c = theta * (a_right - a_center);
    if a > 0.0 && b > 0.0 && c > 0.0 {
        a.min(b).min(c)
    } else if a < 0.0 && b < 0.0 && c < 0.0 {
        a.max(b).max(c)
    } else {
        0.0
    }
}

/// Reconstructed values on one side of a face.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaceState {
    pub w: f64,
    pub h: f64,
    pub p: f64,
    pub q: f64,
    pub u: f64,
    pub v: f64,
}

impl FaceState {
    /// Face state from reconstructed `w`, `P`, `Q` and the face bed. The
    /// fluxes are rebuilt from the regularised velocities so that they
    /// vanish with the depth.
    #[inline(always)]
    pub fn new(w: f64, b_face: f64, p: f64, q: f64, phys: &PhysParams) -> Self {
        let h = (w - b_face).max(0.0);
        let u = phys.velocity(h, p);
        let v = phys.velocity(h, q);
        Self { w, h, p: h * u, q: h * v, u, v }
    }

    #[inline(always)]
    fn conserved(&self) -> [f64; 3] {
        [self.w, self.p, self.q]
    }

    /// Physical flux normal to `axis`.
    #[inline(always)]
    pub fn physical_flux(&self, axis: Axis, g: f64) -> [f64; 3] {
        let hydro = 0.5 * g * self.h * self.h;
        match axis {
            Axis::X => [self.p, self.p * self.u + hydro, self.p * self.v],
            Axis::Y => [self.q, self.q * self.u, self.q * self.v + hydro],
        }
    }
}

/// Central-upwind flux across a face with `left` on the low-coordinate side.
#[inline(always)]
pub fn central_upwind_flux(left: &FaceState, right: &FaceState, axis: Axis, g: f64) -> [f64; 3] {
    if left == right {
        return left.physical_flux(axis, g);
    }
    let (un_l, un_r) = match axis {
        Axis::X => (left.u, right.u),
        Axis::Y => (left.v, right.v),
    };
    let c_l = (g * left.h).sqrt();
    let c_r = (g * right.h).sqrt();
    let a_plus = (un_l + c_l).max(un_r + c_r).max(0.0);
    let a_minus = (un_l - c_l).min(un_r - c_r).min(0.0);
    let span = a_plus - a_minus;
    if span <= 0.0 {
        return [0.0; 3];
    }
    let f_l = left.physical_flux(axis, g);
    let f_r = right.physical_flux(axis, g);
    let u_l = left.conserved();
    let u_r = right.conserved();
    let prod = a_plus * a_minus;
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = (a_plus * f_l[k] - a_minus * f_r[k] + prod * (u_r[k] - u_l[k])) / span;
    }
    out
}

/// Largest one-sided wave speed magnitude at a face, for diagnostics.
pub fn face_speed(left: &FaceState, right: &FaceState, axis: Axis, g: f64) -> f64 {
    let (un_l, un_r) = match axis {
        Axis::X => (left.u, right.u),
        Axis::Y => (left.v, right.v),
    };
    let c_l = (g * left.h).sqrt();
    let c_r = (g * right.h).sqrt();
    (un_l + c_l).max(un_r + c_r).max(0.0).max(-(un_l - c_l).min(un_r - c_r).min(0.0))
}

/// Reconstructs a cell in the direction of `axis`, returning the states at
/// its low and high faces. `w` is reconstructed and then shifted, keeping
/// its cell average, so that neither face is below the face bed.
#[inline(always)]
pub(crate) fn reconstruct_cell(
    state: &FieldState,
    bathy: &Bathymetry,
    theta: f64,
    phys: &PhysParams,
    axis: Axis,
    i: usize,
    j: usize,
) -> (FaceState, FaceState) {
    let (il, jl, ir, jr) = match axis {
        Axis::X => (i - 1, j, i + 1, j),
        Axis::Y => (i, j - 1, i, j + 1),
    };
    let (b_lo, b_hi) = match axis {
        Axis::X => (bathy.b_face_x.at(i - 1, j), bathy.b_face_x.at(i, j)),
        Axis::Y => (bathy.b_face_y.at(i, j - 1), bathy.b_face_y.at(i, j)),
    };
    let w = state.w.at(i, j);
    let sw = minmod_slope(state.w.at(il, jl), w, state.w.at(ir, jr), theta);
    let mut w_lo = w - 0.5 * sw;
    let mut w_hi = w + 0.5 * sw;
    if w_hi < b_hi {
        w_hi = b_hi;
        w_lo = 2.0 * w - b_hi;
    } else if w_lo < b_lo {
        w_lo = b_lo;
        w_hi = 2.0 * w - b_lo;
    }
    let p = state.p.at(i, j);
    let sp = minmod_slope(state.p.at(il, jl), p, state.p.at(ir, jr), theta);
    let q = state.q.at(i, j);
    let sq = minmod_slope(state.q.at(il, jl), q, state.q.at(ir, jr), theta);
    (
        FaceState::new(w_lo, b_lo, p - 0.5 * sp, q - 0.5 * sq, phys),
        FaceState::new(w_hi, b_hi, p + 0.5 * sp, q + 0.5 * sq, phys),
    )
}

/// Face states on both sides of every face bounding an interior cell.
#[derive(Debug, Clone)]
pub struct InterfaceStates {
    nx: usize,
    /// `(left, right)` per x-face, row-major over `(nx + 1) x ny`.
    pub x: Vec<(FaceState, FaceState)>,
    /// `(below, above)` per y-face, row-major over `nx x (ny + 1)`.
    pub y: Vec<(FaceState, FaceState)>,
}

impl InterfaceStates {
    /// X-face on the west side of interior cell `(ci, cj)` (0-based interior
    /// indices); `ci == nx` is the east boundary face.
    pub fn x_face(&self, ci: usize, cj: usize) -> &(FaceState, FaceState) {
        &self.x[cj * (self.nx + 1) + ci]
    }

    pub fn y_face(&self, ci: usize, cj: usize) -> &(FaceState, FaceState) {
        &self.y[cj * self.nx + ci]
    }
}

pub fn reconstruct(
    state: &FieldState,
    bathy: &Bathymetry,
    grid: &Grid,
    numerics: &NumericsParams,
    phys: &PhysParams,
) -> InterfaceStates {
    let (nx, ny) = (grid.nx, grid.ny);
    let th = numerics.theta;
    let mut x = Vec::with_capacity((nx + 1) * ny);
    for j in grid.interior_rows() {
        for fi in 0..=nx {
            let il = GHOST - 1 + fi;
            let (_, l) = reconstruct_cell(state, bathy, th, phys, Axis::X, il, j);
            let (r, _) = reconstruct_cell(state, bathy, th, phys, Axis::X, il + 1, j);
            x.push((l, r));
        }
    }
    let mut y = Vec::with_capacity(nx * (ny + 1));
    for fj in 0..=ny {
        let jl = GHOST - 1 + fj;
        for i in grid.interior_cols() {
            let (_, l) = reconstruct_cell(state, bathy, th, phys, Axis::Y, i, jl);
            let (r, _) = reconstruct_cell(state, bathy, th, phys, Axis::Y, i, jl + 1);
            y.push((l, r));
        }
    }
    InterfaceStates { nx, x, y }
}

/// Mass fluxes through every face bounding an interior cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxes {
    pub nx: usize,
    pub ny: usize,
    /// Row-major `(nx + 1) x ny`; entry `fi` of row `cj` is the face west
    /// of interior cell `fi`.
    pub x: Vec<f64>,
    /// Row-major `nx x (ny + 1)`; row `fj` is the face south of interior
    /// row `fj`.
    pub y: Vec<f64>,
}

impl FaceFluxes {
    #[inline(always)]
    pub fn x_at(&self, fi: usize, cj: usize) -> f64 {
        self.x[cj * (self.nx + 1) + fi]
    }

    #[inline(always)]
    pub fn y_at(&self, ci: usize, fj: usize) -> f64 {
        self.y[fj * self.nx + ci]
    }
}

/// Per-cell rates of the shallow-water subsystem.
#[derive(Debug, Clone)]
pub struct NlswRates {
    pub dw: Field2,
    pub dp: Field2,
    pub dq: Field2,
    /// Continuity fluxes, kept so that the update of `w` can be limited
    /// conservatively.
    pub mass: FaceFluxes,
}

/// Flux divergence plus well-balanced bed-slope source, for every interior
/// cell. Ghost cells must already hold boundary values.
pub fn nlsw_divergence_and_source(
    state: &FieldState,
    bathy: &Bathymetry,
    grid: &Grid,
    numerics: &NumericsParams,
    phys: &PhysParams,
) -> NlswRates {
    let (nx, ny) = (grid.nx, grid.ny);
    let th = numerics.theta;
    let g = phys.g;

    let mut fx = vec![[0.0f64; 3]; (nx + 1) * ny];
    fx.par_chunks_mut(nx + 1).enumerate().for_each(|(cj, row)| {
        let j = cj + GHOST;
        let mut prev = reconstruct_cell(state, bathy, th, phys, Axis::X, GHOST - 1, j).1;
        for (fi, out) in row.iter_mut().enumerate() {
            let (lo, hi) = reconstruct_cell(state, bathy, th, phys, Axis::X, GHOST + fi, j);
            *out = central_upwind_flux(&prev, &lo, Axis::X, g);
            prev = hi;
        }
    });

    let mut fy = vec![[0.0f64; 3]; nx * (ny + 1)];
    fy.par_chunks_mut(nx).enumerate().for_each(|(fj, row)| {
        let jl = GHOST - 1 + fj;
        for (ci, out) in row.iter_mut().enumerate() {
            let i = ci + GHOST;
            let (_, below) = reconstruct_cell(state, bathy, th, phys, Axis::Y, i, jl);
            let (above, _) = reconstruct_cell(state, bathy, th, phys, Axis::Y, i, jl + 1);
            *out = central_upwind_flux(&below, &above, Axis::Y, g);
        }
    });

    let mut dw = Field2::zeros(grid);
    let mut dp = Field2::zeros(grid);
    let mut dq = Field2::zeros(grid);
    let ni = grid.ni();
    let (dx, dy) = (grid.dx, grid.dy);
    dw.as_mut_slice()
        .par_chunks_mut(ni)
        .zip(dp.as_mut_slice().par_chunks_mut(ni))
        .zip(dq.as_mut_slice().par_chunks_mut(ni))
        .enumerate()
        .filter(|(j, _)| (GHOST..GHOST + ny).contains(j))
        .for_each(|(j, ((rw, rp), rq))| {
            let cj = j - GHOST;
            for ci in 0..nx {
                let i = ci + GHOST;
                let west = fx[cj * (nx + 1) + ci];
                let east = fx[cj * (nx + 1) + ci + 1];
                let south = fy[cj * nx + ci];
                let north = fy[(cj + 1) * nx + ci];
                let h = state.w.at(i, j) - bathy.b.at(i, j);
                let sx = -g * h * (bathy.b_face_x.at(i, j) - bathy.b_face_x.at(i - 1, j)) / dx;
                let sy = -g * h * (bathy.b_face_y.at(i, j) - bathy.b_face_y.at(i, j - 1)) / dy;
                rw[i] = -(east[0] - west[0]) / dx - (north[0] - south[0]) / dy;
                rp[i] = -(east[1] - west[1]) / dx - (north[1] - south[1]) / dy + sx;
                rq[i] = -(east[2] - west[2]) / dx - (north[2] - south[2]) / dy + sy;
            }
        });

    let mass = FaceFluxes {
        nx,
        ny,
        x: fx.iter().map(|f| f[0]).collect(),
        y: fy.iter().map(|f| f[0]).collect(),
    };
    NlswRates { dw, dp, dq, mass }
}

/// Quadratic bottom friction `c_f P |U| / h*^2`, returned with the sign of
/// the flux; it is subtracted from the momentum stages.
#[inline(always)]
pub fn friction(p: f64, q: f64, h: f64, c_f: f64, h_eps: f64) -> (f64, f64) {
    if c_f == 0.0 {
        return (0.0, 0.0);
    }
    let hs = h.max(0.0).max(h_eps);
    let mag = (p * p + q * q).sqrt();
    let k = c_f * mag / (hs * hs);
    (k * p, k * q)
}
