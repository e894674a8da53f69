//! Stage functions of the rearranged Boussinesq system.
//!
//! The state is advanced as `w_t = E`, `U*_t = F + (F*)_t`,
//! `V*_t = G + (G*)_t`, where `U*` and `V*` collect the time-differentiated
//! dispersive terms that involve `P` and `Q` along one grid direction and
//! `F*`, `G*` the cross terms. `E`, `F`, `G` carry the finite-volume
//! shallow-water rates plus friction and the remaining dispersive terms.
//!
//! Stage arrays hold interior cells only, row-major with `x` fastest.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Bathymetry, Field2, FieldState, Grid, PhysParams, GHOST};
use crate::hydro::{friction, nlsw_divergence_and_source, FaceFluxes, NumericsParams};

/// Second-order central differences on cell centres.
pub mod stencil {
    use crate::grid::Field2;

    #[inline(always)]
    pub fn dx(f: &Field2, i: usize, j: usize, h: f64) -> f64 {
        (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * h)
    }

    #[inline(always)]
    pub fn dy(f: &Field2, i: usize, j: usize, h: f64) -> f64 {
        (f.at(i, j + 1) - f.at(i, j - 1)) / (2.0 * h)
    }

    #[inline(always)]
    pub fn dxx(f: &Field2, i: usize, j: usize, h: f64) -> f64 {
        (f.at(i + 1, j) - 2.0 * f.at(i, j) + f.at(i - 1, j)) / (h * h)
    }

    #[inline(always)]
    pub fn dyy(f: &Field2, i: usize, j: usize, h: f64) -> f64 {
        (f.at(i, j + 1) - 2.0 * f.at(i, j) + f.at(i, j - 1)) / (h * h)
    }

    #[inline(always)]
    pub fn dxy(f: &Field2, i: usize, j: usize, hx: f64, hy: f64) -> f64 {
        ((f.at(i + 1, j + 1) - f.at(i - 1, j + 1)) - (f.at(i + 1, j - 1) - f.at(i - 1, j - 1)))
            / (4.0 * hx * hy)
    }

    /// Five-point third derivative.
    #[inline(always)]
    pub fn dxxx(f: &Field2, i: usize, j: usize, h: f64) -> f64 {
        (-f.at(i - 2, j) + 2.0 * f.at(i - 1, j) - 2.0 * f.at(i + 1, j) + f.at(i + 2, j)) / (2.0 * h * h * h)
    }

    #[inline(always)]
    pub fn dyyy(f: &Field2, i: usize, j: usize, h: f64) -> f64 {
        (-f.at(i, j - 2) + 2.0 * f.at(i, j - 1) - 2.0 * f.at(i, j + 1) + f.at(i, j + 2)) / (2.0 * h * h * h)
    }

    /// x-difference of the yy second difference.
    #[inline(always)]
    pub fn dxyy(f: &Field2, i: usize, j: usize, hx: f64, hy: f64) -> f64 {
        (dyy(f, i + 1, j, hy) - dyy(f, i - 1, j, hy)) / (2.0 * hx)
    }

    #[inline(always)]
    pub fn dxxy(f: &Field2, i: usize, j: usize, hx: f64, hy: f64) -> f64 {
        (dxx(f, i, j + 1, hx) - dxx(f, i, j - 1, hx)) / (2.0 * hy)
    }
}

/// Stage values of one time level.
#[derive(Debug, Clone)]
pub struct StageSet {
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub fstar: Vec<f64>,
    pub gstar: Vec<f64>,
    /// Continuity fluxes behind `e`.
    pub mass: FaceFluxes,
    pub taken_at: f64,
    /// Duration of the step taken from this level, once known.
    pub dt_after: f64,
}

/// The last three stage levels, newest first.
#[derive(Debug, Clone, Default)]
pub struct StageHistory {
    levels: VecDeque<StageSet>,
}

impl StageHistory {
    pub const DEPTH: usize = 3;

    pub fn new() -> Self {
        Self { levels: VecDeque::with_capacity(Self::DEPTH) }
    }

    pub fn push(&mut self, stage: StageSet) {
        if self.levels.len() == Self::DEPTH {
            self.levels.pop_back();
        }
        self.levels.push_front(stage);
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `k` steps back; `0` is the newest.
    pub fn get(&self, k: usize) -> Option<&StageSet> {
        self.levels.get(k)
    }

    pub fn newest_mut(&mut self) -> Option<&mut StageSet> {
        self.levels.front_mut()
    }

    pub fn clear(&mut self) {
        self.levels.clear();
    }
}

/// Reference surface for the dispersive terms: `ws` over wet bed, the bed
/// itself where dry. `w` minus this is zero for water at rest everywhere.
pub fn eta_reference(bathy: &Bathymetry) -> Field2 {
    let mut r = bathy.b.clone();
    for (rv, dv) in r.as_mut_slice().iter_mut().zip(bathy.d.as_slice()) {
        *rv += dv;
    }
    r
}

fn first_non_finite(grid: &Grid, v: &[f64], term: &'static str) -> Result<()> {
    if let Some(k) = v.par_iter().position_first(|x| !x.is_finite()) {
        return Err(Error::NonFinite { term, i: k % grid.nx + GHOST, j: k / grid.nx + GHOST });
    }
    Ok(())
}

/// Evaluates every stage function at the current state. Ghost cells must
/// hold boundary values.
pub fn compute_stages(
    state: &FieldState,
    bathy: &Bathymetry,
    grid: &Grid,
    numerics: &NumericsParams,
    phys: &PhysParams,
    t: f64,
) -> Result<StageSet> {
    let nlsw = nlsw_divergence_and_source(state, bathy, grid, numerics, phys);
    let eta_ref = eta_reference(bathy);
    let mut eta = state.w.clone();
    for (e, r) in eta.as_mut_slice().iter_mut().zip(eta_ref.as_slice()) {
        *e -= r;
    }

    let nx = grid.nx;
    let n = nx * grid.ny;
    let (mut e, mut f, mut g) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut fstar, mut gstar) = (vec![0.0; n], vec![0.0; n]);
    let (hx, hy) = (grid.dx, grid.dy);
    let bd = phys.b_disp;
    let b3 = bd + 1.0 / 3.0;
    let grav = phys.g;

    e.par_chunks_mut(nx)
        .zip(f.par_chunks_mut(nx))
        .zip(g.par_chunks_mut(nx))
        .zip(fstar.par_chunks_mut(nx))
        .zip(gstar.par_chunks_mut(nx))
        .enumerate()
        .for_each(|(cj, ((((re, rf), rg), rfs), rgs))| {
            let j = cj + GHOST;
            for ci in 0..nx {
                let i = ci + GHOST;
                let h = state.w.at(i, j) - bathy.b.at(i, j);
                let (p, q) = (state.p.at(i, j), state.q.at(i, j));
                let (f1, f2) = friction(p, q, h, phys.c_f, phys.h_eps);
                re[ci] = nlsw.dw.at(i, j);
                let mut fv = nlsw.dp.at(i, j) - f1;
                let mut gv = nlsw.dq.at(i, j) - f2;
                let d = bathy.d.at(i, j);
                if d > 0.0 {
                    let (d_x, d_y) = (bathy.d_x.at(i, j), bathy.d_y.at(i, j));
                    let exx = stencil::dxx(&eta, i, j, hx);
                    let eyy = stencil::dyy(&eta, i, j, hy);
                    let exy = stencil::dxy(&eta, i, j, hx, hy);
                    let bgd2 = bd * grav * d * d;
                    fv += bgd2 * d * (stencil::dxxx(&eta, i, j, hx) + stencil::dxyy(&eta, i, j, hx, hy))
                        + bgd2 * (d_x * (2.0 * exx + eyy) + d_y * exy);
                    gv += bgd2 * d * (stencil::dyyy(&eta, i, j, hy) + stencil::dxxy(&eta, i, j, hx, hy))
                        + bgd2 * (d_y * (2.0 * eyy + exx) + d_x * exy);
                    rfs[ci] = d * d_x * stencil::dy(&state.q, i, j, hy) / 6.0
                        + d * d_y * stencil::dx(&state.q, i, j, hx) / 6.0
                        + b3 * d * d * stencil::dxy(&state.q, i, j, hx, hy);
                    rgs[ci] = d * d_y * stencil::dx(&state.p, i, j, hx) / 6.0
                        + d * d_x * stencil::dy(&state.p, i, j, hy) / 6.0
                        + b3 * d * d * stencil::dxy(&state.p, i, j, hx, hy);
                }
                rf[ci] = fv;
                rg[ci] = gv;
            }
        });

    first_non_finite(grid, &e, "E")?;
    first_non_finite(grid, &f, "F")?;
    first_non_finite(grid, &g, "G")?;
    first_non_finite(grid, &fstar, "F*")?;
    first_non_finite(grid, &gstar, "G*")?;
    Ok(StageSet { e, f, g, fstar, gstar, mass: nlsw.mass, taken_at: t, dt_after: f64::NAN })
}

/// `U* = P - d d_x P_x / 3 - (B + 1/3) d^2 P_xx` and its y counterpart, on
/// interior cells. Ghost `P`, `Q` must be set.
pub fn compute_ustar_vstar(
    state: &FieldState,
    bathy: &Bathymetry,
    grid: &Grid,
    phys: &PhysParams,
) -> (Vec<f64>, Vec<f64>) {
    let nx = grid.nx;
    let n = nx * grid.ny;
    let (mut us, mut vs) = (vec![0.0; n], vec![0.0; n]);
    let b3 = phys.b_disp + 1.0 / 3.0;
    let (hx, hy) = (grid.dx, grid.dy);
    us.par_chunks_mut(nx).zip(vs.par_chunks_mut(nx)).enumerate().for_each(|(cj, (ru, rv))| {
        let j = cj + GHOST;
        for ci in 0..nx {
            let i = ci + GHOST;
            let (p, q) = (state.p.at(i, j), state.q.at(i, j));
            let d = bathy.d.at(i, j);
            if d > 0.0 {
                ru[ci] = p
                    - d * bathy.d_x.at(i, j) * stencil::dx(&state.p, i, j, hx) / 3.0
                    - b3 * d * d * stencil::dxx(&state.p, i, j, hx);
                rv[ci] = q
                    - d * bathy.d_y.at(i, j) * stencil::dy(&state.q, i, j, hy) / 3.0
                    - b3 * d * d * stencil::dyy(&state.q, i, j, hy);
            } else {
                ru[ci] = p;
                rv[ci] = q;
            }
        }
    });
    (us, vs)
}
