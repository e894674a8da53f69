//! Ghost-padded Cartesian grid, bed geometry and the evolving state.
//!
//! Every cell-centred array carries a frame of [`GHOST`] cells on each side
//! and is stored row-major with `x` varying fastest. Padded indices run over
//! `0..nx + 4` and `0..ny + 4`; interior cells are `2..nx + 2`, `2..ny + 2`.

use crate::error::{Error, Result};

/// Ghost-layer width on every side.
pub const GHOST: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Coordinates of the lower-left corner of the interior.
    pub x0: f64,
    pub y0: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        Self::with_origin(nx, ny, dx, dy, 0.0, 0.0)
    }

    pub fn with_origin(nx: usize, ny: usize, dx: f64, dy: f64, x0: f64, y0: f64) -> Result<Self> {
        if nx < 5 || ny < 5 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 5x5 cells, got {nx}x{ny}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0 && dy.is_finite() && dy > 0.0) {
            return Err(Error::InvalidInput(format!("cell sizes must be positive, got {dx} x {dy}")));
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        Ok(Self { nx, ny, dx, dy, x0, y0 })
    }

    /// Padded extent in x.
    #[inline]
    pub fn ni(&self) -> usize {
        self.nx + 2 * GHOST
    }

    /// Padded extent in y.
    #[inline]
    pub fn nj(&self) -> usize {
        self.ny + 2 * GHOST
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ni() * self.nj()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ni() + i
    }

    /// Cell-centre x of padded column `i`.
    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        self.x0 + (i as f64 - GHOST as f64 + 0.5) * self.dx
    }

    /// Cell-centre y of padded row `j`.
    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        self.y0 + (j as f64 - GHOST as f64 + 0.5) * self.dy
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x0 + self.width() && y >= self.y0 && y <= self.y0 + self.height()
    }

    /// Padded index of the cell containing `(x, y)`, clamped to the interior.
    pub fn cell_at(&self, x: f64, y: f64) -> (usize, usize) {
        let fi = ((x - self.x0) / self.dx).floor();
        let fj = ((y - self.y0) / self.dy).floor();
        let i = (fi.max(0.0) as usize).min(self.nx - 1) + GHOST;
        let j = (fj.max(0.0) as usize).min(self.ny - 1) + GHOST;
        (i, j)
    }

    pub fn interior_cols(&self) -> std::ops::Range<usize> {
        GHOST..GHOST + self.nx
    }

    pub fn interior_rows(&self) -> std::ops::Range<usize> {
        GHOST..GHOST + self.ny
    }

    /// Mirror of padded column `i` across the nearest x-boundary, for ghosts.
    #[inline]
    pub fn mirror_i(&self, i: usize) -> usize {
        mirror(i, self.nx)
    }

    #[inline]
    pub fn mirror_j(&self, j: usize) -> usize {
        mirror(j, self.ny)
    }
}

#[inline]
fn mirror(k: usize, n: usize) -> usize {
    if k < GHOST {
        2 * GHOST - 1 - k
    } else if k >= n + GHOST {
        2 * (n + GHOST) - 1 - k
    } else {
        k
    }
}

/// Dense padded scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    ni: usize,
    nj: usize,
    data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(grid: &Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: &Grid, v: f64) -> Self {
        Self { ni: grid.ni(), nj: grid.nj(), data: vec![v; grid.len()] }
    }

    /// Evaluates `f(x, y)` at every padded cell centre.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.nj() {
            let y = grid.yc(j);
            for i in 0..grid.ni() {
                out.data[j * out.ni + i] = f(grid.xc(i), y);
            }
        }
        out
    }

    /// Builds a field from row-major interior values (south row first).
    pub fn from_interior(grid: &Grid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.nx * grid.ny {
            return Err(Error::InvalidInput(format!(
                "expected {} interior values, got {}",
                grid.nx * grid.ny,
                values.len()
            )));
        }
        let mut out = Self::zeros(grid);
        for (r, row) in values.chunks(grid.nx).enumerate() {
            let j = r + GHOST;
            out.data[j * out.ni + GHOST..j * out.ni + GHOST + grid.nx].copy_from_slice(row);
        }
        Ok(out)
    }

    pub fn interior_values(&self, grid: &Grid) -> Vec<f64> {
        let mut v = Vec::with_capacity(grid.nx * grid.ny);
        for j in grid.interior_rows() {
            v.extend_from_slice(&self.data[j * self.ni + GHOST..j * self.ni + GHOST + grid.nx]);
        }
        v
    }

    #[inline(always)]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.ni + i]
    }

    #[inline(always)]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.ni + i] = v;
    }

    #[inline]
    pub fn ni(&self) -> usize {
        self.ni
    }

    #[inline]
    pub fn nj(&self) -> usize {
        self.nj
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.ni..(j + 1) * self.ni]
    }

    /// Largest absolute interior value.
    pub fn max_abs_interior(&self, grid: &Grid) -> f64 {
        let mut m: f64 = 0.0;
        for j in grid.interior_rows() {
            for i in grid.interior_cols() {
                m = m.max(self.at(i, j).abs());
            }
        }
        m
    }

    /// Even extension into both ghost layers on all four sides.
    pub fn reflect_even(&mut self, grid: &Grid) {
        for j in grid.interior_rows() {
            for k in 0..GHOST {
                let i_w = k;
                let i_e = grid.ni() - 1 - k;
                self.set(i_w, j, self.at(grid.mirror_i(i_w), j));
                self.set(i_e, j, self.at(grid.mirror_i(i_e), j));
            }
        }
        for k in 0..GHOST {
            let j_s = k;
            let j_n = grid.nj() - 1 - k;
            for i in 0..grid.ni() {
                self.set(i, j_s, self.at(i, grid.mirror_j(j_s)));
                self.set(i, j_n, self.at(i, grid.mirror_j(j_n)));
            }
        }
    }
}

/// Physical constants of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub g: f64,
    /// Dispersion calibration coefficient.
    pub b_disp: f64,
    /// Quadratic bottom-friction factor.
    pub c_f: f64,
    /// Depth floor used wherever a division by the water depth occurs.
    pub h_eps: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self { g: 9.81, b_disp: 1.0 / 15.0, c_f: 0.0, h_eps: 1e-6 }
    }
}

impl PhysParams {
    /// Default depth floor scaled to the deepest still-water depth.
    pub fn default_h_eps(max_depth: f64) -> f64 {
        1e-6 * max_depth.max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::InvalidInput(format!("gravity must be positive, got {}", self.g)));
        }
        if !self.b_disp.is_finite() {
            return Err(Error::InvalidInput("dispersion coefficient must be finite".into()));
        }
        if !(self.c_f.is_finite() && self.c_f >= 0.0) {
            return Err(Error::InvalidInput(format!("friction factor must be >= 0, got {}", self.c_f)));
        }
        if !(self.h_eps.is_finite() && self.h_eps > 0.0) {
            return Err(Error::InvalidInput(format!("depth floor must be positive, got {}", self.h_eps)));
        }
        Ok(())
    }

    /// Velocity carried by the discharge `m` at depth `h`. Above `h_eps`
    /// this is `m / h`; below, `sqrt(2) h m / sqrt(h^4 + h_eps^4)`, which
    /// is continuous at `h_eps` and vanishes as `h^2` with the depth.
    #[inline(always)]
    pub fn velocity(&self, h: f64, m: f64) -> f64 {
        if h >= self.h_eps {
            m / h
        } else if h <= 0.0 {
            0.0
        } else {
            let (h2, e2) = (h * h, self.h_eps * self.h_eps);
            std::f64::consts::SQRT_2 * h * m / (h2 * h2 + e2 * e2).sqrt()
        }
    }

    /// Regularised depth `max(h, h_eps)`.
    #[inline(always)]
    pub fn h_star(&self, h: f64) -> f64 {
        h.max(self.h_eps)
    }
}

/// Static bed geometry.
///
/// The input bed is treated as cell samples of a surface whose corner
/// values are four-cell averages. Face values are averages of the two
/// corners bounding the face, and the cell bed used by the solver is the
/// average of its four corners, so the cell bed equals the mean of its two
/// x-faces and of its two y-faces. The well-balanced source term and the
/// depth positivity correction both depend on that identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Bathymetry {
    /// Cell bed elevation above the datum.
    pub b: Field2,
    /// Still-water elevation above the datum.
    pub ws: f64,
    /// Still-water depth, `max(ws - b, 0)`.
    pub d: Field2,
    pub d_x: Field2,
    pub d_y: Field2,
    /// Bed at the face between padded columns `i` and `i + 1`, stored at `i`.
    pub b_face_x: Field2,
    /// Bed at the face between padded rows `j` and `j + 1`, stored at `j`.
    pub b_face_y: Field2,
    max_depth: f64,
}

impl Bathymetry {
    /// Builds the bed from cell samples. Only interior values of `b_cells`
    /// are read; ghosts are filled by even extension.
    pub fn build(grid: &Grid, b_cells: &Field2, ws: f64) -> Result<Self> {
        if !ws.is_finite() {
            return Err(Error::InvalidInput("still-water level must be finite".into()));
        }
        if b_cells.ni() != grid.ni() || b_cells.nj() != grid.nj() {
            return Err(Error::InvalidInput("bed field does not match the grid".into()));
        }
        for j in grid.interior_rows() {
            for i in grid.interior_cols() {
                if !b_cells.at(i, j).is_finite() {
                    return Err(Error::NonFinite { term: "bed elevation", i, j });
                }
            }
        }
        let (ni, nj) = (grid.ni(), grid.nj());
        let mut raw = b_cells.clone();
        raw.reflect_even(grid);

        let pair = |a: f64, b: f64| 0.5 * (a + b);
        // corners[j][i] sits between cells (i, j) and (i + 1, j + 1).
        let mut corners = vec![0.0; (ni - 1) * (nj - 1)];
        for j in 0..nj - 1 {
            for i in 0..ni - 1 {
                corners[j * (ni - 1) + i] = pair(
                    pair(raw.at(i, j), raw.at(i + 1, j)),
                    pair(raw.at(i, j + 1), raw.at(i + 1, j + 1)),
                );
            }
        }
        let c = |i: usize, j: usize| corners[j * (ni - 1) + i];

        let mut b_face_x = Field2::zeros(grid);
        let mut b_face_y = Field2::zeros(grid);
        let mut b = raw.clone();
        for j in 1..nj - 1 {
            for i in 0..ni - 1 {
                b_face_x.set(i, j, pair(c(i, j - 1), c(i, j)));
            }
        }
        for j in 0..nj - 1 {
            for i in 1..ni - 1 {
                b_face_y.set(i, j, pair(c(i - 1, j), c(i, j)));
            }
        }
        for j in 1..nj - 1 {
            for i in 1..ni - 1 {
                b.set(i, j, pair(pair(c(i - 1, j - 1), c(i, j - 1)), pair(c(i - 1, j), c(i, j))));
            }
        }
        // Outermost ring: mirror of the cells inside.
        for j in 0..nj {
            for i in 0..ni {
                if i == 0 || j == 0 || i == ni - 1 || j == nj - 1 {
                    b.set(i, j, b.at(grid.mirror_i(i), grid.mirror_j(j)));
                }
            }
        }

        let mut d = Field2::zeros(grid);
        for (dv, bv) in d.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *dv = (ws - bv).max(0.0);
        }
        let mut d_x = Field2::zeros(grid);
        let mut d_y = Field2::zeros(grid);
        for j in 1..nj - 1 {
            for i in 1..ni - 1 {
                d_x.set(i, j, (d.at(i + 1, j) - d.at(i - 1, j)) / (2.0 * grid.dx));
                d_y.set(i, j, (d.at(i, j + 1) - d.at(i, j - 1)) / (2.0 * grid.dy));
            }
        }
        let max_depth = d.max_abs_interior(grid);
        Ok(Self { b, ws, d, d_x, d_y, b_face_x, b_face_y, max_depth })
    }

    pub fn flat(grid: &Grid, depth: f64) -> Result<Self> {
        Self::build(grid, &Field2::zeros(grid), depth)
    }

    pub fn max_depth(&self) -> f64 {
        self.max_depth
    }
}

/// Cell-averaged conservative variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    /// Water-surface elevation above the datum.
    pub w: Field2,
    /// Depth-integrated flux in x.
    pub p: Field2,
    /// Depth-integrated flux in y.
    pub q: Field2,
}

impl FieldState {
    /// Validating constructor: every interior cell must be finite with
    /// non-negative depth.
    pub fn new(grid: &Grid, bathy: &Bathymetry, w: Field2, p: Field2, q: Field2) -> Result<Self> {
        let s = Self { w, p, q };
        s.check(grid, bathy)?;
        Ok(s)
    }

    /// Water at rest at the still-water level; dry cells sit on the bed.
    pub fn still(grid: &Grid, bathy: &Bathymetry) -> Self {
        let mut w = Field2::zeros(grid);
        for (wv, bv) in w.as_mut_slice().iter_mut().zip(bathy.b.as_slice()) {
            *wv = bathy.ws.max(*bv);
        }
        Self { w, p: Field2::zeros(grid), q: Field2::zeros(grid) }
    }

    pub fn check(&self, grid: &Grid, bathy: &Bathymetry) -> Result<()> {
        for j in grid.interior_rows() {
            for i in grid.interior_cols() {
                let (w, p, q) = (self.w.at(i, j), self.p.at(i, j), self.q.at(i, j));
                if !w.is_finite() {
                    return Err(Error::NonFinite { term: "w", i, j });
                }
                if !p.is_finite() {
                    return Err(Error::NonFinite { term: "P", i, j });
                }
                if !q.is_finite() {
                    return Err(Error::NonFinite { term: "Q", i, j });
                }
                if w < bathy.b.at(i, j) {
                    return Err(Error::InvalidInput(format!(
                        "negative depth {} at cell ({i}, {j})",
                        w - bathy.b.at(i, j)
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn depth(&self, bathy: &Bathymetry, i: usize, j: usize) -> f64 {
        self.w.at(i, j) - bathy.b.at(i, j)
    }

    /// Sum of interior `w` values, the discretely conserved quantity.
    pub fn sum_w(&self, grid: &Grid) -> f64 {
        // Fixed pairwise order keeps the diagnostic reproducible.
        pairwise_sum(&self.w.interior_values(grid))
    }

    /// Water volume above the bed over the interior (m^3).
    pub fn volume(&self, grid: &Grid, bathy: &Bathymetry) -> f64 {
        let mut v = Vec::with_capacity(grid.nx * grid.ny);
        for j in grid.interior_rows() {
            for i in grid.interior_cols() {
                v.push(self.depth(bathy, i, j));
            }
        }
        pairwise_sum(&v) * grid.dx * grid.dy
    }
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}
