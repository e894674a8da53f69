//! Tridiagonal recovery of the momentum fluxes from the integrated
//! variables: `A P_{i-1} + B P_i + C P_{i+1} = U*_i` along every grid row
//! and the analogue for `Q` along every column.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Bathymetry, Field2, Grid, PhysParams, GHOST};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    #[default]
    Thomas,
    CyclicReduction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    /// Sub-diagonal; `a[0]` is ignored.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Super-diagonal; the last entry is ignored.
    pub c: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty tridiagonal system".into()));
        }
        if a.len() != n || c.len() != n || rhs.len() != n {
            return Err(Error::InvalidInput(format!(
                "diagonal lengths differ: a {}, b {n}, c {}, rhs {}",
                a.len(),
                c.len(),
                rhs.len()
            )));
        }
        for row in 0..n {
            if !(a[row].is_finite() && b[row].is_finite() && c[row].is_finite() && rhs[row].is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite coefficient in row {row}")));
            }
            if b[row] == 0.0 {
                return Err(Error::Singular { row });
            }
        }
        Ok(Self { a, b, c, rhs })
    }

    pub fn identity(rhs: Vec<f64>) -> Result<Self> {
        let n = rhs.len();
        Self::new(vec![0.0; n], vec![1.0; n], vec![0.0; n], rhs)
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|k| {
                let mut v = self.b[k] * x[k];
                if k > 0 {
                    v += self.a[k] * x[k - 1];
                }
                if k + 1 < n {
                    v += self.c[k] * x[k + 1];
                }
                v
            })
            .collect()
    }
}

/// Gaussian elimination without pivoting, in place on `rhs`. `scratch`
/// needs `b.len()` entries.
fn thomas_in_place(a: &[f64], b: &[f64], c: &[f64], rhs: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    let n = b.len();
    let mut den = b[0];
    if den == 0.0 {
        return Err(Error::Singular { row: 0 });
    }
    scratch[0] = if n > 1 { c[0] / den } else { 0.0 };
    rhs[0] /= den;
    for k in 1..n {
        den = b[k] - a[k] * scratch[k - 1];
        if den == 0.0 || !den.is_finite() {
            return Err(Error::Singular { row: k });
        }
        scratch[k] = if k + 1 < n { c[k] / den } else { 0.0 };
        rhs[k] = (rhs[k] - a[k] * rhs[k - 1]) / den;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= scratch[k] * rhs[k + 1];
    }
    Ok(())
}

pub fn thomas_solve(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let mut x = sys.rhs.clone();
    let mut scratch = vec![0.0; sys.len()];
    thomas_in_place(&sys.a, &sys.b, &sys.c, &mut x, &mut scratch)?;
    Ok(x)
}

/// Cyclic reduction. The system is padded with identity rows to a power of
/// two; each forward level eliminates every other unknown until two remain,
/// which are solved directly before substituting back level by level.
pub fn cyclic_reduction_solve(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = sys.len();
    if n == 1 {
        return Ok(vec![sys.rhs[0] / sys.b[0]]);
    }
    let m = n.next_power_of_two();
    let mut a = vec![0.0; m];
    let mut b = vec![1.0; m];
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    a[1..n].copy_from_slice(&sys.a[1..n]);
    b[..n].copy_from_slice(&sys.b);
    c[..n - 1].copy_from_slice(&sys.c[..n - 1]);
    d[..n].copy_from_slice(&sys.rhs);
    cyclic_reduction_in_place(&mut a, &mut b, &mut c, &mut d)?;
    d.truncate(n);
    Ok(d)
}

/// Power-of-two sized cyclic reduction; the solution replaces `d`.
fn cyclic_reduction_in_place(a: &mut [f64], b: &mut [f64], c: &mut [f64], d: &mut [f64]) -> Result<()> {
    let m = b.len();
    debug_assert!(m.is_power_of_two() && m >= 2);
    let pivot = |v: f64, row: usize| if v == 0.0 || !v.is_finite() { Err(Error::Singular { row }) } else { Ok(v) };

    let mut s = 1;
    while 2 * s < m {
        let mut i = 2 * s - 1;
        while i < m {
            let k1 = a[i] / pivot(b[i - s], i - s)?;
            let (k2, a_up, c_up, d_up) = if i + s < m {
                (c[i] / pivot(b[i + s], i + s)?, a[i + s], c[i + s], d[i + s])
            } else {
                (0.0, 0.0, 0.0, 0.0)
            };
            b[i] = b[i] - c[i - s] * k1 - a_up * k2;
            d[i] = d[i] - d[i - s] * k1 - d_up * k2;
            a[i] = -a[i - s] * k1;
            c[i] = -c_up * k2;
            i += 2 * s;
        }
        s *= 2;
    }

    let (i1, i2) = (m / 2 - 1, m - 1);
    let det = b[i1] * b[i2] - c[i1] * a[i2];
    let det = pivot(det, i1)?;
    let x1 = (d[i1] * b[i2] - c[i1] * d[i2]) / det;
    let x2 = (b[i1] * d[i2] - d[i1] * a[i2]) / det;
    d[i1] = x1;
    d[i2] = x2;

    while s > 1 {
        s /= 2;
        let mut i = s - 1;
        while i < m {
            let lo = if i >= s { a[i] * d[i - s] } else { 0.0 };
            let hi = if i + s < m { c[i] * d[i + s] } else { 0.0 };
            d[i] = (d[i] - lo - hi) / pivot(b[i], i)?;
            i += 2 * s;
        }
    }
    Ok(())
}

pub fn solve(sys: &TridiagonalSystem, kind: SolverKind) -> Result<Vec<f64>> {
    match kind {
        SolverKind::Thomas => thomas_solve(sys),
        SolverKind::CyclicReduction => cyclic_reduction_solve(sys),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

/// How the first or last row of a line sees the ghost value beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineClosure {
    /// Ghost is the negated mirror (solid wall); folded into the diagonal.
    #[default]
    Reflect,
    /// Ghost value is prescribed and moved to the right-hand side.
    Prescribed,
}

/// Coefficients of the implicit operator along one line of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LineCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

/// Row `j` (x-direction) or column `i` (y-direction) of the operator, in
/// padded indices.
pub fn assemble_line(bathy: &Bathymetry, grid: &Grid, phys: &PhysParams, dir: Direction, line: usize) -> LineCoefficients {
    let (n, h) = match dir {
        Direction::X => (grid.nx, grid.dx),
        Direction::Y => (grid.ny, grid.dy),
    };
    let b3 = phys.b_disp + 1.0 / 3.0;
    let mut out = LineCoefficients { a: vec![0.0; n], b: vec![1.0; n], c: vec![0.0; n] };
    for k in 0..n {
        let (i, j) = match dir {
            Direction::X => (k + GHOST, line),
            Direction::Y => (line, k + GHOST),
        };
        let d = bathy.d.at(i, j);
        if d == 0.0 {
            continue;
        }
        let slope = match dir {
            Direction::X => bathy.d_x.at(i, j),
            Direction::Y => bathy.d_y.at(i, j),
        };
        let first = d * slope / (6.0 * h);
        let second = b3 * d * d / (h * h);
        out.a[k] = first - second;
        out.b[k] = 1.0 + 2.0 * second;
        out.c[k] = -first - second;
    }
    out
}

/// Pre-assembled operators for every row and column.
#[derive(Debug, Clone)]
pub struct MomentumOperator {
    nx: usize,
    ny: usize,
    rows: Vec<LineCoefficients>,
    cols: Vec<LineCoefficients>,
    /// Closures at west, east, south, north.
    closures: [LineClosure; 4],
    solver: SolverKind,
}

impl MomentumOperator {
    /// `closures` lists the west, east, south and north boundary closures.
    pub fn new(
        grid: &Grid,
        bathy: &Bathymetry,
        phys: &PhysParams,
        closures: [LineClosure; 4],
        solver: SolverKind,
    ) -> Self {
        let rows: Vec<_> = grid.interior_rows().map(|j| assemble_line(bathy, grid, phys, Direction::X, j)).collect();
        let cols: Vec<_> = grid.interior_cols().map(|i| assemble_line(bathy, grid, phys, Direction::Y, i)).collect();
        let weak = rows
            .iter()
            .chain(&cols)
            .flat_map(|l| (0..l.b.len()).map(move |k| (l.b[k].abs(), l.a[k].abs() + l.c[k].abs())))
            .filter(|(diag, off)| diag <= off)
            .count();
        if weak > 0 {
            warn!("{weak} implicit-operator rows are not diagonally dominant; the bed may be too steep for the grid");
        }
        let mut op = Self { nx: grid.nx, ny: grid.ny, rows, cols, closures, solver };
        op.fold_closures();
        op
    }

    fn fold_closures(&mut self) {
        let [west, east, south, north] = self.closures;
        for line in &mut self.rows {
            fold(line, west, east);
        }
        for line in &mut self.cols {
            fold(line, south, north);
        }
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }

    /// Line system of row `cj` (interior index) with the closures folded.
    pub fn row_system(&self, cj: usize, rhs: Vec<f64>) -> Result<TridiagonalSystem> {
        let l = &self.rows[cj];
        TridiagonalSystem::new(l.a.clone(), l.b.clone(), l.c.clone(), rhs)
    }

    pub fn col_system(&self, ci: usize, rhs: Vec<f64>) -> Result<TridiagonalSystem> {
        let l = &self.cols[ci];
        TridiagonalSystem::new(l.a.clone(), l.b.clone(), l.c.clone(), rhs)
    }

    /// Solves for interior `P` and `Q` given interior `U*`, `V*` (row-major).
    /// Ghost values of `p` and `q` are read on prescribed sides only.
    pub fn solve_momentum(&self, ustar: &[f64], vstar: &[f64], p: &mut Field2, q: &mut Field2) -> Result<()> {
        let (nx, ny) = (self.nx, self.ny);
        let [west, east, south, north] = self.closures;
        let ni = p.ni();

        let row_rhs: Vec<Vec<f64>> = (0..ny)
            .map(|cj| {
                let j = cj + GHOST;
                let mut r = ustar[cj * nx..(cj + 1) * nx].to_vec();
                let l = &self.rows[cj];
                if west == LineClosure::Prescribed {
                    r[0] -= l.a[0] * p.at(GHOST - 1, j);
                }
                if east == LineClosure::Prescribed {
                    r[nx - 1] -= l.c[nx - 1] * p.at(GHOST + nx, j);
                }
                r
            })
            .collect();
        let col_rhs: Vec<Vec<f64>> = (0..nx)
            .map(|ci| {
                let i = ci + GHOST;
                let mut r: Vec<f64> = (0..ny).map(|cj| vstar[cj * nx + ci]).collect();
                let l = &self.cols[ci];
                if south == LineClosure::Prescribed {
                    r[0] -= l.a[0] * q.at(i, GHOST - 1);
                }
                if north == LineClosure::Prescribed {
                    r[ny - 1] -= l.c[ny - 1] * q.at(i, GHOST + ny);
                }
                r
            })
            .collect();

        let solver = self.solver;
        let solve_line = |l: &LineCoefficients, mut r: Vec<f64>| -> Result<Vec<f64>> {
            match solver {
                SolverKind::Thomas => {
                    let mut scratch = vec![0.0; r.len()];
                    thomas_in_place(&l.a, &l.b, &l.c, &mut r, &mut scratch)?;
                    Ok(r)
                }
                SolverKind::CyclicReduction => {
                    let sys = TridiagonalSystem { a: l.a.clone(), b: l.b.clone(), c: l.c.clone(), rhs: r };
                    cyclic_reduction_solve(&sys)
                }
            }
        };

        let rows: Vec<Vec<f64>> = self
            .rows
            .par_iter()
            .zip(row_rhs)
            .enumerate()
            .map(|(cj, (l, r))| {
                solve_line(l, r).map_err(|e| Error::Line { axis: "x", line: cj, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
        let cols: Vec<Vec<f64>> = self
            .cols
            .par_iter()
            .zip(col_rhs)
            .enumerate()
            .map(|(ci, (l, r))| {
                solve_line(l, r).map_err(|e| Error::Line { axis: "y", line: ci, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;

        let pd = p.as_mut_slice();
        for (cj, row) in rows.iter().enumerate() {
            let start = (cj + GHOST) * ni + GHOST;
            pd[start..start + nx].copy_from_slice(row);
        }
        for (ci, col) in cols.iter().enumerate() {
            for (cj, v) in col.iter().enumerate() {
                q.set(ci + GHOST, cj + GHOST, *v);
            }
        }
        Ok(())
    }
}

fn fold(line: &mut LineCoefficients, first: LineClosure, last: LineClosure) {
    let n = line.b.len();
    if first == LineClosure::Reflect {
        line.b[0] -= line.a[0];
        line.a[0] = 0.0;
    }
    if last == LineClosure::Reflect {
        line.b[n - 1] -= line.c[n - 1];
        line.c[n - 1] = 0.0;
    }
}
