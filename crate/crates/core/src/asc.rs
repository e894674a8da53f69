//! ESRI ASCII raster (`.asc`) reading and writing.
//!
//! Rows are stored north to south in the file; [`Field2`] rows run south to
//! north, so conversion flips the row order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Field2, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major values, first row is the northernmost.
    pub values: Vec<f64>,
}

const DEFAULT_NODATA: f64 = -9999.0;

impl AsciiGrid {
    /// Snapshot of the interior of `field`. Requires square cells.
    pub fn from_field(grid: &Grid, field: &Field2) -> Result<Self> {
        if (grid.dx - grid.dy).abs() > 1e-12 * grid.dx {
            return Err(Error::InvalidInput("ESRI ASCII grids need square cells".into()));
        }
        let interior = field.interior_values(grid);
        let mut values = Vec::with_capacity(interior.len());
        for row in interior.chunks(grid.nx).rev() {
            values.extend_from_slice(row);
        }
        Ok(Self {
            ncols: grid.nx,
            nrows: grid.ny,
            xllcorner: grid.x0,
            yllcorner: grid.y0,
            cellsize: grid.dx,
            nodata: DEFAULT_NODATA,
            values,
        })
    }

    /// Interior field for `grid`; dimensions must match.
    pub fn to_field(&self, grid: &Grid) -> Result<Field2> {
        if self.ncols != grid.nx || self.nrows != grid.ny {
            return Err(Error::InvalidInput(format!(
                "raster is {}x{} but the grid is {}x{}",
                self.ncols, self.nrows, grid.nx, grid.ny
            )));
        }
        let mut south_first = Vec::with_capacity(self.values.len());
        for row in self.values.chunks(self.ncols).rev() {
            south_first.extend_from_slice(row);
        }
        Field2::from_interior(grid, &south_first)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 25 + 200);
        let _ = writeln!(s, "ncols {}", self.ncols);
        let _ = writeln!(s, "nrows {}", self.nrows);
        let _ = writeln!(s, "xllcorner {:.16e}", self.xllcorner);
        let _ = writeln!(s, "yllcorner {:.16e}", self.yllcorner);
        let _ = writeln!(s, "cellsize {:.16e}", self.cellsize);
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for row in self.values.chunks(self.ncols.max(1)) {
            let mut first = true;
            for v in row {
                if !first {
                    s.push(' ');
                }
                first = false;
                // 17 significant digits round-trip every f64.
                let _ = write!(s, "{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or_else(|| err(0, format!("missing header `{key}`")))?;
            let mut parts = line.split_whitespace();
            let k = parts.next().unwrap_or_default();
            if !k.eq_ignore_ascii_case(key) {
                return Err(err(n + 1, format!("expected header `{key}`, found `{k}`")));
            }
            let v = parts.next().ok_or_else(|| err(n + 1, format!("header `{key}` has no value")))?;
            if parts.next().is_some() {
                return Err(err(n + 1, format!("trailing tokens after `{key}`")));
            }
            Ok((n + 1, v.to_string()))
        };
        let parse_usize = |(n, v): (usize, String)| {
            v.parse::<usize>().map_err(|e| err(n, format!("bad integer `{v}`: {e}")))
        };
        let parse_f64 = |(n, v): (usize, String)| {
            v.parse::<f64>().map_err(|e| err(n, format!("bad number `{v}`: {e}")))
        };
        let ncols = parse_usize(header("ncols")?)?;
        let nrows = parse_usize(header("nrows")?)?;
        let xllcorner = parse_f64(header("xllcorner")?)?;
        let yllcorner = parse_f64(header("yllcorner")?)?;
        let cellsize = parse_f64(header("cellsize")?)?;
        let nodata = parse_f64(header("NODATA_value")?)?;
        drop(header);
        if ncols == 0 || nrows == 0 {
            return Err(err(0, "raster has zero size".into()));
        }
        if !(cellsize > 0.0 && cellsize.is_finite()) {
            return Err(err(0, format!("cellsize must be positive, got {cellsize}")));
        }

        let mut values = Vec::with_capacity(ncols * nrows);
        let mut rows = 0;
        for (n, line) in lines {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|e| err(n + 1, format!("bad value `{tok}`: {e}")))?;
                if v == nodata {
                    return Err(err(n + 1, "NODATA values are not supported".into()));
                }
                if !v.is_finite() {
                    return Err(err(n + 1, format!("non-finite value `{tok}`")));
                }
                values.push(v);
            }
            let got = values.len() - before;
            if got != ncols {
                return Err(err(n + 1, format!("row has {got} values, expected {ncols}")));
            }
            rows += 1;
        }
        if rows != nrows {
            return Err(err(0, format!("found {rows} rows, expected {nrows}")));
        }
        Ok(Self { ncols, nrows, xllcorner, yllcorner, cellsize, nodata, values })
    }
}

pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<AsciiGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    AsciiGrid::parse(&text, path)
}

/// Reads a raster and checks it against `grid`.
pub fn load_ascii_grid(path: impl AsRef<Path>, grid: &Grid) -> Result<Field2> {
    read_ascii_grid(path)?.to_field(grid)
}

pub fn write_ascii_grid(path: impl AsRef<Path>, raster: &AsciiGrid) -> Result<()> {
    write_atomic(path.as_ref(), raster.to_text().as_bytes())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| format!(".{}.tmp", n.to_string_lossy()))
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    tmp.set_file_name(name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
