//! ESRI ASCII grid (`.asc`).
//!
//! The header gives the lower-left corner; rasters here are anchored at the
//! top-left, so `origin_y = yllcorner + nrows * cellsize`. The CRS identifier
//! is kept in an optional sidecar `.prj` file.
//!
//! Values are written with Rust's shortest round-trip float formatting, so an
//! integer-valued raster reads back bit for bit and a canonical file written
//! by [`write`] is reproduced byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::{GeoRef, Raster};

pub const DEFAULT_NODATA: f64 = -9999.0;

fn prj_path(path: &Path) -> PathBuf {
    path.with_extension("prj")
}

pub fn read(path: &Path) -> Result<Raster<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let crs_id = match fs::read_to_string(prj_path(path)) {
        Ok(s) => s.trim().to_string(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::io(prj_path(path), e)),
    };
    parse(&text, crs_id).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

#[derive(Default)]
struct Header {
    ncols: Option<usize>,
    nrows: Option<usize>,
    xll: Option<(f64, bool)>,
    yll: Option<(f64, bool)>,
    cellsize: Option<f64>,
    dx: Option<f64>,
    dy: Option<f64>,
    nodata: Option<f64>,
}

type ParseResult<T> = std::result::Result<T, (usize, String)>;

/// Parse grid text. Errors carry a 1-based line number.
pub fn parse(text: &str, crs_id: String) -> ParseResult<Raster<f64>> {
    let mut header = Header::default();
    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(n, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| (n + 1, format!("header key {key} has no value")))?;
        let num = |v: &str| -> ParseResult<f64> {
            v.parse::<f64>()
                .map_err(|_| (n + 1, format!("bad value {v:?} for {key}")))
        };
        let count = |v: &str| -> ParseResult<usize> {
            v.parse::<usize>()
                .map_err(|_| (n + 1, format!("bad value {v:?} for {key}")))
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => header.ncols = Some(count(value)?),
            "nrows" => header.nrows = Some(count(value)?),
            "xllcorner" => header.xll = Some((num(value)?, false)),
            "xllcenter" => header.xll = Some((num(value)?, true)),
            "yllcorner" => header.yll = Some((num(value)?, false)),
            "yllcenter" => header.yll = Some((num(value)?, true)),
            "cellsize" => header.cellsize = Some(num(value)?),
            "dx" => header.dx = Some(num(value)?),
            "dy" => header.dy = Some(num(value)?),
            "nodata_value" => header.nodata = Some(num(value)?),
            _ => return Err((n + 1, format!("unknown header key {key}"))),
        }
        lines.next();
    }

    let missing = |k: &str| (0, format!("missing header key {k}"));
    let ncols = header.ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = header.nrows.ok_or_else(|| missing("nrows"))?;
    let cell = match (header.cellsize, header.dx, header.dy) {
        (Some(c), _, _) => c,
        (None, Some(dx), Some(dy)) if dx == dy => dx,
        (None, Some(dx), Some(dy)) => {
            return Err((0, Error::NonSquareCells { dx, dy }.to_string()));
        }
        _ => return Err(missing("cellsize")),
    };
    let (xll, x_center) = header.xll.ok_or_else(|| missing("xllcorner"))?;
    let (yll, y_center) = header.yll.ok_or_else(|| missing("yllcorner"))?;
    let origin_x = if x_center { xll - cell / 2.0 } else { xll };
    let y_corner = if y_center { yll - cell / 2.0 } else { yll };
    let origin_y = y_corner + nrows as f64 * cell;
    let nodata = header.nodata.unwrap_or(DEFAULT_NODATA);

    let mut cells = Vec::with_capacity(ncols * nrows);
    for (n, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| (n + 1, format!("bad cell value {tok:?}")))?;
            cells.push(v);
        }
    }
    if cells.len() != ncols * nrows {
        return Err((
            0,
            format!("expected {} cell values, found {}", ncols * nrows, cells.len()),
        ));
    }
    let georef = GeoRef::new(origin_x, origin_y, cell, crs_id);
    Raster::from_vec(ncols, nrows, georef, nodata, cells).map_err(|e| (0, e.to_string()))
}

/// Canonical grid text for a raster.
pub fn format(raster: &Raster<f64>) -> String {
    let g = raster.georef();
    let yll = g.origin_y - raster.height() as f64 * g.cell_size;
    let mut out = String::with_capacity(raster.cells().len() * 4 + 128);
    let _ = writeln!(out, "ncols         {}", raster.width());
    let _ = writeln!(out, "nrows         {}", raster.height());
    let _ = writeln!(out, "xllcorner     {}", g.origin_x);
    let _ = writeln!(out, "yllcorner     {}", yll);
    let _ = writeln!(out, "cellsize      {}", g.cell_size);
    let _ = writeln!(out, "NODATA_value  {}", raster.nodata());
    let nodata = raster.nodata();
    for row in raster.cells().chunks(raster.width()) {
        for (k, &v) in row.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let v = if v.is_nan() { nodata } else { v };
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, raster: &Raster<f64>) -> Result<()> {
    fs::write(path, format(raster)).map_err(|e| Error::io(path, e))?;
    let crs = &raster.georef().crs_id;
    if !crs.is_empty() {
        let prj = prj_path(path);
        fs::write(&prj, format!("{crs}\n")).map_err(|e| Error::io(prj, e))?;
    }
    Ok(())
}
