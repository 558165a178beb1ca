//! Georeferenced grids, tiling of a fine grid onto a coarse grid, and
//! read-only tile windows.
//!
//! All grids are north-up with a top-left origin and square cells. Cells are
//! stored row-major. A tile `(i, j)` is the block of fine cells under coarse
//! cell row `i`, column `j`.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement of a grid in a projected CRS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoRef {
    /// Map x of the top-left corner.
    pub origin_x: f64,
    /// Map y of the top-left corner.
    pub origin_y: f64,
    /// Meters per cell along both axes.
    pub cell_size: f64,
    /// Opaque CRS identifier, passed through untouched.
    pub crs_id: String,
}

impl GeoRef {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, crs_id: impl Into<String>) -> Self {
        GeoRef {
            origin_x,
            origin_y,
            cell_size,
            crs_id: crs_id.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::InvalidCellSize(self.cell_size));
        }
        Ok(())
    }

    /// Map coordinates of the center of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y - (row as f64 + 0.5) * self.cell_size,
        )
    }
}

/// A value that can live in a [`Raster`].
pub trait Cell: Copy + PartialEq + Debug + Send + Sync {
    fn is_nodata(self, nodata: Self) -> bool {
        self == nodata
    }
}

impl Cell for f64 {
    fn is_nodata(self, nodata: Self) -> bool {
        self.is_nan() || self == nodata
    }
}

impl Cell for u8 {}
impl Cell for i32 {}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    georef: GeoRef,
    width: usize,
    height: usize,
    cells: Vec<T>,
    nodata: T,
}

impl<T: Cell> Raster<T> {
    /// A `width` x `height` raster with every cell set to `nodata`.
    pub fn new(width: usize, height: usize, georef: GeoRef, nodata: T) -> Result<Self> {
        Self::filled(width, height, georef, nodata, nodata)
    }

    pub fn filled(width: usize, height: usize, georef: GeoRef, nodata: T, value: T) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        georef.validate()?;
        Ok(Raster {
            georef,
            width,
            height,
            cells: vec![value; width * height],
            nodata,
        })
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        georef: GeoRef,
        nodata: T,
        cells: Vec<T>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if cells.len() != width * height {
            return Err(Error::CellCountMismatch {
                width,
                height,
                actual: cells.len(),
            });
        }
        georef.validate()?;
        Ok(Raster {
            georef,
            width,
            height,
            cells,
            nodata,
        })
    }

    pub fn georef(&self) -> &GeoRef {
        &self.georef
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn nodata(&self) -> T {
        self.nodata
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn cell_size(&self) -> f64 {
        self.georef.cell_size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.cells[row * self.width + col]
    }

    /// The value at `(row, col)`, or `None` for nodata.
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> Option<T> {
        let v = self.get(row, col);
        (!v.is_nodata(self.nodata)).then_some(v)
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.cells[row * self.width + col] = value;
    }

    pub fn map<U: Cell>(&self, nodata: U, mut f: impl FnMut(T) -> U) -> Raster<U> {
        let cells = self
            .cells
            .iter()
            .map(|&v| if v.is_nodata(self.nodata) { nodata } else { f(v) })
            .collect();
        Raster {
            georef: self.georef.clone(),
            width: self.width,
            height: self.height,
            cells,
            nodata,
        }
    }

    /// True when both rasters share dimensions and georeferencing.
    pub fn is_congruent<U: Cell>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height && self.georef == other.georef
    }

    pub fn valid_fraction(&self) -> f64 {
        let valid = self.cells.iter().filter(|v| !v.is_nodata(self.nodata)).count();
        valid as f64 / self.cells.len() as f64
    }
}

/// How a fine grid divides into tiles, one per coarse cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Fine cells per coarse cell along each axis.
    pub factor: usize,
    /// Fine column of the first tile's left edge.
    pub offset_x: usize,
    /// Fine row of the first tile's top edge.
    pub offset_y: usize,
}

/// Origin alignment tolerance in fine cells.
pub const ORIGIN_TOLERANCE_CELLS: f64 = 0.5;

const RATIO_EPS: f64 = 1e-9;

/// Match a fine raster onto the cells of a coarse raster.
///
/// Tiles that would extend past the fine raster are left out of the plan;
/// callers treat the corresponding coarse cells as nodata.
pub fn plan_tiling<T: Cell, U: Cell>(fine: &Raster<T>, coarse: &Raster<U>) -> Result<TilingPlan> {
    let f = fine.georef();
    let c = coarse.georef();
    if f.crs_id != c.crs_id {
        return Err(Error::CrsMismatch {
            fine: f.crs_id.clone(),
            coarse: c.crs_id.clone(),
        });
    }
    let factor = integer_ratio(c.cell_size, f.cell_size)?;
    let tolerance = ORIGIN_TOLERANCE_CELLS * f.cell_size;
    let dx = c.origin_x - f.origin_x;
    let dy = c.origin_y - f.origin_y;
    if dx.abs() > tolerance || dy.abs() > tolerance {
        return Err(Error::OriginMisaligned { dx, dy, tolerance });
    }
    let tiles_x = coarse.width().min(fine.width() / factor);
    let tiles_y = coarse.height().min(fine.height() / factor);
    if tiles_x == 0 || tiles_y == 0 {
        return Err(Error::NoCompleteTile {
            width: fine.width(),
            height: fine.height(),
            factor,
        });
    }
    Ok(TilingPlan {
        tiles_x,
        tiles_y,
        factor,
        offset_x: 0,
        offset_y: 0,
    })
}

fn integer_ratio(coarse: f64, fine: f64) -> Result<usize> {
    let ratio = coarse / fine;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > RATIO_EPS * ratio.max(1.0) {
        return Err(Error::NonIntegerRatio { coarse, fine });
    }
    Ok(rounded as usize)
}

impl TilingPlan {
    /// Tile a fine raster into square tiles of `tile_size` meters, anchored at
    /// its origin. Returns the plan and the georeference of the implied coarse grid.
    pub fn for_tile_size<T: Cell>(fine: &Raster<T>, tile_size: f64) -> Result<(TilingPlan, GeoRef)> {
        let factor = integer_ratio(tile_size, fine.cell_size())?;
        let tiles_x = fine.width() / factor;
        let tiles_y = fine.height() / factor;
        if tiles_x == 0 || tiles_y == 0 {
            return Err(Error::NoCompleteTile {
                width: fine.width(),
                height: fine.height(),
                factor,
            });
        }
        let f = fine.georef();
        let coarse = GeoRef::new(
            f.origin_x,
            f.origin_y,
            factor as f64 * f.cell_size,
            f.crs_id.clone(),
        );
        let plan = TilingPlan {
            tiles_x,
            tiles_y,
            factor,
            offset_x: 0,
            offset_y: 0,
        };
        Ok((plan, coarse))
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Fine `(row, col)` of the top-left cell of tile `(i, j)`.
    pub fn tile_origin(&self, i: usize, j: usize) -> (usize, usize) {
        (
            self.offset_y + i * self.factor,
            self.offset_x + j * self.factor,
        )
    }

    pub fn check_bounds(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.tiles_y || j >= self.tiles_x {
            return Err(Error::TileOutOfBounds {
                i,
                j,
                tiles_y: self.tiles_y,
                tiles_x: self.tiles_x,
            });
        }
        Ok(())
    }

    /// Map coordinates of the center of tile `(i, j)`, derived from the fine grid.
    pub fn tile_center(&self, fine: &GeoRef, i: usize, j: usize) -> (f64, f64) {
        let (row, col) = self.tile_origin(i, j);
        let half = self.factor as f64 / 2.0;
        (
            fine.origin_x + (col as f64 + half) * fine.cell_size,
            fine.origin_y - (row as f64 + half) * fine.cell_size,
        )
    }

    /// Tile indices in row-major order.
    pub fn tiles(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.tiles_y).flat_map(move |i| (0..self.tiles_x).map(move |j| (i, j)))
    }
}

/// Read-only `factor` x `factor` window into a raster.
#[derive(Debug, Clone, Copy)]
pub struct TileView<'a, T> {
    raster: &'a Raster<T>,
    row0: usize,
    col0: usize,
    size: usize,
}

/// The window of `raster` under tile `(i, j)`.
pub fn tile_view<'a, T: Cell>(
    raster: &'a Raster<T>,
    plan: &TilingPlan,
    i: usize,
    j: usize,
) -> Result<TileView<'a, T>> {
    plan.check_bounds(i, j)?;
    let (row0, col0) = plan.tile_origin(i, j);
    if row0 + plan.factor > raster.height() || col0 + plan.factor > raster.width() {
        return Err(Error::GridMismatch(format!(
            "tile ({i}, {j}) extends past a {}x{} raster",
            raster.width(),
            raster.height()
        )));
    }
    Ok(TileView {
        raster,
        row0,
        col0,
        size: plan.factor,
    })
}

impl<'a, T: Cell> TileView<'a, T> {
    /// Side length in cells.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.size * self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Parent raster `(row, col)` of the window's top-left cell.
    pub fn origin(&self) -> (usize, usize) {
        (self.row0, self.col0)
    }

    pub fn raster(&self) -> &'a Raster<T> {
        self.raster
    }

    pub fn nodata(&self) -> T {
        self.raster.nodata()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.raster.get(self.row0 + row, self.col0 + col)
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> Option<T> {
        self.raster.value(self.row0 + row, self.col0 + col)
    }

    /// Rows of the window as slices of the parent raster.
    pub fn rows(&self) -> impl Iterator<Item = &'a [T]> + '_ {
        let cells = self.raster.cells();
        let width = self.raster.width();
        (0..self.size).map(move |r| {
            let start = (self.row0 + r) * width + self.col0;
            &cells[start..start + self.size]
        })
    }

    /// All cell values, row-major, nodata included.
    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.rows().flat_map(|row| row.iter().copied())
    }

    /// Valid values only, row-major.
    pub fn valid(&self) -> impl Iterator<Item = T> + '_ {
        let nodata = self.nodata();
        self.iter().filter(move |v| !v.is_nodata(nodata))
    }
}

/// Fraction of cells in the window that are not nodata.
pub fn valid_fraction<T: Cell>(window: &TileView<'_, T>) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    window.valid().count() as f64 / window.len() as f64
}
