//! Raster file formats. The format is picked from the file extension:
//! `.asc` for ESRI ASCII grids, `.tif`/`.tiff` for single-band GeoTIFF.

pub mod asc;
pub mod geotiff;

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rules::{labels_from_codes, labels_to_codes, LczLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Asc,
    GeoTiff,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("asc") => Ok(Format::Asc),
            Some("tif" | "tiff") => Ok(Format::GeoTiff),
            _ => Err(Error::Config(format!(
                "{}: unknown raster format (expected .asc, .tif or .tiff)",
                path.display()
            ))),
        }
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster<f64>> {
    let path = path.as_ref();
    match Format::from_path(path)? {
        Format::Asc => asc::read(path),
        Format::GeoTiff => geotiff::read(path),
    }
}

pub fn write_raster(path: impl AsRef<Path>, raster: &Raster<f64>) -> Result<()> {
    let path = path.as_ref();
    match Format::from_path(path)? {
        Format::Asc => asc::write(path, raster),
        Format::GeoTiff => geotiff::write(path, raster),
    }
}

/// Read a label raster; see [`LczLabel::from_code`] for the code mapping.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Raster<LczLabel>> {
    read_raster(path).map(|r| labels_from_codes(&r))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &Raster<LczLabel>) -> Result<()> {
    write_raster(path, &labels_to_codes(labels))
}
