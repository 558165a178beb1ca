//! Single-band GeoTIFF.
//!
//! Georeferencing uses the pixel-scale and tiepoint tags, nodata the GDAL
//! nodata tag, and the CRS identifier travels as the GeoTIFF citation string.
//! Files are written as uncompressed 64-bit float.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

use crate::error::{Error, Result};
use crate::raster::{GeoRef, Raster};

const GT_MODEL_TYPE: u16 = 1024;
const GT_RASTER_TYPE: u16 = 1025;
const GT_CITATION: u16 = 1026;
const PROJECTED_CS_TYPE: u16 = 3072;
const GEO_ASCII_PARAMS: u16 = 34737;

fn tiff_err(path: &Path) -> impl Fn(tiff::TiffError) -> Error + '_ {
    move |source| Error::Tiff {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read(path: &Path) -> Result<Raster<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file)).map_err(tiff_err(path))?;
    let (width, height) = dec.dimensions().map_err(tiff_err(path))?;

    if dec
        .find_tag(Tag::ModelTransformationTag)
        .map_err(tiff_err(path))?
        .is_some()
    {
        return Err(Error::RotatedGeoTransform);
    }
    let scale = dec
        .get_tag_f64_vec(Tag::ModelPixelScaleTag)
        .map_err(tiff_err(path))?;
    let tie = dec
        .get_tag_f64_vec(Tag::ModelTiepointTag)
        .map_err(tiff_err(path))?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(Error::GridMismatch(format!(
            "{}: malformed georeferencing tags",
            path.display()
        )));
    }
    if scale[0] != scale[1] {
        return Err(Error::NonSquareCells {
            dx: scale[0],
            dy: scale[1],
        });
    }
    let cell = scale[0];
    // Tiepoint maps raster (i, j) to model (x, y).
    let origin_x = tie[3] - tie[0] * cell;
    let origin_y = tie[4] + tie[1] * cell;

    let nodata = match dec.find_tag(Tag::GdalNodata).map_err(tiff_err(path))? {
        Some(v) => {
            let s = v.into_string().map_err(tiff_err(path))?;
            let s = s.trim_matches(|c: char| c == '\0' || c.is_whitespace());
            if s.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                s.parse().map_err(|_| {
                    Error::InvalidValue(format!("{}: bad nodata tag {s:?}", path.display()))
                })?
            }
        }
        None => f64::NAN,
    };
    let crs_id = read_crs(&mut dec).map_err(tiff_err(path))?;

    let cells: Vec<f64> = match dec.read_image().map_err(tiff_err(path))? {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        _ => {
            return Err(Error::InvalidValue(format!(
                "{}: unsupported sample format",
                path.display()
            )))
        }
    };
    let georef = GeoRef::new(origin_x, origin_y, cell, crs_id);
    Raster::from_vec(width as usize, height as usize, georef, nodata, cells)
}

fn read_crs<R: std::io::Read + std::io::Seek>(dec: &mut Decoder<R>) -> tiff::TiffResult<String> {
    if let Some(v) = dec.find_tag(Tag::GeoAsciiParamsTag)? {
        let s = v.into_string()?;
        let s = s.trim_end_matches('\0').trim_end_matches('|');
        if !s.is_empty() {
            return Ok(s.to_string());
        }
    }
    if let Some(keys) = dec.find_tag_unsigned_vec::<u16>(Tag::GeoKeyDirectoryTag)? {
        for entry in keys.chunks_exact(4).skip(1) {
            if entry[0] == PROJECTED_CS_TYPE && entry[1] == 0 {
                return Ok(format!("EPSG:{}", entry[3]));
            }
        }
    }
    Ok(String::new())
}

pub fn write(path: &Path, raster: &Raster<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(tiff_err(path))?;
    let g = raster.georef();
    let mut image = enc
        .new_image::<colortype::Gray64Float>(raster.width() as u32, raster.height() as u32)
        .map_err(tiff_err(path))?;
    let dir = image.encoder();
    dir.write_tag(Tag::ModelPixelScaleTag, &[g.cell_size, g.cell_size, 0.0][..])
        .map_err(tiff_err(path))?;
    dir.write_tag(
        Tag::ModelTiepointTag,
        &[0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0][..],
    )
    .map_err(tiff_err(path))?;
    let nodata = raster.nodata();
    let nodata_text = if nodata.is_nan() { "nan".to_string() } else { nodata.to_string() };
    dir.write_tag(Tag::GdalNodata, nodata_text.as_str())
        .map_err(tiff_err(path))?;

    let citation = format!("{}|", g.crs_id);
    // Model type projected, raster type pixel-is-area, citation in the ascii params.
    let mut keys: Vec<u16> = vec![1, 1, 0, 0];
    keys.extend([GT_MODEL_TYPE, 0, 1, 1]);
    keys.extend([GT_RASTER_TYPE, 0, 1, 1]);
    keys.extend([GT_CITATION, GEO_ASCII_PARAMS, citation.len() as u16, 0]);
    if let Some(code) = g.crs_id.strip_prefix("EPSG:").and_then(|c| c.parse::<u16>().ok()) {
        keys.extend([PROJECTED_CS_TYPE, 0, 1, code]);
    }
    keys[3] = (keys.len() / 4 - 1) as u16;
    dir.write_tag(Tag::GeoKeyDirectoryTag, &keys[..])
        .map_err(tiff_err(path))?;
    dir.write_tag(Tag::GeoAsciiParamsTag, citation.as_str())
        .map_err(tiff_err(path))?;

    image.write_data(raster.cells()).map_err(tiff_err(path))?;
    Ok(())
}
