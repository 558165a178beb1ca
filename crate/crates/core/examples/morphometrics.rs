//! Per-tile building surface fraction, roughness height and pervious
//! surface fraction for a hand-made scene.
//!
//!     cargo run --example morphometrics

use lczgrid::morpho::{bsf, hre, ndvi_raster, psf, DEFAULT_FOOTPRINT_THRESHOLD, DEFAULT_NDVI_THRESHOLD};
use lczgrid::raster::{tile_view, TilingPlan};
use lczgrid::synth::{rasterize, Building, Rect, SceneSpec};

fn main() -> lczgrid::error::Result<()> {
    let mut spec = SceneSpec::empty(200.0, 100.0, 1.0);
    // Left tile: two mid-rise blocks.
    spec.buildings.push(Building::new(10.0, 10.0, 30.0, 40.0, 15.0));
    spec.buildings.push(Building::new(55.0, 20.0, 30.0, 60.0, 21.0));
    // Right tile: a low house, a lawn and a pond.
    spec.buildings.push(Building::new(120.0, 30.0, 15.0, 10.0, 6.0));
    spec.veg_patches.push(Rect::new(140.0, 0.0, 60.0, 60.0));
    spec.water_patches.push(Rect::new(100.0, 70.0, 30.0, 30.0));
    let r = rasterize(&spec)?;

    let ndvi = ndvi_raster(&r.red, &r.nir)?.ndvi;
    let (plan, _) = TilingPlan::for_tile_size(&r.building_height, 100.0)?;
    for (i, j) in plan.tiles() {
        let heights = tile_view(&r.building_height, &plan, i, j)?;
        let n = tile_view(&ndvi, &plan, i, j)?;
        let w = tile_view(&r.water, &plan, i, j)?;
        println!(
            "tile ({i}, {j}): bsf {:?}  hre {:?}  psf {:?}",
            bsf(&heights, DEFAULT_FOOTPRINT_THRESHOLD),
            hre(&heights, DEFAULT_FOOTPRINT_THRESHOLD),
            psf(&n, Some(&w), DEFAULT_NDVI_THRESHOLD)?,
        );
    }
    Ok(())
}
