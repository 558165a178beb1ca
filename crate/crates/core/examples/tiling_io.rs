//! Write a fine raster as ASCII grid and GeoTIFF, read both back, and split
//! it into tiles that line up with a coarse LCZ grid.
//!
//!     cargo run --example tiling_io

use lczgrid::io::{read_raster, write_labels, write_raster};
use lczgrid::raster::{plan_tiling, tile_view, GeoRef, Raster};
use lczgrid::rules::LczLabel;

fn main() -> lczgrid::error::Result<()> {
    let dir = std::env::temp_dir().join("lczgrid-tiling-io");
    std::fs::create_dir_all(&dir).unwrap();

    // 250 x 200 cells at 1 m, with a 10 m block in the middle.
    let georef = GeoRef::new(583_000.0, 4_507_000.0, 1.0, "EPSG:32618");
    let mut heights = Raster::filled(250, 200, georef.clone(), -9999.0, 0.0)?;
    for row in 80..120 {
        for col in 100..150 {
            heights.set(row, col, 10.0);
        }
    }
    heights.set(0, 0, -9999.0);

    for name in ["heights.asc", "heights.tif"] {
        let path = dir.join(name);
        write_raster(&path, &heights)?;
        let back = read_raster(&path)?;
        assert_eq!(back.cells(), heights.cells());
        println!("{name}: {}x{}, crs {:?}", back.width(), back.height(), back.georef().crs_id);
    }

    // A 100 m coarse grid with the same origin. Its third column is only
    // half covered by fine data, so it is left out of the plan.
    let coarse_geo = GeoRef::new(georef.origin_x, georef.origin_y, 100.0, "EPSG:32618");
    let coarse = Raster::filled(3, 2, coarse_geo, LczLabel::NoData, LczLabel::Others)?;
    write_labels(dir.join("coarse.asc"), &coarse)?;
    let plan = plan_tiling(&heights, &coarse)?;
    println!("plan: {} x {} tiles of {} cells", plan.tiles_y, plan.tiles_x, plan.factor);

    for (i, j) in plan.tiles() {
        let view = tile_view(&heights, &plan, i, j)?;
        let built = view.valid().filter(|&h| h > 2.0).count();
        let valid = view.valid().count();
        println!("tile ({i}, {j}): {valid} valid cells, {built} built");
    }
    Ok(())
}
