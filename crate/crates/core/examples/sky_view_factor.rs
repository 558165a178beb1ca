//! Sky view factor at street level in a canyon, compared with a brute-force
//! ray march, and the tile mean used for classification.
//!
//!     cargo run --release --example sky_view_factor

use lczgrid::morpho::{horizon_angle, svf_pixel, svf_tile, SvfConfig};
use lczgrid::raster::TilingPlan;
use lczgrid::synth::{rasterize, svf_raymarch_oracle, Building, SceneSpec};

fn main() -> lczgrid::error::Result<()> {
    // Two 20 m walls with a 21 m street between them.
    let mut spec = SceneSpec::empty(200.0, 200.0, 1.0);
    spec.buildings.push(Building::new(85.0, 0.0, 4.0, 200.0, 20.0));
    spec.buildings.push(Building::new(110.0, 0.0, 4.0, 200.0, 20.0));
    let r = rasterize(&spec)?;
    let cfg = SvfConfig::default();

    for col in [90, 95, 99, 105, 109] {
        let px = (100, col);
        let ours = svf_pixel(&r.dsm, px, &cfg).unwrap();
        let oracle = svf_raymarch_oracle(&r.dsm, px, 128, 0.1, cfg.max_radius).unwrap();
        println!("col {col:3}: svf {ours:.4}  ray march {oracle:.4}");
    }

    let east = horizon_angle(&r.dsm, (100, 99), std::f64::consts::FRAC_PI_2, &cfg).unwrap();
    println!("horizon looking east from col 99: {:.1} deg", east.to_degrees());

    let (plan, _) = TilingPlan::for_tile_size(&r.dsm, 100.0)?;
    for (i, j) in plan.tiles() {
        let v = svf_tile(&r.dsm, &r.building_height, &plan, i, j, &cfg, 2.0)?;
        println!("tile ({i}, {j}) mean svf {:.4}", v.unwrap());
    }
    Ok(())
}
