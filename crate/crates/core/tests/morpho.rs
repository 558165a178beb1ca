use std::f64::consts::{FRAC_PI_4, TAU};

use lczgrid::morpho::*;
use lczgrid::raster::{tile_view, GeoRef, Raster, TilingPlan};
use lczgrid::synth::{
    analytic_truth, horizon_raymarch_oracle, rasterize, svf_raymarch_oracle, wall_scene, Building, Rect, SceneSpec,
    TruthOptions,
};
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn flat(w: usize, h: usize, v: f64) -> Raster<f64> {
    Raster::filled(w, h, GeoRef::new(0.0, h as f64, 1.0, "LOCAL"), -9999.0, v).unwrap()
}

fn svf(n: usize, radius: f64) -> SvfConfig {
    SvfConfig {
        n_azimuths: n,
        max_radius: radius,
        ..SvfConfig::default()
    }
}

/// Heights equal to the distance from `center` along the four grid axes and
/// zero elsewhere: every axis ray from the center climbs at exactly 45°.
fn axis_pit(size: usize, center: (usize, usize)) -> Raster<f64> {
    let mut dsm = flat(size, size, 0.0);
    for k in 0..size {
        dsm.set(center.0, k, (k as f64 - center.1 as f64).abs());
        dsm.set(k, center.1, (k as f64 - center.0 as f64).abs());
    }
    dsm
}

fn one_tile<T: lczgrid::raster::Cell>(r: &Raster<T>) -> TilingPlan {
    TilingPlan::for_tile_size(r, r.width() as f64 * r.cell_size()).unwrap().0
}

#[test]
fn bsf_examples() {
    let mut h = flat(100, 100, 0.0);
    for row in 0..50 {
        for col in 0..50 {
            h.set(row, col, 10.0);
        }
    }
    let plan = one_tile(&h);
    assert_eq!(bsf(&tile_view(&h, &plan, 0, 0).unwrap(), 2.0), Some(0.25));
    let zero = flat(100, 100, 0.0);
    assert_eq!(bsf(&tile_view(&zero, &plan, 0, 0).unwrap(), 2.0), Some(0.0));
    let none = flat(100, 100, -9999.0);
    assert_eq!(bsf(&tile_view(&none, &plan, 0, 0).unwrap(), 2.0), None);
    assert_eq!(hre(&tile_view(&none, &plan, 0, 0).unwrap(), 2.0), None);

    let mut spec = SceneSpec::empty(100.0, 100.0, 1.0);
    spec.buildings.push(Building::new(31.0, 44.0, 20.0, 30.0, 8.0));
    let r = rasterize(&spec).unwrap();
    let truth = analytic_truth(&spec, &plan, &TruthOptions::default()).unwrap();
    let measured = bsf(&tile_view(&r.building_height, &plan, 0, 0).unwrap(), 2.0).unwrap();
    assert_eq!(truth[0].bsf, 0.06);
    assert_eq!(measured, 0.06);
}

#[test]
fn hre_examples() {
    let mut h = flat(100, 100, 0.0);
    for row in 10..30 {
        for col in 5..90 {
            h.set(row, col, 12.0);
        }
    }
    let plan = one_tile(&h);
    assert_eq!(hre(&tile_view(&h, &plan, 0, 0).unwrap(), 2.0), Some(12.0));

    let mut two = flat(100, 100, 0.0);
    for row in 0..10 {
        for col in 0..10 {
            two.set(row, col, 10.0);
            two.set(row + 50, col + 50, 20.0);
        }
    }
    assert_eq!(hre(&tile_view(&two, &plan, 0, 0).unwrap(), 2.0), Some(15.0));
    assert_eq!(hre(&tile_view(&flat(100, 100, 0.0), &plan, 0, 0).unwrap(), 2.0), None);
}

#[test]
fn horizon_on_flat_ground_and_behind_a_wall() {
    let cfg = SvfConfig::default();
    let ground = flat(81, 81, 0.0);
    for k in 0..8 {
        assert_eq!(horizon_angle(&ground, (40, 40), TAU * k as f64 / 8.0, &cfg), Some(0.0));
    }
    let mut wall = flat(81, 81, 0.0);
    for row in 0..81 {
        wall.set(row, 50, 10.0);
    }
    let beta = horizon_angle(&wall, (40, 40), TAU / 4.0, &cfg).unwrap();
    assert!((beta - FRAC_PI_4).abs() < 1e-12, "{beta}");
}

#[test]
fn horizon_over_ridges_matches_fine_oracle() {
    let n = 161;
    let mut dsm = flat(n, n, 0.0);
    for row in 0..n {
        for col in 0..n {
            let (x, y) = (col as f64, row as f64);
            let v = 6.0 + 5.0 * (x / 9.0).sin() * (y / 13.0).cos() + 3.0 * ((x + 2.0 * y) / 17.0).sin();
            dsm.set(row, col, v.max(0.0));
        }
    }
    let cfg = SvfConfig::default();
    let mut worst = 0.0f64;
    for &px in &[(80, 80), (40, 120), (100, 55)] {
        for k in 0..32 {
            let az = TAU * k as f64 / 32.0;
            let ours = horizon_angle(&dsm, px, az, &cfg).unwrap();
            let oracle = horizon_raymarch_oracle(&dsm, px, az, 0.1, cfg.max_radius).unwrap();
            worst = worst.max((ours - oracle).abs());
        }
    }
    assert!(worst <= 0.01, "worst horizon difference {worst} rad");
}

#[test]
fn svf_pixel_analytic_cases() {
    assert_eq!(svf_pixel(&flat(201, 201, 0.0), (100, 100), &SvfConfig::default()), Some(1.0));
    let pit = axis_pit(201, (100, 100));
    let v = svf_pixel(&pit, (100, 100), &svf(4, 100.0)).unwrap();
    assert!((v - 0.5).abs() < 1e-12, "{v}");
    assert!((svf_from_horizons(&[FRAC_PI_4; 32]) - 0.5).abs() < 1e-15);
    let oracle = svf_raymarch_oracle(&pit, (100, 100), 4, 0.1, 100.0).unwrap();
    assert!((oracle - 0.5).abs() < 1e-12, "{oracle}");
}

#[test]
fn canyon_between_two_walls_matches_oracle() {
    // Walls 20 m tall and 4 m thick, faces 10.5 m either side of the pixel center.
    let mut spec = SceneSpec::empty(201.0, 201.0, 1.0);
    spec.buildings.push(Building::new(86.0, 0.0, 4.0, 201.0, 20.0));
    spec.buildings.push(Building::new(111.0, 0.0, 4.0, 201.0, 20.0));
    let r = rasterize(&spec).unwrap();
    let px = (100, 100);
    let ours = svf_pixel(&r.dsm, px, &SvfConfig::default()).unwrap();
    let oracle = svf_raymarch_oracle(&r.dsm, px, 128, 0.1, 100.0).unwrap();
    assert!((ours - oracle).abs() <= 0.02, "{ours} vs {oracle}");
    assert!(ours < 0.7);
}

#[test]
fn wall_scenes_match_oracle() {
    let cfg = SvfConfig::default();
    for seed in 0..5 {
        let (spec, probes) = wall_scene(seed);
        let r = rasterize(&spec).unwrap();
        for px in probes {
            let ours = svf_pixel(&r.dsm, px, &cfg).unwrap();
            let oracle = svf_raymarch_oracle(&r.dsm, px, 128, 0.1, cfg.max_radius).unwrap();
            assert!((ours - oracle).abs() <= 0.02, "seed {seed} {px:?}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn svf_tile_cases() {
    let cfg = SvfConfig::default();
    let ground = flat(100, 100, 0.0);
    let plan = one_tile(&ground);
    assert_eq!(svf_tile(&ground, &ground, &plan, 0, 0, &cfg, 2.0).unwrap(), Some(1.0));

    // An isolated slab covering the whole tile: roofs only, open sky.
    let mut dsm = flat(300, 300, 0.0);
    for row in 100..200 {
        for col in 100..200 {
            dsm.set(row, col, 15.0);
        }
    }
    let (plan3, _) = TilingPlan::for_tile_size(&dsm, 100.0).unwrap();
    let v = svf_tile(&dsm, &dsm, &plan3, 1, 1, &cfg, 2.0).unwrap().unwrap();
    assert_eq!(v, 1.0);
    for px in [(100, 100), (150, 150), (199, 120)] {
        assert_eq!(svf_raymarch_oracle(&dsm, px, 128, 0.1, 100.0), Some(1.0));
    }

    // Two ground cells: one open (SVF 1), one at the bottom of a 45° pit
    // (SVF 0.5 with four azimuths); the other two cells are buildings.
    let mut pit = axis_pit(101, (51, 51));
    pit.set(50, 50, 1.0);
    let mut heights = flat(101, 101, 0.0);
    heights.set(50, 51, 10.0);
    heights.set(51, 50, 10.0);
    let cfg4 = svf(4, 100.0);
    let open = svf_raymarch_oracle(&pit, (50, 50), 4, 0.1, 100.0).unwrap();
    let deep = svf_raymarch_oracle(&pit, (51, 51), 4, 0.1, 100.0).unwrap();
    assert_eq!(open, 1.0);
    assert!((deep - 0.5).abs() < 1e-12);
    let (plan2, _) = TilingPlan::for_tile_size(&pit, 2.0).unwrap();
    let v = svf_tile(&pit, &heights, &plan2, 25, 25, &cfg4, 2.0).unwrap().unwrap();
    assert!((v - 0.75).abs() < 1e-12, "{v}");

    let none = flat(100, 100, -9999.0);
    assert_eq!(svf_tile(&none, &none, &plan, 0, 0, &cfg, 2.0).unwrap(), None);
}

fn ndvi_of(r: &Raster<f64>, red: f64, nir: f64) -> (Raster<f64>, Raster<f64>) {
    (r.map(-9999.0, |_| red), r.map(-9999.0, |_| nir))
}

#[test]
fn tile_params_cases() {
    let cfg = MorphoConfig::default();
    let nodata = flat(100, 100, -9999.0);
    let plan = one_tile(&nodata);
    let inputs = ParamInputs {
        building_height: &nodata,
        dsm: &nodata,
        ndvi: None,
        water: None,
    };
    assert!(!tile_params(&inputs, &plan, 0, 0, &cfg).unwrap().valid);

    let ground = flat(100, 100, 0.0);
    let inputs = ParamInputs {
        building_height: &ground,
        dsm: &ground,
        ndvi: None,
        water: None,
    };
    let p = tile_params(&inputs, &plan, 0, 0, &cfg).unwrap();
    assert!(p.valid);
    assert_eq!((p.bsf, p.hre, p.svf, p.psf), (Some(0.0), None, Some(1.0), None));

    // Half the red/nir cells missing is still a valid tile; 60% missing is not.
    let (red, nir) = ndvi_of(&ground, 0.2, 0.6);
    let mut holes = red.clone();
    for k in 0..6000 {
        holes.set(k / 100, k % 100, -9999.0);
    }
    let ndvi_ok = ndvi_raster(&red, &nir).unwrap().ndvi;
    let ndvi_holes = ndvi_raster(&holes, &nir).unwrap().ndvi;
    let with = |ndvi| ParamInputs {
        building_height: &ground,
        dsm: &ground,
        ndvi: Some(ndvi),
        water: None,
    };
    assert_eq!(tile_params(&with(&ndvi_ok), &plan, 0, 0, &cfg).unwrap().psf, Some(1.0));
    assert!(!tile_params(&with(&ndvi_holes), &plan, 0, 0, &cfg).unwrap().valid);
}

#[test]
fn tile_params_match_scene_oracles() {
    // The middle tile of a 3x3 block: four 25 x 25 m blocks of 12 m, and
    // vegetation over 40% of the tile.
    let mut spec = SceneSpec::empty(300.0, 300.0, 1.0);
    for (x, y) in [(110.0, 110.0), (165.0, 110.0), (110.0, 165.0), (165.0, 165.0)] {
        spec.buildings.push(Building::new(x, y, 25.0, 25.0, 12.0));
    }
    spec.veg_patches.push(Rect::new(100.0, 140.0, 100.0, 20.0));
    spec.veg_patches.push(Rect::new(100.0, 190.0, 100.0, 10.0));
    spec.veg_patches.push(Rect::new(100.0, 100.0, 100.0, 10.0));
    let r = rasterize(&spec).unwrap();
    let (plan, _) = TilingPlan::for_tile_size(&r.dsm, 100.0).unwrap();
    let ndvi = ndvi_raster(&r.red, &r.nir).unwrap().ndvi;
    let inputs = ParamInputs {
        building_height: &r.building_height,
        dsm: &r.dsm,
        ndvi: Some(&ndvi),
        water: Some(&r.water),
    };
    let cfg = MorphoConfig::default();
    let p = tile_params(&inputs, &plan, 1, 1, &cfg).unwrap();
    let truth = &analytic_truth(&spec, &plan, &TruthOptions::default()).unwrap()[4];
    assert_eq!(p.bsf, Some(0.25));
    assert_eq!(truth.bsf, 0.25);
    assert_eq!(p.hre, Some(12.0));
    assert_eq!(truth.hre, Some(12.0));
    assert_eq!(p.psf, Some(0.4));
    assert_eq!(truth.psf_exact.to_f64(), Some(0.4));

    // Tile SVF is the mean over ground pixels; check it against the oracle
    // on a regular subsample of those pixels.
    let mut ours = Vec::new();
    let mut oracle = Vec::new();
    for row in (100..200).step_by(9) {
        for col in (100..200).step_by(9) {
            if r.building_height.get(row, col) > 2.0 {
                continue;
            }
            ours.push(svf_pixel(&r.dsm, (row, col), &cfg.svf).unwrap());
            oracle.push(svf_raymarch_oracle(&r.dsm, (row, col), 128, 0.1, 100.0).unwrap());
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&ours) - mean(&oracle)).abs() <= 0.02);
    let svf = p.svf.unwrap();
    assert!((svf - mean(&ours)).abs() < 0.05, "{svf} vs subsample {}", mean(&ours));
    assert!(svf > 0.5 && svf < 1.0);
}

#[test]
fn ndvi_examples() {
    assert!((ndvi(0.2, 0.6).unwrap().value - 0.5).abs() < 1e-15);
    assert_eq!(ndvi(0.37, 0.37).unwrap().value, 0.0);
    let z = ndvi(0.0, 0.0).unwrap();
    assert_eq!((z.value, z.low_confidence), (0.0, true));
    assert!(ndvi(0.1, -0.2).is_err());
}

#[test]
fn psf_with_water_mask() {
    let bare = flat(10, 10, 0.05);
    let mut water = flat(10, 10, 0.0);
    for k in 0..30 {
        water.set(k / 10, k % 10, 1.0);
    }
    let plan = one_tile(&bare);
    let v = psf(
        &tile_view(&bare, &plan, 0, 0).unwrap(),
        Some(&tile_view(&water, &plan, 0, 0).unwrap()),
        0.2,
    )
    .unwrap();
    assert_eq!(v, Some(0.3));
}

#[test]
fn workers_do_not_change_results() {
    let spec = lczgrid::synth::random_city(
        3,
        &lczgrid::synth::CityOptions {
            tiles_x: 3,
            tiles_y: 2,
            ..Default::default()
        },
    );
    let r = rasterize(&spec).unwrap();
    let ndvi = ndvi_raster(&r.red, &r.nir).unwrap().ndvi;
    let inputs = ParamInputs {
        building_height: &r.building_height,
        dsm: &r.dsm,
        ndvi: Some(&ndvi),
        water: Some(&r.water),
    };
    let (plan, _) = TilingPlan::for_tile_size(&r.dsm, 100.0).unwrap();
    let cfg = MorphoConfig::default();
    let one = compute_params(&inputs, &plan, &cfg, 1).unwrap();
    for workers in [2, 3, 7] {
        assert_eq!(compute_params(&inputs, &plan, &cfg, workers).unwrap(), one);
    }
}

/// Small random scene: a few integer-aligned buildings on a 48 m square.
fn small_scene() -> impl Strategy<Value = SceneSpec> {
    prop::collection::vec((0u32..40, 0u32..40, 1u32..10, 1u32..10, 3u32..30), 0..6).prop_map(|bs| {
        let mut spec = SceneSpec::empty(48.0, 48.0, 1.0);
        for (x, y, w, d, h) in bs {
            let w = w.min(48 - x);
            let d = d.min(48 - y);
            spec.buildings.push(Building::new(x as f64, y as f64, w as f64, d as f64, h as f64));
        }
        spec
    })
}

fn rotate90(r: &Raster<f64>) -> Raster<f64> {
    let n = r.width();
    let mut out = r.clone();
    for row in 0..n {
        for col in 0..n {
            out.set(col, n - 1 - row, r.get(row, col));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bsf_equals_analytic_fraction(spec in small_scene()) {
        let r = rasterize(&spec).unwrap();
        let (plan, _) = TilingPlan::for_tile_size(&r.building_height, 16.0).unwrap();
        let truth = analytic_truth(&spec, &plan, &TruthOptions::default()).unwrap();
        for t in &truth {
            let view = tile_view(&r.building_height, &plan, t.i, t.j).unwrap();
            let measured = bsf(&view, 2.0).unwrap();
            prop_assert!((measured - t.bsf).abs() <= 1.0 / (plan.factor * plan.factor) as f64 * 1e-9 + 1e-15);
            let h = hre(&view, 2.0);
            prop_assert_eq!(h.is_none(), measured == 0.0);
            if let (Some(a), Some(b)) = (h, t.hre) {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(a > 2.0);
            }
        }
    }

    #[test]
    fn uniform_height_gives_exact_hre(spec in small_scene(), h in 3u32..60) {
        let mut spec = spec;
        for b in &mut spec.buildings {
            b.height = h as f64 + 0.25;
        }
        let r = rasterize(&spec).unwrap();
        let plan = one_tile(&r.building_height);
        let got = hre(&tile_view(&r.building_height, &plan, 0, 0).unwrap(), 2.0);
        prop_assert_eq!(got, (!spec.buildings.is_empty()).then_some(h as f64 + 0.25));
    }

    #[test]
    fn raising_a_building_never_opens_the_sky(spec in small_scene(), pick in any::<prop::sample::Index>(), extra in 1u32..20) {
        prop_assume!(!spec.buildings.is_empty());
        let cfg = svf(16, 40.0);
        let before = rasterize(&spec).unwrap();
        let k = pick.index(spec.buildings.len());
        let mut taller = spec.clone();
        taller.buildings[k].height += extra as f64;
        let after = rasterize(&taller).unwrap();
        for row in (0..48).step_by(3) {
            for col in (0..48).step_by(3) {
                if after.dsm.get(row, col) != before.dsm.get(row, col) {
                    continue; // on the raised roof itself
                }
                let a = svf_pixel(&before.dsm, (row, col), &cfg).unwrap();
                let b = svf_pixel(&after.dsm, (row, col), &cfg).unwrap();
                prop_assert!(b <= a + 1e-12, "({row},{col}): {a} -> {b}");
            }
        }
    }

    #[test]
    fn adding_a_building_never_lowers_bsf(spec in small_scene(), x in 0u32..40, y in 0u32..40, h in 3u32..30) {
        let r0 = rasterize(&spec).unwrap();
        let mut more = spec.clone();
        more.buildings.push(Building::new(x as f64, y as f64, 8.0, 8.0, h as f64));
        let r1 = rasterize(&more).unwrap();
        let plan = one_tile(&r0.building_height);
        let b0 = bsf(&tile_view(&r0.building_height, &plan, 0, 0).unwrap(), 2.0).unwrap();
        let b1 = bsf(&tile_view(&r1.building_height, &plan, 0, 0).unwrap(), 2.0).unwrap();
        prop_assert!(b1 >= b0);
    }

    #[test]
    fn quarter_turns_leave_svf_unchanged(spec in small_scene()) {
        // Odd-sized square so the evaluated pixel is the rotation center.
        let r = rasterize(&SceneSpec { extent_x: 47.0, extent_y: 47.0, buildings: spec.buildings.iter().filter(|b| b.footprint.x + b.footprint.width <= 47.0 && b.footprint.y + b.footprint.depth <= 47.0).copied().collect(), ..spec }).unwrap();
        let cfg = svf(32, 30.0);
        let mut dsm = r.dsm.clone();
        let base = svf_pixel(&dsm, (23, 23), &cfg).unwrap();
        for _ in 0..3 {
            dsm = rotate90(&dsm);
            let v = svf_pixel(&dsm, (23, 23), &cfg).unwrap();
            prop_assert!((v - base).abs() < 1e-9, "{base} vs {v}");
        }
    }

    #[test]
    fn svf_bounds_and_openness(spec in small_scene(), row in 0usize..48, col in 0usize..48) {
        let r = rasterize(&spec).unwrap();
        let cfg = svf(16, 40.0);
        let v = svf_pixel(&r.dsm, (row, col), &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let horizons: Vec<f64> = (1..=16).map(|k| horizon_angle(&r.dsm, (row, col), TAU * k as f64 / 16.0, &cfg).unwrap()).collect();
        if horizons.iter().all(|&b| b == 0.0) {
            prop_assert_eq!(v, 1.0);
        }
        // Horizons of a few nanoradians vanish in rounding; anything visible
        // must close some sky.
        if horizons.iter().any(|&b| b > 1e-6) {
            prop_assert!(v < 1.0);
        }
    }

    #[test]
    fn kernel_matches_reference(spec in small_scene(), holes in prop::collection::vec((0usize..48, 0usize..48), 0..5), refine in 1usize..9) {
        let mut dsm = rasterize(&spec).unwrap().dsm;
        for (r, c) in holes {
            dsm.set(r, c, -9999.0);
        }
        let cfg = SvfConfig { n_azimuths: 16, max_radius: 30.0, step: 1.0, refine };
        let kernel = SvfKernel::new(&dsm, cfg).unwrap();
        let reach = kernel.reach_max(0..48, 0..48);
        for row in (0..48).step_by(5) {
            for col in (0..48).step_by(5) {
                let slow = svf_pixel(&dsm, (row, col), &cfg);
                let fast = kernel.svf_at(row, col, reach);
                match (slow, fast) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn tile_fractions_stay_in_unit_interval(seed in any::<u64>()) {
        let spec = lczgrid::synth::random_city(seed, &lczgrid::synth::CityOptions { tiles_x: 1, tiles_y: 1, tile_size: 40.0, cell_size: 1.0 });
        let r = rasterize(&spec).unwrap();
        let ndvi = ndvi_raster(&r.red, &r.nir).unwrap().ndvi;
        let inputs = ParamInputs { building_height: &r.building_height, dsm: &r.dsm, ndvi: Some(&ndvi), water: Some(&r.water) };
        let plan = one_tile(&r.dsm);
        let cfg = MorphoConfig { svf: svf(8, 20.0), ..MorphoConfig::default() };
        let p = tile_params(&inputs, &plan, 0, 0, &cfg).unwrap();
        for v in [p.bsf, p.svf, p.psf].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(p.hre.is_none(), p.bsf == Some(0.0));
    }
}
