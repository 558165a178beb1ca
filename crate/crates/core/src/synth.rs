//! Synthetic cities and brute-force oracles.
//!
//! A [`SceneSpec`] describes axis-aligned buildings and vegetation/water
//! patches. [`rasterize`] turns it into the five fine rasters the pipeline
//! consumes, and [`analytic_truth`] derives exact per-tile parameters and
//! labels from the rectangles themselves, using exact rational arithmetic
//! and its own copy of the rule table. [`svf_raymarch_oracle`] is a slow,
//! dense reference for the sky view factor.
//!
//! None of the oracles call into `morpho` or `rules`.
//!
//! Scene coordinates are meters from the top-left corner: `x` grows east,
//! `y` grows south.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GeoRef, Raster, TilingPlan};
use crate::rules::LczLabel;

pub const NODATA: f64 = -9999.0;

/// Reflectances assigned by [`rasterize`], as (red, nir).
pub const VEGETATION_REFLECTANCE: (f64, f64) = (0.2, 0.6);
pub const IMPERVIOUS_REFLECTANCE: (f64, f64) = (0.3, 0.3);
pub const WATER_REFLECTANCE: (f64, f64) = (0.1, 0.05);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub depth: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, width: f64, depth: f64) -> Self {
        Rect { x, y, width, depth }
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x + o.width
            && o.x < self.x + self.width
            && self.y < o.y + o.depth
            && o.y < self.y + self.depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    #[serde(flatten)]
    pub footprint: Rect,
    pub height: f64,
}

impl Building {
    pub fn new(x: f64, y: f64, width: f64, depth: f64, height: f64) -> Self {
        Building {
            footprint: Rect::new(x, y, width, depth),
            height,
        }
    }
}

fn default_crs() -> String {
    "LOCAL".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// East-west extent in meters.
    pub extent_x: f64,
    /// North-south extent in meters.
    pub extent_y: f64,
    pub cell_size: f64,
    #[serde(default)]
    pub buildings: Vec<Building>,
    #[serde(default)]
    pub veg_patches: Vec<Rect>,
    #[serde(default)]
    pub water_patches: Vec<Rect>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_crs")]
    pub crs_id: String,
}

impl SceneSpec {
    pub fn empty(extent_x: f64, extent_y: f64, cell_size: f64) -> Self {
        SceneSpec {
            extent_x,
            extent_y,
            cell_size,
            buildings: Vec::new(),
            veg_patches: Vec::new(),
            water_patches: Vec::new(),
            seed: 0,
            crs_id: default_crs(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scene(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Grid size in cells.
    pub fn dimensions(&self) -> Result<(usize, usize)> {
        let cells = |extent: f64| {
            let n = extent / self.cell_size;
            let r = n.round();
            ((n - r).abs() < 1e-9 && r >= 1.0).then_some(r as usize)
        };
        match (cells(self.extent_x), cells(self.extent_y)) {
            (Some(w), Some(h)) => Ok((w, h)),
            _ => Err(Error::Scene(format!(
                "extent {}x{} is not a whole number of {} m cells",
                self.extent_x, self.extent_y, self.cell_size
            ))),
        }
    }

    pub fn georef(&self) -> GeoRef {
        GeoRef::new(0.0, self.extent_y, self.cell_size, self.crs_id.clone())
    }

    /// Every problem with the spec, or an empty list. Overlapping buildings
    /// are allowed (the taller one wins); any other overlap is reported.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            out.push(format!("cell_size {} must be positive", self.cell_size));
            return out;
        }
        if let Err(e) = self.dimensions() {
            out.push(e.to_string());
        }
        let inside = |r: &Rect| {
            r.width > 0.0
                && r.depth > 0.0
                && r.x >= 0.0
                && r.y >= 0.0
                && r.x + r.width <= self.extent_x
                && r.y + r.depth <= self.extent_y
        };
        for (k, b) in self.buildings.iter().enumerate() {
            if !inside(&b.footprint) {
                out.push(format!("building {k} is empty or outside the extent"));
            }
            if !(b.height.is_finite() && b.height > 0.0) {
                out.push(format!("building {k} has non-positive height {}", b.height));
            }
        }
        for (name, list) in [("vegetation", &self.veg_patches), ("water", &self.water_patches)] {
            for (k, r) in list.iter().enumerate() {
                if !inside(r) {
                    out.push(format!("{name} patch {k} is empty or outside the extent"));
                }
            }
        }
        let patches = self
            .veg_patches
            .iter()
            .enumerate()
            .map(|(k, r)| (format!("vegetation patch {k}"), r))
            .chain(
                self.water_patches
                    .iter()
                    .enumerate()
                    .map(|(k, r)| (format!("water patch {k}"), r)),
            )
            .collect::<Vec<_>>();
        for (a, (na, ra)) in patches.iter().enumerate() {
            for (nb, rb) in &patches[a + 1..] {
                if ra.overlaps(rb) {
                    out.push(format!("{na} overlaps {nb}"));
                }
            }
            for (k, b) in self.buildings.iter().enumerate() {
                if ra.overlaps(&b.footprint) {
                    out.push(format!("{na} overlaps building {k}"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Scene(problems.join("; ")))
        }
    }
}

/// Knobs for [`random_city`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CityOptions {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Tile side in meters.
    pub tile_size: f64,
    pub cell_size: f64,
}

impl Default for CityOptions {
    fn default() -> Self {
        CityOptions {
            tiles_x: 10,
            tiles_y: 10,
            tile_size: 100.0,
            cell_size: 1.0,
        }
    }
}

/// District archetypes: (coverage range, height range in meters).
const DISTRICTS: [((f64, f64), (f64, f64)); 9] = [
    ((0.45, 0.65), (27.0, 60.0)),
    ((0.45, 0.65), (11.0, 24.0)),
    ((0.45, 0.65), (4.0, 9.0)),
    ((0.22, 0.38), (27.0, 60.0)),
    ((0.22, 0.38), (11.0, 24.0)),
    ((0.16, 0.24), (4.0, 9.0)),
    ((0.06, 0.14), (4.0, 9.0)),
    ((0.26, 0.36), (4.0, 9.0)),
    ((0.0, 0.0), (0.0, 0.0)),
];

/// A seeded random city on a lattice of tiles. Each tile gets a district
/// archetype and a 4x4 grid of plots, each holding at most one
/// integer-aligned building; vegetation and water fill parts of the open
/// ground. Rectangles never cross tile edges.
pub fn random_city(seed: u64, opts: &CityOptions) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = SceneSpec::empty(
        opts.tiles_x as f64 * opts.tile_size,
        opts.tiles_y as f64 * opts.tile_size,
        opts.cell_size,
    );
    spec.seed = seed;
    let plots = 4usize;
    let plot = (opts.tile_size / plots as f64).floor();
    for ti in 0..opts.tiles_y {
        for tj in 0..opts.tiles_x {
            let ((cov_lo, cov_hi), (h_lo, h_hi)) = DISTRICTS[rng.gen_range(0..DISTRICTS.len())];
            let coverage = if cov_hi > 0.0 { rng.gen_range(cov_lo..=cov_hi) } else { 0.0 };
            let green = rng.gen_bool(0.6);
            let x0 = tj as f64 * opts.tile_size;
            let y0 = ti as f64 * opts.tile_size;
            for pi in 0..plots {
                for pj in 0..plots {
                    let px = x0 + pj as f64 * plot;
                    let py = y0 + pi as f64 * plot;
                    let mut used_depth = 0.0;
                    if coverage > 0.0 {
                        let side = (coverage.sqrt() * plot).max(1.0);
                        let w = (side + rng.gen_range(-2.0..=2.0)).round().clamp(1.0, plot - 2.0);
                        let d = (coverage * plot * plot / w).round().clamp(1.0, plot - 2.0);
                        let h = (rng.gen_range(h_lo..=h_hi) * 2.0).round() / 2.0;
                        spec.buildings.push(Building::new(px + 1.0, py + 1.0, w, d, h));
                        used_depth = d + 1.0;
                    }
                    // Open strip below the building.
                    let free = plot - used_depth - 1.0;
                    if free >= 1.0 {
                        let depth = if green {
                            rng.gen_range(1.0..=free).round()
                        } else {
                            (free * rng.gen_range(0.0..0.15)).round()
                        };
                        if depth >= 1.0 {
                            let rect = Rect::new(px, py + used_depth + 1.0, plot, depth);
                            if green && rng.gen_bool(0.1) {
                                spec.water_patches.push(rect);
                            } else {
                                spec.veg_patches.push(rect);
                            }
                        }
                    }
                }
            }
        }
    }
    spec
}

/// A seeded street canyon for SVF checks, plus the ground pixels
/// `(row, col)` to evaluate. Walls run the full length of the scene, one or
/// two deep on each side of the street, so every horizon is continuous in
/// azimuth.
pub fn wall_scene(seed: u64) -> (SceneSpec, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 160.0;
    let mut spec = SceneSpec::empty(size, size, 1.0);
    spec.seed = seed;
    let center = 80.0;
    let half_street = rng.gen_range(4..=14) as f64;
    let vertical = rng.gen_bool(0.5);
    let mut wall = |offset: f64, thickness: f64, height: f64| {
        spec.buildings.push(if vertical {
            Building::new(offset, 0.0, thickness, size, height)
        } else {
            Building::new(0.0, offset, size, thickness, height)
        });
    };
    for side in [-1.0, 1.0] {
        let thickness = rng.gen_range(2..=10) as f64;
        let height = rng.gen_range(5..=40) as f64;
        let near = if side < 0.0 {
            center - half_street - thickness
        } else {
            center + half_street
        };
        wall(near, thickness, height);
        if rng.gen_bool(0.5) {
            // A taller block behind, across a back alley.
            let gap = rng.gen_range(2..=8) as f64;
            let depth = rng.gen_range(2..=10) as f64;
            let offset = if side < 0.0 {
                near - gap - depth
            } else {
                near + thickness + gap
            };
            wall(offset, depth, height + rng.gen_range(0..=30) as f64);
        }
    }
    let street = (half_street - 1.0) as isize;
    let probes = (0..4)
        .map(|_| {
            let across = center as isize + rng.gen_range(-street..street);
            let along = center as isize + rng.gen_range(-30isize..=30);
            let (row, col) = if vertical { (along, across) } else { (across, along) };
            (row as usize, col as usize)
        })
        .collect();
    (spec, probes)
}

/// The five fine rasters of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRasters {
    pub building_height: Raster<f64>,
    pub dsm: Raster<f64>,
    pub red: Raster<f64>,
    pub nir: Raster<f64>,
    /// 1 for water, 0 elsewhere.
    pub water: Raster<f64>,
}

/// Half-open cell index range whose centers fall in `[start, start + len)`.
fn covered_cells(start: f64, len: f64, cell: f64, n: usize) -> std::ops::Range<usize> {
    let first = (start / cell - 0.5).ceil().max(0.0) as usize;
    let end = ((start + len) / cell - 0.5).ceil().max(0.0) as usize;
    first.min(n)..end.min(n)
}

/// Center-point rasterization: a cell belongs to a rectangle when its center
/// lies inside it.
pub fn rasterize(spec: &SceneSpec) -> Result<SceneRasters> {
    spec.validate()?;
    let (w, h) = spec.dimensions()?;
    let cell = spec.cell_size;
    let georef = spec.georef();
    let mut heights = vec![0.0f64; w * h];
    for b in &spec.buildings {
        let f = b.footprint;
        for r in covered_cells(f.y, f.depth, cell, h) {
            for c in covered_cells(f.x, f.width, cell, w) {
                let v = &mut heights[r * w + c];
                *v = v.max(b.height);
            }
        }
    }
    let mut red = vec![IMPERVIOUS_REFLECTANCE.0; w * h];
    let mut nir = vec![IMPERVIOUS_REFLECTANCE.1; w * h];
    let mut water = vec![0.0; w * h];
    let mut paint = |rect: &Rect, refl: (f64, f64), wet: bool| {
        for r in covered_cells(rect.y, rect.depth, cell, h) {
            for c in covered_cells(rect.x, rect.width, cell, w) {
                red[r * w + c] = refl.0;
                nir[r * w + c] = refl.1;
                if wet {
                    water[r * w + c] = 1.0;
                }
            }
        }
    };
    for p in &spec.veg_patches {
        paint(p, VEGETATION_REFLECTANCE, false);
    }
    for p in &spec.water_patches {
        paint(p, WATER_REFLECTANCE, true);
    }
    let make = |cells| Raster::from_vec(w, h, georef.clone(), NODATA, cells);
    Ok(SceneRasters {
        dsm: make(heights.clone())?,
        building_height: make(heights)?,
        red: make(red)?,
        nir: make(nir)?,
        water: make(water)?,
    })
}

fn q(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite scene coordinate")
}

fn dec(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// The simplified rule table, written out directly over exact rationals.
/// Rows are tried in printed order.
pub fn table1_label(bsf: &BigRational, hre: Option<&BigRational>) -> LczLabel {
    let Some(hre) = hre else {
        return LczLabel::Others;
    };
    let b = |lo: (i64, i64), hi: (i64, i64)| *bsf >= dec(lo.0, lo.1) && *bsf <= dec(hi.0, hi.1);
    let h = |lo: i64, hi: i64| *hre >= dec(lo, 1) && *hre <= dec(hi, 1);
    let dense = *bsf > dec(4, 10);
    let open = b((2, 10), (4, 10));
    let tall = *hre > dec(25, 1);
    if dense && tall {
        LczLabel::Lcz1
    } else if dense && h(10, 25) {
        LczLabel::Lcz2
    } else if dense && h(3, 10) {
        LczLabel::Lcz3
    } else if open && tall {
        LczLabel::Lcz4
    } else if open && h(10, 25) {
        LczLabel::Lcz5
    } else if b((15, 100), (25, 100)) && h(3, 10) {
        LczLabel::Lcz6
    } else if b((5, 100), (15, 100)) && h(3, 10) {
        LczLabel::Lcz9
    } else {
        LczLabel::Others
    }
}

/// Guard bands and the building height cut used for ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthOptions {
    pub bsf_band: f64,
    /// Meters.
    pub hre_band: f64,
    pub psf_band: f64,
    /// Same meaning as the pipeline's footprint threshold.
    pub footprint_threshold: f64,
}

impl Default for TruthOptions {
    fn default() -> Self {
        TruthOptions {
            bsf_band: 0.01,
            hre_band: 0.25,
            psf_band: 0.01,
            footprint_threshold: 2.0,
        }
    }
}

const BSF_THRESHOLDS: [(i64, i64); 5] = [(5, 100), (15, 100), (2, 10), (25, 100), (4, 10)];
const HRE_THRESHOLDS: [i64; 3] = [3, 10, 25];
const PSF_THRESHOLD: (i64, i64) = (2, 10);

/// Exact per-tile parameters and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub i: usize,
    pub j: usize,
    pub bsf_exact: BigRational,
    pub hre_exact: Option<BigRational>,
    pub psf_exact: BigRational,
    pub bsf: f64,
    pub hre: Option<f64>,
    pub psf: f64,
    /// Rule-table label of the exact (BSF, HRE).
    pub stage1: LczLabel,
    /// Some parameter lies within a guard band of a threshold.
    pub boundary_flag: bool,
    /// Stage-one labels reachable by moving BSF/HRE within their guard bands.
    pub stage1_admissible: BTreeSet<LczLabel>,
    /// Final labels consistent with the truth; adds class 8 whenever the
    /// tile is eligible and PSF does not clearly rule it out, since the
    /// override also depends on SVF, which has no closed form here.
    pub final_admissible: BTreeSet<LczLabel>,
}

fn clip(a0: &BigRational, a1: &BigRational, lo: &BigRational, hi: &BigRational) -> Option<(BigRational, BigRational)> {
    let s = a0.max(lo).clone();
    let e = a1.min(hi).clone();
    (s < e).then_some((s, e))
}

/// Area of `rects` inside the box, assuming the rectangles are disjoint.
fn disjoint_area(rects: &[Rect], x: (&BigRational, &BigRational), y: (&BigRational, &BigRational)) -> BigRational {
    let mut area = BigRational::zero();
    for r in rects {
        let rx0 = q(r.x);
        let rx1 = &rx0 + q(r.width);
        let ry0 = q(r.y);
        let ry1 = &ry0 + q(r.depth);
        if let (Some((xs, xe)), Some((ys, ye))) = (clip(&rx0, &rx1, x.0, x.1), clip(&ry0, &ry1, y.0, y.1)) {
            area += (xe - xs) * (ye - ys);
        }
    }
    area
}

/// Built area and height-weighted built area of the union of buildings
/// inside the box, where overlapping buildings take the greater height.
fn built_area(
    buildings: &[Building],
    x: (&BigRational, &BigRational),
    y: (&BigRational, &BigRational),
    threshold: &BigRational,
) -> (BigRational, BigRational) {
    struct Clipped {
        x0: BigRational,
        x1: BigRational,
        y0: BigRational,
        y1: BigRational,
        h: BigRational,
    }
    let clipped: Vec<Clipped> = buildings
        .iter()
        .filter_map(|b| {
            let f = b.footprint;
            let bx0 = q(f.x);
            let bx1 = &bx0 + q(f.width);
            let by0 = q(f.y);
            let by1 = &by0 + q(f.depth);
            let (x0, x1) = clip(&bx0, &bx1, x.0, x.1)?;
            let (y0, y1) = clip(&by0, &by1, y.0, y.1)?;
            Some(Clipped { x0, x1, y0, y1, h: q(b.height) })
        })
        .collect();
    let mut xs: Vec<BigRational> = clipped.iter().flat_map(|c| [c.x0.clone(), c.x1.clone()]).collect();
    let mut ys: Vec<BigRational> = clipped.iter().flat_map(|c| [c.y0.clone(), c.y1.clone()]).collect();
    xs.sort();
    xs.dedup();
    ys.sort();
    ys.dedup();
    let mut area = BigRational::zero();
    let mut weighted = BigRational::zero();
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let top = clipped
                .iter()
                .filter(|c| c.x0 <= xw[0] && xw[1] <= c.x1 && c.y0 <= yw[0] && yw[1] <= c.y1)
                .map(|c| &c.h)
                .max();
            if let Some(h) = top.filter(|h| *h > threshold) {
                let a = (&xw[1] - &xw[0]) * (&yw[1] - &yw[0]);
                weighted += &a * h;
                area += a;
            }
        }
    }
    (area, weighted)
}

fn near(v: &BigRational, t: &BigRational, band: &BigRational) -> bool {
    (v - t).abs() < *band
}

/// Exact ground truth for every tile of `plan`, row-major.
pub fn analytic_truth(spec: &SceneSpec, plan: &TilingPlan, opts: &TruthOptions) -> Result<Vec<GroundTruth>> {
    spec.validate()?;
    let cell = q(spec.cell_size);
    let side = q(plan.factor as f64) * &cell;
    let tile_area = &side * &side;
    let threshold = q(opts.footprint_threshold);
    let bsf_band = q(opts.bsf_band);
    let hre_band = q(opts.hre_band);
    let psf_band = q(opts.psf_band);
    let mut out = Vec::with_capacity(plan.tile_count());
    for (i, j) in plan.tiles() {
        let (row0, col0) = plan.tile_origin(i, j);
        let x0 = q(col0 as f64) * &cell;
        let y0 = q(row0 as f64) * &cell;
        let x1 = &x0 + &side;
        let y1 = &y0 + &side;
        let (built, weighted) = built_area(&spec.buildings, (&x0, &x1), (&y0, &y1), &threshold);
        let pervious = disjoint_area(&spec.veg_patches, (&x0, &x1), (&y0, &y1))
            + disjoint_area(&spec.water_patches, (&x0, &x1), (&y0, &y1));
        let bsf = &built / &tile_area;
        let hre = (!built.is_zero()).then(|| &weighted / &built);
        let psf = &pervious / &tile_area;
        let stage1 = table1_label(&bsf, hre.as_ref());

        let near_bsf = BSF_THRESHOLDS.iter().any(|&(n, d)| near(&bsf, &dec(n, d), &bsf_band));
        let near_hre = hre
            .as_ref()
            .is_some_and(|h| HRE_THRESHOLDS.iter().any(|&t| near(h, &dec(t, 1), &hre_band)));
        let psf_t = dec(PSF_THRESHOLD.0, PSF_THRESHOLD.1);
        let near_psf = near(&psf, &psf_t, &psf_band);
        let boundary_flag = near_bsf || near_hre || near_psf;

        let mut stage1_admissible = BTreeSet::from([stage1]);
        if near_bsf || near_hre {
            for db in [-1i64, 0, 1] {
                let b = (&bsf + &bsf_band * dec(db, 1)).clamp(BigRational::zero(), dec(1, 1));
                for dh in [-1i64, 0, 1] {
                    let h = hre.as_ref().map(|h| h + &hre_band * dec(dh, 1));
                    stage1_admissible.insert(table1_label(&b, h.as_ref()));
                }
            }
        }
        let mut final_admissible = stage1_admissible.clone();
        let eligible = stage1_admissible
            .iter()
            .any(|l| matches!(l.number(), Some(1..=6 | 9)));
        if eligible && psf < &psf_t + &psf_band {
            final_admissible.insert(LczLabel::Lcz8);
        }

        out.push(GroundTruth {
            i,
            j,
            bsf: bsf.to_f64().unwrap_or(f64::NAN),
            hre: hre.as_ref().and_then(ToPrimitive::to_f64),
            psf: psf.to_f64().unwrap_or(f64::NAN),
            bsf_exact: bsf,
            hre_exact: hre,
            psf_exact: psf,
            stage1,
            boundary_flag,
            stage1_admissible,
            final_admissible,
        });
    }
    Ok(out)
}

/// Ground truth as CSV: `tile_i,tile_j,bsf,hre,psf,label,boundary`.
pub fn truth_csv(truth: &[GroundTruth]) -> String {
    let mut out = String::from("tile_i,tile_j,bsf,hre,psf,label,boundary\n");
    for t in truth {
        let hre = t.hre.map(|h| h.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.i, t.j, t.bsf, hre, t.psf, t.stage1, t.boundary_flag
        );
    }
    out
}

/// DSM height at map point `(x, y)` by bilinear interpolation between cell
/// centers. Corners with zero weight are ignored; `None` outside the grid or
/// when a weighted corner is nodata.
fn surface_height(dsm: &Raster<f64>, x: f64, y: f64) -> Option<f64> {
    let g = dsm.georef();
    let u = (x - g.origin_x) / g.cell_size - 0.5;
    let v = (g.origin_y - y) / g.cell_size - 0.5;
    let eps = 1e-9;
    if u < -eps || v < -eps || u > (dsm.width() - 1) as f64 + eps || v > (dsm.height() - 1) as f64 + eps {
        return None;
    }
    let u = u.clamp(0.0, (dsm.width() - 1) as f64);
    let v = v.clamp(0.0, (dsm.height() - 1) as f64);
    let (c0, r0) = (u.floor() as usize, v.floor() as usize);
    let (fu, fv) = (u - c0 as f64, v - r0 as f64);
    let mut total = 0.0;
    for (dr, wr) in [(0usize, 1.0 - fv), (1, fv)] {
        for (dc, wc) in [(0usize, 1.0 - fu), (1, fu)] {
            let w = wr * wc;
            if w <= 1e-12 {
                continue;
            }
            let z = dsm.value(r0 + dr, c0 + dc)?;
            total += w * z;
        }
    }
    Some(total)
}

/// Highest elevation angle (radians, at least 0) along the ray from the
/// center of `px = (row, col)` toward `azimuth` (0 = north, clockwise),
/// sampled every `step` meters out to `max_radius`.
pub fn horizon_raymarch_oracle(
    dsm: &Raster<f64>,
    px: (usize, usize),
    azimuth: f64,
    step: f64,
    max_radius: f64,
) -> Option<f64> {
    let z0 = dsm.value(px.0, px.1)?;
    let (x0, y0) = dsm.georef().cell_center(px.0, px.1);
    let (east, north) = (azimuth.sin(), azimuth.cos());
    let n_steps = (max_radius / step + 1e-9).floor() as usize;
    let mut elevation = 0.0f64;
    for s in 1..=n_steps {
        let t = s as f64 * step;
        if let Some(z) = surface_height(dsm, x0 + t * east, y0 + t * north) {
            elevation = elevation.max((z - z0).atan2(t));
        }
    }
    Some(elevation)
}

/// Dense reference SVF at `px = (row, col)`: `n_azimuths` rays (use at least
/// four times the evaluated density), sampled every `step` meters (at most a
/// tenth of a cell) out to `max_radius`.
pub fn svf_raymarch_oracle(
    dsm: &Raster<f64>,
    px: (usize, usize),
    n_azimuths: usize,
    step: f64,
    max_radius: f64,
) -> Option<f64> {
    dsm.value(px.0, px.1)?;
    let mut acc = 0.0;
    for k in 0..n_azimuths {
        let az = TAU * k as f64 / n_azimuths as f64;
        let beta = horizon_raymarch_oracle(dsm, px, az, step, max_radius)?;
        acc += beta.sin() * beta.sin();
    }
    Some(1.0 - acc / n_azimuths as f64)
}
