//! Per-tile morphometric parameters: building surface fraction (BSF), height
//! of roughness elements (HRE), sky view factor (SVF) and pervious surface
//! fraction (PSF).
//!
//! SVF uses the isotropic-sky horizon formula
//! `1 - (1/N) * sum(sin^2(beta_k))` over `N` evenly spaced azimuths, where
//! `beta_k` is the highest elevation angle seen along a ray marched through
//! the bilinearly interpolated DSM. Azimuth 0 points north (up the grid) and
//! increases clockwise.
//!
//! Rays are sampled every `step / refine` meters. The horizon is the exact
//! maximum over that fixed set of samples, so raising any surface never
//! lowers it; the fast kernel only skips intervals it can prove cannot
//! raise the current maximum.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{tile_view, valid_fraction, Raster, TileView, TilingPlan};

/// Height above which a cell counts as building, in meters.
pub const DEFAULT_FOOTPRINT_THRESHOLD: f64 = 2.0;
/// NDVI at or above which a cell counts as pervious.
pub const DEFAULT_NDVI_THRESHOLD: f64 = 0.2;
/// Tiles with a smaller valid fraction in any input are nodata.
pub const DEFAULT_MIN_VALID_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvfConfig {
    pub n_azimuths: usize,
    /// Ray length in meters.
    pub max_radius: f64,
    /// Radial sampling interval in meters.
    pub step: f64,
    /// Samples per step; the ray is sampled every `step / refine` meters.
    #[serde(default = "default_refine")]
    pub refine: usize,
}

fn default_refine() -> usize {
    4
}

impl Default for SvfConfig {
    fn default() -> Self {
        SvfConfig {
            n_azimuths: 32,
            max_radius: 100.0,
            step: 1.0,
            refine: default_refine(),
        }
    }
}

impl SvfConfig {
    pub fn validate(&self, cell_size: f64) -> Result<()> {
        if self.n_azimuths < 4 {
            return Err(Error::Config(format!(
                "svf.n_azimuths must be at least 4, got {}",
                self.n_azimuths
            )));
        }
        if !(self.max_radius.is_finite() && self.max_radius > 0.0) {
            return Err(Error::Config(format!(
                "svf.max_radius_m must be positive, got {}",
                self.max_radius
            )));
        }
        if !(self.step > 0.0 && self.step <= cell_size) {
            return Err(Error::Config(format!(
                "svf.step_m must be in (0, {cell_size}], got {}",
                self.step
            )));
        }
        if !(1..=64).contains(&self.refine) {
            return Err(Error::Config(format!(
                "svf.refine must be in [1, 64], got {}",
                self.refine
            )));
        }
        Ok(())
    }

    fn azimuth(&self, k: usize) -> f64 {
        TAU * k as f64 / self.n_azimuths as f64
    }

    fn n_steps(&self) -> usize {
        // Tolerate radius/step ratios that land a hair under an integer.
        (self.max_radius / self.step + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphoConfig {
    pub footprint_threshold: f64,
    pub svf: SvfConfig,
    pub ndvi_threshold: f64,
    pub min_valid_fraction: f64,
}

impl Default for MorphoConfig {
    fn default() -> Self {
        MorphoConfig {
            footprint_threshold: DEFAULT_FOOTPRINT_THRESHOLD,
            svf: SvfConfig::default(),
            ndvi_threshold: DEFAULT_NDVI_THRESHOLD,
            min_valid_fraction: DEFAULT_MIN_VALID_FRACTION,
        }
    }
}

impl MorphoConfig {
    pub fn validate(&self, cell_size: f64) -> Result<()> {
        if !(self.footprint_threshold.is_finite() && self.footprint_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "footprint_threshold_m must be non-negative, got {}",
                self.footprint_threshold
            )));
        }
        if !(-1.0..=1.0).contains(&self.ndvi_threshold) {
            return Err(Error::Config(format!(
                "psf.ndvi_threshold must be in [-1, 1], got {}",
                self.ndvi_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return Err(Error::Config(format!(
                "tile.min_valid_fraction must be in [0, 1], got {}",
                self.min_valid_fraction
            )));
        }
        self.svf.validate(cell_size)
    }
}

/// Morphometric parameters of one tile. `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileParams {
    pub bsf: Option<f64>,
    /// Undefined exactly when the tile has no building cells.
    pub hre: Option<f64>,
    pub svf: Option<f64>,
    /// Undefined when no NDVI input was given.
    pub psf: Option<f64>,
    pub valid: bool,
}

impl crate::raster::Cell for TileParams {}

impl TileParams {
    pub fn invalid() -> Self {
        TileParams {
            bsf: None,
            hre: None,
            svf: None,
            psf: None,
            valid: false,
        }
    }
}

fn is_building(h: f64, threshold: f64) -> bool {
    h > threshold
}

/// Fraction of valid cells taller than `footprint_threshold`.
pub fn bsf(heights: &TileView<'_, f64>, footprint_threshold: f64) -> Option<f64> {
    let (mut valid, mut built) = (0usize, 0usize);
    for h in heights.valid() {
        valid += 1;
        built += usize::from(is_building(h, footprint_threshold));
    }
    (valid > 0).then(|| built as f64 / valid as f64)
}

/// Mean height of building cells. Cells share one area, so this is the
/// area-weighted mean building height.
pub fn hre(heights: &TileView<'_, f64>, footprint_threshold: f64) -> Option<f64> {
    let (mut n, mut sum) = (0usize, 0.0);
    for h in heights.valid().filter(|&h| is_building(h, footprint_threshold)) {
        n += 1;
        sum += h;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Offset (in cells) of a point `r` meters from a pixel center along
/// `azimuth`, split into integer and fractional parts per axis.
#[derive(Debug, Clone, Copy)]
struct RayOffset {
    drow: isize,
    frow: f64,
    dcol: isize,
    fcol: f64,
}

impl RayOffset {
    /// Bilinear weights of the corners (r0,c0), (r0,c1), (r1,c0), (r1,c1).
    fn weights(&self) -> [f64; 4] {
        [
            (1.0 - self.frow) * (1.0 - self.fcol),
            (1.0 - self.frow) * self.fcol,
            self.frow * (1.0 - self.fcol),
            self.frow * self.fcol,
        ]
    }
}

fn ray_offset(azimuth: f64, r: f64, cell_size: f64) -> RayOffset {
    let split = |d: f64| {
        // Snap round-off from sin/cos at the cardinal directions.
        let nearest = d.round();
        let d = if (d - nearest).abs() < 1e-9 { nearest } else { d };
        let whole = d.floor();
        (whole as isize, d - whole)
    };
    let (drow, frow) = split(-r * azimuth.cos() / cell_size);
    let (dcol, fcol) = split(r * azimuth.sin() / cell_size);
    RayOffset {
        drow,
        frow,
        dcol,
        fcol,
    }
}

/// Bilinear DSM value at `offset` from `(row, col)`; `None` outside the grid
/// or when a contributing corner is nodata.
fn sample_bilinear(dsm: &Raster<f64>, row: usize, col: usize, o: RayOffset) -> Option<f64> {
    let r0 = row as isize + o.drow;
    let c0 = col as isize + o.dcol;
    let r1 = r0 + isize::from(o.frow > 0.0);
    let c1 = c0 + isize::from(o.fcol > 0.0);
    if r0 < 0 || c0 < 0 || r1 >= dsm.height() as isize || c1 >= dsm.width() as isize {
        return None;
    }
    let (r0, r1, c0, c1) = (r0 as usize, r1 as usize, c0 as usize, c1 as usize);
    let w = o.weights();
    Some(
        w[0] * dsm.value(r0, c0)?
            + w[1] * dsm.value(r0, c1)?
            + w[2] * dsm.value(r1, c0)?
            + w[3] * dsm.value(r1, c1)?,
    )
}

/// Highest elevation angle (radians, at least 0) seen from the center of
/// pixel `px = (row, col)` along `azimuth`. `None` if the pixel is nodata.
pub fn horizon_angle(
    dsm: &Raster<f64>,
    px: (usize, usize),
    azimuth: f64,
    cfg: &SvfConfig,
) -> Option<f64> {
    let (row, col) = px;
    let h0 = dsm.value(row, col)?;
    let cell = dsm.cell_size();
    let tangent = |r: f64| {
        sample_bilinear(dsm, row, col, ray_offset(azimuth, r, cell)).map(|h| (h - h0) * (1.0 / r))
    };
    let fine = cfg.step / cfg.refine as f64;
    let mut tmax = 0.0f64;
    for k in 1..=cfg.n_steps() {
        // Same radii as the kernel: the interval's fine samples, then its end.
        let radii = (1..cfg.refine).map(|m| (k - 1) as f64 * cfg.step + m as f64 * fine);
        for r in radii.chain([k as f64 * cfg.step]) {
            if let Some(t) = tangent(r) {
                tmax = tmax.max(t);
            }
        }
    }
    Some(tmax.atan())
}

/// Isotropic-sky SVF from horizon angles.
pub fn svf_from_horizons(angles: &[f64]) -> f64 {
    let sum: f64 = angles.iter().map(|b| b.sin().powi(2)).sum();
    1.0 - sum / angles.len() as f64
}

/// Sky view factor at one pixel.
pub fn svf_pixel(dsm: &Raster<f64>, px: (usize, usize), cfg: &SvfConfig) -> Option<f64> {
    dsm.value(px.0, px.1)?;
    let angles: Vec<f64> = (1..=cfg.n_azimuths)
        .map(|k| horizon_angle(dsm, px, cfg.azimuth(k), cfg).unwrap_or(0.0))
        .collect();
    Some(svf_from_horizons(&angles))
}

/// Maximum of `z` (row-major, NaN for nodata) over the square window of
/// half-width `half`, clamped at the edges. NaN is ignored; a window with no
/// data stays NaN.
fn max_filter(z: &[f64], width: usize, height: usize, half: usize) -> Vec<f64> {
    let max = |a: f64, b: f64| if b > a || a.is_nan() { b } else { a };
    let mut rows = vec![f64::NAN; z.len()];
    for r in 0..height {
        let line = &z[r * width..(r + 1) * width];
        for c in 0..width {
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(width - 1);
            rows[r * width + c] = line[lo..=hi].iter().fold(f64::NAN, |m, &v| max(m, v));
        }
    }
    let mut out = vec![f64::NAN; z.len()];
    for r in 0..height {
        let lo = r.saturating_sub(half);
        let hi = (r + half).min(height - 1);
        for c in 0..width {
            out[r * width + c] = (lo..=hi).fold(f64::NAN, |m, rr| max(m, rows[rr * width + c]));
        }
    }
    out
}

/// One precomputed ray sample, relative to the evaluated pixel.
#[derive(Debug, Clone, Copy)]
struct Sample {
    /// Linear index offset of the top-left bilinear corner.
    offset: isize,
    /// Offset to the second row (0 or raster width).
    row_step: isize,
    /// Offset to the second column (0 or 1).
    col_step: isize,
    w00: f64,
    w01: f64,
    w10: f64,
    w11: f64,
    inv_r: f64,
    /// In-bounds pixel range for which all corners exist.
    row_min: isize,
    row_max: isize,
    col_min: isize,
    col_max: isize,
}

/// Steps per group; a group is skipped whole when its window bound allows.
const GROUP: usize = 8;
/// Half-width of the window covering one interval (3x3).
const INTERVAL_HALF: usize = 1;
/// Half-width of the window covering one group (11x11).
const GROUP_HALF: usize = GROUP / 2 + 1;

/// Center of a max-filter window covering every bilinear corner of the
/// samples in a stretch of ray, relative to the evaluated pixel.
#[derive(Debug, Clone, Copy)]
struct Window {
    drow: isize,
    dcol: isize,
    /// `1 / r` at the stretch's first sample.
    inv_r: f64,
}

impl Window {
    /// Window centered so that it covers the corners of every point between
    /// radii `r0` and `r1` (at most `2 * half - 1` cells apart on each axis).
    fn covering(az: f64, r0: f64, r1: f64, first: f64, cell: f64, half: usize) -> Self {
        let a = ray_offset(az, r0, cell);
        let b = ray_offset(az, r1, cell);
        Window {
            drow: a.drow.min(b.drow) + half as isize,
            dcol: a.dcol.min(b.dcol) + half as isize,
            inv_r: 1.0 / first,
        }
    }
}

/// SVF evaluator with ray offsets and bilinear weights precomputed once per
/// DSM. Every pixel shares the same fractional sample positions, so each
/// sample costs four loads and a handful of multiplies.
///
/// Rays are pruned with height bounds: a global one (`reach_max`), one per
/// group of steps and one per interval between steps, the last two read
/// from max-filtered copies of the DSM. Pruning only skips samples that
/// provably cannot raise the horizon, so the result is the same as
/// [`svf_pixel`] up to float rounding.
#[derive(Debug, Clone)]
pub struct SvfKernel {
    /// DSM values with nodata replaced by NaN.
    z: Vec<f64>,
    /// Per cell, the 3x3 and 11x11 maxima of `z` (nodata ignored).
    zmax: Vec<[f64; 2]>,
    width: usize,
    height: usize,
    cell_size: f64,
    cfg: SvfConfig,
    /// `n_azimuths` rays of `n_steps` samples, azimuth-major.
    samples: Vec<Sample>,
    /// Per ray and step, the `refine - 1` samples inside the interval ending
    /// at that step.
    fine: Vec<Sample>,
    /// Per ray and step, the window bounding that interval's samples.
    intervals: Vec<Window>,
    /// Per ray and group of `GROUP` steps, the window bounding all samples in
    /// the group.
    groups: Vec<Window>,
    n_steps: usize,
    n_groups: usize,
}

impl SvfKernel {
    pub fn new(dsm: &Raster<f64>, cfg: SvfConfig) -> Result<Self> {
        cfg.validate(dsm.cell_size())?;
        let nodata = dsm.nodata();
        let plain: Vec<f64> = dsm
            .cells()
            .iter()
            .map(|&v| if v == nodata { f64::NAN } else { v })
            .collect();
        let (width, height) = (dsm.width() as isize, dsm.height() as isize);
        let cell = dsm.cell_size();
        let sample = |az: f64, r: f64| {
            let o = ray_offset(az, r, cell);
            let rs = isize::from(o.frow > 0.0);
            let cs = isize::from(o.fcol > 0.0);
            let w = o.weights();
            Sample {
                offset: o.drow * width + o.dcol,
                row_step: rs * width,
                col_step: cs,
                w00: w[0],
                w01: w[1],
                w10: w[2],
                w11: w[3],
                inv_r: 1.0 / r,
                row_min: -o.drow,
                row_max: height - 1 - o.drow - rs,
                col_min: -o.dcol,
                col_max: width - 1 - o.dcol - cs,
            }
        };
        let n_steps = cfg.n_steps();
        let n_groups = n_steps.div_ceil(GROUP);
        let per_interval = cfg.refine - 1;
        let step = cfg.step;
        let fine_step = step / cfg.refine as f64;
        let mut samples = Vec::with_capacity(cfg.n_azimuths * n_steps);
        let mut fine = Vec::with_capacity(cfg.n_azimuths * n_steps * per_interval);
        let mut intervals = Vec::with_capacity(cfg.n_azimuths * n_steps);
        let mut groups = Vec::with_capacity(cfg.n_azimuths * n_groups);
        // Step <= cell size, so points between two radii k steps apart have
        // corners spanning at most k + 2 rows and columns.
        for k in 1..=cfg.n_azimuths {
            let az = cfg.azimuth(k);
            for s in 1..=n_steps {
                samples.push(sample(az, s as f64 * step));
                for m in 1..cfg.refine {
                    fine.push(sample(az, (s - 1) as f64 * step + m as f64 * fine_step));
                }
                let r0 = (s - 1) as f64 * step;
                intervals.push(Window::covering(az, r0, s as f64 * step, r0 + fine_step, cell, INTERVAL_HALF));
            }
            for g in 0..n_groups {
                let r0 = (g * GROUP) as f64 * step;
                let r1 = (((g + 1) * GROUP).min(n_steps)) as f64 * step;
                groups.push(Window::covering(az, r0, r1, r0 + fine_step, cell, GROUP_HALF));
            }
        }
        let (w, h) = (dsm.width(), dsm.height());
        let near = max_filter(&plain, w, h, INTERVAL_HALF);
        let far = max_filter(&near, w, h, GROUP_HALF - INTERVAL_HALF);
        let zmax = near.into_iter().zip(far).map(|(n, f)| [n, f]).collect();
        Ok(SvfKernel {
            z: plain,
            zmax,
            width: w,
            height: h,
            cell_size: cell,
            cfg,
            samples,
            fine,
            intervals,
            groups,
            n_steps,
            n_groups,
        })
    }

    pub fn config(&self) -> &SvfConfig {
        &self.cfg
    }

    /// Highest DSM value any ray from the rectangle of pixels
    /// `rows x cols` can reach.
    pub fn reach_max(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
        let reach = (self.cfg.max_radius / self.cell_size).ceil() as usize + 1;
        let r0 = rows.start.saturating_sub(reach);
        let r1 = (rows.end + reach).min(self.height);
        let c0 = cols.start.saturating_sub(reach);
        let c1 = (cols.end + reach).min(self.width);
        let mut hmax = f64::NEG_INFINITY;
        for r in r0..r1 {
            for &v in &self.z[r * self.width + c0..r * self.width + c1] {
                // NaN compares false and is skipped.
                if v > hmax {
                    hmax = v;
                }
            }
        }
        hmax
    }

    /// SVF at `(row, col)`. `reach_max` must bound every DSM value the rays
    /// can sample (see [`reach_max`](Self::reach_max)).
    pub fn svf_at(&self, row: usize, col: usize, reach_max: f64) -> Option<f64> {
        let idx = row * self.width + col;
        let h0 = self.z[idx];
        if h0.is_nan() {
            return None;
        }
        let headroom = reach_max - h0;
        if headroom <= 0.0 {
            return Some(1.0);
        }
        let (row, col, idx) = (row as isize, col as isize, idx as isize);
        let (height, width) = (self.height as isize, self.width as isize);
        let z = &self.z[..];
        let zmax = &self.zmax[..];
        // Every sample of a pixel this far from the edges is in bounds.
        let margin = (self.cfg.max_radius / self.cell_size).ceil() as isize + 1;
        let interior = row >= margin && row < height - margin && col >= margin && col < width - margin;
        let tangent = |s: &Sample| {
            if !interior && (row < s.row_min || row > s.row_max || col < s.col_min || col > s.col_max) {
                return None;
            }
            let i = (idx + s.offset) as usize;
            let rs = s.row_step as usize;
            let cs = s.col_step as usize;
            let h = s.w00 * z[i] + s.w01 * z[i + cs] + s.w10 * z[i + rs] + s.w11 * z[i + rs + cs];
            Some((h - h0) * s.inv_r)
        };
        // Height bound of a window as a tangent. A window centered off the
        // raster is clamped onto it; the clamped window still covers every
        // in-bounds cell of the original. Windows wholly off the raster and
        // all-nodata windows give -inf / NaN, which never beat `tmax`.
        let bound = |w: &Window, level: usize, half: isize| {
            let r = row + w.drow;
            let c = col + w.dcol;
            if r < -half || r >= height + half || c < -half || c >= width + half {
                return f64::NEG_INFINITY;
            }
            let i = r.clamp(0, height - 1) * width + c.clamp(0, width - 1);
            (zmax[i as usize][level] - h0) * w.inv_r
        };
        let per_interval = self.cfg.refine - 1;
        let (n_steps, n_groups) = (self.n_steps, self.n_groups);
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n_groups);
        let mut sin2_sum = 0.0;
        for a in 0..self.cfg.n_azimuths {
            let ray = &self.samples[a * n_steps..][..n_steps];
            let groups = &self.groups[a * n_groups..][..n_groups];
            let fine = &self.fine[a * n_steps * per_interval..][..n_steps * per_interval];
            let intervals = &self.intervals[a * n_steps..][..n_steps];
            // Visit groups best bound first, so the horizon rises early and
            // most groups are ruled out without sampling.
            order.clear();
            for (g, w) in groups.iter().enumerate() {
                let b = bound(w, 1, GROUP_HALF as isize).min(headroom * w.inv_r);
                if b > 0.0 {
                    order.push((b, g));
                }
            }
            order.sort_unstable_by(|x, y| y.0.total_cmp(&x.0));
            let mut tmax = 0.0f64;
            for &(b, g) in &order {
                if b <= tmax {
                    break;
                }
                let steps = g * GROUP..((g + 1) * GROUP).min(n_steps);
                for s in &ray[steps.clone()] {
                    // NaN (nodata) fails the comparison and is skipped.
                    if let Some(t) = tangent(s) {
                        if t > tmax {
                            tmax = t;
                        }
                    }
                }
                if per_interval == 0 {
                    continue;
                }
                for k in steps {
                    if bound(&intervals[k], 0, INTERVAL_HALF as isize) <= tmax {
                        continue;
                    }
                    for s in &fine[k * per_interval..(k + 1) * per_interval] {
                        if let Some(t) = tangent(s) {
                            if t > tmax {
                                tmax = t;
                            }
                        }
                    }
                }
            }
            let t2 = tmax * tmax;
            sin2_sum += t2 / (1.0 + t2);
        }
        Some(1.0 - sin2_sum / self.cfg.n_azimuths as f64)
    }

    /// Mean SVF over the tile's valid non-building cells, or over all valid
    /// cells when every valid cell is a building. `None` without valid cells.
    pub fn svf_tile(
        &self,
        heights: &Raster<f64>,
        plan: &TilingPlan,
        i: usize,
        j: usize,
        footprint_threshold: f64,
    ) -> Result<Option<f64>> {
        if heights.width() != self.width || heights.height() != self.height {
            return Err(Error::GridMismatch(
                "building height raster and DSM differ in size".into(),
            ));
        }
        let window = tile_view(heights, plan, i, j)?;
        let (row0, col0) = window.origin();
        let n = window.size();
        let reach = self.reach_max(row0..row0 + n, col0..col0 + n);
        let mean_over = |roofs: bool| {
            let (mut sum, mut count) = (0.0, 0usize);
            for r in row0..row0 + n {
                for c in col0..col0 + n {
                    let roof = heights
                        .value(r, c)
                        .is_some_and(|h| is_building(h, footprint_threshold));
                    if roof != roofs {
                        continue;
                    }
                    if let Some(svf) = self.svf_at(r, c, reach) {
                        sum += svf;
                        count += 1;
                    }
                }
            }
            (count > 0).then(|| sum / count as f64)
        };
        Ok(mean_over(false).or_else(|| mean_over(true)))
    }
}

/// Tile SVF for a single tile. Prefer [`SvfKernel::svf_tile`] when
/// evaluating many tiles of one DSM.
pub fn svf_tile(
    dsm: &Raster<f64>,
    heights: &Raster<f64>,
    plan: &TilingPlan,
    i: usize,
    j: usize,
    cfg: &SvfConfig,
    footprint_threshold: f64,
) -> Result<Option<f64>> {
    SvfKernel::new(dsm, *cfg)?.svf_tile(heights, plan, i, j, footprint_threshold)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ndvi {
    pub value: f64,
    /// Set when `red + nir == 0` and the value was forced to 0.
    pub low_confidence: bool,
}

pub fn ndvi(red: f64, nir: f64) -> Result<Ndvi> {
    if !(red >= 0.0 && nir >= 0.0) {
        return Err(Error::InvalidValue(format!(
            "negative reflectance (red={red}, nir={nir})"
        )));
    }
    let sum = nir + red;
    if sum == 0.0 {
        return Ok(Ndvi {
            value: 0.0,
            low_confidence: true,
        });
    }
    Ok(Ndvi {
        value: (nir - red) / sum,
        low_confidence: false,
    })
}

#[derive(Debug, Clone)]
pub struct NdviRaster {
    pub ndvi: Raster<f64>,
    pub low_confidence_cells: usize,
}

/// Cellwise NDVI; nodata where either band is nodata.
pub fn ndvi_raster(red: &Raster<f64>, nir: &Raster<f64>) -> Result<NdviRaster> {
    if !red.is_congruent(nir) {
        return Err(Error::GridMismatch("red and nir rasters differ".into()));
    }
    let nodata = red.nodata();
    let mut low_confidence_cells = 0;
    let mut cells = Vec::with_capacity(red.cells().len());
    for row in 0..red.height() {
        for col in 0..red.width() {
            let v = match (red.value(row, col), nir.value(row, col)) {
                (Some(r), Some(n)) => {
                    let v = ndvi(r, n)?;
                    low_confidence_cells += usize::from(v.low_confidence);
                    v.value
                }
                _ => nodata,
            };
            cells.push(v);
        }
    }
    let ndvi = Raster::from_vec(red.width(), red.height(), red.georef().clone(), nodata, cells)?;
    Ok(NdviRaster {
        ndvi,
        low_confidence_cells,
    })
}

/// Fraction of valid NDVI cells that are vegetated (`ndvi >= threshold`)
/// or flagged as water.
pub fn psf(
    ndvi: &TileView<'_, f64>,
    water: Option<&TileView<'_, f64>>,
    ndvi_threshold: f64,
) -> Result<Option<f64>> {
    if let Some(w) = water {
        if w.size() != ndvi.size() {
            return Err(Error::GridMismatch("NDVI and water windows differ".into()));
        }
    }
    let (mut valid, mut pervious) = (0usize, 0usize);
    for r in 0..ndvi.size() {
        for c in 0..ndvi.size() {
            let Some(v) = ndvi.value(r, c) else { continue };
            valid += 1;
            let wet = water.and_then(|w| w.value(r, c)).is_some_and(|w| w != 0.0);
            pervious += usize::from(v >= ndvi_threshold || wet);
        }
    }
    Ok((valid > 0).then(|| pervious as f64 / valid as f64))
}

/// Fine-resolution inputs for parameter extraction. All rasters must be
/// congruent.
#[derive(Debug, Clone, Copy)]
pub struct ParamInputs<'a> {
    pub building_height: &'a Raster<f64>,
    pub dsm: &'a Raster<f64>,
    pub ndvi: Option<&'a Raster<f64>>,
    pub water: Option<&'a Raster<f64>>,
}

impl ParamInputs<'_> {
    pub fn validate(&self) -> Result<()> {
        let base = self.building_height;
        let others = [("dsm", Some(self.dsm)), ("ndvi", self.ndvi), ("water", self.water)];
        for (name, r) in others {
            if let Some(r) = r {
                if !base.is_congruent(r) {
                    return Err(Error::GridMismatch(format!(
                        "{name} raster is not congruent with the building height raster"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameters for tile `(i, j)` using a prepared SVF kernel over `inputs.dsm`.
pub fn tile_params_with(
    inputs: &ParamInputs<'_>,
    kernel: &SvfKernel,
    plan: &TilingPlan,
    i: usize,
    j: usize,
    cfg: &MorphoConfig,
) -> Result<TileParams> {
    let heights = tile_view(inputs.building_height, plan, i, j)?;
    let dsm = tile_view(inputs.dsm, plan, i, j)?;
    let ndvi = inputs.ndvi.map(|r| tile_view(r, plan, i, j)).transpose()?;
    let water = inputs.water.map(|r| tile_view(r, plan, i, j)).transpose()?;

    let fractions = [Some(&heights), Some(&dsm), ndvi.as_ref(), water.as_ref()];
    let enough = fractions
        .iter()
        .flatten()
        .all(|w| valid_fraction(w) >= cfg.min_valid_fraction);
    if !enough {
        return Ok(TileParams::invalid());
    }

    let bsf = bsf(&heights, cfg.footprint_threshold);
    let svf = kernel.svf_tile(inputs.building_height, plan, i, j, cfg.footprint_threshold)?;
    if bsf.is_none() || svf.is_none() {
        return Ok(TileParams::invalid());
    }
    let psf = match &ndvi {
        Some(n) => psf(n, water.as_ref(), cfg.ndvi_threshold)?,
        None => None,
    };
    Ok(TileParams {
        bsf,
        hre: hre(&heights, cfg.footprint_threshold),
        svf,
        psf,
        valid: true,
    })
}

pub fn tile_params(
    inputs: &ParamInputs<'_>,
    plan: &TilingPlan,
    i: usize,
    j: usize,
    cfg: &MorphoConfig,
) -> Result<TileParams> {
    inputs.validate()?;
    let kernel = SvfKernel::new(inputs.dsm, cfg.svf)?;
    tile_params_with(inputs, &kernel, plan, i, j, cfg)
}

/// Parameters for every tile of `plan`, row-major, computed on `workers`
/// threads. Output does not depend on the worker count.
pub fn compute_params(
    inputs: &ParamInputs<'_>,
    plan: &TilingPlan,
    cfg: &MorphoConfig,
    workers: usize,
) -> Result<Vec<TileParams>> {
    inputs.validate()?;
    cfg.validate(inputs.dsm.cell_size())?;
    let kernel = SvfKernel::new(inputs.dsm, cfg.svf)?;
    let tiles: Vec<(usize, usize)> = plan.tiles().collect();
    let run = || {
        tiles
            .par_iter()
            .map(|&(i, j)| tile_params_with(inputs, &kernel, plan, i, j, cfg))
            .collect::<Result<Vec<_>>>()
    };
    if workers <= 1 {
        return tiles
            .iter()
            .map(|&(i, j)| tile_params_with(inputs, &kernel, plan, i, j, cfg))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(run)
}
