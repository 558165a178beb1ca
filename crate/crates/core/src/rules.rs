//! Simplified two-stage LCZ rule set.
//!
//! Stage one assigns a built class from building surface fraction and height
//! of roughness elements; rows are tried in table order and the first match
//! wins. Stage two moves any class 1-6 or 9 tile to class 8 when it is open
//! (high sky view factor) and mostly impervious.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morpho::TileParams;
use crate::raster::{Cell, GeoRef, Raster, TilingPlan};

/// LCZ label of a coarse cell. Only built types are distinguished; every
/// other class collapses to `Others`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LczLabel {
    Lcz1,
    Lcz2,
    Lcz3,
    Lcz4,
    Lcz5,
    Lcz6,
    Lcz7,
    Lcz8,
    Lcz9,
    Lcz10,
    Others,
    NoData,
}

/// Integer code written for `Others` in label rasters.
pub const OTHERS_CODE: i32 = 0;
/// Integer nodata code written in label rasters.
pub const NODATA_CODE: i32 = -9999;

impl LczLabel {
    /// Class universe used for histograms and confusion matrices.
    pub const CLASSES: [LczLabel; 11] = [
        LczLabel::Lcz1,
        LczLabel::Lcz2,
        LczLabel::Lcz3,
        LczLabel::Lcz4,
        LczLabel::Lcz5,
        LczLabel::Lcz6,
        LczLabel::Lcz7,
        LczLabel::Lcz8,
        LczLabel::Lcz9,
        LczLabel::Lcz10,
        LczLabel::Others,
    ];

    pub fn from_number(n: u8) -> Option<Self> {
        use LczLabel::*;
        Some(match n {
            1 => Lcz1,
            2 => Lcz2,
            3 => Lcz3,
            4 => Lcz4,
            5 => Lcz5,
            6 => Lcz6,
            7 => Lcz7,
            8 => Lcz8,
            9 => Lcz9,
            10 => Lcz10,
            _ => return None,
        })
    }

    /// Built class number, if any.
    pub fn number(self) -> Option<u8> {
        use LczLabel::*;
        Some(match self {
            Lcz1 => 1,
            Lcz2 => 2,
            Lcz3 => 3,
            Lcz4 => 4,
            Lcz5 => 5,
            Lcz6 => 6,
            Lcz7 => 7,
            Lcz8 => 8,
            Lcz9 => 9,
            Lcz10 => 10,
            Others | NoData => return None,
        })
    }

    /// Raster code: class number, [`OTHERS_CODE`] or [`NODATA_CODE`].
    pub fn code(self) -> i32 {
        match self {
            LczLabel::Others => OTHERS_CODE,
            LczLabel::NoData => NODATA_CODE,
            l => l.number().unwrap() as i32,
        }
    }

    /// Inverse of [`code`](Self::code). Codes outside 1..=10 (natural classes
    /// of global products, for instance) read as `Others`.
    pub fn from_code(code: i32) -> Self {
        if code == NODATA_CODE {
            return LczLabel::NoData;
        }
        u8::try_from(code)
            .ok()
            .and_then(LczLabel::from_number)
            .unwrap_or(LczLabel::Others)
    }

    /// Whether stage two may move this label to class 8.
    pub fn is_stage2_eligible(self) -> bool {
        matches!(self.number(), Some(1..=6 | 9))
    }
}

impl fmt::Display for LczLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LczLabel::Others => f.write_str("Others"),
            LczLabel::NoData => f.write_str("NoData"),
            l => write!(f, "{}", l.number().unwrap()),
        }
    }
}

impl FromStr for LczLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Others" | "others" => Ok(LczLabel::Others),
            "NoData" | "nodata" => Ok(LczLabel::NoData),
            t => t
                .parse::<u8>()
                .ok()
                .and_then(LczLabel::from_number)
                .ok_or_else(|| Error::InvalidValue(format!("unknown LCZ label {t:?}"))),
        }
    }
}

impl Cell for LczLabel {}

/// Convert a numeric raster of label codes.
pub fn labels_from_codes(raster: &Raster<f64>) -> Raster<LczLabel> {
    raster.map(LczLabel::NoData, |v| LczLabel::from_code(v.round() as i32))
}

pub fn labels_to_codes(raster: &Raster<LczLabel>) -> Raster<f64> {
    raster.map(NODATA_CODE as f64, |l| l.code() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Unbounded,
    Inclusive(f64),
    Exclusive(f64),
}

/// A real interval with independently open or closed ends. Printed and parsed
/// in the usual notation: `[0.2, 0.4]`, `(25, inf)`, `(-inf, 0.2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: Bound,
    pub upper: Bound,
}

impl Interval {
    pub const fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lower: Bound::Inclusive(lo),
            upper: Bound::Inclusive(hi),
        }
    }

    pub const fn above(lo: f64) -> Self {
        Interval {
            lower: Bound::Exclusive(lo),
            upper: Bound::Unbounded,
        }
    }

    pub const fn below(hi: f64) -> Self {
        Interval {
            lower: Bound::Unbounded,
            upper: Bound::Exclusive(hi),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo = match self.lower {
            Bound::Unbounded => true,
            Bound::Inclusive(b) => x >= b,
            Bound::Exclusive(b) => x > b,
        };
        let hi = match self.upper {
            Bound::Unbounded => true,
            Bound::Inclusive(b) => x <= b,
            Bound::Exclusive(b) => x < b,
        };
        lo && hi
    }

    fn validate(&self) -> Result<()> {
        let value = |b: Bound| match b {
            Bound::Unbounded => None,
            Bound::Inclusive(v) | Bound::Exclusive(v) => Some(v),
        };
        for v in [value(self.lower), value(self.upper)].into_iter().flatten() {
            if !v.is_finite() {
                return Err(Error::Config(format!("interval {self} has a non-finite bound")));
            }
        }
        if let (Some(lo), Some(hi)) = (value(self.lower), value(self.upper)) {
            if lo > hi {
                return Err(Error::Config(format!("interval {self} has lower > upper")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lower {
            Bound::Unbounded => f.write_str("(-inf")?,
            Bound::Inclusive(v) => write!(f, "[{v}")?,
            Bound::Exclusive(v) => write!(f, "({v}")?,
        }
        match self.upper {
            Bound::Unbounded => f.write_str(", inf)"),
            Bound::Inclusive(v) => write!(f, ", {v}]"),
            Bound::Exclusive(v) => write!(f, ", {v})"),
        }
    }
}

impl FromStr for Interval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse interval {s:?}"));
        let s = s.trim();
        let (open, rest) = s.split_at(s.chars().next().map_or(0, char::len_utf8));
        let (body, close) = rest.split_at(rest.len().saturating_sub(1));
        let (lo, hi) = body.split_once(',').ok_or_else(bad)?;
        let (lo, hi) = (lo.trim(), hi.trim());
        let lower = match (open, lo) {
            ("(", "-inf") => Bound::Unbounded,
            ("(", v) => Bound::Exclusive(v.parse().map_err(|_| bad())?),
            ("[", v) => Bound::Inclusive(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        let upper = match (close, hi) {
            (")", "inf" | "+inf") => Bound::Unbounded,
            (")", v) => Bound::Exclusive(v.parse().map_err(|_| bad())?),
            ("]", v) => Bound::Inclusive(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        let interval = Interval { lower, upper };
        interval.validate()?;
        Ok(interval)
    }
}

impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One stage-one row: a class and the (BSF, HRE) box that selects it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOneRule {
    pub class: u8,
    pub bsf: Interval,
    pub hre: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleThresholds {
    /// Stage-one rows in evaluation order.
    pub stage1: [StageOneRule; 7],
    /// SVF range that qualifies a tile for class 8.
    pub class8_svf: Interval,
    /// PSF range that qualifies a tile for class 8.
    pub class8_psf: Interval,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        let row = |class, bsf, hre| StageOneRule { class, bsf, hre };
        let dense = Interval::above(0.4);
        let open = Interval::closed(0.2, 0.4);
        RuleThresholds {
            stage1: [
                row(1, dense, Interval::above(25.0)),
                row(2, dense, Interval::closed(10.0, 25.0)),
                row(3, dense, Interval::closed(3.0, 10.0)),
                row(4, open, Interval::above(25.0)),
                row(5, open, Interval::closed(10.0, 25.0)),
                row(6, Interval::closed(0.15, 0.25), Interval::closed(3.0, 10.0)),
                row(9, Interval::closed(0.05, 0.15), Interval::closed(3.0, 10.0)),
            ],
            class8_svf: Interval::above(0.7),
            class8_psf: Interval::below(0.2),
        }
    }
}

impl RuleThresholds {
    /// Flat `key = value` entries, in table order.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::with_capacity(16);
        for r in &self.stage1 {
            out.push((format!("rules.class{}.bsf", r.class), r.bsf.to_string()));
            out.push((format!("rules.class{}.hre", r.class), r.hre.to_string()));
        }
        out.push(("rules.class8.svf".into(), self.class8_svf.to_string()));
        out.push(("rules.class8.psf".into(), self.class8_psf.to_string()));
        out
    }

    /// Apply one `rules.*` entry. Returns `Ok(false)` when the key is not a rule key.
    pub fn set_entry(&mut self, key: &str, value: &str) -> Result<bool> {
        let Some(rest) = key.strip_prefix("rules.class") else {
            return Ok(false);
        };
        let (class, field) = rest
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("malformed rule key {key:?}")))?;
        let class: u8 = class
            .parse()
            .map_err(|_| Error::Config(format!("malformed rule key {key:?}")))?;
        let interval: Interval = value.parse()?;
        let slot = match (class, field) {
            (8, "svf") => &mut self.class8_svf,
            (8, "psf") => &mut self.class8_psf,
            (c, f) => {
                let row = self
                    .stage1
                    .iter_mut()
                    .find(|r| r.class == c)
                    .ok_or_else(|| Error::Config(format!("no rule for class {c} ({key})")))?;
                match f {
                    "bsf" => &mut row.bsf,
                    "hre" => &mut row.hre,
                    _ => return Err(Error::Config(format!("unknown rule field in {key:?}"))),
                }
            }
        };
        *slot = interval;
        Ok(true)
    }

    /// Plain-text rule section, one entry per line.
    pub fn to_text(&self) -> String {
        self.to_entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut t = RuleThresholds::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            if !t.set_entry(k.trim(), v.trim())? {
                return Err(Error::Config(format!("line {}: not a rule key: {}", n + 1, k.trim())));
            }
        }
        Ok(t)
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidValue(format!("{name} = {v} is outside [0, 1]")));
    }
    Ok(())
}

/// First stage-one row matching `(bsf, hre)`, or `Others`. A tile without
/// buildings (`hre` undefined) is always `Others`.
pub fn classify_stage1(bsf: f64, hre: Option<f64>, t: &RuleThresholds) -> Result<LczLabel> {
    check_fraction("bsf", bsf)?;
    let Some(hre) = hre else {
        return Ok(LczLabel::Others);
    };
    let label = t
        .stage1
        .iter()
        .find(|r| r.bsf.contains(bsf) && r.hre.contains(hre))
        .and_then(|r| LczLabel::from_number(r.class))
        .unwrap_or(LczLabel::Others);
    Ok(label)
}

pub fn classify_stage2(label: LczLabel, svf: f64, psf: f64, t: &RuleThresholds) -> Result<LczLabel> {
    check_fraction("svf", svf)?;
    check_fraction("psf", psf)?;
    if label.is_stage2_eligible() && t.class8_svf.contains(svf) && t.class8_psf.contains(psf) {
        Ok(LczLabel::Lcz8)
    } else {
        Ok(label)
    }
}

/// Outcome of classifying one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub label: LczLabel,
    pub stage1: LczLabel,
    /// Stage two could not run because SVF or PSF was undefined.
    pub stage2_skipped: bool,
}

pub fn classify_tile_detailed(p: &TileParams, t: &RuleThresholds) -> Result<Classification> {
    if !p.valid {
        return Ok(Classification {
            label: LczLabel::NoData,
            stage1: LczLabel::NoData,
            stage2_skipped: false,
        });
    }
    let bsf = p
        .bsf
        .ok_or_else(|| Error::InvalidValue("valid tile without BSF".into()))?;
    let stage1 = classify_stage1(bsf, p.hre, t)?;
    let (label, stage2_skipped) = match (p.svf, p.psf) {
        (Some(svf), Some(psf)) => (classify_stage2(stage1, svf, psf, t)?, false),
        _ => (stage1, stage1.is_stage2_eligible()),
    };
    Ok(Classification {
        label,
        stage1,
        stage2_skipped,
    })
}

pub fn classify_tile(p: &TileParams, t: &RuleThresholds) -> Result<LczLabel> {
    classify_tile_detailed(p, t).map(|c| c.label)
}

#[derive(Debug, Clone)]
pub struct ClassifiedMap {
    pub labels: Raster<LczLabel>,
    /// Tiles `(i, j)` whose stage-two check was skipped.
    pub stage2_skipped: Vec<(usize, usize)>,
}

/// Label a full coarse grid from row-major per-cell parameters.
pub fn classify_grid(params: &Raster<TileParams>, t: &RuleThresholds) -> Result<ClassifiedMap> {
    let mut labels = Raster::new(params.width(), params.height(), params.georef().clone(), LczLabel::NoData)?;
    let mut stage2_skipped = Vec::new();
    for i in 0..params.height() {
        for j in 0..params.width() {
            let c = classify_tile_detailed(&params.get(i, j), t)?;
            labels.set(i, j, c.label);
            if c.stage2_skipped {
                stage2_skipped.push((i, j));
            }
        }
    }
    Ok(ClassifiedMap {
        labels,
        stage2_skipped,
    })
}

/// Label every tile of `plan` onto a coarse grid of `width` x `height` cells.
/// `params` is row-major over the plan; coarse cells outside it stay `NoData`.
pub fn classify_map(
    params: &[TileParams],
    plan: &TilingPlan,
    coarse: GeoRef,
    width: usize,
    height: usize,
    t: &RuleThresholds,
) -> Result<ClassifiedMap> {
    if params.len() != plan.tile_count() {
        return Err(Error::GridMismatch(format!(
            "{} tile parameters for a plan of {} tiles",
            params.len(),
            plan.tile_count()
        )));
    }
    if width < plan.tiles_x || height < plan.tiles_y {
        return Err(Error::GridMismatch(format!(
            "coarse grid {width}x{height} smaller than plan {}x{}",
            plan.tiles_x, plan.tiles_y
        )));
    }
    let mut labels = Raster::new(width, height, coarse, LczLabel::NoData)?;
    let mut stage2_skipped = Vec::new();
    for ((i, j), p) in plan.tiles().zip(params) {
        let c = classify_tile_detailed(p, t)?;
        labels.set(i, j, c.label);
        if c.stage2_skipped {
            stage2_skipped.push((i, j));
        }
    }
    Ok(ClassifiedMap {
        labels,
        stage2_skipped,
    })
}
