//! The `params`, `classify`, `compare`, `run` and `synth` commands.
//!
//! Each command writes its outputs plus a `manifest.json` into the output
//! directory. Manifests record the effective configuration (which, saved as
//! a config file, reproduces the run), its SHA-256, and input checksums.
//! Nothing time- or machine-dependent is recorded, so identical runs produce
//! identical directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::assess::{compare_report, Report};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{read_labels, read_raster, write_labels, write_raster};
use crate::morpho::{compute_params, ndvi_raster, ParamInputs, TileParams};
use crate::raster::{plan_tiling, Raster, TilingPlan};
use crate::rules::{classify_grid, ClassifiedMap, LczLabel};
use crate::synth::{analytic_truth, random_city, rasterize, truth_csv, CityOptions, SceneSpec, TruthOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
pub const PARAMS_CSV: &str = "params.csv";
pub const LABELS_FILE: &str = "lcz.asc";
pub const CLASSIFICATION_JSON: &str = "classification.json";
/// Parameter rasters written by `params`, in CSV order.
pub const PARAM_NAMES: [&str; 4] = ["bsf", "hre", "svf", "psf"];

const PARAM_NODATA: f64 = -9999.0;

/// Per-cell parameters on the coarse grid. Cells outside the tiling plan,
/// and tiles with too little valid input, are [`TileParams::invalid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub params: Raster<TileParams>,
    /// NDVI cells where red + nir was zero.
    pub ndvi_low_confidence_cells: usize,
}

fn same_size(tile: f64, cell: f64) -> bool {
    (tile - cell).abs() <= 1e-9 * tile.abs().max(cell.abs())
}

/// Read the fine inputs and compute parameters for every tile.
pub fn compute_param_grid(cfg: &RunConfig) -> Result<ParamGrid> {
    let heights = read_raster(cfg.require(&cfg.inputs.building_height, "building_height")?)?;
    let dsm = read_raster(cfg.require(&cfg.inputs.dsm, "dsm")?)?;
    let ndvi = match (&cfg.inputs.red, &cfg.inputs.nir) {
        (Some(red), Some(nir)) => Some(ndvi_raster(&read_raster(red)?, &read_raster(nir)?)?),
        (None, None) => None,
        _ => return Err(Error::Config("red and nir must be given together".into())),
    };
    let water = cfg.inputs.water.as_deref().map(read_raster).transpose()?;

    let (plan, georef, width, height) = match &cfg.inputs.candidate_lcz {
        Some(path) => {
            let coarse = read_labels(path)?;
            if !same_size(cfg.tile_size, coarse.cell_size()) {
                return Err(Error::Config(format!(
                    "tile.size_m {} differs from the {} m cells of {}",
                    cfg.tile_size,
                    coarse.cell_size(),
                    path.display()
                )));
            }
            let plan = plan_tiling(&heights, &coarse)?;
            (plan, coarse.georef().clone(), coarse.width(), coarse.height())
        }
        None => {
            let (plan, georef) = TilingPlan::for_tile_size(&heights, cfg.tile_size)?;
            (plan, georef, plan.tiles_x, plan.tiles_y)
        }
    };
    let inputs = ParamInputs {
        building_height: &heights,
        dsm: &dsm,
        ndvi: ndvi.as_ref().map(|n| &n.ndvi),
        water: water.as_ref(),
    };
    let tiles = compute_params(&inputs, &plan, &cfg.morpho, cfg.workers)?;
    let mut params = Raster::new(width, height, georef, TileParams::invalid())?;
    for ((i, j), p) in plan.tiles().zip(tiles) {
        params.set(i, j, p);
    }
    Ok(ParamGrid {
        params,
        ndvi_low_confidence_cells: ndvi.map_or(0, |n| n.low_confidence_cells),
    })
}

impl ParamGrid {
    fn field(p: &TileParams, name: &str) -> Option<f64> {
        match name {
            "bsf" => p.bsf,
            "hre" => p.hre,
            "svf" => p.svf,
            _ => p.psf,
        }
    }

    /// One coarse raster per parameter, undefined values as nodata.
    pub fn rasters(&self) -> Vec<(&'static str, Raster<f64>)> {
        PARAM_NAMES
            .iter()
            .map(|&name| {
                let r = self
                    .params
                    .map(PARAM_NODATA, |p| Self::field(&p, name).unwrap_or(PARAM_NODATA));
                (name, r)
            })
            .collect()
    }

    /// `tile_i,tile_j,name,value` rows for valid tiles; undefined values are
    /// left empty.
    pub fn csv(&self) -> String {
        let mut out = String::from("tile_i,tile_j,name,value\n");
        for i in 0..self.params.height() {
            for j in 0..self.params.width() {
                let p = self.params.get(i, j);
                if !p.valid {
                    continue;
                }
                for name in PARAM_NAMES {
                    let v = Self::field(&p, name).map(|v| v.to_string()).unwrap_or_default();
                    let _ = writeln!(out, "{i},{j},{name},{v}");
                }
            }
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<String>> {
        let mut files = Vec::new();
        for (name, r) in self.rasters() {
            let file = format!("{name}.asc");
            write_raster(dir.join(&file), &r)?;
            files.push(file);
        }
        write_file(&dir.join(PARAMS_CSV), &self.csv())?;
        files.push(PARAMS_CSV.to_string());
        Ok(files)
    }

    /// Load the rasters written by [`write_to`](Self::write_to). A tile is
    /// valid when its BSF is defined.
    pub fn read_from(dir: &Path) -> Result<Self> {
        let mut rasters = Vec::with_capacity(4);
        for name in PARAM_NAMES {
            rasters.push(read_raster(dir.join(format!("{name}.asc")))?);
        }
        let (w, h) = (rasters[0].width(), rasters[0].height());
        if rasters.iter().any(|r| !r.is_congruent(&rasters[0])) {
            return Err(Error::GridMismatch(format!(
                "parameter rasters in {} differ in grid",
                dir.display()
            )));
        }
        let mut params = Raster::new(w, h, rasters[0].georef().clone(), TileParams::invalid())?;
        for i in 0..h {
            for j in 0..w {
                let bsf = rasters[0].value(i, j);
                params.set(
                    i,
                    j,
                    TileParams {
                        bsf,
                        hre: rasters[1].value(i, j),
                        svf: rasters[2].value(i, j),
                        psf: rasters[3].value(i, j),
                        valid: bsf.is_some(),
                    },
                );
            }
        }
        Ok(ParamGrid {
            params,
            ndvi_low_confidence_cells: 0,
        })
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn input_checksums(cfg: &RunConfig) -> Result<Vec<serde_json::Value>> {
    let mut out = Vec::new();
    for (name, path) in cfg.inputs.entries() {
        if path.is_dir() {
            for p in PARAM_NAMES {
                let file = path.join(format!("{p}.asc"));
                out.push(json!({
                    "name": format!("{name}.{p}"),
                    "path": file.display().to_string(),
                    "sha256": sha256_file(&file)?,
                }));
            }
        } else {
            out.push(json!({
                "name": name,
                "path": path.display().to_string(),
                "sha256": sha256_file(path)?,
            }));
        }
    }
    Ok(out)
}

/// Write `manifest.json` for `command` into the output directory.
pub fn write_manifest(cfg: &RunConfig, command: &str, outputs: &[String]) -> Result<()> {
    let text = cfg.effective_text();
    let manifest = json!({
        "tool": "lczgrid",
        "version": VERSION,
        "command": command,
        "config_sha256": hex::encode(Sha256::digest(text.as_bytes())),
        "config": text,
        "inputs": input_checksums(cfg)?,
        "outputs": outputs,
    });
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&cfg.out_dir.join(MANIFEST), &body)
}

/// `params`: compute and write the parameter grids.
pub fn cmd_params(cfg: &RunConfig) -> Result<ParamGrid> {
    let grid = compute_param_grid(cfg)?;
    create_dir(&cfg.out_dir)?;
    let files = grid.write_to(&cfg.out_dir)?;
    write_manifest(cfg, "params", &files)?;
    Ok(grid)
}

/// Parameters from `input.params` when set, otherwise computed.
pub fn load_or_compute_params(cfg: &RunConfig) -> Result<ParamGrid> {
    match &cfg.inputs.params {
        Some(dir) => ParamGrid::read_from(dir),
        None => compute_param_grid(cfg),
    }
}

pub fn classification_json(cfg: &RunConfig, map: &ClassifiedMap) -> String {
    let g = map.labels.georef();
    let thresholds: serde_json::Map<String, serde_json::Value> = cfg
        .rules
        .to_entries()
        .into_iter()
        .map(|(k, v)| (k, v.into()))
        .collect();
    let counts: serde_json::Map<String, serde_json::Value> = LczLabel::CLASSES
        .iter()
        .chain([&LczLabel::NoData])
        .map(|&l| {
            let n = map.labels.cells().iter().filter(|&&c| c == l).count();
            (l.to_string(), n.into())
        })
        .collect();
    let doc = json!({
        "grid": {
            "width": map.labels.width(),
            "height": map.labels.height(),
            "origin_x": g.origin_x,
            "origin_y": g.origin_y,
            "cell_size": g.cell_size,
            "crs": g.crs_id,
        },
        "thresholds": thresholds,
        "label_counts": counts,
        "stage2_skipped": map.stage2_skipped.iter().map(|&(i, j)| [i, j]).collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&doc).expect("classification serializes") + "\n"
}

fn write_classification(cfg: &RunConfig, map: &ClassifiedMap) -> Result<Vec<String>> {
    write_labels(cfg.out_dir.join(LABELS_FILE), &map.labels)?;
    write_file(&cfg.out_dir.join(CLASSIFICATION_JSON), &classification_json(cfg, map))?;
    Ok(vec![LABELS_FILE.to_string(), CLASSIFICATION_JSON.to_string()])
}

/// `classify`: label the coarse grid.
pub fn cmd_classify(cfg: &RunConfig) -> Result<ClassifiedMap> {
    let grid = load_or_compute_params(cfg)?;
    let map = classify_grid(&grid.params, &cfg.rules)?;
    create_dir(&cfg.out_dir)?;
    let files = write_classification(cfg, &map)?;
    write_manifest(cfg, "classify", &files)?;
    Ok(map)
}

fn report_files() -> Vec<String> {
    ["report.json", "report.txt", "confusion.csv", "normalized.csv"]
        .map(String::from)
        .to_vec()
}

/// `compare`: assess `input.candidate_lcz` against `input.reference_lcz`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Report> {
    let reference = read_labels(cfg.require(&cfg.inputs.reference_lcz, "reference_lcz")?)?;
    let candidate = read_labels(cfg.require(&cfg.inputs.candidate_lcz, "candidate_lcz")?)?;
    let report = compare_report(&candidate, &reference, &LczLabel::CLASSES, cfg.effective_entries())?;
    create_dir(&cfg.out_dir)?;
    report.write_to(&cfg.out_dir)?;
    write_manifest(cfg, "compare", &report_files())?;
    Ok(report)
}

/// Outputs of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: ParamGrid,
    pub map: ClassifiedMap,
    pub report: Option<Report>,
}

/// `run`: parameters, classification, and, when a candidate map is given,
/// its assessment against the classification just produced.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    let params = load_or_compute_params(cfg)?;
    let map = classify_grid(&params.params, &cfg.rules)?;
    create_dir(&cfg.out_dir)?;
    let mut files = if cfg.inputs.params.is_none() {
        params.write_to(&cfg.out_dir)?
    } else {
        Vec::new()
    };
    files.extend(write_classification(cfg, &map)?);
    let report = match &cfg.inputs.candidate_lcz {
        Some(path) => {
            let candidate = read_labels(path)?;
            let report = compare_report(&candidate, &map.labels, &LczLabel::CLASSES, cfg.effective_entries())?;
            report.write_to(&cfg.out_dir)?;
            files.extend(report_files());
            Some(report)
        }
        None => None,
    };
    write_manifest(cfg, "run", &files)?;
    Ok(RunOutput { params, map, report })
}

/// Settings for `synth`.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub city: CityOptions,
    /// Use this scene instead of generating one.
    pub scene: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Raster file extension, `asc` or `tif`.
    pub extension: String,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 0,
            city: CityOptions::default(),
            scene: None,
            out_dir: PathBuf::from(crate::config::DEFAULT_OUT_DIR),
            extension: "asc".to_string(),
        }
    }
}

pub const TRUTH_CSV: &str = "truth.csv";
pub const SCENE_JSON: &str = "scene.json";
pub const SYNTH_CONFIG: &str = "lczgrid.conf";

/// `synth`: write a scene's five rasters, its ground truth, the scene
/// itself, and a config file pointing at the rasters.
pub fn cmd_synth(opts: &SynthOptions) -> Result<SceneSpec> {
    if !matches!(opts.extension.as_str(), "asc" | "tif") {
        return Err(Error::Config(format!(
            "raster format must be asc or tif, got {:?}",
            opts.extension
        )));
    }
    let spec = match &opts.scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            SceneSpec::from_json(&text)?
        }
        None => random_city(opts.seed, &opts.city),
    };
    let rasters = rasterize(&spec)?;
    let (plan, _) = TilingPlan::for_tile_size(&rasters.building_height, opts.city.tile_size)?;
    let truth = analytic_truth(&spec, &plan, &TruthOptions::default())?;
    let dir = &opts.out_dir;
    create_dir(dir)?;
    let mut conf = String::new();
    for (name, r) in [
        ("building_height", &rasters.building_height),
        ("dsm", &rasters.dsm),
        ("red", &rasters.red),
        ("nir", &rasters.nir),
        ("water", &rasters.water),
    ] {
        let file = format!("{name}.{}", opts.extension);
        write_raster(dir.join(&file), r)?;
        let _ = writeln!(conf, "input.{name} = {file}");
    }
    let _ = writeln!(conf, "tile.size_m = {}", opts.city.tile_size);
    write_file(&dir.join(SYNTH_CONFIG), &conf)?;
    write_file(&dir.join(TRUTH_CSV), &truth_csv(&truth))?;
    write_file(&dir.join(SCENE_JSON), &(spec.to_json() + "\n"))?;
    Ok(spec)
}
