//! Run configuration.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. Keys:
//!
//! ```text
//! input.building_height  input.dsm  input.red  input.nir  input.water
//! input.reference_lcz  input.candidate_lcz  input.params
//! footprint_threshold_m
//! svf.n_azimuths  svf.max_radius_m  svf.step_m  svf.refine
//! psf.ndvi_threshold
//! tile.size_m  tile.min_valid_fraction
//! rules.class{1..6,9}.bsf  rules.class{1..6,9}.hre  rules.class8.svf  rules.class8.psf
//! output.dir  workers
//! ```
//!
//! Later settings win: defaults, then the file, then `LCZGRID_THREADS`,
//! then explicit overrides (command-line flags).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::morpho::MorphoConfig;
use crate::rules::RuleThresholds;

pub const THREADS_ENV: &str = "LCZGRID_THREADS";
pub const DEFAULT_TILE_SIZE: f64 = 100.0;
pub const DEFAULT_OUT_DIR: &str = "lczgrid-out";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    pub building_height: Option<PathBuf>,
    pub dsm: Option<PathBuf>,
    pub red: Option<PathBuf>,
    pub nir: Option<PathBuf>,
    pub water: Option<PathBuf>,
    pub reference_lcz: Option<PathBuf>,
    pub candidate_lcz: Option<PathBuf>,
    /// Directory written by a previous `params` run.
    pub params: Option<PathBuf>,
}

impl Inputs {
    fn slot(&mut self, name: &str) -> Option<&mut Option<PathBuf>> {
        Some(match name {
            "building_height" => &mut self.building_height,
            "dsm" => &mut self.dsm,
            "red" => &mut self.red,
            "nir" => &mut self.nir,
            "water" => &mut self.water,
            "reference_lcz" => &mut self.reference_lcz,
            "candidate_lcz" => &mut self.candidate_lcz,
            "params" => &mut self.params,
            _ => return None,
        })
    }

    /// Set inputs as `(name, path)`, in key order.
    pub fn entries(&self) -> Vec<(&'static str, &Path)> {
        [
            ("building_height", &self.building_height),
            ("dsm", &self.dsm),
            ("red", &self.red),
            ("nir", &self.nir),
            ("water", &self.water),
            ("reference_lcz", &self.reference_lcz),
            ("candidate_lcz", &self.candidate_lcz),
            ("params", &self.params),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|p| (k, p)))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub morpho: MorphoConfig,
    pub rules: RuleThresholds,
    /// Tile side in meters.
    pub tile_size: f64,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Inputs::default(),
            morpho: MorphoConfig::default(),
            rules: RuleThresholds::default(),
            tile_size: DEFAULT_TILE_SIZE,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            workers: default_workers(),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Defaults, then `file`, then the thread variable, then `overrides`.
    /// Relative input paths in the file are taken relative to the file.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.apply_text(&text, base)?;
        }
        if let Ok(v) = std::env::var(THREADS_ENV) {
            cfg.set(THREADS_ENV, "workers", &v)?;
        }
        for (k, v) in overrides {
            cfg.set(k, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply config-file text; relative paths are joined onto `base`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let v = if k.starts_with("input.") || k == "output.dir" {
                let p = Path::new(v);
                if p.is_relative() { base.join(p) } else { p.to_path_buf() }
                    .to_string_lossy()
                    .into_owned()
            } else {
                v.to_string()
            };
            self.set(&format!("line {}", n + 1), k, &v)?;
        }
        Ok(())
    }

    /// Apply a single setting. `origin` names where it came from, for errors.
    pub fn set(&mut self, origin: &str, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let wrap = |e: Error| match e {
            Error::Config(m) => Error::Config(format!("{origin}: {m}")),
            e => Error::Config(format!("{origin}: {e}")),
        };
        if let Some(name) = key.strip_prefix("input.") {
            let slot = self
                .inputs
                .slot(name)
                .ok_or_else(|| Error::Config(format!("{origin}: unknown input {key}")))?;
            *slot = (!value.is_empty()).then(|| PathBuf::from(value));
            return Ok(());
        }
        match key {
            "footprint_threshold_m" => self.morpho.footprint_threshold = number(key, value).map_err(wrap)?,
            "svf.n_azimuths" => self.morpho.svf.n_azimuths = number(key, value).map_err(wrap)?,
            "svf.max_radius_m" => self.morpho.svf.max_radius = number(key, value).map_err(wrap)?,
            "svf.step_m" => self.morpho.svf.step = number(key, value).map_err(wrap)?,
            "svf.refine" => self.morpho.svf.refine = number(key, value).map_err(wrap)?,
            "psf.ndvi_threshold" => self.morpho.ndvi_threshold = number(key, value).map_err(wrap)?,
            "tile.min_valid_fraction" => self.morpho.min_valid_fraction = number(key, value).map_err(wrap)?,
            "tile.size_m" => self.tile_size = number(key, value).map_err(wrap)?,
            "output.dir" => self.out_dir = PathBuf::from(value),
            "workers" => {
                self.workers = number(key, value).map_err(wrap)?;
                if self.workers == 0 {
                    return Err(Error::Config(format!("{origin}: workers must be at least 1")));
                }
            }
            _ => {
                if !self.rules.set_entry(key, value).map_err(wrap)? {
                    return Err(Error::Config(format!("{origin}: unknown key {key}")));
                }
            }
        }
        Ok(())
    }

    /// Domain checks that do not need the input rasters.
    pub fn validate(&self) -> Result<()> {
        if !(self.tile_size.is_finite() && self.tile_size > 0.0) {
            return Err(Error::Config(format!(
                "tile.size_m must be positive, got {}",
                self.tile_size
            )));
        }
        // The step-versus-cell check runs again once the DSM is loaded.
        self.morpho.validate(f64::INFINITY)
    }

    /// Settings that determine outputs, as `(key, value)` in a fixed order.
    /// The worker count and output directory are left out: neither changes
    /// any result.
    pub fn effective_entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .inputs
            .entries()
            .into_iter()
            .map(|(k, p)| (format!("input.{k}"), p.display().to_string()))
            .collect();
        let m = &self.morpho;
        out.extend([
            ("footprint_threshold_m".to_string(), m.footprint_threshold.to_string()),
            ("svf.n_azimuths".to_string(), m.svf.n_azimuths.to_string()),
            ("svf.max_radius_m".to_string(), m.svf.max_radius.to_string()),
            ("svf.step_m".to_string(), m.svf.step.to_string()),
            ("svf.refine".to_string(), m.svf.refine.to_string()),
            ("psf.ndvi_threshold".to_string(), m.ndvi_threshold.to_string()),
            ("tile.size_m".to_string(), self.tile_size.to_string()),
            ("tile.min_valid_fraction".to_string(), m.min_valid_fraction.to_string()),
        ]);
        out.extend(self.rules.to_entries());
        out
    }

    /// Effective settings as config-file text; loading it reproduces them.
    pub fn effective_text(&self) -> String {
        self.effective_entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, name: &'static str) -> Result<&'a Path> {
        path.as_deref().ok_or(Error::MissingInput(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::Interval;

    #[test]
    fn file_then_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# demo\ninput.dsm = dsm.asc\nsvf.n_azimuths = 16  # fewer rays\nrules.class8.svf = (0.6, inf)\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.inputs.dsm.as_deref(), Some(Path::new("/data/dsm.asc")));
        assert_eq!(cfg.morpho.svf.n_azimuths, 16);
        assert_eq!(cfg.rules.class8_svf, Interval::above(0.6));
        cfg.set("flag", "svf.n_azimuths", "8").unwrap();
        assert_eq!(cfg.morpho.svf.n_azimuths, 8);
    }

    #[test]
    fn effective_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("t", "input.dsm", "/x/dsm.asc").unwrap();
        cfg.set("t", "rules.class6.bsf", "[0.1, 0.3]").unwrap();
        cfg.set("t", "tile.size_m", "50").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.effective_text(), Path::new("/")).unwrap();
        back.workers = cfg.workers;
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_settings() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("t", "svf.n_azimuths", "many").is_err());
        assert!(cfg.set("t", "colour", "red").is_err());
        assert!(cfg.set("t", "input.lidar", "x").is_err());
        assert!(cfg.set("t", "workers", "0").is_err());
        assert!(cfg.apply_text("just words\n", Path::new("")).is_err());
        cfg.set("t", "tile.size_m", "-5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_input_message() {
        let cfg = RunConfig::default();
        let err = cfg.require(&cfg.inputs.dsm, "dsm").unwrap_err();
        assert_eq!(err.to_string(), "dsm required");
        assert_eq!(err.exit_code(), 2);
    }
}
