use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lczgrid::config::RunConfig;
use lczgrid::error::Error;
use lczgrid::pipeline::{self, SynthOptions};
use lczgrid::synth::CityOptions;

/// Rule-based local climate zone mapping from fine building rasters, and
/// assessment of LCZ maps against it.
#[derive(Parser)]
#[command(name = "lczgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-tile BSF, HRE, SVF and PSF.
    Params(RunArgs),
    /// Label tiles with the rule table.
    Classify(RunArgs),
    /// Compare a candidate LCZ map with a reference map.
    Compare(RunArgs),
    /// Params, classify and (with a candidate map) compare.
    Run(RunArgs),
    /// Write a synthetic city and its ground truth.
    Synth(SynthArgs),
}

/// Every flag mirrors the config key of the same name.
#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    building_height: Option<String>,
    #[arg(long)]
    dsm: Option<String>,
    #[arg(long)]
    red: Option<String>,
    #[arg(long)]
    nir: Option<String>,
    #[arg(long)]
    water: Option<String>,
    #[arg(long)]
    reference_lcz: Option<String>,
    #[arg(long)]
    candidate_lcz: Option<String>,
    /// Directory written by `params`.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    footprint_threshold_m: Option<String>,
    #[arg(long)]
    svf_n_azimuths: Option<String>,
    #[arg(long)]
    svf_max_radius_m: Option<String>,
    #[arg(long)]
    svf_step_m: Option<String>,
    #[arg(long)]
    svf_refine: Option<String>,
    #[arg(long)]
    psf_ndvi_threshold: Option<String>,
    #[arg(long)]
    tile_size_m: Option<String>,
    #[arg(long)]
    tile_min_valid_fraction: Option<String>,
    /// Rule interval, e.g. `class8.svf=(0.6, inf)`. Repeatable.
    #[arg(long = "rule", value_name = "KEY=VALUE")]
    rules: Vec<String>,
    #[arg(long, short)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
}

impl RunArgs {
    fn load(self) -> Result<RunConfig, Error> {
        let mut overrides: Vec<(String, String)> = [
            ("input.building_height", self.building_height),
            ("input.dsm", self.dsm),
            ("input.red", self.red),
            ("input.nir", self.nir),
            ("input.water", self.water),
            ("input.reference_lcz", self.reference_lcz),
            ("input.candidate_lcz", self.candidate_lcz),
            ("input.params", self.params),
            ("footprint_threshold_m", self.footprint_threshold_m),
            ("svf.n_azimuths", self.svf_n_azimuths),
            ("svf.max_radius_m", self.svf_max_radius_m),
            ("svf.step_m", self.svf_step_m),
            ("svf.refine", self.svf_refine),
            ("psf.ndvi_threshold", self.psf_ndvi_threshold),
            ("tile.size_m", self.tile_size_m),
            ("tile.min_valid_fraction", self.tile_min_valid_fraction),
            ("output.dir", self.out),
            ("workers", self.workers),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
        for rule in self.rules {
            let (k, v) = rule
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--rule {rule:?}: expected KEY=VALUE")))?;
            let k = k.trim();
            let k = if k.starts_with("rules.") { k.to_string() } else { format!("rules.{k}") };
            overrides.push((k, v.to_string()));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    tiles_x: usize,
    #[arg(long, default_value_t = 10)]
    tiles_y: usize,
    #[arg(long, default_value_t = 100.0)]
    tile_size_m: f64,
    #[arg(long, default_value_t = 1.0)]
    cell_size_m: f64,
    /// Scene description (JSON) to rasterize instead of a random city.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Raster format: asc or tif.
    #[arg(long, default_value = "asc")]
    format: String,
    #[arg(long, short, default_value = lczgrid::config::DEFAULT_OUT_DIR)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Params(args) => {
            let cfg = args.load()?;
            let grid = pipeline::cmd_params(&cfg)?;
            if grid.ndvi_low_confidence_cells > 0 {
                eprintln!(
                    "lczgrid: warning: {} cells with red + nir = 0 given NDVI 0",
                    grid.ndvi_low_confidence_cells
                );
            }
            println!("params written to {}", cfg.out_dir.display());
        }
        Command::Classify(args) => {
            let cfg = args.load()?;
            let map = pipeline::cmd_classify(&cfg)?;
            println!(
                "{} tiles classified, {} without stage two, written to {}",
                map.labels.cells().len(),
                map.stage2_skipped.len(),
                cfg.out_dir.display()
            );
        }
        Command::Compare(args) => {
            let cfg = args.load()?;
            let report = pipeline::cmd_compare(&cfg)?;
            print!("{}", report.to_text());
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let out = pipeline::cmd_run(&cfg)?;
            if let Some(report) = out.report {
                print!("{}", report.to_text());
            }
            println!("run written to {}", cfg.out_dir.display());
        }
        Command::Synth(args) => {
            let opts = SynthOptions {
                seed: args.seed,
                city: CityOptions {
                    tiles_x: args.tiles_x,
                    tiles_y: args.tiles_y,
                    tile_size: args.tile_size_m,
                    cell_size: args.cell_size_m,
                },
                scene: args.scene,
                out_dir: args.out,
                extension: args.format,
            };
            pipeline::cmd_synth(&opts)?;
            println!("scene written to {}", opts.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("lczgrid: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(1),
    }
}
