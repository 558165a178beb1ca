//! The whole pipeline on files: write a synthetic city, run params and
//! classification from its config, then assess a degraded copy of the result.
//!
//!     cargo run --release --example end_to_end

use lczgrid::config::RunConfig;
use lczgrid::io::{read_labels, write_labels};
use lczgrid::pipeline::{cmd_run, cmd_synth, SynthOptions, LABELS_FILE, SYNTH_CONFIG};
use lczgrid::rules::LczLabel;
use lczgrid::synth::CityOptions;

fn main() -> lczgrid::error::Result<()> {
    let root = std::env::temp_dir().join("lczgrid-end-to-end");
    let city = root.join("city");
    cmd_synth(&SynthOptions {
        seed: 3,
        city: CityOptions { tiles_x: 5, tiles_y: 5, ..Default::default() },
        scene: None,
        out_dir: city.clone(),
        extension: "tif".into(),
    })?;

    let out = root.join("run");
    let set = |k: &str, v: String| (k.to_string(), v);
    let cfg = RunConfig::load(Some(&city.join(SYNTH_CONFIG)), &[set("output.dir", out.display().to_string())])?;
    let run = cmd_run(&cfg)?;
    println!("{} tiles, stage 2 skipped on {}", run.map.labels.cells().len(), run.map.stage2_skipped.len());

    // Pretend a coarse global product calls every class 9 tile class 6.
    let mut candidate = read_labels(out.join(LABELS_FILE))?;
    for i in 0..candidate.height() {
        for j in 0..candidate.width() {
            if candidate.get(i, j) == LczLabel::Lcz9 {
                candidate.set(i, j, LczLabel::Lcz6);
            }
        }
    }
    let candidate_path = root.join("candidate.asc");
    write_labels(&candidate_path, &candidate)?;

    let assessed = root.join("assessed");
    let cfg = RunConfig::load(
        Some(&city.join(SYNTH_CONFIG)),
        &[
            set("output.dir", assessed.display().to_string()),
            set("input.candidate_lcz", candidate_path.display().to_string()),
            set("input.params", out.display().to_string()),
        ],
    )?;
    let report = cmd_run(&cfg)?.report.expect("candidate given");
    print!("{}", report.to_text());
    println!("outputs in {}", root.display());
    Ok(())
}
