//! The two-stage rule table: the default thresholds, a few tiles, and a
//! custom rule set loaded from text.
//!
//!     cargo run --example classify_rules

use lczgrid::morpho::TileParams;
use lczgrid::rules::{classify_stage1, classify_tile_detailed, RuleThresholds};

fn tile(bsf: f64, hre: Option<f64>, svf: Option<f64>, psf: Option<f64>) -> TileParams {
    TileParams { bsf: Some(bsf), hre, svf, psf, valid: true }
}

fn main() -> lczgrid::error::Result<()> {
    let rules = RuleThresholds::default();
    print!("{}", rules.to_text());
    println!();

    let cases = [
        ("dense high-rise", tile(0.55, Some(40.0), Some(0.35), Some(0.05))),
        ("open low-rise", tile(0.20, Some(6.0), Some(0.80), Some(0.45))),
        ("paved low-rise", tile(0.22, Some(7.0), Some(0.85), Some(0.10))),
        ("sparse, no imagery", tile(0.08, Some(5.0), Some(0.90), None)),
        ("no buildings", tile(0.0, None, Some(1.0), Some(0.9))),
    ];
    for (name, p) in cases {
        let c = classify_tile_detailed(&p, &rules)?;
        println!(
            "{name:20} stage 1 {:>6}  final {:>6}{}",
            c.stage1.to_string(),
            c.label.to_string(),
            if c.stage2_skipped { "  (stage 2 skipped)" } else { "" }
        );
    }

    // Thresholds are data: tighten class 8 and move the 6/9 split.
    let mut custom = RuleThresholds::from_text(&rules.to_text())?;
    custom.set_entry("rules.class8.svf", "(0.8, inf)")?;
    custom.set_entry("rules.class6.bsf", "[0.17, 0.25]")?;
    println!();
    println!(
        "bsf 0.16, hre 5: default {}, custom {}",
        classify_stage1(0.16, Some(5.0), &rules)?,
        classify_stage1(0.16, Some(5.0), &custom)?
    );
    Ok(())
}
