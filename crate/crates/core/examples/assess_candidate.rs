//! Compare a candidate LCZ map with a reference: class histograms, the
//! confusion matrix, row normalization by the diagonal and its flags.
//!
//!     cargo run --example assess_candidate

use lczgrid::assess::{class_counts, compare_report};
use lczgrid::raster::{GeoRef, Raster};
use lczgrid::rules::LczLabel::{self, *};

fn main() -> lczgrid::error::Result<()> {
    let reference = [
        Lcz9, Lcz9, Lcz9, Lcz6, Lcz6,
        Lcz9, Lcz9, Lcz6, Lcz6, Lcz5,
        Lcz4, Lcz4, Lcz5, Lcz8, Lcz8,
        Lcz1, Lcz4, Lcz9, Others, NoData,
    ];
    // A candidate that leans towards class 6 and mixes up 4 and 5.
    let candidate = [
        Lcz6, Lcz6, Lcz9, Lcz6, Lcz6,
        Lcz6, Lcz9, Lcz6, Lcz8, Lcz5,
        Lcz5, Lcz4, Lcz5, Lcz8, Lcz8,
        Lcz1, Lcz5, Lcz6, Others, Lcz6,
    ];
    let g = GeoRef::new(0.0, 0.0, 100.0, "EPSG:32618");
    let reference = Raster::from_vec(5, 4, g.clone(), NoData, reference.to_vec())?;
    let candidate = Raster::from_vec(5, 4, g, NoData, candidate.to_vec())?;

    let counts = class_counts(&reference);
    println!("reference: {} valid tiles, {} nodata", counts.valid_total(), counts.nodata);

    let report = compare_report(&candidate, &reference, &LczLabel::CLASSES, Vec::new())?;
    print!("{}", report.to_text());
    for f in &report.normalized.flags {
        println!("candidate {} is mostly reference {} ({:.2})", f.candidate, f.reference, f.value);
    }

    let dir = std::env::temp_dir().join("lczgrid-assess");
    report.write_to(&dir)?;
    println!("report written to {}", dir.display());
    Ok(())
}
