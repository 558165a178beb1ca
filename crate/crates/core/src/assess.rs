//! Agreement between a candidate LCZ map and the rule-based reference.
//!
//! Confusion matrices put the candidate on rows and the reference on
//! columns. Row-normalizing by the diagonal gives, for each candidate class,
//! how often each reference class appears relative to agreement; an
//! off-diagonal value above 1 marks a class the candidate confuses more often
//! than it gets right.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rules::LczLabel;

pub const ORIENTATION: &str = "rows = candidate (original LCZ), columns = reference (reclassified LCZ)";

/// Name of the bucket collecting labels outside the class list.
pub const OTHER_LABEL: &str = "other-label";

/// Rendering of an undefined normalized value in text tables.
pub const UNDEFINED: &str = "—";

/// Tile counts per label for one grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHistogram {
    /// Counts aligned with [`LczLabel::CLASSES`].
    counts: [u64; LczLabel::CLASSES.len()],
    pub nodata: u64,
}

impl ClassHistogram {
    pub fn get(&self, label: LczLabel) -> u64 {
        match LczLabel::CLASSES.iter().position(|&l| l == label) {
            Some(k) => self.counts[k],
            None => self.nodata,
        }
    }

    /// Number of non-NoData tiles.
    pub fn valid_total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LczLabel, u64)> + '_ {
        LczLabel::CLASSES.iter().copied().zip(self.counts.iter().copied())
    }
}

impl Serialize for ClassHistogram {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.counts.len() + 1))?;
        for (label, n) in self.iter() {
            map.serialize_entry(&label.to_string(), &n)?;
        }
        map.serialize_entry("NoData", &self.nodata)?;
        map.end()
    }
}

pub fn class_counts(grid: &Raster<LczLabel>) -> ClassHistogram {
    let mut counts = [0u64; LczLabel::CLASSES.len()];
    let mut nodata = 0;
    for &label in grid.cells() {
        match LczLabel::CLASSES.iter().position(|&l| l == label) {
            Some(k) => counts[k] += 1,
            None => nodata += 1,
        }
    }
    ClassHistogram { counts, nodata }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<LczLabel>,
    /// `(K + 1)^2` counts, row-major; index `K` is the other-label bucket.
    counts: Vec<u64>,
    total: u64,
}

impl ConfusionMatrix {
    pub fn new(classes: &[LczLabel]) -> Result<Self> {
        let mut seen = classes.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != classes.len() || classes.contains(&LczLabel::NoData) {
            return Err(Error::InvalidValue(
                "class list must be distinct and must not contain NoData".into(),
            ));
        }
        let n = classes.len() + 1;
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts: vec![0; n * n],
            total: 0,
        })
    }

    pub fn classes(&self) -> &[LczLabel] {
        &self.classes
    }

    /// Row/column count including the other-label bucket.
    pub fn size(&self) -> usize {
        self.classes.len() + 1
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.size() + col]
    }

    /// Count for a (candidate, reference) label pair.
    pub fn pair(&self, candidate: LczLabel, reference: LczLabel) -> u64 {
        self.count(self.index_of(candidate), self.index_of(reference))
    }

    /// Matrix index of `label`; labels outside the class list map to the bucket.
    pub fn index_of(&self, label: LczLabel) -> usize {
        self.classes
            .iter()
            .position(|&c| c == label)
            .unwrap_or(self.classes.len())
    }

    /// Row/column names, bucket last.
    pub fn names(&self) -> Vec<String> {
        self.classes
            .iter()
            .map(ToString::to_string)
            .chain([OTHER_LABEL.to_string()])
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.size())
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|k| self.count(k, k)).sum()
    }

    /// Tally one tile; pairs where either side is NoData are skipped.
    pub fn add(&mut self, candidate: LczLabel, reference: LczLabel) {
        if candidate == LczLabel::NoData || reference == LczLabel::NoData {
            return;
        }
        let n = self.size();
        let k = self.index_of(candidate) * n + self.index_of(reference);
        self.counts[k] += 1;
        self.total += 1;
    }

    /// Elementwise sum of a partial matrix over the same class list.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::GridMismatch("merging matrices with different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn transpose(&self) -> ConfusionMatrix {
        let n = self.size();
        let mut counts = vec![0; n * n];
        for r in 0..n {
            for c in 0..n {
                counts[c * n + r] = self.count(r, c);
            }
        }
        ConfusionMatrix {
            classes: self.classes.clone(),
            counts,
            total: self.total,
        }
    }
}

fn check_aligned(candidate: &Raster<LczLabel>, reference: &Raster<LczLabel>) -> Result<()> {
    if !candidate.is_congruent(reference) {
        return Err(Error::GridMismatch(format!(
            "candidate grid {}x{} at {:?} does not match reference grid {}x{} at {:?}",
            candidate.width(),
            candidate.height(),
            candidate.georef(),
            reference.width(),
            reference.height(),
            reference.georef()
        )));
    }
    Ok(())
}

/// Tally candidate vs reference labels over aligned grids.
pub fn confusion(
    candidate: &Raster<LczLabel>,
    reference: &Raster<LczLabel>,
    classes: &[LczLabel],
) -> Result<ConfusionMatrix> {
    check_aligned(candidate, reference)?;
    let mut m = ConfusionMatrix::new(classes)?;
    for (&c, &r) in candidate.cells().iter().zip(reference.cells()) {
        m.add(c, r);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    /// Row-major, same shape as the source matrix.
    pub values: Vec<Vec<Option<f64>>>,
    /// Rows whose diagonal count is zero.
    pub undefined_rows: Vec<usize>,
    /// Off-diagonal cells with value above 1, row-major order.
    pub flags: Vec<(usize, usize)>,
}

pub fn normalize_by_diagonal(m: &ConfusionMatrix) -> NormalizedMatrix {
    let n = m.size();
    let mut values = Vec::with_capacity(n);
    let mut undefined_rows = Vec::new();
    let mut flags = Vec::new();
    for (i, row) in m.rows().enumerate() {
        let diag = row[i];
        if diag == 0 {
            undefined_rows.push(i);
            values.push(vec![None; n]);
            continue;
        }
        let d = diag as f64;
        values.push(row.iter().map(|&c| Some(c as f64 / d)).collect());
        for (j, &c) in row.iter().enumerate() {
            if j != i && c > diag {
                flags.push((i, j));
            }
        }
    }
    NormalizedMatrix {
        values,
        undefined_rows,
        flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAgreement {
    pub class: String,
    /// Diagonal over the candidate row sum.
    pub candidate_side: Option<f64>,
    /// Diagonal over the reference column sum.
    pub reference_side: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryMetrics {
    pub total: u64,
    pub overall_agreement: f64,
    pub per_class: Vec<ClassAgreement>,
}

pub fn summary_metrics(m: &ConfusionMatrix) -> Result<SummaryMetrics> {
    if m.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = m.size();
    let names = m.names();
    let per_class = (0..n)
        .map(|k| {
            let diag = m.count(k, k) as f64;
            let row: u64 = (0..n).map(|j| m.count(k, j)).sum();
            let col: u64 = (0..n).map(|i| m.count(i, k)).sum();
            ClassAgreement {
                class: names[k].clone(),
                candidate_side: (row > 0).then(|| diag / row as f64),
                reference_side: (col > 0).then(|| diag / col as f64),
            }
        })
        .collect();
    Ok(SummaryMetrics {
        total: m.total(),
        overall_agreement: m.trace() as f64 / m.total() as f64,
        per_class,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Histograms {
    pub candidate: ClassHistogram,
    pub reference: ClassHistogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfusionSection {
    pub orientation: String,
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Flag {
    pub candidate: String,
    pub reference: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizedSection {
    pub values: Vec<Vec<Option<f64>>>,
    pub undefined_rows: Vec<String>,
    pub flags: Vec<Flag>,
}

/// Everything needed to read an assessment: class histograms, the confusion
/// matrix, its diagonal-normalized form with flags, summary metrics and the
/// configuration that produced the reference.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: Vec<(String, String)>,
    pub histograms: Histograms,
    pub confusion: ConfusionSection,
    pub normalized: NormalizedSection,
    pub metrics: Option<SummaryMetrics>,
}

pub fn compare_report(
    candidate: &Raster<LczLabel>,
    reference: &Raster<LczLabel>,
    classes: &[LczLabel],
    config: Vec<(String, String)>,
) -> Result<Report> {
    let m = confusion(candidate, reference, classes)?;
    let norm = normalize_by_diagonal(&m);
    let names = m.names();
    let metrics = match summary_metrics(&m) {
        Ok(s) => Some(s),
        Err(Error::EmptyMatrix) => None,
        Err(e) => return Err(e),
    };
    let flags = norm
        .flags
        .iter()
        .map(|&(i, j)| Flag {
            candidate: names[i].clone(),
            reference: names[j].clone(),
            value: norm.values[i][j].unwrap_or(f64::NAN),
        })
        .collect();
    Ok(Report {
        config,
        histograms: Histograms {
            candidate: class_counts(candidate),
            reference: class_counts(reference),
        },
        confusion: ConfusionSection {
            orientation: ORIENTATION.to_string(),
            classes: names.clone(),
            counts: m.rows().map(<[u64]>::to_vec).collect(),
        },
        normalized: NormalizedSection {
            values: norm.values,
            undefined_rows: norm.undefined_rows.iter().map(|&i| names[i].clone()).collect(),
            flags,
        },
        metrics,
    })
}

fn fmt_ratio(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.3}"))
}

impl Report {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: ConfigMap<'a>,
            histograms: &'a Histograms,
            confusion: &'a ConfusionSection,
            normalized: &'a NormalizedSection,
            metrics: &'a Option<SummaryMetrics>,
        }
        struct ConfigMap<'a>(&'a [(String, String)]);
        impl Serialize for ConfigMap<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.len()))?;
                for (k, v) in self.0 {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
        let doc = Doc {
            config: ConfigMap(&self.config),
            histograms: &self.histograms,
            confusion: &self.confusion,
            normalized: &self.normalized,
            metrics: &self.metrics,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    fn table(&self, out: &mut String, cell: impl Fn(usize, usize) -> String) {
        let names = &self.confusion.classes;
        let width = names
            .iter()
            .map(String::len)
            .chain((0..names.len()).flat_map(|i| (0..names.len()).map(move |j| (i, j))).map(|(i, j)| cell(i, j).chars().count()))
            .max()
            .unwrap_or(1)
            + 1;
        let _ = write!(out, "{:>width$}", "");
        for n in names {
            let _ = write!(out, " {n:>width$}");
        }
        out.push('\n');
        for (i, n) in names.iter().enumerate() {
            let _ = write!(out, "{n:>width$}");
            for j in 0..names.len() {
                let _ = write!(out, " {:>width$}", cell(i, j));
            }
            out.push('\n');
        }
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "LCZ assessment report");
        let _ = writeln!(out, "orientation: {}", self.confusion.orientation);
        let _ = writeln!(out);
        let _ = writeln!(out, "configuration:");
        for (k, v) in &self.config {
            let _ = writeln!(out, "  {k} = {v}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "class histograms (tiles):");
        let _ = writeln!(out, "  {:>8} {:>10} {:>10}", "class", "candidate", "reference");
        for ((label, c), (_, r)) in self.histograms.candidate.iter().zip(self.histograms.reference.iter()) {
            let _ = writeln!(out, "  {:>8} {c:>10} {r:>10}", label.to_string());
        }
        let _ = writeln!(
            out,
            "  {:>8} {:>10} {:>10}",
            "NoData", self.histograms.candidate.nodata, self.histograms.reference.nodata
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "confusion matrix:");
        self.table(&mut out, |i, j| self.confusion.counts[i][j].to_string());
        let _ = writeln!(out);
        let _ = writeln!(out, "normalized by diagonal (* = exceeds 1):");
        self.table(&mut out, |i, j| {
            let v = self.normalized.values[i][j];
            let flagged = v.is_some_and(|v| v > 1.0) && i != j;
            format!("{}{}", fmt_ratio(v), if flagged { "*" } else { "" })
        });
        if !self.normalized.undefined_rows.is_empty() {
            let _ = writeln!(out, "undefined rows (zero diagonal): {}", self.normalized.undefined_rows.join(", "));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "confused pairs (candidate -> reference):");
        if self.normalized.flags.is_empty() {
            let _ = writeln!(out, "  none");
        }
        for f in &self.normalized.flags {
            let _ = writeln!(out, "  {} -> {}: {:.3}", f.candidate, f.reference, f.value);
        }
        let _ = writeln!(out);
        match &self.metrics {
            Some(m) => {
                let _ = writeln!(out, "tiles compared: {}", m.total);
                let _ = writeln!(out, "overall agreement: {:.4}", m.overall_agreement);
                let _ = writeln!(out, "  {:>12} {:>10} {:>10}", "class", "cand-side", "ref-side");
                for c in &m.per_class {
                    let _ = writeln!(
                        out,
                        "  {:>12} {:>10} {:>10}",
                        c.class,
                        fmt_ratio(c.candidate_side),
                        fmt_ratio(c.reference_side)
                    );
                }
            }
            None => {
                let _ = writeln!(out, "no tiles valid in both grids");
            }
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = format!("candidate\\reference,{}\n", self.confusion.classes.join(","));
        for (name, row) in self.confusion.classes.iter().zip(&self.confusion.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{name},{}", cells.join(","));
        }
        out
    }

    /// Normalized matrix as CSV; undefined cells are empty.
    pub fn normalized_csv(&self) -> String {
        let mut out = format!("candidate\\reference,{}\n", self.confusion.classes.join(","));
        for (name, row) in self.confusion.classes.iter().zip(&self.normalized.values) {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            let _ = writeln!(out, "{name},{}", cells.join(","));
        }
        out
    }

    /// Write `report.json`, `report.txt`, `confusion.csv` and `normalized.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.json", self.to_json()),
            ("report.txt", self.to_text()),
            ("confusion.csv", self.confusion_csv()),
            ("normalized.csv", self.normalized_csv()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
