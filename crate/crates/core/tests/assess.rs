use lczgrid::assess::*;
use lczgrid::error::Error;
use lczgrid::raster::{GeoRef, Raster};
use lczgrid::rules::LczLabel::{self, *};
use proptest::prelude::*;

fn grid(labels: &[LczLabel], w: usize) -> Raster<LczLabel> {
    let h = labels.len() / w;
    Raster::from_vec(w, h, GeoRef::new(583_000.0, 4_507_300.0, 100.0, "EPSG:32618"), NoData, labels.to_vec()).unwrap()
}

/// A two-class matrix (plus the empty other-label bucket) from counts.
fn matrix(counts: [[u64; 2]; 2]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(&[Lcz1, Lcz2]).unwrap();
    for (i, row) in counts.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            for _ in 0..n {
                m.add([Lcz1, Lcz2][i], [Lcz1, Lcz2][j]);
            }
        }
    }
    m
}

#[test]
fn class_count_examples() {
    let h = class_counts(&grid(&[Lcz6, Lcz6, Lcz9], 3));
    assert_eq!((h.get(Lcz6), h.get(Lcz9), h.get(Lcz1), h.nodata), (2, 1, 0, 0));
    assert_eq!(h.valid_total(), 3);
    let empty = class_counts(&grid(&[NoData; 4], 2));
    assert_eq!(empty.valid_total(), 0);
    assert!(empty.iter().all(|(_, n)| n == 0));
    assert_eq!(empty.nodata, 4);
}

#[test]
fn confusion_examples() {
    let m = confusion(&grid(&[Lcz1, Lcz1, Lcz2], 3), &grid(&[Lcz1, Lcz2, Lcz2], 3), &LczLabel::CLASSES).unwrap();
    assert_eq!((m.pair(Lcz1, Lcz1), m.pair(Lcz1, Lcz2), m.pair(Lcz2, Lcz2)), (1, 1, 1));
    assert_eq!(m.pair(Lcz2, Lcz1), 0);
    assert_eq!(m.total(), 3);

    let same = grid(&[Lcz1, Lcz6, Lcz9, Others, NoData, Lcz6], 3);
    let m = confusion(&same, &same, &LczLabel::CLASSES).unwrap();
    assert_eq!(m.trace(), 5);
    assert_eq!(m.total(), 5);

    // Labels outside the class list land in the other-label bucket.
    let m = confusion(&grid(&[Lcz1, Lcz4], 2), &grid(&[Lcz4, Lcz4], 2), &[Lcz1, Lcz2]).unwrap();
    assert_eq!(m.names().last().map(String::as_str), Some(OTHER_LABEL));
    assert_eq!(m.count(0, 2), 1);
    assert_eq!(m.count(2, 2), 1);
}

#[test]
fn confusion_rejects_misaligned_grids() {
    let a = grid(&[Lcz1; 4], 2);
    let b = grid(&[Lcz1; 4], 4);
    assert!(matches!(confusion(&a, &b, &LczLabel::CLASSES), Err(Error::GridMismatch(_))));
    let shifted = Raster::from_vec(2, 2, GeoRef::new(583_100.0, 4_507_300.0, 100.0, "EPSG:32618"), NoData, vec![Lcz1; 4]).unwrap();
    assert!(confusion(&a, &shifted, &LczLabel::CLASSES).is_err());
    assert!(ConfusionMatrix::new(&[Lcz1, Lcz1]).is_err());
    assert!(ConfusionMatrix::new(&[Lcz1, NoData]).is_err());
}

#[test]
fn normalize_examples() {
    let n = normalize_by_diagonal(&matrix([[4, 2], [0, 5]]));
    assert_eq!(n.values[0][..2], [Some(1.0), Some(0.5)]);
    assert_eq!(n.values[1][..2], [Some(0.0), Some(1.0)]);
    assert!(n.flags.is_empty());
    // The empty other-label row has a zero diagonal.
    assert_eq!(n.undefined_rows, vec![2]);

    let n = normalize_by_diagonal(&matrix([[0, 3], [1, 2]]));
    assert_eq!(n.values[0], vec![None; 3]);
    assert_eq!(n.values[1][..2], [Some(0.5), Some(1.0)]);
    assert_eq!(n.undefined_rows, vec![0, 2]);
    assert!(n.flags.is_empty());

    let n = normalize_by_diagonal(&matrix([[3, 0], [0, 7]]));
    assert_eq!(n.values[0][..2], [Some(1.0), Some(0.0)]);
    assert_eq!(n.values[1][..2], [Some(0.0), Some(1.0)]);
}

#[test]
fn summary_examples() {
    let s = summary_metrics(&matrix([[4, 2], [0, 5]])).unwrap();
    assert_eq!(s.overall_agreement, 9.0 / 11.0);
    assert_eq!(s.per_class[0].candidate_side, Some(4.0 / 6.0));
    assert_eq!(s.per_class[0].reference_side, Some(1.0));
    assert_eq!(s.per_class[2].candidate_side, None);
    assert_eq!(summary_metrics(&matrix([[5, 0], [0, 2]])).unwrap().overall_agreement, 1.0);
    assert_eq!(summary_metrics(&matrix([[0, 3], [4, 0]])).unwrap().overall_agreement, 0.0);
    assert!(matches!(summary_metrics(&matrix([[0, 0], [0, 0]])), Err(Error::EmptyMatrix)));
}

#[test]
fn identical_grids_report() {
    let g = grid(&[Lcz1, Lcz2, Lcz6, Lcz6, Lcz9, Others, Lcz8, Lcz6, NoData], 3);
    let r = compare_report(&g, &g, &LczLabel::CLASSES, vec![]).unwrap();
    assert_eq!(r.metrics.as_ref().unwrap().overall_agreement, 1.0);
    assert!(r.normalized.flags.is_empty());
}

#[test]
fn swapped_tile_is_flagged() {
    // Candidate 6 where the reference says 9 on 3 tiles, agreement on 2.
    let cand = grid(&[Lcz6, Lcz6, Lcz6, Lcz6, Lcz6, Lcz9], 3);
    let refr = grid(&[Lcz6, Lcz6, Lcz9, Lcz9, Lcz9, Lcz9], 3);
    let r = compare_report(&cand, &refr, &LczLabel::CLASSES, vec![]).unwrap();
    let flags: Vec<(&str, &str)> = r
        .normalized
        .flags
        .iter()
        .map(|f| (f.candidate.as_str(), f.reference.as_str()))
        .collect();
    assert_eq!(flags, vec![("6", "9")]);
    assert_eq!(r.normalized.flags[0].value, 1.5);
}

#[test]
fn report_formats_are_deterministic() {
    let cand = grid(&[Lcz6, Lcz9, Lcz9, Lcz3, Others, NoData], 3);
    let refr = grid(&[Lcz6, Lcz6, Lcz9, Lcz3, Lcz2, Lcz9], 3);
    let cfg = vec![("rules.class8.svf".to_string(), "(0.7, inf)".to_string())];
    let a = compare_report(&cand, &refr, &LczLabel::CLASSES, cfg.clone()).unwrap();
    let b = compare_report(&cand, &refr, &LczLabel::CLASSES, cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.confusion_csv(), b.confusion_csv());
    assert_eq!(a.normalized_csv(), b.normalized_csv());

    let doc: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    for key in ["config", "histograms", "confusion", "normalized", "metrics"] {
        assert!(doc.get(key).is_some(), "{key}");
    }
    assert_eq!(doc["config"]["rules.class8.svf"], "(0.7, inf)");
    assert!(a.to_text().contains(ORIENTATION));
    assert!(a.to_text().contains(UNDEFINED));

    let dir = tempfile::tempdir().unwrap();
    a.write_to(dir.path()).unwrap();
    let first: Vec<Vec<u8>> = list(dir.path());
    b.write_to(dir.path()).unwrap();
    assert_eq!(list(dir.path()), first);
}

fn list(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn label() -> impl Strategy<Value = LczLabel> {
    prop::sample::select(vec![Lcz1, Lcz2, Lcz3, Lcz4, Lcz5, Lcz6, Lcz7, Lcz8, Lcz9, Lcz10, Others, NoData])
}

fn pairs(max: usize) -> impl Strategy<Value = Vec<(LczLabel, LczLabel)>> {
    prop::collection::vec((label(), label()), 1..max)
}

fn split(p: &[(LczLabel, LczLabel)]) -> (Raster<LczLabel>, Raster<LczLabel>) {
    let a: Vec<_> = p.iter().map(|x| x.0).collect();
    let b: Vec<_> = p.iter().map(|x| x.1).collect();
    (grid(&a, a.len()), grid(&b, b.len()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn confusion_equals_brute_force(p in pairs(1000), subset in prop::sample::subsequence(LczLabel::CLASSES.to_vec(), 1..=11)) {
        let (c, r) = split(&p);
        let m = confusion(&c, &r, &subset).unwrap();
        let idx = |l: LczLabel| subset.iter().position(|&x| x == l).unwrap_or(subset.len());
        let k = subset.len() + 1;
        for i in 0..k {
            for j in 0..k {
                let n = p.iter().filter(|&&(a, b)| a != NoData && b != NoData && idx(a) == i && idx(b) == j).count() as u64;
                prop_assert_eq!(m.count(i, j), n);
            }
        }
        let valid = p.iter().filter(|&&(a, b)| a != NoData && b != NoData).count() as u64;
        prop_assert_eq!(m.total(), valid);
        prop_assert_eq!(m.rows().flatten().sum::<u64>(), valid);
    }

    #[test]
    fn swapping_grids_transposes(p in pairs(300)) {
        let (c, r) = split(&p);
        let ab = confusion(&c, &r, &LczLabel::CLASSES).unwrap();
        let ba = confusion(&r, &c, &LczLabel::CLASSES).unwrap();
        prop_assert_eq!(ab.transpose(), ba);
    }

    #[test]
    fn shards_merge_in_any_order(p in pairs(300), cut in any::<prop::sample::Index>()) {
        let k = cut.index(p.len());
        let (c, r) = split(&p);
        let whole = confusion(&c, &r, &LczLabel::CLASSES).unwrap();
        let (c1, r1) = split(&p[..k.max(1)]);
        let mut parts = vec![confusion(&c1, &r1, &LczLabel::CLASSES).unwrap()];
        if k.max(1) < p.len() {
            let (c2, r2) = split(&p[k.max(1)..]);
            parts.push(confusion(&c2, &r2, &LczLabel::CLASSES).unwrap());
        }
        let mut fwd = ConfusionMatrix::new(&LczLabel::CLASSES).unwrap();
        for m in &parts { fwd.merge(m).unwrap(); }
        let mut back = ConfusionMatrix::new(&LczLabel::CLASSES).unwrap();
        for m in parts.iter().rev() { back.merge(m).unwrap(); }
        prop_assert_eq!(&fwd, &whole);
        prop_assert_eq!(&back, &whole);
    }

    #[test]
    fn normalization_round_trips_and_flags(p in pairs(600)) {
        let (c, r) = split(&p);
        let m = confusion(&c, &r, &LczLabel::CLASSES).unwrap();
        let n = normalize_by_diagonal(&m);
        let k = m.size();
        let mut expected_flags = Vec::new();
        for i in 0..k {
            let d = m.count(i, i);
            if d == 0 {
                prop_assert!(n.values[i].iter().all(Option::is_none));
                prop_assert!(n.undefined_rows.contains(&i));
                continue;
            }
            prop_assert_eq!(n.values[i][i], Some(1.0));
            for j in 0..k {
                let back = n.values[i][j].unwrap() * d as f64;
                let want = m.count(i, j) as f64;
                prop_assert!((back - want).abs() <= 1e-12 * want.max(1.0));
                if i != j && m.count(i, j) > d {
                    expected_flags.push((i, j));
                }
            }
        }
        prop_assert_eq!(n.flags, expected_flags);
    }

    #[test]
    fn histogram_sums_to_valid_tiles(p in pairs(200)) {
        let (c, _) = split(&p);
        let h = class_counts(&c);
        let valid = p.iter().filter(|x| x.0 != NoData).count() as u64;
        prop_assert_eq!(h.valid_total(), valid);
        prop_assert_eq!(h.nodata, p.len() as u64 - valid);
    }
}
