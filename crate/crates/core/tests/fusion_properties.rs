use chrono::NaiveDate;
use floodfuse::analysts::{AnalystReport, EvidenceRefs, ReportFlags};
use floodfuse::fusion::{fuse, Branch, FusionInput, FusionParams};
use proptest::prelude::*;

fn report(extent: f64, damage: f64, recession: bool, confidence: f64) -> AnalystReport {
    AnalystReport {
        flood_extent_pct: extent,
        damage_severity_pct: damage,
        recession_observed: recession,
        confidence,
        roads_impacted: vec![],
        reasoning: "r".into(),
        evidence_refs: EvidenceRefs::default(),
        summary: None,
        flags: ReportFlags::default(),
    }
}

fn date(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 8, d).unwrap()
}

fn input(text: AnalystReport, visual: Option<AnalystReport>, day: u32) -> FusionInput {
    FusionInput {
        text_report: text,
        visual_report: visual,
        query_date: date(day),
        params: FusionParams::default(),
    }
}

#[test]
fn truth_table_over_all_eight_cases() {
    let (te, td, tc) = (70.0, 20.0, 0.9);
    let (ve, vd, vc) = (10.0, 45.0, 0.6);
    for visual in [false, true] {
        for after_peak in [false, true] {
            for recession in [false, true] {
                let t = report(te, td, false, tc);
                let v = visual.then(|| report(ve, vd, recession, vc));
                // the peak day itself is not "after"
                let day = if after_peak { 31 } else { 28 };
                let out = fuse(&input(t, v, day)).unwrap();
                let (branch, extent, damage, conf) = match (visual, after_peak && recession) {
                    (false, _) => (Branch::TextOnlyFallback, te, td, tc),
                    (true, true) => (Branch::TextPriority, te, vd, vc),
                    (true, false) => (Branch::Weighted, 0.5 * te + 0.5 * ve, vd, vc),
                };
                let case = format!("visual={visual} after={after_peak} recession={recession}");
                assert_eq!(out.branch_taken, branch, "{case}");
                assert_eq!(out.flood_extent_pct, extent, "{case}");
                assert_eq!(out.damage_severity_pct, damage, "{case}");
                assert_eq!(out.confidence, conf, "{case}");
            }
        }
    }
}

#[test]
fn text_recession_flag_is_ignored() {
    let out = fuse(&input(report(50.0, 5.0, true, 0.8), Some(report(10.0, 5.0, false, 0.8)), 31)).unwrap();
    assert_eq!(out.branch_taken, Branch::Weighted);
    assert_eq!(out.flood_extent_pct, 30.0);
}

#[test]
fn clear_image_never_vetoes_text_extent() {
    let mut seen = Vec::new();
    for v in 0..=100 {
        let out = fuse(&input(report(64.0, 10.0, false, 0.8), Some(report(v as f64, 3.0, true, 0.7)), 30)).unwrap();
        assert_eq!(out.branch_taken, Branch::TextPriority);
        seen.push(out.flood_extent_pct);
    }
    assert!(seen.iter().all(|&e| e == 64.0));
}

#[test]
fn damage_takes_the_larger_estimate_exactly() {
    for (t, v) in [(0.0, 0.0), (12.5, 40.25), (99.9, 0.1), (33.0, 33.0), (100.0, 0.0)] {
        let out = fuse(&input(report(50.0, t, false, 1.0), Some(report(50.0, v, false, 1.0)), 27)).unwrap();
        assert_eq!(out.damage_severity_pct, f64::max(t, v));
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(fuse(&input(report(101.0, 0.0, false, 0.5), None, 27)).is_err());
    assert!(fuse(&input(report(10.0, 0.0, false, 1.5), None, 27)).is_err());
    assert!(fuse(&input(report(10.0, 0.0, false, 0.5), Some(report(10.0, -1.0, false, 0.5)), 27)).is_err());
    let mut bad = input(report(10.0, 0.0, false, 0.5), None, 27);
    bad.params.extent_weight = 1.2;
    assert!(fuse(&bad).is_err());
}

fn pct() -> impl Strategy<Value = f64> {
    0.0..=100.0f64
}

proptest! {
    #[test]
    fn damage_is_monotone(t in pct(), v in pct(), dt in 0.0..=100.0f64, dv in 0.0..=100.0f64,
                          recession in any::<bool>(), day in 25u32..31) {
        let base = fuse(&input(report(50.0, t, false, 0.5), Some(report(50.0, v, recession, 0.5)), day)).unwrap();
        let t2 = (t + dt).min(100.0);
        let v2 = (v + dv).min(100.0);
        let up = fuse(&input(report(50.0, t2, false, 0.5), Some(report(50.0, v2, recession, 0.5)), day)).unwrap();
        prop_assert!(up.damage_severity_pct >= base.damage_severity_pct);
    }

    #[test]
    fn outputs_stay_in_range(te in pct(), td in pct(), ve in pct(), vd in pct(),
                             tc in 0.0..=1.0f64, vc in 0.0..=1.0f64, w in 0.0..=1.0f64,
                             recession in any::<bool>(), visual in any::<bool>(), day in 20u32..31) {
        let mut inp = input(report(te, td, false, tc), visual.then(|| report(ve, vd, recession, vc)), day);
        inp.params.extent_weight = w;
        let out = fuse(&inp).unwrap();
        prop_assert!((0.0..=100.0).contains(&out.flood_extent_pct));
        prop_assert!((0.0..=100.0).contains(&out.damage_severity_pct));
        prop_assert!((0.0..=1.0).contains(&out.confidence));
        let other = if visual { ve } else { te };
        prop_assert!(out.flood_extent_pct >= te.min(other) - 1e-12);
        prop_assert!(out.flood_extent_pct <= te.max(other) + 1e-12);
    }
}
