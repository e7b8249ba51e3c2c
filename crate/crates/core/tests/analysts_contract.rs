use std::path::PathBuf;

use chrono::{NaiveDate, TimeZone, Utc};
use floodfuse::analysts::{
    assemble_system_prompt, assemble_user_prompt, assemble_visual_user_prompt, parse_report, AnalystReport,
    ChatMessage, ChatModel, EvidenceBundle, EvidenceItem, EvidenceRefs, FemaPrior, MockChat, MockRule,
    PromptTemplates, RecessionHint, ReportFlags, SensorEvidence, SystemMode, TileRef, TEMPLATE_FILES,
};
use floodfuse::geo::SensorReading;
use floodfuse::types::{TimeWindow, Zip};
use proptest::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

fn template_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("templates")
}

fn item(id: &str, text: &str) -> EvidenceItem {
    EvidenceItem {
        id: id.into(),
        text: text.into(),
    }
}

fn full_bundle() -> EvidenceBundle {
    let window = TimeWindow::from_dates(
        NaiveDate::from_ymd_opt(2017, 8, 27).unwrap(),
        NaiveDate::from_ymd_opt(2017, 8, 28).unwrap(),
    )
    .unwrap();
    let mut b = EvidenceBundle::new(Zip::new("77096").unwrap(), window);
    b.tweets = vec![item("tw1", "Water over   the curb on\nBraeswood"), item("tw2", "Rescue boats out")];
    b.calls_311 = vec![item("c1", "Street flooding reported")];
    b.sensor = Some(SensorEvidence {
        sensor_id: "hcfcd-520".into(),
        distance_km: 1.234,
        readings: vec![
            SensorReading {
                hour: Utc.with_ymd_and_hms(2017, 8, 27, 3, 0, 0).unwrap(),
                precip_in: 1.5,
            },
            SensorReading {
                hour: Utc.with_ymd_and_hms(2017, 8, 27, 4, 0, 0).unwrap(),
                precip_in: 0.25,
            },
        ],
    });
    b.captions = vec![item("tile-9", "Standing water around homes")];
    b.fema_prior = Some(FemaPrior {
        ref_id: "fema:77096".into(),
        summary: "Repeated losses along Brays Bayou".into(),
    });
    b.tiles = vec![TileRef {
        tile_id: "tile-9".into(),
        uri: None,
    }];
    b.imagery_context = true;
    b
}

#[test]
fn shipped_templates_match_their_manifest() {
    let manifest = std::fs::read_to_string(template_dir().join("SHA256SUMS")).unwrap();
    let mut listed = 0;
    for line in manifest.lines() {
        let (digest, name) = line.split_once("  ").unwrap();
        let bytes = std::fs::read(template_dir().join(name)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), digest, "{name}");
        listed += 1;
    }
    assert_eq!(listed, TEMPLATE_FILES.len());
    PromptTemplates::builtin().verify(&manifest).unwrap();
    PromptTemplates::load(&template_dir()).unwrap().verify(&manifest).unwrap();
}

#[test]
fn system_prompts_are_byte_identical_to_files() {
    let t = PromptTemplates::builtin();
    for (mode, file) in [
        (SystemMode::Multimodal, "system_multimodal.txt"),
        (SystemMode::TextOnly, "system_text_only.txt"),
    ] {
        let on_disk = std::fs::read(template_dir().join(file)).unwrap();
        assert_eq!(assemble_system_prompt(&t, mode).as_bytes(), on_disk.as_slice());
    }
}

#[test]
fn edited_template_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    for name in TEMPLATE_FILES {
        std::fs::copy(template_dir().join(name), dir.path().join(name)).unwrap();
    }
    std::fs::write(dir.path().join("system_text_only.txt"), "be brief").unwrap();
    let manifest = std::fs::read_to_string(template_dir().join("SHA256SUMS")).unwrap();
    assert!(PromptTemplates::load(dir.path()).unwrap().verify(&manifest).is_err());
}

#[test]
fn user_prompt_has_every_section_for_a_full_bundle() {
    let t = PromptTemplates::builtin();
    let p = assemble_user_prompt(&t, &full_bundle());
    for header in [
        "ZIP: 77096",
        "Time window: 2017-08-27 to 2017-08-28",
        "Imagery IDs: tile-9",
        "### Sensor Data (Precipitation):",
        "### FEMA Prior Knowledge (Historical Context):",
        "### Tweets (Relevant to ZIP 77096) - REAL-TIME REPORTS:",
        "### 311 Calls (Relevant to ZIP 77096) - REAL-TIME REPORTS:",
        "### Image Captions (TEMPORAL WARNING):",
        "Respond with JSON matching schema:",
    ] {
        assert!(p.contains(header), "missing {header:?}");
    }
    assert!(p.contains("- [tw1] (ZIP 77096) Water over the curb on Braeswood"));
    assert!(p.contains("[fema:77096] Repeated losses along Brays Bayou"));
    assert!(p.contains("| 2017-08-27 03:00 | 1.50 |"));
    assert!(!p.contains('{') || p.contains("\"reasoning\": str"));
    // no placeholder survives rendering
    for name in ["{zip_code}", "{tweet_list}", "{call_list}", "{sensor_table}", "{kb_summary}", "{caption_list}"] {
        assert!(!p.contains(name), "{name}");
    }
    let v = assemble_visual_user_prompt(&t, &full_bundle());
    assert!(v.starts_with(&p));
    assert!(v.contains("\"recession_observed\": bool"));
}

#[test]
fn empty_sections_say_so() {
    let mut b = full_bundle();
    b.tweets.clear();
    b.calls_311.clear();
    b.fema_prior = None;
    b.imagery_context = false;
    let p = assemble_user_prompt(&PromptTemplates::builtin(), &b);
    assert_eq!(p.matches("None retrieved").count(), 2);
    assert!(p.contains("None available"));
    assert!(!p.contains("### Image Captions"));
}

#[test]
fn evidence_text_cannot_inject_placeholders() {
    let mut b = full_bundle();
    b.tweets = vec![item("tw1", "see {call_list} and {zip_code}")];
    let p = assemble_user_prompt(&PromptTemplates::builtin(), &b);
    assert!(p.contains("see {call_list} and {zip_code}"));
}

#[test]
fn adversarial_references_are_stripped() {
    let b = full_bundle();
    let raw = json!({
        "reasoning": "x",
        "estimates": {"flood_extent_pct": 40, "damage_severity_pct": 10, "confidence": 0.5, "roads_impacted": []},
        "evidence_refs": {
            "tweet_ids": ["tw1", "tw999", "c1"],
            "call_311_ids": ["c1", "tw2"],
            "imagery_tile_ids": ["tile-9", "../../etc/passwd"],
            "sensor_ids": ["hcfcd-520", "hcfcd-0"],
            "kb_refs": ["fema:77096", "fema:77002"]
        }
    })
    .to_string();
    let mut r = parse_report(&raw, RecessionHint { after_peak: false }).unwrap();
    r.retain_known_refs(&b);
    assert_eq!(r.evidence_refs.tweet_ids, ["tw1"]);
    assert_eq!(r.evidence_refs.call_311_ids, ["c1"]);
    assert_eq!(r.evidence_refs.imagery_tile_ids, ["tile-9"]);
    assert_eq!(r.evidence_refs.sensor_ids, ["hcfcd-520"]);
    assert_eq!(r.evidence_refs.kb_refs, ["fema:77096"]);
    assert_eq!(r.flags.stripped_refs.len(), 6);
    assert!(r.flags.stripped_refs.contains(&"tweet_ids:c1".to_string()));
}

#[test]
fn malformed_outputs_are_errors_not_panics() {
    let hint = RecessionHint { after_peak: true };
    for raw in [
        "",
        "I cannot help with that.",
        "{",
        "```json\n{\"estimates\": {}}\n```",
        r#"{"estimates": {"flood_extent_pct": "lots", "damage_severity_pct": 1}}"#,
        r#"[1, 2, 3]"#,
    ] {
        assert!(parse_report(raw, hint).is_err(), "{raw:?}");
    }
}

#[test]
fn mock_chat_answers_by_hash_then_rule_then_default() {
    let msgs = [ChatMessage::system("sys"), ChatMessage::user("ZIP: 77096\nmore")];
    let mut mock = MockChat::with_default(r#"{"d":1}"#);
    mock.add_rule(MockRule {
        contains: vec!["ZIP: 77096".into()],
        excludes: vec!["imagery".into()],
        response: json!("by rule"),
    });
    assert_eq!(mock.complete(&msgs).unwrap(), "by rule");
    mock.register(&msgs, "by hash");
    assert_eq!(mock.complete(&msgs).unwrap(), "by hash");
    let other = [ChatMessage::user("imagery ZIP: 77096")];
    assert_eq!(mock.complete(&other).unwrap(), r#"{"d":1}"#);
    assert_eq!(mock.calls(), 3);
    assert_eq!(MockChat::prompt_hash(&msgs), MockChat::prompt_hash(&msgs.clone()));
    assert_ne!(MockChat::prompt_hash(&msgs), MockChat::prompt_hash(&other));
}

fn arb_id() -> impl Strategy<Value = String> {
    "[a-z0-9:_-]{1,10}"
}

fn arb_report() -> impl Strategy<Value = AnalystReport> {
    (
        (0.0..=100.0f64, 0.0..=100.0f64, 0.0..=1.0f64, any::<bool>()),
        prop::collection::vec("[A-Za-z0-9]([A-Za-z0-9 ]{0,18}[A-Za-z0-9])?", 0..4),
        "[^\u{0}]{0,80}",
        prop::collection::vec(prop::collection::vec(arb_id(), 0..3), 5),
        prop::option::of("[A-Za-z .]{0,40}"),
    )
        .prop_map(|((e, d, c, rec), roads, reasoning, refs, summary)| AnalystReport {
            flood_extent_pct: e,
            damage_severity_pct: d,
            recession_observed: rec,
            confidence: c,
            roads_impacted: roads,
            reasoning,
            evidence_refs: EvidenceRefs {
                imagery_tile_ids: refs[0].clone(),
                tweet_ids: refs[1].clone(),
                call_311_ids: refs[2].clone(),
                sensor_ids: refs[3].clone(),
                kb_refs: refs[4].clone(),
            },
            summary,
            flags: ReportFlags::default(),
        })
}

proptest! {
    #[test]
    fn parse_inverts_render(r in arb_report(), after_peak in any::<bool>(), fenced in any::<bool>()) {
        let text = if fenced { format!("Here you go:\n```json\n{}\n```", r.render()) } else { r.render() };
        let back = parse_report(&text, RecessionHint { after_peak }).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn parsed_values_are_always_in_range(e in -1e6..1e6f64, d in -1e6..1e6f64, c in -10.0..10.0f64) {
        let raw = json!({"estimates": {"flood_extent_pct": e, "damage_severity_pct": d, "confidence": c}}).to_string();
        let r = parse_report(&raw, RecessionHint { after_peak: false }).unwrap();
        prop_assert!((0.0..=100.0).contains(&r.flood_extent_pct));
        prop_assert!((0.0..=100.0).contains(&r.damage_severity_pct));
        prop_assert!((0.0..=1.0).contains(&r.confidence));
        let out_of_range = !(0.0..=100.0).contains(&e) || !(0.0..=100.0).contains(&d) || !(0.0..=1.0).contains(&c);
        prop_assert_eq!(r.flags.clamped, out_of_range);
    }
}
