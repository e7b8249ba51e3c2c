use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::SensorReading;
use crate::types::{TimeWindow, Zip};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("missing template file {0}")]
    MissingTemplate(String),
    #[error("template {name} checksum mismatch: expected {expected}, found {actual}")]
    ChecksumMismatch {
        name: String,
        expected: String,
        actual: String,
    },
}

/// Template files shipped in `templates/`, in checksum-manifest order.
pub const TEMPLATE_FILES: [&str; 8] = [
    "output_schema.txt",
    "query_parser_system.txt",
    "query_parser_user.txt",
    "system_multimodal.txt",
    "system_text_only.txt",
    "user_captions.txt",
    "user_prompt.txt",
    "visual_addendum.txt",
];

const BUILTIN: [&str; 8] = [
    include_str!("../../templates/output_schema.txt"),
    include_str!("../../templates/query_parser_system.txt"),
    include_str!("../../templates/query_parser_user.txt"),
    include_str!("../../templates/system_multimodal.txt"),
    include_str!("../../templates/system_text_only.txt"),
    include_str!("../../templates/user_captions.txt"),
    include_str!("../../templates/user_prompt.txt"),
    include_str!("../../templates/visual_addendum.txt"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    files: BTreeMap<&'static str, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates::builtin()
    }
}

impl PromptTemplates {
    /// Templates compiled into the binary.
    pub fn builtin() -> Self {
        PromptTemplates {
            files: TEMPLATE_FILES.into_iter().zip(BUILTIN.map(str::to_owned)).collect(),
        }
    }

    /// Reads every template from `dir`; all files must be present.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let mut files = BTreeMap::new();
        for name in TEMPLATE_FILES {
            let p = dir.join(name);
            let s = std::fs::read_to_string(&p).map_err(|_| PromptError::MissingTemplate(p.display().to_string()))?;
            files.insert(name, s);
        }
        Ok(PromptTemplates { files })
    }

    pub fn get(&self, name: &str) -> &str {
        self.files.get(name).map(String::as_str).unwrap_or_default()
    }

    /// SHA-256 hex digest of each template.
    pub fn checksums(&self) -> BTreeMap<&'static str, String> {
        self.files
            .iter()
            .map(|(k, v)| (*k, hex::encode(Sha256::digest(v.as_bytes()))))
            .collect()
    }

    /// Checks digests against a `sha256sum`-style manifest.
    pub fn verify(&self, manifest: &str) -> Result<(), PromptError> {
        let sums = self.checksums();
        for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split_whitespace();
            let (Some(expected), Some(name)) = (parts.next(), parts.next()) else { continue };
            let name = name.trim_start_matches('*');
            let actual = sums
                .get(name)
                .ok_or_else(|| PromptError::MissingTemplate(name.to_owned()))?;
            if actual != expected {
                return Err(PromptError::ChecksumMismatch {
                    name: name.to_owned(),
                    expected: expected.to_owned(),
                    actual: actual.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Substitutes `{name}` placeholders in a single pass. Unknown placeholders
/// and other braces are copied through, and substituted values are never
/// re-scanned.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let hit = (after[name_len..].starts_with('}'))
            .then(|| vars.iter().find(|(k, _)| *k == &after[..name_len]))
            .flatten();
        match hit {
            Some((_, v)) => {
                out.push_str(v);
                rest = &after[name_len + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemMode {
    Multimodal,
    TextOnly,
}

pub fn assemble_system_prompt(templates: &PromptTemplates, mode: SystemMode) -> &str {
    match mode {
        SystemMode::Multimodal => templates.get("system_multimodal.txt"),
        SystemMode::TextOnly => templates.get("system_text_only.txt"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorEvidence {
    pub sensor_id: String,
    pub distance_km: f64,
    pub readings: Vec<SensorReading>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FemaPrior {
    pub ref_id: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileRef {
    pub tile_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

/// Everything one analyst call gets to see for a (ZIP, window) query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceBundle {
    pub zip: Zip,
    pub window: TimeWindow,
    pub tweets: Vec<EvidenceItem>,
    pub calls_311: Vec<EvidenceItem>,
    pub sensor: Option<SensorEvidence>,
    pub captions: Vec<EvidenceItem>,
    pub fema_prior: Option<FemaPrior>,
    pub tiles: Vec<TileRef>,
    /// Emit the caption section (text-with-captions and multimodal runs).
    pub imagery_context: bool,
}

impl EvidenceBundle {
    pub fn new(zip: Zip, window: TimeWindow) -> Self {
        EvidenceBundle {
            zip,
            window,
            tweets: Vec::new(),
            calls_311: Vec::new(),
            sensor: None,
            captions: Vec::new(),
            fema_prior: None,
            tiles: Vec::new(),
            imagery_context: false,
        }
    }

    /// True when there is no event evidence at all. The FEMA prior is
    /// historical background and does not count.
    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
            && self.calls_311.is_empty()
            && self.sensor.as_ref().is_none_or(|s| s.readings.is_empty())
            && self.captions.is_empty()
            && self.tiles.is_empty()
    }

    pub fn tweet_ids(&self) -> BTreeSet<&str> {
        self.tweets.iter().map(|t| t.id.as_str()).collect()
    }

    pub fn call_ids(&self) -> BTreeSet<&str> {
        self.calls_311.iter().map(|t| t.id.as_str()).collect()
    }

    pub fn tile_ids(&self) -> BTreeSet<&str> {
        self.tiles
            .iter()
            .map(|t| t.tile_id.as_str())
            .chain(self.captions.iter().map(|c| c.id.as_str()))
            .collect()
    }

    pub fn sensor_ids(&self) -> BTreeSet<&str> {
        self.sensor.iter().map(|s| s.sensor_id.as_str()).collect()
    }

    pub fn kb_ids(&self) -> BTreeSet<&str> {
        self.fema_prior.iter().map(|f| f.ref_id.as_str()).collect()
    }
}

const NONE_RETRIEVED: &str = "None retrieved";

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn evidence_lines(items: &[EvidenceItem], zip: &Zip) -> String {
    if items.is_empty() {
        return NONE_RETRIEVED.to_owned();
    }
    items
        .iter()
        .map(|it| format!("- [{}] (ZIP {}) {}", it.id, zip, one_line(&it.text)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn sensor_table(sensor: Option<&SensorEvidence>) -> String {
    let Some(s) = sensor else {
        return NONE_RETRIEVED.to_owned();
    };
    let mut out = format!(
        "Sensor {} ({:.1} km from ZIP centroid)\n",
        s.sensor_id, s.distance_km
    );
    if s.readings.is_empty() {
        out.push_str("No readings in the query time window.");
        return out;
    }
    out.push_str("| hour (UTC) | precipitation (inches) |\n");
    for r in &s.readings {
        out.push_str(&format!("| {} | {:.2} |\n", r.hour.format("%Y-%m-%d %H:%M"), r.precip_in));
    }
    let total: f64 = s.readings.iter().map(|r| r.precip_in).sum();
    out.push_str(&format!("Total: {:.2} inches over {} readings", total, s.readings.len()));
    out
}

/// Fills the user prompt: header, sensor block with its temporal warning,
/// FEMA prior, tweets, 311 calls, captions (when the bundle carries imagery
/// context) and the output schema.
pub fn assemble_user_prompt(templates: &PromptTemplates, bundle: &EvidenceBundle) -> String {
    let zip = bundle.zip.to_string();
    let start = bundle.window.start_date().format("%Y-%m-%d").to_string();
    let end = bundle.window.end_date().format("%Y-%m-%d").to_string();
    let tiles = if bundle.tiles.is_empty() {
        "None".to_owned()
    } else {
        bundle.tiles.iter().map(|t| t.tile_id.as_str()).collect::<Vec<_>>().join(", ")
    };
    let kb = bundle
        .fema_prior
        .as_ref()
        .map_or_else(|| "None available".to_owned(), |f| format!("[{}] {}", f.ref_id, one_line(&f.summary)));
    let sensors = sensor_table(bundle.sensor.as_ref());
    let tweets = evidence_lines(&bundle.tweets, &bundle.zip);
    let calls = evidence_lines(&bundle.calls_311, &bundle.zip);
    let mut out = render_template(
        templates.get("user_prompt.txt"),
        &[
            ("zip_code", &zip),
            ("start", &start),
            ("end", &end),
            ("imagery_tile_ids", &tiles),
            ("start_date", &start),
            ("sensor_table", &sensors),
            ("kb_summary", &kb),
            ("tweet_list", &tweets),
            ("call_list", &calls),
        ],
    );
    if bundle.imagery_context {
        let captions = if bundle.captions.is_empty() {
            NONE_RETRIEVED.to_owned()
        } else {
            bundle
                .captions
                .iter()
                .map(|c| format!("- [{}] {}", c.id, one_line(&c.text)))
                .collect::<Vec<_>>()
                .join("\n")
        };
        out.push_str(&render_template(templates.get("user_captions.txt"), &[("caption_list", &captions)]));
    }
    out.push_str(templates.get("output_schema.txt"));
    out
}

/// User prompt for the visual analyst: the text prompt plus the request
/// for an explicit recession flag.
pub fn assemble_visual_user_prompt(templates: &PromptTemplates, bundle: &EvidenceBundle) -> String {
    let mut out = assemble_user_prompt(templates, bundle);
    out.push('\n');
    out.push_str(templates.get("visual_addendum.txt"));
    out
}
