use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::prompts::EvidenceBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("no JSON object found in model output")]
    NoJson,
    #[error("required field {0} is missing")]
    MissingField(&'static str),
    #[error("field {field} has an invalid value: {value}")]
    InvalidField { field: &'static str, value: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceRefs {
    pub imagery_tile_ids: Vec<String>,
    pub tweet_ids: Vec<String>,
    pub call_311_ids: Vec<String>,
    pub sensor_ids: Vec<String>,
    pub kb_refs: Vec<String>,
}

impl EvidenceRefs {
    pub fn is_empty(&self) -> bool {
        self.imagery_tile_ids.is_empty()
            && self.tweet_ids.is_empty()
            && self.call_311_ids.is_empty()
            && self.sensor_ids.is_empty()
            && self.kb_refs.is_empty()
    }

    /// Union preserving first-seen order.
    pub fn merged(&self, other: &EvidenceRefs) -> EvidenceRefs {
        fn union(a: &[String], b: &[String]) -> Vec<String> {
            let mut out = a.to_vec();
            for x in b {
                if !out.contains(x) {
                    out.push(x.clone());
                }
            }
            out
        }
        EvidenceRefs {
            imagery_tile_ids: union(&self.imagery_tile_ids, &other.imagery_tile_ids),
            tweet_ids: union(&self.tweet_ids, &other.tweet_ids),
            call_311_ids: union(&self.call_311_ids, &other.call_311_ids),
            sensor_ids: union(&self.sensor_ids, &other.sensor_ids),
            kb_refs: union(&self.kb_refs, &other.kb_refs),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportFlags {
    /// A percentage or the confidence was outside its range and clamped.
    pub clamped: bool,
    /// The model omitted `recession_observed` and it was inferred.
    pub recession_inferred: bool,
    /// The model omitted `confidence`; 0.0 was substituted.
    pub confidence_missing: bool,
    /// Evidence references that named ids absent from the bundle.
    pub stripped_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystReport {
    pub flood_extent_pct: f64,
    pub damage_severity_pct: f64,
    pub recession_observed: bool,
    pub confidence: f64,
    pub roads_impacted: Vec<String>,
    pub reasoning: String,
    pub evidence_refs: EvidenceRefs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default)]
    pub flags: ReportFlags,
}

/// Context used to infer a missing recession flag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecessionHint {
    pub after_peak: bool,
}

/// Extent below which a report from after the peak is read as recession.
const RECESSION_EXTENT_PCT: f64 = 5.0;

fn strip_fences(raw: &str) -> &str {
    let Some(open) = raw.find("```") else { return raw };
    let body = &raw[open + 3..];
    let body = match body.find('\n') {
        Some(nl) if body[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => &body[nl + 1..],
        _ => body,
    };
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Returns the first complete JSON object in `raw`, looking inside a code
/// fence first when one is present.
pub fn extract_json_object(raw: &str) -> Option<Map<String, Value>> {
    let first_object = |s: &str| {
        s.match_indices('{').find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&s[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(m))) => Some(m),
                _ => None,
            }
        })
    };
    first_object(strip_fences(raw)).or_else(|| first_object(raw))
}

fn number(v: &Value, field: &'static str) -> Result<f64, ReportError> {
    let invalid = || ReportError::InvalidField {
        field,
        value: v.to_string(),
    };
    let x = match v {
        Value::Number(n) => n.as_f64().ok_or_else(invalid)?,
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse().map_err(|_| invalid())?,
        _ => return Err(invalid()),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid())
    }
}

fn boolean(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn string_list(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|x| match x {
                Value::String(s) => Some(s.trim().to_owned()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .filter(|s| !s.is_empty())
            .collect(),
        Some(Value::String(s)) if !s.trim().is_empty() => vec![s.trim().to_owned()],
        _ => Vec::new(),
    }
}

fn clamp(x: f64, hi: f64, clamped: &mut bool) -> f64 {
    let y = x.clamp(0.0, hi);
    *clamped |= y != x;
    y
}

/// Parses a model response in the report schema. Estimates are read from
/// the `estimates` object, or from the top level when that is absent.
pub fn parse_report(raw: &str, hint: RecessionHint) -> Result<AnalystReport, ReportError> {
    let obj = extract_json_object(raw).ok_or(ReportError::NoJson)?;
    let est = match obj.get("estimates") {
        Some(Value::Object(m)) => m,
        _ => &obj,
    };
    let mut flags = ReportFlags::default();
    let extent = est
        .get("flood_extent_pct")
        .ok_or(ReportError::MissingField("flood_extent_pct"))?;
    let extent = clamp(number(extent, "flood_extent_pct")?, 100.0, &mut flags.clamped);
    let damage = est
        .get("damage_severity_pct")
        .ok_or(ReportError::MissingField("damage_severity_pct"))?;
    let damage = clamp(number(damage, "damage_severity_pct")?, 100.0, &mut flags.clamped);
    let confidence = match est.get("confidence").filter(|v| !v.is_null()) {
        Some(v) => clamp(number(v, "confidence")?, 1.0, &mut flags.clamped),
        None => {
            flags.confidence_missing = true;
            0.0
        }
    };
    let recession_observed = match est.get("recession_observed").and_then(boolean) {
        Some(b) => b,
        None => {
            flags.recession_inferred = true;
            extent < RECESSION_EXTENT_PCT && hint.after_peak
        }
    };
    let refs = obj.get("evidence_refs").and_then(Value::as_object);
    let refs_field = |name: &str| string_list(refs.and_then(|r| r.get(name)));
    Ok(AnalystReport {
        flood_extent_pct: extent,
        damage_severity_pct: damage,
        recession_observed,
        confidence,
        roads_impacted: string_list(est.get("roads_impacted")),
        reasoning: obj.get("reasoning").and_then(Value::as_str).unwrap_or_default().to_owned(),
        evidence_refs: EvidenceRefs {
            imagery_tile_ids: refs_field("imagery_tile_ids"),
            tweet_ids: refs_field("tweet_ids"),
            call_311_ids: refs_field("call_311_ids"),
            sensor_ids: refs_field("sensor_ids"),
            kb_refs: refs_field("kb_refs"),
        },
        summary: obj
            .get("natural_language_summary")
            .and_then(Value::as_str)
            .map(str::to_owned),
        flags,
    })
}

impl AnalystReport {
    /// Serializes back into the model-facing schema.
    pub fn render(&self) -> String {
        let mut v = json!({
            "reasoning": self.reasoning,
            "estimates": {
                "flood_extent_pct": self.flood_extent_pct,
                "damage_severity_pct": self.damage_severity_pct,
                "roads_impacted": self.roads_impacted,
                "confidence": self.confidence,
                "recession_observed": self.recession_observed,
            },
            "evidence_refs": self.evidence_refs,
        });
        if let Some(s) = &self.summary {
            v["natural_language_summary"] = Value::String(s.clone());
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    /// Drops evidence references that do not name an id in `bundle`.
    pub fn retain_known_refs(&mut self, bundle: &EvidenceBundle) {
        let refs = &mut self.evidence_refs;
        let stripped = &mut self.flags.stripped_refs;
        let mut keep = |kind: &str, ids: &mut Vec<String>, known: std::collections::BTreeSet<&str>| {
            ids.retain(|id| {
                let ok = known.contains(id.as_str());
                if !ok {
                    tracing::warn!(kind, id = %id, "stripping evidence reference absent from the bundle");
                    stripped.push(format!("{kind}:{id}"));
                }
                ok
            });
        };
        keep("imagery_tile_ids", &mut refs.imagery_tile_ids, bundle.tile_ids());
        keep("tweet_ids", &mut refs.tweet_ids, bundle.tweet_ids());
        keep("call_311_ids", &mut refs.call_311_ids, bundle.call_ids());
        keep("sensor_ids", &mut refs.sensor_ids, bundle.sensor_ids());
        keep("kb_refs", &mut refs.kb_refs, bundle.kb_ids());
    }
}
