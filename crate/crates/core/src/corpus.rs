//! Document ingestion, the tweet filtering pipeline and the immutable
//! document store.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::exec::Exec;
use crate::geo::LatLon;
use crate::text;
use crate::types::{parse_timestamp, Zip};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: first record is not valid {format}: {detail}")]
    FormatMismatch {
        path: String,
        format: &'static str,
        detail: String,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("invalid filter config: {0}")]
    InvalidFilterConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Tweet,
    #[serde(rename = "call_311")]
    Call311,
    Caption,
    SensorNote,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Tweet => "tweet",
            Source::Call311 => "call_311",
            Source::Caption => "caption",
            Source::SensorNote => "sensor_note",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tweet" => Ok(Source::Tweet),
            "call_311" | "311" => Ok(Source::Call311),
            "caption" => Ok(Source::Caption),
            "sensor_note" => Ok(Source::SensorNote),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// One retrievable evidence item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source: Source,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zip: Option<Zip>,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<LatLon>,
}

/// Immutable, id-addressable collection of documents in insertion order.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
    skipped: usize,
}

impl DocumentStore {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if by_id.insert(d.doc_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(d.doc_id.clone()));
            }
        }
        Ok(DocumentStore {
            docs,
            by_id,
            skipped: 0,
        })
    }

    /// Concatenates stores; ids must stay unique across all of them.
    pub fn merge(stores: impl IntoIterator<Item = DocumentStore>) -> Result<Self, CorpusError> {
        let mut docs = Vec::new();
        let mut skipped = 0;
        for s in stores {
            skipped += s.skipped;
            docs.extend(s.docs);
        }
        let mut merged = DocumentStore::from_documents(docs)?;
        merged.skipped = skipped;
        Ok(merged)
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Records dropped as malformed during ingestion.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.docs
    }

    /// Writes the store as JSONL, one [`Document`] per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for d in &self.docs {
            out.push_str(&serde_json::to_string(d).expect("document serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Filtering

pub const DEFAULT_ALLOW_KEYWORDS: &[&str] = &[
    "flood", "flooding", "flooded", "hurricane", "storm", "rain", "underwater", "rescue",
    "trapped", "stuck", "help", "emergency", "911", "evacuate", "damage", "collapsed", "power",
    "outage", "road", "bridge", "bayou", "creek",
];

pub const DEFAULT_BLOCK_KEYWORDS: &[&str] = &[
    "spotify", "music", "song", "album", "lyrics", "vote", "election", "trump", "biden",
    "president", "giveaway", "contest", "win", "sale", "shirt", "merch", "game", "nfl", "nba",
    "football", "baseball", "love", "heart", "tears",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub allow_keywords: BTreeSet<String>,
    pub block_keywords: BTreeSet<String>,
    pub max_hashtags: usize,
    pub max_urls: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            allow_keywords: DEFAULT_ALLOW_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            block_keywords: DEFAULT_BLOCK_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            max_hashtags: 5,
            max_urls: 3,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidFilterConfig(m));
        if self.max_hashtags < 1 || self.max_urls < 1 {
            return bad("max_hashtags and max_urls must be at least 1".into());
        }
        for kw in self.allow_keywords.iter().chain(&self.block_keywords) {
            if kw.trim().is_empty() || *kw != text::normalize(kw) {
                return bad(format!("keyword {kw:?} must be non-empty and lowercase"));
            }
        }
        if let Some(kw) = self.allow_keywords.intersection(&self.block_keywords).next() {
            return bad(format!("keyword {kw:?} is in both allow and block lists"));
        }
        Ok(())
    }

    /// Loads a TOML document; absent keys keep the shipped defaults.
    pub fn from_toml_str(s: &str) -> Result<Self, CorpusError> {
        let cfg: FilterConfig =
            toml::from_str(s).map_err(|e| CorpusError::InvalidFilterConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let s = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        FilterConfig::from_toml_str(&s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input_count: usize,
    pub retweets_removed: usize,
    pub blocked: usize,
    pub no_allow_match: usize,
    pub spam_removed: usize,
    pub kept: usize,
}

impl FilterStats {
    pub fn is_conserved(&self) -> bool {
        self.input_count
            == self.retweets_removed + self.blocked + self.no_allow_match + self.spam_removed + self.kept
    }
}

/// Which stage, if any, rejected a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Retweet,
    Blocked,
    NoAllowMatch,
    Spam,
    Kept,
}

pub fn is_retweet(text: &str) -> bool {
    text.trim_start()
        .get(..4)
        .is_some_and(|p| p.eq_ignore_ascii_case("rt @"))
}

/// Whole-word, case-insensitive match of any keyword. Multi-token keywords
/// must appear as a contiguous token run.
pub fn keyword_match(text: &str, keywords: &BTreeSet<String>) -> bool {
    let toks = text::tokens(text);
    keywords_in_tokens(&toks, keywords)
}

fn keywords_in_tokens(toks: &[String], keywords: &BTreeSet<String>) -> bool {
    keywords.iter().any(|kw| {
        let kw_toks = text::tokens(kw);
        match kw_toks.as_slice() {
            [single] => toks.iter().any(|t| t == single),
            _ => text::contains_token_run(toks, &kw_toks),
        }
    })
}

pub fn count_hashtags(text: &str) -> usize {
    let mut chars = text.chars().peekable();
    let mut n = 0;
    while let Some(c) = chars.next() {
        if c == '#' && chars.peek().is_some_and(|d| d.is_alphanumeric() || *d == '_') {
            n += 1;
        }
    }
    n
}

pub fn count_urls(text: &str) -> usize {
    let lower = text.to_lowercase();
    lower.matches("http://").count() + lower.matches("https://").count()
}

pub fn is_spam(text: &str, cfg: &FilterConfig) -> bool {
    count_hashtags(text) > cfg.max_hashtags || count_urls(text) > cfg.max_urls
}

/// Classifies one text through the stages in their fixed order.
pub fn classify(text: &str, cfg: &FilterConfig) -> FilterOutcome {
    if is_retweet(text) {
        return FilterOutcome::Retweet;
    }
    let toks = text::tokens(text);
    if keywords_in_tokens(&toks, &cfg.block_keywords) {
        FilterOutcome::Blocked
    } else if !keywords_in_tokens(&toks, &cfg.allow_keywords) {
        FilterOutcome::NoAllowMatch
    } else if is_spam(text, cfg) {
        FilterOutcome::Spam
    } else {
        FilterOutcome::Kept
    }
}

/// Retweet removal, block-list rejection, allow-list requirement and spam
/// removal, in that order. Kept documents preserve input order.
pub fn filter_pipeline(raw: &[Document], cfg: &FilterConfig) -> (Vec<Document>, FilterStats) {
    filter_pipeline_with(raw, cfg, Exec::default())
}

pub fn filter_pipeline_with(
    raw: &[Document],
    cfg: &FilterConfig,
    exec: Exec,
) -> (Vec<Document>, FilterStats) {
    let outcomes = exec.map(raw, |d| classify(&d.text, cfg));
    let mut stats = FilterStats {
        input_count: raw.len(),
        ..FilterStats::default()
    };
    let mut kept = Vec::new();
    for (doc, outcome) in raw.iter().zip(outcomes) {
        match outcome {
            FilterOutcome::Retweet => stats.retweets_removed += 1,
            FilterOutcome::Blocked => stats.blocked += 1,
            FilterOutcome::NoAllowMatch => stats.no_allow_match += 1,
            FilterOutcome::Spam => stats.spam_removed += 1,
            FilterOutcome::Kept => {
                stats.kept += 1;
                kept.push(doc.clone());
            }
        }
    }
    (kept, stats)
}

// ---------------------------------------------------------------------------
// Ingestion

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

/// Column names used when reading CSV input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvColumns {
    pub id: String,
    pub text: String,
    pub zip: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            id: "id".into(),
            text: "text".into(),
            zip: "zip".into(),
            timestamp: "timestamp".into(),
            lat: "lat".into(),
            lon: "lon".into(),
        }
    }
}

/// Field values of one raw record before validation.
#[derive(Debug, Default)]
struct RawRecord {
    id: Option<String>,
    text: Option<String>,
    zip: Option<String>,
    timestamp: Option<String>,
    lat: Option<f64>,
    lon: Option<f64>,
}

impl RawRecord {
    fn into_document(self, source: Source) -> Result<Document, String> {
        let doc_id = self.id.filter(|s| !s.trim().is_empty()).ok_or("missing id")?;
        let text = self.text.ok_or("missing text")?;
        if text::normalize(&text).trim().is_empty() {
            return Err("empty text".into());
        }
        let zip = match self.zip.filter(|z| !z.trim().is_empty()) {
            Some(z) => Some(Zip::new(&z).map_err(|e| e.to_string())?),
            None => None,
        };
        let ts = self.timestamp.ok_or("missing timestamp")?;
        let timestamp = parse_timestamp(&ts).map_err(|e| e.to_string())?;
        let geo = match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => Some(LatLon::new(lat, lon).map_err(|e| e.to_string())?),
            (None, None) => None,
            _ => return Err("lat and lon must be given together".into()),
        };
        Ok(Document {
            doc_id,
            source,
            text,
            zip,
            timestamp,
            geo,
        })
    }
}

fn value_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn value_f64(v: Option<&Value>) -> Option<f64> {
    match v? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Reads raw records into a store. Malformed records are counted in
/// [`DocumentStore::skipped`]; an unparseable first record aborts.
pub fn ingest(
    path: &Path,
    format: InputFormat,
    source: Source,
    columns: &CsvColumns,
) -> Result<DocumentStore, CorpusError> {
    let records = match format {
        InputFormat::Jsonl => read_jsonl_records(path)?,
        InputFormat::Csv => read_csv_records(path, columns)?,
    };
    let mut docs = Vec::with_capacity(records.len());
    let mut seen = std::collections::HashSet::new();
    let mut skipped = 0;
    for (line, rec) in records {
        match rec.and_then(|r| r.into_document(source)) {
            Ok(doc) if seen.insert(doc.doc_id.clone()) => docs.push(doc),
            Ok(doc) => {
                tracing::warn!(path = %path.display(), line, id = %doc.doc_id, "duplicate id skipped");
                skipped += 1;
            }
            Err(reason) => {
                tracing::warn!(path = %path.display(), line, %reason, "malformed record skipped");
                skipped += 1;
            }
        }
    }
    let mut store = DocumentStore::from_documents(docs)?;
    store.skipped = skipped;
    Ok(store)
}

type Numbered = (usize, Result<RawRecord, String>);

fn read_jsonl_records(path: &Path) -> Result<Vec<Numbered>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line)
            .map_err(|e| e.to_string())
            .and_then(|v| match v {
                Value::Object(o) => Ok(o),
                _ => Err("record is not a JSON object".to_string()),
            });
        if out.is_empty() {
            if let Err(detail) = &parsed {
                return Err(CorpusError::FormatMismatch {
                    path: path.display().to_string(),
                    format: "jsonl",
                    detail: detail.clone(),
                });
            }
        }
        let rec = parsed.map(|o| RawRecord {
            id: value_string(o.get("id")),
            text: value_string(o.get("text")),
            zip: value_string(o.get("zip")),
            timestamp: value_string(o.get("timestamp")),
            lat: value_f64(o.get("lat")),
            lon: value_f64(o.get("lon")),
        });
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn read_csv_records(path: &Path, cols: &CsvColumns) -> Result<Vec<Numbered>, CorpusError> {
    let mismatch = |detail: String| CorpusError::FormatMismatch {
        path: path.display().to_string(),
        format: "csv",
        detail,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path, io),
            other => mismatch(format!("{other:?}")),
        })?;
    let headers = rdr.headers().map_err(|e| mismatch(e.to_string()))?.clone();
    let idx = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(id_i), Some(text_i), Some(ts_i)) = (idx(&cols.id), idx(&cols.text), idx(&cols.timestamp))
    else {
        return Err(mismatch(format!(
            "header must contain {:?}, {:?} and {:?}",
            cols.id, cols.text, cols.timestamp
        )));
    };
    let (zip_i, lat_i, lon_i) = (idx(&cols.zip), idx(&cols.lat), idx(&cols.lon));
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let rec = match row {
            Ok(r) => {
                let get = |j: Option<usize>| {
                    j.and_then(|j| r.get(j)).map(str::to_owned).filter(|s| !s.is_empty())
                };
                let num = |j: Option<usize>| get(j).and_then(|s| s.trim().parse::<f64>().ok());
                Ok(RawRecord {
                    id: get(Some(id_i)),
                    text: get(Some(text_i)),
                    zip: get(zip_i),
                    timestamp: get(Some(ts_i)),
                    lat: num(lat_i),
                    lon: num(lon_i),
                })
            }
            Err(e) if out.is_empty() => return Err(mismatch(e.to_string())),
            Err(e) => Err(e.to_string()),
        };
        // header is line 1
        out.push((i + 2, rec));
    }
    Ok(out)
}

/// Reads a store previously written with [`DocumentStore::write_jsonl`].
pub fn read_store_jsonl(path: &Path) -> Result<DocumentStore, CorpusError> {
    let s = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let d: Document = serde_json::from_str(line).map_err(|e| CorpusError::FormatMismatch {
            path: path.display().to_string(),
            format: "document jsonl",
            detail: format!("line {}: {e}", i + 1),
        })?;
        docs.push(d);
    }
    DocumentStore::from_documents(docs)
}
