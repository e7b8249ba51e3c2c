//! Ground-truth joining, MAE with percentile-bootstrap intervals, ablation
//! runs and retrieval-quality audits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::keyword_match;
use crate::exec::Exec;
use crate::geo::ZipRegion;
use crate::text;
use crate::types::{TimeWindow, Zip};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records with ground truth for target {0}")]
    NoUsableRecords(Target),
    #[error("bootstrap needs at least one error value")]
    EmptyErrors,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigLabel {
    TextOnly,
    TextCaption,
    Multimodal,
}

impl ConfigLabel {
    pub const ALL: [ConfigLabel; 3] = [ConfigLabel::TextOnly, ConfigLabel::TextCaption, ConfigLabel::Multimodal];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigLabel::TextOnly => "text_only",
            ConfigLabel::TextCaption => "text_caption",
            ConfigLabel::Multimodal => "multimodal",
        }
    }
}

impl fmt::Display for ConfigLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ConfigLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown mode {s:?} (expected text_only, text_caption or multimodal)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Extent,
    Damage,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Extent => "extent",
            Target::Damage => "damage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub zip: Zip,
    pub flooded_pct: f64,
    #[serde(default)]
    pub mean_pde: Option<f64>,
}

impl GroundTruthRow {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=100.0).contains(&self.flooded_pct) {
            return Err(format!("flooded_pct {} outside [0, 100]", self.flooded_pct));
        }
        match self.mean_pde {
            Some(p) if !(0.0..=1.0).contains(&p) => Err(format!("mean_pde {p} outside [0, 1]")),
            _ => Ok(()),
        }
    }

    /// Damage ground truth on the 0-100 scale.
    pub fn damage_pct(&self) -> Option<f64> {
        self.mean_pde.map(|p| p * 100.0)
    }
}

/// Reads `zip,flooded_pct,mean_pde` rows; an empty `mean_pde` cell means
/// the ZIP has no damage ground truth.
pub fn load_ground_truth(path: &Path) -> Result<BTreeMap<Zip, GroundTruthRow>, EvalError> {
    let parse_err = |detail: String| EvalError::Parse {
        path: path.display().to_string(),
        detail,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<GroundTruthRow>().enumerate() {
        let row = row.map_err(|e| parse_err(format!("row {}: {e}", i + 1)))?;
        row.validate().map_err(|e| parse_err(format!("row {}: {e}", i + 1)))?;
        if out.insert(row.zip.clone(), row).is_some() {
            return Err(parse_err(format!("row {}: duplicate zip", i + 1)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub zip: Zip,
    pub predicted_extent: f64,
    pub predicted_damage: f64,
    pub gt_extent: f64,
    pub gt_damage: Option<f64>,
    pub config_label: ConfigLabel,
}

impl EvalRecord {
    fn pair(&self, target: Target) -> Option<(f64, f64)> {
        match target {
            Target::Extent => Some((self.predicted_extent, self.gt_extent)),
            Target::Damage => self.gt_damage.map(|g| (self.predicted_damage, g)),
        }
    }
}

/// Absolute errors for `target`, skipping rows without ground truth.
pub fn abs_errors(records: &[EvalRecord], target: Target) -> Vec<f64> {
    records
        .iter()
        .filter_map(|r| r.pair(target))
        .map(|(p, g)| (p - g).abs())
        .collect()
}

pub fn mae(records: &[EvalRecord], target: Target) -> Result<f64, EvalError> {
    let errs = abs_errors(records, target);
    if errs.is_empty() {
        return Err(EvalError::NoUsableRecords(target));
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapParams {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        BootstrapParams {
            level: 0.95,
            resamples: 10_000,
            seed: 42,
        }
    }
}

impl BootstrapParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(EvalError::InvalidParam(format!("level {} outside (0, 1)", self.level)));
        }
        if self.resamples == 0 {
            return Err(EvalError::InvalidParam("resamples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Linear interpolation between closest ranks of a sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval of the mean. Resample `i` draws from its
/// own ChaCha stream, so the interval depends only on the seed and not on
/// the execution strategy.
pub fn bootstrap_ci_with(errors: &[f64], params: &BootstrapParams, exec: Exec) -> Result<(f64, f64), EvalError> {
    params.validate()?;
    if errors.is_empty() {
        return Err(EvalError::EmptyErrors);
    }
    let n = errors.len();
    let draw_bound = u32::try_from(n).map_err(|_| EvalError::InvalidParam("too many error values".into()))?;
    let mut means = exec.map_range(params.resamples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(i as u64);
        let sum: f64 = (0..n).map(|_| errors[rng.gen_range(0..draw_bound) as usize]).sum();
        sum / n as f64
    });
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - params.level) / 2.0;
    Ok((percentile(&means, alpha), percentile(&means, 1.0 - alpha)))
}

pub fn bootstrap_ci(errors: &[f64], level: f64, resamples: usize, seed: u64) -> Result<(f64, f64), EvalError> {
    bootstrap_ci_with(errors, &BootstrapParams { level, resamples, seed }, Exec::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub config: ConfigLabel,
    pub target: Target,
    pub mae: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub seed: u64,
}

/// One evaluation query: a ZIP and a date window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub zip: Zip,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl EvalQuery {
    pub fn window(&self) -> Result<TimeWindow, EvalError> {
        TimeWindow::from_dates(self.start, self.end).map_err(|e| EvalError::InvalidParam(e.to_string()))
    }
}

pub fn load_queries(path: &Path) -> Result<Vec<EvalQuery>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    rdr.deserialize::<EvalQuery>()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| EvalError::Parse {
                path: path.display().to_string(),
                detail: format!("row {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Predicted (extent, damage) pair for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub flood_extent_pct: f64,
    pub damage_severity_pct: f64,
}

/// Anything that can answer a query in a given configuration.
pub trait Assessor: Sync {
    fn predict(&self, zip: &Zip, window: &TimeWindow, config: ConfigLabel) -> Result<Prediction, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedQuery {
    pub zip: Zip,
    pub config: ConfigLabel,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub records: Vec<EvalRecord>,
    pub metrics: Vec<MetricResult>,
    pub skipped: Vec<SkippedQuery>,
}

/// Runs every query under every configuration. Queries run through `exec`;
/// metrics are reduced sequentially in (config, target) order.
pub fn run_ablation(
    queries: &[EvalQuery],
    configs: &[ConfigLabel],
    assessor: &dyn Assessor,
    ground_truth: &BTreeMap<Zip, GroundTruthRow>,
    params: &BootstrapParams,
    exec: Exec,
) -> Result<AblationReport, EvalError> {
    params.validate()?;
    let jobs: Vec<(ConfigLabel, &EvalQuery)> = configs
        .iter()
        .flat_map(|&c| queries.iter().map(move |q| (c, q)))
        .collect();
    let outcomes = exec.map(&jobs, |&(config, q)| -> Result<EvalRecord, String> {
        let gt = ground_truth.get(&q.zip).ok_or("no ground truth for zip")?;
        let window = q.window().map_err(|e| e.to_string())?;
        let p = assessor.predict(&q.zip, &window, config)?;
        Ok(EvalRecord {
            zip: q.zip.clone(),
            predicted_extent: p.flood_extent_pct,
            predicted_damage: p.damage_severity_pct,
            gt_extent: gt.flooded_pct,
            gt_damage: gt.damage_pct(),
            config_label: config,
        })
    });
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for ((config, q), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => records.push(r),
            Err(reason) => {
                tracing::warn!(zip = %q.zip, %config, %reason, "query skipped");
                skipped.push(SkippedQuery {
                    zip: q.zip.clone(),
                    config: *config,
                    reason,
                });
            }
        }
    }
    let mut metrics = Vec::new();
    for &config in configs {
        let rows: Vec<EvalRecord> = records.iter().filter(|r| r.config_label == config).cloned().collect();
        for target in [Target::Extent, Target::Damage] {
            let errs = abs_errors(&rows, target);
            if errs.is_empty() {
                continue;
            }
            let (ci_low, ci_high) = bootstrap_ci_with(&errs, params, exec)?;
            metrics.push(MetricResult {
                config,
                target,
                mae: mae(&rows, target)?,
                ci_low,
                ci_high,
                n: errs.len(),
                seed: params.seed,
            });
        }
    }
    Ok(AblationReport {
        records,
        metrics,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalQuality {
    /// Share of retrieved texts with at least one keyword, 0-100.
    pub topic_pct: f64,
    /// Share of retrieved texts naming at least one gazetteer place, 0-100.
    pub geo_pct: f64,
    pub avg_per_query: f64,
    pub n_queries: usize,
    pub n_docs: usize,
}

/// Audits retrieved texts, one inner list per query. Gazetteer entries
/// match as whole token runs, so "Katy Freeway" needs both tokens adjacent.
pub fn retrieval_quality(results: &[Vec<String>], keywords: &BTreeSet<String>, gazetteer: &[String]) -> RetrievalQuality {
    let places: Vec<Vec<String>> = gazetteer.iter().map(|g| text::tokens(g)).filter(|t| !t.is_empty()).collect();
    let (mut n_docs, mut topic, mut geo) = (0usize, 0usize, 0usize);
    for doc in results.iter().flatten() {
        n_docs += 1;
        topic += usize::from(keyword_match(doc, keywords));
        let toks = text::tokens(doc);
        geo += usize::from(places.iter().any(|p| text::contains_token_run(&toks, p)));
    }
    let pct = |k: usize| if n_docs == 0 { 0.0 } else { 100.0 * k as f64 / n_docs as f64 };
    RetrievalQuality {
        topic_pct: pct(topic),
        geo_pct: pct(geo),
        avg_per_query: if results.is_empty() { 0.0 } else { n_docs as f64 / results.len() as f64 },
        n_queries: results.len(),
        n_docs,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_records_csv<W: Write>(records: &[EvalRecord], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "zip", "predicted_extent", "predicted_damage", "gt_extent", "gt_damage"])?;
    for r in records {
        w.write_record([
            r.config_label.as_str().to_owned(),
            r.zip.to_string(),
            r.predicted_extent.to_string(),
            r.predicted_damage.to_string(),
            r.gt_extent.to_string(),
            opt(r.gt_damage),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv<W: Write>(metrics: &[MetricResult], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "target", "mae", "ci_low", "ci_high", "n", "seed"])?;
    for m in metrics {
        w.write_record([
            m.config.as_str().to_owned(),
            m.target.to_string(),
            m.mae.to_string(),
            m.ci_low.to_string(),
            m.ci_high.to_string(),
            m.n.to_string(),
            m.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// FeatureCollection joining each record to its ZIP polygon. Records
/// whose ZIP has no region are left out.
pub fn predictions_geojson(records: &[EvalRecord], regions: &[ZipRegion]) -> Value {
    let by_zip: BTreeMap<&Zip, &ZipRegion> = regions.iter().map(|r| (&r.zip, r)).collect();
    let features: Vec<Value> = records
        .iter()
        .filter_map(|r| {
            let region = by_zip.get(&r.zip)?;
            let rings: Vec<Vec<[f64; 2]>> = region
                .polygon
                .iter()
                .map(|ring| ring.iter().map(|p| [p.lon, p.lat]).collect())
                .collect();
            Some(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": rings},
                "properties": {
                    "zip": r.zip,
                    "config": r.config_label,
                    "predicted_extent": r.predicted_extent,
                    "predicted_damage": r.predicted_damage,
                    "gt_extent": r.gt_extent,
                    "gt_damage": r.gt_damage,
                },
            }))
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}
