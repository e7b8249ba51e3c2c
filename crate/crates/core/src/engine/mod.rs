//! End-to-end orchestration: retrieve evidence for a (ZIP, window) query,
//! assemble prompts, call the analysts, parse their reports and fuse them.

mod config;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::NaiveDate;
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    ClientsConfig, CorpusFile, DataConfig, EmbedderBackend, EngineConfig, RerankerBackend, RetrievalConfig,
    RuntimeConfig,
};

use crate::analysts::{
    assemble_system_prompt, assemble_user_prompt, assemble_visual_user_prompt, parse_report, parse_user_query,
    AnalystReport, ChatMessage, ChatModel, EvidenceBundle, EvidenceItem, EvidenceRefs, FemaPrior, ParsedQuery,
    PromptError, PromptTemplates, RecessionHint, ReportError, SensorEvidence, SystemMode, TileRef,
};
use crate::corpus::{filter_pipeline_with, ingest, read_store_jsonl, CorpusError, DocumentStore, FilterStats, Source};
use crate::eval::{Assessor, ConfigLabel, EvalError, Prediction};
use crate::exec::Exec;
use crate::fusion::{fuse, Branch, FusionError, FusionInput};
use crate::geo::{
    load_sensors_csv, load_tiles_jsonl, load_zip_regions, nearest_sensor, tiles_for_query, GeoError, ImageryTile,
    SensorSite, TileQuery, TileSelection, ZipRegion,
};
use crate::http::{ClientError, HttpClient};
use crate::index::{
    build_sparse_with, read_embeddings, DenseIndex, HybridConfig, HybridSearcher, IdentityScorer, IndexError,
    RemoteReranker, RerankScorer, RrfConfig, SearchFilter, SearchProvenance, SparseIndex,
};
use crate::types::{TimeWindow, TypeError, Zip};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("configured path does not exist: {}", .0.display())]
    MissingPath(PathBuf),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("client setup failed: {0}")]
    ClientSetup(ClientError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("unknown zip {0}")]
    UnknownZip(String),
    #[error("{role} analyst failed: {source}")]
    Analyst {
        role: &'static str,
        #[source]
        source: ClientError,
    },
    #[error("{role} analyst returned an unusable report: {source}")]
    Report {
        role: &'static str,
        #[source]
        source: ReportError,
    },
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Coarse error classes, used for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    BadRequest,
    NotFound,
    Upstream,
    Internal,
}

impl EngineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            EngineError::InvalidQuery(_) => ErrorKind::BadRequest,
            EngineError::UnknownZip(_) => ErrorKind::NotFound,
            EngineError::Analyst { .. } | EngineError::Report { .. } => ErrorKind::Upstream,
            _ => ErrorKind::Internal,
        }
    }
}

impl From<TypeError> for EngineError {
    fn from(e: TypeError) -> Self {
        EngineError::InvalidQuery(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessStatus {
    Ok,
    InsufficientEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimates {
    pub flood_extent_pct: f64,
    pub damage_severity_pct: f64,
    pub roads_impacted: Vec<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalTrace {
    pub query: String,
    pub ids: Vec<String>,
    pub search: SearchProvenance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImageryTrace {
    /// False in text_only mode, where imagery is never consulted.
    pub consulted: bool,
    pub tile_ids: Vec<String>,
    pub caption_doc_ids: Vec<String>,
    pub nearest_pass_used: bool,
    pub fallback_used: bool,
    pub no_imagery: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorTrace {
    pub sensor_id: String,
    pub distance_km: f64,
    pub readings: usize,
    pub total_precip_in: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalystTrace {
    pub text_called: bool,
    pub visual_called: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visual_error: Option<String>,
    /// SHA-256 of each user prompt sent, keyed by analyst role.
    pub prompt_sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tweets: RetrievalTrace,
    pub calls_311: RetrievalTrace,
    pub imagery: ImageryTrace,
    pub sensor: Option<SensorTrace>,
    pub fema_prior: Option<String>,
    pub query_date: NaiveDate,
    pub peak_date: NaiveDate,
    pub analysts: AnalystTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reports {
    pub text: Option<AnalystReport>,
    pub visual: Option<AnalystReport>,
}

/// Answer to one assessment query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssessResponse {
    pub status: AssessStatus,
    pub zip: Zip,
    pub time_window: DateWindow,
    pub mode: ConfigLabel,
    pub estimates: Option<Estimates>,
    pub branch_taken: Option<Branch>,
    pub reasoning: String,
    pub evidence_refs: EvidenceRefs,
    pub natural_language_summary: Option<String>,
    pub reports: Reports,
    pub provenance: Provenance,
}

impl AssessResponse {
    /// Pretty JSON with a trailing newline; byte-stable for equal responses.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("response serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatResponse {
    pub parsed: ParsedQuery,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub assessment: AssessResponse,
}

enum Embedder {
    None,
    Lookup(BTreeMap<String, Vec<f32>>),
    Remote(HttpClient),
}

impl Embedder {
    fn query_vector(&self, zip: &Zip, query: &str) -> Option<Vec<f32>> {
        match self {
            Embedder::None => None,
            Embedder::Lookup(m) => m.get(zip.as_str()).cloned(),
            Embedder::Remote(http) => {
                let body = json!({"model": http.config().model, "input": query});
                match http.post_json("embeddings", &body) {
                    Ok(v) => v
                        .pointer("/data/0/embedding")
                        .and_then(Value::as_array)
                        .map(|xs| xs.iter().filter_map(Value::as_f64).map(|x| x as f32).collect()),
                    Err(e) => {
                        tracing::warn!(error = %e, "query embedding failed; searching sparse only");
                        None
                    }
                }
            }
        }
    }
}

type CacheKey = (Zip, NaiveDate, NaiveDate, ConfigLabel);

pub struct Engine {
    config: EngineConfig,
    config_hash: String,
    templates: PromptTemplates,
    store: DocumentStore,
    filter_stats: Option<FilterStats>,
    sparse: SparseIndex,
    dense: Option<DenseIndex>,
    regions: BTreeMap<Zip, ZipRegion>,
    sensors: Vec<SensorSite>,
    tiles: Vec<ImageryTile>,
    fema: BTreeMap<String, String>,
    text_model: Arc<dyn ChatModel>,
    visual_model: Arc<dyn ChatModel>,
    parser_model: Arc<dyn ChatModel>,
    reranker: Box<dyn RerankScorer>,
    embedder: Embedder,
    cache: Option<Mutex<HashMap<CacheKey, Arc<AssessResponse>>>>,
    exec: Exec,
}

fn read_text(path: &Path) -> Result<String, EngineError> {
    std::fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))
}

/// Ingests the configured corpora, filtering those marked for it. Filter
/// statistics are summed over all filtered files.
pub fn build_store(config: &EngineConfig, exec: Exec) -> Result<(DocumentStore, Option<FilterStats>), EngineError> {
    if let Some(p) = &config.data.store {
        return Ok((read_store_jsonl(p)?, None));
    }
    let mut stores = Vec::new();
    let mut stats: Option<FilterStats> = None;
    for c in &config.data.corpora {
        let store = ingest(&c.path, c.format, c.source, &c.columns)?;
        let skipped = store.skipped();
        let store = if c.filter {
            let (kept, s) = filter_pipeline_with(store.docs(), &config.filter, exec);
            let acc = stats.get_or_insert_with(FilterStats::default);
            acc.input_count += s.input_count;
            acc.retweets_removed += s.retweets_removed;
            acc.blocked += s.blocked;
            acc.no_allow_match += s.no_allow_match;
            acc.spam_removed += s.spam_removed;
            acc.kept += s.kept;
            DocumentStore::from_documents(kept)?
        } else {
            store
        };
        tracing::info!(path = %c.path.display(), source = c.source.as_str(), docs = store.len(), skipped, "corpus loaded");
        stores.push(store);
    }
    Ok((DocumentStore::merge(stores)?, stats))
}

fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

impl Engine {
    /// Reads, resolves and validates a config file, then loads everything.
    pub fn load(config_path: &Path) -> Result<Self, EngineError> {
        let text = read_text(config_path)?;
        let mut config = EngineConfig::from_toml_str(&text)?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base)?;
        Engine::from_config(config, &sha256_hex(&text))
    }

    /// Builds an engine from a config whose paths are already resolved.
    pub fn from_config(config: EngineConfig, config_hash: &str) -> Result<Self, EngineError> {
        config.validate()?;
        let started = Instant::now();
        let exec = if config.runtime.parallel { Exec::Parallel } else { Exec::Sequential };
        let templates = match &config.data.templates {
            Some(dir) => PromptTemplates::load(dir)?,
            None => PromptTemplates::builtin(),
        };
        let (store, filter_stats) = build_store(&config, exec)?;
        let sparse = build_sparse_with(&store, config.retrieval.bm25, exec)?;
        let dense = match &config.data.embeddings {
            Some(p) => {
                let mut set = read_embeddings(p)?;
                set.entries.retain(|(id, _)| store.contains(id));
                Some(DenseIndex::from_embeddings(&set)?)
            }
            None => None,
        };
        let regions = load_zip_regions(&config.data.zips)?
            .into_iter()
            .map(|r| (r.zip.clone(), r))
            .collect();
        let sensors = match &config.data.sensors {
            Some(p) => load_sensors_csv(p)?,
            None => Vec::new(),
        };
        let tiles = match &config.data.tiles {
            Some(p) => load_tiles_jsonl(p)?,
            None => Vec::new(),
        };
        let fema = match &config.data.fema_priors {
            Some(p) => serde_json::from_str(&read_text(p)?)
                .map_err(|e| EngineError::Config(format!("{}: {e}", p.display())))?,
            None => BTreeMap::new(),
        };
        let connect = |b: &crate::analysts::ChatBackend| -> Result<Arc<dyn ChatModel>, EngineError> {
            b.connect(Path::new("")).map(Arc::from).map_err(EngineError::ClientSetup)
        };
        let clients = &config.clients;
        let text_model = connect(&clients.text)?;
        let visual_model = connect(clients.visual.as_ref().unwrap_or(&clients.text))?;
        let parser_model = connect(clients.query_parser.as_ref().unwrap_or(&clients.text))?;
        let reranker: Box<dyn RerankScorer> = match &clients.reranker {
            RerankerBackend::Identity => Box::new(IdentityScorer),
            RerankerBackend::Remote(c) => {
                Box::new(RemoteReranker::new(c.clone()).map_err(EngineError::ClientSetup)?)
            }
        };
        let embedder = match &clients.embedder {
            EmbedderBackend::None => Embedder::None,
            EmbedderBackend::Lookup { path } => {
                Embedder::Lookup(read_embeddings(path)?.entries.into_iter().collect())
            }
            EmbedderBackend::Openai(c) => {
                Embedder::Remote(HttpClient::new(c.clone()).map_err(EngineError::ClientSetup)?)
            }
        };
        tracing::info!(
            docs = store.len(),
            terms = sparse.term_count(),
            vectors = dense.as_ref().map_or(0, DenseIndex::len),
            tiles = tiles.len(),
            sensors = sensors.len(),
            load_ms = started.elapsed().as_millis() as u64,
            "engine loaded"
        );
        Ok(Engine {
            cache: config.runtime.cache.then(|| Mutex::new(HashMap::new())),
            config,
            config_hash: config_hash.to_owned(),
            templates,
            store,
            filter_stats,
            sparse,
            dense,
            regions,
            sensors,
            tiles,
            fema,
            text_model,
            visual_model,
            parser_model,
            reranker,
            embedder,
            exec,
        })
    }

    /// Replaces the analyst clients, e.g. with shared mocks whose call
    /// counters the caller keeps.
    pub fn set_models(&mut self, text: Arc<dyn ChatModel>, visual: Arc<dyn ChatModel>) {
        self.text_model = text;
        self.visual_model = visual;
        if let Some(c) = &self.cache {
            c.lock().clear();
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn store(&self) -> &DocumentStore {
        &self.store
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn filter_stats(&self) -> Option<FilterStats> {
        self.filter_stats
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn zips(&self) -> impl Iterator<Item = &Zip> {
        self.regions.keys()
    }

    fn searcher(&self) -> HybridSearcher<'_> {
        let r = &self.config.retrieval;
        HybridSearcher {
            store: &self.store,
            sparse: &self.sparse,
            dense: self.dense.as_ref(),
            scorer: self.reranker.as_ref(),
            config: HybridConfig {
                candidates: r.candidates,
                rrf: RrfConfig { k: r.rrf_k },
                rerank_limit: r.rerank_limit,
            },
            exec: self.exec,
        }
    }

    fn retrieve(
        &self,
        zip: &Zip,
        window: &TimeWindow,
        source: Source,
        zip_filter: bool,
        cap: usize,
    ) -> Result<(Vec<EvidenceItem>, RetrievalTrace), EngineError> {
        let query = format!("{} {}", zip, self.config.retrieval.query_terms);
        let filter = SearchFilter {
            zip: zip_filter.then(|| zip.clone()),
            sources: Some(BTreeSet::from([source])),
            window: Some(*window),
        };
        let qv = self.embedder.query_vector(zip, &query);
        let top_k = self.config.retrieval.top_k.min(cap);
        let res = self.searcher().search(&query, qv.as_deref(), &filter, top_k)?;
        let items: Vec<EvidenceItem> = res
            .ranking
            .ids()
            .into_iter()
            .filter_map(|id| self.store.get(id))
            .map(|d| EvidenceItem {
                id: d.doc_id.clone(),
                text: d.text.clone(),
            })
            .collect();
        let trace = RetrievalTrace {
            query,
            ids: items.iter().map(|i| i.id.clone()).collect(),
            search: res.provenance,
        };
        Ok((items, trace))
    }

    fn select_tiles(&self, region: &ZipRegion, window: &TimeWindow) -> Result<TileSelection, EngineError> {
        let q = TileQuery {
            radius_km: self.config.retrieval.radius_km,
            min_tiles: self.config.retrieval.min_tiles,
        };
        Ok(tiles_for_query(region, window, &self.tiles, q)?)
    }

    fn build_bundle(
        &self,
        region: &ZipRegion,
        window: &TimeWindow,
        mode: ConfigLabel,
    ) -> Result<(EvidenceBundle, Provenance), EngineError> {
        let zip = &region.zip;
        let r = &self.config.retrieval;
        let (tweets, tweet_trace) = self.retrieve(zip, window, Source::Tweet, false, r.tweet_cap)?;
        let (calls, call_trace) = self.retrieve(zip, window, Source::Call311, true, r.call_cap)?;
        let mut bundle = EvidenceBundle::new(zip.clone(), *window);
        bundle.tweets = tweets;
        bundle.calls_311 = calls;

        let mut imagery = ImageryTrace::default();
        if mode != ConfigLabel::TextOnly {
            let sel = self.select_tiles(region, window)?;
            imagery.consulted = true;
            imagery.nearest_pass_used = sel.nearest_pass_used;
            imagery.fallback_used = sel.fallback_used;
            imagery.no_imagery = sel.no_imagery;
            for st in &sel.tiles {
                let t = &st.tile;
                imagery.tile_ids.push(t.tile_id.clone());
                bundle.tiles.push(TileRef {
                    tile_id: t.tile_id.clone(),
                    uri: t.uri.clone(),
                });
                if let Some(doc) = t.caption_doc_id.as_deref().and_then(|id| self.store.get(id)) {
                    imagery.caption_doc_ids.push(doc.doc_id.clone());
                    bundle.captions.push(EvidenceItem {
                        id: t.tile_id.clone(),
                        text: doc.text.clone(),
                    });
                }
            }
            bundle.imagery_context = true;
        }

        let mut sensor_trace = None;
        if !self.sensors.is_empty() {
            let (site, dist) = nearest_sensor(region, &self.sensors)?;
            let readings: Vec<_> = site.readings_in(window).cloned().collect();
            sensor_trace = Some(SensorTrace {
                sensor_id: site.sensor_id.clone(),
                distance_km: dist,
                readings: readings.len(),
                total_precip_in: readings.iter().map(|r| r.precip_in).sum(),
            });
            bundle.sensor = Some(SensorEvidence {
                sensor_id: site.sensor_id.clone(),
                distance_km: dist,
                readings,
            });
        }

        bundle.fema_prior = self.fema.get(zip.as_str()).map(|s| FemaPrior {
            ref_id: format!("fema:{zip}"),
            summary: s.clone(),
        });
        let prov = Provenance {
            tweets: tweet_trace,
            calls_311: call_trace,
            imagery,
            sensor: sensor_trace,
            fema_prior: bundle.fema_prior.as_ref().map(|f| f.ref_id.clone()),
            query_date: window.end_date(),
            peak_date: self.config.fusion.peak_date,
            analysts: AnalystTrace::default(),
        };
        Ok((bundle, prov))
    }

    fn call_analyst(
        &self,
        role: &'static str,
        model: &dyn ChatModel,
        messages: &[ChatMessage],
        hint: RecessionHint,
        bundle: &EvidenceBundle,
    ) -> Result<AnalystReport, EngineError> {
        let raw = model
            .complete(messages)
            .map_err(|source| EngineError::Analyst { role, source })?;
        let mut report = parse_report(&raw, hint).map_err(|source| EngineError::Report { role, source })?;
        report.retain_known_refs(bundle);
        Ok(report)
    }

    pub fn assess(&self, zip: &str, window: TimeWindow, mode: ConfigLabel) -> Result<AssessResponse, EngineError> {
        self.assess_with(zip, window, mode, true).map(Arc::unwrap_or_clone)
    }

    /// Runs one query. With `use_cache` false the response cache is
    /// neither read nor written.
    pub fn assess_with(
        &self,
        zip: &str,
        window: TimeWindow,
        mode: ConfigLabel,
        use_cache: bool,
    ) -> Result<Arc<AssessResponse>, EngineError> {
        let zip = Zip::new(zip)?;
        let key = (zip.clone(), window.start_date(), window.end_date(), mode);
        let cache = self.cache.as_ref().filter(|_| use_cache);
        if let Some(hit) = cache.and_then(|c| c.lock().get(&key).cloned()) {
            tracing::info!(zip = %zip, %mode, config = %self.config_hash, "cache hit");
            return Ok(hit);
        }
        let resp = Arc::new(self.run_query(&zip, &window, mode)?);
        if let Some(c) = cache {
            c.lock().insert(key, Arc::clone(&resp));
        }
        Ok(resp)
    }

    fn run_query(&self, zip: &Zip, window: &TimeWindow, mode: ConfigLabel) -> Result<AssessResponse, EngineError> {
        let region = self
            .regions
            .get(zip)
            .ok_or_else(|| EngineError::UnknownZip(zip.to_string()))?;
        let t0 = Instant::now();
        let (bundle, mut prov) = self.build_bundle(region, window, mode)?;
        let retrieve_ms = t0.elapsed().as_millis() as u64;
        let time_window = DateWindow {
            start: window.start_date(),
            end: window.end_date(),
        };

        if bundle.is_empty() {
            tracing::info!(zip = %zip, %mode, retrieve_ms, "insufficient evidence");
            return Ok(AssessResponse {
                status: AssessStatus::InsufficientEvidence,
                zip: zip.clone(),
                time_window,
                mode,
                estimates: None,
                branch_taken: None,
                reasoning: String::new(),
                evidence_refs: EvidenceRefs::default(),
                natural_language_summary: None,
                reports: Reports { text: None, visual: None },
                provenance: prov,
            });
        }

        let hint = RecessionHint {
            after_peak: window.end_date() > self.config.fusion.peak_date,
        };
        let t1 = Instant::now();
        let system_mode = match mode {
            ConfigLabel::TextOnly => SystemMode::TextOnly,
            _ => SystemMode::Multimodal,
        };
        let user = assemble_user_prompt(&self.templates, &bundle);
        prov.analysts.prompt_sha256.insert("text".into(), sha256_hex(&user));
        let text_msgs = [
            ChatMessage::system(assemble_system_prompt(&self.templates, system_mode)),
            ChatMessage::user(user),
        ];
        prov.analysts.text_called = true;
        let text_report = self.call_analyst("text", self.text_model.as_ref(), &text_msgs, hint, &bundle)?;

        let mut visual_report = None;
        if mode == ConfigLabel::Multimodal && !bundle.tiles.is_empty() {
            let user = assemble_visual_user_prompt(&self.templates, &bundle);
            prov.analysts.prompt_sha256.insert("visual".into(), sha256_hex(&user));
            let attachments = bundle
                .tiles
                .iter()
                .map(|t| t.uri.clone().unwrap_or_else(|| t.tile_id.clone()))
                .collect();
            let msgs = [
                ChatMessage::system(assemble_system_prompt(&self.templates, SystemMode::Multimodal)),
                ChatMessage::user(user).with_attachments(attachments),
            ];
            prov.analysts.visual_called = true;
            match self.call_analyst("visual", self.visual_model.as_ref(), &msgs, hint, &bundle) {
                Ok(r) => visual_report = Some(r),
                Err(e) => {
                    tracing::warn!(zip = %zip, error = %e, "visual analyst failed; fusing text only");
                    prov.analysts.visual_error = Some(e.to_string());
                }
            }
        }
        let analyst_ms = t1.elapsed().as_millis() as u64;

        let fused = fuse(&FusionInput {
            text_report: text_report.clone(),
            visual_report: visual_report.clone(),
            query_date: window.end_date(),
            params: self.config.fusion,
        })?;
        let mut roads = text_report.roads_impacted.clone();
        for r in visual_report.iter().flat_map(|v| &v.roads_impacted) {
            if !roads.contains(r) {
                roads.push(r.clone());
            }
        }
        tracing::info!(
            zip = %zip,
            %mode,
            tweets = bundle.tweets.len(),
            calls_311 = bundle.calls_311.len(),
            tiles = bundle.tiles.len(),
            branch = ?fused.branch_taken,
            retrieve_ms,
            analyst_ms,
            "assess complete"
        );
        Ok(AssessResponse {
            status: AssessStatus::Ok,
            zip: zip.clone(),
            time_window,
            mode,
            estimates: Some(Estimates {
                flood_extent_pct: fused.flood_extent_pct,
                damage_severity_pct: fused.damage_severity_pct,
                roads_impacted: roads,
                confidence: fused.confidence,
            }),
            branch_taken: Some(fused.branch_taken),
            reasoning: text_report.reasoning.clone(),
            evidence_refs: fused.provenance.evidence_refs,
            natural_language_summary: text_report.summary.clone(),
            reports: Reports {
                text: Some(text_report),
                visual: visual_report,
            },
            provenance: prov,
        })
    }

    /// Texts of the tweets retrieved for a query, as fed to the analysts.
    pub fn retrieved_tweets(&self, zip: &str, window: TimeWindow) -> Result<Vec<String>, EngineError> {
        let zip = Zip::new(zip)?;
        let cap = self.config.retrieval.tweet_cap;
        let (items, _) = self.retrieve(&zip, &window, Source::Tweet, false, cap)?;
        Ok(items.into_iter().map(|i| i.text).collect())
    }

    /// Parses a free-text request and assesses it in multimodal mode.
    pub fn chat(&self, message: &str) -> Result<ChatResponse, EngineError> {
        let parsed = parse_user_query(message, self.parser_model.as_ref(), &self.templates).map_err(|source| {
            EngineError::Analyst {
                role: "query parser",
                source,
            }
        })?;
        let q = &parsed.query;
        let (Some(zip), Some(start), Some(end)) = (&q.zip, q.start, q.end) else {
            let why = parsed.diagnostic.clone().unwrap_or_default();
            return Err(EngineError::InvalidQuery(format!(
                "could not extract a zip and dates from the message {why}"
            )
            .trim_end()
            .to_owned()));
        };
        let window = TimeWindow::from_dates(start, end)?;
        let assessment = self.assess(zip.as_str(), window, ConfigLabel::Multimodal)?;
        Ok(ChatResponse {
            parsed: parsed.query,
            diagnostic: parsed.diagnostic,
            assessment,
        })
    }
}

impl Assessor for Engine {
    fn predict(&self, zip: &Zip, window: &TimeWindow, config: ConfigLabel) -> Result<Prediction, String> {
        let r = self.assess_with(zip.as_str(), *window, config, false).map_err(|e| e.to_string())?;
        match &r.estimates {
            Some(e) => Ok(Prediction {
                flood_extent_pct: e.flood_extent_pct,
                damage_severity_pct: e.damage_severity_pct,
            }),
            None => Err("insufficient evidence".into()),
        }
    }
}
