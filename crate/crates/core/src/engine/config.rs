use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::analysts::ChatBackend;
use crate::corpus::{CsvColumns, FilterConfig, InputFormat, Source};
use crate::eval::BootstrapParams;
use crate::fusion::FusionParams;
use crate::http::HttpConfig;
use crate::index::Bm25Params;

/// Full engine configuration, read from one TOML file. Relative paths
/// resolve against the directory holding that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default)]
    pub filter: FilterConfig,
    pub clients: ClientsConfig,
    #[serde(default)]
    pub eval: BootstrapParams,
    #[serde(default)]
    pub runtime: RuntimeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub path: PathBuf,
    pub source: Source,
    #[serde(default = "default_format")]
    pub format: InputFormat,
    /// Run the tweet filtering pipeline over this file.
    #[serde(default)]
    pub filter: bool,
    #[serde(default)]
    pub columns: CsvColumns,
}

fn default_format() -> InputFormat {
    InputFormat::Jsonl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Raw corpora, ingested at load time.
    #[serde(default)]
    pub corpora: Vec<CorpusFile>,
    /// Prebuilt document store (output of `ingest`); replaces `corpora`.
    #[serde(default)]
    pub store: Option<PathBuf>,
    pub zips: PathBuf,
    #[serde(default)]
    pub sensors: Option<PathBuf>,
    #[serde(default)]
    pub tiles: Option<PathBuf>,
    /// JSON object mapping ZIP to a FEMA prior summary.
    #[serde(default)]
    pub fema_priors: Option<PathBuf>,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    /// Evaluation queries CSV (`zip,start,end`).
    #[serde(default)]
    pub queries: Option<PathBuf>,
    /// Document embeddings in the EMB1 format.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    /// Place names, one per line, for the retrieval audit.
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
}

impl DataConfig {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v: Vec<&mut PathBuf> = self.corpora.iter_mut().map(|c| &mut c.path).collect();
        v.push(&mut self.zips);
        v.extend(
            [
                &mut self.store,
                &mut self.sensors,
                &mut self.tiles,
                &mut self.fema_priors,
                &mut self.ground_truth,
                &mut self.queries,
                &mut self.embeddings,
                &mut self.templates,
                &mut self.gazetteer,
            ]
            .into_iter()
            .filter_map(Option::as_mut),
        );
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Results kept per hybrid search.
    pub top_k: usize,
    pub tweet_cap: usize,
    pub call_cap: usize,
    pub candidates: usize,
    pub rrf_k: u32,
    pub rerank_limit: usize,
    pub radius_km: f64,
    pub min_tiles: usize,
    /// Appended to the ZIP code to form the retrieval query.
    pub query_terms: String,
    pub bm25: Bm25Params,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_k: 20,
            tweet_cap: 20,
            call_cap: 20,
            candidates: 50,
            rrf_k: 60,
            rerank_limit: 20,
            radius_km: 5.0,
            min_tiles: 1,
            query_terms: "flood flooding flooded water rescue damage".into(),
            bm25: Bm25Params::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RerankerBackend {
    #[default]
    Identity,
    Remote(HttpConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderBackend {
    #[default]
    None,
    /// EMB1 file of query vectors keyed by ZIP code.
    Lookup { path: PathBuf },
    Openai(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientsConfig {
    pub text: ChatBackend,
    /// Defaults to a separate client built from `text`.
    #[serde(default)]
    pub visual: Option<ChatBackend>,
    #[serde(default)]
    pub query_parser: Option<ChatBackend>,
    #[serde(default)]
    pub reranker: RerankerBackend,
    #[serde(default)]
    pub embedder: EmbedderBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Cache responses by (zip, window, mode, config hash).
    pub cache: bool,
    /// Use the data-parallel execution paths.
    pub parallel: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            cache: false,
            parallel: true,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, EngineError> {
        toml::from_str(s).map_err(|e| EngineError::Config(e.to_string()))
    }

    /// Rebases every relative path onto `base` and checks that it exists.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<(), EngineError> {
        let mut chat_paths: Vec<&mut PathBuf> = Vec::new();
        for backend in [Some(&mut self.clients.text), self.clients.visual.as_mut(), self.clients.query_parser.as_mut()]
            .into_iter()
            .flatten()
        {
            if let ChatBackend::Mock { fixtures: Some(p) } = backend {
                chat_paths.push(p);
            }
        }
        if let EmbedderBackend::Lookup { path } = &mut self.clients.embedder {
            chat_paths.push(path);
        }
        for p in self.data.paths_mut().into_iter().chain(chat_paths) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(EngineError::MissingPath(p.clone()));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let r = &self.retrieval;
        let bad = |m: &str| Err(EngineError::Config(m.to_owned()));
        if r.top_k == 0 || r.tweet_cap == 0 || r.call_cap == 0 || r.candidates == 0 || r.rerank_limit == 0 {
            return bad("retrieval counts must be at least 1");
        }
        if r.rrf_k == 0 {
            return bad("retrieval.rrf_k must be at least 1");
        }
        if !(r.radius_km > 0.0 && r.radius_km.is_finite()) {
            return bad("retrieval.radius_km must be positive");
        }
        if r.min_tiles == 0 {
            return bad("retrieval.min_tiles must be at least 1");
        }
        if self.data.store.is_none() && self.data.corpora.is_empty() {
            return bad("data needs either `store` or at least one `corpora` entry");
        }
        r.bm25.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.fusion.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.filter.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.eval.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        Ok(())
    }
}
