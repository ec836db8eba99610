//! HTTP query service over immutable, preloaded caches.
//!
//! Routes are documented in `docs/API.md`. Every error body is
//! `{"error": {"code": ..., "message": ...}}`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use pathdyn::advect::{IntegrationParams, SeedGrid};
use pathdyn::distribution::{auto_bins, BinRanges, BinningPolicy, DistributionError, DynHistogram, Region};
use pathdyn::exec::Exec;
use pathdyn::simfield::{png_bytes, raster, Colormap, Provenance};
use pathdyn::store::{load_cache, DynamicsCache};
use serde::{Deserialize, Serialize};

use crate::args::{Bins, ServeArgs};
use crate::error::CliError;

/// Progression previews are thinned to at most this many points.
pub const PREVIEW_POINTS: usize = 512;

pub const CACHE_EXTENSION: &str = "dync";

#[derive(Debug, Default)]
pub struct AppState {
    caches: BTreeMap<String, Arc<DynamicsCache>>,
    exec: Exec,
}

impl AppState {
    pub fn new(exec: Exec) -> Self {
        AppState {
            caches: BTreeMap::new(),
            exec,
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, cache: DynamicsCache) -> Result<(), CliError> {
        let id = id.into();
        if self.caches.contains_key(&id) {
            return Err(CliError::usage(format!("duplicate cache id {id:?}")));
        }
        self.caches.insert(id, Arc::new(cache));
        Ok(())
    }

    /// Load the listed files and every `*.dync` in `dir`; ids are file stems.
    pub fn load(paths: &[PathBuf], dir: Option<&Path>, exec: Exec) -> Result<Self, CliError> {
        let mut files = paths.to_vec();
        if let Some(dir) = dir {
            let mut found: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == CACHE_EXTENSION))
                .collect();
            found.sort();
            files.extend(found);
        }
        let mut state = AppState::new(exec);
        for path in files {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::usage(format!("cannot derive an id from {}", path.display())))?
                .to_string();
            let cache = load_cache(&path, None, exec).map_err(|e| CliError::from(e).at(&path))?;
            state.insert(id, cache)?;
        }
        Ok(state)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.caches.keys().map(String::as_str).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }

    fn cache(&self, id: &str) -> Result<Arc<DynamicsCache>, ApiError> {
        self.caches
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_cache", format!("no cache with id {id:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn schema(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "schema", message)
    }
}

impl From<DistributionError> for ApiError {
    fn from(e: DistributionError) -> Self {
        let status = match e {
            DistributionError::EmptyRegion | DistributionError::NoValidSamples => StatusCode::UNPROCESSABLE_ENTITY,
            DistributionError::InvalidRegion(_) | DistributionError::InvalidBinning(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let CliError { code, message } = e.into();
        ApiError::new(status, code, message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

/// `"auto"` or a bin count on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinsSpec {
    Count(usize),
    #[default]
    #[serde(with = "auto_word")]
    Auto,
}

mod auto_word {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        match String::deserialize(d)?.as_str() {
            "auto" => Ok(()),
            other => Err(de::Error::custom(format!("expected \"auto\", got {other:?}"))),
        }
    }
}

impl BinsSpec {
    pub fn count(self) -> Option<usize> {
        match self {
            BinsSpec::Auto => None,
            BinsSpec::Count(n) => Some(n),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub region: Region,
    #[serde(default)]
    pub bins: BinsSpec,
    #[serde(default)]
    pub colormap: Colormap,
    /// Base64 PNG of the colour-mapped field.
    #[serde(default = "yes")]
    pub include_png: bool,
    /// Base64 little-endian f32 grid, row-major, `NaN` for masked seeds.
    #[serde(default = "yes")]
    pub include_values: bool,
    #[serde(default = "yes")]
    pub include_reference: bool,
    /// Domain point whose nearest seed is reported alongside the argmax seed.
    #[serde(default)]
    pub probe: Option<[f64; 2]>,
}

impl QueryRequest {
    pub fn new(region: Region) -> Self {
        QueryRequest {
            region,
            bins: BinsSpec::Auto,
            colormap: Colormap::Viridis,
            include_png: true,
            include_values: true,
            include_reference: true,
            probe: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramView {
    pub n: usize,
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    /// Each half sums to ½.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sample_count: u64,
}

impl From<&DynHistogram> for HistogramView {
    fn from(h: &DynHistogram) -> Self {
        HistogramView {
            n: h.policy.n,
            alpha_range: h.policy.alpha_range,
            beta_range: h.policy.beta_range,
            alpha: h.alpha_half().to_vec(),
            beta: h.beta_half().to_vec(),
            sample_count: h.sample_count,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedView {
    pub index: usize,
    pub i: usize,
    pub j: usize,
    pub position: [f64; 2],
    pub valid_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<f64>,
    /// Absent when the seed has no valid samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramView>,
}

fn seed_view(cache: &DynamicsCache, k: usize, policy: &BinningPolicy, divergence: Option<f64>) -> SeedView {
    let seeds = &cache.header.seeds;
    let p = seeds.seed(k);
    SeedView {
        index: k,
        i: k % seeds.nx,
        j: k / seeds.nx,
        position: [p.x, p.y],
        valid_count: cache.valid_count(k),
        divergence: divergence.filter(|v| v.is_finite()),
        histogram: cache.seed_histogram(k, policy).ok().as_ref().map(HistogramView::from),
    }
}

fn nearest_seed(cache: &DynamicsCache, x: f64, y: f64) -> Result<usize, ApiError> {
    cache.header.seeds.nearest(pathdyn::Vec2::new(x, y)).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "outside_grid", format!("({x}, {y}) is outside the seed grid"))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldPayload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub png_base64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values_f32le_base64: Option<String>,
    pub masked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub reference_ms: f64,
    pub field_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResponse {
    pub cache_id: String,
    pub nx: usize,
    pub ny: usize,
    pub field: FieldPayload,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<HistogramView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax: Option<SeedView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<SeedView>,
    pub timing: Timing,
    pub provenance: Provenance,
}

/// The query behind `POST /cache/{id}/query`, callable without HTTP.
pub fn run_query(id: &str, cache: &DynamicsCache, req: &QueryRequest, exec: Exec) -> Result<QueryResponse, ApiError> {
    let probe = req.probe.map(|[x, y]| nearest_seed(cache, x, y)).transpose()?;
    let q = cache.query(&req.region, req.bins.count(), exec)?;
    let field = &q.field;
    let policy = field.reference.policy;
    let png_base64 = if req.include_png {
        let img = raster(&field.values, field.nx(), field.ny(), [0.0, 1.0], req.colormap);
        let bytes = png_bytes(&img)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "image", e.to_string()))?;
        Some(BASE64.encode(bytes))
    } else {
        None
    };
    let values_f32le_base64 = req.include_values.then(|| {
        let bytes: Vec<u8> = field.values_f32().iter().flat_map(|v| v.to_le_bytes()).collect();
        BASE64.encode(bytes)
    });
    Ok(QueryResponse {
        cache_id: id.to_string(),
        nx: field.nx(),
        ny: field.ny(),
        field: FieldPayload {
            png_base64,
            values_f32le_base64,
            masked: field.values.iter().filter(|v| !v.is_finite()).count(),
        },
        reference: req.include_reference.then(|| HistogramView::from(&field.reference)),
        argmax: field.argmax().map(|k| seed_view(cache, k, &policy, Some(field.values[k]))),
        probe: probe.map(|k| seed_view(cache, k, &policy, Some(field.values[k]))),
        timing: Timing {
            reference_ms: q.reference_time.as_secs_f64() * 1e3,
            field_ms: q.field_time.as_secs_f64() * 1e3,
        },
        provenance: field.provenance.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetInfo {
    pub id: String,
    pub fingerprint: String,
    pub seeds: SeedGrid,
    pub integration: IntegrationParams,
    pub steps: usize,
    pub byte_size: u64,
    pub default_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranges: Option<BinRanges>,
}

fn dataset_info(id: &str, cache: &DynamicsCache) -> DatasetInfo {
    DatasetInfo {
        id: id.to_string(),
        fingerprint: cache.header.fingerprint_hex(),
        seeds: cache.header.seeds,
        integration: cache.header.params,
        steps: cache.header.steps,
        byte_size: cache.byte_size(),
        default_bins: auto_bins(cache.header.steps),
        ranges: cache.ranges(),
    }
}

#[derive(Debug, Serialize)]
struct DatasetList {
    datasets: Vec<DatasetInfo>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeParams {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub bins: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Preview {
    /// Every `stride`-th valid sample.
    pub stride: usize,
    pub alpha: Vec<f32>,
    pub beta: Vec<f32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeProvenance {
    pub fingerprint: String,
    pub integration: IntegrationParams,
    pub seeds: SeedGrid,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<BinningPolicy>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResponse {
    pub cache_id: String,
    pub seed: SeedView,
    pub preview: Preview,
    pub provenance: ProbeProvenance,
}

fn thin(values: &[f32], stride: usize) -> Vec<f32> {
    values.iter().step_by(stride).copied().collect()
}

pub fn run_probe(id: &str, cache: &DynamicsCache, params: &ProbeParams) -> Result<ProbeResponse, ApiError> {
    let bins: Bins = params.bins.as_deref().unwrap_or("auto").parse().map_err(ApiError::schema)?;
    let k = nearest_seed(cache, params.x, params.y)?;
    let policy = cache.policy(bins.count()).ok();
    let seed = match &policy {
        Some(p) => seed_view(cache, k, p, None),
        None => {
            let p = cache.header.seeds.seed(k);
            SeedView {
                index: k,
                i: k % cache.header.seeds.nx,
                j: k / cache.header.seeds.nx,
                position: [p.x, p.y],
                valid_count: 0,
                divergence: None,
                histogram: None,
            }
        }
    };
    let steps = cache.header.steps;
    let valid = cache.valid_count(k);
    let stride = valid.div_ceil(PREVIEW_POINTS).max(1);
    let row = k * steps..k * steps + valid;
    Ok(ProbeResponse {
        cache_id: id.to_string(),
        seed,
        preview: Preview {
            stride,
            alpha: thin(&cache.alpha_payload()[row.clone()], stride),
            beta: thin(&cache.beta_payload()[row], stride),
        },
        provenance: ProbeProvenance {
            fingerprint: cache.header.fingerprint_hex(),
            integration: cache.header.params,
            seeds: cache.header.seeds,
            policy,
        },
    })
}

type Shared = Arc<AppState>;

async fn list_datasets(State(state): State<Shared>) -> Json<DatasetList> {
    let datasets = state.caches.iter().map(|(id, c)| dataset_info(id, c)).collect();
    Json(DatasetList { datasets })
}

async fn info(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<DatasetInfo>, ApiError> {
    let cache = state.cache(&id)?;
    Ok(Json(dataset_info(&id, &cache)))
}

async fn query(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let cache = state.cache(&id)?;
    let Json(req) = body.map_err(|e| ApiError::schema(e.body_text()))?;
    let exec = state.exec;
    tokio::task::spawn_blocking(move || run_query(&id, &cache, &req, exec))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map(Json)
}

async fn probe(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    params: Result<Query<ProbeParams>, QueryRejection>,
) -> Result<Json<ProbeResponse>, ApiError> {
    let cache = state.cache(&id)?;
    let Query(params) = params.map_err(|e| ApiError::schema(e.body_text()))?;
    run_probe(&id, &cache, &params).map(Json)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/cache/{id}/info", get(info))
        .route("/cache/{id}/query", post(query))
        .route("/cache/{id}/probe", get(probe))
        .with_state(Arc::new(state))
}

/// `serve` subcommand: load caches, bind, run until Ctrl-C.
pub fn serve_blocking(a: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let state = AppState::load(&a.caches, a.cache_dir.as_deref(), Exec::Parallel)?;
    if state.is_empty() {
        return Err(CliError::usage("no caches to serve; pass --cache or --cache-dir"));
    }
    let ids = state.ids().join(",");
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.bind, a.port)).await?;
        writeln!(out, "listening=http://{} caches={ids}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
