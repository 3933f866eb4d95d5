//! Read-only HTTP/JSON API over a holdout store: assignment and gallery
//! listings, margin tables, per-vector concept detection and, when launched
//! with a second store, cross-dataset confirmation statistics.
//!
//! All state is computed at startup and never mutated, so handlers share it
//! through an `Arc` without locking. GET responses carry an ETag derived from
//! the store manifests and the served margin table.

mod analyze;
mod error;

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use clens_core::stats::{confirm_concepts, ConfirmationReport};
use clens_core::{compute_margin_table, Error as CoreError, MarginRow, MarginTable, Store, ThresholdSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub use error::ApiError;

/// Significance level for the per-concept confirmation test.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    /// Directory served at `/` (UI bundle and gallery assets).
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SetupError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("margin rows disagree on thresholds")]
    InconsistentThresholds,
    #[error("margin table is for dataset {table:?}, store is {store:?}")]
    DatasetMismatch { table: String, store: String },
    #[error("invalid CORS origin {0:?}")]
    BadOrigin(String),
}

struct Cached {
    concepts: Bytes,
    gallery: Bytes,
    margins: Bytes,
    confirmations: Option<Bytes>,
}

pub struct AppState {
    holdout: Store,
    margins: MarginTable,
    confirmation: Option<ConfirmationReport>,
    etag: HeaderValue,
    cached: Cached,
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Bytes {
    Bytes::from(serde_json::to_vec(value).expect("response types serialize"))
}

#[derive(Serialize)]
struct GalleryEntry<'a> {
    image_id: &'a str,
    asset_url: String,
}

fn asset_url(path: &str) -> String {
    if path.contains("://") {
        path.to_owned()
    } else {
        format!("/{}", path.trim_start_matches('/'))
    }
}

/// Margin table computed from the store itself.
pub fn margins_on_the_fly(store: &Store, thresholds: &ThresholdSpec) -> MarginTable {
    compute_margin_table(&store.bundle, &store.assignments, thresholds)
}

/// Margin table from previously rendered JSON rows, calibrated with the
/// store's per-neuron maxima.
pub fn margins_from_rows(store: &Store, rows: Vec<MarginRow>) -> Result<MarginTable, SetupError> {
    let thetas: Vec<f64> = rows
        .first()
        .map(|r| r.non_tla_pct.iter().map(|t| t.theta).collect())
        .unwrap_or_else(|| ThresholdSpec::default().fractions().to_vec());
    if rows
        .iter()
        .any(|r| r.non_tla_pct.iter().map(|t| t.theta).ne(thetas.iter().copied()))
    {
        return Err(SetupError::InconsistentThresholds);
    }
    Ok(MarginTable {
        dataset_id: store.dataset_id().to_owned(),
        thresholds: ThresholdSpec::new(thetas)?,
        base: Default::default(),
        reference_max: store.bundle.per_neuron_max.clone(),
        rows,
        warnings: Vec::new(),
    })
}

impl AppState {
    /// `reference` is the dataset compared against the holdout: dataset A of
    /// the confirmation report, using its own assignments.
    pub fn new(
        holdout: Store,
        margins: MarginTable,
        reference: Option<&Store>,
        alpha: f64,
    ) -> Result<Self, SetupError> {
        if margins.dataset_id != holdout.dataset_id() {
            return Err(SetupError::DatasetMismatch {
                table: margins.dataset_id.clone(),
                store: holdout.dataset_id().to_owned(),
            });
        }
        let confirmation = reference
            .map(|a| {
                confirm_concepts(&a.bundle, &holdout.bundle, &a.assignments, &margins.thresholds, alpha)
            })
            .transpose()?;

        let gallery: Vec<GalleryEntry<'_>> = holdout
            .manifest
            .gallery
            .iter()
            .flatten()
            .map(|(image_id, path)| GalleryEntry {
                image_id,
                asset_url: asset_url(path),
            })
            .collect();
        let cached = Cached {
            concepts: json_bytes(&holdout.assignments),
            gallery: json_bytes(&gallery),
            margins: json_bytes(&margins),
            confirmations: confirmation.as_ref().map(json_bytes),
        };

        let mut hasher = Sha256::new();
        hasher.update(holdout.manifest.sha256.as_bytes());
        if let Some(a) = reference {
            hasher.update(b"\0");
            hasher.update(a.manifest.sha256.as_bytes());
        }
        hasher.update(b"\0");
        hasher.update(&cached.margins);
        hasher.update(&cached.gallery);
        let digest = hex::encode(hasher.finalize());
        let etag = HeaderValue::from_str(&format!("\"{}\"", &digest[..32])).expect("hex is a valid header");

        Ok(AppState {
            holdout,
            margins,
            confirmation,
            etag,
            cached,
        })
    }

    pub fn etag(&self) -> &HeaderValue {
        &self.etag
    }

    pub fn margins(&self) -> &MarginTable {
        &self.margins
    }

    pub fn holdout(&self) -> &Store {
        &self.holdout
    }
}

type Shared = Arc<AppState>;

fn json_response(body: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn concepts(State(s): State<Shared>) -> Response {
    json_response(s.cached.concepts.clone())
}

async fn gallery(State(s): State<Shared>) -> Response {
    json_response(s.cached.gallery.clone())
}

#[derive(Deserialize)]
struct MarginsQuery {
    theta: Option<String>,
}

#[derive(Serialize)]
struct MarginAtTheta<'a> {
    concept: &'a str,
    ensemble: &'a clens_core::Ensemble,
    #[serde(skip_serializing_if = "Option::is_none")]
    tla_pct: Option<f64>,
    non_tla_pct: f64,
    n_target: usize,
    n_non_target: usize,
}

#[derive(Serialize)]
struct MarginsAtTheta<'a> {
    dataset_id: &'a str,
    theta: f64,
    base: clens_core::ThresholdBase,
    rows: Vec<MarginAtTheta<'a>>,
}

pub(crate) fn parse_theta(text: &str, spec: &ThresholdSpec) -> Result<(usize, f64), ApiError> {
    let theta: f64 = text
        .trim()
        .parse()
        .map_err(|_| ApiError::bad_request(format!("theta {text:?} is not a number")))?;
    let pos = spec
        .position(theta)
        .ok_or_else(|| ApiError::bad_request(format!("theta {theta} is not one of the thresholds {spec}")))?;
    Ok((pos, spec.fractions()[pos]))
}

async fn margins(State(s): State<Shared>, Query(q): Query<MarginsQuery>) -> Result<Response, ApiError> {
    let Some(text) = q.theta else {
        return Ok(json_response(s.cached.margins.clone()));
    };
    let (pos, theta) = parse_theta(&text, &s.margins.thresholds)?;
    let rows = s
        .margins
        .rows
        .iter()
        .map(|r| MarginAtTheta {
            concept: &r.concept,
            ensemble: &r.ensemble,
            // TLA is defined at the lowest threshold only.
            tla_pct: (theta == 0.0).then_some(r.tla_pct),
            non_tla_pct: r.non_tla_pct[pos].pct,
            n_target: r.n_target,
            n_non_target: r.n_non_target,
        })
        .collect();
    Ok(json_response(json_bytes(&MarginsAtTheta {
        dataset_id: &s.margins.dataset_id,
        theta,
        base: s.margins.base,
        rows,
    })))
}

#[derive(Deserialize)]
struct WilcoxonQuery {
    threshold: Option<String>,
}

fn single_store() -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "statistics need a second store; launch the service with a reference store",
    )
}

async fn wilcoxon(State(s): State<Shared>, Query(q): Query<WilcoxonQuery>) -> Result<Response, ApiError> {
    let report = s.confirmation.as_ref().ok_or_else(single_store)?;
    let text = q
        .threshold
        .ok_or_else(|| ApiError::bad_request("missing threshold index"))?;
    let idx: usize = text
        .trim()
        .parse()
        .map_err(|_| ApiError::bad_request(format!("threshold index {text:?} is not a non-negative integer")))?;
    let block = report.wilcoxon.get(idx).ok_or_else(|| {
        ApiError::bad_request(format!(
            "threshold index {idx} out of range (0..{})",
            report.wilcoxon.len()
        ))
    })?;
    Ok(json_response(json_bytes(block)))
}

async fn confirmations(State(s): State<Shared>) -> Result<Response, ApiError> {
    s.cached
        .confirmations
        .clone()
        .map(json_response)
        .ok_or_else(single_store)
}

async fn etag_layer(State(s): State<Shared>, req: Request, next: Next) -> Response {
    let matches = req
        .headers()
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .any(|tag| {
            let tag = tag.trim();
            tag == "*" || tag.trim_start_matches("W/") == s.etag.to_str().unwrap_or_default()
        });
    if matches {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, s.etag.clone())]).into_response();
    }
    let mut res = next.run(req).await;
    if res.status().is_success() {
        res.headers_mut().insert(header::ETAG, s.etag.clone());
    }
    res
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such endpoint")
}

pub fn router(state: AppState, config: &ServiceConfig) -> Result<Router, SetupError> {
    let state = Arc::new(state);
    let reads = Router::new()
        .route("/api/concepts", get(concepts))
        .route("/api/gallery", get(gallery))
        .route("/api/margins", get(margins))
        .route("/api/stats/wilcoxon", get(wilcoxon))
        .route("/api/stats/confirmations", get(confirmations))
        .route_layer(middleware::from_fn_with_state(state.clone(), etag_layer));
    let api = reads
        .route("/api/analyze", post(analyze::analyze))
        .route("/api/{*rest}", axum::routing::any(not_found))
        .with_state(state);

    let app = match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    };

    let origins = if config.cors_origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(
            config
                .cors_origins
                .iter()
                .map(|o| HeaderValue::from_str(o).map_err(|_| SetupError::BadOrigin(o.clone())))
                .collect::<Result<Vec<_>, _>>()?,
        )
    };
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::IF_NONE_MATCH])
        .expose_headers([header::ETAG]);
    Ok(app.layer(cors))
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
