#![allow(dead_code)]

use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use clens_core::ingest::IngestOptions;
use clens_core::{
    validate_bundle, ActivationMatrix, AnnotationSet, AssignmentTable, ConceptAssignment, Ensemble,
    Store, ThresholdSpec,
};
use clens_service::{margins_on_the_fly, router, AppState, ServiceConfig, DEFAULT_ALPHA};
use http_body_util::BodyExt;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_store(name: &str, gallery: bool) -> Store {
    let dir = fixtures().join(name);
    let gallery_path = dir.join("gallery.json");
    Store::from_files(
        &dir.join("activations.csv"),
        &dir.join("annotations.json"),
        &dir.join("assignments.json"),
        gallery.then_some(gallery_path.as_path()),
        name,
        IngestOptions::default(),
    )
    .unwrap()
    .0
}

/// Two stores over the same concepts whose non-target activation rates at
/// θ = 0 equal the given (A, B) percentages up to rounding to 1/`non_targets`.
pub fn paired_stores(pcts: &[(String, f64, f64)], non_targets: usize) -> (Store, Store) {
    let build = |id: &str, pick: fn(&(String, f64, f64)) -> f64| {
        let c = pcts.len();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        let mut ann = AnnotationSet::new(id);
        for (j, p) in pcts.iter().enumerate() {
            let mut row = vec![0.0; c];
            row[j] = 1.0;
            values.extend(row);
            let tid = format!("target_{j}");
            ann.insert(tid.clone(), [p.0.clone()]);
            ids.push(tid);
        }
        // Every concept's non-targets are the other concepts' targets plus the filler images.
        let total = non_targets + c - 1;
        let active: Vec<usize> = pcts
            .iter()
            .map(|p| (pick(p) / 100.0 * total as f64).round() as usize)
            .collect();
        for i in 0..non_targets {
            values.extend(active.iter().map(|&k| if i < k { 0.25 + 0.5 * i as f64 / non_targets as f64 } else { 0.0 }));
            ids.push(format!("filler_{i}"));
        }
        let table = AssignmentTable::new(
            pcts.iter()
                .enumerate()
                .map(|(j, p)| ConceptAssignment::new(p.0.clone(), Ensemble::from_indices(&[j]).unwrap()))
                .collect(),
        )
        .unwrap();
        let m = ActivationMatrix::new(id, ids, c, values).unwrap();
        let (bundle, _) = validate_bundle(m, ann, &table).unwrap();
        Store::new(bundle, table, None)
    };
    (build("reference", |p| p.1), build("holdout", |p| p.2))
}

pub fn app(holdout: Store, reference: Option<&Store>, config: &ServiceConfig) -> Router {
    let margins = margins_on_the_fly(&holdout, &ThresholdSpec::default());
    let state = AppState::new(holdout, margins, reference, DEFAULT_ALPHA).unwrap();
    router(state, config).unwrap()
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn send(app: &Router, req: Request<Body>) -> Reply {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_json(app: &Router, uri: &str, body: &str) -> Reply {
    send(
        app,
        Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_owned()))
            .unwrap(),
    )
    .await
}

pub fn read_pairs(name: &str) -> Vec<(String, f64, f64)> {
    clens_core::ingest::ingest_pairs(fixtures().join("wilcoxon").join(name))
        .unwrap()
        .into_iter()
        .map(|p| (p.label.unwrap(), p.x, p.y))
        .collect()
}
