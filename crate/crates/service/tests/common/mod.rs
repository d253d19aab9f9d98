#![allow(dead_code)]

use std::fs::File;
use std::path::PathBuf;
use std::sync::OnceLock;

use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pathrec_core::data::{write_pois_csv, write_trajectories_csv};
use pathrec_core::synth::{generate, SynthConfig};
use pathrec_core::{load_pois, load_trajectories, train_model, Dataset, Model, TrainOptions};
use pathrec_service::{router, AppState};
use tower::ServiceExt;

pub const FIXTURE_POIS: usize = 85;

pub struct Fixture {
    pub model: Model,
    /// The fixture as read back by the CSV loader.
    pub loaded: Dataset,
    pub model_path: PathBuf,
    _dir: tempfile::TempDir,
}

pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&SynthConfig::new(FIXTURE_POIS, 400, 42)).unwrap();
        let pois = dir.path().join("pois.csv");
        let trajs = dir.path().join("trajs.csv");
        write_pois_csv(File::create(&pois).unwrap(), &data.pois).unwrap();
        write_trajectories_csv(File::create(&trajs).unwrap(), &data.trajectories).unwrap();
        let loaded = load_trajectories(&trajs, load_pois(&pois).unwrap()).unwrap();
        let (model, _) = train_model(&loaded, &TrainOptions::default()).unwrap();
        let model_path = dir.path().join("model.json");
        model.save(&model_path).unwrap();
        Fixture {
            model,
            loaded,
            model_path,
            _dir: dir,
        }
    })
}

pub fn app() -> Router {
    router(AppState::new(Some(fixture().model.clone())))
}

pub async fn send(app: Router, request: Request<Body>) -> (StatusCode, Bytes) {
    let response = app.oneshot(request).await.unwrap();
    let status = response.status();
    assert_eq!(response.headers()["content-type"], "application/json");
    (status, response.into_body().collect().await.unwrap().to_bytes())
}

pub async fn get(app: Router, uri: &str) -> (StatusCode, Bytes) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_json(app: Router, uri: &str, body: &str) -> (StatusCode, Bytes) {
    let request = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    send(app, request).await
}

pub fn json(bytes: &Bytes) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}
