#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ler_core::clock::ManualClock;
use ler_core::credential::VerifiableCredential;
use ler_core::fixtures;
use ler_gateway::node::Registry;
use ler_gateway::service::{router, Services};
use ler_gateway::{Config, HolderNode, IssuerNode, Layout, VerifierNode};
use rand::rngs::OsRng;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub const T0: u64 = 1_700_000_000;

pub struct Net {
    pub dir: TempDir,
    pub config: Config,
    pub layout: Layout,
    pub registry: Arc<Registry>,
    pub issuer: Arc<IssuerNode>,
    pub holder: Arc<HolderNode>,
    pub verifier: Arc<VerifierNode>,
    pub clock: ManualClock,
}

pub fn net() -> Net {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        data_dir: dir.path().join("data"),
        ..Config::default()
    };
    let layout = Layout::new(&config);
    for role in [
        ler_gateway::node::Role::Issuer,
        ler_gateway::node::Role::Holder,
        ler_gateway::node::Role::Verifier,
    ] {
        layout.keygen(role, false).unwrap();
    }
    let registry = Arc::new(layout.registry().unwrap());
    let issuer = Arc::new(IssuerNode::open(&layout, registry.clone(), T0).unwrap());
    let holder = Arc::new(HolderNode::open(&config, &layout, registry.clone()).unwrap());
    let verifier = Arc::new(VerifierNode::open(&config, &layout, registry.clone()).unwrap());
    Net {
        dir,
        config,
        layout,
        registry,
        issuer,
        holder,
        verifier,
        clock: ManualClock::new(T0),
    }
}

impl Net {
    pub fn router(&self) -> Router {
        router(Services {
            issuer: Some(self.issuer.clone()),
            holder: Some(self.holder.clone()),
            verifier: Some(self.verifier.clone()),
            clock: Arc::new(self.clock.clone()),
        })
    }

    /// Issues the fixture transcript, imports it and derives a skill
    /// credential from it.
    pub fn enroll(&self) -> VerifiableCredential {
        let bundle = self
            .issuer
            .issue(self.holder.did(), &fixtures::transcript(), T0, &mut OsRng)
            .unwrap();
        assert!(self.holder.import(&bundle).unwrap());
        self.holder
            .derive(fixtures::transcript(), fixtures::syllabi(), T0, &mut OsRng)
            .unwrap()
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn post(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(serde_json::to_vec(body).unwrap())).await
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}
