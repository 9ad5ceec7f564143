//! HTTP endpoints. Bodies are canonical JSON both ways; any request the
//! node refuses gets a 4xx with a structured reason.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use ler_core::canon;
use ler_core::clock::Clock;
use ler_core::credential::{PresentationRequest, RejectReason, VerifiablePresentation};
use ler_core::identity::Did;
use ler_core::matching::JobRequirement;
use ler_core::protocol::{Challenge, ProtocolError};
use ler_core::skills::Transcript;
use rand::rngs::OsRng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::node::{HolderNode, IssuerNode, VerifierNode};
use crate::GatewayError;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<RejectReason>,
    message: String,
}

pub struct ApiError(pub GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

impl ApiError {
    fn status_and_kind(&self) -> (StatusCode, &'static str) {
        match &self.0 {
            GatewayError::Malformed(_) | GatewayError::Protocol(ProtocolError::Malformed(_)) => {
                (StatusCode::BAD_REQUEST, "malformed")
            }
            GatewayError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            GatewayError::NotPermitted(_) => (StatusCode::FORBIDDEN, "not_permitted"),
            GatewayError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            GatewayError::Rejected(_) => (StatusCode::UNPROCESSABLE_ENTITY, "rejected"),
            GatewayError::Credential(_) | GatewayError::Match(_) | GatewayError::Identity(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error) = self.status_and_kind();
        let reason = match &self.0 {
            GatewayError::Rejected(r) => Some(*r),
            _ => None,
        };
        let body = ErrorBody {
            error,
            reason,
            message: self.0.to_string(),
        };
        canonical(status, &body)
    }
}

fn canonical<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match canon::to_canonical(value) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn ok<T: Serialize>(value: &T) -> Result<Response, ApiError> {
    Ok(canonical(StatusCode::OK, value))
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(GatewayError::Malformed(e.to_string())))
}

type ApiResult = Result<Response, ApiError>;

#[derive(Clone)]
pub struct Services {
    pub issuer: Option<Arc<IssuerNode>>,
    pub holder: Option<Arc<HolderNode>>,
    pub verifier: Option<Arc<VerifierNode>>,
    pub clock: Arc<dyn Clock>,
}

struct Ctx<N> {
    node: Arc<N>,
    clock: Arc<dyn Clock>,
}

impl<N> Clone for Ctx<N> {
    fn clone(&self) -> Self {
        Self {
            node: self.node.clone(),
            clock: self.clock.clone(),
        }
    }
}

/// Routes for every node present in `services`.
pub fn router(services: Services) -> Router {
    let mut app = Router::new();
    if let Some(node) = services.issuer {
        app = app.merge(issuer_routes(Ctx {
            node,
            clock: services.clock.clone(),
        }));
    }
    if let Some(node) = services.verifier {
        app = app.merge(verifier_routes(Ctx {
            node,
            clock: services.clock.clone(),
        }));
    }
    if let Some(node) = services.holder {
        app = app.merge(holder_routes(Ctx {
            node,
            clock: services.clock.clone(),
        }));
    }
    app.fallback(|| async {
        ApiError(GatewayError::NotFound("no such endpoint".into())).into_response()
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IssueBody {
    holder_did: Did,
    transcript: Transcript,
}

fn issuer_routes(ctx: Ctx<IssuerNode>) -> Router {
    Router::new()
        .route("/v1/issue", post(issue))
        .route("/v1/status-list", get(status_list))
        .with_state(ctx)
}

async fn issue(State(ctx): State<Ctx<IssuerNode>>, body: Bytes) -> ApiResult {
    let req: IssueBody = parse(&body)?;
    ok(&ctx.node.issue(&req.holder_did, &req.transcript, ctx.clock.now(), &mut OsRng)?)
}

/// The whole signed list, or a stapled snippet for `?credential_id=`.
async fn status_list(
    State(ctx): State<Ctx<IssuerNode>>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    match q.get("credential_id") {
        Some(id) => ok(&ctx.node.staple(id, ctx.clock.now())?),
        None => ok(&ctx.node.status_list()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChallengeBody {
    #[serde(default)]
    job: Option<JobRequirement>,
    #[serde(default)]
    request: Option<PresentationRequest>,
}

fn verifier_routes(ctx: Ctx<VerifierNode>) -> Router {
    Router::new()
        .route("/v1/challenge", post(challenge))
        .route("/v1/present", post(present))
        .route("/v1/allowlist", get(allowlist))
        .with_state(ctx)
}

async fn challenge(State(ctx): State<Ctx<VerifierNode>>, body: Bytes) -> ApiResult {
    let req: ChallengeBody = parse(&body)?;
    let request = req
        .request
        .unwrap_or_else(|| PresentationRequest::claims(["taxonomy", "skill.*"]));
    ok(&ctx.node.challenge(request, req.job, ctx.clock.now(), &mut OsRng)?)
}

async fn present(State(ctx): State<Ctx<VerifierNode>>, body: Bytes) -> ApiResult {
    let vp: VerifiablePresentation = parse(&body)?;
    ok(&ctx.node.verify(&vp, None, ctx.clock.now())?)
}

async fn allowlist(State(ctx): State<Ctx<VerifierNode>>) -> ApiResult {
    ok(&ctx.node.allowlist())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproveBody {
    request_id: String,
    claims: BTreeSet<String>,
}

#[derive(Debug, Serialize)]
struct ApproveReply<'a> {
    request_id: &'a str,
    presentation: VerifiablePresentation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenyBody {
    request_id: String,
}

#[derive(Debug, Serialize)]
struct DenyReply<'a> {
    request_id: &'a str,
    denied: bool,
}

fn holder_routes(ctx: Ctx<HolderNode>) -> Router {
    Router::new()
        .route("/v1/wallet/requests", get(list_requests).post(add_request))
        .route("/v1/wallet/approve", post(approve))
        .route("/v1/wallet/deny", post(deny))
        .route("/v1/wallet/inventory", get(inventory))
        .with_state(ctx)
}

async fn list_requests(State(ctx): State<Ctx<HolderNode>>) -> ApiResult {
    ok(&ctx.node.requests())
}

/// Queues a verifier challenge and returns the holder's view of it.
async fn add_request(State(ctx): State<Ctx<HolderNode>>, body: Bytes) -> ApiResult {
    let challenge: Challenge = parse(&body)?;
    let pending = ctx.node.receive(challenge, ctx.clock.now())?;
    let view = ctx
        .node
        .requests()
        .into_iter()
        .find(|v| v.request_id == pending.request_id)
        .ok_or_else(|| GatewayError::NotFound(pending.request_id.clone()))?;
    ok(&view)
}

async fn approve(State(ctx): State<Ctx<HolderNode>>, body: Bytes) -> ApiResult {
    let req: ApproveBody = parse(&body)?;
    let presentation = ctx.node.approve(&req.request_id, &req.claims, ctx.clock.now())?;
    ok(&ApproveReply {
        request_id: &req.request_id,
        presentation,
    })
}

async fn deny(State(ctx): State<Ctx<HolderNode>>, body: Bytes) -> ApiResult {
    let req: DenyBody = parse(&body)?;
    ctx.node.deny(&req.request_id)?;
    ok(&DenyReply {
        request_id: &req.request_id,
        denied: true,
    })
}

async fn inventory(State(ctx): State<Ctx<HolderNode>>) -> ApiResult {
    ok(&ctx.node.inventory())
}

/// Binds `bind` and serves until interrupted.
pub async fn serve(bind: &str, services: Services) -> Result<(), GatewayError> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(services))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
