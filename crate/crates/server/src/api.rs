//! HTTP routes over [`Service`].

use std::convert::Infallible;
use std::future::Future;

use adamant_core::annotation::AnnotationError;
use adamant_core::search::SearchError;
use adamant_core::store::StoreError;
use adamant_core::PageUrl;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, State};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::service::{
    CreateRequest, DocumentRequest, GroupRequest, ListParams, MemberRequest, PatchRequest, ReplyRequest,
    Service, ServiceError, StateRequest,
};

pub const USER_HEADER: &str = "x-user";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(ServiceError::bad("body", e.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(ServiceError::bad("query", e.body_text()))
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    use AnnotationError as A;
    match e {
        ServiceError::Anonymous => StatusCode::UNAUTHORIZED,
        ServiceError::BadParam { .. } => StatusCode::BAD_REQUEST,
        ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        ServiceError::Store(e) => match e {
            StoreError::RevisionConflict { .. } => StatusCode::CONFLICT,
            StoreError::NotFound(_) | StoreError::NoSnapshot(_) | StoreError::UnknownGroup(_) => {
                StatusCode::NOT_FOUND
            }
            StoreError::Locked(_) => StatusCode::SERVICE_UNAVAILABLE,
            StoreError::Io(_) | StoreError::Json(_) | StoreError::Corrupt { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            StoreError::UnknownAuthor(_) | StoreError::UnknownUser(_) | StoreError::InvalidRecord(_) => {
                StatusCode::BAD_REQUEST
            }
            StoreError::Annotation(a) => match a {
                A::NotAuthor | A::NoReadAccess => StatusCode::FORBIDDEN,
                A::AlreadyResolved | A::AlreadyDone | A::DuplicateAnchor => StatusCode::CONFLICT,
                _ => StatusCode::BAD_REQUEST,
            },
            StoreError::Anchor(_) => StatusCode::BAD_REQUEST,
            StoreError::Search(SearchError::MissingSnapshot(_)) => StatusCode::NOT_FOUND,
            StoreError::Search(_) => StatusCode::BAD_REQUEST,
        },
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = ErrorBody {
            code: self.0.code().to_string(),
            message: self.0.to_string(),
        };
        (status, axum::Json(body)).into_response()
    }
}

/// JSON body whose rejections use the error body format.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct Json<T>(T);

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
struct Params<T>(T);

/// Caller identity from the `X-User` header. Absent means anonymous.
pub struct Requester(pub Option<String>);

impl Requester {
    fn as_deref(&self) -> Option<&str> {
        self.0.as_deref()
    }
}

impl<S: Send + Sync> FromRequestParts<S> for Requester {
    type Rejection = Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let user = parts
            .headers
            .get(USER_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        Ok(Requester(user))
    }
}

#[derive(Clone)]
struct AppState {
    svc: Service,
    shutdown: watch::Receiver<bool>,
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs a store call off the async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?
        .map_err(ApiError)
}

pub fn router(svc: Service) -> Router {
    let (_tx, rx) = watch::channel(false);
    router_with_shutdown(svc, rx)
}

/// Event streams end when `shutdown` flips to true.
pub fn router_with_shutdown(svc: Service, shutdown: watch::Receiver<bool>) -> Router {
    Router::new()
        .route("/annotations", post(create).get(list))
        .route("/annotations/{id}", get(fetch).patch(patch).delete(delete))
        .route("/annotations/{id}/anchors", get(anchors))
        .route("/annotations/{id}/replies", post(reply))
        .route("/annotations/{id}/state", post(transition))
        .route("/annotations/{id}/pin", post(pin).delete(unpin))
        .route("/pins", get(pins))
        .route("/events", get(events))
        .route("/documents", post(register_document).get(documents))
        .route("/documents/reanchor", post(reanchor))
        .route("/groups", get(groups).post(create_group))
        .route("/groups/{id}/members", post(add_member))
        .route("/issues/{id}/report", post(report))
        .with_state(AppState { svc, shutdown })
}

/// Serves until `shutdown` completes; open event streams are closed first.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: Service,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let (tx, rx) = watch::channel(false);
    let app = router_with_shutdown(svc, rx.clone());
    let mut done = rx;
    tokio::spawn(async move {
        shutdown.await;
        let _ = tx.send(true);
        // Hold the sender until the server is gone.
        tx.closed().await;
    });
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            let _ = done.wait_for(|v| *v).await;
        })
        .await
}

async fn create(
    State(s): State<AppState>,
    who: Requester,
    Json(req): Json<CreateRequest>,
) -> ApiResult<impl IntoResponse> {
    let a = blocking(move || s.svc.create(who.as_deref(), req)).await?;
    Ok((StatusCode::CREATED, Json(a)))
}

async fn list(State(s): State<AppState>, who: Requester, Params(p): Params<ListParams>) -> ApiResult<impl IntoResponse> {
    let listing = p.parse()?;
    Ok(Json(blocking(move || s.svc.list(who.as_deref(), &listing)).await?))
}

async fn fetch(State(s): State<AppState>, who: Requester, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.get(who.as_deref(), &id)?))
}

async fn anchors(State(s): State<AppState>, who: Requester, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.anchor_health(who.as_deref(), &id)).await?))
}

async fn patch(
    State(s): State<AppState>,
    who: Requester,
    Path(id): Path<String>,
    Json(req): Json<PatchRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.edit(who.as_deref(), &id, req)).await?))
}

async fn delete(State(s): State<AppState>, who: Requester, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.delete(who.as_deref(), &id)).await?))
}

async fn reply(
    State(s): State<AppState>,
    who: Requester,
    Path(id): Path<String>,
    Json(req): Json<ReplyRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.reply(who.as_deref(), &id, req)).await?))
}

async fn transition(
    State(s): State<AppState>,
    who: Requester,
    Path(id): Path<String>,
    Json(req): Json<StateRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.transition(who.as_deref(), &id, req)).await?))
}

async fn pin(State(s): State<AppState>, who: Requester, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.pin(who.as_deref(), &id, true)).await?))
}

async fn unpin(State(s): State<AppState>, who: Requester, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.pin(who.as_deref(), &id, false)).await?))
}

async fn pins(State(s): State<AppState>, who: Requester) -> impl IntoResponse {
    Json(s.svc.pins(who.as_deref()))
}

#[derive(Deserialize)]
struct UrlParam {
    url: Option<String>,
}

/// Terminal frame sent to a subscriber the store cut off.
pub const DROPPED_EVENT: &str = "dropped";

async fn events(
    State(s): State<AppState>,
    who: Requester,
    Params(p): Params<UrlParam>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let raw = p.url.ok_or_else(|| ServiceError::bad("url", "required"))?;
    let page = PageUrl::parse(&raw).map_err(|e| ServiceError::bad("url", e.to_string()))?;
    let sub = s.svc.store().subscribe(&page, who.as_deref());
    let ready = stream::once(async { Ok(Event::default().comment("subscribed")) });
    let feed = stream::unfold((Some(sub), s.shutdown), |(sub, mut shutdown)| async move {
        let mut sub = sub?;
        let next = tokio::select! {
            ev = sub.next() => ev,
            _ = until_shutdown(&mut shutdown) => return None,
        };
        match next {
            Some(ev) => {
                let data = serde_json::to_string(&ev).expect("events serialize");
                let frame = Event::default().id(ev.seq.to_string()).data(data);
                Some((Ok(frame), (Some(sub), shutdown)))
            }
            None if sub.was_dropped() => {
                let body = ErrorBody {
                    code: DROPPED_EVENT.into(),
                    message: "subscriber fell behind and was dropped".into(),
                };
                let frame = Event::default()
                    .event(DROPPED_EVENT)
                    .data(serde_json::to_string(&body).expect("error body serializes"));
                Some((Ok(frame), (None, shutdown)))
            }
            None => None,
        }
    });
    Ok(Sse::new(ready.chain(feed)).keep_alive(KeepAlive::default()))
}

async fn until_shutdown(rx: &mut watch::Receiver<bool>) {
    if rx.wait_for(|v| *v).await.is_err() {
        std::future::pending::<()>().await;
    }
}

async fn register_document(
    State(s): State<AppState>,
    who: Requester,
    Json(req): Json<DocumentRequest>,
) -> ApiResult<impl IntoResponse> {
    let summary = blocking(move || s.svc.register_document(who.as_deref(), req)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn documents(State(s): State<AppState>, Params(p): Params<UrlParam>) -> ApiResult<Response> {
    Ok(match p.url {
        Some(url) => Json(s.svc.document(&url)?).into_response(),
        None => Json(s.svc.document_urls()).into_response(),
    })
}

async fn reanchor(State(s): State<AppState>, who: Requester, Params(p): Params<UrlParam>) -> ApiResult<impl IntoResponse> {
    let url = p.url.ok_or_else(|| ServiceError::bad("url", "required"))?;
    Ok(Json(blocking(move || s.svc.reanchor(who.as_deref(), &url)).await?))
}

async fn groups(State(s): State<AppState>, who: Requester) -> impl IntoResponse {
    Json(s.svc.groups(who.as_deref()))
}

async fn create_group(
    State(s): State<AppState>,
    who: Requester,
    Json(req): Json<GroupRequest>,
) -> ApiResult<impl IntoResponse> {
    let g = blocking(move || s.svc.create_group(who.as_deref(), req)).await?;
    Ok((StatusCode::CREATED, Json(g)))
}

async fn add_member(
    State(s): State<AppState>,
    who: Requester,
    Path(id): Path<String>,
    Json(req): Json<MemberRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || s.svc.add_member(who.as_deref(), &id, req)).await?))
}

async fn report(State(s): State<AppState>, who: Requester, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.report(who.as_deref(), &id)?))
}
