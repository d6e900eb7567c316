//! HTTP/JSON surface of the service.

use std::convert::Infallible;
use std::future::Future;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::content::{CommandBinding, Configuration, ContentStore, Graphic, Sequence, TargetSpec};
use crate::controller::{CoilAck, GraphicUpload, MarkerView, PlanSummary, Snapshot, StepDirection};
use crate::error::ServiceError;
use crate::executor::ServiceHandle;
use crate::history::{HistoryQuery, HistoryRecord};

/// Minimum gap between two event-stream lines (at most 20 per second).
pub const EVENT_INTERVAL: Duration = Duration::from_millis(50);

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            ServiceError::Separation { .. } | ServiceError::Conflict(_) | ServiceError::Deficit { .. } => {
                StatusCode::CONFLICT
            }
            ServiceError::PartialFailure(_) | ServiceError::Unreachable(_) | ServiceError::UnsupportedGraphic(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(ServiceError::Validation(format!("request body: {e}"))))
}

#[derive(Debug, Default, Deserialize)]
struct WaitQuery {
    #[serde(default)]
    wait: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CoilRequest {
    pub on: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MoveRequest {
    pub target: TargetSpec,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PerturbRequest {
    pub dx_mm: f64,
    pub dy_mm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TriggerRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepRequest {
    pub direction: StepDirection,
}

pub fn router(handle: ServiceHandle) -> Router {
    Router::new()
        .route("/state", get(state))
        .route("/grid", get(grid))
        .route("/history", get(history))
        .route("/events", get(events))
        .route("/coils/{id}", post(set_coil))
        .route("/markers", get(markers).post(place_marker))
        .route("/markers/{id}/move", post(move_marker))
        .route("/markers/{id}/perturb", post(perturb))
        .route("/configurations", get(list_configurations).post(create_configuration))
        .route("/configurations/{name}", get(get_configuration).put(put_configuration).delete(delete_configuration))
        .route("/configurations/{name}/render", post(render))
        .route("/bindings", get(list_bindings).post(create_binding))
        .route("/bindings/{trigger}", get(get_binding).put(put_binding).delete(delete_binding))
        .route("/sequences", get(list_sequences).post(create_sequence))
        .route("/sequences/{name}", get(get_sequence).put(put_sequence).delete(delete_sequence))
        .route("/sequences/{name}/step", post(sequence_step))
        .route("/graphics", get(list_graphics))
        .route("/graphics/{name}", get(get_graphic).put(put_graphic).delete(delete_graphic))
        .route("/content", get(get_content).put(put_content))
        .route("/trigger", post(trigger))
        .route("/park", post(park))
        .with_state(handle)
}

/// Serves until `shutdown` resolves, then flushes the content store and
/// stops the executor.
pub async fn serve<F>(listener: tokio::net::TcpListener, handle: ServiceHandle, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let h = handle.clone();
    tokio::spawn(async move {
        shutdown.await;
        let _ = h.shutdown().await;
        let _ = stop_tx.send(());
    });
    let mut closing = handle.closing();
    axum::serve(listener, router(handle))
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = stop_rx => {}
                _ = closing.wait_for(|c| *c) => {}
            }
        })
        .await
}

async fn state(State(h): State<ServiceHandle>) -> Json<Snapshot> {
    Json((*h.snapshot()).clone())
}

async fn grid(State(h): State<ServiceHandle>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], h.grid().to_json()).into_response()
}

async fn history(State(h): State<ServiceHandle>, Query(q): Query<HistoryQuery>) -> ApiResult<Vec<HistoryRecord>> {
    Ok(Json(h.call(move |c| Ok(c.query_history(&q))).await?))
}

/// Newline-delimited JSON snapshots, at most one per [`EVENT_INTERVAL`].
async fn events(State(h): State<ServiceHandle>) -> Response {
    let rx = h.subscribe();
    let closing = h.closing();
    let stream = futures::stream::unfold((rx, closing, true), |(mut rx, mut closing, first)| async move {
        if !first {
            tokio::time::sleep(EVENT_INTERVAL).await;
            tokio::select! {
                changed = rx.changed() => changed.ok()?,
                _ = closing.wait_for(|c| *c) => return None,
            }
        }
        let snap = rx.borrow_and_update().clone();
        let mut line = serde_json::to_vec(&*snap).expect("snapshot serializes");
        line.push(b'\n');
        Some((Ok::<_, Infallible>(Bytes::from(line)), (rx, closing, false)))
    });
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response()
}

async fn set_coil(State(h): State<ServiceHandle>, Path(id): Path<u32>, body: Bytes) -> ApiResult<CoilAck> {
    let req: CoilRequest = parse(&body)?;
    Ok(Json(h.call(move |c| c.set_coil(id, req.on)).await?))
}

async fn markers(State(h): State<ServiceHandle>) -> Json<Vec<MarkerView>> {
    Json(h.snapshot().markers.clone())
}

async fn place_marker(State(h): State<ServiceHandle>, body: Bytes) -> Result<(StatusCode, Json<MarkerView>), ApiError> {
    let at: TargetSpec = parse(&body)?;
    let view = h.call(move |c| c.place_marker(&at)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn move_marker(
    State(h): State<ServiceHandle>,
    Path(id): Path<u32>,
    Query(w): Query<WaitQuery>,
    body: Bytes,
) -> ApiResult<PlanSummary> {
    let req: MoveRequest = parse(&body)?;
    Ok(Json(h.motion(move |c| c.prepare_move(id, &req.target), w.wait).await?))
}

async fn perturb(State(h): State<ServiceHandle>, Path(id): Path<u32>, body: Bytes) -> ApiResult<MarkerView> {
    let req: PerturbRequest = parse(&body)?;
    Ok(Json(h.call(move |c| c.perturb(id, req.dx_mm, req.dy_mm)).await?))
}

async fn render(State(h): State<ServiceHandle>, Path(name): Path<String>, Query(w): Query<WaitQuery>) -> ApiResult<PlanSummary> {
    Ok(Json(h.motion(move |c| c.prepare_render(&name), w.wait).await?))
}

async fn trigger(State(h): State<ServiceHandle>, Query(w): Query<WaitQuery>, body: Bytes) -> ApiResult<PlanSummary> {
    let req: TriggerRequest = parse(&body)?;
    Ok(Json(h.motion(move |c| c.prepare_trigger(&req.text), w.wait).await?))
}

async fn sequence_step(
    State(h): State<ServiceHandle>,
    Path(name): Path<String>,
    Query(w): Query<WaitQuery>,
    body: Bytes,
) -> ApiResult<PlanSummary> {
    let req: StepRequest = parse(&body)?;
    Ok(Json(h.motion(move |c| c.prepare_sequence_step(&name, req.direction), w.wait).await?))
}

async fn park(State(h): State<ServiceHandle>, Query(w): Query<WaitQuery>) -> ApiResult<PlanSummary> {
    Ok(Json(h.motion(|c| c.prepare_park(), w.wait).await?))
}

fn same_name(path: &str, body: &str, what: &str) -> Result<(), ApiError> {
    if path == body {
        Ok(())
    } else {
        Err(ApiError(ServiceError::Validation(format!("{what} '{body}' in body does not match '{path}' in path"))))
    }
}

async fn list_configurations(State(h): State<ServiceHandle>) -> ApiResult<Vec<Configuration>> {
    Ok(Json(h.call(|c| Ok(c.content().configurations.values().cloned().collect())).await?))
}

async fn get_configuration(State(h): State<ServiceHandle>, Path(name): Path<String>) -> ApiResult<Configuration> {
    Ok(Json(
        h.call(move |c| c.content().configurations.get(&name).cloned().ok_or_else(|| ServiceError::not_found("configuration", name)))
            .await?,
    ))
}

async fn create_configuration(State(h): State<ServiceHandle>, body: Bytes) -> Result<(StatusCode, Json<Configuration>), ApiError> {
    let config: Configuration = parse(&body)?;
    Ok((StatusCode::CREATED, Json(h.call(move |c| c.put_configuration(config)).await?)))
}

async fn put_configuration(State(h): State<ServiceHandle>, Path(name): Path<String>, body: Bytes) -> ApiResult<Configuration> {
    let config: Configuration = parse(&body)?;
    same_name(&name, &config.name, "configuration")?;
    Ok(Json(h.call(move |c| c.put_configuration(config)).await?))
}

async fn delete_configuration(State(h): State<ServiceHandle>, Path(name): Path<String>) -> ApiResult<Configuration> {
    Ok(Json(h.call(move |c| c.delete_configuration(&name)).await?))
}

async fn list_bindings(State(h): State<ServiceHandle>) -> ApiResult<Vec<CommandBinding>> {
    Ok(Json(h.call(|c| Ok(c.content().bindings.values().cloned().collect())).await?))
}

async fn get_binding(State(h): State<ServiceHandle>, Path(trigger): Path<String>) -> ApiResult<CommandBinding> {
    Ok(Json(
        h.call(move |c| c.content().bindings.get(&trigger).cloned().ok_or_else(|| ServiceError::not_found("binding", trigger)))
            .await?,
    ))
}

async fn create_binding(State(h): State<ServiceHandle>, body: Bytes) -> Result<(StatusCode, Json<CommandBinding>), ApiError> {
    let b: CommandBinding = parse(&body)?;
    Ok((StatusCode::CREATED, Json(h.call(move |c| c.put_binding(b)).await?)))
}

async fn put_binding(State(h): State<ServiceHandle>, Path(trigger): Path<String>, body: Bytes) -> ApiResult<CommandBinding> {
    let b: CommandBinding = parse(&body)?;
    same_name(&trigger, &b.trigger, "trigger")?;
    Ok(Json(h.call(move |c| c.put_binding(b)).await?))
}

async fn delete_binding(State(h): State<ServiceHandle>, Path(trigger): Path<String>) -> ApiResult<CommandBinding> {
    Ok(Json(h.call(move |c| c.delete_binding(&trigger)).await?))
}

async fn list_sequences(State(h): State<ServiceHandle>) -> ApiResult<Vec<Sequence>> {
    Ok(Json(h.call(|c| Ok(c.content().sequences.values().cloned().collect())).await?))
}

async fn get_sequence(State(h): State<ServiceHandle>, Path(name): Path<String>) -> ApiResult<Sequence> {
    Ok(Json(
        h.call(move |c| c.content().sequences.get(&name).cloned().ok_or_else(|| ServiceError::not_found("sequence", name)))
            .await?,
    ))
}

async fn create_sequence(State(h): State<ServiceHandle>, body: Bytes) -> Result<(StatusCode, Json<Sequence>), ApiError> {
    let s: Sequence = parse(&body)?;
    Ok((StatusCode::CREATED, Json(h.call(move |c| c.put_sequence(s)).await?)))
}

async fn put_sequence(State(h): State<ServiceHandle>, Path(name): Path<String>, body: Bytes) -> ApiResult<Sequence> {
    let s: Sequence = parse(&body)?;
    same_name(&name, &s.name, "sequence")?;
    Ok(Json(h.call(move |c| c.put_sequence(s)).await?))
}

async fn delete_sequence(State(h): State<ServiceHandle>, Path(name): Path<String>) -> ApiResult<Sequence> {
    Ok(Json(h.call(move |c| c.delete_sequence(&name)).await?))
}

async fn list_graphics(State(h): State<ServiceHandle>) -> ApiResult<Vec<Graphic>> {
    Ok(Json(h.call(|c| Ok(c.content().graphics.values().cloned().collect())).await?))
}

async fn get_graphic(State(h): State<ServiceHandle>, Path(name): Path<String>) -> ApiResult<Graphic> {
    Ok(Json(
        h.call(move |c| c.content().graphics.get(&name).cloned().ok_or_else(|| ServiceError::not_found("graphic", name)))
            .await?,
    ))
}

async fn put_graphic(State(h): State<ServiceHandle>, Path(name): Path<String>, body: Bytes) -> ApiResult<Graphic> {
    let upload: GraphicUpload = parse(&body)?;
    Ok(Json(h.call(move |c| c.import_graphic(&name, &upload)).await?))
}

async fn delete_graphic(State(h): State<ServiceHandle>, Path(name): Path<String>) -> ApiResult<Graphic> {
    Ok(Json(h.call(move |c| c.delete_graphic(&name)).await?))
}

async fn get_content(State(h): State<ServiceHandle>) -> ApiResult<ContentStore> {
    Ok(Json(h.call(|c| Ok(c.content().clone())).await?))
}

async fn put_content(State(h): State<ServiceHandle>, body: Bytes) -> ApiResult<ContentStore> {
    let store: ContentStore = parse(&body)?;
    Ok(Json(
        h.call(move |c| {
            c.load_content(store)?;
            Ok(c.content().clone())
        })
        .await?,
    ))
}
