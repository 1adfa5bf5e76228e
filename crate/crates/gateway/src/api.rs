//! HTTP and WebSocket routes.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;
use tracing::debug;

use probesense_core::journey::{
    journeys_from_archive, sankey_export, SankeyDocument, DEFAULT_GAP_THRESHOLD_S,
};
use probesense_core::realtime::RealtimeHub;
use probesense_core::Timestamp;

use crate::auth::TokenTable;
use crate::config::{
    Building, Caller, ConfigService, Entity, Floor, FloorMap, Id, Role, ScannerPlacement,
};
use crate::error::ApiError;
use crate::history::{read_series, DensityHistory, DEFAULT_BUCKET_S};
use crate::relay::FloorRelay;

pub const MAX_UPLOAD_BYTES: usize = 16 * 1024 * 1024;

/// Close code sent to a realtime client that fell too far behind.
pub const CLOSE_LAGGED: u16 = 1013;
/// Close code sent when the watched floor is deleted.
pub const CLOSE_FLOOR_GONE: u16 = 1001;

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<ConfigService>,
    pub tokens: Arc<TokenTable>,
    /// Root of the collector archive and `density/` count store.
    pub store_root: Arc<PathBuf>,
    pub hub: RealtimeHub,
    pub gap_threshold_s: u32,
}

impl AppState {
    pub fn new(
        config: ConfigService,
        tokens: TokenTable,
        store_root: impl Into<PathBuf>,
        hub: RealtimeHub,
    ) -> Self {
        Self {
            config: Arc::new(config),
            tokens: Arc::new(tokens),
            store_root: Arc::new(store_root.into()),
            hub,
            gap_threshold_s: DEFAULT_GAP_THRESHOLD_S,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/me", get(me))
        .route("/entities", get(list_entities).post(create_entity))
        .route("/entities/{id}", get(get_entity).delete(delete_entity))
        .route("/entities/{id}/users", axum::routing::post(add_user))
        .route(
            "/entities/{id}/users/{user_id}",
            axum::routing::delete(remove_user),
        )
        .route("/buildings", get(list_buildings).post(create_building))
        .route("/buildings/{id}", get(get_building).delete(delete_building))
        .route(
            "/buildings/{id}/floors",
            get(list_floors).post(create_floor),
        )
        .route("/buildings/{id}/journeys", get(journeys))
        .route("/floors/{id}", get(get_floor).delete(delete_floor))
        .route("/floors/{id}/map", get(get_map).put(put_map))
        .route("/floors/{id}/max_density", put(set_max_density))
        .route(
            "/floors/{id}/scanners",
            get(list_scanners).post(place_scanner),
        )
        .route(
            "/floors/{id}/scanners/{scanner_id}",
            put(move_scanner).delete(remove_scanner),
        )
        .route("/floors/{id}/density", get(density_history))
        .route("/realtime/{id}", get(realtime))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Bearer token from the `Authorization` header, or from an `access_token`
/// query parameter for WebSocket clients that cannot set headers.
impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &AppState,
    ) -> Result<Self, Self::Rejection> {
        let header = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        let query = parts
            .uri
            .query()
            .and_then(|q| q.split('&').find_map(|kv| kv.strip_prefix("access_token=")));
        let token = header
            .or(query)
            .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        state
            .tokens
            .lookup(token.trim())
            .cloned()
            .ok_or_else(|| ApiError::unauthorized("unknown token"))
    }
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    r.map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn query<T: DeserializeOwned>(r: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    r.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn id(raw: &str, what: &str) -> Result<Id, ApiError> {
    raw.parse().map_err(|_| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("{what} {raw:?} not found"),
        )
    })
}

fn created<T: Serialize>(v: T) -> Response {
    (StatusCode::CREATED, Json(v)).into_response()
}

type ApiResult<T> = Result<T, ApiError>;

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn me(caller: Caller) -> Json<Caller> {
    Json(caller)
}

// entities

#[derive(Debug, Deserialize)]
struct NameBody {
    name: String,
}

async fn create_entity(
    State(s): State<AppState>,
    caller: Caller,
    b: Result<Json<NameBody>, JsonRejection>,
) -> ApiResult<Response> {
    let b = body(b)?;
    Ok(created(s.config.create_entity(&caller, &b.name)?))
}

async fn list_entities(State(s): State<AppState>, caller: Caller) -> Json<Vec<Entity>> {
    Json(s.config.list_entities(&caller))
}

async fn get_entity(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<Json<Entity>> {
    Ok(Json(s.config.entity(&caller, id(&raw, "entity")?)?))
}

async fn delete_entity(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<StatusCode> {
    s.config.delete_entity(&caller, id(&raw, "entity")?)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
struct MemberBody {
    user_id: String,
    role: Role,
}

async fn add_user(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    b: Result<Json<MemberBody>, JsonRejection>,
) -> ApiResult<Response> {
    let entity = id(&raw, "entity")?;
    let b = body(b)?;
    Ok(created(
        s.config.add_user(&caller, entity, &b.user_id, b.role)?,
    ))
}

async fn remove_user(
    State(s): State<AppState>,
    caller: Caller,
    Path((raw, user)): Path<(String, String)>,
) -> ApiResult<Json<Entity>> {
    Ok(Json(s.config.remove_user(
        &caller,
        id(&raw, "entity")?,
        &user,
    )?))
}

// buildings

#[derive(Debug, Deserialize)]
struct BuildingBody {
    entity_id: Id,
    name: String,
}

async fn create_building(
    State(s): State<AppState>,
    caller: Caller,
    b: Result<Json<BuildingBody>, JsonRejection>,
) -> ApiResult<Response> {
    let b = body(b)?;
    Ok(created(s.config.create_building(
        &caller,
        b.entity_id,
        &b.name,
    )?))
}

async fn list_buildings(State(s): State<AppState>, caller: Caller) -> Json<Vec<Building>> {
    Json(s.config.list_buildings(&caller))
}

async fn get_building(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<Json<Building>> {
    Ok(Json(s.config.building(&caller, id(&raw, "building")?)?))
}

async fn delete_building(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<StatusCode> {
    s.config.delete_building(&caller, id(&raw, "building")?)?;
    Ok(StatusCode::NO_CONTENT)
}

// floors

/// Floor as served over JSON; the map image itself lives at `/floors/{id}/map`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorView {
    pub id: Id,
    pub building_id: Id,
    pub name: String,
    pub max_density: u32,
    pub map: Option<MapInfo>,
    pub scanners: Vec<ScannerPlacement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapInfo {
    pub media_type: String,
    pub bytes: usize,
}

fn floor_view(f: Floor, scanners: Vec<ScannerPlacement>) -> FloorView {
    FloorView {
        id: f.id,
        building_id: f.building_id,
        name: f.name,
        max_density: f.max_density,
        map: f.map.map(|m| MapInfo {
            media_type: m.media_type,
            bytes: m.data.len(),
        }),
        scanners,
    }
}

async fn list_floors(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<Json<Vec<FloorView>>> {
    let floors = s.config.building_floors(&caller, id(&raw, "building")?)?;
    let views = floors
        .into_iter()
        .map(|f| {
            let scanners = s.config.floor_scanners(&caller, f.id)?;
            Ok(floor_view(f, scanners))
        })
        .collect::<ApiResult<_>>()?;
    Ok(Json(views))
}

/// Multipart fields: `name`, `max_density`, and the `map` image file.
async fn create_floor(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    form: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> ApiResult<Response> {
    let building = id(&raw, "building")?;
    let mut form = form.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (mut name, mut max_density, mut map) = (None, None, None);
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?
    {
        let field_name = field.name().unwrap_or_default().to_string();
        match field_name.as_str() {
            "name" => {
                name = Some(
                    field
                        .text()
                        .await
                        .map_err(|e| ApiError::bad_request(e.body_text()))?,
                )
            }
            "max_density" => {
                let text = field
                    .text()
                    .await
                    .map_err(|e| ApiError::bad_request(e.body_text()))?;
                max_density = Some(text.trim().parse::<u32>().map_err(|_| {
                    ApiError::bad_request(format!("max_density {text:?} is not a positive integer"))
                })?);
            }
            "map" => {
                let media_type = field
                    .content_type()
                    .unwrap_or("application/octet-stream")
                    .to_string();
                let data = field
                    .bytes()
                    .await
                    .map_err(|e| ApiError::bad_request(e.body_text()))?;
                map = Some(FloorMap {
                    media_type,
                    data: data.to_vec(),
                });
            }
            other => debug!(field = other, "ignoring multipart field"),
        }
    }
    let name = name.ok_or_else(|| ApiError::bad_request("missing field name"))?;
    let max_density =
        max_density.ok_or_else(|| ApiError::bad_request("missing field max_density"))?;
    let map = map.ok_or_else(|| ApiError::bad_request("missing field map"))?;
    let f = s
        .config
        .create_floor(&caller, building, &name, max_density, Some(map))?;
    Ok(created(floor_view(f, Vec::new())))
}

async fn get_floor(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<Json<FloorView>> {
    let floor = id(&raw, "floor")?;
    let f = s.config.floor(&caller, floor)?;
    let scanners = s.config.floor_scanners(&caller, floor)?;
    Ok(Json(floor_view(f, scanners)))
}

async fn delete_floor(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<StatusCode> {
    s.config.delete_floor(&caller, id(&raw, "floor")?)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_map(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<Response> {
    let f = s.config.floor(&caller, id(&raw, "floor")?)?;
    let m = f.map.ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("floor {} has no map", f.id),
        )
    })?;
    Ok(([(CONTENT_TYPE, m.media_type)], m.data).into_response())
}

/// Replaces the map with the raw request body, typed by `Content-Type`.
async fn put_map(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    headers: HeaderMap,
    data: Bytes,
) -> ApiResult<Json<FloorView>> {
    let floor = id(&raw, "floor")?;
    let media_type = headers
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("application/octet-stream")
        .to_string();
    let f = s.config.set_floor_map(
        &caller,
        floor,
        FloorMap {
            media_type,
            data: data.to_vec(),
        },
    )?;
    let scanners = s.config.floor_scanners(&caller, floor)?;
    Ok(Json(floor_view(f, scanners)))
}

#[derive(Debug, Deserialize)]
struct MaxDensityBody {
    max_density: u32,
}

async fn set_max_density(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    b: Result<Json<MaxDensityBody>, JsonRejection>,
) -> ApiResult<Json<FloorView>> {
    let floor = id(&raw, "floor")?;
    let b = body(b)?;
    let f = s.config.set_max_density(&caller, floor, b.max_density)?;
    let scanners = s.config.floor_scanners(&caller, floor)?;
    Ok(Json(floor_view(f, scanners)))
}

// placements

#[derive(Debug, Deserialize)]
struct PlacementBody {
    scanner_id: String,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct PositionBody {
    x: f64,
    y: f64,
}

async fn list_scanners(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
) -> ApiResult<Json<Vec<ScannerPlacement>>> {
    Ok(Json(s.config.floor_scanners(&caller, id(&raw, "floor")?)?))
}

async fn place_scanner(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    b: Result<Json<PlacementBody>, JsonRejection>,
) -> ApiResult<Response> {
    let floor = id(&raw, "floor")?;
    let b = body(b)?;
    Ok(created(s.config.place_scanner(
        &caller,
        floor,
        &b.scanner_id,
        b.x,
        b.y,
    )?))
}

async fn move_scanner(
    State(s): State<AppState>,
    caller: Caller,
    Path((raw, scanner)): Path<(String, String)>,
    b: Result<Json<PositionBody>, JsonRejection>,
) -> ApiResult<Json<ScannerPlacement>> {
    let floor = id(&raw, "floor")?;
    let b = body(b)?;
    Ok(Json(
        s.config.move_scanner(&caller, floor, &scanner, b.x, b.y)?,
    ))
}

async fn remove_scanner(
    State(s): State<AppState>,
    caller: Caller,
    Path((raw, scanner)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    s.config
        .remove_scanner(&caller, id(&raw, "floor")?, &scanner)?;
    Ok(StatusCode::NO_CONTENT)
}

// data

#[derive(Debug, Deserialize)]
struct RangeQuery {
    from: i64,
    to: i64,
    bucket: Option<u32>,
}

fn range(q: &RangeQuery) -> ApiResult<(Timestamp, Timestamp)> {
    if q.from > q.to {
        return Err(ApiError::bad_request("from must not be after to"));
    }
    Ok((Timestamp::from_millis(q.from), Timestamp::from_millis(q.to)))
}

async fn density_history(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    q: Result<Query<RangeQuery>, QueryRejection>,
) -> ApiResult<Json<DensityHistory>> {
    let floor = id(&raw, "floor")?;
    let scanners: Vec<String> = s
        .config
        .floor_scanners(&caller, floor)?
        .into_iter()
        .map(|p| p.scanner_id)
        .collect();
    let q = query(q)?;
    let (from, to) = range(&q)?;
    let bucket_s = q.bucket.unwrap_or(DEFAULT_BUCKET_S);
    if bucket_s == 0 {
        return Err(ApiError::bad_request("bucket must be positive"));
    }
    let root = Arc::clone(&s.store_root);
    let series =
        tokio::task::spawn_blocking(move || read_series(&root, &scanners, from, to, bucket_s))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(DensityHistory {
        floor_id: floor,
        from,
        to,
        bucket_s,
        series,
    }))
}

async fn journeys(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    q: Result<Query<RangeQuery>, QueryRejection>,
) -> ApiResult<Json<SankeyDocument>> {
    let building = id(&raw, "building")?;
    let scanners = s.config.building_scanners(&caller, building)?;
    let q = query(q)?;
    let (from, to) = range(&q)?;
    let root = Arc::clone(&s.store_root);
    let gap = s.gap_threshold_s;
    let matrix =
        tokio::task::spawn_blocking(move || journeys_from_archive(&root, &scanners, from, to, gap))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(sankey_export(&matrix)))
}

// realtime

async fn realtime(
    State(s): State<AppState>,
    caller: Caller,
    Path(raw): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let floor = id(&raw, "floor")?;
    s.config.floor(&caller, floor)?;
    // subscribe before the upgrade so no frame between now and the first
    // poll is lost
    let rx = s.hub.subscribe();
    let config = Arc::clone(&s.config);
    Ok(ws.on_upgrade(move |socket| stream_floor(socket, rx, config, floor)))
}

async fn stream_floor(
    mut socket: WebSocket,
    mut rx: tokio::sync::broadcast::Receiver<probesense_core::realtime::RealtimeFrame>,
    config: Arc<ConfigService>,
    floor: Id,
) {
    let mut relay = FloorRelay::new(floor);
    let close = |code: u16, reason: &str| {
        Message::Close(Some(CloseFrame {
            code,
            reason: reason.to_string().into(),
        }))
    };
    loop {
        tokio::select! {
            frame = rx.recv() => match frame {
                Ok(frame) => {
                    let Some((scanners, max_density)) = config.floor_watch(floor) else {
                        let _ = socket.send(close(CLOSE_FLOOR_GONE, "floor removed")).await;
                        break;
                    };
                    let scanners: BTreeSet<String> = scanners;
                    let Some(out) = relay.relay(frame, &scanners, max_density) else { continue };
                    let text = serde_json::to_string(&out).expect("frame serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    debug!(floor, missed = n, "dropping slow realtime client");
                    let _ = socket.send(close(CLOSE_LAGGED, "client too slow")).await;
                    break;
                }
                Err(RecvError::Closed) => {
                    let _ = socket.send(close(1001, "shutting down")).await;
                    break;
                }
            },
            msg = socket.recv() => match msg {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
