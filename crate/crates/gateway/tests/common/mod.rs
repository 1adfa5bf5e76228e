//! Shared fixture: tokens for a super admin, an admin and a user, an entity
//! with both members, one building and one floor.
#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use probesense_core::realtime::RealtimeHub;
use probesense_gateway::auth::TokenEntry;
use probesense_gateway::{router, AppState, ConfigService, Role, TokenTable};

pub const ROOT: &str = "t-root";
pub const ADMIN: &str = "t-ann";
pub const USER: &str = "t-uma";
pub const BOUNDARY: &str = "XyZbOuNdArY";
pub const PNG: &[u8] = &[
    0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0, 0, 0, 0x0d,
];

pub fn tokens(extra: &[(&str, &str, Role)]) -> TokenTable {
    let base = [
        (ROOT, "root", Role::SuperAdmin),
        (ADMIN, "ann", Role::Admin),
        (USER, "uma", Role::User),
    ];
    TokenTable::from_entries(base.iter().chain(extra).map(|(t, u, r)| TokenEntry {
        token: t.to_string(),
        user_id: u.to_string(),
        role: *r,
    }))
    .unwrap()
}

pub fn state(store: &Path, hub: RealtimeHub, extra: &[(&str, &str, Role)]) -> AppState {
    AppState::new(ConfigService::in_memory(), tokens(extra), store, hub)
}

pub struct Fixture {
    pub app: Router,
    pub state: AppState,
    pub entity: u64,
    pub building: u64,
    pub floor: u64,
}

pub async fn fixture(store: &Path, hub: RealtimeHub) -> Fixture {
    fixture_with(store, hub, &[]).await
}

pub async fn fixture_with(store: &Path, hub: RealtimeHub, extra: &[(&str, &str, Role)]) -> Fixture {
    let state = state(store, hub, extra);
    let app = router(state.clone());
    let (_, e) = call(
        &app,
        "POST",
        "/entities",
        Some(ROOT),
        Some(serde_json::json!({"name": "Campus"})),
    )
    .await;
    let entity = e["id"].as_u64().unwrap();
    for (user, role) in [("ann", "admin"), ("uma", "user")] {
        let (s, _) = call(
            &app,
            "POST",
            &format!("/entities/{entity}/users"),
            Some(ROOT),
            Some(serde_json::json!({"user_id": user, "role": role})),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let (_, b) = call(
        &app,
        "POST",
        "/buildings",
        Some(ADMIN),
        Some(serde_json::json!({"entity_id": entity, "name": "Library"})),
    )
    .await;
    let building = b["id"].as_u64().unwrap();
    let (s, f) = create_floor(&app, ADMIN, building, "Ground", "10").await;
    assert_eq!(s, StatusCode::CREATED, "{f}");
    let floor = f["id"].as_u64().unwrap();
    Fixture {
        app,
        state,
        entity,
        building,
        floor,
    }
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    send(app, req).await
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, bytes) = send_raw(app, req).await;
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

pub async fn send_raw(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

pub fn multipart(name: &str, max_density: &str, map: Option<(&str, &[u8])>) -> Vec<u8> {
    let mut out = Vec::new();
    for (field, value) in [("name", name), ("max_density", max_density)] {
        out.extend(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{field}\"\r\n\r\n{value}\r\n").as_bytes());
    }
    if let Some((media_type, bytes)) = map {
        out.extend(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"map\"; filename=\"map.bin\"\r\nContent-Type: {media_type}\r\n\r\n"
            )
            .as_bytes(),
        );
        out.extend(bytes);
        out.extend(b"\r\n");
    }
    out.extend(format!("--{BOUNDARY}--\r\n").as_bytes());
    out
}

pub async fn create_floor(
    app: &Router,
    token: &str,
    building: u64,
    name: &str,
    max_density: &str,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method("POST")
        .uri(format!("/buildings/{building}/floors"))
        .header("authorization", format!("Bearer {token}"))
        .header(
            "content-type",
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .body(Body::from(multipart(
            name,
            max_density,
            Some(("image/png", PNG)),
        )))
        .unwrap();
    send(app, req).await
}
