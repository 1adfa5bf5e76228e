mod common;

use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};

use probesense_core::density::{CountStore, DensitySample};
use probesense_core::journey::SankeyDocument;
use probesense_core::pipeline::{run_pipeline, PipelineConfig};
use probesense_core::realtime::RealtimeHub;
use probesense_core::sim::{DeviceSpec, Scenario, ScenarioFile};
use probesense_core::Timestamp;
use probesense_gateway::{router, AppState, ConfigService};

use common::*;

#[tokio::test]
async fn errors_carry_code_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;

    let (s, v) = call(&f.app, "GET", "/entities", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(v["code"], "unauthorized");
    assert!(v["message"].is_string());

    let (s, v) = call(&f.app, "GET", "/entities", Some("nope"), None).await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::UNAUTHORIZED, Some("unauthorized"))
    );

    let (s, v) = call(&f.app, "GET", "/floors/999", Some(ADMIN), None).await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("not_found"))
    );
    let (s, _) = call(&f.app, "GET", "/floors/abc", Some(ADMIN), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call(&f.app, "GET", "/no/such/route", Some(ADMIN), None).await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("not_found"))
    );

    let req = Request::builder()
        .method("POST")
        .uri("/buildings")
        .header("authorization", format!("Bearer {ADMIN}"))
        .header("content-type", "application/json")
        .body(Body::from("{\"entity_id\":"))
        .unwrap();
    let (s, v) = send(&f.app, req).await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("bad_request"))
    );
}

#[tokio::test]
async fn user_role_cannot_create_building() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let (s, v) = call(
        &f.app,
        "POST",
        "/buildings",
        Some(USER),
        Some(json!({"entity_id": f.entity, "name": "X"})),
    )
    .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    assert_eq!(v["code"], "forbidden");
    let (s, v) = call(&f.app, "GET", "/buildings", Some(USER), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn placement_round_trip_and_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let uri = format!("/floors/{}/scanners", f.floor);
    let (s, placed) = call(
        &f.app,
        "POST",
        &uri,
        Some(ADMIN),
        Some(json!({"scanner_id": "s-1", "x": 0.5, "y": 0.5})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(
        placed,
        json!({"scanner_id": "s-1", "floor_id": f.floor, "x": 0.5, "y": 0.5})
    );

    let (_, listed) = call(&f.app, "GET", &uri, Some(USER), None).await;
    assert_eq!(listed, json!([placed]));
    let (_, floor) = call(
        &f.app,
        "GET",
        &format!("/floors/{}", f.floor),
        Some(USER),
        None,
    )
    .await;
    assert_eq!(floor["scanners"], json!([placed]));

    let (s, v) = call(
        &f.app,
        "POST",
        &uri,
        Some(ADMIN),
        Some(json!({"scanner_id": "s-1", "x": 0.1, "y": 0.2})),
    )
    .await;
    assert_eq!(
        (s, v["code"].as_str()),
        (StatusCode::CONFLICT, Some("conflict"))
    );

    let (s, _) = call(
        &f.app,
        "POST",
        &uri,
        Some(ADMIN),
        Some(json!({"scanner_id": "s-2", "x": -0.1, "y": 0.2})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, moved) = call(
        &f.app,
        "PUT",
        &format!("{uri}/s-1"),
        Some(ADMIN),
        Some(json!({"x": 1.0, "y": 0.0})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(
        (moved["x"].as_f64(), moved["y"].as_f64()),
        (Some(1.0), Some(0.0))
    );
    let (s, _) = call(&f.app, "DELETE", &format!("{uri}/s-1"), Some(ADMIN), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (_, listed) = call(&f.app, "GET", &uri, Some(USER), None).await;
    assert_eq!(listed, json!([]));
}

#[tokio::test]
async fn floor_map_stored_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let (_, floor) = call(
        &f.app,
        "GET",
        &format!("/floors/{}", f.floor),
        Some(USER),
        None,
    )
    .await;
    assert_eq!(
        floor["map"],
        json!({"media_type": "image/png", "bytes": PNG.len()})
    );
    assert_eq!(floor["max_density"], 10);

    let req = Request::builder()
        .uri(format!("/floors/{}/map", f.floor))
        .header("authorization", format!("Bearer {USER}"))
        .body(Body::empty())
        .unwrap();
    let resp = {
        use tower::ServiceExt;
        f.app.clone().oneshot(req).await.unwrap()
    };
    assert_eq!(resp.headers()["content-type"], "image/png");
    let (_, bytes) = send_raw(
        &f.app,
        Request::builder()
            .uri(format!("/floors/{}/map", f.floor))
            .header("authorization", format!("Bearer {USER}"))
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    assert_eq!(bytes, PNG);

    let svg = b"<svg xmlns='http://www.w3.org/2000/svg'/>";
    let req = Request::builder()
        .method("PUT")
        .uri(format!("/floors/{}/map", f.floor))
        .header("authorization", format!("Bearer {ADMIN}"))
        .header("content-type", "image/svg+xml")
        .body(Body::from(&svg[..]))
        .unwrap();
    let (s, v) = send(&f.app, req).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["map"]["media_type"], "image/svg+xml");
}

#[tokio::test]
async fn floor_upload_validation() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let (s, _) = create_floor(&f.app, ADMIN, f.building, "Upper", "0").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = create_floor(&f.app, ADMIN, f.building, "Upper", "lots").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let upload = |body: Vec<u8>| {
        Request::builder()
            .method("POST")
            .uri(format!("/buildings/{}/floors", f.building))
            .header("authorization", format!("Bearer {ADMIN}"))
            .header(
                "content-type",
                format!("multipart/form-data; boundary={BOUNDARY}"),
            )
            .body(Body::from(body))
            .unwrap()
    };
    let (s, v) = send(&f.app, upload(multipart("Upper", "5", None))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, _) = send(
        &f.app,
        upload(multipart("Upper", "5", Some(("text/plain", b"hi")))),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = send(
        &f.app,
        upload(multipart(
            "Upper",
            "5",
            Some(("image/jpeg", b"\xff\xd8\xff")),
        )),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["map"]["media_type"], "image/jpeg");

    let (s, _) = create_floor(&f.app, USER, f.building, "Upper", "5").await;
    assert_eq!(s, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn max_density_update() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let uri = format!("/floors/{}/max_density", f.floor);
    let (s, v) = call(
        &f.app,
        "PUT",
        &uri,
        Some(ADMIN),
        Some(json!({"max_density": 42})),
    )
    .await;
    assert_eq!((s, v["max_density"].as_u64()), (StatusCode::OK, Some(42)));
    let (s, _) = call(
        &f.app,
        "PUT",
        &uri,
        Some(ADMIN),
        Some(json!({"max_density": 0})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &f.app,
        "PUT",
        &uri,
        Some(USER),
        Some(json!({"max_density": 7})),
    )
    .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn config_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gateway.json");
    let mk = || {
        AppState::new(
            ConfigService::open(&path).unwrap(),
            tokens(&[]),
            dir.path(),
            RealtimeHub::default(),
        )
    };
    let app = router(mk());
    let (_, e) = call(
        &app,
        "POST",
        "/entities",
        Some(ROOT),
        Some(json!({"name": "Kept"})),
    )
    .await;
    let app = router(mk());
    let (s, v) = call(
        &app,
        "GET",
        &format!("/entities/{}", e["id"]),
        Some(ROOT),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["name"], "Kept");
}

fn bucket_oracle(samples: &[(i64, u64)], from: i64, to: i64, bucket_ms: i64) -> Vec<(i64, u64)> {
    let mut m: BTreeMap<i64, u64> = BTreeMap::new();
    for &(ts, c) in samples.iter().filter(|(ts, _)| *ts >= from && *ts < to) {
        let start = ts.div_euclid(bucket_ms) * bucket_ms;
        let e = m.entry(start).or_insert(0);
        if c > *e {
            *e = c;
        }
    }
    m.into_iter().collect()
}

fn points(v: &Value) -> Vec<(i64, u64)> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|p| (p["ts"].as_i64().unwrap(), p["count"].as_u64().unwrap()))
        .collect()
}

#[tokio::test]
async fn density_history_matches_direct_reads() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let uri = format!("/floors/{}/scanners", f.floor);
    for s in ["s-a", "s-b"] {
        call(
            &f.app,
            "POST",
            &uri,
            Some(ADMIN),
            Some(json!({"scanner_id": s, "x": 0.3, "y": 0.3})),
        )
        .await;
    }

    let hist = |from: i64, to: i64, bucket: Option<u32>| {
        let q = match bucket {
            Some(b) => format!("/floors/{}/density?from={from}&to={to}&bucket={b}", f.floor),
            None => format!("/floors/{}/density?from={from}&to={to}", f.floor),
        };
        let app = f.app.clone();
        async move { call(&app, "GET", &q, Some(USER), None).await }
    };

    // empty store
    let (s, v) = hist(0, 1_000_000, Some(60)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["series"], json!({"s-a": [], "s-b": []}));

    let mut store = CountStore::open(dir.path()).unwrap();
    let t0 = 1_700_000_040_000i64;
    let mut written: BTreeMap<&str, Vec<(i64, u64)>> = BTreeMap::new();
    for k in 0..120i64 {
        for (i, s) in ["s-a", "s-b"].into_iter().enumerate() {
            let ts = t0 + k * 60_000 + i as i64 * 7_000;
            let count = ((k * 7 + i as i64 * 3) % 11) as u64;
            store
                .append(&DensitySample {
                    scanner_id: s.into(),
                    ts: Timestamp::from_millis(ts),
                    count,
                })
                .unwrap();
            written.entry(s).or_default().push((ts, count));
        }
    }

    // single point
    let (_, v) = hist(t0, t0 + 1, Some(60)).await;
    assert_eq!(points(&v["series"]["s-a"]), [(t0, 0)]);
    assert!(points(&v["series"]["s-b"]).is_empty());

    for (from, to, bucket) in [
        (t0, t0 + 3_600_000, 60),
        (t0 + 90_000, t0 + 5_000_000, 300),
        (t0 - 10, t0 + 7_200_000, 900),
    ] {
        let (s, v) = hist(from, to, Some(bucket)).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["bucket_s"], bucket);
        for (scanner, samples) in &written {
            let want = bucket_oracle(samples, from, to, i64::from(bucket) * 1000);
            assert_eq!(
                points(&v["series"][scanner]),
                want,
                "{scanner} {from}..{to}/{bucket}"
            );
        }
    }

    // boundary at `to` excluded
    let (_, v) = hist(t0, t0 + 60_000, Some(1)).await;
    assert_eq!(points(&v["series"]["s-a"]).len(), 1);

    let (_, v) = hist(t0, t0 + 120_000, None).await;
    assert_eq!(v["bucket_s"], 60);

    let (s, _) = hist(t0, t0 + 1, Some(0)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = hist(t0 + 1, t0, Some(60)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &f.app,
        "GET",
        &format!("/floors/{}/density", f.floor),
        Some(USER),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &f.app,
        "GET",
        "/floors/777/density?from=0&to=1",
        Some(USER),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn journeys_follow_simulated_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = ScenarioFile::new(5, 3_600.0)
        .scanner("s-a", "a")
        .scanner("s-b", "b")
        .scanner("s-x", "x");
    for i in 0..6 {
        file = file.device(
            DeviceSpec::new(format!("d{i}"), "XiaomiMiNote3")
                .stay("a", 0.0, 1_200.0 + i as f64 * 30.0)
                .stay("b", 1_200.0 + i as f64 * 30.0, 3_600.0),
        );
    }
    let scenario = Scenario::resolve(&file).unwrap();
    let run = run_pipeline(&scenario, &PipelineConfig::default(), dir.path()).unwrap();
    let truth = run.ground_truth.scanner_flow_matrix();
    assert_eq!(truth.get(&("s-a".to_string(), "s-b".to_string())), Some(&6));

    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let uri = format!("/floors/{}/scanners", f.floor);
    for s in ["s-a", "s-b"] {
        call(
            &f.app,
            "POST",
            &uri,
            Some(ADMIN),
            Some(json!({"scanner_id": s, "x": 0.5, "y": 0.5})),
        )
        .await;
    }
    let start = run.ground_truth.start.millis();
    let end = run.run_end.millis() + 1;
    let q = |from: i64, to: i64| format!("/buildings/{}/journeys?from={from}&to={to}", f.building);

    let (s, v) = call(&f.app, "GET", &q(start, end), Some(USER), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let doc: SankeyDocument = serde_json::from_value(v).unwrap();
    assert_eq!(doc.to_flows(), truth);
    assert_eq!(doc.nodes.len(), 2);

    // window before anyone moved
    let (_, v) = call(&f.app, "GET", &q(start, start + 600_000), Some(USER), None).await;
    assert_eq!(v["links"], json!([]));

    // no records at all
    let (_, v) = call(&f.app, "GET", &q(0, 1_000), Some(USER), None).await;
    assert_eq!(v, json!({"nodes": [], "links": []}));

    let (s, _) = call(
        &f.app,
        "GET",
        "/buildings/404/journeys?from=0&to=1",
        Some(USER),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn members_and_cascade() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), RealtimeHub::default()).await;
    let users = format!("/entities/{}/users", f.entity);
    let (s, _) = call(
        &f.app,
        "POST",
        &users,
        Some(ADMIN),
        Some(json!({"user_id": "bob", "role": "super_admin"})),
    )
    .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, v) = call(
        &f.app,
        "POST",
        &users,
        Some(ADMIN),
        Some(json!({"user_id": "bob", "role": "user"})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["users"].as_array().unwrap().len(), 3);
    let (s, _) = call(
        &f.app,
        "POST",
        &users,
        Some(ADMIN),
        Some(json!({"user_id": "bob", "role": "user"})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&f.app, "DELETE", &format!("{users}/bob"), Some(ADMIN), None).await;
    assert_eq!(s, StatusCode::OK);

    let (s, _) = call(
        &f.app,
        "DELETE",
        &format!("/entities/{}", f.entity),
        Some(ADMIN),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = call(
        &f.app,
        "DELETE",
        &format!("/entities/{}", f.entity),
        Some(ROOT),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(
        &f.app,
        "GET",
        &format!("/floors/{}", f.floor),
        Some(ROOT),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
