use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use homonym_core::corpus::{AuthorRef, PublicationRecord, Snapshot};
use homonym_core::graph::EdgeMode;
use homonym_core::ranking::{profile_detail, RankedProfile};
use homonym_service::{router, Status, Store};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn record(id: &str, year: i32, venue: &str, authors: &[&str]) -> PublicationRecord {
    PublicationRecord {
        pub_id: id.to_string(),
        title: format!("title of {id}"),
        year,
        venue_id: venue.to_string(),
        authors: authors
            .iter()
            .map(|a| AuthorRef {
                pid: a.to_string(),
                name: format!("Name {a}"),
            })
            .collect(),
    }
}

fn seeded_store() -> Arc<Store> {
    let snap = Snapshot::from_publications(vec![
        record("1", 2001, "v1", &["a", "x", "y"]),
        record("2", 2002, "v1", &["a", "x"]),
        record("3", 2010, "v2", &["a", "z"]),
        record("4", 2003, "v1", &["b", "x", "y"]),
        record("5", 2004, "v2", &["b", "y", "z"]),
    ])
    .unwrap();
    let ranking: Vec<RankedProfile> = [("a", 0.91), ("b", 0.64), ("x", 0.30), ("y", 0.12)]
        .iter()
        .enumerate()
        .map(|(i, (pid, p))| RankedProfile {
            profile_id: pid.to_string(),
            p_homonym: *p,
            rank: i + 1,
        })
        .collect();
    let details: Vec<_> = ranking
        .iter()
        .map(|r| profile_detail(&snap, &r.profile_id, EdgeMode::Induced, Some(r.p_homonym)).unwrap())
        .collect();
    let store = Store::open_in_memory().unwrap();
    store.replace_ranking(&ranking, &details).unwrap();
    Arc::new(store)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
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

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(app, req).await
}

fn pids(v: &Value) -> Vec<&str> {
    v.as_array().unwrap().iter().map(|c| c["pid"].as_str().unwrap()).collect()
}

#[tokio::test]
async fn ranking_lists_cases_in_rank_order() {
    let app = router(seeded_store(), None);
    let (status, body) = get(&app, "/api/ranking").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(pids(&body), vec!["a", "b", "x", "y"]);
    let first = &body[0];
    assert_eq!(first["rank"], 1);
    assert_eq!(first["p"], 0.91);
    assert_eq!(first["status"], "open");

    let (_, two) = get(&app, "/api/ranking?limit=2").await;
    assert_eq!(pids(&two), vec!["a", "b"]);
    let (_, all) = get(&app, "/api/ranking?limit=1000").await;
    assert_eq!(all.as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn ranking_rejects_bad_queries() {
    let app = router(seeded_store(), None);
    for uri in ["/api/ranking?limit=0", "/api/ranking?limit=ten", "/api/ranking?status=closed"] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(body["error"], "bad-request");
        assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
}

#[tokio::test]
async fn resolution_workflow() {
    let store = seeded_store();
    let app = router(Arc::clone(&store), None);

    let (status, body) = post(&app, "/api/resolve", r#"{"pid":"a","status":"confirmed","curator":"ann"}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "confirmed");
    assert_eq!(body["resolved_by"], "ann");
    assert!(body["resolved_at"].is_string());

    let (status, _) = post(&app, "/api/resolve", r#"{"pid":"x","status":"confirmed","curator":"ann"}"#).await;
    assert_eq!(status, StatusCode::OK);
    let (_, open) = get(&app, "/api/ranking?status=open").await;
    assert_eq!(pids(&open), vec!["b", "y"]);

    // same decision twice is fine
    let (status, _) = post(&app, "/api/resolve", r#"{"pid":"a","status":"confirmed","curator":"bob"}"#).await;
    assert_eq!(status, StatusCode::OK);

    let (status, body) = post(&app, "/api/resolve", r#"{"pid":"a","status":"false-positive","curator":"bob"}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "conflict");

    let (status, body) = post(&app, "/api/resolve", r#"{"pid":"nobody","status":"unclear","curator":"bob"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not-found");

    assert_eq!(store.log().unwrap().len(), 2);
    assert_eq!(store.case("a").unwrap().status, Status::Confirmed);
}

#[tokio::test]
async fn malformed_resolve_bodies_get_json_errors() {
    let app = router(seeded_store(), None);
    for body in [
        "not json",
        r#"{"pid":"a","status":"maybe","curator":"ann"}"#,
        r#"{"pid":"a","curator":"ann"}"#,
        r#"{"pid":"a","status":"open","curator":"ann"}"#,
        r#"{"pid":"a","status":"unclear","curator":""}"#,
    ] {
        let (status, resp) = post(&app, "/api/resolve", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(resp["error"], "bad-request");
    }
}

#[tokio::test]
async fn stats_track_resolutions() {
    let app = router(seeded_store(), None);
    let (_, empty) = get(&app, "/api/stats").await;
    assert_eq!(empty["open"], 4);
    assert!(empty.get("precision_over_determined").is_none());

    for (pid, status) in [("a", "confirmed"), ("b", "confirmed"), ("x", "false-positive"), ("y", "unclear")] {
        let body = json!({"pid": pid, "status": status, "curator": "team"}).to_string();
        assert_eq!(post(&app, "/api/resolve", &body).await.0, StatusCode::OK);
    }
    let (status, stats) = get(&app, "/api/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((stats["confirmed"].as_u64(), stats["false_positive"].as_u64()), (Some(2), Some(1)));
    assert_eq!(stats["unclear"], 1);
    assert_eq!(stats["open"], 0);
    let p = stats["precision_over_determined"].as_f64().unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-12);
}

#[tokio::test]
async fn profile_detail_endpoint() {
    let app = router(seeded_store(), None);
    let (status, body) = get(&app, "/api/profile/a").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["pid"], "a");
    assert_eq!(body["names"], json!(["Name a"]));
    assert_eq!(body["publications"].as_array().unwrap().len(), 3);
    // y and z met on a paper of b, so the induced graph joins them
    assert_eq!(body["clusters"], json!([["x", "y", "z"]]));
    assert_eq!(body["year_histogram"], json!({"2001": 1, "2002": 1, "2010": 1}));
    assert_eq!(body["p_homonym"], 0.91);
    assert_eq!(body["rank"], 1);
    assert_eq!(body["status"], "open");

    let (status, body) = get(&app, "/api/profile/zzz").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not-found");
}

#[tokio::test]
async fn unknown_api_paths_are_json_404() {
    let app = router(seeded_store(), None);
    let (status, body) = get(&app, "/api/nothing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not-found");
}

#[tokio::test]
async fn serves_static_ui_next_to_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>triage</title>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log('ui')").unwrap();
    let app = router(seeded_store(), Some(dir.path().to_path_buf()));

    let (status, body) = get(&app, "/").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("triage"));
    let (status, body) = get(&app, "/app.js").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("console.log"));
    // client-side routes fall back to the app shell
    let (status, body) = get(&app, "/case/a").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("triage"));
    // the API still wins over static files
    let (status, body) = get(&app, "/api/ranking?limit=1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(pids(&body), vec!["a"]);
}

#[tokio::test]
async fn serves_over_tcp() {
    let store = seeded_store();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = tokio::spawn(async move { axum::serve(listener, router(store, None)).await });

    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /api/stats HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).await.unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"open\":4"));
    server.abort();
}
