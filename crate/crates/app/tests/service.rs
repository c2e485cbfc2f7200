mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::Fixture;
use http_body_util::BodyExt;
use misinfo_app::server::{router, AppState, ServeSources};
use serde_json::{json, Value};
use tower::ServiceExt;

fn state(fx: &Fixture) -> Arc<AppState> {
    AppState::load(&ServeSources {
        runs_dir: &fx.path("out/runs"),
        graphs_dir: &fx.path("out/graphs"),
        edge_threshold: 3000,
        labels: &[fx.path("data/labels.csv")],
        registry: None,
        review_log: &fx.path("out/reviews.jsonl"),
    })
    .unwrap()
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn run_id(fx: &Fixture) -> String {
    fx.run_dir().file_name().unwrap().to_str().unwrap().to_string()
}

#[tokio::test]
async fn review_round_trip() {
    let fx = Fixture::new();
    let st = state(&fx);
    let id = run_id(&fx);

    let (s, health) = call(&st, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(health["runs"], 1);

    let (s, runs) = call(&st, "GET", "/runs", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(runs["runs"][0]["id"], id.as_str());
    assert_eq!(runs["runs"][0]["reviewed"], 0);

    let (s, queue) = call(&st, "GET", &format!("/runs/{id}/queue?page=1&size=5"), None).await;
    assert_eq!(s, StatusCode::OK);
    let item = &queue["items"][0];
    let domain = item["domain"].as_str().expect("a flagged domain").to_string();
    assert_eq!(item["status"], "pending");
    assert_eq!(item["months"].as_array().unwrap().len(), 3);
    let mins: Vec<f64> = queue["items"].as_array().unwrap().iter().map(|i| i["min_confidence"].as_f64().unwrap()).collect();
    assert!(mins.windows(2).all(|w| w[0] >= w[1]));

    let review = |verdict: &str| json!({"run": id, "domain": domain, "verdict": verdict, "reviewer": "r1", "checklist": [true, false]}).to_string();
    let (s, body) = call(&st, "POST", "/reviews", Some(review("confirmed_misinformation"))).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["outcome"], "recorded");
    assert_eq!(body["item"]["status"], "reviewed");
    assert_eq!(body["item"]["reviewer"], "r1");

    let (s, body) = call(&st, "POST", "/reviews", Some(review("confirmed_misinformation"))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["outcome"], "unchanged");
    let log = std::fs::read_to_string(fx.path("out/reviews.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);

    let (s, body) = call(&st, "POST", "/reviews", Some(review("rejected"))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "conflict");

    let (_, queue) = call(&st, "GET", &format!("/runs/{id}/queue?page=1&size=5"), None).await;
    assert_eq!(queue["items"][0]["status"], "reviewed");
    assert_eq!(queue["items"][0]["verdict"], "confirmed_misinformation");
    let (_, runs) = call(&st, "GET", "/runs", None).await;
    assert_eq!(runs["runs"][0]["reviewed"], 1);

    // A restarted service sees the same state from the log.
    let again = state(&fx);
    let (_, queue) = call(&again, "GET", &format!("/runs/{id}/queue"), None).await;
    assert_eq!(queue["items"][0]["status"], "reviewed");
}

#[tokio::test]
async fn rejects_bad_requests() {
    let fx = Fixture::new();
    let st = state(&fx);
    let id = run_id(&fx);

    let (s, body) = call(&st, "POST", "/reviews", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["error"]["code"].is_string());

    let missing = json!({"run": id, "domain": "x.example"}).to_string();
    assert_eq!(call(&st, "POST", "/reviews", Some(missing)).await.0, StatusCode::BAD_REQUEST);

    // A labeled domain can never be a positive.
    let labels = std::fs::read_to_string(fx.path("data/labels.csv")).unwrap();
    let labeled = labels.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let body = json!({"run": id, "domain": labeled, "verdict": "rejected", "reviewer": "r1"}).to_string();
    assert_eq!(call(&st, "POST", "/reviews", Some(body)).await.0, StatusCode::NOT_FOUND);

    let body = json!({"run": "nope", "domain": labeled, "verdict": "rejected", "reviewer": "r1"}).to_string();
    assert_eq!(call(&st, "POST", "/reviews", Some(body)).await.0, StatusCode::NOT_FOUND);

    assert_eq!(call(&st, "GET", &format!("/runs/{id}/queue?page=0"), None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&st, "GET", "/runs/nope/queue", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&st, "GET", "/domains/not%20a%20host", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&st, "GET", "/domains/absent.example", None).await.0, StatusCode::NOT_FOUND);
    assert!(std::fs::read_to_string(fx.path("out/reviews.jsonl")).unwrap_or_default().is_empty());
}

#[tokio::test]
async fn domain_detail_lists_features_and_neighbors() {
    let fx = Fixture::new();
    let st = state(&fx);
    let id = run_id(&fx);
    let (_, queue) = call(&st, "GET", &format!("/runs/{id}/queue"), None).await;
    let domain = queue["items"][0]["domain"].as_str().unwrap().to_string();

    let (s, body) = call(&st, "GET", &format!("/domains/{domain}"), None).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["class"], "unlabeled");
    let month = &body["months"][0];
    let features = month["features"].as_array().unwrap();
    assert_eq!(features.len(), 20);
    assert!(!features[0]["name"].as_str().unwrap().is_empty());
    let neighbors = month["neighbors"].as_array().unwrap();
    assert!(neighbors.iter().any(|n| n["class"] == "misinformation"), "a positive sits in a seed egonet");
    assert!(neighbors.iter().all(|n| n["weight"].as_u64().unwrap() >= 3000));

    let (s, body) = call(&st, "GET", &format!("/domains/{domain}?mode=multiclass"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["months"][0]["features"].as_array().unwrap().len(), 22);
}
