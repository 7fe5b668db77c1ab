//! HTTP endpoint contract: status codes, payload shapes and backpressure.

mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{config_in, toy_model};
use serde_json::{json, Value};
use triage_router::http::serve;
use triage_router::service::RouterService;

async fn spawn_server(service: Arc<RouterService>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(service, listener));
    format!("http://{addr}")
}

async fn wait_idle(service: &Arc<RouterService>) {
    let service = Arc::clone(service);
    let ok = tokio::task::spawn_blocking(move || service.wait_idle(Duration::from_secs(20)))
        .await
        .unwrap();
    assert!(ok, "service did not drain in time");
}

#[tokio::test(flavor = "multi_thread")]
async fn endpoints_cover_the_ticket_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let (service, _) =
        RouterService::start_with_model(toy_model(), "fp-http".into(), config_in(dir.path()))
            .unwrap();
    let service = Arc::new(service);
    let base = spawn_server(Arc::clone(&service)).await;
    let client = reqwest::Client::new();

    let health = client.get(format!("{base}/healthz")).send().await.unwrap();
    assert_eq!(health.status(), 200);
    assert_eq!(health.text().await.unwrap(), "ok");

    // Accepting a ticket returns 202 with its id.
    let resp = client
        .post(format!("{base}/tickets"))
        .json(&json!({ "ticket_id": "http-1", "subject": "printer broken", "body": "error jam" }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 202);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["ticket_id"], "http-1");
    assert_eq!(body["status"], "accepted");

    // The same id again is a conflict.
    let resp = client
        .post(format!("{base}/tickets"))
        .json(&json!({ "ticket_id": "http-1", "subject": "other", "body": "" }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 409);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["status"], "duplicate");

    // Neither subject nor body is a bad request.
    let resp = client
        .post(format!("{base}/tickets"))
        .json(&json!({ "subject": "", "body": "  " }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    // Without an id the server generates a UUID-shaped one.
    let resp = client
        .post(format!("{base}/tickets"))
        .json(&json!({ "subject": "password reset please", "body": "" }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 202);
    let body: Value = resp.json().await.unwrap();
    let generated = body["ticket_id"].as_str().unwrap().to_string();
    assert_eq!(generated.len(), 36);
    assert_eq!(generated.chars().filter(|c| *c == '-').count(), 4);

    wait_idle(&service).await;

    // Ticket lookup exposes the full record.
    let resp = client
        .get(format!("{base}/tickets/http-1"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let record: Value = resp.json().await.unwrap();
    assert_eq!(record["state"], "routed");
    assert_eq!(record["label"], "Problem");
    assert_eq!(record["model_fingerprint"], "fp-http");
    assert!(record["confidence"].as_array().unwrap().len() == 3);

    let resp = client
        .get(format!("{base}/tickets/no-such-id"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 404);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "not-found");

    // Metrics reflect the lifecycle counts.
    let resp = client.get(format!("{base}/metrics")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let metrics: Value = resp.json().await.unwrap();
    assert_eq!(metrics["model_fingerprint"], "fp-http");
    assert_eq!(metrics["accepted_total"], 2);
    assert_eq!(metrics["routed"], 2);
    assert_eq!(metrics["queue_depth"], 0);
    assert!(metrics["uptime_seconds"].as_f64().unwrap() >= 0.0);
    let per_worker: u64 = metrics["per_worker_processed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(per_worker, 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn full_queue_maps_to_429() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config_in(dir.path());
    config.queue_capacity = 2;
    config.worker_count = 1;
    config.worker_startup_delay_ms = 600;
    let (service, _) = RouterService::start_with_model(toy_model(), "fp".into(), config).unwrap();
    let service = Arc::new(service);
    let base = spawn_server(Arc::clone(&service)).await;
    let client = reqwest::Client::new();

    for i in 0..2 {
        let resp = client
            .post(format!("{base}/tickets"))
            .json(&json!({ "ticket_id": format!("q{i}"), "subject": "server outage", "body": "" }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 202);
    }
    let resp = client
        .post(format!("{base}/tickets"))
        .json(&json!({ "ticket_id": "q2", "subject": "server outage", "body": "" }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 429);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["status"], "rejected-full");

    wait_idle(&service).await;
    let resp = client.get(format!("{base}/metrics")).send().await.unwrap();
    let metrics: Value = resp.json().await.unwrap();
    assert_eq!(metrics["accepted_total"], 2);
    assert_eq!(metrics["routed"], 2);
}
