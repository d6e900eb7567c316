use std::sync::Arc;
use std::time::Duration;

use coilboard_core::grid::CoilGrid;
use coilboard_service::demo;
use coilboard_service::http::serve;
use coilboard_service::{Controller, ControllerOptions, ExecutorConfig, ServiceHandle};
use serde_json::{json, Value};
use tokio::sync::oneshot;

struct Server {
    base: String,
    client: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
    _dir: tempfile::TempDir,
}

impl Server {
    async fn start(parked: usize, config: ExecutorConfig) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let grid = Arc::new(CoilGrid::prototype());
        let content = demo::demo_content(&grid).unwrap();
        let mut ctl = Controller::new(grid, ControllerOptions::default())
            .with_store(dir.path().join("content.json"))
            .unwrap()
            .with_content(content);
        demo::place_parked(&mut ctl, parked).unwrap();
        let handle = ServiceHandle::spawn(ctl, config);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(serve(listener, handle, async move {
            let _ = rx.await;
        }));
        Server { base, client: reqwest::Client::new(), stop: Some(stop), task, _dir: dir }
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn send(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> (u16, Value) {
        let mut req = self.client.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let r = req.send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.send(reqwest::Method::POST, path, Some(body)).await
    }

    async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.await.unwrap().unwrap();
    }
}

fn arrived_count(history: &Value) -> usize {
    history.as_array().unwrap().iter().filter(|r| r["event"] == "ARRIVED").count()
}

#[tokio::test]
async fn empty_state_and_grid() {
    let s = Server::start(0, ExecutorConfig::default()).await;
    let (code, state) = s.get("/state").await;
    assert_eq!(code, 200);
    assert_eq!(state["markers"], json!([]));
    let (code, grid) = s.get("/grid").await;
    assert_eq!(code, 200);
    assert!(grid.is_object());
    s.stop().await;
}

#[tokio::test]
async fn temperature_render_then_park() {
    let s = Server::start(12, ExecutorConfig::default()).await;
    let (code, plan) = s.post("/configurations/temperature-plot/render?wait=true", json!(null)).await;
    assert_eq!(code, 200, "{plan}");
    assert_eq!(plan["status"], "COMPLETE");
    assert_eq!(plan["completed"], true);
    let (_, history) = s.get("/history").await;
    assert_eq!(arrived_count(&history), 12);
    let (code, _) = s.post("/park?wait=true", json!(null)).await;
    assert_eq!(code, 200);
    let (_, state) = s.get("/state").await;
    assert!(state["markers"].as_array().unwrap().iter().all(|m| m["state"] == "PARKED"));
    assert_eq!(state["events"]["contention"], 0);
    s.stop().await;
}

#[tokio::test]
async fn trigger_suggestions_and_errors() {
    let s = Server::start(3, ExecutorConfig::default()).await;
    let (code, body) = s.post("/trigger", json!({"text": "show me the nearest cofee shops"})).await;
    assert_eq!(code, 404);
    assert_eq!(body["error"]["code"], "not_found");
    assert!(body.to_string().contains(demo::COFFEE_TRIGGER));
    let (code, _) = s.post("/trigger", json!({"text": ""})).await;
    assert_eq!(code, 400);
    let (code, _) = s.post("/trigger", json!({"nope": 1})).await;
    assert_eq!(code, 400);
    let (code, body) = s.post("/configurations/temperature-plot/render", json!(null)).await;
    assert_eq!(code, 409, "{body}");
    assert_eq!(body["error"]["code"], "marker_deficit");
    let (code, _) = s.post("/coils/99999", json!({"on": true})).await;
    assert_eq!(code, 404);
    s.stop().await;
}

#[tokio::test]
async fn coils_and_markers() {
    let s = Server::start(0, ExecutorConfig::default()).await;
    let (code, m) = s.post("/markers", json!({"coil_id": 68})).await;
    assert_eq!(code, 201);
    assert_eq!(m["state"], "HELD");
    let (code, _) = s.post("/markers", json!({"coil_id": 68 + 256})).await;
    assert_eq!(code, 409);
    let (_, ack) = s.post("/coils/0", json!({"on": true})).await;
    assert_eq!(ack["changed"], true);
    let (_, ack) = s.post("/coils/0", json!({"on": true})).await;
    assert_eq!(ack["changed"], false);
    let (_, plan) = s.post("/markers/0/move?wait=true", json!({"target": {"x_mm": 100.0, "y_mm": 100.0}})).await;
    assert_eq!(plan["completed"], true, "{plan}");
    let (_, m) = s.post("/markers/0/perturb", json!({"dx_mm": 1.5, "dy_mm": -1.0})).await;
    assert_eq!(m["state"], "HELD");
    let (_, hist) = s.get("/history?marker_id=0").await;
    assert!(arrived_count(&hist) >= 1);
    let (code, _) = s.post("/coils/68", json!({"on": "yes"})).await;
    assert_eq!(code, 400);
    s.stop().await;
}

#[tokio::test]
async fn content_crud_and_graphic_import() {
    let s = Server::start(0, ExecutorConfig::default()).await;
    let (code, list) = s.get("/configurations").await;
    assert_eq!(code, 200);
    assert!(list.as_array().unwrap().len() >= 10);
    let cfg = json!({"name": "one", "marker_targets": [{"coil_id": 5}]});
    let (code, _) = s.post("/configurations", cfg.clone()).await;
    assert_eq!(code, 201);
    let (code, got) = s.get("/configurations/one").await;
    assert_eq!((code, got), (200, json!({"name": "one", "static_elements": [], "marker_targets": [{"coil_id": 5}]})));
    let (code, _) = s.send(reqwest::Method::PUT, "/configurations/two", Some(cfg)).await;
    assert_eq!(code, 400);
    let bad = json!({"name": "bad", "marker_targets": [{"coil_id": 5}, {"coil_id": 5}]});
    let (code, _) = s.post("/configurations", bad).await;
    assert_eq!(code, 400);
    let (code, _) = s.send(reqwest::Method::DELETE, "/configurations/coffee-shops", None).await;
    assert_eq!(code, 409);
    let (code, _) = s.send(reqwest::Method::DELETE, "/configurations/one", None).await;
    assert_eq!(code, 200);

    let svg = r#"<svg><line x1="1" y1="2" x2="30" y2="40"/></svg>"#;
    let (code, g) = s.send(reqwest::Method::PUT, "/graphics/tick", Some(json!({"format": "svg", "data": svg}))).await;
    assert_eq!(code, 200);
    assert_eq!(g["elements"].as_array().unwrap().len(), 1);
    let curvy = r#"<svg><path id="arc" d="M 0 0 C 1 1 2 2 3 3"/></svg>"#;
    let (code, body) = s.send(reqwest::Method::PUT, "/graphics/curvy", Some(json!({"format": "svg", "data": curvy}))).await;
    assert_eq!(code, 422);
    assert!(body.to_string().contains("path#arc"));

    let (_, content) = s.get("/content").await;
    let (code, back) = s.send(reqwest::Method::PUT, "/content", Some(content.clone())).await;
    assert_eq!(code, 200);
    assert_eq!(back, content);
    s.stop().await;
}

#[tokio::test]
async fn hexagon_sequence_over_http() {
    let s = Server::start(6, ExecutorConfig::default()).await;
    for k in 0..6 {
        let (code, plan) = s.post("/sequences/hexagon/step?wait=true", json!({"direction": "NEXT"})).await;
        assert_eq!(code, 200, "{plan}");
        assert_eq!(plan["sequence_step"], k);
    }
    let (_, seq) = s.get("/sequences/hexagon").await;
    assert_eq!(seq["current_step"], 5);
    let (_, plan) = s.post("/sequences/hexagon/step?wait=true", json!({"direction": "RESET"})).await;
    assert_eq!(plan["sequence_step"], 0);
    s.stop().await;
}

#[tokio::test]
async fn motion_is_queued_behind_running_plan() {
    let config = ExecutorConfig { tick_pause: Duration::from_millis(5), idle_interval: None };
    let s = Server::start(12, config).await;
    let (code, first) = s.post("/configurations/temperature-plot/render", json!(null)).await;
    assert_eq!(code, 200);
    assert_eq!(first["completed"], false);
    let (code, second) = s.post("/park?wait=true", json!(null)).await;
    assert_eq!(code, 200, "{second}");
    let (_, history) = s.get("/history").await;
    assert_eq!(arrived_count(&history), 12);
    let (_, state) = s.get("/state").await;
    assert_eq!(state["queued"], 0);
    assert!(state["executing"].is_null());
    s.stop().await;
}

#[tokio::test]
async fn event_stream_is_ndjson_and_rate_limited() {
    use futures::StreamExt;
    let config = ExecutorConfig { tick_pause: Duration::from_millis(20), idle_interval: None };
    let s = Server::start(12, config).await;
    let resp = s.client.get(format!("{}/events", s.base)).send().await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut stream = resp.bytes_stream();
    let (code, _) = s.post("/configurations/temperature-plot/render", json!(null)).await;
    assert_eq!(code, 200);
    let mut buf = Vec::new();
    let mut arrivals = Vec::new();
    let mut last_seq = 0;
    loop {
        let chunk = tokio::time::timeout(Duration::from_secs(10), stream.next()).await.unwrap().unwrap().unwrap();
        buf.extend_from_slice(&chunk);
        let mut finished = false;
        while let Some(pos) = buf.iter().position(|b| *b == b'\n') {
            let line: Vec<u8> = buf.drain(..=pos).collect();
            let v: Value = serde_json::from_slice(&line).unwrap();
            let seq = v["seq"].as_u64().unwrap();
            assert!(seq >= last_seq);
            last_seq = seq;
            arrivals.push(std::time::Instant::now());
            finished = v["executing"].is_null() && v["history_len"].as_u64().unwrap() >= 24;
        }
        if finished {
            break;
        }
    }
    assert!(arrivals.len() >= 3, "{} lines", arrivals.len());
    // after the first line, at most one line per 50 ms; allow for delivery jitter
    let span = arrivals.last().unwrap().duration_since(arrivals[1]);
    assert!(span >= Duration::from_millis(40 * (arrivals.len() as u64 - 2)), "{} lines in {span:?}", arrivals.len());
    s.stop().await;
}

#[tokio::test]
async fn shutdown_flushes_content() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("content.json");
    let grid = Arc::new(CoilGrid::prototype());
    let ctl = Controller::new(grid, ControllerOptions::default()).with_store(&path).unwrap();
    let handle = ServiceHandle::spawn(ctl, ExecutorConfig::default());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(serve(listener, handle, async move {
        let _ = rx.await;
    }));
    let r = reqwest::Client::new()
        .post(format!("{base}/configurations"))
        .json(&json!({"name": "kept", "marker_targets": [{"coil_id": 3}]}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 201);
    stop.send(()).unwrap();
    task.await.unwrap().unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"kept\""));
}
