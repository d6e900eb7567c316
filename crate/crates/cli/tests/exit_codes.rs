use std::net::TcpListener;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

fn coilboard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coilboard")).args(args).env_remove("COILBOARD_STORE").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn bom_succeeds_with_json() {
    let out = coilboard(&["bom", "--rows", "160", "--cols", "160", "--output", "json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["total_usd"], 510.0);
}

#[test]
fn bad_bom_size_is_an_input_error() {
    assert_eq!(code(&coilboard(&["bom", "--rows", "0"])), 2);
}

#[test]
fn plan_outputs() {
    let out = coilboard(&["plan", "--start", "0", "--goal", "0", "--output", "json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["per_marker"]["0"], json!([[0, 0]]));
    assert_eq!(code(&coilboard(&["plan", "--start", "0", "--goal", "999999"])), 2);
    assert_eq!(code(&coilboard(&["plan", "--start", "zero", "--goal", "1"])), 2);
}

#[test]
fn corrupt_grid_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    std::fs::write(&path, "{\"rows\": ").unwrap();
    let out = coilboard(&["serve", "--grid", path.to_str().unwrap(), "--port", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.json"));
    assert_eq!(code(&coilboard(&["plan", "--grid", "/nonexistent/grid.json", "--start", "0", "--goal", "1"])), 2);
}

#[test]
fn grid_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    std::fs::write(&path, coilboard_core::grid::CoilGrid::build(8, 8, 75.0, Default::default()).unwrap().to_json()).unwrap();
    let out = coilboard(&["plan", "--grid", path.to_str().unwrap(), "--start", "0", "--goal", "127", "--output", "csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("tick,coil_id"));
}

#[test]
fn simulate_exit_codes() {
    let out = coilboard(&["simulate", "--scenario", "builtin:hexagon", "--output", "json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["all_arrived"], true);
    assert_eq!(v["all_parked"], true);

    let out = coilboard(&["simulate", "--scenario", "builtin:contention", "--output", "json"]);
    assert_eq!(code(&out), 4);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["events"]["contention"].as_u64().unwrap() >= 1);

    assert_eq!(code(&coilboard(&["simulate", "--scenario", "builtin:unknown"])), 2);
    assert_eq!(code(&coilboard(&["simulate", "--scenario", "/nonexistent.json"])), 2);
}

#[test]
fn empty_scenario_gives_empty_trace() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("empty.json");
    std::fs::write(&scenario, "{}").unwrap();
    let trace = dir.path().join("trace.csv");
    let out = coilboard(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--output",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "clock_ms,marker_id,x_mm,y_mm,state\n");
    assert_eq!(std::fs::read_to_string(trace).unwrap(), "clock_ms,marker_id,x_mm,y_mm,state\n");
}

#[test]
fn port_collision_is_an_environment_error() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = coilboard(&["serve", "--port", &port]);
    assert_eq!(code(&out), 3);
}

struct Served {
    child: Child,
    base: String,
}

impl Served {
    fn start(store: &std::path::Path) -> Self {
        let port = free_port();
        let child = Command::new(env!("CARGO_BIN_EXE_coilboard"))
            .args(["serve", "--port", &port.to_string(), "--tick-pause-ms", "0"])
            .env("COILBOARD_STORE", store)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        Served { child, base: format!("http://127.0.0.1:{port}") }
    }

    fn interrupt(mut self) -> i32 {
        let status = Command::new("kill").args(["-INT", &self.child.id().to_string()]).status().unwrap();
        assert!(status.success());
        let deadline = Instant::now() + Duration::from_secs(20);
        loop {
            if let Some(s) = self.child.try_wait().unwrap() {
                return s.code().unwrap_or(-1);
            }
            assert!(Instant::now() < deadline, "service did not stop");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

async fn wait_ready(client: &reqwest::Client, base: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        if let Ok(r) = client.get(format!("{base}/state")).send().await {
            return r.json().await.unwrap();
        }
        assert!(Instant::now() < deadline, "service did not come up");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

#[tokio::test]
async fn serve_boots_and_flushes_store_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("content.json");
    let served = Served::start(&store);
    let client = reqwest::Client::new();
    let state = wait_ready(&client, &served.base).await;
    assert_eq!(state["markers"], json!([]));
    let r = client
        .post(format!("{}/configurations", served.base))
        .json(&json!({"name": "saved", "marker_targets": [{"coil_id": 10}]}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 201);
    assert_eq!(served.interrupt(), 0);
    let text = std::fs::read_to_string(&store).unwrap();
    assert!(text.contains("\"saved\""));
}
