//! `coilboard` subcommands. Each returns its output as a string so the
//! binary only has to print it and map errors to exit codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coilboard_core::driver::{estimate_bom, BomEstimate, PriceTable, DEFAULT_DWELL_MS};
use coilboard_core::grid::{CoilGrid, CoilId};
use coilboard_core::planner::{plan_multi, MotionPlan, PlannerOptions};
use coilboard_core::sim::{MarkerId, TRACE_HEADER};
use coilboard_service::scenario::{self, Scenario, ScenarioReport};
use coilboard_service::{demo, Controller, ControllerOptions, ExecutorConfig, ServiceError, ServiceHandle};
use thiserror::Error;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_ENVIRONMENT: u8 = 3;
pub const EXIT_INVARIANT: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Environment(String),
    /// The run finished but broke an invariant; the report is still printed.
    #[error("{message}")]
    Invariant { message: String, output: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Environment(_) => EXIT_ENVIRONMENT,
            CliError::Invariant { .. } => EXIT_INVARIANT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Human,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "coilboard", version, about = "Electromagnetic coil display: serve, plan, simulate, estimate cost")]
pub struct Cli {
    /// Grid file (JSON); defaults to the 16x16 prototype board.
    #[arg(long, global = true)]
    pub grid: Option<PathBuf>,
    /// Scan dwell per row frame in milliseconds.
    #[arg(long, global = true, default_value_t = DEFAULT_DWELL_MS)]
    pub dwell_ms: u64,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Human)]
    pub output: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service against the simulator.
    Serve(ServeArgs),
    /// Shortest path between two coils.
    Plan(PlanArgs),
    /// Run a scenario headless and report the trace.
    Simulate(SimulateArgs),
    /// Parts cost estimate for a board size.
    Bom(BomArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Content store file.
    #[arg(long, env = "COILBOARD_STORE")]
    pub store: Option<PathBuf>,
    /// Load the bundled demo content and place this many markers on the
    /// park slots.
    #[arg(long)]
    pub demo_markers: Option<usize>,
    /// Wall-clock pause per planner tick, for watching motion live.
    #[arg(long, default_value_t = 100)]
    pub tick_pause_ms: u64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub start: u32,
    #[arg(long)]
    pub goal: u32,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file, or `builtin:<name>` for a bundled one.
    #[arg(long)]
    pub scenario: String,
    /// Also write the marker trace as CSV to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BomArgs {
    #[arg(long, default_value_t = 16)]
    pub rows: u32,
    #[arg(long, default_value_t = 16)]
    pub cols: u32,
    /// Price table (JSON object of part name to USD) replacing the defaults.
    #[arg(long)]
    pub prices: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load_grid(path: Option<&Path>) -> Result<Arc<CoilGrid>, CliError> {
    match path {
        None => Ok(Arc::new(CoilGrid::prototype())),
        Some(p) => CoilGrid::from_json(&read(p)?)
            .map(Arc::new)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn service_input(e: ServiceError) -> CliError {
    match e {
        ServiceError::Storage(m) => CliError::Environment(m),
        other => CliError::Input(other.to_string()),
    }
}

// plan

pub fn cmd_plan(grid: &CoilGrid, args: &PlanArgs, output: OutputFormat) -> Result<String, CliError> {
    let (start, goal) = (CoilId(args.start), CoilId(args.goal));
    for id in [start, goal] {
        if !grid.contains_id(id) {
            return Err(CliError::Input(format!("no coil with id {id} (max {})", grid.max_id())));
        }
    }
    let m = MarkerId(0);
    let plan = plan_multi(grid, &BTreeMap::from([(m, start)]), &BTreeMap::from([(m, goal)]), PlannerOptions::default())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let steps: Vec<(CoilId, u32)> = plan.per_marker.get(&m).cloned().unwrap_or_else(|| vec![(start, 0)]);
    let plan = MotionPlan { per_marker: BTreeMap::from([(m, steps.clone())]), ..plan };
    Ok(match output {
        OutputFormat::Json => plan.to_json() + "\n",
        OutputFormat::Csv => {
            let mut out = String::from("tick,coil_id,module,layer,row,col,x_mm,y_mm\n");
            for (c, t) in &steps {
                let a = grid.addr_of(*c).expect("planned coil");
                let p = grid.center_of(*c).expect("planned coil");
                let _ = writeln!(out, "{t},{c},{},{},{},{},{:.4},{:.4}", a.module, a.layer, a.row, a.col, p.x, p.y);
            }
            out
        }
        OutputFormat::Human => {
            let hops = steps.len() - 1;
            let mut out = format!("{hops} hop{} from coil {start} to coil {goal}\n", if hops == 1 { "" } else { "s" });
            for (c, t) in &steps {
                let a = grid.addr_of(*c).expect("planned coil");
                let _ = writeln!(out, "  t={t:<3} coil {c:<5} module {} {:<6} row {:>2} col {:>2}", a.module, a.layer, a.row, a.col);
            }
            out
        }
    })
}

// simulate

pub fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return scenario::builtin(name).ok_or_else(|| {
            CliError::Input(format!("unknown builtin scenario '{name}'; available: {}", scenario::BUILTINS.join(", ")))
        });
    }
    Scenario::from_json(&read(Path::new(spec))?).map_err(|e| CliError::Input(format!("{spec}: {e}")))
}

pub struct Simulation {
    pub report: ScenarioReport,
    pub trace_csv: String,
}

pub fn simulate(grid: Arc<CoilGrid>, scenario: &Scenario, dwell_ms: u64) -> Result<Simulation, CliError> {
    let options = ControllerOptions { dwell_ms, record_trace: true, ..ControllerOptions::default() };
    let mut ctl = Controller::new(grid, options);
    let report = scenario.run(&mut ctl).map_err(|e| match e.source.code() {
        "partial_failure" | "unreachable" => CliError::Invariant { message: e.to_string(), output: String::new() },
        _ => CliError::Input(e.to_string()),
    })?;
    let mut trace_csv = String::from(TRACE_HEADER);
    trace_csv.push('\n');
    for row in ctl.trace() {
        trace_csv.push_str(&row.to_csv());
        trace_csv.push('\n');
    }
    Ok(Simulation { report, trace_csv })
}

fn human_report(r: &ScenarioReport) -> String {
    let mut out = String::new();
    let name = if r.name.is_empty() { "scenario" } else { &r.name };
    let _ = writeln!(out, "{name}: {} steps, {} ms simulated", r.steps.len(), r.clock_ms);
    let _ = writeln!(
        out,
        "events: contention {}, ambiguous {}, separation {}, row exclusivity {}",
        r.events.contention, r.events.ambiguous, r.events.separation, r.events.row_exclusivity
    );
    let _ = writeln!(out, "markers arrived: {}/{}, all parked: {}", r.arrived.len(), r.markers.len(), r.all_parked);
    for m in &r.markers {
        let coil = m.coil_id.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "  marker {:<3} {:<6} coil {coil:<5} ({:.3}, {:.3}) mm", m.id, m.state, m.x_mm, m.y_mm);
    }
    out
}

pub fn cmd_simulate(grid: Arc<CoilGrid>, args: &SimulateArgs, dwell_ms: u64, output: OutputFormat) -> Result<String, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let sim = simulate(grid, &scenario, dwell_ms)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, &sim.trace_csv).map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))?;
    }
    let text = match output {
        OutputFormat::Json => json(&sim.report),
        OutputFormat::Csv => sim.trace_csv,
        OutputFormat::Human => human_report(&sim.report),
    };
    let violations = sim.report.violations();
    if violations > 0 {
        let e = &sim.report.events;
        return Err(CliError::Invariant {
            message: format!(
                "{violations} invariant violations (contention {}, ambiguous {}, separation {}, row exclusivity {})",
                e.contention, e.ambiguous, e.separation, e.row_exclusivity
            ),
            output: text,
        });
    }
    Ok(text)
}

// bom

pub fn cmd_bom(args: &BomArgs, output: OutputFormat) -> Result<String, CliError> {
    let prices = match &args.prices {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => PriceTable::default(),
    };
    let bom = estimate_bom(args.rows, args.cols, &prices).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(match output {
        OutputFormat::Json => json(&bom),
        OutputFormat::Csv => {
            let mut out = String::from("part,count,unit_cost_usd,subtotal_usd\n");
            for (part, i) in &bom.line_items {
                let _ = writeln!(out, "{part},{},{},{:.2}", i.count, i.unit_cost_usd, i.subtotal_usd);
            }
            let _ = writeln!(out, "total,,,{:.2}", bom.total_usd);
            out
        }
        OutputFormat::Human => human_bom(&bom),
    })
}

fn human_bom(bom: &BomEstimate) -> String {
    let mut out = format!("{}x{} coils ({} modules of 16x16)\n", bom.rows, bom.cols, bom.modules);
    for (part, i) in &bom.line_items {
        let _ = writeln!(out, "  {:<16} {:>7} x {:>8.4} = {:>9.2} USD", part.to_string(), i.count, i.unit_cost_usd, i.subtotal_usd);
    }
    let _ = writeln!(out, "  {:<16} {:>32.2} USD", "total", bom.total_usd);
    if bom.extrapolated {
        out.push_str("note: not a whole number of modules; counts are scaled linearly from one module\n");
    }
    if bom.rows == 160 && bom.cols == 160 {
        out.push_str("note: the line items sum to 510 USD, usually rounded to about 500 USD\n");
    }
    out
}

// serve

pub fn cmd_serve(grid: Arc<CoilGrid>, args: &ServeArgs, dwell_ms: u64) -> Result<String, CliError> {
    let options = ControllerOptions { dwell_ms, ..ControllerOptions::default() };
    let mut ctl = Controller::new(grid.clone(), options);
    if let Some(path) = &args.store {
        ctl = ctl.with_store(path).map_err(service_input)?;
    }
    if let Some(n) = args.demo_markers {
        if ctl.content().configurations.is_empty() {
            let content = demo::demo_content(&grid).map_err(service_input)?;
            ctl.load_content(content).map_err(service_input)?;
        }
        demo::place_parked(&mut ctl, n).map_err(service_input)?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Environment(e.to_string()))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Environment(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Environment(e.to_string()))?;
        let config = ExecutorConfig { tick_pause: Duration::from_millis(args.tick_pause_ms), idle_interval: Some(Duration::from_millis(250)) };
        let handle = ServiceHandle::spawn(ctl, config);
        eprintln!("listening on http://{local}");
        coilboard_service::http::serve(listener, handle, shutdown_signal())
            .await
            .map_err(|e| CliError::Environment(e.to_string()))
    })?;
    Ok(String::new())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    let grid = load_grid(cli.grid.as_deref())?;
    match &cli.command {
        Command::Serve(a) => cmd_serve(grid, a, cli.dwell_ms),
        Command::Plan(a) => cmd_plan(&grid, a, cli.output),
        Command::Simulate(a) => cmd_simulate(grid, a, cli.dwell_ms, cli.output),
        Command::Bom(a) => cmd_bom(a, cli.output),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<CoilGrid> {
        Arc::new(CoilGrid::prototype())
    }

    #[test]
    fn plan_start_equals_goal() {
        let out = cmd_plan(&grid(), &PlanArgs { start: 17, goal: 17 }, OutputFormat::Json).unwrap();
        let plan = MotionPlan::from_json(&out).unwrap();
        assert_eq!(plan.per_marker[&MarkerId(0)], vec![(CoilId(17), 0)]);
    }

    #[test]
    fn plan_neighbor_pair_has_two_entries() {
        let g = grid();
        let n = g.neighbor_ids(CoilId(17)).unwrap()[0];
        let out = cmd_plan(&g, &PlanArgs { start: 17, goal: n.0 }, OutputFormat::Csv).unwrap();
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn plan_rejects_unknown_ids() {
        let e = cmd_plan(&grid(), &PlanArgs { start: 0, goal: 100_000 }, OutputFormat::Human).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_INPUT);
    }

    #[test]
    fn bom_formats() {
        let args = BomArgs { rows: 160, cols: 160, prices: None };
        let text = cmd_bom(&args, OutputFormat::Human).unwrap();
        assert!(text.contains("510.00"), "{text}");
        assert!(text.contains("about 500"));
        let csv = cmd_bom(&args, OutputFormat::Csv).unwrap();
        assert_eq!(csv.lines().last().unwrap(), "total,,,510.00");
        let j: serde_json::Value = serde_json::from_str(&cmd_bom(&args, OutputFormat::Json).unwrap()).unwrap();
        assert_eq!(j["total_usd"], 510.0);
        let small = cmd_bom(&BomArgs { rows: 8, cols: 8, prices: None }, OutputFormat::Human).unwrap();
        assert!(small.contains("scaled linearly"));
    }

    #[test]
    fn empty_scenario_has_header_only_trace() {
        let sim = simulate(grid(), &Scenario::default(), DEFAULT_DWELL_MS).unwrap();
        assert_eq!(sim.trace_csv, format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn contention_scenario_is_an_invariant_failure() {
        let args = SimulateArgs { scenario: "builtin:contention".into(), trace: None };
        let e = cmd_simulate(grid(), &args, DEFAULT_DWELL_MS, OutputFormat::Json).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_INVARIANT);
        let CliError::Invariant { output, .. } = e else { unreachable!() };
        let report: serde_json::Value = serde_json::from_str(&output).unwrap();
        assert!(report["events"]["contention"].as_u64().unwrap() >= 1);
    }

    #[test]
    fn unknown_builtin_lists_choices() {
        let Err(CliError::Input(m)) = load_scenario("builtin:nope") else { panic!() };
        assert!(m.contains("hexagon"));
    }
}
