//! `microflow` command-line driver: generate synthetic inputs, run a
//! simulation, or benchmark baselines on the optimization scenarios.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use microflow::bench::fixtures::{calibrate_congested, scenario_fixture, toy_road_plan, road_plan_fixture, Fixture};
use microflow::bench::plan::{solve_plan, PLAN_POLICY_NAMES};
use microflow::bench::{policy_by_name, run_scenario, ResultRow, ScenarioKind, ScenarioSpec, POLICY_NAMES};
use microflow::engine::{final_line, report_line, Engine, EngineConfig};
use microflow::netmodel::{
    fmt_float, generate_demand, generate_grid_with, parse_demand, parse_network, validate_demand, validate_network,
    write_demand, write_network, GridConfig, PeakWindow, RoadNetwork, TripPlan,
};

#[derive(Parser)]
#[command(name = "microflow", version, about = "Microscopic traffic simulation")]
struct Cli {
    /// TOML file with defaults for any flag; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a grid network and a peak-hour demand.
    Generate(GenerateArgs),
    /// Simulate a network and demand, printing the run report.
    Run(RunArgs),
    /// Run baselines on scenarios and print `scenario policy att tp` rows.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Grid size as ROWSxCOLS.
    #[arg(long, default_value = "4x4")]
    grid: String,
    #[arg(long, default_value_t = 300.0)]
    road_len: f64,
    #[arg(long, default_value_t = 2)]
    lanes: usize,
    #[arg(long, default_value_t = 0)]
    trips: usize,
    /// morning or evening.
    #[arg(long, default_value = "morning")]
    window: String,
    #[arg(long)]
    speed_classes: bool,
    #[arg(long)]
    dynamic_lane: bool,
    #[arg(long)]
    tidal: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output network file.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Output demand file.
    #[arg(long)]
    demand: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    demand: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "MICROFLOW_WORKERS")]
    workers: Option<usize>,
    /// START:END in seconds since midnight, or a duration from the first departure.
    #[arg(long)]
    horizon: Option<String>,
    /// Steps between report lines.
    #[arg(long)]
    sample_every: Option<u64>,
    /// Write one `t vehicle lane s v` row per driving vehicle per step.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated scenario names, or `all`.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated policy names.
    #[arg(long)]
    policies: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "MICROFLOW_WORKERS")]
    workers: Option<usize>,
    /// Trip count; calibrated to the congested level when absent.
    #[arg(long)]
    trips: Option<usize>,
    /// Custom network for the periodic scenarios.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Custom demand for the periodic scenarios.
    #[arg(long)]
    demand: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<String>,
    /// Objective evaluations of the annealing road planner.
    #[arg(long, default_value_t = 50)]
    evaluations: usize,
    /// Use the five-candidate road planning fixture.
    #[arg(long)]
    toy: bool,
    /// JSON summary output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Flag defaults read from `--config`.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    map: Option<PathBuf>,
    demand: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    horizon: Option<String>,
    sample_every: Option<u64>,
    trace: Option<PathBuf>,
    scenario: Option<String>,
    policies: Option<String>,
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref()).and_then(|file| match cli.cmd {
        Cmd::Generate(a) => generate(a, file),
        Cmd::Run(a) => run(a, file),
        Cmd::Bench(a) => bench(a, file),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn workers(n: Option<usize>) -> Result<usize> {
    match n.unwrap_or(1) {
        0 => bail!("--workers must be at least 1"),
        n => Ok(n),
    }
}

fn distinct(paths: &[Option<&Path>]) -> Result<()> {
    let given: Vec<&Path> = paths.iter().flatten().copied().collect();
    for (i, a) in given.iter().enumerate() {
        if given[i + 1..].contains(a) {
            bail!("{} is given for two different files", a.display());
        }
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("--grid expects ROWSxCOLS, got {s:?}"))?;
    Ok((r.trim().parse().context("grid rows")?, c.trim().parse().context("grid columns")?))
}

fn generate(a: GenerateArgs, file: FileConfig) -> Result<()> {
    let (rows, cols) = parse_grid(&a.grid)?;
    let window = PeakWindow::parse(&a.window).ok_or_else(|| anyhow!("unknown window {:?}; valid options: morning, evening", a.window))?;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let map = a.map.or(file.map).unwrap_or_else(|| "grid.mfnet".into());
    let demand = a.demand.or(file.demand).unwrap_or_else(|| "grid.mftrip".into());
    distinct(&[Some(&map), Some(&demand)])?;
    let mut cfg = GridConfig::new(rows, cols, a.road_len, a.lanes, seed);
    cfg.speed_classes = a.speed_classes;
    cfg.dynamic_lane = a.dynamic_lane;
    cfg.tidal = a.tidal;
    let (net, _) = generate_grid_with(&cfg)?;
    let trips = generate_demand(&net, a.trips, window, seed)?;
    fs::write(&map, write_network(&net)).with_context(|| format!("writing {}", map.display()))?;
    fs::write(&demand, write_demand(&trips)).with_context(|| format!("writing {}", demand.display()))?;
    println!(
        "junctions={} roads={} lanes={} aois={} trips={}",
        net.junctions.len(),
        net.roads.len(),
        net.lanes.len(),
        net.aois.len(),
        trips.len()
    );
    Ok(())
}

fn read_inputs(map: &Path, demand: Option<&Path>) -> Result<(RoadNetwork, Vec<TripPlan>)> {
    let text = fs::read_to_string(map).with_context(|| format!("reading {}", map.display()))?;
    let net = parse_network(&text).with_context(|| format!("{}", map.display()))?;
    if let Some(v) = validate_network(&net).first() {
        bail!("{}: {v}", map.display());
    }
    let trips = match demand {
        Some(d) => {
            let text = fs::read_to_string(d).with_context(|| format!("reading {}", d.display()))?;
            parse_demand(&text).with_context(|| format!("{}", d.display()))?
        }
        None => Vec::new(),
    };
    if let Some(v) = validate_demand(&net, &trips).first() {
        bail!("{}: {v}", demand.map_or(map, |d| d).display());
    }
    Ok((net, trips))
}

/// `START:END`, or a duration counted from the first departure (from 0
/// when there are no trips). Default: one hour.
fn parse_horizon(s: Option<&str>, trips: &[TripPlan]) -> Result<(f64, f64)> {
    let first = trips.iter().map(|t| t.departure).fold(f64::INFINITY, f64::min);
    let first = if first.is_finite() { first.floor() } else { 0.0 };
    let num = |x: &str| -> Result<f64> { x.trim().parse::<f64>().with_context(|| format!("bad horizon value {x:?}")) };
    let (start, end) = match s {
        None => (first, first + 3600.0),
        Some(s) => match s.split_once(':') {
            Some((a, b)) => (num(a)?, num(b)?),
            None => (first, first + num(s)?),
        },
    };
    if !(start.is_finite() && end.is_finite() && end >= start) {
        bail!("horizon end must not precede its start");
    }
    Ok((start, end))
}

fn run(a: RunArgs, file: FileConfig) -> Result<()> {
    let map = a.map.or(file.map).ok_or_else(|| anyhow!("--map is required"))?;
    let demand = a.demand.or(file.demand);
    let trace = a.trace.or(file.trace);
    let out = a.out.or(file.out);
    distinct(&[Some(&map), demand.as_deref(), trace.as_deref(), out.as_deref()])?;
    let every = a.sample_every.or(file.sample_every).unwrap_or(60);
    if every == 0 {
        bail!("--sample-every must be at least 1");
    }
    let (net, trips) = read_inputs(&map, demand.as_deref())?;
    let (start, end) = parse_horizon(a.horizon.as_deref().or(file.horizon.as_deref()), &trips)?;
    let cfg = EngineConfig {
        seed: a.seed.or(file.seed).unwrap_or(0),
        workers: workers(a.workers.or(file.workers))?,
        start_time: start,
        ..EngineConfig::default()
    };
    let mut e = Engine::new(net, trips, cfg)?;
    let mut trace = match &trace {
        Some(p) => Some(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let mut report: Box<dyn Write> = match &out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let steps = (end - start).round() as u64;
    for k in 1..=steps {
        e.step();
        if let Some(w) = trace.as_mut() {
            let t = fmt_float(e.clock());
            for ((v, lane, s), (_, speed)) in e.vehicle_positions().into_iter().zip(e.vehicle_speeds()) {
                writeln!(w, "{t} {v} {lane} {} {}", fmt_float(s), fmt_float(speed))?;
            }
        }
        if k % every == 0 {
            writeln!(report, "{}", report_line(&e.sample()))?;
        }
    }
    writeln!(report, "{}", final_line(&e.sample()))?;
    report.flush()?;
    if let Some(mut w) = trace {
        w.flush()?;
    }
    Ok(())
}

fn split_names(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_ascii_lowercase()).filter(|x| !x.is_empty()).collect()
}

fn scenarios(s: &str) -> Result<Vec<ScenarioKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ScenarioKind::ALL.to_vec());
    }
    split_names(s)
        .iter()
        .map(|n| {
            ScenarioKind::parse(n).ok_or_else(|| {
                let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
                anyhow!("unknown scenario {n:?}; valid options: {}, all", names.join(", "))
            })
        })
        .collect()
}

fn check_policies(kind: ScenarioKind, policies: &[String]) -> Result<()> {
    let valid: &[&str] = if kind == ScenarioKind::RoadPlan { &PLAN_POLICY_NAMES } else { &POLICY_NAMES };
    for p in policies {
        if !valid.contains(&p.as_str()) {
            bail!("unknown policy {p:?} for {}; valid options: {}", kind.name(), valid.join(", "));
        }
    }
    Ok(())
}

/// Fixture for a periodic scenario: the given files, or the synthetic
/// grid at `trips` (calibrated to the congested level when absent).
fn periodic_fixture(kind: ScenarioKind, a: &BenchArgs, map: Option<&Path>, demand: Option<&Path>, seed: u64, cfg: &EngineConfig) -> Result<(Fixture, usize)> {
    if let Some(map) = map {
        let (net, trips) = read_inputs(map, demand)?;
        let n = trips.len();
        let layout = Default::default();
        return Ok((Fixture { net, layout, trips, horizon: (0.0, 0.0) }, n));
    }
    let n = match a.trips {
        Some(n) => n,
        None => calibrate_congested(seed, cfg, 12)?.0.trips.len(),
    };
    Ok((scenario_fixture(kind, n, seed)?, n))
}

fn bench(a: BenchArgs, file: FileConfig) -> Result<()> {
    let kinds = scenarios(a.scenario.as_deref().or(file.scenario.as_deref()).unwrap_or("signal"))?;
    let policies = split_names(a.policies.as_deref().or(file.policies.as_deref()).unwrap_or("fixed,maxpressure"));
    if policies.is_empty() {
        bail!("--policies is empty");
    }
    for k in &kinds {
        check_policies(*k, &policies)?;
    }
    let map = a.map.clone().or(file.map);
    let demand = a.demand.clone().or(file.demand);
    let out = a.out.clone().or(file.out);
    distinct(&[map.as_deref(), demand.as_deref(), out.as_deref()])?;
    let seed = a.seed.or(file.seed).unwrap_or(1);
    let cfg = EngineConfig { seed, workers: workers(a.workers.or(file.workers))?, ..EngineConfig::default() };
    let horizon = a.horizon.clone().or(file.horizon);

    let mut summary = serde_json::Map::new();
    let mut stdout = std::io::stdout().lock();
    for kind in kinds {
        let mut table = serde_json::Map::new();
        let mut fixture_info = json!({});
        if kind == ScenarioKind::RoadPlan {
            let p = if a.toy { toy_road_plan(seed)? } else { road_plan_fixture(a.trips.unwrap_or(6000), seed)? };
            let p = microflow::bench::plan::PlanProblem { cfg: EngineConfig { workers: cfg.workers, ..p.cfg.clone() }, ..p };
            fixture_info = json!({
                "candidates": p.candidates.len(),
                "budget": p.budget,
                "trips": p.peaks.first().map_or(0, |x| x.trips.len()),
            });
            for name in &policies {
                let t0 = Instant::now();
                let o = solve_plan(&p, name, seed, a.evaluations).expect("policy names were checked")?;
                let row = ResultRow {
                    scenario: kind,
                    policy: name.clone(),
                    att: o.score.att,
                    tp: o.score.tp,
                    steps_per_second: f64::NAN,
                    vehicle_steps_per_second: f64::NAN,
                };
                writeln!(stdout, "{}", row.line())?;
                stdout.flush()?;
                let kept: Vec<u32> = p.candidates.iter().zip(&o.keep).filter(|x| *x.1).map(|x| x.0 .0).collect();
                table.insert(
                    name.clone(),
                    json!({
                        "att": o.score.att,
                        "tp": o.score.tp,
                        "kept": kept,
                        "evaluations": o.evaluations,
                        "wall_seconds": t0.elapsed().as_secs_f64(),
                    }),
                );
            }
        } else {
            let (mut f, n) = periodic_fixture(kind, &a, map.as_deref(), demand.as_deref(), seed, &cfg)?;
            let default = if map.is_some() { None } else { Some(f.horizon) };
            f.horizon = match (&horizon, default) {
                (None, Some(h)) => h,
                (h, _) => parse_horizon(h.as_deref(), &f.trips)?,
            };
            let spec = ScenarioSpec::for_network(kind, &f.net, f.horizon)?;
            fixture_info = json!({ "trips": n, "horizon": [f.horizon.0, f.horizon.1], "entities": spec.entities.len() });
            for name in &policies {
                let mut policy = policy_by_name(name, seed).expect("policy names were checked");
                let o = run_scenario(&spec, policy.as_mut(), f.net.clone(), f.trips.clone(), cfg.clone())?;
                for v in &o.violations {
                    eprintln!("{} {name}: invalid action: {v}", kind.name());
                }
                let row = ResultRow {
                    scenario: kind,
                    policy: name.clone(),
                    att: o.att,
                    tp: o.tp as f64,
                    steps_per_second: o.steps_per_second(),
                    vehicle_steps_per_second: o.vehicle_steps_per_second(),
                };
                writeln!(stdout, "{}", row.line())?;
                stdout.flush()?;
                eprintln!(
                    "{} {name}: {} steps/s, {} vehicle-steps/s",
                    kind.name(),
                    fmt_float(row.steps_per_second),
                    fmt_float(row.vehicle_steps_per_second)
                );
                table.insert(
                    name.clone(),
                    json!({
                        "att": o.att,
                        "tp": o.tp,
                        "steps_per_second": row.steps_per_second,
                        "vehicle_steps_per_second": row.vehicle_steps_per_second,
                        "violations": o.violations.len(),
                    }),
                );
            }
        }
        summary.insert(kind.name().to_string(), json!({ "fixture": fixture_info, "policies": Value::Object(table) }));
    }
    if let Some(out) = out {
        let doc = json!({ "seed": seed, "workers": cfg.workers, "scenarios": Value::Object(summary) });
        fs::write(&out, serde_json::to_string_pretty(&doc)? + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
