//! Command line front end: one subcommand per library entry point, JSON
//! problem descriptions in, CSV tables and JSON summaries out, plus a run
//! manifest. Every run is one process, writes are atomic (temp file then
//! rename), and every output embeds the seed and the config hash so
//! artifacts can be traced back to their inputs.
//!
//! Exit codes separate the failure stages: 2 for configuration problems
//! (unreadable flags or files, malformed JSON, unwritable output
//! directory), 3 for validation failures inside the library, and 4 for
//! numeric failures. Errors are printed to stderr as a single JSON object.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use ldq::approx::{verify_s_conditions, ApproxParams};
use ldq::dynamics::solve_piecewise_linear;
use ldq::montecarlo::{counterexample, estimate_decay, sample_network, RareEvent, StochasticSpec};
use ldq::network::{NetworkPaths, NetworkSpec};
use ldq::paths::{Curve, PiecewisePath, PiecewiseVector, RoutingPath, StepPath, VectorPath};
use ldq::ratefn::path_rate_net;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Validation,
    Numeric,
}

/// A failed run: the stage that failed and a human-readable reason. The
/// stderr rendering is machine-readable JSON.
#[derive(Clone, Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub reason: String,
}

impl CliError {
    fn config(reason: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, reason: reason.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Numeric => EXIT_NUMERIC,
        }
    }

    pub fn stderr_json(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Config => "config",
            ErrorKind::Validation => "validation",
            ErrorKind::Numeric => "numeric",
        };
        json!({ "error": kind, "reason": self.reason }).to_string()
    }
}

fn lib_err(e: ldq::Error) -> CliError {
    let kind = match e {
        ldq::Error::Numeric(_) => ErrorKind::Numeric,
        _ => ErrorKind::Validation,
    };
    CliError { kind, reason: e.to_string() }
}

#[derive(Parser, Debug)]
#[command(name = "ldq", version, about = "Fluid solvers, rate evaluation, and Monte Carlo for feedback queueing networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the fluid flow equations of a network triple
    Fluid(CommonArgs),
    /// Evaluate the sample-path rate of a network triple
    Rate(CommonArgs),
    /// Build a tilted approximating family and verify its closeness
    Approx(CommonArgs),
    /// Sample one scaled counting network and solve it exactly
    Simulate(CommonArgs),
    /// Estimate rare-event decay rates by crude Monte Carlo
    McLdp(CommonArgs),
    /// Compare the two driving families at one scale
    Counterexample(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fluid(_) => "fluid",
            Command::Rate(_) => "rate",
            Command::Approx(_) => "approx",
            Command::Simulate(_) => "simulate",
            Command::McLdp(_) => "mc-ldp",
            Command::Counterexample(_) => "counterexample",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Fluid(a)
            | Command::Rate(a)
            | Command::Approx(a)
            | Command::Simulate(a)
            | Command::McLdp(a)
            | Command::Counterexample(a) => a,
        }
    }
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON problem description for the chosen command
    #[arg(long)]
    pub config: PathBuf,

    /// Directory where all artifacts are written
    #[arg(long)]
    pub out: PathBuf,

    /// Base seed; replaces the seed inside a stochastic spec. Deterministic
    /// commands record it without using it. Default 0.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Uniform sample count added to the exact knots in fluid path tables;
    /// 0 keeps knots only. Commands with event-time outputs ignore it.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
}

/// One polygonal path: breakpoints plus the slope past the last one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSpec {
    pub breakpoints: Vec<(f64, f64)>,
    #[serde(default)]
    pub tail_slope: f64,
}

impl PathSpec {
    fn build(&self) -> Result<PiecewisePath, CliError> {
        PiecewisePath::new(self.breakpoints.clone(), self.tail_slope).map_err(lib_err)
    }
}

/// Problem description shared by the fluid, rate, and approx commands: the
/// driving triple (n, s, p), the horizon, and, where the command needs
/// them, the rate model, the flows (a, d), and the tilt schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TripleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exogenous: Option<Vec<bool>>,
    pub horizon: f64,
    pub n: Vec<PathSpec>,
    pub s: Vec<PathSpec>,
    pub p: Vec<Vec<PathSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<PathSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<PathSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ApproxParams>>,
}

impl TripleConfig {
    fn exogenous_set(&self) -> Result<Vec<bool>, CliError> {
        if let Some(exo) = &self.exogenous {
            return Ok(exo.clone());
        }
        if let Some(net) = &self.network {
            return Ok(net.stations.iter().map(|s| s.exogenous.is_some()).collect());
        }
        Err(CliError::config(
            "config needs either an explicit exogenous set or a network model",
        ))
    }

    fn build_net(&self) -> Result<NetworkPaths<PiecewisePath>, CliError> {
        let k = self.n.len();
        if self.s.len() != k || self.p.len() != k || self.p.iter().any(|row| row.len() != k) {
            return Err(CliError::config("n, s, and p must all have K stations"));
        }
        let build_vec = |specs: &[PathSpec]| -> Result<PiecewiseVector, CliError> {
            let comps = specs.iter().map(|s| s.build()).collect::<Result<Vec<_>, _>>()?;
            VectorPath::new(comps).map_err(lib_err)
        };
        let n = build_vec(&self.n)?;
        let s = build_vec(&self.s)?;
        let mut entries = Vec::with_capacity(k * k);
        for row in &self.p {
            for spec in row {
                entries.push(spec.build()?);
            }
        }
        let p = RoutingPath::new(k, entries).map_err(lib_err)?;
        NetworkPaths::new(n, s, p, self.exogenous_set()?).map_err(lib_err)
    }

    fn build_flows(&self) -> Result<(PiecewiseVector, PiecewiseVector), CliError> {
        let a = self.a.as_ref().ok_or_else(|| CliError::config("config needs flow paths a"))?;
        let d = self.d.as_ref().ok_or_else(|| CliError::config("config needs flow paths d"))?;
        let build_vec = |specs: &[PathSpec]| -> Result<PiecewiseVector, CliError> {
            let comps = specs.iter().map(|s| s.build()).collect::<Result<Vec<_>, _>>()?;
            VectorPath::new(comps).map_err(lib_err)
        };
        Ok((build_vec(a)?, build_vec(d)?))
    }
}

/// Problem description for the simulate command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub spec: StochasticSpec,
    pub n: u64,
    pub horizon: f64,
}

/// Problem description for the mc-ldp command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub spec: StochasticSpec,
    pub event: RareEvent,
    pub scales: Vec<u64>,
    pub replicas: usize,
}

/// Problem description for the counterexample command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub n: u64,
    pub x: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Record of one run: what ran, on what inputs, with what seed, and which
/// artifacts it produced. Written last, after every artifact has landed.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
    pub config_sha256: String,
    pub grid: usize,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

struct Artifact {
    name: String,
    bytes: Vec<u8>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Shortest round-trip formatting with negative zero normalized, so equal
/// values always print identically.
fn fmt_f64(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

/// Infinite values have no JSON number; they are mapped to strings.
fn f64_json(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn csv_artifact(
    name: &str,
    seed: u64,
    config_sha256: &str,
    header: &[String],
    rows: Vec<Vec<String>>,
) -> Artifact {
    let mut s = String::new();
    let _ = writeln!(s, "# seed={seed} config_sha256={config_sha256}");
    let _ = writeln!(s, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(s, "{}", row.join(","));
    }
    Artifact { name: name.to_string(), bytes: s.into_bytes() }
}

fn json_artifact(name: &str, seed: u64, config_sha256: &str, payload: Value) -> Artifact {
    let mut obj = serde_json::Map::new();
    obj.insert("seed".to_string(), json!(seed));
    obj.insert("config_sha256".to_string(), json!(config_sha256));
    if let Value::Object(map) = payload {
        for (k, v) in map {
            obj.insert(k, v);
        }
    }
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(obj)).expect("serializable");
    bytes.push(b'\n');
    Artifact { name: name.to_string(), bytes }
}

/// Time grid for fluid path tables: every knot of the listed paths plus a
/// uniform grid, sorted and deduplicated.
fn sample_times(paths: &[&PiecewiseVector], horizon: f64, grid: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = vec![0.0, horizon];
    for vp in paths {
        for c in &vp.components {
            ts.extend(c.knots());
        }
    }
    for i in 0..=grid {
        ts.push(horizon * i as f64 / grid.max(1) as f64);
    }
    ts.retain(|t| (0.0..=horizon).contains(t));
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    ts
}

fn flow_headers(k: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    for i in 0..k {
        header.push(format!("a{i}"));
    }
    for i in 0..k {
        header.push(format!("d{i}"));
    }
    for i in 0..k {
        header.push(format!("q{i}"));
    }
    header
}

fn flow_row<C: Curve>(
    t: f64,
    arrivals: &VectorPath<C>,
    departures: &VectorPath<C>,
) -> Vec<String> {
    let a: Vec<f64> = arrivals.eval(t);
    let d: Vec<f64> = departures.eval(t);
    let mut row = vec![fmt_f64(t)];
    row.extend(a.iter().map(|&v| fmt_f64(v)));
    row.extend(d.iter().map(|&v| fmt_f64(v)));
    row.extend(a.iter().zip(&d).map(|(&av, &dv)| fmt_f64(av - dv)));
    row
}

/// Event grid of a step solution: every jump time of arrivals and
/// departures plus the endpoints.
fn step_times(
    arrivals: &VectorPath<StepPath>,
    departures: &VectorPath<StepPath>,
    horizon: f64,
) -> Vec<f64> {
    let mut ts: Vec<f64> = vec![0.0, horizon];
    for vp in [arrivals, departures] {
        for c in &vp.components {
            ts.extend(c.jumps().iter().map(|&(t, _)| t));
        }
    }
    ts.retain(|t| (0.0..=horizon).contains(t));
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    ts
}

fn run_fluid(args: &CommonArgs, cfg: &TripleConfig, seed: u64, hash: &str) -> Result<Vec<Artifact>, CliError> {
    let net = cfg.build_net()?;
    let sol = solve_piecewise_linear(&net, cfg.horizon).map_err(lib_err)?;
    let ts = sample_times(&[&sol.arrivals, &sol.departures], cfg.horizon, args.grid);
    let rows = ts.iter().map(|&t| flow_row(t, &sol.arrivals, &sol.departures)).collect();
    let k = net.dim();
    Ok(vec![
        csv_artifact("fluid.csv", seed, hash, &flow_headers(k), rows),
        json_artifact(
            "fluid.json",
            seed,
            hash,
            json!({
                "command": "fluid",
                "stations": k,
                "horizon": cfg.horizon,
                "arrivals_at_horizon": sol.arrivals.eval(cfg.horizon),
                "departures_at_horizon": sol.departures.eval(cfg.horizon),
            }),
        ),
    ])
}

fn run_rate(cfg: &TripleConfig, seed: u64, hash: &str) -> Result<Vec<Artifact>, CliError> {
    let net = cfg.build_net()?;
    let spec = cfg
        .network
        .as_ref()
        .ok_or_else(|| CliError::config("rate needs a network model in the config"))?;
    let model = spec.validate().map_err(lib_err)?;
    let rate = path_rate_net(&net, &model, cfg.horizon).map_err(lib_err)?;
    Ok(vec![json_artifact(
        "rate.json",
        seed,
        hash,
        json!({
            "command": "rate",
            "horizon": cfg.horizon,
            "rate": f64_json(rate),
        }),
    )])
}

fn run_approx(cfg: &TripleConfig, seed: u64, hash: &str) -> Result<Vec<Artifact>, CliError> {
    let net = cfg.build_net()?;
    let spec = cfg
        .network
        .as_ref()
        .ok_or_else(|| CliError::config("approx needs a network model in the config"))?;
    let model = spec.validate().map_err(lib_err)?;
    let (a, d) = cfg.build_flows()?;
    let schedule = cfg
        .schedule
        .as_ref()
        .ok_or_else(|| CliError::config("approx needs a schedule in the config"))?;
    let report = verify_s_conditions(&net, &a, &d, &model, schedule, cfg.horizon).map_err(lib_err)?;
    let k = net.dim();
    let mut header = vec!["n".to_string()];
    for i in 0..k {
        header.push(format!("delta{i}"));
    }
    for i in 0..k {
        header.push(format!("eta{i}"));
    }
    for name in ["member", "net_distance", "flow_distance", "rate_n", "rate_gap", "grid_residual"] {
        header.push(name.to_string());
    }
    let rows = report
        .entries
        .iter()
        .map(|e| {
            let mut row = vec![e.n.to_string()];
            row.extend(e.delta.iter().map(|&v| fmt_f64(v)));
            row.extend(e.eta.iter().map(|&v| fmt_f64(v)));
            row.push(e.member.to_string());
            row.push(fmt_f64(e.net_distance));
            row.push(fmt_f64(e.flow_distance));
            row.push(fmt_f64(e.rate_n));
            row.push(fmt_f64(e.rate_gap));
            row.push(fmt_f64(e.grid_residual));
            row
        })
        .collect();
    Ok(vec![
        csv_artifact("approx.csv", seed, hash, &header, rows),
        json_artifact(
            "approx.json",
            seed,
            hash,
            json!({
                "command": "approx",
                "rate": f64_json(report.rate),
                "warnings": report.warnings,
            }),
        ),
    ])
}

fn run_simulate(cfg: &SimulateConfig, seed: u64, hash: &str) -> Result<Vec<Artifact>, CliError> {
    let mut spec = cfg.spec.clone();
    spec.seed = seed;
    let (net, decisions) = sample_network(&spec, cfg.n, cfg.horizon).map_err(lib_err)?;
    let sol = ldq::dynamics::counting::solve_counting(&net, &decisions, cfg.horizon)
        .map_err(lib_err)?;
    let ts = step_times(&sol.arrivals, &sol.departures, cfg.horizon);
    let rows = ts.iter().map(|&t| flow_row(t, &sol.arrivals, &sol.departures)).collect();
    let k = net.n.dim();
    Ok(vec![
        csv_artifact("simulate.csv", seed, hash, &flow_headers(k), rows),
        json_artifact(
            "simulate.json",
            seed,
            hash,
            json!({
                "command": "simulate",
                "stations": k,
                "n": cfg.n,
                "horizon": cfg.horizon,
                "arrivals_at_horizon": sol.arrivals.eval(cfg.horizon),
                "departures_at_horizon": sol.departures.eval(cfg.horizon),
                "queues_at_horizon": sol.queue_at(cfg.horizon),
            }),
        ),
    ])
}

fn run_mc(cfg: &McConfig, seed: u64, hash: &str) -> Result<Vec<Artifact>, CliError> {
    let mut spec = cfg.spec.clone();
    spec.seed = seed;
    let table = estimate_decay(&spec, &cfg.event, &cfg.scales, cfg.replicas).map_err(lib_err)?;
    let header: Vec<String> = ["n", "replicas", "hits", "p_hat", "decay", "stderr", "lower_bound_only"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.replicas.to_string(),
                r.hits.to_string(),
                fmt_f64(r.p_hat),
                fmt_f64(r.decay),
                fmt_f64(r.stderr),
                r.lower_bound_only.to_string(),
            ]
        })
        .collect();
    Ok(vec![
        csv_artifact("decay.csv", seed, hash, &header, rows),
        json_artifact(
            "mc-ldp.json",
            seed,
            hash,
            json!({
                "command": "mc-ldp",
                "event": cfg.event,
                "variational": cfg_variational(&table.variational),
                "warnings": table.warnings,
            }),
        ),
    ])
}

fn cfg_variational(v: &Option<f64>) -> Value {
    match v {
        Some(x) => f64_json(*x),
        None => Value::Null,
    }
}

fn run_counterexample(cfg: &CounterexampleConfig, seed: u64, hash: &str) -> Result<Vec<Artifact>, CliError> {
    let (sol_a, sol_b, gap) = counterexample(cfg.n, cfg.x, cfg.alpha).map_err(lib_err)?;
    let horizon = 3.0;
    let mut artifacts = Vec::new();
    for (name, sol) in [("solution_blocks.csv", &sol_a), ("solution_swapped.csv", &sol_b)] {
        let ts = step_times(&sol.arrivals, &sol.departures, horizon);
        let rows = ts.iter().map(|&t| flow_row(t, &sol.arrivals, &sol.departures)).collect();
        artifacts.push(csv_artifact(name, seed, hash, &flow_headers(1), rows));
    }
    artifacts.push(json_artifact(
        "counterexample.json",
        seed,
        hash,
        json!({
            "command": "counterexample",
            "n": cfg.n,
            "x": cfg.x,
            "alpha": cfg.alpha,
            "gap": f64_json(gap),
        }),
    ));
    Ok(artifacts)
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = dir.join(format!(".tmp-{name}"));
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, dir.join(name)).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::config(format!("cannot move {name} into place: {e}"))
    })
}

fn parse_config<T: serde::de::DeserializeOwned>(bytes: &[u8], command: &str) -> Result<T, CliError> {
    serde_json::from_slice(bytes)
        .map_err(|e| CliError::config(format!("malformed {command} config: {e}")))
}

/// Runs one command end to end and returns the manifest it wrote. Nothing
/// is written until the computation has finished, so failed runs leave no
/// partial outputs.
pub fn run(cli: &Cli) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let args = cli.command.common();
    let config_bytes = std::fs::read(&args.config).map_err(|e| {
        CliError::config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let hash = sha256_hex(&config_bytes);
    let name = cli.command.name();

    // stochastic specs carry their own seed; the flag replaces it
    let spec_seed = |spec_seed: u64| args.seed.unwrap_or(spec_seed);
    let (seed, artifacts) = match &cli.command {
        Command::Fluid(a) => {
            let cfg: TripleConfig = parse_config(&config_bytes, name)?;
            let seed = args.seed.unwrap_or(0);
            (seed, run_fluid(a, &cfg, seed, &hash)?)
        }
        Command::Rate(_) => {
            let cfg: TripleConfig = parse_config(&config_bytes, name)?;
            let seed = args.seed.unwrap_or(0);
            (seed, run_rate(&cfg, seed, &hash)?)
        }
        Command::Approx(_) => {
            let cfg: TripleConfig = parse_config(&config_bytes, name)?;
            let seed = args.seed.unwrap_or(0);
            (seed, run_approx(&cfg, seed, &hash)?)
        }
        Command::Simulate(_) => {
            let cfg: SimulateConfig = parse_config(&config_bytes, name)?;
            let seed = spec_seed(cfg.spec.seed);
            (seed, run_simulate(&cfg, seed, &hash)?)
        }
        Command::McLdp(_) => {
            let cfg: McConfig = parse_config(&config_bytes, name)?;
            let seed = spec_seed(cfg.spec.seed);
            (seed, run_mc(&cfg, seed, &hash)?)
        }
        Command::Counterexample(_) => {
            let cfg: CounterexampleConfig = parse_config(&config_bytes, name)?;
            let seed = args.seed.unwrap_or(0);
            (seed, run_counterexample(&cfg, seed, &hash)?)
        }
    };

    std::fs::create_dir_all(&args.out).map_err(|e| {
        CliError::config(format!("cannot create output directory {}: {e}", args.out.display()))
    })?;
    let probe = args.out.join(".ldq-probe");
    std::fs::write(&probe, b"")
        .map_err(|e| CliError::config(format!("output directory not writable: {e}")))?;
    let _ = std::fs::remove_file(&probe);

    let mut outputs = Vec::with_capacity(artifacts.len());
    for artifact in &artifacts {
        write_atomic(&args.out, &artifact.name, &artifact.bytes)?;
        outputs.push(artifact.name.clone());
    }

    let mut versions = BTreeMap::new();
    versions.insert("ldq".to_string(), ldq::VERSION.to_string());
    versions.insert("ldq-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let manifest = Manifest {
        command: name.to_string(),
        versions,
        seed,
        config_sha256: hash,
        grid: args.grid,
        inputs: vec![InputRecord {
            path: args.config.display().to_string(),
            sha256: sha256_hex(&config_bytes),
        }],
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("serializable");
    manifest_bytes.push(b'\n');
    write_atomic(&args.out, "manifest.json", &manifest_bytes)?;
    Ok(manifest)
}
