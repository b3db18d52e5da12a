//! Command-line front end.
//!
//! Every subcommand prints line-delimited JSON records to stdout (or a
//! table with `--human`) and returns a stable exit code: 0 success,
//! 1 configuration or semantic error, 2 parse error, 3 infeasible timing.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::memory::run_hop_by_hop;
use crate::scenario::{load_scenario, scenario_hash, EngineKind, LoadedScenario, Scenario};
use crate::sim::{run, write_jsonl, RunHeader, RunMetrics};
use crate::solver::{build_constraints, solve, Solution};
use crate::strategy::{analyze_cascade, capability_of, StrategyKind};
use crate::time::{parse_time, Picos};
use crate::topology::LinkId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bsa-timing", version, about = "Timing coordination for BSA networks")]
pub struct Cli {
    /// Tabular output instead of JSON lines.
    #[arg(long, global = true)]
    pub human: bool,
    /// Treat unknown scenario keys as warnings.
    #[arg(long, global = true)]
    pub lenient: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file.
    Validate { path: PathBuf },
    /// Solve the timing constraints.
    Solve {
        path: PathBuf,
        /// Simultaneity tolerance, e.g. `1ps`.
        #[arg(long, value_parser = parse_time)]
        epsilon: Option<Picos>,
        #[arg(long)]
        strategy: Option<StrategyKind>,
    },
    /// Perturb one link length and report how far re-solving spreads.
    Cascade {
        path: PathBuf,
        #[arg(long)]
        strategy: Option<StrategyKind>,
        /// `link=metres`, negative to shorten.
        #[arg(long, value_parser = parse_perturbation, allow_hyphen_values = true)]
        perturb: (LinkId, f64),
    },
    /// Run one simulation.
    Simulate {
        path: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slots: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a grid of simulations over seeds and parameters.
    Sweep {
        path: PathBuf,
        /// `a..b` (exclusive), `a..=b` or a single seed.
        #[arg(long, value_parser = parse_seeds)]
        seeds: SeedRange,
        /// `key=v1,v2,...`; repeat for a cartesian grid.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, Vec<String>)>,
        #[arg(long, env = "BSA_TIMING_JOBS")]
        jobs: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for metrics files; stdout when unset.
    #[arg(long = "out", env = "BSA_TIMING_OUT_DIR")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub start: u64,
    pub end_exclusive: u64,
}

impl SeedRange {
    pub fn seeds(self) -> impl Iterator<Item = u64> {
        self.start..self.end_exclusive
    }
}

pub fn parse_seeds(s: &str) -> std::result::Result<SeedRange, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed '{t}'"));
    let r = if let Some((a, b)) = s.split_once("..=") {
        SeedRange { start: num(a)?, end_exclusive: num(b)? + 1 }
    } else if let Some((a, b)) = s.split_once("..") {
        SeedRange { start: num(a)?, end_exclusive: num(b)? }
    } else {
        let a = num(s)?;
        SeedRange { start: a, end_exclusive: a + 1 }
    };
    if r.end_exclusive <= r.start {
        return Err(format!("empty seed range '{s}'"));
    }
    Ok(r)
}

pub fn parse_perturbation(s: &str) -> std::result::Result<(LinkId, f64), String> {
    let (link, d) = s.split_once('=').ok_or_else(|| format!("expected link=metres, got '{s}'"))?;
    let d = d.trim().trim_end_matches('m');
    let v: f64 = d.parse().map_err(|_| format!("bad length change '{d}'"))?;
    if !v.is_finite() {
        return Err(format!("bad length change '{d}'"));
    }
    Ok((LinkId::new(link.trim()), v))
}

pub fn parse_param(s: &str) -> std::result::Result<(String, Vec<String>), String> {
    let (k, vs) = s.split_once('=').ok_or_else(|| format!("expected key=v1,v2, got '{s}'"))?;
    let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(format!("no values for '{k}'"));
    }
    Ok((k.trim().to_string(), values))
}

/// Sets one simulation parameter from its command-line text.
pub fn apply_param(s: &mut Scenario, key: &str, value: &str) -> Result<()> {
    let bad = || Error::Config(format!("bad value '{value}' for '{key}'"));
    let f = || value.parse::<f64>().map_err(|_| bad());
    let u = || value.parse::<u64>().map_err(|_| bad());
    let t = || parse_time(value).map_err(|_| bad());
    let sim = &mut s.simulation;
    match key {
        "p_gen" => sim.p_gen = f()?,
        "p0" => sim.p0 = f()?,
        "p_swap_mem" => sim.p_swap_mem = f()?,
        "slots" => sim.slots = u()?,
        "sigma" => sim.sigma = t()?,
        "window" => sim.window = Some(t()?),
        "rep_period" => sim.rep_period = Some(t()?),
        "timing_jitter" => sim.timing_jitter = t()?,
        "gain" | "estimate_window" | "max_step" => {
            let c = sim
                .controller
                .as_mut()
                .ok_or_else(|| Error::Config(format!("'{key}' needs a controller in the scenario")))?;
            match key {
                "gain" => c.gain = f()?,
                "estimate_window" => c.estimate_window = u()? as usize,
                _ => c.max_step = t()?,
            }
        }
        "strategy" => s.strategy = value.parse().map_err(|_| bad())?,
        _ => return Err(Error::Config(format!("unknown sweep parameter '{key}'"))),
    }
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Grammar { .. } => EXIT_PARSE,
        Error::BaselineInfeasible => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

/// Report envelope. `payload_sha256` covers `payload` only, so wall-clock
/// fields never affect it.
#[derive(Serialize)]
struct Report<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    command: &'a str,
    version: &'static str,
    scenario_hash: &'a str,
    payload_sha256: String,
    payload: &'a Value,
    elapsed_ms: u128,
}

struct Ctx<'a> {
    human: bool,
    lenient: bool,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn line(&mut self, v: &impl Serialize) {
        let _ = writeln!(self.out, "{}", serde_json::to_string(v).expect("serializable"));
    }

    fn report(&mut self, command: &str, loaded: &LoadedScenario, payload: Value, started: Instant) {
        if self.human {
            return;
        }
        let text = serde_json::to_string(&payload).expect("serializable");
        let r = Report {
            kind: "report",
            command,
            version: env!("CARGO_PKG_VERSION"),
            scenario_hash: &loaded.hash,
            payload_sha256: scenario_hash(text.as_bytes()),
            payload: &payload,
            elapsed_ms: started.elapsed().as_millis(),
        };
        self.line(&r);
    }

    fn load(&mut self, path: &Path) -> Result<LoadedScenario> {
        let loaded = load_scenario(path, !self.lenient)?;
        for k in &loaded.unknown_keys {
            let _ = writeln!(self.err, "warning: unknown key '{k}'");
        }
        Ok(loaded)
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let mut ctx = Ctx {
        human: cli.human,
        lenient: cli.lenient,
        out,
        err,
    };
    match dispatch(&mut ctx, cli.command) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(ctx: &mut Ctx, cmd: Command) -> Result<i32> {
    match cmd {
        Command::Validate { path } => cmd_validate(ctx, &path),
        Command::Solve { path, epsilon, strategy } => cmd_solve(ctx, &path, epsilon, strategy),
        Command::Cascade { path, strategy, perturb } => cmd_cascade(ctx, &path, strategy, &perturb.0, perturb.1),
        Command::Simulate { path, seed, slots, out } => cmd_simulate(ctx, &path, seed, slots, out.dir),
        Command::Sweep { path, seeds, params, jobs, out } => cmd_sweep(ctx, &path, seeds, &params, jobs, out.dir),
    }
}

fn cmd_validate(ctx: &mut Ctx, path: &Path) -> Result<i32> {
    let started = Instant::now();
    let loaded = load_scenario(path, false)?;
    let mut report = loaded.scenario.validate();
    for k in &loaded.unknown_keys {
        if ctx.lenient {
            let _ = writeln!(ctx.err, "warning: unknown key '{k}'");
        } else {
            report.push(k.as_str(), "unknown key");
        }
    }
    let valid = report.is_empty();
    if ctx.human {
        let _ = writeln!(ctx.out, "{}: {}", path.display(), if valid { "valid" } else { "INVALID" });
        for v in &report.violations {
            let _ = writeln!(ctx.out, "  {:<16} {}", v.subject, v.message);
        }
    }
    let payload = json!({ "valid": valid, "violations": report.violations });
    ctx.report("validate", &loaded, payload, started);
    Ok(if valid { EXIT_OK } else { EXIT_CONFIG })
}

fn checked(ctx: &mut Ctx, path: &Path) -> Result<LoadedScenario> {
    let loaded = ctx.load(path)?;
    let report = loaded.scenario.validate();
    if !report.is_empty() {
        return Err(Error::InvalidTopology(report.to_string()));
    }
    Ok(loaded)
}

fn cmd_solve(ctx: &mut Ctx, path: &Path, epsilon: Option<Picos>, strategy: Option<StrategyKind>) -> Result<i32> {
    let started = Instant::now();
    let loaded = checked(ctx, path)?;
    let s = &loaded.scenario;
    let strategy = strategy.unwrap_or(s.strategy);
    let eps = epsilon.unwrap_or(s.epsilon);
    let topo = s.effective_topology()?;
    let sys = build_constraints(&topo, &capability_of(strategy, &topo))?;
    let sol = solve(&sys, eps);
    if ctx.human {
        match &sol {
            Solution::Feasible(a) => {
                let _ = writeln!(ctx.out, "feasible under {strategy}");
                for (v, x) in &a.values {
                    let _ = writeln!(ctx.out, "  {:<24} {:>16}", v.as_str(), x.0);
                }
                for (b, r) in &a.residuals {
                    let _ = writeln!(ctx.out, "  residual {:<15} {:>16}", b.as_str(), r.0);
                }
            }
            Solution::CycleInfeasible(c) => {
                let _ = writeln!(
                    ctx.out,
                    "infeasible loop {:?}: imbalance {} exceeds adjustable range {}",
                    c.cycle.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
                    c.fixed_imbalance,
                    c.total_adjustable_range
                );
            }
            Solution::BoundsInfeasible(b) => {
                let _ = writeln!(ctx.out, "infeasible bounds at {:?}: short by {}", b.bsas, b.shortfall);
            }
        }
    }
    let code = if sol.is_feasible() { EXIT_OK } else { EXIT_INFEASIBLE };
    let payload = json!({ "strategy": strategy, "epsilon": eps, "solution": sol });
    ctx.report("solve", &loaded, payload, started);
    Ok(code)
}

fn cmd_cascade(ctx: &mut Ctx, path: &Path, strategy: Option<StrategyKind>, link: &LinkId, delta: f64) -> Result<i32> {
    let started = Instant::now();
    let loaded = checked(ctx, path)?;
    let strategy = strategy.unwrap_or(loaded.scenario.strategy);
    let topo = loaded.scenario.effective_topology()?;
    let r = analyze_cascade(&topo, strategy, link, delta)?;
    if ctx.human {
        let _ = writeln!(ctx.out, "strategy        {strategy}");
        let _ = writeln!(ctx.out, "perturbed       {} by {} m", r.perturbed_link, r.delta_length_m);
        let _ = writeln!(ctx.out, "affected BSAs   {:?}", r.affected_bsas.iter().map(|b| b.as_str()).collect::<Vec<_>>());
        let _ = writeln!(ctx.out, "cascade depth   {}", r.cascade_depth);
        let _ = writeln!(ctx.out, "infeasible      {}", r.infeasible_after_perturbation);
    }
    ctx.report("cascade", &loaded, serde_json::to_value(&r).expect("serializable"), started);
    Ok(EXIT_OK)
}

fn simulate_one(s: &Scenario, seed: u64) -> Result<RunMetrics> {
    let topo = s.effective_topology()?;
    match s.engine {
        EngineKind::EventDriven => run(&topo, s.strategy, &s.simulation, seed),
        EngineKind::HopByHop => run_hop_by_hop(&topo, s.strategy, &s.simulation, seed),
    }
}

fn header(s: &Scenario, hash: &str) -> RunHeader {
    let period = s
        .simulation
        .rep_period
        .or_else(|| s.topology.rep_period())
        .unwrap_or_default();
    RunHeader::new(s.strategy, period, Some(hash.to_string()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn out_dir(flag: Option<PathBuf>, s: &Scenario) -> Option<PathBuf> {
    flag.or_else(|| s.output_dir.as_ref().map(PathBuf::from))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    Ok(p)
}

fn human_metrics(out: &mut dyn Write, m: &RunMetrics) {
    let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>12} {:>10} {:>8}", "bsa", "paired", "coincid.", "swaps", "updates", "sat.");
    for b in &m.bsas {
        let _ = writeln!(
            out,
            "{:<10} {:>10} {:>10} {:>12} {:>10} {:>8}",
            b.bsa.as_str(),
            b.paired,
            b.coincidences,
            b.swaps,
            b.controller_updates,
            b.saturations
        );
    }
    let _ = writeln!(out, "slots {}  all-fired {}  end-to-end {}", m.slots, m.all_sources_fired, m.end_to_end);
    if let Some(l) = m.mean_delivery_latency_slots {
        let _ = writeln!(out, "mean delivery latency {l:.3} slots");
    }
}

fn cmd_simulate(ctx: &mut Ctx, path: &Path, seed: Option<u64>, slots: Option<u64>, dir: Option<PathBuf>) -> Result<i32> {
    let loaded = checked(ctx, path)?;
    let mut s = loaded.scenario.clone();
    if let Some(n) = slots {
        s.simulation.slots = n;
    }
    let seed = seed.unwrap_or(s.seed);
    let m = simulate_one(&s, seed)?;
    let text = write_jsonl(&header(&s, &loaded.hash), &m);
    if ctx.human {
        human_metrics(ctx.out, &m);
    }
    match out_dir(dir, &s) {
        Some(d) => {
            let p = write_file(&d, &format!("{}_seed{seed}.jsonl", stem(path)), &text)?;
            if !ctx.human {
                ctx.line(&json!({
                    "type": "written",
                    "path": p.display().to_string(),
                    "payload_sha256": scenario_hash(text.as_bytes()),
                }));
            }
        }
        None if !ctx.human => {
            let _ = ctx.out.write_all(text.as_bytes());
        }
        None => {}
    }
    Ok(EXIT_OK)
}

/// Cartesian product of the parameter lists, first key outermost.
pub fn grid(params: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for (k, vs) in params {
        points = points
            .into_iter()
            .flat_map(|p| {
                vs.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((k.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn cmd_sweep(
    ctx: &mut Ctx,
    path: &Path,
    seeds: SeedRange,
    params: &[(String, Vec<String>)],
    jobs: Option<usize>,
    dir: Option<PathBuf>,
) -> Result<i32> {
    let loaded = checked(ctx, path)?;
    let points = grid(params);
    let mut scenarios = Vec::new();
    for p in &points {
        let mut s = loaded.scenario.clone();
        for (k, v) in p {
            apply_param(&mut s, k, v)?;
        }
        scenarios.push(s);
    }
    let runs: Vec<(u64, usize)> = seeds.seeds().flat_map(|seed| (0..points.len()).map(move |g| (seed, g))).collect();
    let jobs = jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunMetrics>> =
        pool.install(|| runs.par_iter().map(|&(seed, g)| simulate_one(&scenarios[g], seed)).collect());

    let dir = out_dir(dir, &loaded.scenario);
    for (&(seed, g), r) in runs.iter().zip(results) {
        let m = r?;
        let text = write_jsonl(&header(&scenarios[g], &loaded.hash), &m);
        let file = match &dir {
            Some(d) => Some(write_file(d, &format!("{}_seed{seed}_p{g}.jsonl", stem(path)), &text)?),
            None => None,
        };
        if ctx.human {
            let _ = writeln!(
                ctx.out,
                "seed {seed:<6} {:<40} all-fired {:>10}  end-to-end {:>10}",
                format!("{:?}", points[g]),
                m.all_sources_fired,
                m.end_to_end
            );
            continue;
        }
        let params: serde_json::Map<String, Value> =
            points[g].iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        ctx.line(&json!({
            "type": "run",
            "seed": seed,
            "grid_point": g,
            "params": params,
            "slots": m.slots,
            "all_sources_fired": m.all_sources_fired,
            "end_to_end": m.end_to_end,
            "swaps": m.bsas.iter().map(|b| (b.bsa.0.clone(), b.swaps)).collect::<std::collections::BTreeMap<_, _>>(),
            "mean_delivery_latency_slots": m.mean_delivery_latency_slots,
            "payload_sha256": scenario_hash(text.as_bytes()),
            "path": file.map(|p| p.display().to_string()),
        }));
    }
    Ok(EXIT_OK)
}
