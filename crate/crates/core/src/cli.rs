//! Command-line front end. Every command validates all inputs and computes
//! its results before any output file is written.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::catalog::{AddOutcome, Catalog, CatalogEntry};
use crate::comm::{area_rate, RateMode};
use crate::error::{invalid, Error, Result};
use crate::geometry::{sample_region, Deployment, SampleMode};
use crate::invariance::invariance_suite;
use crate::mm::{initialize_deployment, mm_optimize, write_iteration_csv, MmStatus};
use crate::scenario::{load_deployment, ScenarioConfig};
use crate::search::{
    coordinate_global_search, height_sweep, scaling_experiment, write_height_csv, write_scaling_csv, Framing,
    HeightSweepLayout, SearchObjective,
};
use crate::sensing::{area_crlb, coverage_probability, crlb_field};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "isac-planner", version, about = "Sensing CRLB analysis and BS placement for ISAC networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mm,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FramingArg {
    Enlarged,
    Subdivided,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// A-CRLB, area rate and coverage of a deployment.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        deployment: PathBuf,
        /// Monte Carlo draws for an additional ergodic-rate estimate.
        #[arg(long)]
        mc_draws: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize BS positions.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "mm")]
        method: Method,
        /// Deployment file, or `auto` for the seeded initializer.
        #[arg(long, default_value = "auto")]
        init: String,
        /// Grid-search objective (`--method grid` only).
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Iteration log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// CRLB field over the sensing region as CSV.
    Map {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        deployment: PathBuf,
        /// Grid points per axis, comma separated (defaults to the scenario's).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replication scaling table and, optionally, the BS height sweep.
    Scaling {
        #[arg(long)]
        scenario: PathBuf,
        /// Replication factors (perfect powers of the region dimension).
        #[arg(long, value_delimiter = ',', default_value = "1")]
        factors: Vec<usize>,
        #[arg(long, value_enum, default_value = "both")]
        framing: FramingArg,
        /// Base deployment; defaults to a grid search from the seeded initializer.
        #[arg(long)]
        deployment: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Line lengths (m) for the height sweep.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<f64>>,
        /// Height grid `lo:hi:step` in metres.
        #[arg(long)]
        heights: Option<String>,
        #[arg(long)]
        height_out: Option<PathBuf>,
    },
    /// Randomized displacement/rotation/reflection/scaling checks.
    Invariance {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        deployment: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Store and reuse sensing-only solutions.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    ACrlb,
    AreaRate,
    ACrlbWithRateFloor,
}

impl From<ObjectiveArg> for SearchObjective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::ACrlb => SearchObjective::ACrlb,
            ObjectiveArg::AreaRate => SearchObjective::AreaRate,
            ObjectiveArg::ACrlbWithRateFloor => SearchObjective::ACrlbWithRateFloor,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum CatalogAction {
    Add {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        deployment: PathBuf,
        #[arg(long, default_value = "external")]
        optimizer: String,
    },
    Query {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    List {
        #[arg(long)]
        catalog: PathBuf,
    },
}

/// Numbers as JSON numbers, infinities as strings.
pub fn json_number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

/// Pending output: written only after the command has fully succeeded.
struct Output {
    path: Option<PathBuf>,
    bytes: Vec<u8>,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn emit(outputs: Vec<Output>, stdout: &mut dyn Write) -> Result<()> {
    for o in outputs {
        match o.path {
            Some(p) => std::fs::write(p, &o.bytes)?,
            None => stdout.write_all(&o.bytes)?,
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InfeasibleRate { .. } | Error::Initialization(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_INPUT,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    match execute(cli.command) {
        Ok((outputs, code)) => match emit(outputs, stdout) {
            Ok(()) => code,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_INPUT
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_init(spec: &str, cfg: &ScenarioConfig, problem: &crate::problem::PlanningProblem) -> Result<Deployment> {
    if spec == "auto" {
        initialize_deployment(problem, cfg.n_bs, cfg.seed)
    } else {
        let dep = load_deployment(Path::new(spec))?;
        if dep.len() != cfg.n_bs {
            return Err(invalid(format!("init has {} BSs, scenario expects {}", dep.len(), cfg.n_bs)));
        }
        Ok(dep)
    }
}

fn parse_heights(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad height grid '{spec}'"))))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(invalid("height grid must be lo:hi:step"));
    };
    if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(invalid("height grid needs lo <= hi and step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

fn metrics(cfg: &ScenarioConfig, dep: &Deployment, mc_draws: Option<usize>) -> Result<Value> {
    let problem = cfg.problem()?;
    let a_crlb = area_crlb(&problem.targets, dep, &problem.sensing)?;
    let rate = area_rate(&problem.users, dep, &problem.comm, RateMode::Surrogate)?;
    let field = crlb_field(&problem.targets, dep, &problem.sensing)?;
    let coverage: Vec<Value> = cfg
        .coverage_thresholds_m2
        .iter()
        .map(|g| Ok(json!({"threshold_m2": g, "probability": coverage_probability(&field, *g)?})))
        .collect::<Result<_>>()?;
    let mut doc = json!({
        "n_bs": dep.len(),
        "a_crlb_m2": json_number(a_crlb),
        "area_rate_bps_hz": json_number(rate),
        "rate_floor_bps_hz": problem.comm.r_th,
        "meets_rate_floor": rate >= problem.comm.r_th,
        "coverage": coverage,
    });
    if let Some(n) = mc_draws {
        let mc = area_rate(&problem.users, dep, &problem.comm, RateMode::MonteCarlo { n_draws: n, seed: cfg.seed })?;
        doc["area_rate_mc_bps_hz"] = json_number(mc);
    }
    Ok(doc)
}

fn execute(cmd: Command) -> Result<(Vec<Output>, i32)> {
    match cmd {
        Command::Evaluate { scenario, deployment, mc_draws, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let dep = load_deployment(&deployment)?;
            let doc = metrics(&cfg, &dep, mc_draws)?;
            Ok((vec![Output { path: out, bytes: json_bytes(&doc)? }], EXIT_OK))
        }
        Command::Optimize { scenario, method, init, objective, out, log } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let problem = cfg.problem()?;
            let start = resolve_init(&init, &cfg, &problem)?;
            let (dep, log_bytes, converged, trace) = match method {
                Method::Mm => {
                    if objective.is_some() {
                        return Err(invalid("--objective applies to --method grid only"));
                    }
                    let res = mm_optimize(&problem, &start, &cfg.optimizer)?;
                    let mut buf = Vec::new();
                    write_iteration_csv(&res.log, &mut buf)?;
                    (res.deployment, buf, res.status == MmStatus::Converged, res.trace)
                }
                Method::Grid => {
                    let obj = objective.map(SearchObjective::from).unwrap_or(if problem.rate_constrained() {
                        SearchObjective::ACrlbWithRateFloor
                    } else {
                        SearchObjective::ACrlb
                    });
                    let grid = cfg.grid();
                    let res = coordinate_global_search(&problem, &start, &grid, obj)?;
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["move", "objective"])?;
                    for (i, v) in res.trace.iter().enumerate() {
                        w.write_record([i.to_string(), crate::search::fmt_f64(*v)])?;
                    }
                    let buf = w.into_inner().map_err(|e| invalid(e.to_string()))?;
                    let converged = res.sweeps < grid.max_sweeps || res.trace.len() <= 1;
                    (res.deployment, buf, converged, res.trace)
                }
            };
            let a_crlb = problem.objective(dep.positions());
            let doc = json!({
                "positions_m": dep.positions(),
                "a_crlb_m2": json_number(a_crlb),
                "area_rate_bps_hz": json_number(problem.area_rate(dep.positions())),
                "initial_a_crlb_m2": json_number(trace[0]),
                "converged": converged,
            });
            let mut outputs = vec![Output { path: out, bytes: json_bytes(&doc)? }];
            if let Some(p) = log {
                outputs.push(Output { path: Some(p), bytes: log_bytes });
            }
            Ok((outputs, if converged { EXIT_OK } else { EXIT_NOT_CONVERGED }))
        }
        Command::Map { scenario, deployment, grid, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let dep = load_deployment(&deployment)?;
            let params = cfg.sensing.resolve()?;
            let counts = grid.unwrap_or_else(|| cfg.sensing_samples.clone());
            let samples = sample_region(&cfg.sensing_region, &counts, SampleMode::UniformGrid)?;
            let field = crlb_field(&samples, &dep, &params)?;
            let mut buf = Vec::new();
            field.write_csv(&mut buf)?;
            Ok((vec![Output { path: out, bytes: buf }], EXIT_OK))
        }
        Command::Scaling { scenario, factors, framing, deployment, out, lengths, heights, height_out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let problem = cfg.problem()?;
            if factors.is_empty() {
                return Err(invalid("at least one factor is required"));
            }
            let dim = cfg.sensing_region.dim();
            for f in &factors {
                crate::geometry::integer_root(*f, dim)?;
            }
            let height_grid = heights.as_deref().map(parse_heights).transpose()?;
            if lengths.is_some() != height_grid.is_some() {
                return Err(invalid("--lengths and --heights go together"));
            }
            let base = match deployment {
                Some(p) => load_deployment(&p)?,
                None => {
                    let init = initialize_deployment(&problem, cfg.n_bs, cfg.seed)?;
                    coordinate_global_search(&problem, &init, &cfg.grid(), SearchObjective::ACrlb)?.deployment
                }
            };
            let framings = match framing {
                FramingArg::Enlarged => vec![Framing::Enlarged],
                FramingArg::Subdivided => vec![Framing::Subdivided],
                FramingArg::Both => vec![Framing::Enlarged, Framing::Subdivided],
            };
            let rows = scaling_experiment(&cfg.sensing_region, &problem.targets, &base, &problem.sensing, &factors, &framings)?;
            let mut buf = Vec::new();
            write_scaling_csv(&rows, &mut buf)?;
            let mut outputs = vec![Output { path: out, bytes: buf }];
            if let (Some(ls), Some(hs)) = (lengths, height_grid) {
                // horizontal layout of the base deployment, relative to the region length
                let length = cfg.sensing_region.extents()[0];
                let anchor = cfg.sensing_region.anchor();
                let layout = HeightSweepLayout {
                    fractions: base
                        .positions()
                        .iter()
                        .map(|p| [(p.x - anchor.x) / length, (p.y - anchor.y) / length])
                        .collect(),
                    samples: cfg.sensing_samples[0],
                };
                let rows = height_sweep(&layout, &ls, &hs, &problem.sensing)?;
                let mut buf = Vec::new();
                write_height_csv(&rows, &mut buf)?;
                outputs.push(Output { path: height_out, bytes: buf });
            }
            Ok((outputs, EXIT_OK))
        }
        Command::Invariance { scenario, deployment, trials, tolerance, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let problem = cfg.problem()?;
            if trials == 0 || !(tolerance > 0.0) {
                return Err(invalid("trials must be >= 1 and tolerance positive"));
            }
            let dep = match deployment {
                Some(p) => load_deployment(&p)?,
                None => initialize_deployment(&problem, cfg.n_bs, cfg.seed)?,
            };
            let report = invariance_suite(&problem.targets, &dep, &problem.sensing, trials, tolerance, cfg.seed)?;
            let code = if report.pass { EXIT_OK } else { EXIT_NOT_CONVERGED };
            Ok((vec![Output { path: out, bytes: json_bytes(&report)? }], code))
        }
        Command::Catalog { action } => catalog_command(action),
    }
}

fn catalog_command(action: CatalogAction) -> Result<(Vec<Output>, i32)> {
    match action {
        CatalogAction::Add { catalog, scenario, deployment, optimizer } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let dep = load_deployment(&deployment)?;
            let problem = cfg.problem()?;
            let objective = area_crlb(&problem.targets, &dep, &problem.sensing)?;
            let entry = CatalogEntry::new(cfg.sensing_region.clone(), dep, &optimizer, objective, &problem.sensing)?;
            let mut cat = Catalog::load_or_default(&catalog)?;
            let (id, outcome) = cat.add(entry);
            cat.save(&catalog)?;
            let outcome = match outcome {
                AddOutcome::Inserted => "inserted",
                AddOutcome::Replaced => "replaced",
                AddOutcome::KeptExisting => "kept_existing",
            };
            let doc = json!({"id": id, "outcome": outcome, "a_crlb_m2": json_number(objective)});
            Ok((vec![Output { path: None, bytes: json_bytes(&doc)? }], EXIT_OK))
        }
        CatalogAction::Query { catalog, scenario, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let params = cfg.sensing.resolve()?;
            let cat = Catalog::load(&catalog)?;
            match cat.query(&cfg.sensing_region, cfg.n_bs, &params)? {
                Some(hit) => {
                    let doc = json!({
                        "positions_m": hit.deployment.positions(),
                        "entry_id": hit.entry_id,
                        "scale": hit.transform.scale(),
                        "predicted_a_crlb_m2": json_number(hit.predicted_objective),
                    });
                    Ok((vec![Output { path: out, bytes: json_bytes(&doc)? }], EXIT_OK))
                }
                None => Err(Error::Catalog("no matching entry".into())),
            }
        }
        CatalogAction::List { catalog } => {
            let cat = Catalog::load(&catalog)?;
            let rows: Vec<Value> = cat
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    json!({"id": i, "family": e.descriptor.family, "ratios": e.descriptor.ratios,
                           "n_bs": e.deployment.len(), "beta": e.beta, "a_crlb_m2": json_number(e.objective),
                           "optimizer": e.optimizer})
                })
                .collect();
            Ok((vec![Output { path: None, bytes: json_bytes(&rows)? }], EXIT_OK))
        }
    }
}
