//! Command-line front end for the billiard estimators.
//!
//! One subcommand per estimator plus a composite `report`. Every output
//! carries the tool version, the seed, and a hash of the canonical table
//! spec, so a report identifies exactly what produced it; identical
//! (config, seed) runs are byte-identical regardless of thread count.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use billiards::dynamics::{finite_horizon_check, free_flight_bounds};
use billiards::geometry::{build_table, min_curvature, validate_domain, TableSpec};
use billiards::orbits::{
    enumerate_fixed_points, grazing_orbit_scan, CensusConfig, OrbitCensus, OrbitError,
    PeriodicOrbit,
};
use billiards::singularity::{complexity, count_cells, singularity_set, SamplerConfig};
use billiards::thermo::{
    entropy_from_cells, entropy_from_orbits, periodic_orbit_measure, s0_estimate,
    sparse_recurrence_check, srb_entropy_lower_bound, tail_entropy_bound, usc_defect_bound,
    weak_star_distance, BoundReport, Potential, S0Config, S0Mode,
};
use billiards::BilliardTable;

const TOOL: &str = "billiards-cli";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = TOOL, version, about = "Dispersing-billiard dynamics and entropy estimators")]
struct Cli {
    /// Seed for every sampled estimator in the run.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Worker threads (results are identical for any value).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Corridor search: is the horizon finite up to a direction height?
    CheckHorizon {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 6)]
        d_max: i64,
    },
    /// Test a table spec against its admissible parameter domain.
    ValidateDomain {
        #[arg(long)]
        table: PathBuf,
    },
    /// Closed-form entropy lower bound from flight time and curvature.
    SrbBound {
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        tau_min: Option<f64>,
        #[arg(long)]
        kappa_min: Option<f64>,
    },
    /// Maximal near-grazing collision frequency (lower bound).
    S0 {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        n0: usize,
        #[arg(long)]
        phi0: f64,
        #[arg(long, default_value_t = 64)]
        segments: usize,
        #[arg(long, default_value_t = 96)]
        segment_length: usize,
        #[arg(long, default_value_t = 8)]
        refine_rounds: usize,
    },
    /// Count continuity cells of T^n for n = 1..=n_max.
    Cells {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
    },
    /// Trace singularity curves of the given signed order.
    Singularity {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        order: i32,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
    },
    /// Maximal multiplicity K_n of singularity curves through one point.
    Complexity {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
    },
    /// Census of Fix T^n by itinerary enumeration and Newton solving.
    Orbits {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 400_000)]
        max_sequences: usize,
        #[arg(long, default_value_t = 30_000)]
        alphabet_budget: usize,
        /// Potential: "zero" or "tau:<c>" for g = c tau.
        #[arg(long, default_value = "zero")]
        potential: String,
    },
    /// List periodic orbits with grazing margin below a threshold.
    GrazeScan {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        #[arg(long, default_value_t = 400_000)]
        max_sequences: usize,
    },
    /// Sparse-recurrence margin (P_lb - sup g) - s0 log 2.
    SparseRecurrence {
        #[arg(long)]
        table: PathBuf,
        /// "assumed-half" takes s0 = 1/2 a priori; "estimated" searches a grid.
        #[arg(long, default_value = "assumed-half")]
        mode: String,
        #[arg(long)]
        pressure_lb: Option<f64>,
        #[arg(long, default_value = "zero")]
        potential: String,
    },
    /// Tail-entropy bound (3 + 2 floor(tau_max/tau_min)) s0 log(2K).
    TailBound {
        #[arg(long)]
        s0: f64,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        tau_min: f64,
        #[arg(long)]
        tau_max: f64,
    },
    /// Semicontinuity-defect bound P_mu + mass (P_top - P_muS).
    UscBound {
        #[arg(long)]
        p_mu: f64,
        #[arg(long)]
        mass: f64,
        #[arg(long)]
        p_top: f64,
        #[arg(long)]
        p_mu_s: f64,
    },
    /// Weak-star distances between consecutive periodic-orbit measures.
    Equidistribution {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        dictionary: usize,
        #[arg(long, default_value_t = 400_000)]
        max_sequences: usize,
    },
    /// Composite report: horizon, domain, bounds, growth rates, verdicts.
    Report {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
        #[arg(long, default_value_t = 400_000)]
        max_sequences: usize,
    },
}

enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }
    fn numeric(e: impl std::fmt::Display) -> Self {
        CliError::Numeric(e.to_string())
    }
}

/// Payload of one command: a JSON value plus the equivalent CSV table.
struct Output {
    json: Value,
    csv_header: Vec<String>,
    csv_rows: Vec<Vec<String>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // The pool size never changes results, only wall time; reductions are
    // index-ordered everywhere.
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .ok();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (name, table_hash, output) = dispatch(cli)?;
    emit(cli, name, table_hash, output)
}

fn load_spec(path: &PathBuf) -> Result<(TableSpec, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    let spec: TableSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))?;
    let canonical = serde_json::to_vec(&spec).map_err(CliError::config)?;
    let hash = format!("sha256:{:x}", Sha256::digest(&canonical));
    Ok((spec, hash))
}

fn load_table(path: &PathBuf) -> Result<(BilliardTable, String), CliError> {
    let (spec, hash) = load_spec(path)?;
    let table = build_table(&spec).map_err(CliError::config)?;
    Ok((table, hash))
}

fn parse_potential(s: &str) -> Result<Potential, CliError> {
    if s == "zero" {
        return Ok(Potential::Zero);
    }
    if let Some(c) = s.strip_prefix("tau:") {
        let c: f64 = c
            .parse()
            .map_err(|e| CliError::Config(format!("potential scale {c:?}: {e}")))?;
        return Ok(Potential::ScaledTau { c });
    }
    Err(CliError::Config(format!(
        "unknown potential {s:?} (expected \"zero\" or \"tau:<c>\")"
    )))
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip representation; stable across runs and threads.
    format!("{v}")
}

fn dispatch(cli: &Cli) -> Result<(&'static str, Option<String>, Output), CliError> {
    match &cli.command {
        Command::CheckHorizon { table, d_max } => {
            let (t, hash) = load_table(table)?;
            let verdict = finite_horizon_check(&t, *d_max);
            let witness = verdict.witness.as_ref();
            let json = json!({
                "finite": verdict.finite,
                "d_max": verdict.d_max,
                "witness": witness.map(|w| json!({
                    "direction": [w.direction.0, w.direction.1],
                    "width": w.width,
                    "offset": w.offset,
                })),
            });
            let row = vec![
                verdict.finite.to_string(),
                verdict.d_max.to_string(),
                witness.map_or(String::new(), |w| w.direction.0.to_string()),
                witness.map_or(String::new(), |w| w.direction.1.to_string()),
                witness.map_or(String::new(), |w| fmt_f64(w.width)),
                witness.map_or(String::new(), |w| fmt_f64(w.offset)),
            ];
            Ok((
                "check-horizon",
                Some(hash),
                Output {
                    json,
                    csv_header: str_vec(&[
                        "finite", "d_max", "direction_p", "direction_q", "width", "offset",
                    ]),
                    csv_rows: vec![row],
                },
            ))
        }
        Command::ValidateDomain { table } => {
            let (spec, hash) = load_spec(table)?;
            let verdict = validate_domain(&spec).map_err(CliError::config)?;
            let json = json!({
                "accepted": verdict.accepted,
                "violated_constraints": verdict.violated_constraints,
                "margin": verdict.margin,
            });
            let row = vec![
                verdict.accepted.to_string(),
                fmt_f64(verdict.margin),
                verdict.violated_constraints.join("; "),
            ];
            Ok((
                "validate-domain",
                Some(hash),
                Output {
                    json,
                    csv_header: str_vec(&["accepted", "margin", "violated_constraints"]),
                    csv_rows: vec![row],
                },
            ))
        }
        Command::SrbBound { table, tau_min, kappa_min } => {
            let (tau, kappa, hash) = match (table, tau_min, kappa_min) {
                (Some(path), None, None) => {
                    let (t, hash) = load_table(path)?;
                    (t.min_gap(), min_curvature(&t), Some(hash))
                }
                (None, Some(tau), Some(kappa)) => (*tau, *kappa, None),
                _ => {
                    return Err(CliError::Config(
                        "pass either --table or both --tau-min and --kappa-min".to_string(),
                    ))
                }
            };
            let value = srb_entropy_lower_bound(tau, kappa).map_err(CliError::numeric)?;
            let json = json!({ "tau_min": tau, "kappa_min": kappa, "value": value });
            Ok((
                "srb-bound",
                hash,
                Output {
                    json,
                    csv_header: str_vec(&["tau_min", "kappa_min", "value"]),
                    csv_rows: vec![vec![fmt_f64(tau), fmt_f64(kappa), fmt_f64(value)]],
                },
            ))
        }
        Command::S0 { table, n0, phi0, segments, segment_length, refine_rounds } => {
            let (t, hash) = load_table(table)?;
            if !(*phi0 >= 0.0 && *phi0 < std::f64::consts::FRAC_PI_2) {
                return Err(CliError::Config(format!("phi0 {phi0} outside [0, pi/2)")));
            }
            let config = S0Config {
                segments: *segments,
                segment_length: *segment_length,
                seed: cli.seed,
                refine_rounds: *refine_rounds,
            };
            let est = s0_estimate(&t, *n0, *phi0, &config);
            let json = json!({
                "n0": est.n0,
                "phi0": est.phi0,
                "value": est.value,
                "witness": { "scatterer": est.witness.scatterer, "r": est.witness.r, "phi": est.witness.phi },
            });
            Ok((
                "s0",
                Some(hash),
                Output {
                    json,
                    csv_header: str_vec(&[
                        "n0", "phi0", "value", "witness_scatterer", "witness_r", "witness_phi",
                    ]),
                    csv_rows: vec![vec![
                        est.n0.to_string(),
                        fmt_f64(est.phi0),
                        fmt_f64(est.value),
                        est.witness.scatterer.to_string(),
                        fmt_f64(est.witness.r),
                        fmt_f64(est.witness.phi),
                    ]],
                },
            ))
        }
        Command::Cells { table, n_max, budget } => {
            let (t, hash) = load_table(table)?;
            let mut rows = Vec::new();
            let mut items = Vec::new();
            for n in 1..=*n_max {
                let config = SamplerConfig { budget: *budget, seed: cli.seed, ..Default::default() };
                let cells = count_cells(&t, n, &config);
                items.push(json!({ "n": n, "count": cells.count, "samples_used": cells.samples_used }));
                rows.push(vec![
                    n.to_string(),
                    cells.count.to_string(),
                    cells.samples_used.to_string(),
                ]);
            }
            Ok((
                "cells",
                Some(hash),
                Output {
                    json: json!({ "counts": items }),
                    csv_header: str_vec(&["n", "count", "samples_used"]),
                    csv_rows: rows,
                },
            ))
        }
        Command::Singularity { table, order, resolution } => {
            let (t, hash) = load_table(table)?;
            let set = singularity_set(&t, *order, *resolution);
            let mut rows = Vec::new();
            let mut curves = Vec::new();
            for curve in &set.curves {
                curves.push(json!({
                    "id": curve.branch_id(),
                    "scatterer": curve.scatterer,
                    "order_step": curve.order_step,
                    "vertices": curve.points.len(),
                }));
                for (i, (r, phi)) in curve.points.iter().enumerate() {
                    rows.push(vec![
                        curve.branch_id(),
                        curve.scatterer.to_string(),
                        curve.order_step.to_string(),
                        i.to_string(),
                        fmt_f64(*r),
                        fmt_f64(*phi),
                    ]);
                }
            }
            Ok((
                "singularity",
                Some(hash),
                Output {
                    json: json!({
                        "order": set.order,
                        "resolution": set.resolution,
                        "curve_count": set.curves.len(),
                        "curves": curves,
                    }),
                    csv_header: str_vec(&[
                        "curve_id", "scatterer", "order_step", "vertex", "r", "phi",
                    ]),
                    csv_rows: rows,
                },
            ))
        }
        Command::Complexity { table, n, resolution } => {
            let (t, hash) = load_table(table)?;
            let est = complexity(&t, *n, *resolution);
            let json = json!({
                "n": est.n,
                "k_n": est.k_n,
                "location": { "scatterer": est.location.0, "r": est.location.1, "phi": est.location.2 },
                "k_rate": est.k_rate,
                "caveat": est.caveat,
            });
            Ok((
                "complexity",
                Some(hash),
                Output {
                    json,
                    csv_header: str_vec(&["n", "k_n", "scatterer", "r", "phi", "k_rate", "caveat"]),
                    csv_rows: vec![vec![
                        est.n.to_string(),
                        est.k_n.to_string(),
                        est.location.0.to_string(),
                        fmt_f64(est.location.1),
                        fmt_f64(est.location.2),
                        fmt_f64(est.k_rate),
                        est.caveat.clone(),
                    ]],
                },
            ))
        }
        Command::Orbits { table, n, max_sequences, alphabet_budget, potential } => {
            let (t, hash) = load_table(table)?;
            let g = parse_potential(potential)?;
            let config =
                CensusConfig { max_sequences: *max_sequences, alphabet_budget: *alphabet_budget };
            let census = run_census(&t, *n, &g, &config)?;
            Ok(("orbits", Some(hash), census_output(&t, &census, &g)))
        }
        Command::GrazeScan { table, n_max, threshold, max_sequences } => {
            let (t, hash) = load_table(table)?;
            let config =
                CensusConfig { max_sequences: *max_sequences, ..Default::default() };
            let found = grazing_orbit_scan(&t, *n_max, *threshold, &config)
                .map_err(CliError::numeric)?;
            let mut rows = Vec::new();
            let mut items = Vec::new();
            for (orbit, margin) in &found {
                items.push(json!({
                    "period": orbit.period,
                    "itinerary": orbit.itinerary.to_string(),
                    "margin": margin,
                }));
                rows.push(vec![
                    orbit.period.to_string(),
                    orbit.itinerary.to_string(),
                    fmt_f64(*margin),
                ]);
            }
            Ok((
                "graze-scan",
                Some(hash),
                Output {
                    json: json!({
                        "n_max": n_max,
                        "threshold": threshold,
                        "found": items,
                    }),
                    csv_header: str_vec(&["period", "itinerary", "margin"]),
                    csv_rows: rows,
                },
            ))
        }
        Command::SparseRecurrence { table, mode, pressure_lb, potential } => {
            let (t, hash) = load_table(table)?;
            let g = parse_potential(potential)?;
            let mode = match mode.as_str() {
                "assumed-half" => S0Mode::AssumedHalf,
                "estimated" => S0Mode::Estimated {
                    n0_grid: vec![8, 16, 32],
                    phi0_grid: vec![1.2, 1.35, 1.5],
                    config: S0Config { seed: cli.seed, ..Default::default() },
                },
                other => {
                    return Err(CliError::Config(format!(
                        "unknown mode {other:?} (expected \"assumed-half\" or \"estimated\")"
                    )))
                }
            };
            let report =
                sparse_recurrence_check(&t, &g, *pressure_lb, &mode).map_err(CliError::numeric)?;
            Ok(("sparse-recurrence", Some(hash), bound_output(&report, true)))
        }
        Command::TailBound { s0, k, tau_min, tau_max } => {
            let report =
                tail_entropy_bound(*s0, *k, *tau_min, *tau_max).map_err(CliError::numeric)?;
            Ok(("tail-bound", None, bound_output(&report, false)))
        }
        Command::UscBound { p_mu, mass, p_top, p_mu_s } => {
            let report =
                usc_defect_bound(*p_mu, *mass, *p_top, *p_mu_s).map_err(CliError::numeric)?;
            Ok(("usc-bound", None, bound_output(&report, false)))
        }
        Command::Equidistribution { table, n_list, dictionary, max_sequences } => {
            let (t, hash) = load_table(table)?;
            let config = CensusConfig { max_sequences: *max_sequences, ..Default::default() };
            let rows_json = equidistribution_rows(&t, n_list, *dictionary, &config)?;
            let rows = rows_json
                .iter()
                .map(|(a, b, d)| vec![a.to_string(), b.to_string(), fmt_f64(*d)])
                .collect();
            Ok((
                "equidistribution",
                Some(hash),
                Output {
                    json: json!({
                        "dictionary_size": dictionary,
                        "distances": rows_json
                            .iter()
                            .map(|(a, b, d)| json!({ "n_from": a, "n_to": b, "distance": d }))
                            .collect::<Vec<_>>(),
                    }),
                    csv_header: str_vec(&["n_from", "n_to", "distance"]),
                    csv_rows: rows,
                },
            ))
        }
        Command::Report { table, n_max, budget, max_sequences } => {
            let (spec, hash) = load_spec(table)?;
            let t: BilliardTable = build_table(&spec).map_err(CliError::config)?;
            let out = composite_report(cli, &spec, &t, *n_max, *budget, *max_sequences)?;
            Ok(("report", Some(hash), out))
        }
    }
}

fn str_vec(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Census runner that keeps the partial census when the budget runs out;
/// the partial flag rides along in the output.
fn run_census(
    table: &BilliardTable,
    n: usize,
    g: &Potential,
    config: &CensusConfig,
) -> Result<OrbitCensus, CliError> {
    let table_ref = table;
    let step = |x: &billiards::PhasePoint, tau: f64| g.step_value(table_ref, x, tau);
    match enumerate_fixed_points(table, n, step, config) {
        Ok(census) => Ok(census),
        Err(OrbitError::BudgetExceeded { census }) => Ok(census),
        Err(e) => Err(CliError::numeric(e)),
    }
}

fn orbit_rows(census: &OrbitCensus, table: &BilliardTable, g: &Potential) -> Vec<Vec<String>> {
    let n = census.period;
    census
        .orbits
        .iter()
        .map(|orbit: &PeriodicOrbit| {
            let s_p: f64 = orbit
                .points
                .iter()
                .zip(&orbit.taus)
                .map(|(x, &tau)| g.step_value(table, x, tau))
                .sum();
            let s_n = (n / orbit.period) as f64 * s_p;
            vec![
                orbit.period.to_string(),
                orbit.itinerary.to_string(),
                fmt_f64(orbit.length),
                fmt_f64(orbit.grazing_margin),
                fmt_f64(s_n),
            ]
        })
        .collect()
}

fn census_output(table: &BilliardTable, census: &OrbitCensus, g: &Potential) -> Output {
    let rows = orbit_rows(census, table, g);
    let json = json!({
        "n": census.period,
        "orbit_count": census.count,
        "fixed_points": census.fixed_points,
        "weighted_sum": census.weighted_sum,
        "partial": census.partial,
        "sequences_tried": census.sequences_tried,
        "solver_failures": census.solver_failures,
        "orbits": census.orbits.iter().map(|o| json!({
            "period": o.period,
            "itinerary": o.itinerary.to_string(),
            "length": o.length,
            "grazing_margin": o.grazing_margin,
        })).collect::<Vec<_>>(),
    });
    Output {
        json,
        csv_header: str_vec(&["period", "itinerary", "length", "grazing_margin", "s_n_g"]),
        csv_rows: rows,
    }
}

fn bound_output(report: &BoundReport, with_verdict: bool) -> Output {
    let mut json = json!({
        "name": &report.name,
        "value": report.value,
        "inputs": &report.inputs,
        "caveats": &report.caveats,
    });
    if with_verdict {
        json["certified"] = json!(report.value > 0.0);
    }
    let mut rows = vec![vec![report.name.clone(), "value".to_string(), fmt_f64(report.value)]];
    if with_verdict {
        rows.push(vec![
            report.name.clone(),
            "certified".to_string(),
            (report.value > 0.0).to_string(),
        ]);
    }
    for (k, v) in &report.inputs {
        rows.push(vec![report.name.clone(), k.clone(), fmt_f64(*v)]);
    }
    for (i, c) in report.caveats.iter().enumerate() {
        rows.push(vec![report.name.clone(), format!("caveat_{i}"), c.clone()]);
    }
    Output { json, csv_header: str_vec(&["name", "key", "value"]), csv_rows: rows }
}

fn equidistribution_rows(
    table: &BilliardTable,
    n_list: &[usize],
    dictionary: usize,
    config: &CensusConfig,
) -> Result<Vec<(usize, usize, f64)>, CliError> {
    if n_list.len() < 2 {
        return Err(CliError::Config("need at least two census sizes".to_string()));
    }
    let mut measures = Vec::new();
    for &n in n_list {
        let census = run_census(table, n, &Potential::Zero, config)?;
        let mu = periodic_orbit_measure(table, &census, &Potential::Zero)
            .map_err(CliError::numeric)?;
        measures.push((n, mu));
    }
    Ok(measures
        .windows(2)
        .map(|w| {
            let (na, ma) = &w[0];
            let (nb, mb) = &w[1];
            (*na, *nb, weak_star_distance(table, ma, mb, dictionary))
        })
        .collect())
}

fn composite_report(
    cli: &Cli,
    spec: &TableSpec,
    table: &BilliardTable,
    n_max: usize,
    budget: usize,
    max_sequences: usize,
) -> Result<Output, CliError> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let push = |rows: &mut Vec<Vec<String>>, section: &str, key: &str, value: String| {
        rows.push(vec![section.to_string(), key.to_string(), value]);
    };

    // Domain and horizon.
    let domain = validate_domain(spec).map_err(CliError::config)?;
    let horizon = finite_horizon_check(table, 6);
    push(&mut rows, "domain", "accepted", domain.accepted.to_string());
    push(&mut rows, "domain", "margin", fmt_f64(domain.margin));
    push(&mut rows, "horizon", "finite", horizon.finite.to_string());

    // Flight bounds and the closed-form entropy bound.
    let flight = free_flight_bounds(table, 20_000, cli.seed);
    let srb = srb_entropy_lower_bound(table.min_gap(), min_curvature(table))
        .map_err(CliError::numeric)?;
    push(&mut rows, "flight", "tau_min", fmt_f64(flight.tau_min));
    push(&mut rows, "flight", "tau_max_estimate", fmt_f64(flight.tau_max));
    push(&mut rows, "srb_bound", "value", fmt_f64(srb));

    // Cell counts and their growth rate.
    let mut cell_counts = Vec::new();
    for n in 1..=n_max {
        let config = SamplerConfig { budget, seed: cli.seed, ..Default::default() };
        let cells = count_cells(table, n, &config);
        push(&mut rows, "cells", &format!("n{n}"), cells.count.to_string());
        cell_counts.push((n, cells.count));
    }
    let cell_growth = entropy_from_cells(&cell_counts).map_err(CliError::numeric)?;
    push(&mut rows, "cells", "growth_rate", fmt_f64(cell_growth.rate));

    // Orbit censuses and their growth plateau.
    let census_config = CensusConfig { max_sequences, ..Default::default() };
    let mut censuses = Vec::new();
    for n in 2..=n_max {
        let census = run_census(table, n, &Potential::Zero, &census_config)?;
        push(&mut rows, "census", &format!("fix_n{n}"), census.fixed_points.to_string());
        push(&mut rows, "census", &format!("partial_n{n}"), census.partial.to_string());
        censuses.push(census);
    }
    let orbit_growth = entropy_from_orbits(&censuses).map_err(CliError::numeric)?;
    push(&mut rows, "census", "plateau", fmt_f64(orbit_growth.plateau));

    // Sparse recurrence in both modes.
    let assumed = sparse_recurrence_check(table, &Potential::Zero, None, &S0Mode::AssumedHalf)
        .map_err(CliError::numeric)?;
    push(&mut rows, "sparse_recurrence", "margin", fmt_f64(assumed.value));
    push(&mut rows, "sparse_recurrence", "certified", (assumed.value > 0.0).to_string());
    let estimated_mode = S0Mode::Estimated {
        n0_grid: vec![8, 16],
        phi0_grid: vec![1.2, 1.4],
        config: S0Config { seed: cli.seed, segments: 32, refine_rounds: 4, ..Default::default() },
    };
    let estimated = sparse_recurrence_check(table, &Potential::Zero, None, &estimated_mode)
        .map_err(CliError::numeric)?;
    push(&mut rows, "sparse_recurrence", "estimated_margin", fmt_f64(estimated.value));

    // Equidistribution trend over even window sizes up to n_max.
    let ns: Vec<usize> = (4..=n_max).filter(|n| n % 2 == 0).collect();
    let mut distances = Vec::new();
    if ns.len() >= 2 {
        distances = equidistribution_rows(table, &ns, 32, &census_config)?;
        for (a, b, d) in &distances {
            push(&mut rows, "equidistribution", &format!("d_mu{a}_mu{b}"), fmt_f64(*d));
        }
    }

    let json = json!({
        "table": serde_json::to_value(spec).map_err(CliError::config)?,
        "domain": { "accepted": domain.accepted, "margin": domain.margin, "violated": domain.violated_constraints },
        "horizon": { "finite": horizon.finite, "d_max": horizon.d_max },
        "flight_bounds": { "tau_min": flight.tau_min, "tau_max_estimate": flight.tau_max },
        "srb_bound": srb,
        "cells": cell_counts.iter().map(|&(n, c)| json!({ "n": n, "count": c })).collect::<Vec<_>>(),
        "cell_growth_rate": cell_growth.rate,
        "census": censuses.iter().map(|c| json!({
            "n": c.period,
            "fixed_points": c.fixed_points,
            "orbit_count": c.count,
            "partial": c.partial,
        })).collect::<Vec<_>>(),
        "orbit_growth": {
            "sequence": orbit_growth.sequence.iter().map(|&(n, v)| json!({ "n": n, "rate": v })).collect::<Vec<_>>(),
            "plateau": orbit_growth.plateau,
        },
        "sparse_recurrence": {
            "margin": assumed.value,
            "certified": assumed.value > 0.0,
            "estimated_margin": estimated.value,
            "caveats": assumed.caveats,
        },
        "equidistribution": distances.iter().map(|(a, b, d)| json!({
            "n_from": a, "n_to": b, "distance": d,
        })).collect::<Vec<_>>(),
    });
    Ok(Output { json, csv_header: str_vec(&["section", "key", "value"]), csv_rows: rows })
}

fn emit(
    cli: &Cli,
    command: &str,
    table_hash: Option<String>,
    output: Output,
) -> Result<(), CliError> {
    let bytes = match cli.format {
        Format::Json => {
            let mut envelope = json!({
                "tool": TOOL,
                "version": VERSION,
                "command": command,
                "seed": cli.seed,
                "result": output.json,
            });
            if let Some(hash) = &table_hash {
                envelope["table_hash"] = json!(hash);
            }
            let mut s = serde_json::to_string_pretty(&envelope).map_err(CliError::config)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let mut buf = Vec::new();
            writeln!(buf, "# tool: {TOOL} {VERSION}").map_err(CliError::config)?;
            writeln!(buf, "# command: {command}").map_err(CliError::config)?;
            writeln!(buf, "# seed: {}", cli.seed).map_err(CliError::config)?;
            if let Some(hash) = &table_hash {
                writeln!(buf, "# table_hash: {hash}").map_err(CliError::config)?;
            }
            let mut writer = csv::Writer::from_writer(buf);
            writer.write_record(&output.csv_header).map_err(CliError::config)?;
            for row in &output.csv_rows {
                writer.write_record(row).map_err(CliError::config)?;
            }
            writer.into_inner().map_err(CliError::config)?
        }
    };
    match &cli.out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::Config(format!("writing {}: {e}", path.display()))),
        None => {
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::Config(format!("writing stdout: {e}")))
        }
    }
}
