use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use dnmap::characterization::{full_report, CheckConfig, Verdict};
use dnmap::forward::{dn_disk, dn_mesh_operator, mesh_disk, mesh_torus_minus_cap, read_off};
use dnmap::io::{read_operator, to_json_string, write_atomic, write_json, write_operator};
use dnmap::recon::{reconstruct, ReconstructConfig};
use dnmap::svg::render_region;
use dnmap::topology::{topology_of, TopologyConfig};
use dnmap::{BoundaryFunction, Error, GridSpec, TolPolicy, C64};

const EXIT_USAGE: u8 = 64;
const EXIT_INPUT: u8 = 65;
const EXIT_NUMERIC: u8 = 70;

/// Dirichlet-to-Neumann operators of surfaces with one boundary circle.
#[derive(Parser)]
#[command(name = "dnmap", version)]
struct Cli {
    /// Indentation of JSON output; 0 writes compact JSON.
    #[arg(long, global = true, default_value_t = 2)]
    json_indent: usize,
    /// Seed for sampled checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the operator of a model surface or an OFF mesh.
    Solve(SolveArgs),
    /// Check the characterization conditions.
    Check(CheckArgs),
    /// Compute the image region of a kernel coordinate.
    Reconstruct(ReconstructArgs),
    /// Print handle rank, Euler characteristic and genus.
    Topology(TopologyArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// `disk`, `disk-mesh`, `torus`, or a path to an OFF mesh.
    #[arg(long)]
    surface: String,
    /// Fourier truncation N.
    #[arg(long, default_value_t = 16)]
    modes: usize,
    #[arg(long)]
    out: PathBuf,
    /// Mesh size for `disk-mesh` and `torus`.
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// JSON sidecar with a conformal factor for OFF input (defaults to
    /// `<mesh>.json` when present).
    #[arg(long)]
    conformal: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    input: PathBuf,
    /// Write the full report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Boundary points for the local coordinate test.
    #[arg(long, default_value_t = 8)]
    points: usize,
    /// Required singular value gap around the kernel and handle ranks.
    #[arg(long, default_value_t = 1e3)]
    rank_gap: f64,
    /// Use settings for a discretized operator with this relative error.
    #[arg(long)]
    discretized: Option<f64>,
}

#[derive(Args)]
struct ReconstructArgs {
    input: PathBuf,
    /// Cells per side.
    #[arg(long, default_value_t = 256)]
    grid: usize,
    /// CSV of `x,y,d`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Coordinate as `n:re[:im]` terms separated by commas, e.g. `1:1,2:0.3`.
    #[arg(long)]
    eta: Option<String>,
    /// Kernel threshold for discretized operators.
    #[arg(long)]
    discretized: bool,
}

#[derive(Args)]
struct TopologyArgs {
    input: PathBuf,
    /// Gap-based threshold for discretized operators.
    #[arg(long)]
    discretized: bool,
}

fn parse_eta(text: &str, grid: GridSpec) -> Result<BoundaryFunction, Error> {
    let mut terms = Vec::new();
    for t in text.split(',').filter(|t| !t.trim().is_empty()) {
        let parts: Vec<&str> = t.trim().split(':').collect();
        let bad = || Error::InvalidInput(format!("bad coordinate term `{t}`"));
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad());
        }
        let n: i64 = parts[0].parse().map_err(|_| bad())?;
        let re: f64 = parts[1].parse().map_err(|_| bad())?;
        let im: f64 = parts.get(2).map(|s| s.parse()).transpose().map_err(|_| bad())?.unwrap_or(0.0);
        if n.unsigned_abs() as usize > grid.modes {
            return Err(Error::InvalidInput(format!("mode {n} beyond truncation {}", grid.modes)));
        }
        terms.push((n, C64::new(re, im)));
    }
    Ok(BoundaryFunction::from_modes(grid, &terms))
}

fn indent(cli: &Cli) -> Option<usize> {
    (cli.json_indent > 0).then_some(cli.json_indent)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Solve(a) => {
            let grid = GridSpec::unit_circle(a.modes)?;
            let op = match a.surface.as_str() {
                "disk" => dn_disk(grid),
                "disk-mesh" => dn_mesh_operator(&mesh_disk(a.h)?, grid)?,
                "torus" => dn_mesh_operator(&mesh_torus_minus_cap(2.0, 1.0, a.h)?, grid)?,
                path => dn_mesh_operator(&read_off(path.as_ref(), a.conformal.as_deref())?, grid)?,
            };
            info!("solved {} on {grid}", a.surface);
            write_operator(&a.out, &op, indent(cli))?;
            Ok(0)
        }
        Command::Check(a) => {
            let op = read_operator(&a.input)?;
            let mut cfg = match a.discretized {
                Some(err) => CheckConfig::discretized(err),
                None => CheckConfig {
                    tol: a.tol,
                    kernel_gap: a.rank_gap,
                    handle_gap: a.rank_gap,
                    ..CheckConfig::default()
                },
            };
            cfg.points = a.points;
            cfg.seed = cli.seed;
            info!("tolerances: {}", to_json_string(&cfg, None)?.trim_end());
            let report = full_report(&op, &cfg);
            if let Some(path) = &a.report {
                write_json(path, &report, indent(cli))?;
            }
            for c in &report.conditions {
                println!("{:<4} {:<15} residual {:.3e} tol {:.1e}", c.id, format!("{:?}", c.status), c.residual, c.tolerance);
            }
            println!("verdict {:?}", report.verdict);
            Ok(match report.verdict {
                Verdict::Pass => 0,
                Verdict::Fail => 1,
                Verdict::Uncertain => 2,
            })
        }
        Command::Reconstruct(a) => {
            let op = read_operator(&a.input)?;
            let mut cfg = ReconstructConfig {
                grid: a.grid,
                ..Default::default()
            };
            if a.discretized {
                cfg.kernel_policy = TolPolicy::LeadingGap { min_ratio: 10.0 };
                cfg.kernel_gap = 10.0;
            }
            if let Some(text) = &a.eta {
                cfg.eta = Some(parse_eta(text, *op.grid())?);
            }
            let r = reconstruct(&op, &cfg)?;
            if let Some(path) = &a.out {
                write_atomic(path, r.region.field.to_csv().as_bytes())?;
            }
            if let Some(path) = &a.svg {
                write_atomic(path, render_region(&r.region, &r.coordinate).as_bytes())?;
            }
            let summary = json!({
                "area": r.region.area,
                "univalent": r.univalent,
                "multivalent": r.region.multivalent,
                "max_winding": r.region.field.max_value(),
                "coordinate": r.coordinate,
                "samples": r.samples,
            });
            print!("{}", to_json_string(&summary, indent(cli))?);
            Ok(0)
        }
        Command::Topology(a) => {
            let op = read_operator(&a.input)?;
            let cfg = if a.discretized { TopologyConfig::discretized() } else { TopologyConfig::default() };
            let t = topology_of(&op, &cfg)?;
            let out = json!({
                "r": t.handle_rank,
                "chi": t.euler_characteristic,
                "genus": t.genus,
                "gap_ratio": t.gap_ratio,
            });
            print!("{}", to_json_string(&out, indent(cli))?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // Sequential dense kernels keep floating-point reductions in a fixed order.
    faer::set_global_parallelism(faer::Par::Seq);
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("dnmap: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("dnmap: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERIC })
        }
    }
}
