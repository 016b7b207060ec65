//! Command-line entry points and report serialization.
//!
//! Exit codes reflect tool health only: 0 success (whatever the verdicts),
//! 1 invalid input, 2 numeric or guard failure. A FAILS verdict is data,
//! not a process failure, so batch studies can consume the reports.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::kkt::{classify_index_sets, enumerate_kkt_with, KktError, KktPoint};
use crate::model::{self, Perturbation, QpNepGame};
use crate::numerics::{NumericsError, PositivityOptions};
use crate::perturb::{
    default_window, detect_branches, estimate_calmness_constant, BranchSummary, CalmnessEstimate,
    PerturbError, SweepResult,
};
use crate::stability::{self, AlphaMode, AnalyzeOptions, CheckResult, StabilityError};
use crate::tol::{self, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "nepcert",
    about = "Stability certification for KKT points of Nash games with quadratic players"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
enum AlphaArg {
    #[default]
    Uniform,
    Search,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate all KKT points of the unperturbed game.
    Solve {
        game: PathBuf,
        #[arg(long, default_value_t = tol::ACTIVE)]
        tol_active: f64,
        #[arg(long, default_value_t = tol::KKT)]
        tol_kkt: f64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run every stability check at one KKT point.
    Analyze {
        game: PathBuf,
        /// Index into the enumerated KKT points (sorted lexicographically).
        #[arg(long, default_value_t = 0)]
        point_index: usize,
        #[arg(long, default_value_t = tol::GRID_RES)]
        grid_res: f64,
        #[arg(long, default_value_t = tol::STARTS)]
        starts: usize,
        #[arg(long, default_value_t = tol::SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        alpha: AlphaArg,
        #[arg(long, default_value_t = tol::ACTIVE)]
        tol_active: f64,
        #[arg(long, default_value_t = tol::KKT)]
        tol_kkt: f64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Sweep tilt perturbations and summarize the solution branches.
    Perturb {
        game: PathBuf,
        #[arg(long)]
        direction: PathBuf,
        /// Grid specification START:STOP:COUNT with COUNT >= 2.
        #[arg(long = "t", allow_hyphen_values = true)]
        t_spec: String,
        /// Window radius around the reference point (strategy max-norm).
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, default_value_t = 0)]
        point_index: usize,
        #[arg(long, default_value_t = tol::SEED)]
        seed: u64,
        #[arg(long, default_value_t = tol::KKT)]
        tol_kkt: f64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

#[derive(Debug)]
enum CliError {
    InvalidInput(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidInput(_) => EXIT_INVALID_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::InvalidInput(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<model::ModelError> for CliError {
    fn from(e: model::ModelError) -> Self {
        CliError::InvalidInput(format!("model: {e}"))
    }
}

impl From<KktError> for CliError {
    fn from(e: KktError) -> Self {
        CliError::Numeric(format!("kkt: {e}"))
    }
}

impl From<StabilityError> for CliError {
    fn from(e: StabilityError) -> Self {
        CliError::Numeric(format!("stability: {e}"))
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Numeric(format!("numerics: {e}"))
    }
}

impl From<PerturbError> for CliError {
    fn from(e: PerturbError) -> Self {
        match e {
            PerturbError::Kkt(inner) => CliError::Numeric(format!("perturb: {inner}")),
            other => CliError::InvalidInput(format!("perturb: {other}")),
        }
    }
}

/// Parse args, run, and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful output, not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID_INPUT,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(output) => {
            println!("{output}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Solve {
            game,
            tol_active,
            tol_kkt,
            format,
        } => run_solve(&game, tol_active, tols_with(tol_kkt, tol_active), format),
        Command::Analyze {
            game,
            point_index,
            grid_res,
            starts,
            seed,
            alpha,
            tol_active,
            tol_kkt,
            format,
        } => {
            let opts = AnalyzeOptions {
                positivity: PositivityOptions {
                    grid_res,
                    starts,
                    seed,
                    ..Default::default()
                },
                alpha: match alpha {
                    AlphaArg::Uniform => AlphaMode::Uniform,
                    AlphaArg::Search => AlphaMode::Search,
                },
                tol_active,
            };
            run_analyze(
                &game,
                point_index,
                &opts,
                tols_with(tol_kkt, tol_active),
                format,
            )
        }
        Command::Perturb {
            game,
            direction,
            t_spec,
            window,
            point_index,
            seed,
            tol_kkt,
            format,
        } => run_perturb(
            &game,
            &direction,
            &t_spec,
            window,
            point_index,
            seed,
            tols_with(tol_kkt, tol::ACTIVE),
            format,
        ),
    }
}

fn tols_with(tol_kkt: f64, tol_active: f64) -> Tolerances {
    Tolerances {
        kkt: tol_kkt,
        active: tol_active,
        ..Default::default()
    }
}

fn load_and_enumerate(
    path: &PathBuf,
    tols: &Tolerances,
) -> Result<(QpNepGame, Vec<KktPoint>), CliError> {
    let game = model::load_game(path)?;
    let p = Perturbation::zero(&game);
    let pts = enumerate_kkt_with(&game, &p, tol::MAX_INEQ, tols)?;
    Ok((game, pts))
}

fn select_point(pts: &[KktPoint], index: usize) -> Result<&KktPoint, CliError> {
    pts.get(index).ok_or_else(|| {
        CliError::InvalidInput(format!(
            "cli: point index {index} out of range ({} KKT points found)",
            pts.len()
        ))
    })
}

/// Grid spec "START:STOP:COUNT" with COUNT >= 2, inclusive endpoints.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = |msg: &str| CliError::InvalidInput(format!("cli: grid spec {spec:?}: {msg}"));
    if parts.len() != 3 {
        return Err(bad("expected START:STOP:COUNT"));
    }
    let start: f64 = parts[0].parse().map_err(|_| bad("START is not a number"))?;
    let stop: f64 = parts[1].parse().map_err(|_| bad("STOP is not a number"))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| bad("COUNT is not an integer"))?;
    if count < 2 {
        return Err(bad("COUNT must be at least 2"));
    }
    if !start.is_finite() || !stop.is_finite() {
        return Err(bad("bounds must be finite"));
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct SolvePoint {
    x: Vec<f64>,
    lambda: Vec<f64>,
    residual: f64,
    active_set: Vec<usize>,
    non_isolated: bool,
    index_sets: crate::kkt::IndexSets,
}

#[derive(Debug, Serialize, Deserialize)]
struct SolveDocument {
    num_players: usize,
    total_dim: usize,
    total_constraints: usize,
    points: Vec<SolvePoint>,
}

fn run_solve(
    path: &PathBuf,
    tol_active: f64,
    tols: Tolerances,
    format: Format,
) -> Result<String, CliError> {
    let (game, pts) = load_and_enumerate(path, &tols)?;
    let p0 = Perturbation::zero(&game);
    let mut points = Vec::with_capacity(pts.len());
    for p in &pts {
        let index_sets = classify_index_sets(&game, &p0, p, tol_active)?;
        points.push(SolvePoint {
            x: p.x.as_slice().to_vec(),
            lambda: p.lambda.as_slice().to_vec(),
            residual: p.residual,
            active_set: p.active_set.clone(),
            non_isolated: p.non_isolated,
            index_sets,
        });
    }
    let doc = SolveDocument {
        num_players: game.num_players(),
        total_dim: game.total_dim,
        total_constraints: game.total_constraints,
        points,
    };
    match format {
        Format::Json => to_json(&doc),
        Format::Text => {
            let mut out = String::new();
            out.push_str(&format!(
                "game: {} players, dim {}, {} constraints\n{} KKT point(s)\n",
                doc.num_players,
                doc.total_dim,
                doc.total_constraints,
                doc.points.len()
            ));
            for (i, p) in doc.points.iter().enumerate() {
                out.push_str(&format!(
                    "[{i}] x = {:?}, lambda = {:?}, residual = {:.2e}{}{}\n",
                    p.x,
                    p.lambda,
                    p.residual,
                    if p.active_set.is_empty() {
                        String::new()
                    } else {
                        format!(", active rows {:?}", p.active_set)
                    },
                    if p.non_isolated { ", NON_ISOLATED" } else { "" },
                ));
                for (k, s) in p.index_sets.per_player.iter().enumerate() {
                    out.push_str(&format!(
                        "    player {k}: I1 = {:?}, I2 = {:?}, I3 = {:?}\n",
                        s.i1, s.i2, s.i3
                    ));
                }
            }
            Ok(out.trim_end().to_string())
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnalyzeDocument {
    point_index: usize,
    report: stability::StabilityReport,
    checks: Vec<CheckResult>,
}

fn run_analyze(
    path: &PathBuf,
    point_index: usize,
    opts: &AnalyzeOptions,
    tols: Tolerances,
    format: Format,
) -> Result<String, CliError> {
    let (game, pts) = load_and_enumerate(path, &tols)?;
    let point = select_point(&pts, point_index)?;
    let p = Perturbation::zero(&game);
    let report = stability::analyze(&game, &p, point, opts)?;
    let doc = AnalyzeDocument {
        point_index,
        checks: report.checks(),
        report,
    };
    match format {
        Format::Json => to_json(&doc),
        Format::Text => {
            let mut out = String::new();
            out.push_str(&format!(
                "point [{}]: x = {:?}, lambda = {:?}\n",
                doc.point_index, doc.report.point.x, doc.report.point.lambda
            ));
            for (k, cq) in doc.report.cq.per_player.iter().enumerate() {
                out.push_str(&format!(
                    "player {k}: LICQ={} SMFCQ={} SCSC={} convex={} SSOSC={}{}\n",
                    cq.licq,
                    cq.smfcq.holds,
                    cq.scsc,
                    cq.convex.convex,
                    cq.ssosc.verdict,
                    cq.ssosc
                        .margin
                        .map(|m| format!(" (margin {m:.6})"))
                        .unwrap_or_default(),
                ));
            }
            out.push_str(&format!("local nash: {}\n", doc.report.local_nash.verdict));
            for c in &doc.checks {
                out.push_str(&format!(
                    "{}: {}{}{}{}\n",
                    c.check_name,
                    c.verdict,
                    c.margin
                        .map(|m| format!(" margin={m:.6}"))
                        .unwrap_or_default(),
                    if c.certificate_method.is_empty() {
                        String::new()
                    } else {
                        format!(" [{}]", c.certificate_method)
                    },
                    if c.details.is_empty() {
                        String::new()
                    } else {
                        format!(" — {}", c.details)
                    },
                ));
            }
            for note in &doc.report.notes {
                out.push_str(&format!("note: {note}\n"));
            }
            Ok(out.trim_end().to_string())
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PerturbDocument {
    point_index: usize,
    window: f64,
    sweep: SweepResult,
    calmness: CalmnessEstimate,
    branches: BranchSummary,
}

#[allow(clippy::too_many_arguments)]
fn run_perturb(
    game_path: &PathBuf,
    direction_path: &PathBuf,
    t_spec: &str,
    window: Option<f64>,
    point_index: usize,
    seed: u64,
    tols: Tolerances,
    format: Format,
) -> Result<String, CliError> {
    let grid = parse_grid(t_spec)?;
    let (game, pts) = load_and_enumerate(game_path, &tols)?;
    let point = select_point(&pts, point_index)?;
    let dir = model::load_direction(direction_path, &game)?;
    let window = match window {
        Some(w) => w,
        None => default_window(&game, point, &tols)?,
    };
    let popts = PositivityOptions {
        seed,
        ..Default::default()
    };
    let sweep = crate::perturb::sweep(&game, &dir, point, &grid, window, &popts, &tols)?;
    let calmness = estimate_calmness_constant(&sweep);
    let branches = detect_branches(&sweep);
    let doc = PerturbDocument {
        point_index,
        window,
        sweep,
        calmness,
        branches,
    };
    match format {
        Format::Json => to_json(&doc),
        Format::Text => {
            let mut out = String::new();
            out.push_str(&format!(
                "reference [{}]: x = {:?}, window = {:.6}\n",
                doc.point_index, doc.sweep.reference_x, doc.window
            ));
            for step in &doc.sweep.steps {
                out.push_str(&format!(
                    "t = {:+.6}: {} point(s) in window",
                    step.t,
                    step.points.len()
                ));
                for p in &step.points {
                    out.push_str(&format!(
                        " | x={:?} lambda={:?} nash={}",
                        p.x, p.lambda, p.nash
                    ));
                }
                out.push('\n');
            }
            match doc.calmness.kappa_hat {
                Some(k) => out.push_str(&format!("kappa_hat = {k:.6}\n")),
                None => out.push_str("kappa_hat undefined (no perturbed points in window)\n"),
            }
            if doc.calmness.robustness_violated {
                out.push_str("robustness violated: some grid values have an empty window\n");
            }
            out.push_str(&format!(
                "branches: {} for t > 0, {} for t <= 0{}\n",
                doc.branches.positive.len(),
                doc.branches.negative.len(),
                if doc.branches.kink_at_zero {
                    "; kink at t = 0"
                } else {
                    ""
                },
            ));
            for (label, list) in [
                ("t > 0", &doc.branches.positive),
                ("t < 0", &doc.branches.negative),
            ] {
                for b in list.iter() {
                    out.push_str(&format!(
                        "  branch ({label}): slope {:?}, fit residual {:.2e}, {} sample(s)\n",
                        b.slope,
                        b.fit_residual,
                        b.ts.len()
                    ));
                }
            }
            Ok(out.trim_end().to_string())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("cli: serialization failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parses_inclusive_endpoints() {
        let g = parse_grid("-0.1:0.1:41").unwrap();
        assert_eq!(g.len(), 41);
        assert!((g[0] + 0.1).abs() < 1e-15);
        assert!((g[40] - 0.1).abs() < 1e-15);
        assert!((g[20]).abs() < 1e-15);
    }

    #[test]
    fn one_point_grid_is_invalid() {
        assert!(matches!(
            parse_grid("0:1:1"),
            Err(CliError::InvalidInput(_))
        ));
    }

    #[test]
    fn malformed_grid_is_invalid() {
        assert!(parse_grid("a:b:c").is_err());
        assert!(parse_grid("0:1").is_err());
    }
}
