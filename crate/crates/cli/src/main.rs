//! `droopcert`: transient-stability analysis of droop-controlled inverter
//! networks from the command line.
//!
//! Subcommands: `simulate` (post-fault trajectory CSV), `certify`
//! (LP-based invariance certificate), `margin` (stability-margin curve),
//! `screen` (line-failure criticality scores). Exit codes: 0 on success,
//! 1 when an analysis precondition fails (disconnected post-fault network,
//! no equilibrium, uncertifiable angles), 2 on input errors.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use droopcert_core::io::{
    load_case, load_tolerances, write_certificate, write_margin_csv, write_scores_csv,
    write_trajectory_csv,
};
use droopcert_core::{
    bundled_rts24, certify, disturbance, integrate, margin_curve, margin_u, screen_pairs,
    CaseData, GammaEnvelope, TorusState,
};

#[derive(Parser)]
#[command(
    name = "droopcert",
    about = "Transient-stability certification for droop-controlled inverter networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CaseArgs {
    /// Case file (TOML); the bundled IEEE RTS 24-bus case when omitted.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Lines to fail, as comma-separated bus-id pairs, e.g. `14-16,2-6`.
    #[arg(long, value_delimiter = ',')]
    remove_lines: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the post-fault trajectory from the pre-fault equilibrium.
    Simulate {
        #[command(flatten)]
        case: CaseArgs,
        /// Simulation horizon in seconds.
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Fixed integration step in seconds.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Output trajectory CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify post-fault invariance of the disturbed equilibrium.
    Certify {
        #[command(flatten)]
        case: CaseArgs,
        /// Uniform candidate angle bound in degrees.
        #[arg(long, conflicts_with = "gamma_auto")]
        gamma_deg: Option<f64>,
        /// Search for the best candidate envelope automatically.
        #[arg(long)]
        gamma_auto: bool,
        /// Optional TOML file overriding the case's operating tolerances.
        #[arg(long)]
        tol_file: Option<PathBuf>,
        /// Output certificate text file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the stability margin over uniform angle floors.
    Margin {
        #[command(flatten)]
        case: CaseArgs,
        /// Smallest angle floor in degrees.
        #[arg(long, default_value_t = 0.0)]
        alpha_min: f64,
        /// Largest angle floor in degrees.
        #[arg(long, default_value_t = 45.0)]
        alpha_max: f64,
        /// Number of grid points.
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Output margin CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every single and pairwise line failure.
    Screen {
        #[command(flatten)]
        case: CaseArgs,
        /// Latin hypercube test vectors per contingency.
        #[arg(long, default_value_t = 40)]
        samples: usize,
        /// RNG seed for the test vectors.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output score-matrix CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failures after argument parsing: input problems keep exit code 2,
/// analysis-precondition failures exit 1.
enum RunError {
    Input(String),
    Analysis(String),
}

impl RunError {
    fn code(&self) -> ExitCode {
        match self {
            RunError::Input(_) => ExitCode::from(2),
            RunError::Analysis(_) => ExitCode::from(1),
        }
    }
    fn message(&self) -> &str {
        match self {
            RunError::Input(m) | RunError::Analysis(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Input(e.to_string())
}

fn analysis<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Analysis(e.to_string())
}

fn load(case: &CaseArgs) -> Result<CaseData, RunError> {
    match &case.case {
        Some(path) => load_case(path).map_err(input),
        None => Ok(bundled_rts24()),
    }
}

/// Resolves `--remove-lines` bus-id pairs to canonical edge indices.
fn resolve_removals(case: &CaseData, specs: &[String]) -> Result<Vec<usize>, RunError> {
    let mut out = Vec::new();
    for spec in specs {
        let (a, b) = spec
            .split_once('-')
            .ok_or_else(|| input(format!("bad line spec `{spec}`: expected `from-to`")))?;
        let a: u64 = a.trim().parse().map_err(|_| {
            input(format!("bad line spec `{spec}`: `{a}` is not a bus id"))
        })?;
        let b: u64 = b.trim().parse().map_err(|_| {
            input(format!("bad line spec `{spec}`: `{b}` is not a bus id"))
        })?;
        let e = case
            .edge_between_buses(a, b)
            .ok_or_else(|| input(format!("no line between buses {a} and {b}")))?;
        out.push(e);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn pre_fault_equilibrium(case: &CaseData) -> Result<TorusState, RunError> {
    let n = case.model.node_count();
    let eq = case
        .model
        .solve_equilibrium(&TorusState::zeros(n))
        .map_err(analysis)?;
    Ok(eq.theta)
}

fn writer(path: &PathBuf) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| input(format!("cannot create {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Simulate {
            case,
            t_end,
            dt,
            out,
        } => {
            let data = load(&case)?;
            let removals = resolve_removals(&data, &case.remove_lines)?;
            let theta_pre = pre_fault_equilibrium(&data)?;
            let post = data.model.without_lines(&removals).map_err(input)?;
            if !post.network().is_connected() {
                return Err(analysis("post-fault network is disconnected"));
            }
            let traj = integrate(&post, &theta_pre, t_end, dt).map_err(analysis)?;
            write_trajectory_csv(&mut writer(&out)?, &traj).map_err(input)?;
            println!(
                "simulated {:.3} s ({} samples) -> {}",
                t_end,
                traj.len(),
                out.display()
            );
            Ok(())
        }
        Command::Certify {
            case,
            gamma_deg,
            gamma_auto,
            tol_file,
            out,
        } => {
            let data = load(&case)?;
            let removals = resolve_removals(&data, &case.remove_lines)?;
            let theta_pre = pre_fault_equilibrium(&data)?;
            let post = data.model.without_lines(&removals).map_err(input)?;
            if !post.network().is_connected() {
                return Err(analysis("post-fault network is disconnected"));
            }
            let n = post.node_count();
            let m = post.network().edge_count();
            let tol = match tol_file {
                Some(path) => {
                    let full = load_tolerances(&path, n, m).map_err(input)?;
                    keep_post_fault_edges(&data, &removals, full)
                }
                None => keep_post_fault_edges(&data, &removals, data.tolerances.clone()),
            };
            let dist = disturbance(&post, &theta_pre).map_err(analysis)?;
            let gamma = if gamma_auto {
                if dist.gamma0.iter().any(|&g| g > std::f64::consts::FRAC_PI_2) {
                    return Err(analysis(
                        "a post-fault angle gap already exceeds 90 degrees; no candidate envelope exists",
                    ));
                }
                let (_, witness) =
                    margin_u(&post, &dist.u, &dist.gamma0, 40, &[]).map_err(analysis)?;
                witness
            } else {
                let deg = gamma_deg.ok_or_else(|| {
                    input("one of --gamma-deg or --gamma-auto is required")
                })?;
                GammaEnvelope::uniform(m, deg.to_radians())
                    .map_err(|e| input(format!("bad --gamma-deg: {e}")))?
            };
            let cert = certify(&post, &dist, &gamma, &tol).map_err(analysis)?;
            let labels: Vec<String> = surviving_labels(&data, &removals);
            write_certificate(&mut writer(&out)?, &cert, &labels).map_err(input)?;
            println!(
                "delta0 = {:.4} Hz, v2 = {:.4} Hz, P1 {} -> {}",
                cert.delta0,
                cert.v2,
                if cert.verdicts.p1 {
                    "certified"
                } else {
                    "not certified"
                },
                out.display()
            );
            Ok(())
        }
        Command::Margin {
            case,
            alpha_min,
            alpha_max,
            points,
            out,
        } => {
            if points == 0 || alpha_max < alpha_min {
                return Err(input("need points >= 1 and alpha-max >= alpha-min"));
            }
            let data = load(&case)?;
            let removals = resolve_removals(&data, &case.remove_lines)?;
            let model = data.model.without_lines(&removals).map_err(input)?;
            if !model.network().is_connected() {
                return Err(analysis("network is disconnected after removals"));
            }
            let theta_pre = pre_fault_equilibrium(&data)?;
            let dist = disturbance(&model, &theta_pre).map_err(analysis)?;
            let alphas: Vec<f64> = (0..points)
                .map(|k| {
                    let frac = if points == 1 {
                        0.0
                    } else {
                        k as f64 / (points - 1) as f64
                    };
                    (alpha_min + frac * (alpha_max - alpha_min)).to_radians()
                })
                .collect();
            let curve = margin_curve(&model, &dist.u, &alphas, 40).map_err(analysis)?;
            write_margin_csv(&mut writer(&out)?, &curve).map_err(input)?;
            println!("{} margin points -> {}", curve.alphas.len(), out.display());
            Ok(())
        }
        Command::Screen {
            case,
            samples,
            seed,
            out,
        } => {
            let data = load(&case)?;
            if !case.remove_lines.is_empty() {
                return Err(input("screen operates on the intact case; drop --remove-lines"));
            }
            let theta_pre = pre_fault_equilibrium(&data)?;
            let result =
                screen_pairs(&data.model, &theta_pre, samples, seed).map_err(analysis)?;
            let labels: Vec<String> = (0..data.model.network().edge_count())
                .map(|e| data.edge_label(e))
                .collect();
            write_scores_csv(&mut writer(&out)?, &result, &labels).map_err(input)?;
            println!(
                "screened {} contingency pairs -> {}",
                labels.len() * (labels.len() + 1) / 2,
                out.display()
            );
            Ok(())
        }
    }
}

/// Restricts per-edge tolerances to the edges surviving the removals.
fn keep_post_fault_edges(
    case: &CaseData,
    removals: &[usize],
    tol: droopcert_core::ToleranceSet,
) -> droopcert_core::ToleranceSet {
    if removals.is_empty() {
        return tol;
    }
    let m = case.model.network().edge_count();
    let keep: Vec<usize> = (0..m).filter(|e| !removals.contains(e)).collect();
    if tol.gamma_bar.entries().len() == m {
        tol.restrict_edges(&keep)
    } else {
        tol
    }
}

fn surviving_labels(case: &CaseData, removals: &[usize]) -> Vec<String> {
    (0..case.model.network().edge_count())
        .filter(|e| !removals.contains(e))
        .map(|e| case.edge_label(e))
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
