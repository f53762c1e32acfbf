//! Batch command-line front end.
//!
//! Each subcommand loads a scenario file, runs one pipeline stage, and
//! emits a UTF-8 CSV artifact on stdout with `#`-prefixed metadata lines
//! (the seed always among them, so plots are reproducible). Summaries go
//! to stderr, keeping stdout schema-stable for scripts. `--out DIR`
//! additionally writes the artifact as `<command>.csv` under `DIR`.
//!
//! Every command is deterministic given the scenario file, the seed, and
//! the flags. The process exits 0 on success; `table1` exits nonzero when
//! any gallery row misses its expected identifiable state.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::identifiability::{ident_report, reproduce_table, IdentError, UnknownsMask};
use crate::measurements::{generate, MeasurementError, NoiseSpec};
use crate::montecarlo::{crb_mc, McConfig};
use crate::scene::{load, MeasurementKind, SceneError, ScenarioFile};
use crate::signal::{beam_sweep_estimate, make_codebook, GridSpec, SignalError};
use crate::solvers::{solve, SolveError, SolveRequest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad argument: {what}")]
    BadArgs { what: String },
    #[error("scenario {path} fails validation:\n{list}")]
    InvalidScenario { path: String, list: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Ident(#[from] IdentError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("cannot write artifact: {0}")]
    Io(#[from] std::io::Error),
}

/// One `kind=value` noise override from the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaOverride {
    pub kind: MeasurementKind,
    pub sigma: f64,
}

impl FromStr for SigmaOverride {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind_s, value_s) = s
            .split_once('=')
            .ok_or_else(|| format!("expected KIND=VALUE, got {s:?}"))?;
        let kind = MeasurementKind::ALL
            .into_iter()
            .find(|k| k.as_str() == kind_s)
            .ok_or_else(|| {
                format!(
                    "unknown measurement kind {kind_s:?}; expected one of {}",
                    MeasurementKind::ALL.map(|k| k.as_str()).join(", ")
                )
            })?;
        let sigma: f64 = value_s
            .parse()
            .map_err(|_| format!("sigma for {kind_s} is not a number: {value_s:?}"))?;
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(format!("sigma for {kind_s} must be finite and >= 0, got {sigma}"));
        }
        Ok(SigmaOverride { kind, sigma })
    }
}

impl fmt::Display for SigmaOverride {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.kind, self.sigma)
    }
}

/// `X0,Y0,X1,Y1,STEP` candidate-grid bounds for the sweep command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridArg {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub step: f64,
}

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("not a number: {p:?}")))
            .collect::<Result<_, _>>()?;
        if parts.len() != 5 {
            return Err(format!("expected X0,Y0,X1,Y1,STEP (5 numbers), got {}", parts.len()));
        }
        let g = GridArg { x0: parts[0], y0: parts[1], x1: parts[2], y1: parts[3], step: parts[4] };
        if !(g.x1 > g.x0 && g.y1 > g.y0 && g.step > 0.0) {
            return Err("grid needs x1 > x0, y1 > y0, and a positive step".into());
        }
        Ok(g)
    }
}

/// Flags shared by every scenario-driven subcommand.
#[derive(Args, Debug, Clone)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Seed for synthesized noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise override as kind=value (seconds, radians, or Hz); repeatable.
    #[arg(long = "sigma", value_name = "KIND=VALUE")]
    pub sigma: Vec<SigmaOverride>,
    /// Directory to also write the CSV artifact into (as <command>.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(
    name = "risloc",
    version,
    about = "Simulate reflecting-surface localization scenes, solve them, and \
             report what the measurements can identify"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize seeded measurements for a scenario and emit them as CSV.
    Simulate(ScenarioArgs),
    /// Estimate the user state from synthesized measurements.
    Solve(ScenarioArgs),
    /// Information-rank report with per-coordinate variance bounds.
    Fim(ScenarioArgs),
    /// Check every gallery scene's identifiable state against the expected
    /// table; exits nonzero on any mismatch.
    Table1 {
        /// Directory holding the scenario gallery.
        #[arg(long, default_value = "scenarios")]
        dir: PathBuf,
        /// Directory to also write the CSV artifact into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the two-stage beam sweep over a candidate grid.
    Sweep {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Candidate grid as X0,Y0,X1,Y1,STEP in meters; the grid plane
        /// sits at the scenario truth's z.
        #[arg(long)]
        grid: GridArg,
        /// Beams per reflecting-surface codebook.
        #[arg(long, default_value_t = 63)]
        beams: usize,
        /// Azimuth span of each codebook in degrees, as A0,A1.
        #[arg(long, default_value = "-60,60", value_parser = parse_span)]
        az_span: (f64, f64),
        /// Complex-amplitude SNR in dB; omit for noiseless powers.
        #[arg(long)]
        snr_db: Option<f64>,
    },
    /// Monte-Carlo position RMSE against the variance bound over a noise
    /// ladder.
    CrbMc {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Trials per noise scale.
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// Noise-scale ladder (multipliers on the scenario sigmas).
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.01,0.0316,0.1,0.316,1.0"
        )]
        scales: Vec<f64>,
    },
}

fn parse_span(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A0,A1, got {s:?}"))?;
    let a0: f64 = a.trim().parse().map_err(|_| format!("not a number: {a:?}"))?;
    let a1: f64 = b.trim().parse().map_err(|_| format!("not a number: {b:?}"))?;
    if !(a1 > a0) {
        return Err("azimuth span needs A1 > A0".into());
    }
    Ok((a0, a1))
}

/// A finished command: the CSV artifact, a stderr summary, and the exit
/// code.
#[derive(Debug)]
pub struct CmdOutput {
    /// Artifact file stem (`<name>.csv` under `--out`).
    pub name: &'static str,
    pub csv: String,
    pub summary: String,
    pub exit_code: i32,
}

/// Run a parsed command line: print the artifact to stdout, the summary to
/// stderr, optionally write the artifact file, and return the exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    let out_dir = match &cli.command {
        Command::Simulate(a) | Command::Solve(a) | Command::Fim(a) => a.out.clone(),
        Command::Table1 { out, .. } => out.clone(),
        Command::Sweep { args, .. } | Command::CrbMc { args, .. } => args.out.clone(),
    };
    let output = dispatch(cli)?;
    print!("{}", output.csv);
    eprintln!("{}", output.summary);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}.csv", output.name));
        std::fs::write(&path, &output.csv)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(output.exit_code)
}

/// Execute the command and build its artifact without touching stdout.
pub fn dispatch(cli: Cli) -> Result<CmdOutput, CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Fim(args) => cmd_fim(&args),
        Command::Table1 { dir, .. } => cmd_table1(&dir),
        Command::Sweep { args, grid, beams, az_span, snr_db } => {
            cmd_sweep(&args, grid, beams, az_span, snr_db)
        }
        Command::CrbMc { args, trials, scales } => cmd_crb_mc(&args, trials, scales),
    }
}

/// Load the scenario, apply sigma overrides, and reject invalid scenes
/// with the violated rules listed.
fn load_checked(args: &ScenarioArgs) -> Result<ScenarioFile, CliError> {
    let mut sf = load(&args.scenario)?;
    for o in &args.sigma {
        sf.noise.set(o.kind, o.sigma);
    }
    let violations = sf.validate();
    if !violations.is_empty() {
        let list =
            violations.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n");
        return Err(CliError::InvalidScenario {
            path: args.scenario.display().to_string(),
            list,
        });
    }
    Ok(sf)
}

fn header(command: &str, args: &ScenarioArgs) -> String {
    let mut h = format!("# risloc {command}\n# scenario: {}\n", args.scenario.display());
    h.push_str(&format!("# seed: {}\n", args.seed));
    for o in &args.sigma {
        h.push_str(&format!("# sigma override: {o}\n"));
    }
    h
}

/// Residual weights for solving: the scenario sigmas where positive, the
/// defaults elsewhere (a zero sigma means exact synthesis, not an infinite
/// weight).
fn solver_weights(noise: &NoiseSpec) -> NoiseSpec {
    let mut w = NoiseSpec::default();
    for kind in MeasurementKind::ALL {
        let s = noise.sigma_for(kind);
        if s > 0.0 {
            w.set(kind, s);
        }
    }
    w
}

fn cmd_simulate(args: &ScenarioArgs) -> Result<CmdOutput, CliError> {
    let sf = load_checked(args)?;
    let set = generate(&sf.scenario, &sf.ue, &sf.noise, args.seed)?;
    let mut csv = header("simulate", args);
    csv.push_str(&set.to_csv());

    let mut counts: Vec<(MeasurementKind, usize)> = Vec::new();
    for kind in MeasurementKind::ALL {
        let n = set.items.iter().filter(|m| m.kind() == kind).count();
        if n > 0 {
            counts.push((kind, n));
        }
    }
    let breakdown =
        counts.iter().map(|(k, n)| format!("{k} {n}")).collect::<Vec<_>>().join(", ");
    let summary = format!("simulated {} measurements: {breakdown}", set.items.len());
    Ok(CmdOutput { name: "simulate", csv, summary, exit_code: 0 })
}

fn cmd_solve(args: &ScenarioArgs) -> Result<CmdOutput, CliError> {
    let sf = load_checked(args)?;
    let set = generate(&sf.scenario, &sf.ue, &sf.noise, args.seed)?;
    let mut req = SolveRequest::new(&sf.scenario, &set);
    req.weights = solver_weights(&sf.noise);
    let result = solve(&req)?;

    let mut csv = header("solve", args);
    csv.push_str(&format!("# candidates: {}\n", result.candidates.len()));
    for w in &result.warnings {
        csv.push_str(&format!("# warning: {w}\n"));
    }
    csv.push_str(&result.to_csv());

    let best = &result.candidates[0];
    let p = best.state.position;
    let summary = format!(
        "best of {} candidate(s): position ({:.4}, {:.4}, {:.4}) m, residual {:.3e}, {}",
        result.candidates.len(),
        p.x,
        p.y,
        p.z,
        best.residual_norm,
        if best.converged { "converged" } else { "not converged" },
    );
    Ok(CmdOutput { name: "solve", csv, summary, exit_code: 0 })
}

fn cmd_fim(args: &ScenarioArgs) -> Result<CmdOutput, CliError> {
    let sf = load_checked(args)?;
    let mask = UnknownsMask::from_mix(&sf.scenario.measurement_mix);
    let report = ident_report(&sf.scenario, &sf.ue, &sf.noise, mask)?;

    let mut csv = header("fim", args);
    csv.push_str(&format!("# verdict: {}\n", report.verdict));
    csv.push_str(&format!("# rank: {} of {}\n", report.total_rank, report.masked_dim));
    for w in &report.warnings {
        csv.push_str(&format!("# warning: {w}\n"));
    }
    csv.push_str("block,size,identifiable_dim,crb_0,crb_1,crb_2\n");
    for b in &report.blocks {
        let mut cells = [String::new(), String::new(), String::new()];
        for (i, v) in b.crb.iter().enumerate().take(3) {
            cells[i] = format!("{v}");
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.block, b.size, b.identifiable_dim, cells[0], cells[1], cells[2]
        ));
    }

    let summary = format!(
        "{}: rank {} of {} over {} block(s)",
        report.verdict,
        report.total_rank,
        report.masked_dim,
        report.blocks.len(),
    );
    Ok(CmdOutput { name: "fim", csv, summary, exit_code: 0 })
}

fn opt_dim(d: Option<usize>) -> String {
    match d {
        Some(n) => n.to_string(),
        None => "-".into(),
    }
}

fn cmd_table1(dir: &std::path::Path) -> Result<CmdOutput, CliError> {
    let rows = reproduce_table(dir)?;
    let matched = rows.iter().filter(|r| r.matches).count();

    let mut csv = format!("# risloc table1\n# gallery: {}\n", dir.display());
    csv.push_str(
        "row,label,file,expect_position,got_position,expect_clock,got_clock,\
         expect_velocity,got_velocity,expect_orientation,got_orientation,match\n",
    );
    for r in &rows {
        let e = &r.expectation;
        use crate::identifiability::Block;
        csv.push_str(&format!(
            "{},{:?},{},{},{},{},{},{},{},{},{},{}\n",
            e.row,
            e.label,
            e.file,
            e.position_dim,
            opt_dim(r.report.block_dim(Block::Position)),
            opt_dim(e.clock_dim),
            opt_dim(r.report.block_dim(Block::Clock)),
            opt_dim(e.velocity_dim),
            opt_dim(r.report.block_dim(Block::Velocity)),
            opt_dim(e.orientation_dim),
            opt_dim(r.report.block_dim(Block::Orientation)),
            r.matches,
        ));
    }
    csv.push_str(&format!("# {matched}/{} rows match\n", rows.len()));

    let summary = format!("{matched}/{} rows match", rows.len());
    let exit_code = if matched == rows.len() { 0 } else { 2 };
    Ok(CmdOutput { name: "table1", csv, summary, exit_code })
}

fn cmd_sweep(
    args: &ScenarioArgs,
    grid: GridArg,
    beams: usize,
    az_span_deg: (f64, f64),
    snr_db: Option<f64>,
) -> Result<CmdOutput, CliError> {
    let sf = load_checked(args)?;
    let s = &sf.scenario;
    let bs = s.bss.first().ok_or_else(|| CliError::BadArgs {
        what: "sweep needs a scenario with a base station feeding the surfaces".into(),
    })?;
    if s.riss.is_empty() {
        return Err(CliError::BadArgs {
            what: "sweep needs at least one reflecting surface".into(),
        });
    }
    let span = (az_span_deg.0.to_radians(), az_span_deg.1.to_radians());
    let mut codebooks = Vec::with_capacity(s.riss.len());
    for ris in &s.riss {
        let incoming = (bs.position - ris.center)
            .normalized()
            .map_err(|_| CliError::BadArgs {
                what: format!("base station coincides with surface {}", ris.id),
            })?;
        codebooks.push(make_codebook(ris, s.wavelength(), beams, span, Some(incoming))?);
    }
    let gspec = GridSpec::new(grid.x0, grid.y0, grid.x1, grid.y1, grid.step, sf.ue.position.z);
    let outcome = beam_sweep_estimate(s, &sf.ue, &codebooks, &gspec, snr_db, args.seed)?;

    let err = (outcome.estimate - sf.ue.position).norm();
    let mut csv = header("sweep", args);
    csv.push_str(&format!("# beams: {beams}\n"));
    match snr_db {
        Some(db) => csv.push_str(&format!("# snr_db: {db}\n")),
        None => csv.push_str("# snr_db: noiseless\n"),
    }
    csv.push_str(&format!(
        "# estimate: {},{},{}\n# truth: {},{},{}\n# error_m: {err}\n",
        outcome.estimate.x,
        outcome.estimate.y,
        outcome.estimate.z,
        sf.ue.position.x,
        sf.ue.position.y,
        sf.ue.position.z,
    ));
    csv.push_str(&outcome.power_map.to_csv());

    let summary = format!(
        "estimate ({:.3}, {:.3}, {:.3}) m; error {:.3} m over a {}x{} grid",
        outcome.estimate.x,
        outcome.estimate.y,
        outcome.estimate.z,
        err,
        outcome.power_map.nx,
        outcome.power_map.ny,
    );
    Ok(CmdOutput { name: "sweep", csv, summary, exit_code: 0 })
}

fn cmd_crb_mc(
    args: &ScenarioArgs,
    trials: usize,
    scales: Vec<f64>,
) -> Result<CmdOutput, CliError> {
    let sf = load_checked(args)?;
    let cfg = McConfig { trials, sigma_scales: scales, seed: args.seed };
    let report = crb_mc(&sf, &cfg)?;

    let mut csv = header("crb-mc", args);
    csv.push_str(&format!("# trials per scale: {trials}\n"));
    csv.push_str(&format!("# loglog slope: {}\n", report.slope));
    csv.push_str(&report.to_csv());

    let summary = format!(
        "{} scale(s) x {trials} trials; RMSE-vs-sigma log-log slope {:.3}",
        report.points.len(),
        report.slope,
    );
    Ok(CmdOutput { name: "crb-mc", csv, summary, exit_code: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::scene::{Antenna, Signaling};
    use std::path::PathBuf;

    fn gallery(file: &str) -> String {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../../scenarios")
            .join(file)
            .display()
            .to_string()
    }

    fn parse(argv: &[&str]) -> Cli {
        Cli::try_parse_from(argv).expect("argv parses")
    }

    #[test]
    fn simulate_is_deterministic_for_a_fixed_seed() {
        let argv = [
            "risloc",
            "simulate",
            "--scenario",
            &gallery("table1_row03_siso_2ris_1bs.toml"),
            "--seed",
            "7",
        ];
        let a = dispatch(parse(&argv)).expect("simulate runs");
        let b = dispatch(parse(&argv)).expect("simulate runs again");
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.exit_code, 0);
        assert!(a.csv.contains("# seed: 7\n"), "seed surfaced in metadata");
        let header_line = a
            .csv
            .lines()
            .find(|l| !l.starts_with('#'))
            .expect("has a data header");
        assert_eq!(header_line, "kind,node,ref_node,value1,value2,sigma,seed");
        assert!(a.summary.starts_with("simulated "));
    }

    #[test]
    fn zero_sigma_overrides_reproduce_the_forward_models() {
        let scenario = gallery("table1_row01_siso_4bs.toml");
        let mut argv = vec!["risloc", "simulate", "--scenario", &scenario, "--seed", "3"];
        let overrides = ["toa=0", "tdoa=0", "rtt=0", "aod=0", "aoa=0", "doppler=0"];
        for o in &overrides {
            argv.push("--sigma");
            argv.push(o);
        }
        let out = dispatch(parse(&argv)).expect("simulate runs");

        let sf = load(&scenario).expect("scenario loads");
        let exact = generate(&sf.scenario, &sf.ue, &NoiseSpec::noiseless(), 3)
            .expect("exact synthesis");
        let mut expected = String::from("kind,node,ref_node,value1,value2,sigma,seed\n");
        expected.push_str(exact.to_csv().lines().skip(1).collect::<Vec<_>>().join("\n").as_str());
        expected.push('\n');
        let got: String = out
            .csv
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n";
        assert_eq!(got, expected);
    }

    #[test]
    fn blocked_direct_paths_leave_no_direct_rows() {
        let sf = load(gallery("table1_row02_siso_1ris_1bs.toml")).expect("row 2 loads");
        let mut blocked = sf.clone();
        blocked.scenario.los_blocked = vec![blocked.scenario.bss[0].id.clone()];
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("blocked.toml");
        blocked.save(&path).expect("saves");

        let argv =
            ["risloc", "simulate", "--scenario", path.to_str().unwrap(), "--seed", "1"];
        let out = dispatch(parse(&argv)).expect("simulate runs");
        assert!(
            !out.csv.contains("direct:"),
            "no direct-path rows when the direct path is blocked"
        );
        assert!(out.csv.contains("refl:"), "reflected rows remain");
    }

    #[test]
    fn solve_emits_component_rows_and_a_best_candidate() {
        let argv = [
            "risloc",
            "solve",
            "--scenario",
            &gallery("table1_row01_siso_4bs.toml"),
            "--seed",
            "0",
        ];
        let out = dispatch(parse(&argv)).expect("solve runs");
        assert_eq!(out.exit_code, 0);
        let header_line = out
            .csv
            .lines()
            .find(|l| !l.starts_with('#'))
            .expect("has a data header");
        assert_eq!(header_line, "component,value,residual,converged,candidate_rank");
        for c in ["px", "py", "pz", "clock_m", "vx", "vy", "vz"] {
            assert!(
                out.csv.lines().any(|l| l.starts_with(&format!("{c},"))),
                "row for {c}"
            );
        }
        assert!(out.csv.contains("# candidates: "));
    }

    #[test]
    fn fim_reports_blocks_with_stable_columns() {
        let argv = [
            "risloc",
            "fim",
            "--scenario",
            &gallery("table1_row03_siso_2ris_1bs.toml"),
        ];
        let out = dispatch(parse(&argv)).expect("fim runs");
        assert!(out.csv.contains("# verdict: identifiable\n"));
        assert!(out.csv.contains("# rank: 6 of 6\n"));
        let header_line = out
            .csv
            .lines()
            .find(|l| !l.starts_with('#'))
            .expect("has a data header");
        assert_eq!(header_line, "block,size,identifiable_dim,crb_0,crb_1,crb_2");
        assert!(out.csv.lines().any(|l| l.starts_with("position,3,3,")));
        assert!(out.csv.lines().any(|l| l.starts_with("velocity,3,3,")));
    }

    #[test]
    fn table1_gallery_matches_and_exits_zero() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
        let out = cmd_table1(&dir).expect("table1 runs");
        assert_eq!(out.exit_code, 0, "gallery matches:\n{}", out.csv);
        assert_eq!(out.summary, "10/10 rows match");
        assert!(out.csv.contains("# 10/10 rows match\n"));
        assert_eq!(out.csv.lines().filter(|l| !l.starts_with('#')).count(), 11);
    }

    #[test]
    fn narrowband_scenes_asking_for_delays_are_refused_by_name() {
        let mut sf = load(gallery("table1_row03_siso_2ris_1bs.toml")).expect("row 3 loads");
        sf.scenario.measurement_mix.push(crate::scene::MeasurementKind::Tdoa);
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("nb_tdoa.toml");
        sf.save(&path).expect("saves");

        let argv = ["risloc", "solve", "--scenario", path.to_str().unwrap()];
        let err = dispatch(parse(&argv)).expect_err("validation rejects");
        let msg = err.to_string();
        assert!(
            msg.contains("tdoa needs wideband signaling"),
            "error names the rule: {msg}"
        );
    }

    #[test]
    fn sweep_grids_power_with_the_estimate_in_metadata() {
        let scenario = gallery("table1_row03_siso_2ris_1bs.toml");
        let sf = load(&scenario).expect("row 3 loads");
        let p = sf.ue.position;
        let grid = format!("{},{},{},{},0.5", p.x - 2.0, p.y - 2.0, p.x + 2.0, p.y + 2.0);
        let argv = [
            "risloc",
            "sweep",
            "--scenario",
            &scenario,
            "--grid",
            &grid,
            "--beams",
            "33",
        ];
        let out = dispatch(parse(&argv)).expect("sweep runs");
        let header_line = out
            .csv
            .lines()
            .find(|l| !l.starts_with('#'))
            .expect("has a data header");
        assert_eq!(header_line, "x,y,score");
        assert!(out.csv.contains("# estimate: "));
        let err_line = out
            .csv
            .lines()
            .find(|l| l.starts_with("# error_m: "))
            .expect("error metadata");
        let err: f64 = err_line.trim_start_matches("# error_m: ").parse().unwrap();
        assert!(err.is_finite());
        assert!(err <= 2.0 * 2.0_f64.sqrt(), "estimate lands on the grid near truth: {err}");
    }

    #[test]
    fn crb_mc_emits_one_row_per_scale() {
        let argv = [
            "risloc",
            "crb-mc",
            "--scenario",
            &gallery("table1_row01_siso_4bs.toml"),
            "--trials",
            "5",
            "--scales",
            "0.1,0.3",
            "--seed",
            "9",
        ];
        let a = dispatch(parse(&argv)).expect("crb-mc runs");
        let b = dispatch(parse(&argv)).expect("crb-mc runs again");
        assert_eq!(a.csv, b.csv, "deterministic for fixed flags");
        let header_line = a
            .csv
            .lines()
            .find(|l| !l.starts_with('#'))
            .expect("has a data header");
        assert_eq!(header_line, "sigma_scale,rmse_m,crb_m,trials,converged");
        assert_eq!(a.csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
        assert!(a.csv.contains("# loglog slope: "));
    }

    #[test]
    fn malformed_flags_are_rejected_at_parse_time() {
        assert!(Cli::try_parse_from([
            "risloc",
            "simulate",
            "--scenario",
            "x.toml",
            "--sigma",
            "bogus=1"
        ])
        .is_err());
        assert!(Cli::try_parse_from([
            "risloc",
            "simulate",
            "--scenario",
            "x.toml",
            "--sigma",
            "toa=abc"
        ])
        .is_err());
        assert!(Cli::try_parse_from([
            "risloc",
            "sweep",
            "--scenario",
            "x.toml",
            "--grid",
            "0,0,1,1"
        ])
        .is_err());
    }

    #[test]
    fn missing_scenario_files_error_with_the_path() {
        let argv = ["risloc", "fim", "--scenario", "/nonexistent/scene.toml"];
        let err = dispatch(parse(&argv)).expect_err("missing file");
        assert!(err.to_string().contains("/nonexistent/scene.toml"));
    }

    #[test]
    fn out_directory_receives_the_artifact_file() {
        let dir = tempfile::tempdir().expect("tempdir");
        let scenario = gallery("table1_row01_siso_4bs.toml");
        let argv = [
            "risloc",
            "simulate",
            "--scenario",
            &scenario,
            "--out",
            dir.path().to_str().unwrap(),
        ];
        let code = run(parse(&argv)).expect("run succeeds");
        assert_eq!(code, 0);
        let written = std::fs::read_to_string(dir.path().join("simulate.csv"))
            .expect("artifact written");
        assert!(written.contains("kind,node,ref_node,value1,value2,sigma,seed"));
    }

    #[test]
    fn scene_construction_helpers_keep_the_gallery_valid() {
        // The blocked-path and narrowband tests mutate scenes in memory;
        // make sure the mutations they rely on are representable round-trip.
        let sf = load(gallery("table1_row02_siso_1ris_1bs.toml")).expect("row 2 loads");
        assert!(matches!(sf.scenario.signaling, Signaling::Wideband { .. }));
        assert!(sf.scenario.bss[0].position != Vec3::ZERO);
        assert!(matches!(sf.scenario.ue_antenna, Antenna::Single | Antenna::Array { .. }));
    }
}
