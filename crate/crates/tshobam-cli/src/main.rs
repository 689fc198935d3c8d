//! Batch driver: load an experiment document, run one command, write
//! CSV/JSON artifacts into the output directory.
//!
//! Exit codes: 0 when the command's analytic claim holds, 1 when it fails
//! (hypotheses violated, no contraction, no certificate, envelope missed,
//! trajectory blow-up), 2 on usage or configuration errors. Every JSON
//! artifact embeds a manifest with the config hash, scan window, seed,
//! effective resolution, and tool version, so identical invocations are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use tshobam::analysis::{
    check_h3, decay_certificate, envelope_check, picard_solve, scan_bounds, AnalysisError,
    HypothesisFlag,
};
use tshobam::config::{randomized_history_exprs, ConfigError, ExperimentConfig};
use tshobam::exprlang::parse;
use tshobam::model::{ModelError, NetworkSpec};
use tshobam::simulate::{
    history_from_exprs, initial_history_window, simulate, stepanov_norm, wpaa0_profile, Channel,
    SimError, StepanovParams, Trajectory, WeightFunction, WeightKind,
};
use tshobam::timescale::TimeScale;

#[derive(Parser)]
#[command(name = "tshobam", version, about = "Delayed BAM network laboratory on time scales")]
struct Cli {
    /// Directory artifacts are written into.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override the config's seed for randomized histories.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scale's dense-segment sampling density.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan coefficient bounds and verify the standing hypotheses.
    Check { config: PathBuf },
    /// Construct the bounded solution by fixed-point iteration.
    Solve { config: PathBuf },
    /// March the network from its initial history.
    Simulate { config: PathBuf },
    /// Certify an exponential decay rate and test it on two trajectories.
    Stability { config: PathBuf },
    /// Almost-periodicity diagnostics of one simulated channel.
    Diagnose {
        config: PathBuf,
        /// Channel name: x<i>, y<j>, dx<i>, or dy<j> (1-based).
        #[arg(long, default_value = "x1")]
        channel: String,
        /// Windowed-mean exponent.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Windowed-mean window length.
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        /// Ergodic weight expression in t.
        #[arg(long, default_value = "1")]
        nu: String,
        /// Ergodic profile radii.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
        r_list: Vec<f64>,
    },
}

/// A failed run: what to print and which exit code to use.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn analytic(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonFinite { .. } => Failure::analytic(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::NoContraction { .. }
            | AnalysisError::NotStable { .. }
            | AnalysisError::MaxIterExceeded { .. }
            | AnalysisError::BracketFailure { .. } => Failure::analytic(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Config, derived objects, and effective overrides shared by all commands.
struct Loaded {
    cfg: ExperimentConfig,
    ts: TimeScale,
    net: NetworkSpec,
    seed: u64,
    manifest: serde_json::Value,
}

fn load(path: &Path, command: &str, seed: Option<u64>, resolution: Option<f64>) -> Result<Loaded, Failure> {
    let (cfg, bytes) = ExperimentConfig::from_path(path)?;
    let mut ts = cfg.timescale()?;
    if let Some(r) = resolution {
        if r <= 0.0 {
            return Err(Failure::usage(format!("--resolution must be positive, got {r}")));
        }
        ts = ts.with_resolution(r);
    }
    let net = cfg.network()?;
    net.validate(&ts, cfg.scan_window())?;
    let seed = seed.unwrap_or(cfg.run.seed);
    let digest = Sha256::digest(&bytes);
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = json!({
        "command": command,
        "config": path.display().to_string(),
        "config_sha256": hash,
        "resolution": ts.resolution(),
        "scan_window": [cfg.analysis.scan_window[0], cfg.analysis.scan_window[1]],
        "seed": seed,
        "tool_version": env!("CARGO_PKG_VERSION"),
    });
    Ok(Loaded { cfg, ts, net, seed, manifest })
}

fn write_json(out: &Path, name: &str, doc: &serde_json::Value) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| Failure::usage(format!("cannot serialize {name}: {e}")))?;
    text.push('\n');
    fs::write(out.join(name), text)?;
    Ok(())
}

fn write_csv(out: &Path, name: &str, content: Vec<u8>) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), content)?;
    Ok(())
}

fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    traj.to_csv(&mut buf)?;
    Ok(buf)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out = cli.out.clone();
    match &cli.command {
        Command::Check { config } => {
            let l = load(config, "check", cli.seed, cli.resolution)?;
            cmd_check(&l, &out)
        }
        Command::Solve { config } => {
            let l = load(config, "solve", cli.seed, cli.resolution)?;
            cmd_solve(&l, &out)
        }
        Command::Simulate { config } => {
            let l = load(config, "simulate", cli.seed, cli.resolution)?;
            cmd_simulate(&l, &out)
        }
        Command::Stability { config } => {
            let l = load(config, "stability", cli.seed, cli.resolution)?;
            cmd_stability(&l, &out)
        }
        Command::Diagnose { config, channel, p, l, nu, r_list } => {
            let loaded = load(config, "diagnose", cli.seed, cli.resolution)?;
            cmd_diagnose(&loaded, &out, channel, *p, *l, nu, r_list)
        }
    }
}

fn flag_line(name: &str, what: &str, flag: &HypothesisFlag) -> String {
    let verdict = if flag.pass { "pass" } else { "FAIL" };
    format!("{name} {what}: {verdict} ({})", flag.note)
}

fn cmd_check(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let bounds = scan_bounds(&l.net, &l.ts, l.cfg.scan_window(), l.cfg.analysis.density)?;
    let report = check_h3(&l.ts, &l.net, &bounds, l.cfg.network.r)?;
    let mut doc = serde_json::to_value(&report)
        .map_err(|e| Failure::usage(format!("cannot serialize report: {e}")))?;
    doc["manifest"] = l.manifest.clone();
    write_json(out, "check_report.json", &doc)?;
    println!("{}", flag_line("H1", "positive leakage rates", &report.h1));
    println!("{}", flag_line("H2", "activation Lipschitz data", &report.h2));
    println!("{}", flag_line("H3", "contraction constants", &report.h3));
    println!("{}", flag_line("H4", "delay admissibility", &report.h4));
    println!(
        "norm maximum {:.6} vs r = {}; Lipschitz maximum kappa = {:.6}",
        report.lhs_r, report.r, report.kappa
    );
    if report.all_pass() {
        Ok(())
    } else {
        let failing: Vec<&str> = [
            ("H1", &report.h1),
            ("H2", &report.h2),
            ("H3", &report.h3),
            ("H4", &report.h4),
        ]
        .iter()
        .filter(|(_, f)| !f.pass)
        .map(|(n, _)| *n)
        .collect();
        Err(Failure::analytic(format!("hypothesis check failed: {}", failing.join(", "))))
    }
}

fn cmd_solve(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let bounds = scan_bounds(&l.net, &l.ts, l.cfg.scan_window(), l.cfg.analysis.density)?;
    let report = check_h3(&l.ts, &l.net, &bounds, l.cfg.network.r)?;
    if !report.h1.pass {
        return Err(Failure::analytic(format!(
            "leakage rates are not uniformly positive: {}",
            report.h1.note
        )));
    }
    let slowest = bounds
        .alpha_inf
        .iter()
        .chain(&bounds.c_inf)
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let cutoff = l.cfg.picard_cutoff(slowest);
    let sol = picard_solve(
        &l.ts,
        &l.net,
        (0.0, l.cfg.run.horizon),
        report.kappa,
        l.cfg.analysis.tol,
        l.cfg.analysis.max_iter,
        cutoff,
    )?;
    write_csv(out, "solution.csv", trajectory_csv(&sol.trajectory)?)?;
    let steps: Vec<serde_json::Value> = sol
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| json!({ "iteration": i + 1, "ratio": s.ratio, "sup_diff": s.sup_diff }))
        .collect();
    let doc = json!({
        "converged": true,
        "cutoff": cutoff,
        "iterations": sol.steps.len(),
        "kappa": report.kappa,
        "manifest": l.manifest,
        "steps": steps,
        "tol": l.cfg.analysis.tol,
    });
    write_json(out, "solve_log.json", &doc)?;
    println!(
        "converged in {} iterations (kappa = {:.6}, final sup-difference {:.3e})",
        sol.steps.len(),
        report.kappa,
        sol.steps.last().map(|s| s.sup_diff).unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_simulate(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let init = l.cfg.initial_history(&l.ts, l.seed)?;
    let traj = simulate(&l.ts, &l.net, &init, l.cfg.run.horizon)?;
    write_csv(out, "trajectory.csv", trajectory_csv(&traj)?)?;
    let (n, m) = traj.layer_sizes();
    let doc = json!({
        "grid_points": traj.grid().len(),
        "horizon": l.cfg.run.horizon,
        "layers": [n, m],
        "manifest": l.manifest,
        "upper_bound": traj.upper_bound(),
    });
    write_json(out, "simulate_manifest.json", &doc)?;
    println!("{} grid points up to t = {:.6}", traj.grid().len(), traj.upper_bound());
    Ok(())
}

/// History with randomized component expressions; the stability test runs
/// two of these (seed and seed+1) regardless of any configured histories.
fn randomized_history(l: &Loaded, seed: u64) -> Result<Trajectory, Failure> {
    let window = initial_history_window(&l.ts, l.net.delays.theta);
    let (xs, ys) = randomized_history_exprs(l.net.n, l.net.m, seed);
    Ok(history_from_exprs(&l.ts, &xs, &ys, None, None, window)?)
}

fn cmd_stability(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let bounds = scan_bounds(&l.net, &l.ts, l.cfg.scan_window(), l.cfg.analysis.density)?;
    let cert = decay_certificate(
        &bounds,
        &l.net.activation,
        l.cfg.network.r,
        &l.ts,
        l.cfg.analysis.safety_fraction,
        l.cfg.analysis.beta,
    )?;
    let horizon = l.cfg.run.horizon;
    let traj_a = simulate(&l.ts, &l.net, &randomized_history(l, l.seed)?, horizon)?;
    let traj_b = simulate(&l.ts, &l.net, &randomized_history(l, l.seed + 1)?, horizon)?;
    let env = envelope_check(&l.ts, &cert, &traj_a, &traj_b, 0.0)?;
    let mut csv = String::from("t, deviation, bound\n");
    for p in &env.points {
        csv.push_str(&format!("{:.16e}, {:.16e}, {:.16e}\n", p.t, p.deviation, p.bound));
    }
    write_csv(out, "envelope.csv", csv.into_bytes())?;
    let cert_doc = serde_json::to_value(&cert)
        .map_err(|e| Failure::usage(format!("cannot serialize certificate: {e}")))?;
    let doc = json!({
        "certificate": cert_doc,
        "envelope": {
            "fitted_rate": env.fitted_rate,
            "fraction_within": env.fraction_within,
            "initial_norm": env.initial_norm,
            "points": env.points.len(),
        },
        "manifest": l.manifest,
    });
    write_json(out, "stability_certificate.json", &doc)?;
    println!(
        "decay rate gamma = {:.6} (overshoot K = {:.3e}); envelope held at {:.2}% of {} points, fitted rate {:.4}",
        cert.gamma,
        cert.k_overshoot,
        100.0 * env.fraction_within,
        env.points.len(),
        env.fitted_rate
    );
    if env.fraction_within < 1.0 {
        return Err(Failure::analytic(format!(
            "envelope violated at {:.4}% of grid points",
            100.0 * (1.0 - env.fraction_within)
        )));
    }
    Ok(())
}

fn parse_channel(s: &str, n: usize, m: usize) -> Result<Channel, Failure> {
    let bad = || Failure::usage(format!("unknown channel `{s}` (expected x<i>, y<j>, dx<i>, dy<j>)"));
    let digits = s.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
    let (prefix, num) = s.split_at(digits);
    let k: usize = num.parse().map_err(|_| bad())?;
    if k == 0 {
        return Err(bad());
    }
    match prefix {
        "x" if k <= n => Ok(Channel::X(k - 1)),
        "y" if k <= m => Ok(Channel::Y(k - 1)),
        "dx" if k <= n => Ok(Channel::XDelta(k - 1)),
        "dy" if k <= m => Ok(Channel::YDelta(k - 1)),
        _ => Err(bad()),
    }
}

fn cmd_diagnose(
    l: &Loaded,
    out: &Path,
    channel: &str,
    p: f64,
    len: f64,
    nu: &str,
    r_list: &[f64],
) -> Result<(), Failure> {
    if !(p >= 1.0) {
        return Err(Failure::usage(format!("--p must be at least 1, got {p}")));
    }
    if !(len > 0.0) {
        return Err(Failure::usage(format!("--l must be positive, got {len}")));
    }
    if l.cfg.run.horizon <= len {
        return Err(Failure::usage(format!(
            "horizon {} leaves no room for window length {len}",
            l.cfg.run.horizon
        )));
    }
    if r_list.is_empty() || r_list.iter().any(|r| !(*r > 0.0)) {
        return Err(Failure::usage("--r-list needs positive radii".to_string()));
    }
    let ch = parse_channel(channel, l.net.n, l.net.m)?;
    let weight = WeightFunction {
        expr: parse(nu).map_err(|e| Failure::usage(format!("--nu: {e}")))?,
        kind: WeightKind::General,
    };
    let init = l.cfg.initial_history(&l.ts, l.seed)?;
    let traj = simulate(&l.ts, &l.net, &init, l.cfg.run.horizon)?;
    let f = traj.channel_fn(ch);
    let norm = stepanov_norm(&l.ts, &f, StepanovParams { p, l: len }, (0.0, l.cfg.run.horizon))?;
    let profile = wpaa0_profile(&l.ts, &f, &weight, 0.0, r_list)?;
    let mut csv = String::from("r, w_r\n");
    for (r, w) in &profile {
        csv.push_str(&format!("{r:.16e}, {w:.16e}\n"));
    }
    write_csv(out, "wpaa0_profile.csv", csv.into_bytes())?;
    let doc = json!({
        "channel": channel,
        "manifest": l.manifest,
        "profile": profile.iter().map(|(r, w)| json!({ "r": r, "w": w })).collect::<Vec<_>>(),
        "stepanov": { "l": len, "norm": norm, "p": p },
        "weight": nu,
    });
    write_json(out, "diagnostics.json", &doc)?;
    let tail = profile.last().map(|(_, w)| *w).unwrap_or(0.0);
    println!("Stepanov norm = {norm:.6e}; ergodic mean at largest radius = {tail:.6e}");
    Ok(())
}
