//! Command-line front end: each subcommand runs one experiment kind from a
//! JSON config (or built-in defaults), with dotted-path overrides, and
//! writes a reproducible run directory.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for runtime
//! failures (numerical breakdowns, I/O, non-convergence).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use switchband::config::{apply_override, parse_config_file, ExperimentKind};
use switchband::experiment::run_experiment;
use switchband::{Error, Result};

#[derive(Parser)]
#[command(
    name = "switchband",
    version,
    about = "When to update a published estimate under a switching cost: \
             filters, inaction bands, Monte Carlo checks, and a DP oracle.",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic filter schedule (P, K, Σ, band), or filter a stream
    /// of observation increments.
    Filter(CommonArgs),
    /// Monte Carlo band-policy runs with per-path cost ledgers.
    Simulate(CommonArgs),
    /// Mean cost and band width across a λ grid, with log-log slopes.
    Scaling(CommonArgs),
    /// Rescaled-error histogram against the triangular reference density.
    Density(CommonArgs),
    /// Shrinking-band Bernoulli tracker with switch-rate predictions.
    Bernoulli(CommonArgs),
    /// Dynamic-programming oracle vs the closed-form band.
    DpOracle(CommonArgs),
    /// Convert a switching cost λ to a hypothesis-test size α, or back.
    TestSize(TestSizeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; omit to use the built-in defaults for this
    /// subcommand.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config value, e.g. --set penalty.lambda=1e-6
    /// (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// RNG seed; shorthand for --set sim.seed=N.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Output directory; shorthand for setting output.dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestSizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Switching cost to convert to a test size.
    #[arg(long, value_name = "LAMBDA")]
    lambda: Option<f64>,
    /// Tracking-cost curvature (default 1).
    #[arg(long, value_name = "GAMMA")]
    gamma: Option<f64>,
    /// Test size to convert to a switching cost.
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (kind, common, extra) = match cli.command {
        Command::Filter(c) => (ExperimentKind::Filter, c, Vec::new()),
        Command::Simulate(c) => (ExperimentKind::Simulate, c, Vec::new()),
        Command::Scaling(c) => (ExperimentKind::Scaling, c, Vec::new()),
        Command::Density(c) => (ExperimentKind::Density, c, Vec::new()),
        Command::Bernoulli(c) => (ExperimentKind::Bernoulli, c, Vec::new()),
        Command::DpOracle(c) => (ExperimentKind::DpOracle, c, Vec::new()),
        Command::TestSize(args) => {
            let mut extra = Vec::new();
            if let Some(l) = args.lambda {
                extra.push(format!("test_size.lambda={l}"));
            }
            if let Some(g) = args.gamma {
                extra.push(format!("test_size.gamma={g}"));
            }
            if let Some(a) = args.alpha {
                extra.push(format!("test_size.alpha={a}"));
            }
            (ExperimentKind::TestSize, args.common, extra)
        }
    };

    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot build a {n}-thread pool: {e}")))?;
    }

    let mut raw = match &common.config {
        Some(path) => parse_config_file(path)?,
        None => default_config(kind),
    };
    for assignment in &common.set {
        apply_override(&mut raw, assignment)?;
    }
    for assignment in &extra {
        apply_override(&mut raw, assignment)?;
    }
    check_kind(&raw, kind)?;
    if let Some(seed) = common.seed {
        apply_override(&mut raw, &format!("sim.seed={seed}"))?;
    }
    set_kind(&mut raw, kind);
    if let Some(out) = &common.out {
        set_output_dir(&mut raw, out);
    }

    let artifacts = run_experiment(&raw)?;
    if kind == ExperimentKind::TestSize {
        // The conversion is the whole point here; show it directly.
        println!(
            "{}",
            serde_json::to_string_pretty(&artifacts.summary).expect("summary serializes")
        );
    }
    println!("wrote {}", artifacts.dir.display());
    println!("config_hash {}", artifacts.config_hash);
    Ok(())
}

/// Rejects configs whose own `kind` disagrees with the subcommand.
fn check_kind(raw: &Value, kind: ExperimentKind) -> Result<()> {
    if let Some(Value::String(in_config)) = raw.get("kind") {
        if in_config != kind.as_str() {
            return Err(Error::Config(format!(
                "config says kind '{in_config}' but the subcommand is '{}'",
                kind.as_str()
            )));
        }
    }
    Ok(())
}

fn set_kind(raw: &mut Value, kind: ExperimentKind) {
    raw.as_object_mut()
        .expect("parse_config_file guarantees an object")
        .insert("kind".into(), json!(kind.as_str()));
}

fn set_output_dir(raw: &mut Value, dir: &Path) {
    let obj = raw
        .as_object_mut()
        .expect("parse_config_file guarantees an object");
    let output = obj.entry("output").or_insert_with(|| json!({}));
    if !output.is_object() {
        *output = json!({});
    }
    output
        .as_object_mut()
        .expect("just ensured an object")
        .insert("dir".into(), json!(dir.to_string_lossy()));
}

/// Built-in configs so every subcommand runs out of the box on the worked
/// scalar model (constant hidden state, unit-variance prior and noise).
fn default_config(kind: ExperimentKind) -> Value {
    match kind {
        ExperimentKind::Filter => json!({
            "model": {"horizon": 10.0},
            "penalty": {"lambda": 1e-4},
        }),
        ExperimentKind::Simulate => json!({
            "model": {"horizon": 10.0},
            "penalty": {"lambda": 1e-4},
            "sim": {"n_paths": 100},
        }),
        ExperimentKind::Scaling => json!({
            "model": {"horizon": 50.0},
            "penalty": {"lambda": 1e-3},
            "sim": {"dt": 1e-3, "n_paths": 200},
            "scaling": {"lambda_grid": [1e-3, 1e-4, 1e-5, 1e-6]},
        }),
        ExperimentKind::Density => json!({
            "bernoulli": {"p_true": 0.5, "horizon": 1_000_000u64, "burn_in_fraction": 0.01},
            "penalty": {"lambda": 1e-6},
        }),
        ExperimentKind::Bernoulli => json!({
            "bernoulli": {"p_true": 0.5, "horizon": 100_000u64, "burn_in_fraction": 0.01},
            "penalty": {"lambda": 1e-5},
        }),
        ExperimentKind::DpOracle => json!({
            "oracle": {"sigma": 800.0, "dt": 1.25e-5, "n_grid": 201, "horizon_steps": 10_000},
            "penalty": {"lambda": 1e-4},
        }),
        ExperimentKind::TestSize => json!({}),
    }
}
