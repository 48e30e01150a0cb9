//! Turns a parsed configuration into a run directory: dispatches on the
//! experiment kind, executes it, and writes `config.json`, `summary.json`,
//! and the kind-specific CSV files.
//!
//! Every artifact is deterministic: CSVs start with `# config_hash`,
//! `# seed`, and `# version` lines, JSON objects serialize with sorted
//! keys, and no timestamps or machine identifiers appear anywhere, so a
//! rerun with the same config produces byte-identical files.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde_json::{json, Map, Value};

use crate::bernoulli::{
    self, run_tracker, ObservationSource,
};
use crate::config::{
    config_hash, typed_config, without_output, BernoulliConfig, ExperimentConfig, ExperimentKind,
    ModelConfig, OracleConfig, PenaltyConfig, SimConfig,
};
use crate::error::{Error, Result};
use crate::kalman::{self, FilterState, ScalarSchedule};
use crate::model::{BernoulliModel, LinearGaussianModel, PenaltySpec};
use crate::oracle::{build_problem, build_problem_with_radius, compare_to_asymptotic, solve_backward};
use crate::policy::{cost_from_test_size, test_size_from_cost, InactionPolicy};
use crate::sim::{
    run_generic_paths, run_scalar_paths, scaling_study, stationary_density, CostLedger,
    XiRecording,
};

/// Where a finished run landed and what it computed.
#[derive(Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config_hash: String,
    pub kind: ExperimentKind,
    pub summary: Value,
}

/// A named output file plus its full contents.
type OutFile = (&'static str, String);

/// Executes the experiment described by `raw` (already-merged config) and
/// writes all artifacts. The output directory comes from `output.dir`,
/// defaulting to `runs/<kind>-<first 12 hash characters>`.
pub fn run_experiment(raw: &Value) -> Result<RunArtifacts> {
    let cfg = typed_config(raw)?;
    let kind = cfg.kind.ok_or_else(|| {
        Error::Config("config does not say what to run: set 'kind'".into())
    })?;
    let hash = config_hash(raw);
    let seed = cfg.sim.as_ref().and_then(|s| s.seed).unwrap_or(0);

    let (payload, files) = match kind {
        ExperimentKind::Filter => run_filter(&cfg, &hash, seed)?,
        ExperimentKind::Simulate => run_simulate(&cfg, &hash, seed)?,
        ExperimentKind::Scaling => run_scaling(&cfg, &hash, seed)?,
        ExperimentKind::Density => run_density(&cfg, &hash, seed)?,
        ExperimentKind::Bernoulli => run_bernoulli(&cfg, &hash, seed)?,
        ExperimentKind::DpOracle => run_dp_oracle(&cfg, &hash, seed)?,
        ExperimentKind::TestSize => run_test_size(&cfg)?,
    };

    let dir = match cfg.output.as_ref().and_then(|o| o.dir.clone()) {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from("runs").join(format!("{}-{}", kind.as_str(), &hash[..12])),
    };
    std::fs::create_dir_all(&dir)?;

    let mut summary = Map::new();
    summary.insert(
        "meta".into(),
        json!({
            "config_hash": hash,
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    );
    summary.insert("kind".into(), json!(kind.as_str()));
    if let Value::Object(entries) = payload {
        for (k, v) in entries {
            summary.insert(k, v);
        }
    }
    let summary = Value::Object(summary);

    let config_echo = serde_json::to_string_pretty(&without_output(raw))
        .expect("config value serializes");
    std::fs::write(dir.join("config.json"), config_echo + "\n")?;
    let summary_text =
        serde_json::to_string_pretty(&summary).expect("summary value serializes");
    std::fs::write(dir.join("summary.json"), summary_text + "\n")?;
    for (name, contents) in files {
        std::fs::write(dir.join(name), contents)?;
    }

    Ok(RunArtifacts {
        dir,
        config_hash: hash,
        kind,
        summary,
    })
}

// ---------------------------------------------------------------------------
// Config → runtime objects (failures here are configuration errors).

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::Config(format!("this experiment needs a '{name}' section")))
}

fn as_config_err(scope: &str, err: Error) -> Error {
    match err {
        Error::Config(msg) => Error::Config(format!("{scope}: {msg}")),
        other => Error::Config(format!("{scope}: {other}")),
    }
}

fn build_model(mc: &ModelConfig) -> Result<LinearGaussianModel> {
    let f = mc.f.to_coeff("model.f")?;
    let a = mc.a.to_coeff("model.a")?;
    let q = mc.q.to_coeff("model.q")?;
    let r = mc.r.to_coeff("model.r")?;
    let p0 = mc.p0.to_constant("model.p0")?;
    let x0 = match &mc.x0_mean {
        Some(v) => DVector::from_vec(v.clone()),
        None => DVector::zeros(p0.nrows()),
    };
    LinearGaussianModel::new(f, a, q, r, x0, p0, mc.horizon)
        .map_err(|e| as_config_err("model", e))
}

fn build_penalty(pc: &PenaltyConfig, state_dim: usize) -> Result<PenaltySpec> {
    let gamma = pc.gamma.to_constant("penalty.gamma")?;
    let gamma = if gamma.shape() == (1, 1) && state_dim > 1 {
        nalgebra::DMatrix::identity(state_dim, state_dim) * gamma[(0, 0)]
    } else {
        gamma
    };
    PenaltySpec::quadratic(pc.lambda, gamma).map_err(|e| as_config_err("penalty", e))
}

struct SimSettings {
    dt: f64,
    n_steps: usize,
    n_paths: usize,
}

fn sim_settings(sim: Option<&SimConfig>, horizon: f64) -> Result<SimSettings> {
    let dt = sim.and_then(|s| s.dt).unwrap_or(horizon / 1000.0);
    if !(dt > 0.0) {
        return Err(Error::Config(format!("sim.dt must be positive, got {dt}")));
    }
    let n_steps = (horizon / dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::Config(format!(
            "horizon {horizon} is shorter than one step of dt = {dt}"
        )));
    }
    let n_paths = sim.and_then(|s| s.n_paths).unwrap_or(100);
    if n_paths == 0 {
        return Err(Error::Config("sim.n_paths must be at least 1".into()));
    }
    Ok(SimSettings {
        dt,
        n_steps,
        n_paths,
    })
}

fn build_bernoulli(bc: &BernoulliConfig) -> Result<BernoulliModel> {
    BernoulliModel::new(bc.p_true, bc.horizon, bc.burn_in_fraction)
        .map_err(|e| as_config_err("bernoulli", e))
}

fn scalar_gamma(pc: &PenaltyConfig) -> Result<f64> {
    pc.gamma.as_scalar("penalty.gamma")
}

// ---------------------------------------------------------------------------
// CSV assembly.

fn csv_header(hash: &str, seed: u64, columns: &str) -> String {
    format!(
        "# config_hash={hash}\n# seed={seed}\n# version={}\n{columns}\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn push_fields(buf: &mut String, fields: &[String]) {
    buf.push_str(&fields.join(","));
    buf.push('\n');
}

fn num(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// Kind handlers. Each returns the summary payload (a JSON object) and the
// CSV files to write.

fn run_filter(cfg: &ExperimentConfig, hash: &str, seed: u64) -> Result<(Value, Vec<OutFile>)> {
    let model = build_model(require(&cfg.model, "model")?)?;
    let settings = sim_settings(cfg.sim.as_ref(), model.horizon)?;
    let scalar = model.state_dim() == 1 && model.obs_dim() == 1;
    let penalty = match &cfg.penalty {
        Some(pc) => Some(build_penalty(pc, model.state_dim())?),
        None => None,
    };
    let band_scale = match &penalty {
        Some(p) if scalar => {
            let gamma = p.gamma_scalar().map_err(|e| as_config_err("penalty", e))?;
            Some((2.0 * p.lambda / gamma).powf(0.25))
        }
        _ => None,
    };

    if let Some(obs_path) = &cfg.observations {
        if !scalar {
            return Err(Error::Config(
                "observation filtering is only wired up for scalar models".into(),
            ));
        }
        let increments = read_observation_file(Path::new(obs_path))?;
        let dt = settings.dt;
        let mut state = FilterState::init(&model)?;
        let columns = if band_scale.is_some() {
            "t,x_hat,p,k,sigma,band"
        } else {
            "t,x_hat,p,k,sigma"
        };
        let mut csv = csv_header(hash, seed, columns);
        let mut dy_buf = DVector::zeros(1);
        write_filter_row(&mut csv, &state, band_scale);
        for dy in &increments {
            dy_buf[0] = *dy;
            state = kalman::filter_step(&model, &state, &dy_buf, dt)?;
            write_filter_row(&mut csv, &state, band_scale);
        }
        let payload = json!({
            "dt": dt,
            "n_observations": increments.len(),
            "final_x_hat": state.x_hat[0],
            "final_p": state.p_scalar(),
        });
        return Ok((payload, vec![("filtered.csv", csv)]));
    }

    if scalar {
        let schedule = ScalarSchedule::build(&model, settings.dt, settings.n_steps)?;
        let columns = if band_scale.is_some() {
            "t,p,k,sigma,band"
        } else {
            "t,p,k,sigma"
        };
        let mut csv = csv_header(hash, seed, columns);
        for i in 0..=settings.n_steps {
            let mut fields = vec![
                num(i as f64 * settings.dt),
                num(schedule.p[i]),
                num(schedule.k[i]),
                num(schedule.sigma[i]),
            ];
            if let Some(scale) = band_scale {
                fields.push(num(schedule.sigma[i].powf(0.25) * scale));
            }
            push_fields(&mut csv, &fields);
        }
        let payload = json!({
            "dt": settings.dt,
            "n_steps": settings.n_steps,
            "final_p": schedule.p[settings.n_steps],
        });
        Ok((payload, vec![("schedule.csv", csv)]))
    } else {
        let mut state = FilterState::init(&model)?;
        let mut csv = csv_header(hash, seed, "t,p_trace,sigma_trace");
        push_fields(
            &mut csv,
            &[num(0.0), num(state.p.trace()), num(state.sigma.trace())],
        );
        for i in 0..settings.n_steps {
            let p = kalman::riccati_step(&model, &state, settings.dt)?;
            let t = (i + 1) as f64 * settings.dt;
            let (k_gain, sigma) = kalman::gain_and_sigma(&model, &p, t)?;
            state = FilterState {
                t,
                x_hat: state.x_hat,
                p,
                k_gain,
                sigma,
            };
            push_fields(
                &mut csv,
                &[num(t), num(state.p.trace()), num(state.sigma.trace())],
            );
        }
        let payload = json!({
            "dt": settings.dt,
            "n_steps": settings.n_steps,
            "final_p_trace": state.p.trace(),
        });
        Ok((payload, vec![("schedule.csv", csv)]))
    }
}

fn write_filter_row(csv: &mut String, state: &FilterState, band_scale: Option<f64>) {
    let mut fields = vec![
        num(state.t),
        num(state.x_hat[0]),
        num(state.p_scalar()),
        num(state.k_gain[(0, 0)]),
        num(state.sigma_scalar()),
    ];
    if let Some(scale) = band_scale {
        fields.push(num(state.sigma_scalar().powf(0.25) * scale));
    }
    push_fields(csv, &fields);
}

fn read_observation_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read observations {}: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) => out.push(v),
            // A single non-numeric first row is a column header.
            Err(_) if out.is_empty() && lineno < 4 => continue,
            Err(e) => {
                return Err(Error::Config(format!(
                    "{}:{}: bad observation '{line}': {e}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "{}: no observation increments found",
            path.display()
        )));
    }
    Ok(out)
}

fn ledger_stats(ledgers: &[CostLedger]) -> (f64, f64, f64) {
    let n = ledgers.len() as f64;
    let mean = ledgers.iter().map(|l| l.total()).sum::<f64>() / n;
    let var = ledgers
        .iter()
        .map(|l| {
            let d = l.total() - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let switches = ledgers.iter().map(|l| l.switch_count as f64).sum::<f64>() / n;
    (mean, var.sqrt(), switches)
}

fn run_simulate(cfg: &ExperimentConfig, hash: &str, seed: u64) -> Result<(Value, Vec<OutFile>)> {
    let model = build_model(require(&cfg.model, "model")?)?;
    let penalty = build_penalty(require(&cfg.penalty, "penalty")?, model.state_dim())?;
    let settings = sim_settings(cfg.sim.as_ref(), model.horizon)?;

    let ledgers = if model.state_dim() == 1 && model.obs_dim() == 1 {
        run_scalar_paths(
            &model,
            &penalty,
            settings.dt,
            settings.n_steps,
            settings.n_paths,
            seed,
            XiRecording::Off,
        )?
    } else {
        let sigma0 = FilterState::init(&model)?.sigma;
        let (policy, solution) =
            InactionPolicy::multivariate(&penalty.gamma, &sigma0, penalty.lambda)?;
        if !policy.converged {
            return Err(Error::Numerical(format!(
                "inaction-region solve did not converge (residual {:.3e}); \
                 cannot simulate a multivariate policy",
                solution.residual_norm
            )));
        }
        run_generic_paths(
            &model,
            &penalty,
            &policy,
            settings.dt,
            settings.n_steps,
            settings.n_paths,
            seed,
        )?
    };

    let mut csv = csv_header(
        hash,
        seed,
        "path,total_cost,running_cost,switch_cost,switch_count",
    );
    for (i, l) in ledgers.iter().enumerate() {
        push_fields(
            &mut csv,
            &[
                i.to_string(),
                num(l.total()),
                num(l.running_cost),
                num(l.switch_cost),
                l.switch_count.to_string(),
            ],
        );
    }
    let (mean, sd, switches) = ledger_stats(&ledgers);
    let payload = json!({
        "dt": settings.dt,
        "n_steps": settings.n_steps,
        "n_paths": settings.n_paths,
        "mean_total_cost": mean,
        "sd_total_cost": sd,
        "mean_switch_count": switches,
    });
    Ok((payload, vec![("paths.csv", csv)]))
}

fn run_scaling(cfg: &ExperimentConfig, hash: &str, seed: u64) -> Result<(Value, Vec<OutFile>)> {
    let model = build_model(require(&cfg.model, "model")?)?;
    let penalty = build_penalty(require(&cfg.penalty, "penalty")?, model.state_dim())?;
    let grid = &require(&cfg.scaling, "scaling")?.lambda_grid;
    let settings = sim_settings(cfg.sim.as_ref(), model.horizon)?;
    let report = scaling_study(&model, &penalty, grid, settings.dt, settings.n_paths, seed)?;

    let mut csv = csv_header(
        hash,
        seed,
        "lambda,mean_band,mean_total_cost,mean_switch_count",
    );
    for i in 0..report.lambda_grid.len() {
        push_fields(
            &mut csv,
            &[
                num(report.lambda_grid[i]),
                num(report.mean_band[i]),
                num(report.mean_total_cost[i]),
                num(report.mean_switch_count[i]),
            ],
        );
    }
    let mut payload = serde_json::to_value(&report).expect("report serializes");
    if let Value::Object(map) = &mut payload {
        map.insert("dt".into(), json!(settings.dt));
        map.insert("n_paths".into(), json!(settings.n_paths));
    }
    Ok((payload, vec![("scaling.csv", csv)]))
}

fn run_density(cfg: &ExperimentConfig, hash: &str, seed: u64) -> Result<(Value, Vec<OutFile>)> {
    let (samples, source) = if let Some(bc) = &cfg.bernoulli {
        let bmodel = build_bernoulli(bc)?;
        let pc = require(&cfg.penalty, "penalty")?;
        let gamma = scalar_gamma(pc)?;
        let run = run_tracker(
            &bmodel,
            pc.lambda,
            gamma,
            &ObservationSource::Seeded(seed),
            false,
        )?;
        (run.ledger.xi_samples, "bernoulli")
    } else if let Some(mc) = &cfg.model {
        let model = build_model(mc)?;
        let penalty = build_penalty(require(&cfg.penalty, "penalty")?, model.state_dim())?;
        let settings = sim_settings(cfg.sim.as_ref(), model.horizon)?;
        let stride = cfg
            .sim
            .as_ref()
            .and_then(|s| s.xi_stride)
            .unwrap_or(1)
            .max(1);
        let ledgers = run_scalar_paths(
            &model,
            &penalty,
            settings.dt,
            settings.n_steps,
            settings.n_paths,
            seed,
            XiRecording::EveryKth(stride),
        )?;
        let mut samples = Vec::new();
        for l in &ledgers {
            samples.extend_from_slice(&l.xi_samples);
        }
        (samples, "model")
    } else {
        return Err(Error::Config(
            "density needs either a 'bernoulli' or a 'model' section".into(),
        ));
    };

    let report = stationary_density(&samples)?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let variance = samples
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / samples.len() as f64;

    let mut csv = csv_header(hash, seed, "bin_lo,bin_hi,observed_mass,reference_mass");
    for i in 0..report.observed_mass.len() {
        push_fields(
            &mut csv,
            &[
                num(report.bin_edges[i]),
                num(report.bin_edges[i + 1]),
                num(report.observed_mass[i]),
                num(report.reference_mass[i]),
            ],
        );
    }
    let payload = json!({
        "source": source,
        "l1_distance": report.l1_distance,
        "n_samples": report.n_samples,
        "out_of_range": report.out_of_range,
        "xi_mean": mean,
        "xi_variance": variance,
    });
    Ok((payload, vec![("histogram.csv", csv)]))
}

fn run_bernoulli(cfg: &ExperimentConfig, hash: &str, seed: u64) -> Result<(Value, Vec<OutFile>)> {
    let bmodel = build_bernoulli(require(&cfg.bernoulli, "bernoulli")?)?;
    let pc = require(&cfg.penalty, "penalty")?;
    let gamma = scalar_gamma(pc)?;
    let run = run_tracker(
        &bmodel,
        pc.lambda,
        gamma,
        &ObservationSource::Seeded(seed),
        true,
    )?;
    let rows = run.trajectory.as_ref().expect("trajectory was requested");

    // Thin long trajectories but always keep switch rows.
    let stride = (rows.len() / 100_000).max(1);
    let mut csv = csv_header(
        hash,
        seed,
        "t,p_hat,theta,b_t,xi,switched,cost_running,cost_switch",
    );
    for (i, row) in rows.iter().enumerate() {
        if i % stride != 0 && !row.switched {
            continue;
        }
        push_fields(
            &mut csv,
            &[
                row.t.to_string(),
                num(row.p_hat),
                num(row.theta),
                num(row.b_t),
                num(row.xi),
                u8::from(row.switched).to_string(),
                num(row.cumulative_running_cost),
                num(row.cumulative_switch_cost),
            ],
        );
    }

    let tracked = (bmodel.horizon - run.t_star) as f64;
    let predicted_switches = bernoulli::predicted_switch_count(
        run.t_star,
        bmodel.horizon,
        run.sigma_star,
        pc.lambda,
        gamma,
    )?;
    let observed_rate = run.ledger.total() / tracked;
    let predicted_rate = bernoulli::mean_predicted_cost_rate(
        run.t_star,
        bmodel.horizon,
        run.sigma_star,
        pc.lambda,
        gamma,
    );
    let payload = json!({
        "t_star": run.t_star,
        "sigma_star": run.sigma_star,
        "final_p_hat": run.final_state.p_hat,
        "switch_count": run.ledger.switch_count,
        "predicted_switch_count": predicted_switches,
        "mean_interswitch_observed": tracked / (run.ledger.switch_count as f64).max(1.0),
        "mean_interswitch_predicted": tracked / predicted_switches,
        "running_cost": run.ledger.running_cost,
        "switch_cost": run.ledger.switch_cost,
        "mean_step_cost_observed": observed_rate,
        "mean_step_cost_predicted": predicted_rate,
        "trajectory_stride": stride,
    });
    Ok((payload, vec![("trajectory.csv", csv)]))
}

fn run_dp_oracle(cfg: &ExperimentConfig, hash: &str, seed: u64) -> Result<(Value, Vec<OutFile>)> {
    let oc: &OracleConfig = require(&cfg.oracle, "oracle")?;
    let pc = require(&cfg.penalty, "penalty")?;
    let gamma = scalar_gamma(pc)?;
    let problem = match oc.radius {
        Some(radius) => build_problem_with_radius(
            oc.sigma,
            pc.lambda,
            gamma,
            oc.n_grid,
            oc.horizon_steps,
            oc.dt,
            radius,
        ),
        None => build_problem(oc.sigma, pc.lambda, gamma, oc.n_grid, oc.horizon_steps, oc.dt),
    }
    .map_err(|e| as_config_err("oracle", e))?;
    let solution = solve_backward(&problem);
    let policy = InactionPolicy::scalar(gamma, oc.sigma, pc.lambda)
        .map_err(|e| as_config_err("oracle", e))?;
    let report = compare_to_asymptotic(&problem, &solution, &policy)?;

    let mut thresholds = csv_header(hash, seed, "step,threshold");
    for (step, th) in solution.thresholds.iter().enumerate() {
        let field = match th {
            Some(v) => num(*v),
            None => String::new(),
        };
        push_fields(&mut thresholds, &[step.to_string(), field]);
    }
    let mut values = csv_header(hash, seed, "e,value");
    for (g, v) in problem.grid.iter().zip(&solution.value[0]) {
        push_fields(&mut values, &[num(*g), num(*v)]);
    }

    let mut payload = serde_json::to_value(&report).expect("report serializes");
    if let Value::Object(map) = &mut payload {
        map.insert("n_grid".into(), json!(problem.grid.len()));
        map.insert("cell_width".into(), json!(problem.h));
        map.insert("radius".into(), json!(problem.grid[problem.grid.len() - 1]));
        map.insert("horizon_steps".into(), json!(problem.horizon));
        map.insert("dt".into(), json!(problem.dt));
        map.insert("sigma".into(), json!(problem.sigma));
    }
    Ok((
        payload,
        vec![("thresholds.csv", thresholds), ("value_at_start.csv", values)],
    ))
}

fn run_test_size(cfg: &ExperimentConfig) -> Result<(Value, Vec<OutFile>)> {
    let ts = cfg.test_size.clone().unwrap_or_default();
    let gamma = match (ts.gamma, &cfg.penalty) {
        (Some(g), _) => g,
        (None, Some(pc)) => scalar_gamma(pc)?,
        (None, None) => 1.0,
    };
    let lambda_in = ts.lambda.or_else(|| cfg.penalty.as_ref().map(|p| p.lambda));
    let lambda = match (lambda_in, ts.alpha) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either a switching cost (lambda) or a test size (alpha), not both"
                    .into(),
            ))
        }
        (Some(l), None) => l,
        (None, Some(alpha)) => {
            cost_from_test_size(alpha, gamma).map_err(|e| as_config_err("test_size", e))?
        }
        (None, None) => {
            return Err(Error::Config(
                "test-size needs either test_size.lambda or test_size.alpha".into(),
            ))
        }
    };
    let mapping =
        test_size_from_cost(lambda, gamma).map_err(|e| as_config_err("test_size", e))?;
    let mut payload = serde_json::to_value(&mapping).expect("mapping serializes");
    if let Value::Object(map) = &mut payload {
        map.insert("lambda".into(), json!(lambda));
        map.insert("gamma".into(), json!(gamma));
    }
    Ok((payload, Vec::new()))
}
