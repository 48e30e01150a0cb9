//! Monte Carlo harness: simulates hidden/observation paths, runs the
//! filter + band-policy loop with cost accounting, and performs scaling
//! studies across the switching cost λ.
//!
//! Replications are embarrassingly parallel: every path owns an RNG stream
//! derived from (seed, path index), and aggregation is an order-preserving
//! reduction, so results are bit-identical for a given seed regardless of
//! thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kalman::{self, FilterState, ScalarSchedule};
use crate::model::{LinearGaussianModel, PenaltySpec, Rho};
use crate::policy::{band_halfwidth, should_switch, InactionPolicy};

/// Per-path cost accounting.
#[derive(Debug, Clone, Default)]
pub struct CostLedger {
    /// Accumulated running cost ∫ρ(x̂−θ)dt (left-endpoint rule on the
    /// post-decision error).
    pub running_cost: f64,
    /// λ × number of switches.
    pub switch_cost: f64,
    pub switch_count: u64,
    pub switch_times: Vec<f64>,
    /// Rescaled tracking errors ξ = (x̂−θ)/band recorded after each
    /// decision (0 at switch steps).
    pub xi_samples: Vec<f64>,
}

impl CostLedger {
    pub fn total(&self) -> f64 {
        self.running_cost + self.switch_cost
    }
}

/// One simulated path: hidden states on the grid and observation increments
/// between grid points.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub x: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
}

/// A batch of simulated paths sharing one time grid.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub dt: f64,
    pub paths: Vec<SimulatedPath>,
}

/// Derives the per-path RNG from the experiment seed and path index
/// (splitmix64 finalizer over the pair).
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut z = seed ^ path_index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Symmetric PSD square root via eigendecomposition; tolerates eigenvalues
/// down to −1e-12 (clamped to 0), rejects anything more negative.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-12 {
            return Err(Error::Numerical(format!(
                "matrix is not PSD (eigenvalue {v:.3e}); cannot draw noise"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&vals) * q.transpose())
}

fn draw_vector(rng: &mut ChaCha8Rng, sqrt_cov: &DMatrix<f64>, mean: Option<&DVector<f64>>) -> DVector<f64> {
    let d = sqrt_cov.nrows();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    match mean {
        Some(mu) => mu + sqrt_cov * z,
        None => sqrt_cov * z,
    }
}

fn simulate_one(
    model: &LinearGaussianModel,
    sqrt_p0: &DMatrix<f64>,
    dt: f64,
    n_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SimulatedPath> {
    let mut x = Vec::with_capacity(n_steps + 1);
    let mut dy = Vec::with_capacity(n_steps);
    let mut xc = draw_vector(rng, sqrt_p0, Some(&model.x0_mean));
    x.push(xc.clone());
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let f = model.f.at(t);
        let a = model.a.at(t);
        let sqrt_qdt = psd_sqrt(&(model.q.at(t) * dt))?;
        let sqrt_rdt = psd_sqrt(&(model.r.at(t) * dt))?;
        let dw = draw_vector(rng, &sqrt_qdt, None);
        let db = draw_vector(rng, &sqrt_rdt, None);
        dy.push(a * &xc * dt + db);
        xc = &xc + f * &xc * dt + dw;
        x.push(xc.clone());
    }
    Ok(SimulatedPath { x, dy })
}

/// Euler–Maruyama paths of the hidden state and observation process:
/// dX = F·X dt + dW (cov Q·dt), dY = A·X dt + dB (cov R·dt), with
/// X₀ ~ N(x0_mean, p0). Deterministic given the seed.
///
/// Paths are materialized; for long horizons with many paths prefer the
/// streaming engines (`run_scalar_paths`, `run_generic_paths`,
/// `scaling_study`) which never hold more than one path per worker.
pub fn simulate_paths(
    model: &LinearGaussianModel,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be positive".into()));
    }
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be ≥ 1".into()));
    }
    let sqrt_p0 = psd_sqrt(&model.p0)?;
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(seed, idx);
            simulate_one(model, &sqrt_p0, dt, n_steps, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathSet { dt, paths })
}

/// Simulates and runs the policy path by path without materializing the
/// whole batch; the observation streams are identical to `simulate_paths`
/// with the same seed. Works for any state dimension (multivariate models
/// need a converged policy).
pub fn run_generic_paths(
    model: &LinearGaussianModel,
    penalty: &PenaltySpec,
    policy: &InactionPolicy,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<CostLedger>> {
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be positive".into()));
    }
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be ≥ 1".into()));
    }
    let sqrt_p0 = psd_sqrt(&model.p0)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(seed, idx);
            let path = simulate_one(model, &sqrt_p0, dt, n_steps, &mut rng)?;
            run_policy(model, penalty, policy, &path, dt)
        })
        .collect()
}

/// Runs the filter + switch-policy loop over one path's observation
/// increments and returns the cost ledger.
///
/// Per step: the running cost ρ(x̂−θ)·dt accrues on the current
/// (post-decision) error, the filter advances on the next observation
/// increment, then the switch rule fires (paying λ and resetting θ ← x̂
/// when the error leaves the band). Scalar models use the time-varying
/// band; multivariate models require a converged M region.
pub fn run_policy(
    model: &LinearGaussianModel,
    penalty: &PenaltySpec,
    policy: &InactionPolicy,
    path: &SimulatedPath,
    dt: f64,
) -> Result<CostLedger> {
    let scalar = model.state_dim() == 1 && model.obs_dim() == 1;
    if !scalar && !policy.converged {
        return Err(Error::Domain(
            "multivariate run_policy requires a converged M region".into(),
        ));
    }
    if (policy.lambda - penalty.lambda).abs() > 1e-12 * penalty.lambda.max(1.0) {
        return Err(Error::Domain(
            "policy and penalty disagree on lambda".into(),
        ));
    }
    let mut state = FilterState::init(model)?;
    let mut theta = state.x_hat.clone();
    let mut ledger = CostLedger::default();
    let mut err_buf = &state.x_hat - &theta;
    for dy in &path.dy {
        ledger.running_cost += penalty.rho_eval(&err_buf) * dt;
        state = kalman::filter_step(model, &state, dy, dt)?;
        let (switch, band) = if scalar {
            let band = band_halfwidth(model, &state, penalty)?;
            let e = state.x_hat[0] - theta[0];
            let hit = if penalty.lambda == 0.0 {
                e != 0.0
            } else {
                e.abs() >= band
            };
            (hit, band)
        } else {
            (should_switch(policy, &state.x_hat, &theta), f64::NAN)
        };
        if switch {
            ledger.switch_cost += penalty.lambda;
            ledger.switch_count += 1;
            ledger.switch_times.push(state.t);
            theta.copy_from(&state.x_hat);
        }
        err_buf = &state.x_hat - &theta;
        if scalar && band > 0.0 {
            ledger.xi_samples.push(err_buf[0] / band);
        }
    }
    Ok(ledger)
}

/// How much of the rescaled-error trajectory to keep per path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiRecording {
    Off,
    /// Keep every k-th post-decision ξ sample.
    EveryKth(usize),
}

/// Streaming scalar engine: simulates, filters, and applies the band policy
/// in one pass per path, sharing the deterministic (P, K, Σ, band) schedule
/// across all paths. This is the workhorse behind `scaling_study` and the
/// `simulate`/`density` experiments for d = 1 models.
pub fn run_scalar_paths(
    model: &LinearGaussianModel,
    penalty: &PenaltySpec,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    xi: XiRecording,
) -> Result<Vec<CostLedger>> {
    if model.state_dim() != 1 || model.obs_dim() != 1 {
        return Err(Error::Dimension(
            "run_scalar_paths requires d = m = 1".into(),
        ));
    }
    let gamma = penalty.gamma_scalar()?;
    let lambda = penalty.lambda;
    let schedule = ScalarSchedule::build(model, dt, n_steps)?;
    let band_scale = (2.0 * lambda / gamma).powf(0.25);
    let band: Vec<f64> = schedule
        .sigma
        .iter()
        .map(|s| s.powf(0.25) * band_scale)
        .collect();
    let sqrt_dt = dt.sqrt();
    let quadratic = matches!(penalty.rho, Rho::Quadratic);
    let p0 = model.p0[(0, 0)].sqrt();
    let x0 = model.x0_mean[0];

    (0..n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = path_rng(seed, idx);
            let mut ledger = CostLedger::default();
            let mut scratch = DVector::zeros(1);
            let mut x: f64 = x0 + p0 * rng.sample::<f64, _>(StandardNormal);
            let mut x_hat: f64 = x0;
            let mut e: f64 = 0.0; // x̂ − θ, post-decision
            for k in 0..n_steps {
                let t = k as f64 * dt;
                let (f, a, q, r) = model.scalar_coeffs(t)?;
                if quadratic {
                    ledger.running_cost += gamma * e * e * dt;
                } else {
                    scratch[0] = e;
                    ledger.running_cost += penalty.rho_eval(&scratch) * dt;
                }
                let dw = q.sqrt() * sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                let db = r.sqrt() * sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                let dy = a * x * dt + db;
                let innovation = dy - a * x_hat * dt;
                let gain = schedule.k[k];
                let dx_hat = f * x_hat * dt + gain * innovation;
                x_hat += dx_hat;
                e += dx_hat;
                x += f * x * dt + dw;
                let b = band[k + 1];
                let hit = if lambda == 0.0 { e != 0.0 } else { e.abs() >= b };
                if hit {
                    ledger.switch_cost += lambda;
                    ledger.switch_count += 1;
                    ledger.switch_times.push(t + dt);
                    e = 0.0;
                }
                if let XiRecording::EveryKth(stride) = xi {
                    if b > 0.0 && (k + 1) % stride == 0 {
                        ledger.xi_samples.push(e / b);
                    }
                }
            }
            Ok(ledger)
        })
        .collect()
}

/// Scaling study over a λ grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScalingReport {
    pub lambda_grid: Vec<f64>,
    /// Time-averaged band half-width per λ (deterministic).
    pub mean_band: Vec<f64>,
    /// Mean total (running + switching) cost per λ.
    pub mean_total_cost: Vec<f64>,
    pub mean_switch_count: Vec<f64>,
    pub band_slope: f64,
    pub band_slope_se: f64,
    pub cost_slope: f64,
    pub cost_slope_se: f64,
}

fn log_log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let se = if xs.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, se)
}

/// Runs the band policy across a strictly decreasing λ grid (≥ 4 points
/// spanning ≥ 2 decades) and fits log-log slopes of the mean band and the
/// mean total cost against λ. The band slope is exactly 1/4 (deterministic
/// formula); the cost slope approaches 1/2 as λ → 0.
pub fn scaling_study(
    model: &LinearGaussianModel,
    penalty_base: &PenaltySpec,
    lambda_grid: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if lambda_grid.len() < 4 {
        return Err(Error::Domain(
            "lambda grid needs at least 4 points".into(),
        ));
    }
    if lambda_grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Domain(
            "lambda grid must be strictly decreasing".into(),
        ));
    }
    if lambda_grid[0] / lambda_grid[lambda_grid.len() - 1] < 100.0 {
        return Err(Error::Domain(
            "lambda grid must span at least two decades".into(),
        ));
    }
    if lambda_grid.iter().any(|&l| l <= 0.0) {
        return Err(Error::Domain("lambda grid must be positive".into()));
    }
    let gamma = penalty_base.gamma_scalar()?;
    let n_steps = (model.horizon / dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::Domain("horizon shorter than one step".into()));
    }

    // Σ^{1/4} time average is shared by every λ; the band then scales by
    // (2λ/Γ)^{1/4} exactly.
    let schedule = ScalarSchedule::build(model, dt, n_steps)?;
    let sigma_quarter_avg =
        schedule.sigma.iter().map(|s| s.powf(0.25)).sum::<f64>() / schedule.sigma.len() as f64;

    let mut mean_band = Vec::with_capacity(lambda_grid.len());
    let mut mean_total = Vec::with_capacity(lambda_grid.len());
    let mut mean_switches = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let penalty = PenaltySpec {
            lambda,
            gamma: penalty_base.gamma.clone(),
            rho: penalty_base.rho.clone(),
        };
        let ledgers = run_scalar_paths(
            model,
            &penalty,
            dt,
            n_steps,
            n_paths,
            seed,
            XiRecording::Off,
        )?;
        let total: f64 = ledgers.iter().map(|l| l.total()).sum::<f64>() / n_paths as f64;
        let switches: f64 =
            ledgers.iter().map(|l| l.switch_count as f64).sum::<f64>() / n_paths as f64;
        if ledgers.iter().all(|l| l.switch_count == 0) {
            return Err(Error::Numerical(format!(
                "no switches at lambda = {lambda:.3e}: grid too coarse for this horizon"
            )));
        }
        mean_band.push(sigma_quarter_avg * (2.0 * lambda / gamma).powf(0.25));
        mean_total.push(total);
        mean_switches.push(switches);
    }

    let (band_slope, band_slope_se) = log_log_fit(lambda_grid, &mean_band);
    let (cost_slope, cost_slope_se) = log_log_fit(lambda_grid, &mean_total);
    Ok(ScalingReport {
        lambda_grid: lambda_grid.to_vec(),
        mean_band,
        mean_total_cost: mean_total,
        mean_switch_count: mean_switches,
        band_slope,
        band_slope_se,
        cost_slope,
        cost_slope_se,
    })
}

/// Histogram comparison of rescaled tracking errors against the triangular
/// reference density g(ξ) = 1−|ξ|.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DensityReport {
    pub bin_edges: Vec<f64>,
    /// Observed probability mass per bin (normalized by all samples,
    /// including any that fall outside [−1, 1]).
    pub observed_mass: Vec<f64>,
    /// Reference mass per bin under g.
    pub reference_mass: Vec<f64>,
    pub l1_distance: f64,
    pub n_samples: usize,
    pub out_of_range: usize,
}

const DENSITY_BINS: usize = 50;

/// 50-bin histogram of ξ samples on [−1, 1] against the triangular density,
/// compared by total-variation-style L1 distance on bin masses. Requires at
/// least 1e5 samples.
pub fn stationary_density(xi_samples: &[f64]) -> Result<DensityReport> {
    if xi_samples.len() < 100_000 {
        return Err(Error::Domain(format!(
            "stationary density needs ≥ 1e5 samples, got {}",
            xi_samples.len()
        )));
    }
    let n = DENSITY_BINS;
    let width = 2.0 / n as f64;
    let edges: Vec<f64> = (0..=n).map(|i| -1.0 + i as f64 * width).collect();
    let mut counts = vec![0u64; n];
    let mut out = 0usize;
    for &x in xi_samples {
        if !(-1.0..1.0).contains(&x) {
            if x == 1.0 {
                counts[n - 1] += 1; // right-closed final bin
            } else {
                out += 1;
            }
            continue;
        }
        let idx = (((x + 1.0) / width) as usize).min(n - 1);
        counts[idx] += 1;
    }
    let total = xi_samples.len() as f64;
    let observed: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    // ∫(1−|ξ|)dξ over a bin, via the antiderivative G(x) = x − x|x|/2.
    let g = |x: f64| x - x * x.abs() / 2.0;
    let reference: Vec<f64> = (0..n).map(|i| g(edges[i + 1]) - g(edges[i])).collect();
    let l1 = observed
        .iter()
        .zip(&reference)
        .map(|(o, r)| (o - r).abs())
        .sum::<f64>()
        + out as f64 / total;
    Ok(DensityReport {
        bin_edges: edges,
        observed_mass: observed,
        reference_mass: reference,
        l1_distance: l1,
        n_samples: xi_samples.len(),
        out_of_range: out,
    })
}

/// Draws one sample from the triangular density by inverse CDF.
pub fn sample_triangular(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen();
    if u < 0.5 {
        (2.0 * u).sqrt() - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).sqrt()
    }
}
