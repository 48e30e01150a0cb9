//! Discrete-time tracking of a Bernoulli success probability under a
//! switching cost: maximum-likelihood estimation, the shrinking optimal
//! band b_t = (6λ/Γ)^{1/4}·√(σ̂*/t) with the scale frozen at the end of a
//! burn-in window, and the long-run cost/switch-rate predictions used to
//! check simulated runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::BernoulliModel;
use crate::normal::norm_quantile;
use crate::sim::CostLedger;

/// Running MLE state for the tracked success probability.
#[derive(Debug, Clone, Copy)]
pub struct TrackerState {
    /// Number of observations so far.
    pub t: u64,
    pub successes: u64,
    /// p̂_t = successes / t (0 before any observation).
    pub p_hat: f64,
    /// σ̂_t = √(p̂(1−p̂)).
    pub sigma_hat: f64,
    /// Currently published value.
    pub theta: f64,
}

impl TrackerState {
    pub fn new() -> Self {
        TrackerState {
            t: 0,
            successes: 0,
            p_hat: 0.0,
            sigma_hat: 0.0,
            theta: 0.0,
        }
    }
}

impl Default for TrackerState {
    fn default() -> Self {
        Self::new()
    }
}

/// Folds one observation into the MLE. Rejects anything outside {0, 1}.
pub fn mle_update(state: &TrackerState, y: u8) -> Result<TrackerState> {
    if y > 1 {
        return Err(Error::Domain(format!(
            "Bernoulli observation must be 0 or 1, got {y}"
        )));
    }
    let t = state.t + 1;
    let successes = state.successes + y as u64;
    let p_hat = successes as f64 / t as f64;
    Ok(TrackerState {
        t,
        successes,
        p_hat,
        sigma_hat: (p_hat * (1.0 - p_hat)).sqrt(),
        theta: state.theta,
    })
}

/// Shrinking band half-width b_t = (6λ/Γ)^{1/4}·√(σ*/t).
pub fn optimal_band(t: u64, sigma_star: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("band undefined at t = 0".into()));
    }
    if sigma_star <= 0.0 {
        return Err(Error::Domain("sigma_star must be positive".into()));
    }
    if lambda < 0.0 || gamma <= 0.0 {
        return Err(Error::Domain(
            "need lambda ≥ 0 and gamma > 0 for the band".into(),
        ));
    }
    Ok((6.0 * lambda / gamma).powf(0.25) * (sigma_star / t as f64).sqrt())
}

/// The constant χ in the 1/√t band profile b_t = χ·σ*/√t,
/// i.e. χ = (6λ/Γ)^{1/4}/√σ*.
pub fn band_profile_constant(sigma_star: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if sigma_star <= 0.0 {
        return Err(Error::Domain("sigma_star must be positive".into()));
    }
    if lambda < 0.0 || gamma <= 0.0 {
        return Err(Error::Domain(
            "need lambda ≥ 0 and gamma > 0 for the band".into(),
        ));
    }
    Ok((6.0 * lambda / gamma).powf(0.25) / sigma_star.sqrt())
}

/// Two-sided confidence band p₀ ± z_{α/2}·√(p₀(1−p₀)/t) for comparison
/// against the cost-derived band. α = 1 collapses to the point p₀.
pub fn ci_band(p0: f64, t: u64, alpha: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::Domain("p0 must lie in [0, 1]".into()));
    }
    if t == 0 {
        return Err(Error::Domain("confidence band undefined at t = 0".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain("alpha must lie in (0, 1]".into()));
    }
    let z = if alpha == 1.0 {
        0.0
    } else {
        norm_quantile(1.0 - alpha / 2.0)?
    };
    let half = z * (p0 * (1.0 - p0) / t as f64).sqrt();
    Ok((p0 - half, p0 + half))
}

/// Expected number of steps for the estimate to drift from the band center
/// to the edge: E[τ] = (t·b_t/σ*)², using the √t-rate of the MLE increments.
pub fn expected_hitting_time(t: u64, b_t: f64, sigma_star: f64) -> f64 {
    let ratio = t as f64 * b_t / sigma_star;
    ratio * ratio
}

/// Long-run per-step cost rate (σ*/t)·√(2λΓ/3) under the optimal band.
pub fn longrun_cost_rate(t: u64, lambda: f64, gamma: f64, sigma_star: f64) -> f64 {
    (sigma_star / t as f64) * (2.0 * lambda * gamma / 3.0).sqrt()
}

/// Triangular limit density g(ξ) = max(0, 1−|ξ|) of the rescaled error.
pub fn triangular_density(xi: f64) -> f64 {
    (1.0 - xi.abs()).max(0.0)
}

/// Predicted switch count over (t*, T]: Σ_t 1/E[τ | t] with the band and
/// hitting time evaluated along the schedule.
pub fn predicted_switch_count(
    t_star: u64,
    horizon: u64,
    sigma_star: f64,
    lambda: f64,
    gamma: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for t in (t_star + 1)..=horizon {
        let b = optimal_band(t, sigma_star, lambda, gamma)?;
        total += 1.0 / expected_hitting_time(t, b, sigma_star);
    }
    Ok(total)
}

/// Average of the predicted per-step cost rate over (t*, T].
pub fn mean_predicted_cost_rate(
    t_star: u64,
    horizon: u64,
    sigma_star: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let mut total = 0.0;
    for t in (t_star + 1)..=horizon {
        total += longrun_cost_rate(t, lambda, gamma, sigma_star);
    }
    total / (horizon - t_star) as f64
}

/// Where a tracker run gets its observations.
#[derive(Debug, Clone)]
pub enum ObservationSource {
    /// Draw Bernoulli(p_true) observations from a seeded stream.
    Seeded(u64),
    /// Replay a fixed sequence (must cover the full horizon).
    Fixed(Vec<u8>),
}

/// One recorded step of a tracker run (post-decision values).
#[derive(Debug, Clone, Copy)]
pub struct TrackerStep {
    pub t: u64,
    pub p_hat: f64,
    pub theta: f64,
    pub b_t: f64,
    pub xi: f64,
    pub switched: bool,
    pub cumulative_running_cost: f64,
    pub cumulative_switch_cost: f64,
}

/// Output of a full tracker run.
#[derive(Debug, Clone)]
pub struct TrackerRun {
    pub final_state: TrackerState,
    /// Scale frozen at the end of the burn-in window.
    pub sigma_star: f64,
    pub t_star: u64,
    pub ledger: CostLedger,
    /// Per-step records (only when requested).
    pub trajectory: Option<Vec<TrackerStep>>,
}

/// Runs the shrinking-band tracker over the model horizon.
///
/// The first t* observations only update the MLE; σ̂ is then frozen at
/// σ* = σ̂_{t*} (an error if the burn-in sample is degenerate) and the
/// published value starts at p̂_{t*}. After that, each step updates the
/// MLE, switches θ ← p̂ at cost λ whenever |p̂−θ| ≥ b_t, and accrues the
/// running cost Γ(p̂−θ)² on the post-decision error. Rescaled errors
/// ξ = (p̂−θ)/b_t are recorded post-decision, so switch steps contribute 0.
pub fn run_tracker(
    model: &BernoulliModel,
    lambda: f64,
    gamma: f64,
    source: &ObservationSource,
    record_trajectory: bool,
) -> Result<TrackerRun> {
    if lambda < 0.0 || gamma <= 0.0 {
        return Err(Error::Domain(
            "need lambda ≥ 0 and gamma > 0 to run the tracker".into(),
        ));
    }
    let horizon = model.horizon;
    let t_star = model.t_star();
    let mut rng = match source {
        ObservationSource::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        ObservationSource::Fixed(obs) => {
            if obs.len() < horizon as usize {
                return Err(Error::Domain(format!(
                    "fixed observation stream has {} entries, horizon needs {horizon}",
                    obs.len()
                )));
            }
            None
        }
    };
    let mut draw = |t: u64| -> u8 {
        match (&mut rng, source) {
            (Some(r), _) => (r.gen::<f64>() < model.p_true) as u8,
            (None, ObservationSource::Fixed(obs)) => obs[(t - 1) as usize],
            _ => unreachable!(),
        }
    };

    let mut state = TrackerState::new();
    for t in 1..=t_star {
        state = mle_update(&state, draw(t))?;
    }
    let sigma_star = state.sigma_hat;
    if sigma_star <= 0.0 {
        return Err(Error::Numerical(format!(
            "degenerate burn-in: sigma_hat = 0 at t* = {t_star} (all observations equal); \
             cannot freeze the band scale"
        )));
    }
    state.theta = state.p_hat;

    let mut ledger = CostLedger::default();
    let n_track = (horizon - t_star) as usize;
    ledger.xi_samples.reserve(n_track);
    let mut trajectory = record_trajectory.then(|| Vec::with_capacity(n_track));

    for t in (t_star + 1)..=horizon {
        state = mle_update(&state, draw(t))?;
        let b = optimal_band(t, sigma_star, lambda, gamma)?;
        let mut switched = false;
        let e = state.p_hat - state.theta;
        let hit = if lambda == 0.0 { e != 0.0 } else { e.abs() >= b };
        if hit {
            ledger.switch_cost += lambda;
            ledger.switch_count += 1;
            ledger.switch_times.push(t as f64);
            state.theta = state.p_hat;
            switched = true;
        }
        let err = state.p_hat - state.theta;
        ledger.running_cost += gamma * err * err;
        let xi = if b > 0.0 { err / b } else { 0.0 };
        ledger.xi_samples.push(xi);
        if let Some(rows) = trajectory.as_mut() {
            rows.push(TrackerStep {
                t,
                p_hat: state.p_hat,
                theta: state.theta,
                b_t: b,
                xi,
                switched,
                cumulative_running_cost: ledger.running_cost,
                cumulative_switch_cost: ledger.switch_cost,
            });
        }
    }

    Ok(TrackerRun {
        final_state: state,
        sigma_star,
        t_star,
        ledger,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mle_matches_running_fraction() {
        let mut s = TrackerState::new();
        for y in [1, 0, 1, 1, 0, 1, 1, 1, 0, 1] {
            s = mle_update(&s, y).unwrap();
        }
        assert_eq!(s.t, 10);
        assert_eq!(s.successes, 7);
        assert_relative_eq!(s.p_hat, 0.7, max_relative = 1e-15);
        assert_relative_eq!(s.sigma_hat, (0.7f64 * 0.3).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn mle_rejects_non_binary() {
        assert!(mle_update(&TrackerState::new(), 2).is_err());
    }

    #[test]
    fn band_spot_value() {
        // λ = 1e-4, Γ = 1, σ* = 0.5, t = 100.
        let b = optimal_band(100, 0.5, 1e-4, 1.0).unwrap();
        assert_relative_eq!(b, 0.011066819197003216, max_relative = 1e-12);
        assert_eq!(optimal_band(100, 0.5, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn band_quarters_when_time_quadruples() {
        let b1 = optimal_band(100, 0.5, 1e-4, 1.0).unwrap();
        let b4 = optimal_band(400, 0.5, 1e-4, 1.0).unwrap();
        assert_relative_eq!(b4 / b1, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn band_factorization_via_profile_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let lambda = 10f64.powf(rng.gen_range(-8.0..-1.0));
            let gamma = 10f64.powf(rng.gen_range(-1.0..1.0));
            let sigma = rng.gen_range(0.05..0.5);
            let t = rng.gen_range(10..1_000_000u64);
            let direct = optimal_band(t, sigma, lambda, gamma).unwrap();
            let chi = band_profile_constant(sigma, lambda, gamma).unwrap();
            let via_chi = chi * sigma / (t as f64).sqrt();
            assert_relative_eq!(direct, via_chi, max_relative = 1e-12);
        }
    }

    #[test]
    fn ci_band_spot_value() {
        let (lo, hi) = ci_band(0.5, 100, 0.05).unwrap();
        assert_relative_eq!(lo, 0.402002, max_relative = 1e-5);
        assert_relative_eq!(hi, 0.597998, max_relative = 1e-5);
        let (l1, h1) = ci_band(0.3, 100, 1.0).unwrap();
        assert_eq!((l1, h1), (0.3, 0.3), "alpha = 1 collapses the band");
        assert!(ci_band(0.5, 100, 0.0).is_err());
        assert!(ci_band(1.5, 100, 0.05).is_err());
    }

    #[test]
    fn hitting_time_spot_value() {
        let b = optimal_band(100, 0.5, 1e-4, 1.0).unwrap();
        let tau = expected_hitting_time(100, b, 0.5);
        assert_relative_eq!(tau, 4.898979485566356, max_relative = 1e-12);
        // Doubling the band quadruples the hitting time.
        assert_relative_eq!(
            expected_hitting_time(100, 2.0 * b, 0.5) / tau,
            4.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn cost_rate_spot_value_and_scaling() {
        let rate = longrun_cost_rate(100, 1e-4, 1.0, 0.5);
        assert_relative_eq!(rate, 4.082482904638631e-5, max_relative = 1e-12);
        assert_eq!(longrun_cost_rate(100, 0.0, 1.0, 0.5), 0.0);
        // Quadrupling λ doubles the rate.
        assert_relative_eq!(
            longrun_cost_rate(100, 4e-4, 1.0, 0.5) / rate,
            2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn cost_rate_splits_evenly_at_the_optimum() {
        // At the optimal band the switching and tracking shares of the
        // long-run rate are equal: λ/E[τ] = Γ·b_t²/6, each half the total.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let lambda = 10f64.powf(rng.gen_range(-8.0..-2.0));
            let gamma = 10f64.powf(rng.gen_range(-1.0..1.0));
            let sigma = rng.gen_range(0.05..0.5);
            let t: u64 = rng.gen_range(100..1_000_000);
            let b = optimal_band(t, sigma, lambda, gamma).unwrap();
            let switch_share = lambda / expected_hitting_time(t, b, sigma);
            let track_share = gamma * b * b / 6.0;
            let total = longrun_cost_rate(t, lambda, gamma, sigma);
            assert_relative_eq!(switch_share, track_share, max_relative = 1e-12);
            assert_relative_eq!(switch_share + track_share, total, max_relative = 1e-12);
        }
    }

    #[test]
    fn triangular_density_shape() {
        assert_eq!(triangular_density(0.0), 1.0);
        assert_eq!(triangular_density(1.0), 0.0);
        assert_eq!(triangular_density(-1.0), 0.0);
        assert_eq!(triangular_density(2.5), 0.0);
        // Variance of g is 1/6 (midpoint rule on a fine grid).
        let n = 200_000;
        let h = 2.0 / n as f64;
        let var: f64 = (0..n)
            .map(|i| {
                let x = -1.0 + (i as f64 + 0.5) * h;
                x * x * triangular_density(x) * h
            })
            .sum();
        assert_relative_eq!(var, 1.0 / 6.0, max_relative = 1e-8);
    }

    #[test]
    fn tracker_rejects_degenerate_burn_in() {
        let model = BernoulliModel::new(0.5, 1000, 0.01).unwrap();
        let obs = vec![0u8; 1000];
        let err = run_tracker(&model, 1e-4, 1.0, &ObservationSource::Fixed(obs), false);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn tracker_with_huge_cost_never_switches() {
        let model = BernoulliModel::new(0.5, 20_000, 0.05).unwrap();
        let run = run_tracker(&model, 1e9, 1.0, &ObservationSource::Seeded(5), false).unwrap();
        assert_eq!(run.ledger.switch_count, 0);
        assert!(run.ledger.running_cost > 0.0);
    }

    #[test]
    fn tracker_is_deterministic_given_seed() {
        let model = BernoulliModel::new(0.4, 50_000, 0.02).unwrap();
        let a = run_tracker(&model, 1e-5, 1.0, &ObservationSource::Seeded(42), false).unwrap();
        let b = run_tracker(&model, 1e-5, 1.0, &ObservationSource::Seeded(42), false).unwrap();
        assert_eq!(a.ledger.switch_count, b.ledger.switch_count);
        assert_eq!(a.ledger.running_cost.to_bits(), b.ledger.running_cost.to_bits());
        assert_eq!(a.sigma_star.to_bits(), b.sigma_star.to_bits());
    }

    #[test]
    fn theta_moves_only_at_switches() {
        let model = BernoulliModel::new(0.5, 30_000, 0.02).unwrap();
        let run = run_tracker(&model, 1e-5, 1.0, &ObservationSource::Seeded(8), true).unwrap();
        let rows = run.trajectory.unwrap();
        assert!(run.ledger.switch_count > 0, "want at least one switch");
        let mut prev_theta = rows[0].theta;
        for row in &rows[1..] {
            if !row.switched {
                assert_eq!(row.theta, prev_theta, "theta changed without a switch");
            } else {
                assert_eq!(row.theta, row.p_hat, "switch must republish the MLE");
                assert_eq!(row.xi, 0.0, "post-decision xi is 0 at a switch");
            }
            prev_theta = row.theta;
        }
    }

    #[test]
    fn switch_count_tracks_aggregated_prediction() {
        let model = BernoulliModel::new(0.5, 100_000, 0.01).unwrap();
        let lambda = 1e-4;
        let run = run_tracker(&model, lambda, 1.0, &ObservationSource::Seeded(12), false).unwrap();
        let predicted =
            predicted_switch_count(run.t_star, model.horizon, run.sigma_star, lambda, 1.0)
                .unwrap();
        let observed = run.ledger.switch_count as f64;
        assert!(
            (observed - predicted).abs() < 3.0 * predicted.sqrt(),
            "observed {observed} vs predicted {predicted}"
        );
    }

    #[test]
    fn late_band_ratio_between_switches_stays_near_one() {
        // Far past the burn-in the band changes slowly relative to the
        // inter-switch spacing: consecutive switch times t1 < t2 with
        // t1 > 10·t* have b_{t2}/b_{t1} within 10% of 1.
        let model = BernoulliModel::new(0.5, 200_000, 0.005).unwrap();
        let lambda = 1e-6;
        let run = run_tracker(&model, lambda, 1.0, &ObservationSource::Seeded(23), false).unwrap();
        let cutoff = 10.0 * run.t_star as f64;
        let mut checked = 0;
        for w in run.ledger.switch_times.windows(2) {
            if w[0] <= cutoff {
                continue;
            }
            let b1 = optimal_band(w[0] as u64, run.sigma_star, lambda, 1.0).unwrap();
            let b2 = optimal_band(w[1] as u64, run.sigma_star, lambda, 1.0).unwrap();
            let ratio = b2 / b1;
            assert!(
                (0.9..=1.1).contains(&ratio),
                "band ratio {ratio} at switches {w:?}"
            );
            checked += 1;
        }
        assert!(checked > 10, "too few late switch pairs ({checked})");
    }

    #[test]
    fn fixed_stream_replays_exactly() {
        let model = BernoulliModel::new(0.5, 1000, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let obs: Vec<u8> = (0..1000).map(|_| (rng.gen::<f64>() < 0.5) as u8).collect();
        let a = run_tracker(&model, 1e-4, 1.0, &ObservationSource::Fixed(obs.clone()), false)
            .unwrap();
        let b = run_tracker(&model, 1e-4, 1.0, &ObservationSource::Fixed(obs), false).unwrap();
        assert_eq!(a.ledger.running_cost.to_bits(), b.ledger.running_cost.to_bits());
        let short = run_tracker(
            &model,
            1e-4,
            1.0,
            &ObservationSource::Fixed(vec![1, 0, 1]),
            false,
        );
        assert!(short.is_err(), "stream shorter than the horizon must fail");
    }
}
