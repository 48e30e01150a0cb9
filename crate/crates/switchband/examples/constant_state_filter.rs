//! Filtering a constant hidden state from noisy observations.
//!
//! The worked scalar model (F = Q = 0, A = R = 1) admits a closed-form
//! posterior variance P(t) = 1/(1/P₀ + t), so it doubles as a self-check
//! for the Riccati integrator. The demo builds the deterministic filter
//! schedule, compares it with the closed form, then filters one simulated
//! observation path and reports how close the posterior mean lands to the
//! hidden state.

use switchband::kalman::{filter_step, FilterState, ScalarSchedule};
use switchband::model::{LinearGaussianModel, PenaltySpec};
use switchband::policy::band_halfwidth;
use switchband::sim::simulate_paths;

fn main() -> switchband::Result<()> {
    let horizon = 10.0;
    let dt = 1e-3;
    let n_steps = (horizon / dt) as usize;
    let model = LinearGaussianModel::example_one(1.0, horizon);
    let penalty = PenaltySpec::scalar(1e-4, 1.0)?;

    // Deterministic schedule: P, K, Σ on the grid, plus the band the
    // switching policy would use at each time.
    let schedule = ScalarSchedule::build(&model, dt, n_steps)?;
    println!("posterior variance vs closed form 1/(1+t), band for λ = 1e-4:");
    println!("{:>6} {:>12} {:>12} {:>12} {:>10}", "t", "P (RK4)", "P (exact)", "|diff|", "band");
    for t in [0.0, 1.0, 2.0, 5.0, 9.0] {
        let idx = (t / dt).round() as usize;
        let exact = 1.0 / (1.0 + t);
        let p = schedule.p[idx];
        let band = schedule.sigma[idx].powf(0.25) * (2.0 * penalty.lambda).powf(0.25);
        println!(
            "{t:>6.1} {p:>12.8} {exact:>12.8} {:>12.2e} {band:>10.6}",
            (p - exact).abs()
        );
    }

    // One observation path: the hidden state is frozen at X₀ ~ N(0, 1),
    // and the filter mean should approach it at rate √P(T).
    let paths = simulate_paths(&model, dt, n_steps, 1, 9)?;
    let path = &paths.paths[0];
    let mut state = FilterState::init(&model)?;
    for dy in &path.dy {
        state = filter_step(&model, &state, dy, dt)?;
    }
    let hidden = path.x.last().unwrap()[0];
    let band = band_halfwidth(&model, &state, &penalty)?;
    println!();
    println!("after one filtered path (seed 9):");
    println!("  hidden state      {hidden:>9.5}");
    println!("  posterior mean    {:>9.5}", state.x_hat[0]);
    println!("  posterior sd      {:>9.5}", state.p_scalar().sqrt());
    println!("  |error| / sd      {:>9.5}", (state.x_hat[0] - hidden).abs() / state.p_scalar().sqrt());
    println!("  final band width  {band:>9.5}");
    Ok(())
}
