//! Tracking a Bernoulli success probability with sticky updates.
//!
//! The tracker watches the running MLE p̂ₜ of an i.i.d. Bernoulli(p) stream
//! and republishes its committed estimate θ only when |p̂ₜ − θ| exceeds
//! b_t = (6λ/Γ)^{1/4}·√(σ̂*/t), the band that balances the λ-per-switch
//! cost against the Γ·(p̂−θ)² tracking loss. After a burn-in of t* steps
//! the noise scale σ̂* is frozen and the long-run theory gives closed-form
//! predictions for switch counts and cost rates, which the demo compares
//! with one simulated run.

use switchband::bernoulli::{
    ci_band, mean_predicted_cost_rate, optimal_band, predicted_switch_count, run_tracker,
    ObservationSource,
};
use switchband::model::BernoulliModel;

fn main() -> switchband::Result<()> {
    let p_true = 0.35;
    let horizon = 200_000;
    let lambda = 1e-5;
    let gamma = 1.0;
    let model = BernoulliModel::new(p_true, horizon, 0.01)?;
    let run = run_tracker(&model, lambda, gamma, &ObservationSource::Seeded(5), true)?;

    println!("Bernoulli(p = {p_true}) tracking, T = {horizon}, λ = {lambda}, Γ = {gamma}:");
    println!("  burn-in t*        {}", run.t_star);
    println!(
        "  σ̂* after burn-in  {:.5}  (√(p(1−p)) = {:.5})",
        run.sigma_star,
        (p_true * (1.0 - p_true)).sqrt()
    );
    println!("  final estimate    {:.5}", run.final_state.p_hat);
    println!("  final committed θ {:.5}", run.final_state.theta);

    // The optimal band shrinks like 1/√t, so it stays proportional to the
    // width of a fixed-size confidence interval; the matching test size
    // follows from b_t = z·σ̂*/√t.
    println!();
    println!("band vs a 95% confidence interval around p̂:");
    println!("{:>9} {:>11} {:>11}", "t", "b_t", "ci half-width");
    for t in [run.t_star, 4 * run.t_star, horizon] {
        let b = optimal_band(t, run.sigma_star, lambda, gamma)?;
        let (lo, hi) = ci_band(run.final_state.p_hat, t, 0.05)?;
        println!("{t:>9} {b:>11.6} {:>11.6}", (hi - lo) / 2.0);
    }

    let window = (horizon - run.t_star) as f64;
    let predicted_count = predicted_switch_count(run.t_star, horizon, run.sigma_star, lambda, gamma)?;
    let predicted_rate = mean_predicted_cost_rate(run.t_star, horizon, run.sigma_star, lambda, gamma);
    let observed_rate = run.ledger.total() / window;
    println!();
    println!("long-run predictions over (t*, T]:");
    println!(
        "  switches     observed {:>6}   predicted {:>8.1}",
        run.ledger.switch_count, predicted_count
    );
    println!(
        "  mean gap     observed {:>8.1}   predicted {:>8.1}",
        window / run.ledger.switch_count as f64,
        window / predicted_count
    );
    println!("  cost rate    observed {observed_rate:>10.3e}   predicted {predicted_rate:>10.3e}");

    let trajectory = run.trajectory.as_ref().expect("recorded trajectory");
    let first_switch = trajectory.iter().position(|s| s.switched).expect("a switch");
    println!();
    println!("trajectory around the first republication:");
    println!("{:>9} {:>9} {:>9} {:>10} {:>8}", "t", "p̂", "θ", "b_t", "switch");
    for step in &trajectory[first_switch.saturating_sub(2)..=first_switch + 2] {
        println!(
            "{:>9} {:>9.5} {:>9.5} {:>10.6} {:>8}",
            step.t,
            step.p_hat,
            step.theta,
            step.b_t,
            if step.switched { "yes" } else { "" }
        );
    }
    Ok(())
}
