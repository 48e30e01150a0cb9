//! Checking the closed-form band against an exact dynamic-programming oracle.
//!
//! On a long stationary discrete instance (constant Σ, Gaussian steps on a
//! symmetric grid) the backward induction is exact, so its mid-horizon
//! switching threshold and its value function V(0, 0) are ground truth.
//! The demo solves the oracle at three switching costs and shows two
//! facts: the asymptotic band's relative threshold error shrinks as λ → 0,
//! and the oracle never loses to the band policy it approximates.

use switchband::oracle::{build_problem, compare_to_asymptotic, solve_backward};
use switchband::policy::InactionPolicy;

fn main() -> switchband::Result<()> {
    let sigma = 800.0;
    let gamma = 1.0;
    let n_grid = 201;
    let horizon_steps = 10_000;
    let dt = 1.25e-5;

    println!("stationary oracle, Σ = {sigma}, Γ = {gamma}, {n_grid} grid points, {horizon_steps} steps:");
    println!(
        "{:>8} {:>10} {:>11} {:>9} {:>13} {:>13}",
        "λ", "band", "threshold", "rel err", "V_oracle(0)", "V_band(0)"
    );
    for lambda in [1e-2, 1e-4, 1e-6] {
        let problem = build_problem(sigma, lambda, gamma, n_grid, horizon_steps, dt)?;
        let solution = solve_backward(&problem);
        let policy = InactionPolicy::scalar(gamma, sigma, lambda)?;
        let report = compare_to_asymptotic(&problem, &solution, &policy)?;
        println!(
            "{lambda:>8.0e} {:>10.6} {:>11.6} {:>9.4} {:>13.6e} {:>13.6e}{}",
            report.asymptotic_band,
            report.oracle_threshold,
            report.rel_threshold_error,
            report.oracle_value_at_origin,
            report.band_policy_value_at_origin,
            if report.dominance_holds { "" } else { "   ← dominance violated!" }
        );
    }
    println!();
    println!("the threshold error decays because the free-boundary correction");
    println!("enters at a higher order in λ than the λ^{{1/4}} band itself.");
    Ok(())
}
