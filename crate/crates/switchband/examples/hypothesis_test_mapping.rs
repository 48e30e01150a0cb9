//! Reading the switching rule as a repeated two-sided z-test.
//!
//! Scaling the band by the posterior sd gives |x̂ − θ|/√Pₜ ≥ c with
//! c = (2λ/Γ)^{1/4}: switching is exactly rejecting H₀: μ = θ at critical
//! value c, so every switching cost λ corresponds to a test size
//! α = 2(1 − Φ(c)) and vice versa. The demo prints the mapping both ways
//! and shows how the effective α drifts when the observation quality A/√R
//! changes over time.

use nalgebra::{DMatrix, DVector};
use switchband::kalman::{FilterState, ScalarSchedule};
use switchband::model::{Coeff, LinearGaussianModel, PenaltySpec};
use switchband::policy::{cost_from_test_size, implied_test_size_path, test_size_from_cost};

fn main() -> switchband::Result<()> {
    println!("switching cost → test size (Γ = 1):");
    println!("{:>10} {:>10} {:>10} {:>12}", "λ", "c", "α", "confidence");
    for lambda in [1e-6, 1e-4, 1e-2, 0.5, 2.0] {
        let map = test_size_from_cost(lambda, 1.0)?;
        println!(
            "{lambda:>10.0e} {:>10.5} {:>10.5} {:>12.5}",
            map.critical_value, map.test_size, map.confidence_level
        );
    }

    println!();
    println!("test size → switching cost (Γ = 1), with the round trip:");
    println!("{:>8} {:>12} {:>14}", "α", "λ(α)", "α(λ(α))");
    for alpha in [0.01, 0.05, 0.1, 0.317310507862914] {
        let lambda = cost_from_test_size(alpha, 1.0)?;
        let back = test_size_from_cost(lambda, 1.0)?.test_size;
        println!("{alpha:>8.5} {lambda:>12.6} {back:>14.10}");
    }

    // A regime change in observation quality: A drops from 1 to 1/2 at
    // t = 5, so the test the policy implicitly runs becomes more lenient
    // (larger α) exactly when the data get worse.
    let model = LinearGaussianModel::new(
        Coeff::constant_scalar(0.0),
        Coeff::piecewise(
            vec![0.0, 5.0],
            vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 0.5),
            ],
        )?,
        Coeff::constant_scalar(0.0),
        Coeff::constant_scalar(1.0),
        DVector::zeros(1),
        DMatrix::from_element(1, 1, 1.0),
        10.0,
    )?;
    let penalty = PenaltySpec::scalar(1e-3, 1.0)?;
    let dt = 1e-3;
    let schedule = ScalarSchedule::build(&model, dt, 10_000)?;
    let states: Vec<FilterState> = [0.0, 2.5, 4.999, 5.0, 7.5, 10.0]
        .iter()
        .map(|&t| {
            let idx = (t / dt).round() as usize;
            FilterState {
                t: idx as f64 * dt,
                x_hat: DVector::zeros(1),
                p: DMatrix::from_element(1, 1, schedule.p[idx]),
                k_gain: DMatrix::from_element(1, 1, schedule.k[idx]),
                sigma: DMatrix::from_element(1, 1, schedule.sigma[idx]),
            }
        })
        .collect();
    let alphas = implied_test_size_path(&model, &states, &penalty)?;
    println!();
    println!("time-varying effective test size (A: 1 → 1/2 at t = 5, λ = 1e-3):");
    println!("{:>8} {:>10}", "t", "α_t");
    for (t, alpha) in alphas {
        println!("{t:>8.3} {alpha:>10.5}");
    }
    Ok(())
}
