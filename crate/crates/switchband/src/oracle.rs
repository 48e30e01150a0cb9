//! Finite-horizon dynamic-programming oracle for the scalar switching
//! problem: the filtered tracking error is discretized to a symmetric grid,
//! its Gaussian step transitions to a row-stochastic kernel (tail mass
//! folded into the end cells), and backward induction yields the exact
//! optimal value and switching thresholds. Used to measure how close the
//! closed-form band policy comes to optimal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal::norm_cdf;
use crate::policy::InactionPolicy;

/// Discretized control problem: kill the error (pay λ, jump to 0) or keep
/// tracking (pay Γe²·dt for the step) while e performs a Gaussian walk with
/// per-step variance Σ·dt.
#[derive(Debug, Clone)]
pub struct DiscreteControlProblem {
    /// Cell centers, symmetric about 0 (odd count, exact negation pairs).
    pub grid: Vec<f64>,
    /// Cell width.
    pub h: f64,
    /// Index of the center cell (e = 0).
    pub mid: usize,
    /// Number of decision steps.
    pub horizon: usize,
    pub dt: f64,
    /// Error-variance rate Σ; the per-step walk variance is Σ·dt.
    pub sigma: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Row-stochastic one-step transition kernel between cells.
    pub kernel: DMatrix<f64>,
}

/// Asymptotic band half-width (2λΣ/Γ)^{1/4} for the problem's parameters.
fn asymptotic_band(sigma: f64, lambda: f64, gamma: f64) -> f64 {
    (2.0 * lambda * sigma / gamma).powf(0.25)
}

impl DiscreteControlProblem {
    pub fn asymptotic_band(&self) -> f64 {
        asymptotic_band(self.sigma, self.lambda, self.gamma)
    }
}

fn validate_common(
    sigma: f64,
    lambda: f64,
    gamma: f64,
    n_grid: usize,
    horizon: usize,
    dt: f64,
) -> Result<()> {
    if sigma < 0.0 {
        return Err(Error::Domain("sigma must be nonnegative".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Domain("lambda must be nonnegative".into()));
    }
    if gamma <= 0.0 {
        return Err(Error::Domain("gamma must be positive".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be positive".into()));
    }
    if n_grid < 51 {
        return Err(Error::Domain(format!(
            "grid needs at least 51 cells for a usable resolution, got {n_grid}"
        )));
    }
    if n_grid % 2 == 0 {
        return Err(Error::Domain(format!(
            "grid must have an odd cell count so 0 is a cell center, got {n_grid}"
        )));
    }
    if horizon < 100 {
        return Err(Error::Domain(format!(
            "horizon must be at least 100 steps, got {horizon}"
        )));
    }
    Ok(())
}

/// Builds the discrete problem with the default radius of 5 band
/// half-widths (falling back to 10 step standard deviations when λ = 0
/// makes the band zero).
pub fn build_problem(
    sigma: f64,
    lambda: f64,
    gamma: f64,
    n_grid: usize,
    horizon: usize,
    dt: f64,
) -> Result<DiscreteControlProblem> {
    validate_common(sigma, lambda, gamma, n_grid, horizon, dt)?;
    let band = asymptotic_band(sigma, lambda, gamma);
    let step_std = (sigma * dt).sqrt();
    let mut radius = 5.0 * band;
    if radius <= 0.0 {
        radius = if step_std > 0.0 { 10.0 * step_std } else { 1.0 };
    }
    build_with_checked_radius(sigma, lambda, gamma, n_grid, horizon, dt, radius)
}

/// Same as `build_problem` but with an explicit grid radius; rejects radii
/// that cover fewer than 5 band half-widths.
pub fn build_problem_with_radius(
    sigma: f64,
    lambda: f64,
    gamma: f64,
    n_grid: usize,
    horizon: usize,
    dt: f64,
    radius: f64,
) -> Result<DiscreteControlProblem> {
    validate_common(sigma, lambda, gamma, n_grid, horizon, dt)?;
    if !(radius > 0.0) {
        return Err(Error::Domain("grid radius must be positive".into()));
    }
    let needed = 5.0 * asymptotic_band(sigma, lambda, gamma);
    if radius < needed {
        return Err(Error::Domain(format!(
            "grid radius {radius:.6} covers fewer than 5 band half-widths (need ≥ {needed:.6})"
        )));
    }
    build_with_checked_radius(sigma, lambda, gamma, n_grid, horizon, dt, radius)
}

fn build_with_checked_radius(
    sigma: f64,
    lambda: f64,
    gamma: f64,
    n_grid: usize,
    horizon: usize,
    dt: f64,
    radius: f64,
) -> Result<DiscreteControlProblem> {
    let n = n_grid;
    let mid = (n - 1) / 2;
    let h = 2.0 * radius / (n - 1) as f64;
    // Centered construction keeps the grid an exact negation-symmetric set
    // with grid[mid] == 0.0.
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 - mid as f64) * h).collect();
    let step_std = (sigma * dt).sqrt();

    let mut kernel = DMatrix::<f64>::zeros(n, n);
    if step_std == 0.0 {
        kernel.fill_with_identity();
    } else {
        // Interior cell edges: midpoint between adjacent centers; the outer
        // edges sit at ±∞ so each row's tail mass folds into its end cell
        // and rows stay stochastic.
        for i in mid..n {
            let mut prev = 0.0; // Φ(−∞)
            for j in 0..n {
                let cdf = if j + 1 == n {
                    1.0 // Φ(+∞)
                } else {
                    let edge = grid[j] + 0.5 * h;
                    norm_cdf((edge - grid[i]) / step_std)
                };
                kernel[(i, j)] = cdf - prev;
                prev = cdf;
            }
        }
        // Mirror so the kernel is symmetric to the last bit: the center row
        // is its own reverse, every other lower row is its upper partner
        // reversed. (Without this the far tails differ at the denormal
        // level, since Φ(−x) and 1−Φ(x) round differently.)
        for j in 0..mid {
            kernel[(mid, j)] = kernel[(mid, n - 1 - j)];
        }
        for i in 0..mid {
            for j in 0..n {
                kernel[(i, j)] = kernel[(n - 1 - i, n - 1 - j)];
            }
        }
    }

    Ok(DiscreteControlProblem {
        grid,
        h,
        mid,
        horizon,
        dt,
        sigma,
        lambda,
        gamma,
        kernel,
    })
}

/// Backward-induction output.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// value[t][i]: optimal cost-to-go from cell i at decision step t;
    /// value[horizon] is the zero terminal условие. For a 201-cell grid and
    /// 10⁴ steps this is ≈ 16 MB.
    pub value: Vec<Vec<f64>>,
    /// thresholds[t]: smallest |e| (cell lower edge) at which switching is
    /// optimal at step t, or None when no cell switches.
    pub thresholds: Vec<Option<f64>>,
    /// inaction[t]: inclusive index range of cells where continuing is
    /// optimal at step t.
    pub inaction: Vec<(usize, usize)>,
}

impl OracleSolution {
    /// Threshold at the middle decision step, where boundary effects from
    /// both ends of the horizon are smallest.
    pub fn mid_horizon_threshold(&self) -> Option<f64> {
        self.thresholds[self.thresholds.len() / 2]
    }

    /// Optimal expected cost starting from e = 0 at step 0.
    pub fn value_at_origin(&self, problem: &DiscreteControlProblem) -> f64 {
        self.value[0][problem.mid]
    }
}

/// Solves the finite-horizon problem by backward induction.
///
/// At each step the switch branch pays λ, resets to the center cell, and
/// accrues no running cost for the step (post-decision accrual); the
/// continue branch pays Γe²·dt plus the expected cost-to-go. Ties go to
/// continuing, so λ = 0 switches everywhere except e = 0 and leaves the
/// value identically zero.
pub fn solve_backward(problem: &DiscreteControlProblem) -> OracleSolution {
    let n = problem.grid.len();
    let mid = problem.mid;
    let run: Vec<f64> = problem
        .grid
        .iter()
        .map(|g| problem.gamma * g * g * problem.dt)
        .collect();

    let mut value = vec![vec![0.0; n]; problem.horizon + 1];
    let mut thresholds = vec![None; problem.horizon];
    let mut inaction = vec![(0usize, n - 1); problem.horizon];
    let mut v_next = DVector::<f64>::zeros(n);
    let mut ev = DVector::<f64>::zeros(n);

    for t in (0..problem.horizon).rev() {
        problem.kernel.mul_to(&v_next, &mut ev);
        let switch_val = problem.lambda + ev[mid];
        let row = &mut value[t];
        for i in 0..n {
            let cont = run[i] + ev[i];
            row[i] = if cont > switch_val { switch_val } else { cont };
        }
        // The inaction region is contiguous around the center; scan outward
        // on the upper side (the kernel and costs are exactly symmetric).
        let mut first_switch = None;
        for j in mid..n {
            if run[j] + ev[j] > switch_val {
                first_switch = Some(j);
                break;
            }
        }
        if let Some(j) = first_switch {
            thresholds[t] = Some(problem.grid[j] - 0.5 * problem.h);
            inaction[t] = (n - j, j - 1);
        }
        for (dst, src) in v_next.iter_mut().zip(row.iter()) {
            *dst = *src;
        }
    }

    OracleSolution {
        value,
        thresholds,
        inaction,
    }
}

/// Expected cost of the fixed-band policy (switch iff |e| ≥ halfwidth) on
/// the same kernel, reported over the grid at step 0.
pub fn evaluate_band_policy(problem: &DiscreteControlProblem, halfwidth: f64) -> Result<Vec<f64>> {
    if !(halfwidth > 0.0) {
        return Err(Error::Domain(
            "band half-width must be positive to evaluate the policy".into(),
        ));
    }
    let n = problem.grid.len();
    let mid = problem.mid;
    let switching: Vec<bool> = problem.grid.iter().map(|g| g.abs() >= halfwidth).collect();
    let run: Vec<f64> = problem
        .grid
        .iter()
        .map(|g| problem.gamma * g * g * problem.dt)
        .collect();
    let mut v = DVector::<f64>::zeros(n);
    let mut ev = DVector::<f64>::zeros(n);
    for _ in 0..problem.horizon {
        problem.kernel.mul_to(&v, &mut ev);
        let switch_val = problem.lambda + ev[mid];
        for i in 0..n {
            v[i] = if switching[i] { switch_val } else { run[i] + ev[i] };
        }
    }
    Ok(v.iter().copied().collect())
}

/// Oracle vs closed-form band comparison at matched parameters.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareReport {
    pub lambda: f64,
    /// Closed-form band half-width (2λΣ/Γ)^{1/4}.
    pub asymptotic_band: f64,
    /// Oracle switching threshold at the middle decision step.
    pub oracle_threshold: f64,
    /// |threshold − band| / band.
    pub rel_threshold_error: f64,
    pub oracle_value_at_origin: f64,
    pub band_policy_value_at_origin: f64,
    /// Oracle value ≤ band-policy value (up to 1e-12 relative slack).
    pub dominance_holds: bool,
}

/// Compares an oracle solution against the asymptotic band policy built
/// from the same (λ, Γ, Σ): mid-horizon threshold error and value
/// dominance at the origin. The policy must match the problem parameters.
pub fn compare_to_asymptotic(
    problem: &DiscreteControlProblem,
    solution: &OracleSolution,
    policy: &InactionPolicy,
) -> Result<CompareReport> {
    let scale = problem.lambda.abs().max(1.0);
    if (policy.lambda - problem.lambda).abs() > 1e-12 * scale {
        return Err(Error::Domain(
            "policy and problem disagree on lambda".into(),
        ));
    }
    let band = problem.asymptotic_band();
    let policy_band = policy.scalar_band()?;
    if (policy_band - band).abs() > 1e-10 * band.max(1e-300) {
        return Err(Error::Domain(format!(
            "policy band {policy_band:.6e} does not match problem band {band:.6e}; \
             build the policy from the problem's (gamma, sigma, lambda)"
        )));
    }
    let threshold = solution.mid_horizon_threshold().ok_or_else(|| {
        Error::Numerical(
            "oracle never switches at the middle step; cannot compare thresholds \
             (is lambda too large for this horizon?)"
                .into(),
        )
    })?;
    let v_oracle = solution.value_at_origin(problem);
    let v_policy = evaluate_band_policy(problem, band)?[problem.mid];
    Ok(CompareReport {
        lambda: problem.lambda,
        asymptotic_band: band,
        oracle_threshold: threshold,
        rel_threshold_error: (threshold - band).abs() / band,
        oracle_value_at_origin: v_oracle,
        band_policy_value_at_origin: v_policy,
        dominance_holds: v_policy >= v_oracle * (1.0 - 1e-12),
    })
}
