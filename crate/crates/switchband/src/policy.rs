//! The asymptotically optimal band of inaction and its hypothesis-test
//! reading.
//!
//! For small switching cost λ the optimal no-switching region in the
//! rescaled tracking error ξ = λ^{−1/4}(x̂−θ) is {ξ : ξᵀMξ < 1}, where M
//! solves the algebraic matrix equation 0 = Γ + 2M·Tr(ΣM) − 4MΣM. In one
//! dimension M = √(Γ/(2Σ)) in closed form and the region is the band
//! |x̂−θ| < (2λΣ/Γ)^{1/4}; that band is exactly a two-sided z-test with
//! critical value c = (2λ/Γ)^{1/4} on the standardized error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::FilterState;
use crate::model::{LinearGaussianModel, PenaltySpec};
use crate::normal::{norm_cdf, norm_quantile};

/// Agreement required between the two band factorizations.
const BAND_AGREE_TOL: f64 = 1e-10;
/// Residual below which a matrix M counts as converged.
const M_RESIDUAL_TOL: f64 = 1e-10;

/// Scalar solution M = √(Γ/(2Σ)) of the algebraic equation.
pub fn solve_m_scalar(gamma: f64, sigma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "solve_m_scalar needs gamma > 0 and sigma > 0, got ({gamma}, {sigma})"
        )));
    }
    Ok((gamma / (2.0 * sigma)).sqrt())
}

/// Residual of the algebraic equation: Γ + 2M·Tr(ΣM) − 4MΣM.
pub fn m_equation_residual(
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> DMatrix<f64> {
    let trace = (sigma * m).trace();
    gamma + m * (2.0 * trace) - (m * sigma * m) * 4.0
}

/// Outcome of the Newton iteration for the matrix M.
#[derive(Debug, Clone)]
pub struct MSolution {
    pub m: DMatrix<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Damped Newton iteration for the matrix equation on the space of
/// symmetric matrices, started from the decoupled-scalar diagonal
/// M₀ = diag(√(Γᵢᵢ/2Σᵢᵢ)) unless an initial guess is supplied.
///
/// Nonconvergence is reported, not thrown: solutions need not exist for
/// d ≥ 2 (the isotropic d = 2 case is degenerate and d ≥ 3 would need
/// m² < 0), so callers receive the best-effort M plus a flag.
pub fn solve_m_matrix(
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    init: Option<DMatrix<f64>>,
) -> Result<MSolution> {
    let d = gamma.nrows();
    if gamma.shape() != (d, d) || sigma.shape() != (d, d) {
        return Err(Error::Dimension("gamma and sigma must be square d×d".into()));
    }
    for (name, mat) in [("gamma", gamma), ("sigma", sigma)] {
        if (mat - mat.transpose()).norm() > 1e-10 * mat.norm().max(1.0) {
            return Err(Error::Domain(format!("{name} must be symmetric")));
        }
        if (mat + mat.transpose())
            .scale(0.5)
            .symmetric_eigen()
            .eigenvalues
            .min()
            <= 0.0
        {
            return Err(Error::Domain(format!("{name} must be positive definite")));
        }
    }

    let mut m = match init {
        Some(m0) => {
            if m0.shape() != (d, d) {
                return Err(Error::Dimension("initial M has wrong shape".into()));
            }
            (&m0 + m0.transpose()) * 0.5
        }
        None => DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                (gamma[(i, i)] / (2.0 * sigma[(i, i)])).sqrt()
            } else {
                0.0
            }
        }),
    };

    let n_free = d * (d + 1) / 2;
    let pack = |mat: &DMatrix<f64>| {
        let mut v = DVector::zeros(n_free);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                v[k] = mat[(i, j)];
                k += 1;
            }
        }
        v
    };
    let unpack = |v: &DVector<f64>| {
        let mut mat = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                mat[(i, j)] = v[k];
                mat[(j, i)] = v[k];
                k += 1;
            }
        }
        mat
    };

    let res_of = |mat: &DMatrix<f64>| pack(&m_equation_residual(gamma, sigma, mat));

    let max_iter = 100;
    let mut res = res_of(&m);
    let mut iterations = 0;
    for _ in 0..max_iter {
        let norm = res.norm();
        if norm < 1e-12 {
            break;
        }
        iterations += 1;

        // Finite-difference Jacobian over the symmetric basis.
        let x = pack(&m);
        let eps = 1e-7 * m.norm().max(1.0);
        let mut jac = DMatrix::zeros(n_free, n_free);
        for col in 0..n_free {
            let mut xp = x.clone();
            xp[col] += eps;
            let rp = res_of(&unpack(&xp));
            for row in 0..n_free {
                jac[(row, col)] = (rp[row] - res[row]) / eps;
            }
        }
        let lu = jac.lu();
        let Some(delta) = lu.solve(&(-&res)) else {
            break; // singular Jacobian: report best effort below
        };

        // Backtracking on the residual norm.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = unpack(&(&x + &delta * step));
            let cand_res = res_of(&candidate);
            if cand_res.norm() < norm * (1.0 - 1e-4 * step) {
                m = candidate;
                res = cand_res;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // stalled: no descent along the Newton direction
        }
    }

    let residual_norm = m_equation_residual(gamma, sigma, &m).norm();
    Ok(MSolution {
        converged: residual_norm < M_RESIDUAL_TOL,
        m,
        residual_norm,
        iterations,
    })
}

/// The switch rule: stay while ξᵀMξ < 1, otherwise reset θ ← x̂.
#[derive(Debug, Clone)]
pub struct InactionPolicy {
    pub m_matrix: DMatrix<f64>,
    pub lambda: f64,
    /// Whether the M construction converged (always true for scalars).
    pub converged: bool,
}

impl InactionPolicy {
    /// Scalar policy from the closed-form M at the given innovation
    /// variance.
    pub fn scalar(gamma: f64, sigma: f64, lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::Domain("lambda must be ≥ 0".into()));
        }
        let m = solve_m_scalar(gamma, sigma)?;
        Ok(Self {
            m_matrix: DMatrix::from_element(1, 1, m),
            lambda,
            converged: true,
        })
    }

    /// Multivariate policy via the Newton solve; the solution report is
    /// returned alongside so callers can inspect residuals.
    pub fn multivariate(
        gamma: &DMatrix<f64>,
        sigma: &DMatrix<f64>,
        lambda: f64,
    ) -> Result<(Self, MSolution)> {
        if lambda < 0.0 {
            return Err(Error::Domain("lambda must be ≥ 0".into()));
        }
        let sol = solve_m_matrix(gamma, sigma, None)?;
        Ok((
            Self {
                m_matrix: sol.m.clone(),
                lambda,
                converged: sol.converged,
            },
            sol,
        ))
    }

    /// Band half-width implied by a scalar policy: |x̂−θ| = λ^{1/4}·M^{−1/2}.
    pub fn scalar_band(&self) -> Result<f64> {
        if self.m_matrix.shape() != (1, 1) {
            return Err(Error::Dimension("scalar_band requires a 1×1 policy".into()));
        }
        Ok(self.lambda.powf(0.25) / self.m_matrix[(0, 0)].sqrt())
    }
}

/// Whether the policy switches at the given (x̂, θ): true iff the rescaled
/// error leaves the open region, i.e. ξᵀMξ ≥ 1 (the boundary switches).
/// With λ = 0 switching is free, so any nonzero tracking error switches.
pub fn should_switch(policy: &InactionPolicy, x_hat: &DVector<f64>, theta: &DVector<f64>) -> bool {
    let diff = x_hat - theta;
    if policy.lambda == 0.0 {
        return diff.iter().any(|&v| v != 0.0);
    }
    let xi = diff / policy.lambda.powf(0.25);
    let quad = (xi.transpose() * &policy.m_matrix * &xi)[(0, 0)];
    quad >= 1.0
}

/// Scalar band half-width at the filter state, computed both ways:
/// Σ^{1/4}·(2λ/Γ)^{1/4} and √P·(|A|/√R)^{1/2}·(2λ/Γ)^{1/4}. The two
/// factorizations must agree within 1e-10; disagreement signals an
/// inconsistent filter state.
pub fn band_halfwidth(
    model: &LinearGaussianModel,
    state: &FilterState,
    penalty: &PenaltySpec,
) -> Result<f64> {
    if model.state_dim() != 1 || model.obs_dim() != 1 {
        return Err(Error::Dimension(
            "band_halfwidth is scalar-only; multivariate callers use the M region".into(),
        ));
    }
    let gamma = penalty.gamma_scalar()?;
    let lam = penalty.lambda;
    if lam < 0.0 {
        return Err(Error::Domain("lambda must be ≥ 0".into()));
    }
    let scale = (2.0 * lam / gamma).powf(0.25);
    let via_sigma = state.sigma_scalar().powf(0.25) * scale;
    let (_, a, _, r) = model.scalar_coeffs(state.t)?;
    let via_p = state.p_scalar().sqrt() * (a.abs() / r.sqrt()).sqrt() * scale;
    if (via_sigma - via_p).abs() > BAND_AGREE_TOL * via_sigma.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "band factorizations disagree: {via_sigma} vs {via_p} at t = {}",
            state.t
        )));
    }
    Ok(via_sigma)
}

/// Value-function correction ψ̃(ξ) = −1 + (ξᵀMξ − 1)²: 0 at the center,
/// −1 on the region boundary, and ≥ −1 everywhere.
pub fn correction_psi(m_matrix: &DMatrix<f64>, xi: &DVector<f64>) -> f64 {
    let quad = (xi.transpose() * m_matrix * xi)[(0, 0)];
    -1.0 + (quad - 1.0).powi(2)
}

/// A band read as a two-sided z-test at critical value c: reject (switch)
/// when |x̂−θ|/√P ≥ c, which happens under the null with probability α.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TestMapping {
    pub critical_value: f64,
    pub test_size: f64,
    pub confidence_level: f64,
}

/// Maps a switching cost to the equivalent test: c = (2λ/Γ)^{1/4},
/// α = 2(1−Φ(c)).
pub fn test_size_from_cost(lambda: f64, gamma: f64) -> Result<TestMapping> {
    if lambda < 0.0 || !(gamma > 0.0) {
        return Err(Error::Domain(format!(
            "test_size_from_cost needs lambda ≥ 0 and gamma > 0, got ({lambda}, {gamma})"
        )));
    }
    let c = (2.0 * lambda / gamma).powf(0.25);
    let alpha = 2.0 * (1.0 - norm_cdf(c));
    Ok(TestMapping {
        critical_value: c,
        test_size: alpha,
        confidence_level: 1.0 - alpha,
    })
}

/// Inverse mapping: test size α to switching cost λ = Γ·c⁴/2 with
/// c = Φ⁻¹(1−α/2). Accepts α in (0, 1]; α = 1 is the always-switch
/// boundary with c = 0 and λ = 0.
pub fn cost_from_test_size(alpha: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let c = norm_quantile(1.0 - alpha / 2.0)?;
    Ok(gamma * c.powi(4) / 2.0)
}

/// Effective test size along a filter trajectory: at each state,
/// cₜ = bandₜ/√Pₜ = (|Aₜ|/√Rₜ)^{1/2}·(2λ/Γ)^{1/4} and αₜ = 2(1−Φ(cₜ)).
/// Better signal (larger |A|/√R) means a stricter test (smaller αₜ):
/// in periods of low-quality data the policy switches more readily.
pub fn implied_test_size_path(
    model: &LinearGaussianModel,
    states: &[FilterState],
    penalty: &PenaltySpec,
) -> Result<Vec<(f64, f64)>> {
    let gamma = penalty.gamma_scalar()?;
    let scale = (2.0 * penalty.lambda / gamma).powf(0.25);
    states
        .iter()
        .map(|state| {
            let (_, a, _, r) = model.scalar_coeffs(state.t)?;
            let c = (a.abs() / r.sqrt()).sqrt() * scale;
            Ok((state.t, 2.0 * (1.0 - norm_cdf(c))))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Coeff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_m_spot_values() {
        assert!((solve_m_scalar(1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((solve_m_scalar(2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((solve_m_scalar(1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(solve_m_scalar(0.0, 1.0).is_err());
        assert!(solve_m_scalar(1.0, -1.0).is_err());
    }

    #[test]
    fn scalar_m_zeroes_the_equation() {
        for (g, s) in [(1.0, 2.0), (0.3, 0.7), (5.0, 0.01)] {
            let m = solve_m_scalar(g, s).unwrap();
            let res = g + 2.0 * m * (s * m) - 4.0 * m * s * m; // = Γ − 2M²Σ
            assert!(res.abs() < 1e-12, "residual {res} at ({g}, {s})");
        }
    }

    #[test]
    fn matrix_solver_reduces_to_scalar_in_1d() {
        let gamma = DMatrix::from_element(1, 1, 1.3);
        let sigma = DMatrix::from_element(1, 1, 0.4);
        let sol = solve_m_matrix(&gamma, &sigma, None).unwrap();
        assert!(sol.converged);
        let exact = solve_m_scalar(1.3, 0.4).unwrap();
        assert!((sol.m[(0, 0)] - exact).abs() < 1e-12);
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn isotropic_two_dimensional_case_is_flagged() {
        // With M = mI, Γ = I, Σ = I the equation reads 1 + (2d−4)m² = 0,
        // which is degenerate at d = 2: no convergence may be claimed.
        let sol = solve_m_matrix(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2), None).unwrap();
        assert!(!sol.converged, "residual {:.3e}", sol.residual_norm);
    }

    #[test]
    fn isotropic_three_dimensional_case_is_flagged() {
        // d = 3 would need m² = −1/2: no positive-definite solution exists.
        let sol = solve_m_matrix(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3), None).unwrap();
        assert!(!sol.converged);
    }

    fn example_one_state_at(p: f64) -> (LinearGaussianModel, FilterState) {
        let model = LinearGaussianModel::example_one(1.0, 10.0);
        let state = FilterState {
            t: 0.0,
            x_hat: DVector::zeros(1),
            p: DMatrix::from_element(1, 1, p),
            k_gain: DMatrix::from_element(1, 1, p),
            sigma: DMatrix::from_element(1, 1, p * p),
        };
        (model, state)
    }

    #[test]
    fn band_halfwidth_spot_value() {
        // P = 0.1, λ = 1e-4, Γ = 1: width = √0.1·(2e-4)^{1/4} ≈ 0.0376060.
        let (model, state) = example_one_state_at(0.1);
        let penalty = PenaltySpec::scalar(1e-4, 1.0).unwrap();
        let w = band_halfwidth(&model, &state, &penalty).unwrap();
        assert!((w - 0.0376060).abs() < 5e-7, "width {w}");
    }

    #[test]
    fn band_halfwidth_zero_cost_and_scaling() {
        let (model, state) = example_one_state_at(0.5);
        let zero = PenaltySpec::scalar(0.0, 1.0).unwrap();
        assert_eq!(band_halfwidth(&model, &state, &zero).unwrap(), 0.0);

        let base = PenaltySpec::scalar(1e-5, 1.0).unwrap();
        let wide = PenaltySpec::scalar(16e-5, 1.0).unwrap();
        let w1 = band_halfwidth(&model, &state, &base).unwrap();
        let w2 = band_halfwidth(&model, &state, &wide).unwrap();
        assert!((w2 / w1 - 2.0).abs() < 1e-12, "16x cost doubles the band");
    }

    #[test]
    fn band_halfwidth_handles_negative_observation_gain() {
        // A = −2: the band depends on A only through |A|.
        let model = LinearGaussianModel::new(
            Coeff::constant_scalar(0.0),
            Coeff::constant_scalar(-2.0),
            Coeff::constant_scalar(0.0),
            Coeff::constant_scalar(1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 0.5),
            1.0,
        )
        .unwrap();
        let state = FilterState::init(&model).unwrap();
        let penalty = PenaltySpec::scalar(1e-4, 1.0).unwrap();
        let w = band_halfwidth(&model, &state, &penalty).unwrap();
        assert!(w.is_finite() && w > 0.0);
    }

    #[test]
    fn switch_rule_boundary_and_interior() {
        let policy = InactionPolicy {
            m_matrix: DMatrix::identity(1, 1),
            lambda: 1.0,
            converged: true,
        };
        let at = |v: f64| DVector::from_element(1, v);
        assert!(!should_switch(&policy, &at(0.3), &at(0.3)), "zero error");
        assert!(should_switch(&policy, &at(1.0), &at(0.0)), "boundary switches");
        assert!(!should_switch(&policy, &at(0.99), &at(0.0)));

        // λ = 0: any discrepancy switches.
        let free = InactionPolicy {
            m_matrix: DMatrix::identity(1, 1),
            lambda: 0.0,
            converged: true,
        };
        assert!(should_switch(&free, &at(1e-300), &at(0.0)));
        assert!(!should_switch(&free, &at(0.25), &at(0.25)));
    }

    #[test]
    fn switch_rule_matches_band_example() {
        // Γ = 1, Σ = 0.01, λ = 1e-4: band ≈ 0.0376, so 0.03 stays inside.
        let policy = InactionPolicy::scalar(1.0, 0.01, 1e-4).unwrap();
        let at = |v: f64| DVector::from_element(1, v);
        assert!(!should_switch(&policy, &at(0.03), &at(0.0)));
        assert!(should_switch(&policy, &at(0.038), &at(0.0)));
        assert!((policy.scalar_band().unwrap() - 0.0376060).abs() < 5e-7);
    }

    #[test]
    fn correction_psi_spot_values() {
        let m = DMatrix::from_element(1, 1, 0.5);
        let at = |v: f64| DVector::from_element(1, v);
        assert_eq!(correction_psi(&m, &at(0.0)), 0.0);
        // ξ = √2 puts ξᵀMξ = 1 exactly on the boundary.
        assert!((correction_psi(&m, &at(std::f64::consts::SQRT_2)) + 1.0).abs() < 1e-12);
        // ξ = 2: ξᵀMξ = 2 → ψ̃ = 0.
        assert!((correction_psi(&m, &at(2.0))).abs() < 1e-12);
    }

    #[test]
    fn correction_psi_is_bounded_below() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let xi = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            assert!(correction_psi(&m, &xi) >= -1.0);
        }
    }

    #[test]
    fn test_mapping_spot_values() {
        let free = test_size_from_cost(0.0, 1.0).unwrap();
        assert_eq!(free.critical_value, 0.0);
        assert!((free.test_size - 1.0).abs() < 1e-15, "always reject");

        let unit = test_size_from_cost(1.0, 2.0).unwrap();
        assert!((unit.critical_value - 1.0).abs() < 1e-15);
        assert!((unit.test_size - 0.3173105078629141).abs() < 1e-12);

        let lam = cost_from_test_size(0.05, 1.0).unwrap();
        assert!((lam - 7.3784029355443525).abs() < 1e-10, "lambda {lam}");
        let back = test_size_from_cost(lam, 1.0).unwrap();
        assert!((back.critical_value - 1.9599639845400545).abs() < 1e-12);

        let lam2 = cost_from_test_size(0.317310507862914, 2.0).unwrap();
        assert!((lam2 - 1.0).abs() < 1e-12, "lambda {lam2}");

        assert_eq!(cost_from_test_size(1.0, 1.0).unwrap(), 0.0);
        assert!(cost_from_test_size(0.0, 1.0).is_err());
        assert!(cost_from_test_size(1.2, 1.0).is_err());
    }

    #[test]
    fn round_trip_alpha_to_cost_and_back() {
        for alpha in [0.01, 0.05, 0.1, 0.317311, 0.5, 0.9] {
            let lam = cost_from_test_size(alpha, 1.7).unwrap();
            let back = test_size_from_cost(lam, 1.7).unwrap().test_size;
            assert!(
                (back - alpha).abs() < 1e-10,
                "alpha {alpha} -> {lam} -> {back}"
            );
        }
    }

    #[test]
    fn implied_test_size_tracks_signal_quality() {
        // A jumps from 1 to 2 at t = 1 with R fixed: c multiplies by √2
        // and α drops.
        let model = LinearGaussianModel::new(
            Coeff::constant_scalar(0.0),
            Coeff::piecewise(
                vec![0.0, 1.0],
                vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)],
            )
            .unwrap(),
            Coeff::constant_scalar(0.0),
            Coeff::constant_scalar(1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            2.0,
        )
        .unwrap();
        let penalty = PenaltySpec::scalar(1e-3, 1.0).unwrap();
        let mk = |t: f64| FilterState {
            t,
            x_hat: DVector::zeros(1),
            p: DMatrix::from_element(1, 1, 1.0),
            k_gain: DMatrix::from_element(1, 1, 1.0),
            sigma: DMatrix::from_element(1, 1, 1.0),
        };
        let path = implied_test_size_path(&model, &[mk(0.5), mk(1.5)], &penalty).unwrap();
        let (c_before, c_after) = (
            (2.0 * penalty.lambda).powf(0.25),
            2.0f64.sqrt() * (2.0 * penalty.lambda).powf(0.25),
        );
        assert!((path[0].1 - 2.0 * (1.0 - norm_cdf(c_before))).abs() < 1e-14);
        assert!((path[1].1 - 2.0 * (1.0 - norm_cdf(c_after))).abs() < 1e-14);
        assert!(path[1].1 < path[0].1, "better signal, stricter test");

        let zero = PenaltySpec::scalar(0.0, 1.0).unwrap();
        let flat = implied_test_size_path(&model, &[mk(0.5)], &zero).unwrap();
        assert_eq!(flat[0].1, 1.0, "free switching rejects always");
    }

    #[test]
    fn region_and_test_agree_on_random_scalar_inputs() {
        // The band rule and the z-test rule are the same decision, modulo
        // floating-point ties on the shared boundary (excluded below).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100_000 {
            let p: f64 = rng.gen_range(0.01..2.0);
            let lambda: f64 = rng.gen_range(1e-8..1.0);
            let gamma: f64 = rng.gen_range(0.1..5.0);
            let err: f64 = rng.gen_range(-2.0..2.0);
            let policy = InactionPolicy::scalar(gamma, p * p, lambda).unwrap();
            let by_region = should_switch(
                &policy,
                &DVector::from_element(1, err),
                &DVector::zeros(1),
            );
            let c = (2.0 * lambda / gamma).powf(0.25);
            let standardized = err.abs() / p.sqrt();
            if (standardized - c).abs() < 1e-12 * c.max(1.0) {
                continue;
            }
            let by_test = standardized >= c;
            assert_eq!(by_region, by_test, "p={p} lambda={lambda} gamma={gamma} err={err}");
        }
    }
}
