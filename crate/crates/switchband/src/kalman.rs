//! Kalman–Bucy filtering: matrix Riccati integration for the posterior
//! covariance P, the gain K = P·Aᵀ·R⁻¹, the innovation variance
//! Σ = K·R·Kᵀ = P·Aᵀ·R⁻¹·A·Pᵀ, and the mean update driven by observation
//! increments.
//!
//! P is deterministic, so it is integrated with classical RK4 (the worked
//! scalar model hits its closed form to ~1e-13 at dt = 1e-3); the mean
//! update uses Euler–Maruyama, which is standard for simulated noise.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::LinearGaussianModel;

/// Allowed eigenvalue undershoot before a covariance counts as broken.
const PSD_STEP_TOL: f64 = -1e-8;
/// Agreement required between the two Σ factorizations.
const SIGMA_AGREE_TOL: f64 = 1e-10;

/// Filter posterior at one instant: mean, covariance, and derived gain and
/// innovation variance.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub t: f64,
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k_gain: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl FilterState {
    /// Initial state from the model prior.
    pub fn init(model: &LinearGaussianModel) -> Result<Self> {
        let (k_gain, sigma) = gain_and_sigma(model, &model.p0, 0.0)?;
        Ok(Self {
            t: 0.0,
            x_hat: model.x0_mean.clone(),
            p: model.p0.clone(),
            k_gain,
            sigma,
        })
    }

    /// Scalar accessors for d = m = 1 models.
    pub fn p_scalar(&self) -> f64 {
        self.p[(0, 0)]
    }
    pub fn sigma_scalar(&self) -> f64 {
        self.sigma[(0, 0)]
    }
}

fn r_inverse(model: &LinearGaussianModel, t: f64) -> Result<DMatrix<f64>> {
    let r = model.r.at(t);
    Cholesky::new(r.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical(format!("R({t}) is not positive definite")))
}

/// Gain K = P·Aᵀ·R⁻¹ and innovation variance Σ = K·R·Kᵀ at time t.
pub fn gain_and_sigma(
    model: &LinearGaussianModel,
    p: &DMatrix<f64>,
    t: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = model.a.at(t);
    let r = model.r.at(t);
    let r_inv = r_inverse(model, t)?;
    let k = p * a.transpose() * &r_inv;
    let sigma = &k * r * k.transpose();
    Ok((k, sigma))
}

/// Both factorizations of Σ, asserted to agree within 1e-10: (K·R·Kᵀ,
/// P·Aᵀ·R⁻¹·A·Pᵀ). Disagreement signals a broken gain computation.
pub fn sigma_of_t(
    model: &LinearGaussianModel,
    state: &FilterState,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = state.t;
    let a = model.a.at(t);
    let r = model.r.at(t);
    let r_inv = r_inverse(model, t)?;
    let via_gain = &state.k_gain * r * state.k_gain.transpose();
    let via_p = &state.p * a.transpose() * &r_inv * a * state.p.transpose();
    let defect = (&via_gain - &via_p).norm();
    if defect > SIGMA_AGREE_TOL * via_gain.norm().max(1.0) {
        return Err(Error::Numerical(format!(
            "sigma factorizations disagree by {defect:.3e} at t = {t}"
        )));
    }
    Ok((via_gain, via_p))
}

/// Right-hand side of the Riccati ODE:
/// dP/dt = F·P + P·Fᵀ + Q − P·Aᵀ·R⁻¹·A·Pᵀ.
fn riccati_rhs(model: &LinearGaussianModel, p: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let f = model.f.at(t);
    let q = model.q.at(t);
    let a = model.a.at(t);
    let r_inv = r_inverse(model, t)?;
    let s = a.transpose() * &r_inv * a;
    Ok(f * p + p * f.transpose() + q - p * &s * p.transpose())
}

/// One RK4 step of the matrix Riccati ODE; the result is symmetrized and
/// checked for positive semi-definiteness (an eigenvalue below −1e-8 means
/// the step size is too large for this model).
pub fn riccati_step(
    model: &LinearGaussianModel,
    state: &FilterState,
    dt: f64,
) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be positive".into()));
    }
    rk4_covariance(model, &state.p, state.t, dt)
}

fn rk4_covariance(
    model: &LinearGaussianModel,
    p: &DMatrix<f64>,
    t: f64,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let k1 = riccati_rhs(model, p, t)?;
    let k2 = riccati_rhs(model, &(p + &k1 * (dt / 2.0)), t + dt / 2.0)?;
    let k3 = riccati_rhs(model, &(p + &k2 * (dt / 2.0)), t + dt / 2.0)?;
    let k4 = riccati_rhs(model, &(p + &k3 * dt), t + dt)?;
    let next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let sym = (&next + next.transpose()) * 0.5;
    let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < PSD_STEP_TOL {
        return Err(Error::Numerical(format!(
            "covariance lost positive semi-definiteness at t = {:.6} \
             (eigenvalue {min_eig:.3e}); reduce dt",
            t + dt
        )));
    }
    Ok(sym)
}

/// Advances the full filter by one step given an observation increment dy:
/// innovation dV̂ = dy − A·x̂·dt, mean update x̂ ← x̂ + F·x̂·dt + K·dV̂,
/// covariance by RK4, gain and Σ recomputed at the new time.
pub fn filter_step(
    model: &LinearGaussianModel,
    state: &FilterState,
    dy: &DVector<f64>,
    dt: f64,
) -> Result<FilterState> {
    if dy.len() != model.obs_dim() {
        return Err(Error::Dimension(format!(
            "observation increment has dimension {}, model expects {}",
            dy.len(),
            model.obs_dim()
        )));
    }
    let t = state.t;
    let a = model.a.at(t);
    let f = model.f.at(t);
    let innovation = dy - a * &state.x_hat * dt;
    let x_hat = &state.x_hat + f * &state.x_hat * dt + &state.k_gain * innovation;
    let p = riccati_step(model, state, dt)?;
    let (k_gain, sigma) = gain_and_sigma(model, &p, t + dt)?;
    Ok(FilterState {
        t: t + dt,
        x_hat,
        p,
        k_gain,
        sigma,
    })
}

/// Closed-form posterior variance for the worked scalar model
/// (F = Q = 0, A = R = 1): P(t) = 1/(1/P0 + t).
pub fn closed_form_p(p0: f64, t: f64) -> f64 {
    assert!(p0 > 0.0 && t >= 0.0, "closed_form_p needs p0 > 0, t ≥ 0");
    1.0 / (1.0 / p0 + t)
}

/// Precomputed deterministic filter schedule for scalar (d = m = 1) models:
/// P, K, and Σ at every grid point t = i·dt for i in 0..=n_steps.
///
/// The schedule depends only on (model, dt), so simulation harnesses compute
/// it once and share it across all Monte Carlo paths.
#[derive(Debug, Clone)]
pub struct ScalarSchedule {
    pub dt: f64,
    pub p: Vec<f64>,
    pub k: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ScalarSchedule {
    pub fn build(model: &LinearGaussianModel, dt: f64, n_steps: usize) -> Result<Self> {
        if model.state_dim() != 1 || model.obs_dim() != 1 {
            return Err(Error::Dimension(
                "scalar schedule requires d = m = 1".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::Domain("dt must be positive".into()));
        }
        let mut p = Vec::with_capacity(n_steps + 1);
        let mut k = Vec::with_capacity(n_steps + 1);
        let mut sigma = Vec::with_capacity(n_steps + 1);
        let rhs = |p: f64, t: f64| -> Result<f64> {
            let (f, a, q, r) = model.scalar_coeffs(t)?;
            Ok(2.0 * f * p + q - p * p * a * a / r)
        };
        let mut pc = model.p0[(0, 0)];
        for i in 0..=n_steps {
            let t = i as f64 * dt;
            let (_, a, _, r) = model.scalar_coeffs(t)?;
            p.push(pc);
            k.push(pc * a / r);
            sigma.push(pc * pc * a * a / r);
            if i < n_steps {
                let k1 = rhs(pc, t)?;
                let k2 = rhs(pc + 0.5 * dt * k1, t + 0.5 * dt)?;
                let k3 = rhs(pc + 0.5 * dt * k2, t + 0.5 * dt)?;
                let k4 = rhs(pc + dt * k3, t + dt)?;
                pc += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if pc < PSD_STEP_TOL {
                    return Err(Error::Numerical(format!(
                        "scalar covariance went negative at t = {:.6}",
                        t + dt
                    )));
                }
            }
        }
        Ok(Self { dt, p, k, sigma })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}
