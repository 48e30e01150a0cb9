//! Problem specifications: the continuous-time linear-Gaussian model, the
//! Bernoulli tracking model, and the cost structure (switching cost λ,
//! running cost ρ, curvature Γ).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A deterministic, possibly time-varying matrix coefficient.
///
/// Piecewise-constant tables keep runs reproducible: the same breakpoints
/// produce the same coefficient path on any simulation grid.
#[derive(Debug, Clone)]
pub enum Coeff {
    Constant(DMatrix<f64>),
    /// Right-continuous step function: `values[i]` applies on
    /// `[times[i], times[i+1])`. `times` must be sorted ascending.
    Piecewise {
        times: Vec<f64>,
        values: Vec<DMatrix<f64>>,
    },
}

impl Coeff {
    pub fn constant_scalar(v: f64) -> Self {
        Coeff::Constant(DMatrix::from_element(1, 1, v))
    }

    pub fn piecewise(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::Config(
                "piecewise coefficient needs equally many times and values (≥ 1)".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "piecewise coefficient times must be strictly increasing".into(),
            ));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(Error::Dimension(
                "piecewise coefficient values must share one shape".into(),
            ));
        }
        Ok(Coeff::Piecewise { times, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Coeff::Constant(m) => m.shape(),
            Coeff::Piecewise { values, .. } => values[0].shape(),
        }
    }

    /// Value at time `t` (clamped to the first segment before `times[0]`).
    pub fn at(&self, t: f64) -> &DMatrix<f64> {
        match self {
            Coeff::Constant(m) => m,
            Coeff::Piecewise { times, values } => {
                let idx = match times.binary_search_by(|probe| probe.total_cmp(&t)) {
                    Ok(i) => i,
                    Err(0) => 0,
                    Err(i) => i - 1,
                };
                &values[idx]
            }
        }
    }

    /// Scalar value at `t`; panics if the coefficient is not 1×1.
    pub fn scalar_at(&self, t: f64) -> f64 {
        let m = self.at(t);
        assert_eq!(m.shape(), (1, 1), "scalar_at on non-scalar coefficient");
        m[(0, 0)]
    }
}

/// The filtering problem: dX = F·X dt + dW, dY = A·X dt + dB with
/// state-noise covariance Q, observation-noise covariance R, and Gaussian
/// prior N(x0_mean, p0) on the initial state.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    pub f: Coeff,
    pub a: Coeff,
    pub q: Coeff,
    pub r: Coeff,
    pub x0_mean: DVector<f64>,
    pub p0: DMatrix<f64>,
    pub horizon: f64,
}

impl LinearGaussianModel {
    pub fn new(
        f: Coeff,
        a: Coeff,
        q: Coeff,
        r: Coeff,
        x0_mean: DVector<f64>,
        p0: DMatrix<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let d = x0_mean.len();
        let (ad_m, ad_d) = a.shape();
        if f.shape() != (d, d) || q.shape() != (d, d) || p0.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "F, Q, P0 must be {d}×{d} to match the prior mean"
            )));
        }
        if ad_d != d {
            return Err(Error::Dimension(format!(
                "A must have {d} columns, got {ad_d}"
            )));
        }
        if r.shape() != (ad_m, ad_m) {
            return Err(Error::Dimension(format!(
                "R must be {ad_m}×{ad_m} to match A's rows"
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::Domain("horizon must be positive".into()));
        }
        Ok(Self {
            f,
            a,
            q,
            r,
            x0_mean,
            p0,
            horizon,
        })
    }

    /// State dimension d.
    pub fn state_dim(&self) -> usize {
        self.x0_mean.len()
    }

    /// Observation dimension m.
    pub fn obs_dim(&self) -> usize {
        self.a.shape().0
    }

    /// The worked scalar model: F = Q = 0, A = R = 1, prior N(0, p0).
    /// Its posterior variance has the closed form P(t) = 1/(1/P0 + t).
    pub fn example_one(p0: f64, horizon: f64) -> Self {
        Self::new(
            Coeff::constant_scalar(0.0),
            Coeff::constant_scalar(1.0),
            Coeff::constant_scalar(0.0),
            Coeff::constant_scalar(1.0),
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, p0),
            horizon,
        )
        .expect("example model is well formed")
    }

    /// Coefficients at `t` for scalar (d = m = 1) models: (F, A, Q, R).
    pub fn scalar_coeffs(&self, t: f64) -> Result<(f64, f64, f64, f64)> {
        if self.state_dim() != 1 || self.obs_dim() != 1 {
            return Err(Error::Dimension(
                "scalar coefficient access requires d = m = 1".into(),
            ));
        }
        Ok((
            self.f.scalar_at(t),
            self.a.scalar_at(t),
            self.q.scalar_at(t),
            self.r.scalar_at(t),
        ))
    }
}

/// One validation check outcome.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    /// Sample time at which the check failed first, if time-dependent.
    pub time: Option<f64>,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail report over all model invariants; reports rather than throws.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

const SYM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-10;
/// R counts as invertible while its condition number stays below this.
const COND_LIMIT: f64 = 1e12;

/// Validates model invariants (symmetry, positive semi-definiteness of Q,
/// positive definiteness of R and P0, A not identically zero) at the given
/// sample times.
pub fn validate_model(model: &LinearGaussianModel, sample_times: &[f64]) -> ValidationReport {
    let mut checks = Vec::new();

    checks.push(spd_check("p0 symmetric positive definite", &model.p0, None));

    let mut q_fail: Option<Check> = None;
    let mut r_fail: Option<Check> = None;
    let mut a_norm_max: f64 = 0.0;
    for &t in sample_times {
        let q = model.q.at(t);
        if q_fail.is_none() {
            let c = psd_check("Q symmetric PSD", q, Some(t));
            if !c.passed {
                q_fail = Some(c);
            }
        }
        let r = model.r.at(t);
        if r_fail.is_none() {
            let c = invertible_check("R invertible", r, t);
            if !c.passed {
                r_fail = Some(c);
            }
        }
        a_norm_max = a_norm_max.max(model.a.at(t).norm());
    }
    checks.push(q_fail.unwrap_or(Check {
        name: "Q symmetric PSD".into(),
        time: None,
        passed: true,
        detail: "holds at all sample times".into(),
    }));
    checks.push(r_fail.unwrap_or(Check {
        name: "R invertible".into(),
        time: None,
        passed: true,
        detail: "holds at all sample times".into(),
    }));
    checks.push(Check {
        name: "A nonzero".into(),
        time: None,
        passed: a_norm_max > 0.0,
        detail: format!("max ‖A(t)‖ over samples = {a_norm_max:.3e}"),
    });

    ValidationReport { checks }
}

fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(1.0)
}

fn psd_check(name: &str, m: &DMatrix<f64>, time: Option<f64>) -> Check {
    let sym = symmetry_defect(m);
    if sym > SYM_TOL {
        return Check {
            name: name.into(),
            time,
            passed: false,
            detail: format!("asymmetry {sym:.3e}"),
        };
    }
    let min_eig = min_eigenvalue(m);
    Check {
        name: name.into(),
        time,
        passed: min_eig >= PSD_TOL * m.norm().max(1.0),
        detail: format!("smallest eigenvalue {min_eig:.3e}"),
    }
}

fn spd_check(name: &str, m: &DMatrix<f64>, time: Option<f64>) -> Check {
    let mut c = psd_check(name, m, time);
    if c.passed {
        let min_eig = min_eigenvalue(m);
        if min_eig <= 0.0 {
            c.passed = false;
            c.detail = format!("smallest eigenvalue {min_eig:.3e} not positive");
        }
    }
    c
}

fn invertible_check(name: &str, m: &DMatrix<f64>, t: f64) -> Check {
    let svd = m.clone().svd(false, false);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    let passed = min_sv > 0.0 && max_sv / min_sv < COND_LIMIT;
    Check {
        name: name.into(),
        time: Some(t),
        passed,
        detail: format!("singular values in [{min_sv:.3e}, {max_sv:.3e}]"),
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    // Symmetrize first: the eigensolver requires exact symmetry.
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.min()
}

/// Bernoulli trials with unknown success probability, tracked by MLE after a
/// burn-in of t* = burn_in_fraction·horizon steps.
#[derive(Debug, Clone, Copy)]
pub struct BernoulliModel {
    pub p_true: f64,
    pub horizon: u64,
    pub burn_in_fraction: f64,
}

impl BernoulliModel {
    pub fn new(p_true: f64, horizon: u64, burn_in_fraction: f64) -> Result<Self> {
        if !(p_true > 0.0 && p_true < 1.0) {
            return Err(Error::Domain(format!(
                "p_true must lie in (0, 1), got {p_true}"
            )));
        }
        if !(burn_in_fraction > 0.0 && burn_in_fraction < 1.0) {
            return Err(Error::Domain(format!(
                "burn_in_fraction must lie in (0, 1), got {burn_in_fraction}"
            )));
        }
        if horizon < 10 {
            return Err(Error::Domain(format!(
                "horizon must be at least 10 steps, got {horizon}"
            )));
        }
        Ok(Self {
            p_true,
            horizon,
            burn_in_fraction,
        })
    }

    /// Burn-in length t* in steps (at least 1).
    pub fn t_star(&self) -> u64 {
        ((self.burn_in_fraction * self.horizon as f64).round() as u64).max(1)
    }
}

/// Running-cost function ρ on the tracking error.
#[derive(Clone)]
pub enum Rho {
    /// ρ(x) = xᵀΓx (so Γ = ∂ₓₓρ(0)/2 exactly).
    Quadratic,
    /// User-supplied smooth convex ρ with ρ(0) = 0.
    Custom(Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Rho {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rho::Quadratic => write!(f, "Rho::Quadratic"),
            Rho::Custom(_) => write!(f, "Rho::Custom(..)"),
        }
    }
}

/// Cost structure: switching cost λ, running cost ρ, curvature matrix Γ.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub gamma: DMatrix<f64>,
    pub rho: Rho,
}

impl PenaltySpec {
    /// Quadratic running cost with supplied curvature matrix.
    pub fn quadratic(lambda: f64, gamma: DMatrix<f64>) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::Domain(format!("lambda must be ≥ 0, got {lambda}")));
        }
        let sym = symmetry_defect(&gamma);
        if sym > SYM_TOL {
            return Err(Error::Domain(format!("gamma asymmetric (defect {sym:.3e})")));
        }
        if min_eigenvalue(&gamma) <= 0.0 {
            return Err(Error::Domain("gamma must be positive definite".into()));
        }
        Ok(Self {
            lambda,
            gamma,
            rho: Rho::Quadratic,
        })
    }

    /// Scalar convenience constructor.
    pub fn scalar(lambda: f64, gamma: f64) -> Result<Self> {
        Self::quadratic(lambda, DMatrix::from_element(1, 1, gamma))
    }

    /// Builds the spec from a running-cost function, extracting Γ by central
    /// second differences at 0.
    pub fn from_rho(
        lambda: f64,
        rho: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
        dimension: usize,
        step: f64,
        eigenvalue_floor: Option<f64>,
    ) -> Result<Self> {
        let gamma = curvature_from_rho(rho.as_ref(), dimension, step, eigenvalue_floor)?;
        let mut spec = Self::quadratic(lambda, gamma)?;
        spec.rho = Rho::Custom(rho);
        Ok(spec)
    }

    /// Evaluates the running cost at tracking error `x`.
    pub fn rho_eval(&self, x: &DVector<f64>) -> f64 {
        match &self.rho {
            Rho::Quadratic => (x.transpose() * &self.gamma * x)[(0, 0)],
            Rho::Custom(f) => f(x),
        }
    }

    /// Γ as a scalar (d = 1 only).
    pub fn gamma_scalar(&self) -> Result<f64> {
        if self.gamma.shape() != (1, 1) {
            return Err(Error::Dimension(
                "scalar curvature requires a 1×1 gamma".into(),
            ));
        }
        Ok(self.gamma[(0, 0)])
    }

    pub fn dimension(&self) -> usize {
        self.gamma.nrows()
    }
}

/// Central second-difference Hessian of ρ at 0, halved and symmetrized:
/// Γ = ∂ₓₓρ(0)/2. Fails if the result has an eigenvalue below the floor
/// (default 1e-10), signalling a degenerate running cost such as ρ(x) = x⁴.
pub fn curvature_from_rho(
    rho: &dyn Fn(&DVector<f64>) -> f64,
    dimension: usize,
    step: f64,
    eigenvalue_floor: Option<f64>,
) -> Result<DMatrix<f64>> {
    if dimension == 0 {
        return Err(Error::Dimension("dimension must be ≥ 1".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Domain("finite-difference step must be > 0".into()));
    }
    let floor = eigenvalue_floor.unwrap_or(1e-10);
    let d = dimension;
    let at = |v: &DVector<f64>| rho(v);
    let rho0 = at(&DVector::zeros(d));
    let unit = |i: usize, s: f64| {
        let mut v = DVector::zeros(d);
        v[i] = s;
        v
    };
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let plus = at(&unit(i, step));
        let minus = at(&unit(i, -step));
        h[(i, i)] = (plus - 2.0 * rho0 + minus) / (step * step);
        for j in (i + 1)..d {
            let mut pp = unit(i, step);
            pp[j] += step;
            let mut pm = unit(i, step);
            pm[j] -= step;
            let mut mp = unit(i, -step);
            mp[j] += step;
            let mut mm = unit(i, -step);
            mm[j] -= step;
            let mixed = (at(&pp) - at(&pm) - at(&mp) + at(&mm)) / (4.0 * step * step);
            h[(i, j)] = mixed;
            h[(j, i)] = mixed;
        }
    }
    let gamma = (&h + h.transpose()) * 0.25; // sym(H)/2
    let min_eig = min_eigenvalue(&gamma);
    if min_eig < floor {
        return Err(Error::Numerical(format!(
            "running cost is degenerate at 0: smallest curvature eigenvalue \
             {min_eig:.3e} is below the floor {floor:.1e}"
        )));
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_one_passes_validation() {
        let model = LinearGaussianModel::example_one(1.0, 10.0);
        let times: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let report = validate_model(&model, &times);
        assert!(report.all_passed(), "{:?}", report.checks);
    }

    #[test]
    fn zero_r_fails_invertibility() {
        let mut model = LinearGaussianModel::example_one(1.0, 10.0);
        model.r = Coeff::constant_scalar(0.0);
        let report = validate_model(&model, &[0.0, 1.0]);
        assert!(report
            .failures()
            .any(|c| c.name == "R invertible" && !c.passed));
    }

    #[test]
    fn indefinite_q_fails_psd() {
        let mut model = LinearGaussianModel::example_one(1.0, 10.0);
        model.q = Coeff::constant_scalar(-0.1);
        let report = validate_model(&model, &[0.0]);
        assert!(report.failures().any(|c| c.name == "Q symmetric PSD"));
    }

    #[test]
    fn piecewise_lookup_is_right_continuous() {
        let c = Coeff::piecewise(
            vec![0.0, 1.0, 2.0],
            vec![
                DMatrix::from_element(1, 1, 10.0),
                DMatrix::from_element(1, 1, 20.0),
                DMatrix::from_element(1, 1, 30.0),
            ],
        )
        .unwrap();
        assert_eq!(c.scalar_at(-0.5), 10.0); // clamped before first breakpoint
        assert_eq!(c.scalar_at(0.0), 10.0);
        assert_eq!(c.scalar_at(0.999), 10.0);
        assert_eq!(c.scalar_at(1.0), 20.0);
        assert_eq!(c.scalar_at(5.0), 30.0);
    }

    #[test]
    fn curvature_of_square_is_one() {
        let gamma = curvature_from_rho(&|x: &DVector<f64>| x[0] * x[0], 1, 1e-4, None).unwrap();
        assert!((gamma[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn curvature_of_one_minus_cos_is_half() {
        let gamma = curvature_from_rho(&|x: &DVector<f64>| 1.0 - x[0].cos(), 1, 1e-4, None).unwrap();
        assert!((gamma[(0, 0)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn quartic_cost_is_degenerate() {
        // x⁴ has zero curvature at 0; with h = 1e-6 the second difference is
        // ~h² = 1e-12, safely below the default floor.
        let err = curvature_from_rho(&|x: &DVector<f64>| x[0].powi(4), 1, 1e-6, None);
        assert!(err.is_err());
    }

    #[test]
    fn curvature_recovers_quadratic_form_matrix() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g2 = g.clone();
        let rho = move |x: &DVector<f64>| (x.transpose() * &g2 * x)[(0, 0)];
        let h = 1e-4;
        let got = curvature_from_rho(&rho, 2, h, None).unwrap();
        let rel = (&got - &g).norm() / g.norm();
        assert!(rel < 10.0 * h * h, "relative error {rel:.3e}");
    }

    #[test]
    fn bernoulli_model_validates_inputs() {
        assert!(BernoulliModel::new(0.5, 1000, 0.01).is_ok());
        assert!(BernoulliModel::new(0.0, 1000, 0.01).is_err());
        assert!(BernoulliModel::new(0.5, 5, 0.01).is_err());
        assert!(BernoulliModel::new(0.5, 1000, 1.5).is_err());
        assert_eq!(BernoulliModel::new(0.5, 1000, 0.01).unwrap().t_star(), 10);
    }

    #[test]
    fn penalty_rejects_bad_inputs() {
        assert!(PenaltySpec::scalar(-1.0, 1.0).is_err());
        assert!(PenaltySpec::scalar(0.1, -1.0).is_err());
        assert!(PenaltySpec::scalar(0.1, 1.0).is_ok());
    }
}
