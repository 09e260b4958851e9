//! The equivariant filter.
//!
//! The observer runs on the group, `d/dt X̂ = F_v(X̂) + Δ·X̂`, with the
//! canonical error `E = X·X̂⁻¹`. Linearising the error kinematics at `E = I`
//! gives `ε̇ = A ε − Δ`, `y ≈ C ε`, and `Δ` is the Kalman-Bucy correction
//! `Σ Cᵀ Q⁻¹ (y − h(X̂))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::KinematicSystem;
use crate::lie::GroupElement;
use crate::linalg::{floor_eigenvalues, min_eigenvalue, symmetrize};

pub type MeasureFn = Arc<dyn Fn(&GroupElement) -> DVector<f64> + Send + Sync>;
/// `(X̂, δ) ↦ d/ds h(exp(sδ)·X̂) |_{s=0}`.
pub type MeasureDerivFn = Arc<dyn Fn(&GroupElement, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub struct MeasurementModel {
    h: MeasureFn,
    dim: usize,
    analytic_dh: Option<MeasureDerivFn>,
    label: String,
}

impl std::fmt::Debug for MeasurementModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasurementModel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic_dh", &self.analytic_dh.is_some())
            .finish()
    }
}

impl MeasurementModel {
    pub fn new(dim: usize, h: impl Fn(&GroupElement) -> DVector<f64> + Send + Sync + 'static, label: impl Into<String>) -> Self {
        Self {
            h: Arc::new(h),
            dim,
            analytic_dh: None,
            label: label.into(),
        }
    }

    pub fn with_derivative(mut self, dh: impl Fn(&GroupElement, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.analytic_dh = Some(Arc::new(dh));
        self
    }

    pub fn eval(&self, x: &GroupElement) -> DVector<f64> {
        (self.h)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn analytic_dh(&self) -> Option<&MeasureDerivFn> {
        self.analytic_dh.as_ref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Linearisation {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RiccatiForm {
    /// `Σ̇ = AΣ + ΣAᵀ + P − ΣCᵀQ⁻¹CΣ`.
    #[default]
    Standard,
    /// `Σ̇ = ΣA + AᵀΣ + P − ΣCᵀQCΣ`, kept for comparison only.
    AsPrinted,
}

/// Where the state matrix `A` is linearised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDynamics {
    /// At the observer state, through the equivariance of the lift. Valid for any system.
    #[default]
    Equivariant,
    /// At the identity; only correct for group affine systems.
    GroupAffine,
}

#[derive(Clone, Debug)]
pub struct FilterParams {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    q_inv: DMatrix<f64>,
    sigma0: DMatrix<f64>,
    pub linearisation: Linearisation,
    pub fd_step: f64,
    pub sigma_floor: f64,
    pub riccati_form: RiccatiForm,
    pub error_dynamics: ErrorDynamics,
    /// Re-project the observer state onto the group every this many steps (0 = never).
    pub project_every: u64,
}

fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidParams(format!("{name} must be square")));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidParams(format!("{name} must be symmetric")));
    }
    if !(min_eigenvalue(m) > 0.0) {
        return Err(Error::InvalidParams(format!("{name} must be positive definite")));
    }
    Ok(())
}

impl FilterParams {
    pub fn new(p: DMatrix<f64>, q: DMatrix<f64>, sigma0: DMatrix<f64>) -> Result<Self> {
        check_spd("P", &p)?;
        check_spd("Q", &q)?;
        check_spd("sigma0", &sigma0)?;
        if p.shape() != sigma0.shape() {
            return Err(Error::InvalidParams("P and sigma0 must have the same size".into()));
        }
        let q_inv = q
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParams("Q is not invertible".into()))?
            .inverse();
        Ok(Self {
            p,
            q,
            q_inv,
            sigma0,
            linearisation: Linearisation::Analytic,
            fd_step: 1e-5,
            sigma_floor: 1e-12,
            riccati_form: RiccatiForm::Standard,
            error_dynamics: ErrorDynamics::Equivariant,
            project_every: 100,
        })
    }

    /// Diagonal `P`, `Q`, `Σ₀`.
    pub fn from_diagonals(p: &[f64], q: &[f64], sigma0: &[f64]) -> Result<Self> {
        let diag = |d: &[f64]| DMatrix::from_diagonal(&DVector::from_column_slice(d));
        Self::new(diag(p), diag(q), diag(sigma0))
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn q_inv(&self) -> &DMatrix<f64> {
        &self.q_inv
    }
    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    /// Replace `P`, keeping everything else. `P` may be positive semidefinite here.
    pub fn with_state_noise(mut self, p: DMatrix<f64>) -> Result<Self> {
        if p.shape() != self.p.shape() || (&p - p.transpose()).amax() > 1e-12 || min_eigenvalue(&p) < 0.0 {
            return Err(Error::InvalidParams("P must be symmetric positive semidefinite".into()));
        }
        self.p = p;
        Ok(self)
    }
}

#[derive(Clone, Debug)]
pub struct FilterState {
    pub xhat: GroupElement,
    pub sigma: DMatrix<f64>,
    pub t: f64,
    pub steps: u64,
}

impl FilterState {
    pub fn new(xhat: GroupElement, params: &FilterParams) -> Self {
        Self {
            xhat,
            sigma: params.sigma0.clone(),
            t: 0.0,
            steps: 0,
        }
    }
}

/// `E = X · X̂⁻¹`.
pub fn state_error(x: &GroupElement, xhat: &GroupElement) -> Result<GroupElement> {
    x.compose(&xhat.inverse())
}

fn basis_vector(n: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })
}

/// Column i is `d/ds L(exp(s eᵢ)·X̂)·v` at `s = 0`.
fn lift_jacobian(sys: &KinematicSystem, xhat: &GroupElement, v: &DVector<f64>, params: &FilterParams) -> Result<DMatrix<f64>> {
    let spec = sys.spec();
    let n = spec.algebra_dim();
    if v.len() != sys.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: sys.input_dim(),
            got: v.len(),
        });
    }
    let mut jac = DMatrix::zeros(n, n);
    match params.linearisation {
        Linearisation::Analytic => {
            let dx = sys
                .lift_map()
                .analytic_dx()
                .ok_or_else(|| Error::MissingAnalyticDerivative(format!("lift of `{}`", sys.label())))?;
            for i in 0..n {
                jac.set_column(i, &dx(xhat, v, &basis_vector(n, i)));
            }
        }
        Linearisation::FiniteDifference => {
            let s = params.fd_step;
            for i in 0..n {
                let e = basis_vector(n, i) * s;
                let plus = &spec.exp(&e) * xhat;
                let minus = &spec.exp(&(-e)) * xhat;
                let col = (sys.lift_matrix(&plus) * v - sys.lift_matrix(&minus) * v) / (2.0 * s);
                jac.set_column(i, &col);
            }
        }
    }
    Ok(jac)
}

/// State matrix of the linearised error dynamics at observer state `X̂`:
/// `Ad∨_{X̂} · D_X Λ(X, v)|_{X̂} · dR_{X̂}`.
pub fn a_matrix(sys: &KinematicSystem, xhat: &GroupElement, v: &DVector<f64>, params: &FilterParams) -> Result<DMatrix<f64>> {
    Ok(xhat.adjoint() * lift_jacobian(sys, xhat, v, params)?)
}

/// `D_E Λ(E, v)|_I`, independent of the observer state. Equal to
/// [`a_matrix`] whenever the system is group affine.
pub fn ga_a_matrix(sys: &KinematicSystem, v: &DVector<f64>, params: &FilterParams) -> Result<DMatrix<f64>> {
    lift_jacobian(sys, &sys.spec().identity(), v, params)
}

/// Output matrix: column i is `d/ds h(exp(s eᵢ)·X̂)` at `s = 0`.
pub fn c_matrix(model: &MeasurementModel, xhat: &GroupElement, params: &FilterParams) -> Result<DMatrix<f64>> {
    let spec = xhat.spec();
    let n = spec.algebra_dim();
    let mut c = DMatrix::zeros(model.dim, n);
    match params.linearisation {
        Linearisation::Analytic => {
            let dh = model
                .analytic_dh
                .as_ref()
                .ok_or_else(|| Error::MissingAnalyticDerivative(format!("measurement `{}`", model.label)))?;
            for i in 0..n {
                c.set_column(i, &dh(xhat, &basis_vector(n, i)));
            }
        }
        Linearisation::FiniteDifference => {
            let s = params.fd_step;
            for i in 0..n {
                let e = basis_vector(n, i) * s;
                let plus = model.eval(&(&spec.exp(&e) * xhat));
                let minus = model.eval(&(&spec.exp(&(-e)) * xhat));
                c.set_column(i, &((plus - minus) / (2.0 * s)));
            }
        }
    }
    Ok(c)
}

/// `Δ∨ = Σ Cᵀ Q⁻¹ (y − h(X̂))`.
pub fn correction(sigma: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>, innovation: &DVector<f64>) -> Result<DVector<f64>> {
    let weighted = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParams("Q is not positive definite".into()))?
        .solve(innovation);
    Ok(sigma * (c.transpose() * weighted))
}

fn riccati_rhs(sigma: &DMatrix<f64>, a: &DMatrix<f64>, ctqc: &DMatrix<f64>, p: &DMatrix<f64>, form: RiccatiForm) -> DMatrix<f64> {
    let drift = match form {
        RiccatiForm::Standard => a * sigma + sigma * a.transpose(),
        RiccatiForm::AsPrinted => sigma * a + a.transpose() * sigma,
    };
    drift + p - sigma * ctqc * sigma
}

/// One RK4 step of the Riccati equation, then symmetrization and an
/// eigenvalue floor at `params.sigma_floor`.
pub fn riccati_step(sigma: &DMatrix<f64>, a: &DMatrix<f64>, c: &DMatrix<f64>, params: &FilterParams, dt: f64) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let weight = match params.riccati_form {
        RiccatiForm::Standard => &params.q_inv,
        RiccatiForm::AsPrinted => &params.q,
    };
    let ctqc = c.transpose() * weight * c;
    let f = |s: &DMatrix<f64>| riccati_rhs(s, a, &ctqc, &params.p, params.riccati_form);
    let k1 = f(sigma);
    let k2 = f(&(sigma + &k1 * (dt / 2.0)));
    let k3 = f(&(sigma + &k2 * (dt / 2.0)));
    let k4 = f(&(sigma + &k3 * dt));
    let next = sigma + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericBlowup("Riccati solution is not finite".into()));
    }
    Ok(floor_eigenvalues(&symmetrize(&next), params.sigma_floor))
}

/// Advances the filter by `dt` using input `v` and measurement `y` at the
/// current time. The state update is the Lie–Trotter split
/// `X̂⁺ = exp(dt·Δ)·X̂·exp(dt·Λ(X̂, v))`.
pub fn filter_step(
    state: &FilterState,
    sys: &KinematicSystem,
    model: &MeasurementModel,
    v: &DVector<f64>,
    y: &DVector<f64>,
    dt: f64,
    params: &FilterParams,
) -> Result<FilterState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if y.len() != model.dim {
        return Err(Error::DimensionMismatch {
            what: "measurement",
            expected: model.dim,
            got: y.len(),
        });
    }
    let spec = sys.spec();
    let xhat = &state.xhat;
    let a = match params.error_dynamics {
        ErrorDynamics::Equivariant => a_matrix(sys, xhat, v, params)?,
        ErrorDynamics::GroupAffine => ga_a_matrix(sys, v, params)?,
    };
    let c = c_matrix(model, xhat, params)?;
    let innovation = y - model.eval(xhat);
    let delta = correction(&state.sigma, &c, &params.q, &innovation)?;
    let lam = sys.lift(xhat, v)?;

    let mut next = &(&spec.exp(&(delta * dt)) * xhat) * &spec.exp(&(lam * dt));
    let steps = state.steps + 1;
    if params.project_every > 0 && steps.is_multiple_of(params.project_every) {
        next = spec.project(next.matrix())?;
    }
    if next.matrix().iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericBlowup(format!("observer state is not finite at step {steps}")));
    }
    let sigma = riccati_step(&state.sigma, &a, &c, params, dt)?;
    Ok(FilterState {
        xhat: next,
        sigma,
        t: state.t + dt,
        steps,
    })
}

/// Error coordinates `ε = vee(log(X·X̂⁻¹))` at one instant.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub t: f64,
    pub eps: Vec<f64>,
    pub err_norm: f64,
    pub sigma_trace: f64,
}

impl ErrorRecord {
    pub fn new(t: f64, x: &GroupElement, xhat: &GroupElement, sigma: &DMatrix<f64>) -> Result<Self> {
        let eps = state_error(x, xhat)?.log()?;
        Ok(Self {
            t,
            err_norm: eps.norm(),
            eps: eps.iter().cloned().collect(),
            sigma_trace: sigma.trace(),
        })
    }
}
