//! Kinematic systems represented by their lift.
//!
//! A system is stored as a state-dependent matrix `L(X)` (n × p) with
//! `Λ(X, v) = wedge(L(X) · v)`, so the vector field is `F_v(X) = X · Λ(X, v)`.
//! Linearity in `v` holds by construction.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{GroupElement, SpecRef};
use crate::linalg::{rank, vstack};

pub type LiftFn = Arc<dyn Fn(&GroupElement) -> DMatrix<f64> + Send + Sync>;
/// `(X, v, δ) ↦ d/ds L(exp(sδ)·X)·v |_{s=0}`, in algebra coordinates.
pub type LiftDerivFn = Arc<dyn Fn(&GroupElement, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// `A ↦ ψ∨(A)`, a p × p matrix.
pub type InputActionFn = Arc<dyn Fn(&GroupElement) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub struct LiftMap {
    eval: LiftFn,
    analytic_dx: Option<LiftDerivFn>,
}

impl LiftMap {
    pub fn new(eval: impl Fn(&GroupElement) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            analytic_dx: None,
        }
    }

    pub fn with_derivative(
        mut self,
        dx: impl Fn(&GroupElement, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.analytic_dx = Some(Arc::new(dx));
        self
    }

    pub fn eval(&self, x: &GroupElement) -> DMatrix<f64> {
        (self.eval)(x)
    }

    pub fn analytic_dx(&self) -> Option<&LiftDerivFn> {
        self.analytic_dx.as_ref()
    }
}

#[derive(Clone)]
pub struct KinematicSystem {
    spec: SpecRef,
    input_dim: usize,
    lift: LiftMap,
    input_action: Option<InputActionFn>,
    label: String,
}

impl fmt::Debug for KinematicSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KinematicSystem")
            .field("label", &self.label)
            .field("group", &self.spec.name())
            .field("input_dim", &self.input_dim)
            .field("input_action", &self.input_action.is_some())
            .field("analytic_dx", &self.lift.analytic_dx.is_some())
            .finish()
    }
}

impl KinematicSystem {
    pub fn new(spec: SpecRef, input_dim: usize, lift: LiftMap, label: impl Into<String>) -> Self {
        Self {
            spec,
            input_dim,
            lift,
            input_action: None,
            label: label.into(),
        }
    }

    pub fn with_input_action(mut self, psi: impl Fn(&GroupElement) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.input_action = Some(Arc::new(psi));
        self
    }

    pub fn spec(&self) -> &SpecRef {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lift_map(&self) -> &LiftMap {
        &self.lift
    }

    pub fn input_action(&self) -> Option<&InputActionFn> {
        self.input_action.as_ref()
    }

    /// `L(X)`.
    pub fn lift_matrix(&self, x: &GroupElement) -> DMatrix<f64> {
        self.lift.eval(x)
    }

    fn check_state(&self, x: &GroupElement) -> Result<()> {
        if !self.spec.same_group(x.spec()) {
            return Err(Error::SpecMismatch {
                left: self.spec.name(),
                right: x.spec().name(),
            });
        }
        Ok(())
    }

    fn check_input(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input",
                expected: self.input_dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Algebra coordinates of `Λ(X, v) = L(X) · v`.
    pub fn lift(&self, x: &GroupElement, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        self.check_input(v)?;
        Ok(self.lift.eval(x) * v)
    }

    /// `F_v(X) = X · wedge(Λ(X, v))` as an embedding-space matrix.
    pub fn system_field(&self, x: &GroupElement, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let lam = self.lift(x, v)?;
        Ok(x.matrix() * self.spec.wedge(&lam))
    }

    /// Seeded check that `[L(X₁); …; L(X_k)]` has full column rank p.
    pub fn is_injective(&self, states: usize, seed: u64, tol: f64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<_> = (0..states.max(3))
            .map(|_| self.lift.eval(&self.spec.random_element(&mut rng, 1.0)))
            .collect();
        rank(&vstack(&blocks), tol) == self.input_dim
    }
}

/// A tangent vector field on the group, `X ↦ F(X) ∈ T_X G`.
#[derive(Clone)]
pub struct VectorField {
    spec: SpecRef,
    eval: LiftFn,
}

impl VectorField {
    pub fn from_system(sys: &KinematicSystem, v: &DVector<f64>) -> Result<Self> {
        sys.check_input(v)?;
        let sys = sys.clone();
        let v = v.clone();
        Ok(Self {
            spec: Arc::clone(&sys.spec),
            eval: Arc::new(move |x| x.matrix() * sys.spec.wedge(&(sys.lift.eval(x) * &v))),
        })
    }

    pub fn eval(&self, x: &GroupElement) -> DMatrix<f64> {
        (self.eval)(x)
    }

    /// Body-frame coordinates `vee(X⁻¹ F(X))`.
    pub fn lift_at(&self, x: &GroupElement) -> Result<DVector<f64>> {
        self.spec.vee(&(x.inverse().matrix() * self.eval(x)))
    }

    /// The translated field `X ↦ F(X·A⁻¹)·A`.
    pub fn translate(&self, a: &GroupElement) -> Self {
        let inner = Arc::clone(&self.eval);
        let a = a.clone();
        let a_inv = a.inverse();
        Self {
            spec: Arc::clone(&self.spec),
            eval: Arc::new(move |x| inner(&(x * &a_inv)) * a.matrix()),
        }
    }

    /// Pointwise linear combination `Σ cᵢ Fᵢ`.
    pub fn combine(terms: &[(f64, VectorField)]) -> Self {
        assert!(!terms.is_empty(), "combine: at least one term required");
        let spec = Arc::clone(&terms[0].1.spec);
        let terms: Vec<_> = terms.to_vec();
        Self {
            spec,
            eval: Arc::new(move |x| {
                let mut acc = terms[0].1.eval(x) * terms[0].0;
                for (c, f) in &terms[1..] {
                    acc += f.eval(x) * *c;
                }
                acc
            }),
        }
    }
}

/// Right-translation action on the system field `F_v`: `X ↦ F_v(X·A⁻¹)·A`.
pub fn apply_dstar_r(a: &GroupElement, sys: &KinematicSystem, v: &DVector<f64>) -> Result<VectorField> {
    Ok(VectorField::from_system(sys, v)?.translate(a))
}

/// One term `c · (translate by A of F_v)` of a formal input.
#[derive(Clone, Debug)]
pub struct FormalTerm {
    pub coeff: f64,
    pub shift: GroupElement,
    pub input: DVector<f64>,
}

/// A finite formal combination `Σ cᵢ · (Aᵢ, vᵢ)` in the equivariant input
/// extension of `system`. Terms are never merged.
#[derive(Clone, Debug)]
pub struct FormalInput {
    system: KinematicSystem,
    terms: Vec<FormalTerm>,
}

impl FormalInput {
    pub fn zero(system: &KinematicSystem) -> Self {
        Self {
            system: system.clone(),
            terms: Vec::new(),
        }
    }

    /// The original input `v` as the single term `(1, I, v)`.
    pub fn embed(system: &KinematicSystem, v: &DVector<f64>) -> Result<Self> {
        Self::zero(system).with_term(1.0, system.spec().identity(), v.clone())
    }

    pub fn with_term(mut self, coeff: f64, shift: GroupElement, input: DVector<f64>) -> Result<Self> {
        self.system.check_state(&shift)?;
        self.system.check_input(&input)?;
        self.terms.push(FormalTerm { coeff, shift, input });
        Ok(self)
    }

    pub fn terms(&self) -> &[FormalTerm] {
        &self.terms
    }

    pub fn system(&self) -> &KinematicSystem {
        &self.system
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// List concatenation, i.e. the sum in the extension.
    pub fn concat(&self, other: &FormalInput) -> Result<FormalInput> {
        if !self.system.spec.same_group(&other.system.spec) {
            return Err(Error::SpecMismatch {
                left: self.system.spec.name(),
                right: other.system.spec.name(),
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(FormalInput {
            system: self.system.clone(),
            terms,
        })
    }

    pub fn scaled(&self, c: f64) -> FormalInput {
        FormalInput {
            system: self.system.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| FormalTerm {
                    coeff: t.coeff * c,
                    ..t.clone()
                })
                .collect(),
        }
    }

    /// Lift of the extended field at `X`: `Σ cᵢ · Ad∨_{Aᵢ⁻¹} · L(X·Aᵢ⁻¹) · vᵢ`.
    pub fn lift_at(&self, x: &GroupElement) -> Result<DVector<f64>> {
        self.system.check_state(x)?;
        let mut acc = DVector::zeros(self.system.spec.algebra_dim());
        for t in &self.terms {
            let a_inv = t.shift.inverse();
            let l = self.system.lift.eval(&(x * &a_inv));
            acc += a_inv.adjoint() * (l * &t.input) * t.coeff;
        }
        Ok(acc)
    }

    /// The input action on the extension: each `(c, A, v) ↦ (c, A·B, v)`.
    pub fn act(&self, b: &GroupElement) -> Result<FormalInput> {
        self.system.check_state(b)?;
        Ok(FormalInput {
            system: self.system.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| FormalTerm {
                    coeff: t.coeff,
                    shift: &t.shift * b,
                    input: t.input.clone(),
                })
                .collect(),
        })
    }
}

pub fn formal_lift(w: &FormalInput, x: &GroupElement) -> Result<DVector<f64>> {
    w.lift_at(x)
}

pub fn formal_action(b: &GroupElement, w: &FormalInput) -> Result<FormalInput> {
    w.act(b)
}

/// Worst sample found by a sampled identity check.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub a: Vec<f64>,
    pub x: Vec<f64>,
    pub input_index: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub max_residual: f64,
    pub samples: usize,
    pub witness: Option<Witness>,
}

pub(crate) fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    // row-major, which is how people read small matrices
    m.transpose().as_slice().to_vec()
}

/// Seeded check of `Ad∨_A · L(X·A) · ψ∨(A) · v = L(X) · v` over basis inputs.
/// The witness is reported only on failure.
pub fn check_equivariance(sys: &KinematicSystem, samples: usize, tol: f64, seed: u64) -> Result<CheckReport> {
    let psi = sys
        .input_action
        .as_ref()
        .ok_or_else(|| Error::MissingInputAction(sys.label.clone()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0;
    let mut witness = None;
    for _ in 0..samples {
        let a = sys.spec.random_element(&mut rng, 1.0);
        let x = sys.spec.random_element(&mut rng, 1.0);
        let lhs = a.adjoint() * sys.lift.eval(&(&x * &a)) * psi(&a);
        let rhs = sys.lift.eval(&x);
        let diff = lhs - rhs;
        for j in 0..sys.input_dim {
            let r = diff.column(j).norm();
            if witness.is_none() || r > worst {
                worst = r;
                witness = Some(Witness {
                    a: flatten(a.matrix()),
                    x: flatten(x.matrix()),
                    input_index: j,
                    residual: r,
                });
            }
        }
    }
    let passed = worst < tol;
    Ok(CheckReport {
        passed,
        max_residual: worst,
        samples,
        witness: if passed { None } else { witness },
    })
}

/// Seeded check of the right-action laws `ψ∨(I) = I` and `ψ∨(A)ψ∨(B) = ψ∨(BA)`.
/// Returns the worst residual over both laws.
pub fn input_action_law_residual(sys: &KinematicSystem, samples: usize, seed: u64) -> Result<f64> {
    let psi = sys
        .input_action
        .as_ref()
        .ok_or_else(|| Error::MissingInputAction(sys.label.clone()))?;
    let p = sys.input_dim;
    let mut worst = (psi(&sys.spec.identity()) - DMatrix::<f64>::identity(p, p)).amax();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = sys.spec.random_element(&mut rng, 1.0);
        let b = sys.spec.random_element(&mut rng, 1.0);
        let r = (psi(&a) * psi(&b) - psi(&(&b * &a))).amax();
        worst = f64::max(worst, r);
    }
    Ok(worst)
}
