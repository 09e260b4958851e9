//! Sampled classification of kinematic systems.
//!
//! Conditions that quantify over the whole group are replaced by seeded
//! random sampling; rank and nullspace decisions use the cutoff from
//! [`crate::linalg::rank_cutoff`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinematics::{flatten, CheckReport, FormalInput, KinematicSystem, LiftMap, Witness};
use crate::lie::{GroupElement, SpecRef};
use crate::linalg::{complement_within, hstack, intersect, nullspace, orth, rank, vstack};

/// Sample count, tolerance, RNG seed and `random_element` scale for a check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Sampling {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
    pub scale: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            samples: 50,
            tol: 1e-8,
            seed: 42,
            scale: 1.0,
        }
    }
}

impl Sampling {
    pub fn new(samples: usize, tol: f64, seed: u64) -> Self {
        Self {
            samples,
            tol,
            seed,
            ..Self::default()
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn states(&self, spec: &SpecRef, stream: u64) -> Vec<GroupElement> {
        let mut rng = self.rng(stream);
        (0..self.samples).map(|_| spec.random_element(&mut rng, self.scale)).collect()
    }
}

// Independent RNG streams so adding one check does not shift another's samples.
const STREAM_TYPE: u64 = 1;
const STREAM_GA: u64 = 2;
const STREAM_EXT: u64 = 3;
const STREAM_VERIFY: u64 = 4;

/// `L(X) − L(I)`; its nullspace holds the Type I directions at `X`.
fn typei_condition(sys: &KinematicSystem, x: &GroupElement, l_id: &DMatrix<f64>) -> DMatrix<f64> {
    sys.lift_matrix(x) - l_id
}

/// `L(X) − Ad∨_{X⁻¹} L(I)`; its nullspace holds the Type II directions at `X`.
fn typeii_condition(sys: &KinematicSystem, x: &GroupElement, l_id: &DMatrix<f64>) -> DMatrix<f64> {
    sys.lift_matrix(x) - x.inverse().adjoint() * l_id
}

fn max_column_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Basis (p × k) of the sampled Type I subspace `∩ₖ null(L(Xₖ) − L(I))`.
pub fn typei_subspace(sys: &KinematicSystem, s: &Sampling) -> DMatrix<f64> {
    let l_id = sys.lift_matrix(&sys.spec().identity());
    let blocks: Vec<_> = s
        .states(sys.spec(), STREAM_TYPE)
        .iter()
        .map(|x| typei_condition(sys, x, &l_id))
        .collect();
    nullspace(&stack_or_empty(blocks, sys), s.tol)
}

/// Basis (p × k) of the sampled Type II subspace `∩ₖ null(L(Xₖ) − Ad∨_{Xₖ⁻¹} L(I))`.
pub fn typeii_subspace(sys: &KinematicSystem, s: &Sampling) -> DMatrix<f64> {
    let l_id = sys.lift_matrix(&sys.spec().identity());
    let blocks: Vec<_> = s
        .states(sys.spec(), STREAM_TYPE)
        .iter()
        .map(|x| typeii_condition(sys, x, &l_id))
        .collect();
    nullspace(&stack_or_empty(blocks, sys), s.tol)
}

fn stack_or_empty(blocks: Vec<DMatrix<f64>>, sys: &KinematicSystem) -> DMatrix<f64> {
    if blocks.is_empty() {
        DMatrix::zeros(0, sys.input_dim())
    } else {
        vstack(&blocks)
    }
}

/// Type 0 ⊕ Type I ⊕ Type II splitting of the input space.
#[derive(Clone, Debug)]
pub struct TypeDecomposition {
    pub v0_basis: DMatrix<f64>,
    pub v1_perp_basis: DMatrix<f64>,
    pub v2_perp_basis: DMatrix<f64>,
    /// Worst violation of the Type I / Type II conditions by the returned bases.
    pub residual: f64,
}

impl TypeDecomposition {
    pub fn dims(&self) -> [usize; 3] {
        [self.v0_basis.ncols(), self.v1_perp_basis.ncols(), self.v2_perp_basis.ncols()]
    }
}

pub fn decompose(sys: &KinematicSystem, s: &Sampling) -> Result<TypeDecomposition> {
    let p = sys.input_dim();
    let v1 = typei_subspace(sys, s);
    let v2 = typeii_subspace(sys, s);
    let v0 = intersect(&v1, &v2, s.tol);
    let v1_perp = complement_within(&v0, &v1, s.tol);
    let v2_perp = complement_within(&v0, &v2, s.tol);

    let all = hstack(&[&v0, &v1_perp, &v2_perp]);
    if rank(&all, s.tol) < p {
        let uncovered = nullspace(&all.transpose(), s.tol);
        let witness = if uncovered.ncols() > 0 {
            uncovered.column(0).into_owned()
        } else {
            DVector::zeros(p)
        };
        return Err(Error::NotInvariant { witness });
    }

    let l_id = sys.lift_matrix(&sys.spec().identity());
    let mut residual: f64 = 0.0;
    for x in s.states(sys.spec(), STREAM_VERIFY).iter().take(10) {
        let type1 = hstack(&[&v0, &v1_perp]);
        let type2 = hstack(&[&v0, &v2_perp]);
        residual = residual
            .max(max_column_norm(&(typei_condition(sys, x, &l_id) * type1)))
            .max(max_column_norm(&(typeii_condition(sys, x, &l_id) * type2)));
    }
    Ok(TypeDecomposition {
        v0_basis: v0,
        v1_perp_basis: v1_perp,
        v2_perp_basis: v2_perp,
        residual,
    })
}

/// Basis (n × c) of the center of the Lie algebra: the common nullspace of
/// `μ ↦ vee([wedge(eᵢ), wedge(μ)])` over all basis elements `eᵢ`.
pub fn center_of_algebra(spec: &SpecRef, tol: f64) -> DMatrix<f64> {
    let n = spec.algebra_dim();
    let basis = spec.algebra_basis();
    let blocks: Vec<_> = basis
        .iter()
        .map(|ei| {
            let mut op = DMatrix::zeros(n, n);
            for (j, ej) in basis.iter().enumerate() {
                let bracket = ei * ej - ej * ei;
                op.set_column(j, &spec.vee_unchecked(&bracket));
            }
            op
        })
        .collect();
    nullspace(&vstack(&blocks), tol)
}

/// Residual of `F_v(AB) = F_v(A)B + A F_v(B) − A F_v(I) B` at sampled pairs
/// and every basis input.
pub fn is_group_affine(sys: &KinematicSystem, s: &Sampling) -> CheckReport {
    let spec = sys.spec();
    let p = sys.input_dim();
    let id = spec.identity();
    let mut rng = s.rng(STREAM_GA);
    let mut worst = 0.0;
    let mut witness: Option<Witness> = None;
    // F_v for all basis v at once: X · wedge(column j of L(X)).
    let fields = |x: &GroupElement| -> Vec<DMatrix<f64>> {
        let l = sys.lift_matrix(x);
        (0..p).map(|j| x.matrix() * spec.wedge(&l.column(j).into_owned())).collect()
    };
    let f_id = fields(&id);
    for _ in 0..s.samples {
        let a = spec.random_element(&mut rng, s.scale);
        let b = spec.random_element(&mut rng, s.scale);
        let f_ab = fields(&(&a * &b));
        let f_a = fields(&a);
        let f_b = fields(&b);
        for j in 0..p {
            let r = (&f_ab[j] - &f_a[j] * b.matrix() - a.matrix() * &f_b[j] + a.matrix() * &f_id[j] * b.matrix()).norm();
            if witness.is_none() || r > worst {
                worst = r;
                witness = Some(Witness {
                    a: flatten(a.matrix()),
                    x: flatten(b.matrix()),
                    input_index: j,
                    residual: r,
                });
            }
        }
    }
    let passed = worst < s.tol;
    CheckReport {
        passed,
        max_residual: worst,
        samples: s.samples,
        witness: if passed { None } else { witness },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Residuals {
    pub left: f64,
    pub right: f64,
    pub group_affine: f64,
    pub equivariance: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub system: String,
    pub left: bool,
    pub right: bool,
    pub bi: bool,
    pub dual: bool,
    pub invariant: bool,
    pub group_affine: bool,
    /// `None` when the system declares no input action.
    pub equivariant: Option<bool>,
    pub typei_dim: usize,
    pub typeii_dim: usize,
    pub max_residuals: Residuals,
    pub samples_used: usize,
    pub seed: u64,
}

pub fn classify_invariance(sys: &KinematicSystem, s: &Sampling) -> Result<InvarianceReport> {
    let p = sys.input_dim();
    let l_id = sys.lift_matrix(&sys.spec().identity());
    let mut left_res: f64 = 0.0;
    let mut right_res: f64 = 0.0;
    for x in s.states(sys.spec(), STREAM_TYPE) {
        left_res = left_res.max(max_column_norm(&typei_condition(sys, &x, &l_id)));
        right_res = right_res.max(max_column_norm(&typeii_condition(sys, &x, &l_id)));
    }
    let left = left_res < s.tol;
    let right = right_res < s.tol;

    let v1 = typei_subspace(sys, s);
    let v2 = typeii_subspace(sys, s);
    let invariant = rank(&hstack(&[&v1, &v2]), s.tol) == p;
    let dual = invariant && v1.ncols() > 0 && v2.ncols() > 0;

    let ga = is_group_affine(sys, s);
    let equivariance = match sys.input_action() {
        Some(_) => Some(crate::kinematics::check_equivariance(sys, s.samples, s.tol, s.seed)?),
        None => None,
    };

    Ok(InvarianceReport {
        system: sys.label().to_string(),
        left,
        right,
        bi: left && right,
        dual,
        invariant,
        group_affine: ga.passed,
        equivariant: equivariance.as_ref().map(|r| r.passed),
        typei_dim: v1.ncols(),
        typeii_dim: v2.ncols(),
        max_residuals: Residuals {
            left: left_res,
            right: right_res,
            group_affine: ga.max_residual,
            equivariance: equivariance.map(|r| r.max_residual),
        },
        samples_used: s.samples,
        seed: s.seed,
    })
}

/// Finite reduction of the equivariant input extension of a group affine system.
#[derive(Clone, Debug)]
pub struct ExtensionReduction {
    pub original_dim: usize,
    /// Orthonormal algebra-coordinate basis (n × r) of the Type I constants.
    pub typei_span_basis: DMatrix<f64>,
    /// Constant lift columns (n × perp_dim) appended to the original lift.
    pub perp_basis: DMatrix<f64>,
    pub perp_dim: usize,
    pub extended_system: KinematicSystem,
    pub rank_half: usize,
    pub rank_full: usize,
}

impl ExtensionReduction {
    pub fn extended_dim(&self) -> usize {
        self.original_dim + self.perp_dim
    }
}

/// The Type I constant `Λ(I, ψ_{B⁻¹}(v) − v)` as a map of `v`, with
/// `ψ_{B⁻¹}(v)` realized by the formal term `(1, B⁻¹, v)`:
/// `Ad∨_B · L(B) − L(I)`.
fn difference_operator(sys: &KinematicSystem, b: &GroupElement, l_id: &DMatrix<f64>) -> DMatrix<f64> {
    b.adjoint() * sys.lift_matrix(b) - l_id
}

pub fn reduce_group_affine_extension(sys: &KinematicSystem, s: &Sampling) -> Result<ExtensionReduction> {
    let ga = is_group_affine(sys, s);
    if !ga.passed {
        return Err(Error::NotGroupAffine { residual: ga.max_residual });
    }
    let spec = sys.spec();
    let p = sys.input_dim();
    let n = spec.algebra_dim();
    let id = spec.identity();
    let l_id = sys.lift_matrix(&id);

    let shifts = s.states(spec, STREAM_EXT);
    let blocks: Vec<_> = shifts.iter().map(|b| difference_operator(sys, b, &l_id)).collect();
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let full = if refs.is_empty() { DMatrix::zeros(n, 0) } else { hstack(&refs) };
    let half_cols = (s.samples / 2) * p;
    let half = full.columns(0, half_cols).into_owned();
    let rank_full = rank(&full, s.tol);
    let rank_half = rank(&half, s.tol);
    if rank_full != rank_half {
        return Err(Error::RankInstability {
            half: rank_half,
            full: rank_full,
        });
    }
    let span = orth(&full, s.tol);

    let original_typei_image = &l_id * typei_subspace(sys, s);
    let overlap = intersect(&span, &original_typei_image, s.tol);
    let perp = complement_within(&overlap, &span, s.tol);
    let perp_dim = perp.ncols();

    // Each sampled difference must be a Type I direction of the extension.
    for (b, m) in shifts.iter().zip(&blocks).take(10) {
        for j in 0..p {
            let v = DVector::from_fn(p, |i, _| if i == j { 1.0 } else { 0.0 });
            let w = FormalInput::zero(sys)
                .with_term(1.0, b.inverse(), v.clone())?
                .with_term(-1.0, id.clone(), v)?;
            let at_id = w.lift_at(&id)?;
            if (&at_id - m.column(j)).norm() > s.tol {
                return Err(Error::VerificationFailed(format!(
                    "difference column {j} disagrees with its formal lift"
                )));
            }
            for x in s.states(spec, STREAM_VERIFY).iter().take(5) {
                let r = (w.lift_at(x)? - &at_id).norm();
                if r > s.tol {
                    return Err(Error::VerificationFailed(format!(
                        "difference direction is not Type I (residual {r:.3e})"
                    )));
                }
            }
        }
    }

    let extended_system = extend_with_constants(sys, &perp);
    let ext_ga = is_group_affine(&extended_system, s);
    if !ext_ga.passed {
        return Err(Error::VerificationFailed(format!(
            "extended system is not group affine (residual {:.3e})",
            ext_ga.max_residual
        )));
    }

    Ok(ExtensionReduction {
        original_dim: p,
        typei_span_basis: span,
        perp_basis: perp,
        perp_dim,
        extended_system,
        rank_half,
        rank_full,
    })
}

/// `L_ext(X) = [L(X) | W]` with constant columns `W`.
fn extend_with_constants(sys: &KinematicSystem, w: &DMatrix<f64>) -> KinematicSystem {
    let p = sys.input_dim();
    let k = w.ncols();
    if k == 0 {
        return sys.clone();
    }
    let base = sys.clone();
    let w = w.clone();
    let mut lift = LiftMap::new(move |x| hstack(&[&base.lift_matrix(x), &w]));
    if let Some(dx) = sys.lift_map().analytic_dx().cloned() {
        lift = lift.with_derivative(move |x, v, delta| dx(x, &v.rows(0, p).into_owned(), delta));
    }
    KinematicSystem::new(sys.spec().clone(), p + k, lift, format!("{}+ext", sys.label()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionSummary {
    pub system: String,
    pub original_dim: usize,
    pub typei_span_dim: usize,
    pub perp_dim: usize,
    pub extended_dim: usize,
    pub rank_half: usize,
    pub rank_full: usize,
    pub perp_basis: Vec<Vec<f64>>,
    pub extended_group_affine: bool,
}

impl ExtensionReduction {
    pub fn summary(&self, s: &Sampling) -> ExtensionSummary {
        ExtensionSummary {
            system: self.extended_system.label().trim_end_matches("+ext").to_string(),
            original_dim: self.original_dim,
            typei_span_dim: self.typei_span_basis.ncols(),
            perp_dim: self.perp_dim,
            extended_dim: self.extended_dim(),
            rank_half: self.rank_half,
            rank_full: self.rank_full,
            perp_basis: self.perp_basis.column_iter().map(|c| c.iter().cloned().collect()).collect(),
            extended_group_affine: is_group_affine(&self.extended_system, s).passed,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionSummary {
    pub dims: [usize; 3],
    pub v0_basis: Vec<Vec<f64>>,
    pub v1_perp_basis: Vec<Vec<f64>>,
    pub v2_perp_basis: Vec<Vec<f64>>,
    pub residual: f64,
}

impl TypeDecomposition {
    pub fn summary(&self) -> DecompositionSummary {
        let cols = |m: &DMatrix<f64>| m.column_iter().map(|c| c.iter().cloned().collect()).collect();
        DecompositionSummary {
            dims: self.dims(),
            v0_basis: cols(&self.v0_basis),
            v1_perp_basis: cols(&self.v1_perp_basis),
            v2_perp_basis: cols(&self.v2_perp_basis),
            residual: self.residual,
        }
    }
}
