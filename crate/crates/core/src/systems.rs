//! Built-in kinematic systems and measurement models.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::eqf::MeasurementModel;
use crate::error::{Error, Result};
use crate::kinematics::{KinematicSystem, LiftMap};
use crate::lie::{GroupElement, GroupKind, GroupSpec, SpecRef};

pub const DEFAULT_CURVATURE: f64 = 0.1;
pub const DEFAULT_RN_DIM: usize = 3;

/// Classification flags a built-in system is constructed to have.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ExpectedClass {
    pub left: bool,
    pub right: bool,
    pub bi: bool,
    pub dual: bool,
    pub group_affine: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SystemEntry {
    pub id: &'static str,
    pub group: &'static str,
    pub doc: &'static str,
    pub expected: ExpectedClass,
    pub equivariant: bool,
}

const fn class(left: bool, right: bool, dual: bool, group_affine: bool) -> ExpectedClass {
    ExpectedClass {
        left,
        right,
        bi: left && right,
        dual,
        group_affine,
    }
}

const REGISTRY: &[SystemEntry] = &[
    SystemEntry {
        id: "so3_left",
        group: "so3",
        doc: "Attitude driven by body-frame angular velocity: L(X) = I₃.",
        expected: class(true, false, false, true),
        equivariant: true,
    },
    SystemEntry {
        id: "so3_right",
        group: "so3",
        doc: "Attitude driven by reference-frame angular velocity: L(X) = Ad∨_{X⁻¹}.",
        expected: class(false, true, false, true),
        equivariant: true,
    },
    SystemEntry {
        id: "so3_dual",
        group: "so3",
        doc: "Body and reference angular velocities side by side: L(X) = [I₃ | Ad∨_{X⁻¹}].",
        expected: class(false, false, true, true),
        equivariant: true,
    },
    SystemEntry {
        id: "so3_single_axis",
        group: "so3",
        doc: "Body-frame rotation about axis 1 only: L(X) = e₁ (p = 1), not equivariant.",
        expected: class(true, false, false, true),
        equivariant: false,
    },
    SystemEntry {
        id: "rn_integrator",
        group: "rn",
        doc: "Translation integrator on ℝⁿ (n = 3 unless `n` is given): L(X) = Iₙ.",
        expected: class(true, true, true, true),
        equivariant: true,
    },
    SystemEntry {
        id: "se3_body",
        group: "se3",
        doc: "Rigid body driven by body-frame twist (ω, u): L(X) = I₆.",
        expected: class(true, false, false, true),
        equivariant: true,
    },
    SystemEntry {
        id: "so3_curved",
        group: "so3",
        doc: "State-dependent lift L(X) = I₃ + α·X (α = 0.1 unless `alpha` is given); neither invariant nor group affine.",
        expected: class(false, false, false, false),
        equivariant: false,
    },
];

pub fn registry() -> &'static [SystemEntry] {
    REGISTRY
}

pub fn lookup(id: &str) -> Result<&'static SystemEntry> {
    REGISTRY
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::UnknownSystem(id.to_string()))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub alpha: Option<f64>,
    pub n: Option<usize>,
}

fn rot3(x: &GroupElement) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::from_fn(|i, j| x.matrix()[(i, j)])
}

fn v3(v: &DVector<f64>, offset: usize) -> Vector3<f64> {
    Vector3::new(v[offset], v[offset + 1], v[offset + 2])
}

fn dv(v: Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

/// `Ad∨_{X⁻¹}`, which is `Xᵀ` on SO(3).
fn ad_inv(x: &GroupElement) -> DMatrix<f64> {
    x.inverse().adjoint()
}

pub fn build_system(id: &str, params: &SystemParams) -> Result<KinematicSystem> {
    lookup(id)?;
    if params.alpha.is_some() && id != "so3_curved" {
        return Err(Error::InvalidParams(format!("`alpha` does not apply to `{id}`")));
    }
    if params.n.is_some() && id != "rn_integrator" {
        return Err(Error::InvalidParams(format!("`n` does not apply to `{id}`")));
    }
    let so3 = GroupSpec::so3;
    let sys = match id {
        "so3_left" => KinematicSystem::new(
            so3(),
            3,
            LiftMap::new(|_| DMatrix::identity(3, 3)).with_derivative(|_, _, _| DVector::zeros(3)),
            id,
        )
        .with_input_action(ad_inv),
        "so3_right" => KinematicSystem::new(
            so3(),
            3,
            // d/ds (exp(sδ)X)ᵀ v = Xᵀ (v × δ)
            LiftMap::new(ad_inv).with_derivative(|x, v, d| dv(rot3(x).transpose() * v3(v, 0).cross(&v3(d, 0)))),
            id,
        )
        .with_input_action(|_| DMatrix::identity(3, 3)),
        "so3_dual" => KinematicSystem::new(
            so3(),
            6,
            LiftMap::new(|x| {
                let mut l = DMatrix::zeros(3, 6);
                l.view_mut((0, 0), (3, 3)).fill_with_identity();
                l.view_mut((0, 3), (3, 3)).copy_from(&ad_inv(x));
                l
            })
            .with_derivative(|x, v, d| dv(rot3(x).transpose() * v3(v, 3).cross(&v3(d, 0)))),
            id,
        )
        .with_input_action(|a| {
            let mut psi = DMatrix::identity(6, 6);
            psi.view_mut((0, 0), (3, 3)).copy_from(&ad_inv(a));
            psi
        }),
        "so3_single_axis" => KinematicSystem::new(
            so3(),
            1,
            LiftMap::new(|_| DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).with_derivative(|_, _, _| DVector::zeros(3)),
            id,
        ),
        "rn_integrator" => {
            let n = params.n.unwrap_or(DEFAULT_RN_DIM);
            if n == 0 {
                return Err(Error::InvalidParams("`n` must be at least 1".into()));
            }
            KinematicSystem::new(
                GroupSpec::rn(n),
                n,
                LiftMap::new(move |_| DMatrix::identity(n, n)).with_derivative(move |_, _, _| DVector::zeros(n)),
                id,
            )
            .with_input_action(move |_| DMatrix::identity(n, n))
        }
        "se3_body" => KinematicSystem::new(
            GroupSpec::se3(),
            6,
            LiftMap::new(|_| DMatrix::identity(6, 6)).with_derivative(|_, _, _| DVector::zeros(6)),
            id,
        )
        .with_input_action(ad_inv),
        "so3_curved" => {
            let alpha = params.alpha.unwrap_or(DEFAULT_CURVATURE);
            if !alpha.is_finite() {
                return Err(Error::InvalidParams("`alpha` must be finite".into()));
            }
            KinematicSystem::new(
                so3(),
                3,
                LiftMap::new(move |x| DMatrix::identity(3, 3) + x.matrix() * alpha)
                    // d/ds (I + α exp(sδ)X) v = α δ × (X v)
                    .with_derivative(move |x, v, d| dv(v3(d, 0).cross(&(rot3(x) * v3(v, 0))) * alpha)),
                id,
            )
        }
        _ => unreachable!("lookup accepted `{id}`"),
    };
    Ok(sys)
}

/// Measurement model configuration. `directions` are reference vectors
/// observed in the body frame (SO(3)); `landmarks` are reference points
/// observed in the body frame (SE(3)); `position` reads the translation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementConfig {
    Direction { directions: Vec<[f64; 3]> },
    Landmark { landmarks: Vec<[f64; 3]> },
    Position,
}

impl MeasurementConfig {
    pub fn output_dim(&self, spec: &GroupSpec) -> usize {
        match self {
            MeasurementConfig::Direction { directions } => 3 * directions.len(),
            MeasurementConfig::Landmark { landmarks } => 3 * landmarks.len(),
            MeasurementConfig::Position => translation_dim(spec),
        }
    }
}

fn translation_dim(spec: &GroupSpec) -> usize {
    match spec.kind() {
        GroupKind::Se3 => 3,
        GroupKind::Rn(n) => n,
        _ => 0,
    }
}

pub fn build_measurement(cfg: &MeasurementConfig, spec: &SpecRef) -> Result<MeasurementModel> {
    match cfg {
        MeasurementConfig::Direction { directions } => {
            if spec.kind() != GroupKind::So3 {
                return Err(Error::InvalidParams("direction measurements require SO(3)".into()));
            }
            if directions.is_empty() {
                return Err(Error::InvalidParams("at least one direction is required".into()));
            }
            let dirs: Vec<Vector3<f64>> = directions.iter().map(|d| Vector3::from_column_slice(d)).collect();
            let dirs2 = dirs.clone();
            let m = 3 * dirs.len();
            Ok(MeasurementModel::new(
                m,
                move |x| {
                    let rt = rot3(x).transpose();
                    DVector::from_iterator(m, dirs.iter().flat_map(|d| (rt * d).iter().cloned().collect::<Vec<_>>()))
                },
                "direction",
            )
            // d/ds (exp(sδ)X)ᵀ d = Xᵀ (d × δ)
            .with_derivative(move |x, delta| {
                let rt = rot3(x).transpose();
                let w = v3(delta, 0);
                DVector::from_iterator(m, dirs2.iter().flat_map(|d| (rt * d.cross(&w)).iter().cloned().collect::<Vec<_>>()))
            }))
        }
        MeasurementConfig::Landmark { landmarks } => {
            if spec.kind() != GroupKind::Se3 {
                return Err(Error::InvalidParams("landmark measurements require SE(3)".into()));
            }
            if landmarks.is_empty() {
                return Err(Error::InvalidParams("at least one landmark is required".into()));
            }
            let pts: Vec<Vector3<f64>> = landmarks.iter().map(|p| Vector3::from_column_slice(p)).collect();
            let pts2 = pts.clone();
            let m = 3 * pts.len();
            let split = |x: &GroupElement| {
                let r = rot3(x);
                let t = Vector3::new(x.matrix()[(0, 3)], x.matrix()[(1, 3)], x.matrix()[(2, 3)]);
                (r, t)
            };
            Ok(MeasurementModel::new(
                m,
                move |x| {
                    let (r, t) = split(x);
                    let rt = r.transpose();
                    DVector::from_iterator(m, pts.iter().flat_map(|p| (rt * (p - t)).iter().cloned().collect::<Vec<_>>()))
                },
                "landmark",
            )
            // d/ds (exp(sδ)X)⁻¹ p = −Rᵀ (ω × p + u)
            .with_derivative(move |x, delta| {
                let (r, _) = split(x);
                let rt = r.transpose();
                let (w, u) = (v3(delta, 0), v3(delta, 3));
                DVector::from_iterator(
                    m,
                    pts2.iter()
                        .flat_map(|p| (-(rt * (w.cross(p) + u))).iter().cloned().collect::<Vec<_>>()),
                )
            }))
        }
        MeasurementConfig::Position => {
            let k = translation_dim(spec);
            if k == 0 {
                return Err(Error::InvalidParams("position measurements require SE(3) or R^n".into()));
            }
            let kind = spec.kind();
            Ok(
                MeasurementModel::new(k, |x| x.translation(), "position").with_derivative(move |x, delta| match kind {
                    // translation of exp(sδ)X is exp(sω)t + s·u + O(s²)
                    GroupKind::Se3 => {
                        let t = v3(&x.translation(), 0);
                        dv(v3(delta, 0).cross(&t) + v3(delta, 3))
                    }
                    _ => delta.clone(),
                }),
            )
        }
    }
}

pub fn group_spec(id: &str, n: Option<usize>) -> Result<SpecRef> {
    match id {
        "so2" => Ok(GroupSpec::so2()),
        "so3" => Ok(GroupSpec::so3()),
        "se3" => Ok(GroupSpec::se3()),
        "rn" => Ok(GroupSpec::rn(n.unwrap_or(DEFAULT_RN_DIM))),
        other => Err(Error::InvalidParams(format!("unknown group `{other}`"))),
    }
}
