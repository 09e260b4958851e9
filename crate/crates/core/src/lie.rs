//! Matrix Lie groups: SO(2), SO(3), SE(3) and ℝⁿ, all embedded as square matrices.
//!
//! Algebra coordinates follow one fixed convention:
//!
//! - so(2): the single generator `[[0, -1], [1, 0]]`.
//! - so(3): generators of rotation about axes 1, 2, 3, so `wedge(u) * w = u × w`.
//! - se(3): `(ω, u)` with the angular part first, `wedge(ω, u) = [[ω×, u], [0, 0]]`.
//! - ℝⁿ: canonical basis, realized as `(n+1)×(n+1)` homogeneous translations.
//!
//! Every vee'd quantity in the crate is expressed in these coordinates.

use std::fmt;
use std::ops::Mul;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::skew3;

/// Default tolerance on the group's defining constraints.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;
/// Relative projection residual above which a matrix is rejected by `vee`.
pub const ALGEBRA_TOL: f64 = 1e-8;
/// `log` refuses rotation angles within this distance of π.
pub const CUT_LOCUS_GUARD: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    So2,
    So3,
    Se3,
    Rn(usize),
}

impl GroupKind {
    pub fn matrix_dim(self) -> usize {
        match self {
            GroupKind::So2 => 2,
            GroupKind::So3 => 3,
            GroupKind::Se3 => 4,
            GroupKind::Rn(n) => n + 1,
        }
    }

    pub fn algebra_dim(self) -> usize {
        match self {
            GroupKind::So2 => 1,
            GroupKind::So3 => 3,
            GroupKind::Se3 => 6,
            GroupKind::Rn(n) => n,
        }
    }
}

/// Descriptor of a shipped matrix Lie group.
#[derive(Clone, Debug)]
pub struct GroupSpec {
    kind: GroupKind,
    basis: Vec<DMatrix<f64>>,
    membership_tol: f64,
}

pub type SpecRef = Arc<GroupSpec>;

impl GroupSpec {
    pub fn new(kind: GroupKind) -> SpecRef {
        Arc::new(Self::build(kind, DEFAULT_MEMBERSHIP_TOL))
    }

    /// Same group with a different membership tolerance.
    pub fn with_membership_tol(kind: GroupKind, tol: f64) -> SpecRef {
        Arc::new(Self::build(kind, tol))
    }

    fn build(kind: GroupKind, membership_tol: f64) -> Self {
        let n = kind.algebra_dim();
        let basis = (0..n)
            .map(|i| wedge_kind(kind, &DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })))
            .collect();
        Self {
            kind,
            basis,
            membership_tol,
        }
    }

    pub fn so2() -> SpecRef {
        Self::new(GroupKind::So2)
    }
    pub fn so3() -> SpecRef {
        Self::new(GroupKind::So3)
    }
    pub fn se3() -> SpecRef {
        Self::new(GroupKind::Se3)
    }
    pub fn rn(n: usize) -> SpecRef {
        assert!(n > 0, "R^n needs n >= 1");
        Self::new(GroupKind::Rn(n))
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn name(&self) -> String {
        match self.kind {
            GroupKind::So2 => "SO(2)".into(),
            GroupKind::So3 => "SO(3)".into(),
            GroupKind::Se3 => "SE(3)".into(),
            GroupKind::Rn(n) => format!("R^{n}"),
        }
    }

    pub fn matrix_dim(&self) -> usize {
        self.kind.matrix_dim()
    }

    pub fn algebra_dim(&self) -> usize {
        self.kind.algebra_dim()
    }

    pub fn algebra_basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    pub fn membership_tol(&self) -> f64 {
        self.membership_tol
    }

    pub fn same_group(&self, other: &GroupSpec) -> bool {
        self.kind == other.kind
    }

    /// Coordinates in ℝⁿ to the algebra matrix.
    ///
    /// Panics if `coords` does not have length `algebra_dim`.
    pub fn wedge(&self, coords: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(
            coords.len(),
            self.algebra_dim(),
            "wedge: expected {} coordinates",
            self.algebra_dim()
        );
        wedge_kind(self.kind, coords)
    }

    /// Algebra matrix back to coordinates. The input is orthogonally projected
    /// onto the algebra; a residual above [`ALGEBRA_TOL`] (relative) is an error.
    pub fn vee(&self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        let d = self.matrix_dim();
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                what: "vee input",
                expected: d,
                got: m.nrows(),
            });
        }
        let x = self.vee_unchecked(m);
        let residual = (m - wedge_kind(self.kind, &x)).norm();
        if residual > ALGEBRA_TOL * m.norm().max(1.0) {
            return Err(Error::NotInAlgebra { residual });
        }
        Ok(x)
    }

    /// Orthogonal projection onto the algebra without the membership check.
    pub fn vee_unchecked(&self, m: &DMatrix<f64>) -> DVector<f64> {
        match self.kind {
            GroupKind::So2 => DVector::from_element(1, 0.5 * (m[(1, 0)] - m[(0, 1)])),
            GroupKind::So3 => {
                let w = vee_so3(m);
                DVector::from_column_slice(w.as_slice())
            }
            GroupKind::Se3 => {
                let w = vee_so3(m);
                DVector::from_vec(vec![w.x, w.y, w.z, m[(0, 3)], m[(1, 3)], m[(2, 3)]])
            }
            GroupKind::Rn(n) => DVector::from_fn(n, |i, _| m[(i, n)]),
        }
    }

    pub fn identity(self: &Arc<Self>) -> GroupElement {
        let d = self.matrix_dim();
        GroupElement {
            spec: Arc::clone(self),
            matrix: DMatrix::identity(d, d),
        }
    }

    /// Closed-form exponential for every shipped group.
    pub fn exp(self: &Arc<Self>, coords: &DVector<f64>) -> GroupElement {
        assert_eq!(coords.len(), self.algebra_dim(), "exp: wrong coordinate count");
        let matrix = match self.kind {
            GroupKind::So2 => {
                let (s, c) = coords[0].sin_cos();
                DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
            }
            GroupKind::So3 => {
                let r = so3_exp(&Vector3::new(coords[0], coords[1], coords[2]));
                DMatrix::from_column_slice(3, 3, r.as_slice())
            }
            GroupKind::Se3 => {
                let w = Vector3::new(coords[0], coords[1], coords[2]);
                let u = Vector3::new(coords[3], coords[4], coords[5]);
                let r = so3_exp(&w);
                let t = so3_left_jacobian(&w) * u;
                homogeneous(&r, &t)
            }
            GroupKind::Rn(n) => {
                let mut m = DMatrix::identity(n + 1, n + 1);
                for i in 0..n {
                    m[(i, n)] = coords[i];
                }
                m
            }
        };
        GroupElement {
            spec: Arc::clone(self),
            matrix,
        }
    }

    /// Checked construction from a raw matrix.
    pub fn element(self: &Arc<Self>, matrix: DMatrix<f64>) -> Result<GroupElement> {
        let d = self.matrix_dim();
        if matrix.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                what: "group matrix",
                expected: d,
                got: matrix.nrows(),
            });
        }
        let residual = self.membership_residual(&matrix);
        if !(residual <= self.membership_tol) {
            return Err(Error::NotInGroup { residual });
        }
        Ok(GroupElement {
            spec: Arc::clone(self),
            matrix,
        })
    }

    /// Largest violation of the defining constraints (max-abs entry norm).
    pub fn membership_residual(&self, m: &DMatrix<f64>) -> f64 {
        if m.iter().any(|x| !x.is_finite()) {
            return f64::INFINITY;
        }
        match self.kind {
            GroupKind::So2 | GroupKind::So3 => rotation_residual(&m.clone_owned()),
            GroupKind::Se3 => {
                let r = m.view((0, 0), (3, 3)).into_owned();
                rotation_residual(&r).max(bottom_row_residual(m))
            }
            GroupKind::Rn(n) => {
                let block = m.view((0, 0), (n, n)).into_owned() - DMatrix::<f64>::identity(n, n);
                block.amax().max(bottom_row_residual(m))
            }
        }
    }

    /// `exp(scale * z)` with `z` standard normal in ℝⁿ.
    pub fn random_element<R: Rng + ?Sized>(self: &Arc<Self>, rng: &mut R, scale: f64) -> GroupElement {
        assert!(scale >= 0.0, "random_element: scale must be non-negative");
        let z = DVector::from_fn(self.algebra_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.exp(&(z * scale))
    }

    /// Nearest group element: polar factor for rotation blocks, exact
    /// homogeneous structure elsewhere.
    pub fn project(self: &Arc<Self>, m: &DMatrix<f64>) -> Result<GroupElement> {
        let d = self.matrix_dim();
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                what: "projection input",
                expected: d,
                got: m.nrows(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::ProjectionFailed("non-finite entries".into()));
        }
        let matrix = match self.kind {
            GroupKind::So2 | GroupKind::So3 => nearest_rotation(m)?,
            GroupKind::Se3 => {
                let r = nearest_rotation(&m.view((0, 0), (3, 3)).into_owned())?;
                let mut out = DMatrix::identity(4, 4);
                out.view_mut((0, 0), (3, 3)).copy_from(&r);
                for i in 0..3 {
                    out[(i, 3)] = m[(i, 3)];
                }
                out
            }
            GroupKind::Rn(n) => {
                let mut out = DMatrix::identity(n + 1, n + 1);
                for i in 0..n {
                    out[(i, n)] = m[(i, n)];
                }
                out
            }
        };
        Ok(GroupElement {
            spec: Arc::clone(self),
            matrix,
        })
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A point on a matrix Lie group.
#[derive(Clone, Debug)]
pub struct GroupElement {
    spec: SpecRef,
    matrix: DMatrix<f64>,
}

impl GroupElement {
    pub fn spec(&self) -> &SpecRef {
        &self.spec
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    fn check_same(&self, other: &GroupElement) -> Result<()> {
        if self.spec.same_group(&other.spec) {
            Ok(())
        } else {
            Err(Error::SpecMismatch {
                left: self.spec.name(),
                right: other.spec.name(),
            })
        }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        self.check_same(other)?;
        Ok(GroupElement {
            spec: Arc::clone(&self.spec),
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn inverse(&self) -> GroupElement {
        let m = &self.matrix;
        let matrix = match self.spec.kind {
            GroupKind::So2 | GroupKind::So3 => m.transpose(),
            GroupKind::Se3 => {
                let rt = m.view((0, 0), (3, 3)).transpose();
                let t = m.view((0, 3), (3, 1)).into_owned();
                let mut out = DMatrix::identity(4, 4);
                out.view_mut((0, 0), (3, 3)).copy_from(&rt);
                out.view_mut((0, 3), (3, 1)).copy_from(&(-(&rt * t)));
                out
            }
            GroupKind::Rn(n) => {
                let mut out = DMatrix::identity(n + 1, n + 1);
                for i in 0..n {
                    out[(i, n)] = -m[(i, n)];
                }
                out
            }
        };
        GroupElement {
            spec: Arc::clone(&self.spec),
            matrix,
        }
    }

    /// Exponential coordinates of this element.
    pub fn log(&self) -> Result<DVector<f64>> {
        let m = &self.matrix;
        match self.spec.kind {
            GroupKind::So2 => {
                let angle = m[(1, 0)].atan2(m[(0, 0)]);
                if angle.abs() >= std::f64::consts::PI - CUT_LOCUS_GUARD {
                    return Err(Error::CutLocus { angle: angle.abs() });
                }
                Ok(DVector::from_element(1, angle))
            }
            GroupKind::So3 => {
                let w = so3_log(&mat3(m))?;
                Ok(DVector::from_column_slice(w.as_slice()))
            }
            GroupKind::Se3 => {
                let r = mat3(&m.view((0, 0), (3, 3)).into_owned());
                let w = so3_log(&r)?;
                let t = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
                let u = so3_left_jacobian_inv(&w) * t;
                Ok(DVector::from_vec(vec![w.x, w.y, w.z, u.x, u.y, u.z]))
            }
            GroupKind::Rn(n) => Ok(DVector::from_fn(n, |i, _| m[(i, n)])),
        }
    }

    /// Coordinate matrix of `Ad_X`: `wedge(Ad∨_X · u) = X · wedge(u) · X⁻¹`.
    pub fn adjoint(&self) -> DMatrix<f64> {
        let n = self.spec.algebra_dim();
        let inv = self.inverse();
        let mut out = DMatrix::zeros(n, n);
        for (i, b) in self.spec.basis.iter().enumerate() {
            let conj = &self.matrix * b * &inv.matrix;
            out.set_column(i, &self.spec.vee_unchecked(&conj));
        }
        out
    }

    /// Constraint residual of the stored matrix.
    pub fn membership_residual(&self) -> f64 {
        self.spec.membership_residual(&self.matrix)
    }

    /// Rotation angle of the rotational part (0 for ℝⁿ).
    pub fn rotation_angle(&self) -> f64 {
        match self.spec.kind {
            GroupKind::So2 => self.matrix[(1, 0)].atan2(self.matrix[(0, 0)]).abs(),
            GroupKind::So3 | GroupKind::Se3 => {
                let r = mat3(&self.matrix.view((0, 0), (3, 3)).into_owned());
                let w = vee_so3_m3(&r);
                let c = 0.5 * (r.trace() - 1.0);
                w.norm().atan2(c)
            }
            GroupKind::Rn(_) => 0.0,
        }
    }

    /// Translation column of homogeneous forms (empty for pure rotations).
    pub fn translation(&self) -> DVector<f64> {
        match self.spec.kind {
            GroupKind::So2 | GroupKind::So3 => DVector::zeros(0),
            GroupKind::Se3 => DVector::from_fn(3, |i, _| self.matrix[(i, 3)]),
            GroupKind::Rn(n) => DVector::from_fn(n, |i, _| self.matrix[(i, n)]),
        }
    }
}

/// Panics when the two elements live on different groups; use
/// [`GroupElement::compose`] for the checked product.
impl Mul for &GroupElement {
    type Output = GroupElement;

    fn mul(self, rhs: &GroupElement) -> GroupElement {
        self.compose(rhs).expect("group product of mismatched specs")
    }
}

pub fn compose(a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    a.compose(b)
}

pub fn inverse(a: &GroupElement) -> GroupElement {
    a.inverse()
}

pub fn adjoint_matrix(x: &GroupElement) -> DMatrix<f64> {
    x.adjoint()
}

pub fn random_element<R: Rng + ?Sized>(spec: &SpecRef, rng: &mut R, scale: f64) -> GroupElement {
    spec.random_element(rng, scale)
}

pub fn project_to_group(spec: &SpecRef, m: &DMatrix<f64>) -> Result<GroupElement> {
    spec.project(m)
}

fn wedge_kind(kind: GroupKind, x: &DVector<f64>) -> DMatrix<f64> {
    match kind {
        GroupKind::So2 => DMatrix::from_row_slice(2, 2, &[0.0, -x[0], x[0], 0.0]),
        GroupKind::So3 => {
            let s = skew3(&Vector3::new(x[0], x[1], x[2]));
            DMatrix::from_column_slice(3, 3, s.as_slice())
        }
        GroupKind::Se3 => {
            let s = skew3(&Vector3::new(x[0], x[1], x[2]));
            let mut m = DMatrix::zeros(4, 4);
            m.view_mut((0, 0), (3, 3)).copy_from(&s);
            m[(0, 3)] = x[3];
            m[(1, 3)] = x[4];
            m[(2, 3)] = x[5];
            m
        }
        GroupKind::Rn(n) => {
            let mut m = DMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                m[(i, n)] = x[i];
            }
            m
        }
    }
}

fn vee_so3(m: &DMatrix<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

fn vee_so3_m3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

fn mat3(m: &DMatrix<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[(i, j)])
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::identity(4, 4);
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = r[(i, j)];
        }
        m[(i, 3)] = t[i];
    }
    m
}

pub(crate) fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew3(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + k2 * 0.5;
    }
    Matrix3::identity() + k * (theta.sin() / theta) + k2 * ((1.0 - theta.cos()) / (theta * theta))
}

fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let w = vee_so3_m3(r);
    let s = w.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if theta >= std::f64::consts::PI - CUT_LOCUS_GUARD {
        return Err(Error::CutLocus { angle: theta });
    }
    if theta < SMALL_ANGLE {
        return Ok(w * (1.0 + theta * theta / 6.0));
    }
    if theta < 2.5 {
        return Ok(w * (theta / s));
    }
    // Near π the antisymmetric part is small; recover the axis from the symmetric part.
    // sym = (1 - c) k kᵀ, so its largest column is parallel to the axis k.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
    let diag = Vector3::new(sym[(0, 0)], sym[(1, 1)], sym[(2, 2)]);
    let mut axis = sym.column(diag.imax()).into_owned();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew3(w);
    let k2 = k * k;
    if theta < 1e-5 {
        return Matrix3::identity() + k * 0.5 + k2 / 6.0;
    }
    let t2 = theta * theta;
    Matrix3::identity() + k * ((1.0 - theta.cos()) / t2) + k2 * ((theta - theta.sin()) / (t2 * theta))
}

fn so3_left_jacobian_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew3(w);
    let k2 = k * k;
    if theta < 1e-5 {
        return Matrix3::identity() - k * 0.5 + k2 / 12.0;
    }
    let t2 = theta * theta;
    let coeff = (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / t2;
    Matrix3::identity() - k * 0.5 + k2 * coeff
}

fn rotation_residual(r: &DMatrix<f64>) -> f64 {
    let d = r.nrows();
    let ortho = (r.transpose() * r - DMatrix::<f64>::identity(d, d)).amax();
    let det = (r.determinant() - 1.0).abs();
    ortho.max(det)
}

fn bottom_row_residual(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    (0..d)
        .map(|j| {
            let target = if j == d - 1 { 1.0 } else { 0.0 };
            (m[(d - 1, j)] - target).abs()
        })
        .fold(0.0, f64::max)
}

fn nearest_rotation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-8 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::ProjectionFailed(format!(
            "rotation block is rank deficient (singular values {smin:.3e}..{smax:.3e})"
        )));
    }
    let mut u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = &u * &v_t;
    if r.determinant() < 0.0 {
        let k = svd.singular_values.imin();
        let col = -u.column(k);
        u.set_column(k, &col);
        r = &u * &v_t;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, rank};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn all_specs() -> Vec<SpecRef> {
        vec![GroupSpec::so2(), GroupSpec::so3(), GroupSpec::se3(), GroupSpec::rn(3)]
    }

    fn rz(angle: f64) -> GroupElement {
        GroupSpec::so3().exp(&DVector::from_vec(vec![0.0, 0.0, angle]))
    }

    #[test]
    fn basis_is_independent_and_matches_dims() {
        for spec in all_specs() {
            let n = spec.algebra_dim();
            let d = spec.matrix_dim();
            let mut stacked = DMatrix::zeros(d * d, n);
            for (i, b) in spec.algebra_basis().iter().enumerate() {
                stacked.set_column(i, &DVector::from_column_slice(b.as_slice()));
            }
            assert_eq!(rank(&stacked, 1e-12), n, "{}", spec.name());
        }
    }

    #[test]
    fn vee_matches_basis_projection() {
        // The closed-form vee must agree with Frobenius projection onto the basis.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in all_specs() {
            let d = spec.matrix_dim();
            let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let x = spec.vee_unchecked(&m);
            for (i, b) in spec.algebra_basis().iter().enumerate() {
                let proj = m.dot(b) / b.dot(b);
                assert!((proj - x[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rz_composition() {
        let a = rz(FRAC_PI_2);
        let b = &a * &a;
        assert!((b.matrix() - rz(PI).matrix()).norm() < 1e-12);
        let id = a.spec().identity();
        assert!(((&a * &id).matrix() - a.matrix()).norm() == 0.0);
    }

    #[test]
    fn compose_matches_matrix_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let se3 = GroupSpec::se3();
        let a = se3.random_element(&mut rng, 1.0);
        let b = se3.random_element(&mut rng, 1.0);
        let ab = a.compose(&b).unwrap();
        let mut direct = DMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    direct[(i, j)] += a.matrix()[(i, k)] * b.matrix()[(k, j)];
                }
            }
        }
        assert!((ab.matrix() - direct).norm() < 1e-12);
        assert!(ab.membership_residual() < 1e-9);
    }

    #[test]
    fn compose_rejects_mismatched_specs() {
        let a = GroupSpec::so3().identity();
        let b = GroupSpec::se3().identity();
        assert!(matches!(a.compose(&b), Err(Error::SpecMismatch { .. })));
    }

    #[test]
    fn inverse_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let so3 = GroupSpec::so3();
        let r = so3.random_element(&mut rng, 1.0);
        assert_eq!(r.inverse().matrix(), &r.matrix().transpose());
        assert_eq!(so3.identity().inverse().matrix(), so3.identity().matrix());

        let se3 = GroupSpec::se3();
        let x = se3.random_element(&mut rng, 1.0);
        let numeric = x.matrix().clone().try_inverse().unwrap();
        assert!((x.inverse().matrix() - numeric).norm() < 1e-12);
    }

    #[test]
    fn so3_wedge_is_cross_product() {
        let so3 = GroupSpec::so3();
        let e1 = so3.wedge(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert_eq!(e1[(2, 1)], 1.0);
        assert_eq!(e1[(1, 2)], -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = Vector3::new(rng.random(), rng.random(), rng.random());
            let w = Vector3::new(rng.random(), rng.random(), rng.random());
            let lhs = so3.wedge(&DVector::from_column_slice(u.as_slice())) * DVector::from_column_slice(w.as_slice());
            let cross = u.cross(&w);
            assert!((lhs - DVector::from_column_slice(cross.as_slice())).norm() < 1e-15);
        }
    }

    #[test]
    fn wedge_zero_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for spec in all_specs() {
            let n = spec.algebra_dim();
            assert_eq!(spec.wedge(&DVector::zeros(n)).norm(), 0.0);
            for _ in 0..100 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
                let back = spec.vee(&spec.wedge(&x)).unwrap();
                assert!((back - &x).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn vee_rejects_non_algebra_matrix() {
        let so3 = GroupSpec::so3();
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(so3.vee(&m), Err(Error::NotInAlgebra { .. })));
        let rn = GroupSpec::rn(2);
        let mut m = DMatrix::zeros(3, 3);
        m[(2, 0)] = 1.0;
        assert!(rn.vee(&m).is_err());
    }

    #[test]
    fn exp_matches_rodrigues_and_series() {
        let so3 = GroupSpec::so3();
        let r = so3.exp(&DVector::from_vec(vec![FRAC_PI_2, 0.0, 0.0]));
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
        assert!((r.matrix() - expected).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in all_specs() {
            let n = spec.algebra_dim();
            assert_eq!(spec.exp(&DVector::zeros(n)).matrix(), spec.identity().matrix());
            for _ in 0..20 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
                let series = expm(&spec.wedge(&x));
                assert!((spec.exp(&x).matrix() - series).norm() < 1e-12, "{}", spec.name());
            }
        }
    }

    #[test]
    fn log_inverts_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for spec in all_specs() {
            let n = spec.algebra_dim();
            for _ in 0..100 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-0.8..0.8));
                let back = spec.exp(&x).log().unwrap();
                assert!((back - &x).norm() < 1e-9, "{}", spec.name());
            }
            // tiny angles go through the series branch
            let tiny = DVector::from_element(n, 1e-10);
            assert!((spec.exp(&tiny).log().unwrap() - &tiny).norm() < 1e-18);
        }
    }

    #[test]
    fn log_near_pi_uses_stable_branch() {
        let so3 = GroupSpec::so3();
        let axis = Vector3::new(1.0, -2.0, 0.5).normalize();
        for angle in [2.6, 3.0, PI - 1e-3, PI - 2e-6] {
            let x = DVector::from_column_slice((axis * angle).as_slice());
            let back = so3.exp(&x).log().unwrap();
            assert!(
                (back - &x).norm() < 1e-9,
                "angle {angle}: {}",
                (so3.exp(&x).log().unwrap() - &x).norm()
            );
        }
    }

    #[test]
    fn log_rejects_cut_locus() {
        let x = rz(PI);
        assert!(matches!(x.log(), Err(Error::CutLocus { .. })));
        let so2 = GroupSpec::so2();
        assert!(so2.exp(&DVector::from_element(1, PI)).log().is_err());
    }

    #[test]
    fn adjoint_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for spec in all_specs() {
            let n = spec.algebra_dim();
            assert!((spec.identity().adjoint() - DMatrix::<f64>::identity(n, n)).norm() < 1e-15);
        }
        let so3 = GroupSpec::so3();
        let r = so3.random_element(&mut rng, 1.0);
        assert!((r.adjoint() - r.matrix()).norm() < 1e-14);

        // SE(3): [[R, 0], [t× R, R]] in (angular, linear) ordering.
        let se3 = GroupSpec::se3();
        let x = se3.random_element(&mut rng, 1.0);
        let rot = x.matrix().view((0, 0), (3, 3)).into_owned();
        let t = x.translation();
        let tx = skew3(&Vector3::new(t[0], t[1], t[2]));
        let tx = DMatrix::from_column_slice(3, 3, tx.as_slice());
        let mut expected = DMatrix::zeros(6, 6);
        expected.view_mut((0, 0), (3, 3)).copy_from(&rot);
        expected.view_mut((3, 3), (3, 3)).copy_from(&rot);
        expected.view_mut((3, 0), (3, 3)).copy_from(&(tx * &rot));
        assert!((x.adjoint() - expected).norm() < 1e-13);
    }

    #[test]
    fn random_element_properties() {
        let so3 = GroupSpec::so3();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(so3.random_element(&mut rng, 0.0).matrix(), so3.identity().matrix());
        for _ in 0..1000 {
            assert!(so3.random_element(&mut rng, 1.0).membership_residual() < 1e-9);
        }
        let a = so3.random_element(&mut ChaCha8Rng::seed_from_u64(11), 1.0);
        let b = so3.random_element(&mut ChaCha8Rng::seed_from_u64(11), 1.0);
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn projection() {
        let so3 = GroupSpec::so3();
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] += 1e-12;
        assert!((so3.project(&m).unwrap().matrix() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-9);

        let r = rz(0.7);
        assert!((so3.project(r.matrix()).unwrap().matrix() - r.matrix()).norm() < 1e-14);

        let degenerate = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(so3.project(&degenerate), Err(Error::ProjectionFailed(_))));

        // reflections project to a proper rotation
        let refl = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0]));
        let p = so3.project(&refl).unwrap();
        assert!(p.membership_residual() < 1e-12);
    }

    #[test]
    fn long_composition_drift_is_removed_by_projection() {
        let se3 = GroupSpec::se3();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let step = se3.random_element(&mut rng, 0.05);
        let mut acc = se3.identity();
        for _ in 0..100_000 {
            acc = &acc * &step;
        }
        let projected = se3.project(acc.matrix()).unwrap();
        assert!(projected.membership_residual() < 1e-9);
    }

    #[test]
    fn element_checks_membership() {
        let so3 = GroupSpec::so3();
        assert!(so3.element(DMatrix::identity(3, 3) * 2.0).is_err());
        assert!(so3.element(rz(0.3).into_matrix()).is_ok());
        let loose = GroupSpec::with_membership_tol(GroupKind::So3, 1e-3);
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 0)] += 1e-5;
        assert!(loose.element(m.clone()).is_ok());
        assert!(so3.element(m).is_err());
    }
}
