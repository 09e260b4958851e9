//! Dense linear-algebra helpers shared by the classification and filter code.
//!
//! Every rank and nullspace decision uses the same singular-value cutoff,
//! `tol * max(sigma_max, 1)`. The unit floor keeps a condition matrix made of
//! pure round-off from being read as full rank.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

/// Singular-value cutoff used for all rank decisions.
pub fn rank_cutoff(singular_values: &DVector<f64>, tol: f64) -> f64 {
    let smax = singular_values.iter().cloned().fold(0.0_f64, f64::max);
    tol * smax.max(1.0)
}

/// Numerical rank of `m`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let cut = rank_cutoff(&sv, tol);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Orthonormal basis (as columns) of the right nullspace of `m`.
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // Thin SVD only yields min(rows, cols) right singular vectors; pad so V is square.
    let padded = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let cut = rank_cutoff(&svd.singular_values, tol);
    let null_rows: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut)
        .map(|(i, _)| i)
        .collect();
    let mut out = DMatrix::zeros(cols, null_rows.len());
    for (j, &i) in null_rows.iter().enumerate() {
        out.set_column(j, &v_t.row(i).transpose());
    }
    out
}

/// Orthonormal basis (as columns) of the column span of `m`.
pub fn orth(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let cut = rank_cutoff(&svd.singular_values, tol);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cut)
        .map(|(i, _)| i)
        .collect();
    let mut out = DMatrix::zeros(rows, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Orthonormal basis of `span(a) ∩ span(b)`.
pub fn intersect(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "intersect: ambient dimensions differ");
    let qa = orth(a, tol);
    let qb = orth(b, tol);
    let (ka, kb) = (qa.ncols(), qb.ncols());
    if ka == 0 || kb == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let mut stacked = DMatrix::zeros(a.nrows(), ka + kb);
    stacked.view_mut((0, 0), (a.nrows(), ka)).copy_from(&qa);
    stacked.view_mut((0, ka), (a.nrows(), kb)).copy_from(&(-&qb));
    let null = nullspace(&stacked, tol);
    if null.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let coeffs = null.rows(0, ka).into_owned();
    orth(&(qa * coeffs), tol)
}

/// Orthonormal basis of the orthogonal complement of `span(sub)` inside `span(space)`.
pub fn complement_within(sub: &DMatrix<f64>, space: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let qs = orth(sub, tol);
    let qspace = orth(space, tol);
    if qs.ncols() == 0 {
        return qspace;
    }
    let projected = &qspace - &qs * (qs.transpose() * &qspace);
    orth(&projected, tol)
}

/// Horizontal concatenation of equally tall blocks.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row counts differ");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation of equally wide blocks.
pub fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column counts differ");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Raises every eigenvalue of the symmetric matrix `m` to at least `floor`.
/// Returns `m` untouched when no eigenvalue is below the floor.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return m.clone();
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&rebuilt)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square(), "expm: matrix must be square");
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn skew3(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
