//! Small dense linear-algebra helpers shared by the model, control and LTI code.
//!
//! Inverses go through LU with partial pivoting; definiteness checks go through a
//! Cholesky sweep whose pivots are compared against `PIVOT_RTOL * ‖A‖_F`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot floor for LU and Cholesky.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Relative tolerance used when checking symmetry of shaped damping.
pub const SYMMETRY_RTOL: f64 = 1e-9;

pub fn fro(a: &Mat) -> f64 {
    a.norm()
}

pub fn max_abs(v: &Vector) -> f64 {
    v.amax()
}

pub fn require_square(a: &Mat, n: usize, what: &'static str) -> Result<()> {
    if a.nrows() != n {
        return Err(Error::dim(what, n, a.nrows()));
    }
    if a.ncols() != n {
        return Err(Error::dim(what, n, a.ncols()));
    }
    Ok(())
}

pub fn require_len(v: &Vector, n: usize, what: &'static str) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(what, n, v.len()));
    }
    Ok(())
}

pub fn all_finite(a: &Mat) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `‖A − Aᵀ‖_F ≤ rtol · max(‖A‖_F, tiny)`.
pub fn is_symmetric(a: &Mat, rtol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = fro(a).max(f64::MIN_POSITIVE);
    (a - a.transpose()).norm() <= rtol * scale
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Returns the lower Cholesky factor, or `None` when a pivot falls below the
/// relative floor.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let floor = PIVOT_RTOL * fro(a);
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || d <= 0.0 {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Symmetric positive definite check: symmetry to `SYMMETRY_RTOL` and a successful
/// Cholesky factorization.
pub fn require_spd(a: &Mat, name: &'static str) -> Result<()> {
    if !all_finite(a) {
        return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
    }
    if !is_symmetric(a, SYMMETRY_RTOL) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    if cholesky(&symmetrize(a)).is_none() {
        return Err(Error::InvalidParameter(format!(
            "{name} is not positive definite"
        )));
    }
    Ok(())
}

pub fn is_spd(a: &Mat) -> bool {
    all_finite(a) && is_symmetric(a, SYMMETRY_RTOL) && cholesky(&symmetrize(a)).is_some()
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_sym_eigenvalue(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    nalgebra::SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Positive semidefinite within `rtol · ‖A‖_F` (zero matrix passes).
pub fn is_psd(a: &Mat, rtol: f64) -> bool {
    all_finite(a)
        && is_symmetric(a, SYMMETRY_RTOL)
        && min_sym_eigenvalue(a) >= -rtol * fro(a)
}

pub fn require_psd(a: &Mat, name: &'static str) -> Result<()> {
    if !all_finite(a) {
        return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
    }
    if !is_symmetric(a, SYMMETRY_RTOL) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    if min_sym_eigenvalue(a) < -PIVOT_RTOL.sqrt() * fro(a) {
        return Err(Error::InvalidParameter(format!(
            "{name} is not positive semidefinite"
        )));
    }
    Ok(())
}

fn lu_checked(a: &Mat) -> Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if !a.is_square() {
        return None;
    }
    let floor = PIVOT_RTOL * fro(a);
    let lu = a.clone().lu();
    let u = lu.u();
    if (0..a.nrows()).any(|i| !(u[(i, i)].abs() > floor)) {
        return None;
    }
    Some(lu)
}

pub fn try_inverse(a: &Mat) -> Option<Mat> {
    lu_checked(a).and_then(|lu| lu.try_inverse())
}

/// Inverse via LU with partial pivoting; `what` names the matrix in the error.
pub fn inverse(a: &Mat, what: &str) -> Result<Mat> {
    try_inverse(a).ok_or_else(|| Error::DegenerateModel(format!("{what} is singular")))
}

pub fn solve(a: &Mat, b: &Vector, what: &str) -> Result<Vector> {
    lu_checked(a)
        .and_then(|lu| lu.solve(b))
        .ok_or_else(|| Error::DegenerateModel(format!("{what} is singular")))
}

/// `A⁻¹ B` by LU, without forming the inverse; `None` when `A` is numerically singular.
pub fn try_solve_mat(a: &Mat, b: &Mat) -> Option<Mat> {
    lu_checked(a).and_then(|lu| lu.solve(b))
}

pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_column_slice(values))
}

/// Stacks equally sized blocks into one vector.
pub fn stack(parts: &[&Vector]) -> Vector {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(len);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

/// Relative max-norm difference with an absolute floor on the denominator.
pub fn rel_diff(a: &Vector, b: &Vector, floor: f64) -> f64 {
    let scale = a.amax().max(b.amax()).max(floor);
    (a - b).amax() / scale
}
