//! Closed-form matrix elements and pad-multiply-truncate products.

use super::{AngularFunction, AngularOperator, Basis, BasisKind};
use crate::{Error, Result, C64};
use nalgebra::DMatrix;

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// ⟨j+1,m|cosθ|j,m⟩ = √(((j+1)²−m²)/((2j+1)(2j+3))), symmetric, zero diagonal.
pub fn cos_theta_matrix(basis: &Basis) -> AngularOperator {
    let n = basis.dim();
    let mut mat = DMatrix::zeros(n, n);
    for (col, s) in basis.states().iter().enumerate() {
        if let Some(row) = basis.index(s.j + 1, s.m) {
            let j = s.j as f64;
            let m = s.m as f64;
            let v = (((j + 1.0).powi(2) - m * m) / ((2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt();
            mat[(row, col)] = real(v);
            mat[(col, row)] = real(v);
        }
    }
    AngularOperator::new("cos_theta", mat)
}

/// Matrix of sinθ e^{iφ} (raises m by one).
fn sin_theta_raise(basis: &Basis) -> DMatrix<C64> {
    let n = basis.dim();
    let mut mat = DMatrix::zeros(n, n);
    for (col, s) in basis.states().iter().enumerate() {
        let j = s.j as f64;
        let m = s.m as f64;
        if let Some(row) = basis.index(s.j + 1, s.m + 1) {
            let v = ((j + m + 1.0) * (j + m + 2.0) / ((2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt();
            mat[(row, col)] = real(-v);
        }
        if s.j >= 1 {
            if let Some(row) = basis.index(s.j - 1, s.m + 1) {
                let v = ((j - m) * (j - m - 1.0) / ((2.0 * j - 1.0) * (2.0 * j + 1.0))).sqrt();
                mat[(row, col)] = real(v);
            }
        }
    }
    mat
}

fn cos_theta_x(basis: &Basis) -> DMatrix<C64> {
    let r = sin_theta_raise(basis);
    (&r + r.adjoint()) * real(0.5)
}

fn cos_theta_y(basis: &Basis) -> DMatrix<C64> {
    let r = sin_theta_raise(basis);
    (&r - r.adjoint()) * C64::new(0.0, -0.5)
}

/// Restrict a matrix built on `padded` to the states of `basis`.
fn truncate(mat: &DMatrix<C64>, padded: &Basis, basis: &Basis) -> DMatrix<C64> {
    let map: Vec<usize> = basis
        .states()
        .iter()
        .map(|s| padded.index(s.j, s.m).expect("padded basis contains the model space"))
        .collect();
    DMatrix::from_fn(basis.dim(), basis.dim(), |r, c| mat[(map[r], map[c])])
}

/// a·b skipping the zeros of `a`; the elementary matrices have at most
/// four entries per row.
fn sparse_left_mul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for k in 0..a.ncols() {
        for i in 0..a.nrows() {
            let aik = a[(i, k)];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..b.ncols() {
                out[(i, j)] += aik * b[(k, j)];
            }
        }
    }
    out
}

/// Operator of `f` built from closed-form elementary matrices at truncation
/// j_max + degree(f), multiplied, then truncated back to `basis`.
pub fn analytic_operator(basis: &Basis, f: AngularFunction) -> Result<AngularOperator> {
    if let BasisKind::FixedM(_) = basis.kind() {
        if !f.is_axial() {
            return Err(Error::Config(format!(
                "{} couples different m and cannot act within a fixed-m block",
                f.label()
            )));
        }
    }
    let padded = basis.padded(f.degree());
    let z = || cos_theta_matrix(&padded).matrix;
    let mat = match f {
        AngularFunction::One => DMatrix::identity(padded.dim(), padded.dim()),
        AngularFunction::CosTheta => z(),
        AngularFunction::Cos2Theta => {
            let z = z();
            sparse_left_mul(&z, &z)
        }
        AngularFunction::Cos3Theta => {
            let z = z();
            sparse_left_mul(&z, &sparse_left_mul(&z, &z))
        }
        AngularFunction::CosThetaX => cos_theta_x(&padded),
        AngularFunction::CosThetaY => cos_theta_y(&padded),
        AngularFunction::Cos2ThetaX => {
            let x = cos_theta_x(&padded);
            sparse_left_mul(&x, &x)
        }
        AngularFunction::Cos2ThetaY => {
            let y = cos_theta_y(&padded);
            sparse_left_mul(&y, &y)
        }
        AngularFunction::CosThetaXCosThetaY => sparse_left_mul(&cos_theta_x(&padded), &cos_theta_y(&padded)),
    };
    Ok(AngularOperator::new(f.label(), truncate(&mat, &padded, basis)))
}

/// Diagonal J² with entries j(j+1).
pub fn j_squared(basis: &Basis) -> AngularOperator {
    let diag: Vec<C64> = basis
        .states()
        .iter()
        .map(|s| real((s.j * (s.j + 1)) as f64))
        .collect();
    AngularOperator::new("j_squared", DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
}

/// Diagonal J_z with entries m.
pub fn jz_matrix(basis: &Basis) -> AngularOperator {
    let diag: Vec<C64> = basis.states().iter().map(|s| real(s.m as f64)).collect();
    AngularOperator::new("j_z", DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_by_two_m0() {
        let b = Basis::new(1, BasisKind::FixedM(0)).unwrap();
        let c = cos_theta_matrix(&b);
        assert_eq!(c.matrix[(0, 0)], real(0.0));
        assert_relative_eq!(c.matrix[(0, 1)].re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(c.matrix[(1, 0)].re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn element_21_11() {
        let b = Basis::full(3);
        let c = cos_theta_matrix(&b);
        let v = c.matrix[(b.index(2, 1).unwrap(), b.index(1, 1).unwrap())].re;
        assert_relative_eq!(v, (3.0f64 / 15.0).sqrt(), epsilon = 1e-15);
        for i in 0..b.dim() {
            assert_eq!(c.matrix[(i, i)], real(0.0));
        }
    }

    #[test]
    fn cos2_diagonal_formula() {
        let b = Basis::full(6);
        let c2 = analytic_operator(&b, AngularFunction::Cos2Theta).unwrap();
        for (i, s) in b.states().iter().enumerate() {
            let j = s.j as f64;
            let m = s.m as f64;
            let expect = if s.j == 0 {
                1.0 / 3.0
            } else {
                1.0 / 3.0 + (2.0 / 3.0) * (j * (j + 1.0) - 3.0 * m * m) / ((2.0 * j - 1.0) * (2.0 * j + 3.0))
            };
            assert_relative_eq!(c2.matrix[(i, i)].re, expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn direction_cosines_squared_sum_to_one() {
        let b = Basis::full(5);
        let sum = analytic_operator(&b, AngularFunction::Cos2ThetaX).unwrap().matrix
            + analytic_operator(&b, AngularFunction::Cos2ThetaY).unwrap().matrix
            + analytic_operator(&b, AngularFunction::Cos2Theta).unwrap().matrix;
        let id = DMatrix::<C64>::identity(b.dim(), b.dim());
        assert!((sum - id).iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn transverse_cosines_rejected_in_fixed_m() {
        let b = Basis::new(4, BasisKind::FixedM(0)).unwrap();
        assert!(analytic_operator(&b, AngularFunction::CosThetaX).is_err());
        assert!(analytic_operator(&b, AngularFunction::Cos3Theta).is_ok());
    }

    #[test]
    fn angular_momentum_diagonals() {
        let b = Basis::full(4);
        let j2 = j_squared(&b);
        assert_eq!(j2.matrix[(b.index(0, 0).unwrap(), b.index(0, 0).unwrap())].re, 0.0);
        assert_eq!(j2.matrix[(b.index(1, 0).unwrap(), b.index(1, 0).unwrap())].re, 2.0);
        assert_eq!(j2.matrix[(b.index(4, 4).unwrap(), b.index(4, 4).unwrap())].re, 20.0);
        let jz = jz_matrix(&b);
        assert_eq!(jz.matrix[(b.index(3, -2).unwrap(), b.index(3, -2).unwrap())].re, -2.0);
    }
}
