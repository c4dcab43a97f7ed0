//! Truncated |j,m⟩ basis, angular quadrature grid and multiplication operators.

mod analytic;
mod grid;
pub mod legendre;

pub use analytic::{analytic_operator, cos_theta_matrix, j_squared, jz_matrix};
pub use grid::{multiplication_operator, AngularGrid, TransformDirection};

use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Quantum numbers of one rotor eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisIndex {
    pub j: u32,
    pub m: i32,
}

impl BasisIndex {
    pub fn new(j: u32, m: i32) -> Self {
        debug_assert!(m.unsigned_abs() <= j);
        BasisIndex { j, m }
    }
}

/// Which part of the rotor space is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// All m for every j ≤ j_max.
    Full,
    /// A single m-block (z-polarized problems conserve m).
    FixedM(i32),
}

/// Contiguous run of basis states sharing one m, with j ascending from |m|.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MBlock {
    pub m: i32,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    j_max: u32,
    kind: BasisKind,
    states: Vec<BasisIndex>,
    blocks: Vec<MBlock>,
}

impl Basis {
    pub fn new(j_max: u32, kind: BasisKind) -> Result<Self> {
        let ms: Vec<i32> = match kind {
            BasisKind::Full => (-(j_max as i32)..=j_max as i32).collect(),
            BasisKind::FixedM(m) => {
                if m.unsigned_abs() > j_max {
                    return Err(Error::validation(
                        "basis.m",
                        format!("|m| = {} exceeds j_max = {}", m.abs(), j_max),
                    ));
                }
                vec![m]
            }
        };
        let mut states = Vec::new();
        let mut blocks = Vec::with_capacity(ms.len());
        for m in ms {
            let offset = states.len();
            states.extend((m.unsigned_abs()..=j_max).map(|j| BasisIndex { j, m }));
            blocks.push(MBlock {
                m,
                offset,
                len: states.len() - offset,
            });
        }
        Ok(Basis {
            j_max,
            kind,
            states,
            blocks,
        })
    }

    pub fn full(j_max: u32) -> Self {
        Self::new(j_max, BasisKind::Full).expect("full basis is always valid")
    }

    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[BasisIndex] {
        &self.states
    }

    pub fn blocks(&self) -> &[MBlock] {
        &self.blocks
    }

    pub fn state(&self, i: usize) -> BasisIndex {
        self.states[i]
    }

    pub fn index(&self, j: u32, m: i32) -> Option<usize> {
        if j > self.j_max || m.unsigned_abs() > j {
            return None;
        }
        let block = match self.kind {
            BasisKind::Full => &self.blocks[(m + self.j_max as i32) as usize],
            BasisKind::FixedM(fixed) if fixed == m => &self.blocks[0],
            BasisKind::FixedM(_) => return None,
        };
        Some(block.offset + (j - m.unsigned_abs()) as usize)
    }

    /// Unit vector for |j,m⟩.
    pub fn ket(&self, j: u32, m: i32) -> Result<Vec<C64>> {
        let i = self.index(j, m).ok_or_else(|| {
            Error::validation("state", format!("|{},{}⟩ is not in the basis", j, m))
        })?;
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        v[i] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// Same kind of basis with a larger truncation.
    pub fn padded(&self, extra: u32) -> Basis {
        Basis::new(self.j_max + extra, self.kind).expect("padding keeps the basis valid")
    }
}

/// Angular functions that appear in the field couplings, written in terms of
/// direction cosines x = sinθ cosφ, y = sinθ sinφ, z = cosθ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AngularFunction {
    One,
    CosTheta,
    Cos2Theta,
    Cos3Theta,
    CosThetaX,
    CosThetaY,
    Cos2ThetaX,
    Cos2ThetaY,
    CosThetaXCosThetaY,
}

impl AngularFunction {
    pub fn eval(self, theta: f64, phi: f64) -> f64 {
        let (x, y, z) = direction_cosines(theta, phi);
        match self {
            AngularFunction::One => 1.0,
            AngularFunction::CosTheta => z,
            AngularFunction::Cos2Theta => z * z,
            AngularFunction::Cos3Theta => z * z * z,
            AngularFunction::CosThetaX => x,
            AngularFunction::CosThetaY => y,
            AngularFunction::Cos2ThetaX => x * x,
            AngularFunction::Cos2ThetaY => y * y,
            AngularFunction::CosThetaXCosThetaY => x * y,
        }
    }

    /// Polynomial degree in the direction cosines.
    pub fn degree(self) -> u32 {
        match self {
            AngularFunction::One => 0,
            AngularFunction::CosTheta | AngularFunction::CosThetaX | AngularFunction::CosThetaY => 1,
            AngularFunction::Cos3Theta => 3,
            _ => 2,
        }
    }

    /// Largest |Δm| the function can induce.
    pub fn azimuthal_order(self) -> u32 {
        match self {
            AngularFunction::CosThetaX | AngularFunction::CosThetaY => 1,
            AngularFunction::Cos2ThetaX
            | AngularFunction::Cos2ThetaY
            | AngularFunction::CosThetaXCosThetaY => 2,
            _ => 0,
        }
    }

    pub fn is_axial(self) -> bool {
        self.azimuthal_order() == 0
    }

    pub fn label(self) -> &'static str {
        match self {
            AngularFunction::One => "1",
            AngularFunction::CosTheta => "cos_theta",
            AngularFunction::Cos2Theta => "cos2_theta",
            AngularFunction::Cos3Theta => "cos3_theta",
            AngularFunction::CosThetaX => "cos_theta_x",
            AngularFunction::CosThetaY => "cos_theta_y",
            AngularFunction::Cos2ThetaX => "cos2_theta_x",
            AngularFunction::Cos2ThetaY => "cos2_theta_y",
            AngularFunction::CosThetaXCosThetaY => "cos_theta_x_cos_theta_y",
        }
    }

    pub const ALL: [AngularFunction; 9] = [
        AngularFunction::One,
        AngularFunction::CosTheta,
        AngularFunction::Cos2Theta,
        AngularFunction::Cos3Theta,
        AngularFunction::CosThetaX,
        AngularFunction::CosThetaY,
        AngularFunction::Cos2ThetaX,
        AngularFunction::Cos2ThetaY,
        AngularFunction::CosThetaXCosThetaY,
    ];
}

fn direction_cosines(theta: f64, phi: f64) -> (f64, f64, f64) {
    let (s, c) = theta.sin_cos();
    (s * phi.cos(), s * phi.sin(), c)
}

/// Dense matrix of an angular operator in a truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularOperator {
    pub label: String,
    pub matrix: DMatrix<C64>,
}

impl AngularOperator {
    pub fn new(label: impl Into<String>, matrix: DMatrix<C64>) -> Self {
        AngularOperator {
            label: label.into(),
            matrix,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn identity(dim: usize) -> Self {
        AngularOperator::new("1", DMatrix::identity(dim, dim))
    }

    /// Largest deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for k in 0..n {
                worst = worst.max((self.matrix[(i, k)] - self.matrix[(k, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn max_imag(&self) -> f64 {
        self.matrix.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|k| self.matrix[(i, k)] * v[k]).sum())
            .collect()
    }

    pub fn scaled(&self, s: f64, label: impl Into<String>) -> Self {
        AngularOperator::new(label, self.matrix.map(|z| z * s))
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_radius(&self) -> f64 {
        let eig = self.matrix.clone().symmetric_eigen();
        eig.eigenvalues.iter().map(|e| e.abs()).fold(0.0, f64::max)
    }
}
