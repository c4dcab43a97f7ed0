//! Gauss–Legendre × uniform-φ grid with spherical-harmonic synthesis and analysis.

use super::legendre::{gauss_legendre, normalized_legendre};
use super::{AngularFunction, AngularOperator, Basis, BasisKind};
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    /// Basis coefficients to grid values.
    ToGrid,
    /// Grid values to basis coefficients (quadrature projection).
    ToBasis,
}

/// Quadrature grid tied to one basis. Grid values are stored θ-major:
/// index `k * n_phi + l` for node cosθ_k and azimuth φ_l = 2πl / n_phi.
#[derive(Clone)]
pub struct AngularGrid {
    basis: Basis,
    n_theta: usize,
    n_phi: usize,
    cos_theta: Vec<f64>,
    weights: Vec<f64>,
    /// Per m-block table of λ_j^m(cosθ_k), laid out `[k * len + jj]`.
    tables: Vec<Vec<f64>>,
    forward: Option<Arc<dyn Fft<f64>>>,
    inverse: Option<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for AngularGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AngularGrid")
            .field("j_max", &self.basis.j_max())
            .field("n_theta", &self.n_theta)
            .field("n_phi", &self.n_phi)
            .finish()
    }
}

impl AngularGrid {
    /// Grid with the default sizes n_theta = 2(j_max+4), n_phi = 4(j_max+1)
    /// (n_phi = 1 for a fixed-m block).
    pub fn new(basis: &Basis) -> Result<Self> {
        let j = basis.j_max() as usize;
        let n_phi = match basis.kind() {
            BasisKind::Full => 4 * (j + 1),
            BasisKind::FixedM(_) => 1,
        };
        Self::with_sizes(basis, 2 * (j + 4), n_phi)
    }

    /// Grid with explicit sizes. Sizes below the round-trip exactness bound
    /// (n_theta ≥ j_max+3, n_phi ≥ 2 j_max+3 for the full basis) are rejected.
    pub fn with_sizes(basis: &Basis, n_theta: usize, n_phi: usize) -> Result<Self> {
        let j = basis.j_max() as usize;
        if n_theta < j + 3 {
            return Err(Error::Config(format!(
                "degenerate grid: n_theta = {} < j_max + 3 = {}",
                n_theta,
                j + 3
            )));
        }
        let (forward, inverse) = match basis.kind() {
            BasisKind::Full => {
                if n_phi < 2 * j + 3 {
                    return Err(Error::Config(format!(
                        "degenerate grid: n_phi = {} < 2 j_max + 3 = {}",
                        n_phi,
                        2 * j + 3
                    )));
                }
                let mut planner = FftPlanner::new();
                (
                    Some(planner.plan_fft_forward(n_phi)),
                    Some(planner.plan_fft_inverse(n_phi)),
                )
            }
            BasisKind::FixedM(_) => {
                if n_phi != 1 {
                    return Err(Error::Config(
                        "a fixed-m grid carries the azimuth analytically; n_phi must be 1".into(),
                    ));
                }
                (None, None)
            }
        };
        let (cos_theta, weights) = gauss_legendre(n_theta);
        let tables = basis
            .blocks()
            .iter()
            .map(|b| {
                let mut t = vec![0.0; n_theta * b.len];
                for (k, &x) in cos_theta.iter().enumerate() {
                    let vals = normalized_legendre(b.m, basis.j_max(), x);
                    t[k * b.len..(k + 1) * b.len].copy_from_slice(&vals);
                }
                t
            })
            .collect();
        Ok(AngularGrid {
            basis: basis.clone(),
            n_theta,
            n_phi,
            cos_theta,
            weights,
            tables,
            forward,
            inverse,
        })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn azimuth_weight(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    /// (θ, φ) of every grid point in storage order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.cos_theta {
            let theta = x.acos();
            for l in 0..self.n_phi {
                out.push((theta, 2.0 * PI * l as f64 / self.n_phi as f64));
            }
        }
        out
    }

    /// Quadrature weight of every grid point, so that Σ w f ≈ ∫ f dΩ.
    pub fn point_weights(&self) -> Vec<f64> {
        let a = self.azimuth_weight();
        let mut out = Vec::with_capacity(self.len());
        for &w in &self.weights {
            out.extend(std::iter::repeat(w * a).take(self.n_phi));
        }
        out
    }

    /// Values of `f` at the grid points. For a fixed-m grid only axial
    /// functions are meaningful; φ is taken as 0.
    pub fn function_values(&self, f: AngularFunction) -> Vec<f64> {
        self.points().into_iter().map(|(t, p)| f.eval(t, p)).collect()
    }

    /// Checked transform in either direction.
    pub fn transform(&self, input: &[C64], direction: TransformDirection) -> Result<Vec<C64>> {
        match direction {
            TransformDirection::ToGrid => {
                if input.len() != self.basis.dim() {
                    return Err(Error::Dimension {
                        expected: self.basis.dim(),
                        found: input.len(),
                    });
                }
                let mut out = vec![C64::new(0.0, 0.0); self.len()];
                self.synthesize(input, &mut out);
                Ok(out)
            }
            TransformDirection::ToBasis => {
                if input.len() != self.len() {
                    return Err(Error::Dimension {
                        expected: self.len(),
                        found: input.len(),
                    });
                }
                let mut work = input.to_vec();
                let mut out = vec![C64::new(0.0, 0.0); self.basis.dim()];
                self.analyze_in_place(&mut work, &mut out);
                Ok(out)
            }
        }
    }

    /// Basis coefficients → grid values. Lengths must match.
    pub fn synthesize(&self, coeffs: &[C64], grid: &mut [C64]) {
        debug_assert_eq!(coeffs.len(), self.basis.dim());
        debug_assert_eq!(grid.len(), self.len());
        grid.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        let n_phi = self.n_phi;
        for (block, table) in self.basis.blocks().iter().zip(&self.tables) {
            let col = block.m.rem_euclid(n_phi as i32) as usize;
            let c = &coeffs[block.offset..block.offset + block.len];
            for k in 0..self.n_theta {
                let row = &table[k * block.len..(k + 1) * block.len];
                let s: C64 = row.iter().zip(c).map(|(t, z)| z * *t).sum();
                grid[k * n_phi + col] += s;
            }
        }
        if let Some(inv) = &self.inverse {
            inv.process(grid);
        }
    }

    /// Grid values → basis coefficients by quadrature. `grid` is used as
    /// workspace and left in an unspecified state.
    pub fn analyze_in_place(&self, grid: &mut [C64], coeffs: &mut [C64]) {
        debug_assert_eq!(coeffs.len(), self.basis.dim());
        debug_assert_eq!(grid.len(), self.len());
        if let Some(fwd) = &self.forward {
            fwd.process(grid);
        }
        let a = self.azimuth_weight();
        let n_phi = self.n_phi;
        for (block, table) in self.basis.blocks().iter().zip(&self.tables) {
            let col = block.m.rem_euclid(n_phi as i32) as usize;
            let c = &mut coeffs[block.offset..block.offset + block.len];
            c.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for k in 0..self.n_theta {
                let g = grid[k * n_phi + col] * (self.weights[k] * a);
                let row = &table[k * block.len..(k + 1) * block.len];
                for (z, t) in c.iter_mut().zip(row) {
                    *z += g * *t;
                }
            }
        }
    }

    /// Whether quadrature is exact for matrix elements of `f`.
    pub fn is_exact_for(&self, f: AngularFunction) -> bool {
        let j = self.basis.j_max() as usize;
        let p = f.degree() as usize;
        let theta_ok = 2 * self.n_theta >= 2 * j + p + 1;
        match self.basis.kind() {
            BasisKind::Full => theta_ok && self.n_phi > 2 * j + f.azimuthal_order() as usize,
            BasisKind::FixedM(_) => theta_ok && f.is_axial(),
        }
    }
}

/// Matrix of the multiplication operator `f` built by exact quadrature.
pub fn multiplication_operator(
    basis: &Basis,
    grid: &AngularGrid,
    f: AngularFunction,
) -> Result<AngularOperator> {
    if grid.basis() != basis {
        return Err(Error::Config("grid was built for a different basis".into()));
    }
    if !grid.is_exact_for(f) {
        return Err(Error::Config(format!(
            "degenerate grid: {}x{} nodes cannot integrate {} exactly at j_max = {}",
            grid.n_theta(),
            grid.n_phi(),
            f.label(),
            basis.j_max()
        )));
    }
    let values = grid.function_values(f);
    let n = basis.dim();
    let mut mat = DMatrix::zeros(n, n);
    let mut unit = vec![C64::new(0.0, 0.0); n];
    let mut g = vec![C64::new(0.0, 0.0); grid.len()];
    let mut col = vec![C64::new(0.0, 0.0); n];
    for c in 0..n {
        unit[c] = C64::new(1.0, 0.0);
        grid.synthesize(&unit, &mut g);
        for (z, v) in g.iter_mut().zip(&values) {
            *z *= *v;
        }
        grid.analyze_in_place(&mut g, &mut col);
        for r in 0..n {
            mat[(r, c)] = col[r];
        }
        unit[c] = C64::new(0.0, 0.0);
    }
    Ok(AngularOperator::new(f.label(), mat))
}
