//! Molecular parameters and polynomial-in-field Hamiltonians
//! H(E) = B J² + Σ_p H_p · (field monomial p).

use crate::angular::{
    j_squared, multiplication_operator, AngularFunction, AngularGrid, AngularOperator, Basis,
    BasisKind,
};
use crate::units::UNITS;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Rotor constants, all in atomic units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoleculeParams {
    /// Rotational constant in Hartree.
    pub b_rot: f64,
    pub mu0: f64,
    pub alpha_par: f64,
    pub alpha_perp: f64,
    pub beta_par: f64,
    pub beta_perp: f64,
}

impl MoleculeParams {
    /// Parameters with the rotational constant given in cm⁻¹.
    pub fn from_wavenumber(
        b_cm: f64,
        mu0: f64,
        alpha_par: f64,
        alpha_perp: f64,
        beta_par: f64,
        beta_perp: f64,
    ) -> Result<Self> {
        let p = MoleculeParams {
            b_rot: UNITS.cm_to_hartree(b_cm),
            mu0,
            alpha_par,
            alpha_perp,
            beta_par,
            beta_perp,
        };
        p.validate()?;
        Ok(p)
    }

    /// Carbon monoxide.
    pub fn carbon_monoxide() -> Self {
        Self::from_wavenumber(1.9312, 0.112, 15.65, 11.73, 28.35, 6.64)
            .expect("tabulated constants are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("b_rot", self.b_rot),
            ("mu0", self.mu0),
            ("alpha_par", self.alpha_par),
            ("alpha_perp", self.alpha_perp),
            ("beta_par", self.beta_par),
            ("beta_perp", self.beta_perp),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::validation(name, "must be finite"));
            }
        }
        if self.b_rot <= 0.0 {
            return Err(Error::validation("b_rot", "must be positive"));
        }
        Ok(())
    }

    pub fn delta_alpha(&self) -> f64 {
        self.alpha_par - self.alpha_perp
    }

    /// Full revival time π/B in atomic units.
    pub fn rotational_period(&self) -> f64 {
        PI / self.b_rot
    }
}

/// Per-channel exponents of a field monomial, e.g. `[1, 1]` for εx·εy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u8>);

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&p| p as u32).sum()
    }

    pub fn eval(&self, fields: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(fields)
            .map(|(&p, &e)| e.powi(p as i32))
            .product()
    }

    /// ∂/∂(fields[channel]).
    pub fn partial(&self, channel: usize, fields: &[f64]) -> f64 {
        let p = self.0[channel];
        if p == 0 {
            return 0.0;
        }
        self.0
            .iter()
            .zip(fields)
            .enumerate()
            .map(|(c, (&q, &e))| {
                if c == channel {
                    q as f64 * e.powi(q as i32 - 1)
                } else {
                    e.powi(q as i32)
                }
            })
            .product()
    }

    /// ∂²/∂(fields[channel])².
    pub fn second_partial(&self, channel: usize, fields: &[f64]) -> f64 {
        let p = self.0[channel] as i32;
        if p < 2 {
            return 0.0;
        }
        self.0
            .iter()
            .zip(fields)
            .enumerate()
            .map(|(c, (&q, &e))| {
                if c == channel {
                    (p * (p - 1)) as f64 * e.powi(p - 2)
                } else {
                    e.powi(q as i32)
                }
            })
            .product()
    }
}

/// One weighted angular function inside a coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingTerm {
    pub coefficient: f64,
    pub function: AngularFunction,
}

/// A coupling operator multiplying one field monomial.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub monomial: Monomial,
    pub terms: Vec<CouplingTerm>,
    pub operator: AngularOperator,
    /// The coupling function sampled on the model's angular grid.
    pub grid_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// Carrier-resolved coupling to a z-polarized field.
    ZFull,
    /// Cycle-averaged coupling to the envelope of a z-polarized field.
    ZAveraged,
    /// Cycle-averaged coupling to an elliptic field in the (x, y) plane.
    Xy {
        /// Relative phase Φx − Φy in radians.
        #[serde(rename = "phase_diff_rad")]
        phase_diff: f64,
    },
}

impl ModelKind {
    pub fn channels(&self) -> usize {
        match self {
            ModelKind::Xy { .. } => 2,
            _ => 1,
        }
    }

    pub fn channel_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::Xy { .. } => &["x", "y"],
            _ => &["z"],
        }
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    kind: ModelKind,
    params: MoleculeParams,
    basis: Basis,
    grid: Arc<AngularGrid>,
    h0: AngularOperator,
    couplings: Vec<Coupling>,
}

impl HamiltonianModel {
    fn assemble(
        kind: ModelKind,
        params: &MoleculeParams,
        basis: &Basis,
        spec: Vec<(Vec<u8>, Vec<CouplingTerm>)>,
    ) -> Result<Self> {
        params.validate()?;
        let grid = Arc::new(AngularGrid::new(basis)?);
        let h0 = j_squared(basis).scaled(params.b_rot, "h0");
        let n = basis.dim();
        let mut couplings = Vec::with_capacity(spec.len());
        for (exps, terms) in spec {
            let mut mat = DMatrix::<C64>::zeros(n, n);
            let mut values = vec![0.0; grid.len()];
            for t in &terms {
                let op = multiplication_operator(basis, &grid, t.function)?;
                mat += op.matrix * C64::new(t.coefficient, 0.0);
                for (v, f) in values.iter_mut().zip(grid.function_values(t.function)) {
                    *v += t.coefficient * f;
                }
            }
            let monomial = Monomial(exps);
            let label = format!("H{:?}", monomial.0);
            couplings.push(Coupling {
                monomial,
                terms,
                operator: AngularOperator::new(label, mat),
                grid_values: values,
            });
        }
        Ok(HamiltonianModel {
            kind,
            params: *params,
            basis: basis.clone(),
            grid,
            h0,
            couplings,
        })
    }

    pub fn build(kind: ModelKind, params: &MoleculeParams, basis: &Basis) -> Result<Self> {
        match kind {
            ModelKind::ZFull => hamiltonian_z_full(params, basis),
            ModelKind::ZAveraged => hamiltonian_z_averaged(params, basis),
            ModelKind::Xy { phase_diff } => hamiltonian_xy(params, basis, phase_diff),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &MoleculeParams {
        &self.params
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    pub fn h0(&self) -> &AngularOperator {
        &self.h0
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Field-free eigenenergies B j(j+1) in basis order.
    pub fn rotor_energies(&self) -> Vec<f64> {
        self.basis
            .states()
            .iter()
            .map(|s| self.params.b_rot * (s.j * (s.j + 1)) as f64)
            .collect()
    }

    fn check_fields(&self, fields: &[f64]) -> Result<()> {
        if fields.len() != self.channels() {
            return Err(Error::Dimension {
                expected: self.channels(),
                found: fields.len(),
            });
        }
        Ok(())
    }

    /// H(E) = H₀ + Σ H_p · monomial_p(E).
    pub fn evaluate(&self, fields: &[f64]) -> Result<DMatrix<C64>> {
        self.check_fields(fields)?;
        let mut h = self.h0.matrix.clone();
        for c in &self.couplings {
            h += &c.operator.matrix * C64::new(c.monomial.eval(fields), 0.0);
        }
        Ok(h)
    }

    /// Interaction part V(E) = H(E) − H₀.
    pub fn interaction(&self, fields: &[f64]) -> Result<DMatrix<C64>> {
        let mut h = self.evaluate(fields)?;
        h -= &self.h0.matrix;
        Ok(h)
    }

    /// ∂H/∂E_channel at the given field values.
    pub fn derivative(&self, channel: usize, fields: &[f64]) -> Result<DMatrix<C64>> {
        if channel >= self.channels() {
            return Err(Error::Channel {
                index: channel,
                channels: self.channels(),
            });
        }
        self.check_fields(fields)?;
        let n = self.dim();
        let mut d = DMatrix::zeros(n, n);
        for c in &self.couplings {
            let w = c.monomial.partial(channel, fields);
            if w != 0.0 {
                d += &c.operator.matrix * C64::new(w, 0.0);
            }
        }
        Ok(d)
    }

    /// ∂²H/∂E_channel².
    pub fn second_derivative(&self, channel: usize, fields: &[f64]) -> Result<DMatrix<C64>> {
        if channel >= self.channels() {
            return Err(Error::Channel {
                index: channel,
                channels: self.channels(),
            });
        }
        self.check_fields(fields)?;
        let n = self.dim();
        let mut d = DMatrix::zeros(n, n);
        for c in &self.couplings {
            let w = c.monomial.second_partial(channel, fields);
            if w != 0.0 {
                d += &c.operator.matrix * C64::new(w, 0.0);
            }
        }
        Ok(d)
    }

    /// Interaction V(E) sampled on the angular grid.
    pub fn interaction_on_grid(&self, fields: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for c in &self.couplings {
            let w = c.monomial.eval(fields);
            if w != 0.0 {
                for (o, g) in out.iter_mut().zip(&c.grid_values) {
                    *o += w * g;
                }
            }
        }
    }
}

fn term(coefficient: f64, function: AngularFunction) -> CouplingTerm {
    CouplingTerm {
        coefficient,
        function,
    }
}

/// Carrier-resolved coupling to E_z:
/// −μ₀cosθ E − ½(Δα cos²θ + α⊥)E² − ⅙((β∥−3β⊥)cos³θ + 3β⊥cosθ)E³.
pub fn hamiltonian_z_full(params: &MoleculeParams, basis: &Basis) -> Result<HamiltonianModel> {
    use AngularFunction::*;
    let p = params;
    HamiltonianModel::assemble(
        ModelKind::ZFull,
        p,
        basis,
        vec![
            (vec![1], vec![term(-p.mu0, CosTheta)]),
            (
                vec![2],
                vec![term(-0.5 * p.delta_alpha(), Cos2Theta), term(-0.5 * p.alpha_perp, One)],
            ),
            (
                vec![3],
                vec![
                    term(-(p.beta_par - 3.0 * p.beta_perp) / 6.0, Cos3Theta),
                    term(-0.5 * p.beta_perp, CosTheta),
                ],
            ),
        ],
    )
}

/// Cycle-averaged coupling to the envelope ε_z:
/// −¼(Δα cos²θ + α⊥)ε² − ⅛((β∥−3β⊥)cos³θ + 3β⊥cosθ)ε³.
pub fn hamiltonian_z_averaged(params: &MoleculeParams, basis: &Basis) -> Result<HamiltonianModel> {
    use AngularFunction::*;
    let p = params;
    HamiltonianModel::assemble(
        ModelKind::ZAveraged,
        p,
        basis,
        vec![
            (
                vec![2],
                vec![term(-0.25 * p.delta_alpha(), Cos2Theta), term(-0.25 * p.alpha_perp, One)],
            ),
            (
                vec![3],
                vec![
                    term(-(p.beta_par - 3.0 * p.beta_perp) / 8.0, Cos3Theta),
                    term(-3.0 * p.beta_perp / 8.0, CosTheta),
                ],
            ),
        ],
    )
}

/// Cycle-averaged polarizability coupling to an elliptic (x, y) field.
pub fn hamiltonian_xy(
    params: &MoleculeParams,
    basis: &Basis,
    phase_diff: f64,
) -> Result<HamiltonianModel> {
    if basis.kind() != BasisKind::Full {
        return Err(Error::Config(
            "the elliptic model couples different m and needs the full basis".into(),
        ));
    }
    if !phase_diff.is_finite() {
        return Err(Error::validation("phase_diff", "must be finite"));
    }
    use AngularFunction::*;
    let p = params;
    let da = p.delta_alpha();
    HamiltonianModel::assemble(
        ModelKind::Xy { phase_diff },
        p,
        basis,
        vec![
            (vec![2, 0], vec![term(-0.25 * da, Cos2ThetaX), term(-0.25 * p.alpha_perp, One)]),
            (vec![0, 2], vec![term(-0.25 * da, Cos2ThetaY), term(-0.25 * p.alpha_perp, One)]),
            (vec![1, 1], vec![term(-0.5 * da * phase_diff.cos(), CosThetaXCosThetaY)]),
        ],
    )
}
