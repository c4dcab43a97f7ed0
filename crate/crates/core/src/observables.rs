//! Expectation values, fidelities and running costs.

use crate::angular::{AngularOperator, Basis};
use crate::dynamics::{inner, Ensemble, FieldTrace, QuantumState, TimeGrid};
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

const IMAG_TOL: f64 = 1e-10;

/// ⟨ψ|A|ψ⟩ or Tr(ρA).
pub fn expectation(state: &QuantumState, op: &AngularOperator) -> Result<f64> {
    if state.dim() != op.dim() {
        return Err(Error::Dimension {
            expected: op.dim(),
            found: state.dim(),
        });
    }
    let value = match state {
        QuantumState::Pure(v) => inner(v, &op.apply(v)),
        QuantumState::Density(r) => (r * &op.matrix).trace(),
    };
    if value.im.abs() > IMAG_TOL {
        return Err(Error::Numerical(format!(
            "expectation of {} has imaginary part {}",
            op.label, value.im
        )));
    }
    Ok(value.re)
}

fn jz_measure_from(jz: f64, j2: f64) -> Result<f64> {
    if j2 <= 1e-14 {
        return Err(Error::Undefined("⟨J_z⟩/√⟨J²⟩ with ⟨J²⟩ = 0".into()));
    }
    Ok(jz / j2.sqrt())
}

/// ⟨J_z⟩/√⟨J²⟩.
pub fn jz_orientation_measure(state: &QuantumState, basis: &Basis) -> Result<f64> {
    let rho_diag: Vec<f64> = match state {
        QuantumState::Pure(v) => v.iter().map(|z| z.norm_sqr()).collect(),
        QuantumState::Density(r) => (0..r.nrows()).map(|i| r[(i, i)].re).collect(),
    };
    if rho_diag.len() != basis.dim() {
        return Err(Error::Dimension {
            expected: basis.dim(),
            found: rho_diag.len(),
        });
    }
    jz_measure_from_populations(&rho_diag, basis)
}

/// ⟨J_z⟩/√⟨J²⟩ from basis populations (both operators are diagonal).
pub fn jz_measure_from_populations(pops: &[f64], basis: &Basis) -> Result<f64> {
    let (jz, j2) = pops
        .iter()
        .zip(basis.states())
        .fold((0.0, 0.0), |(a, b), (p, s)| {
            (a + p * s.m as f64, b + p * (s.j * (s.j + 1)) as f64)
        });
    jz_measure_from(jz, j2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentSplit {
    pub permanent: f64,
    pub coherent: f64,
    pub total: f64,
}

/// Split ⟨cos²θ⟩ into its j-diagonal (permanent) and j-off-diagonal
/// (coherent) parts. `cos2` is the cos²θ operator on `basis`.
pub fn alignment_split(
    state: &QuantumState,
    basis: &Basis,
    cos2: &AngularOperator,
) -> Result<AlignmentSplit> {
    if state.dim() != basis.dim() || cos2.dim() != basis.dim() {
        return Err(Error::Dimension {
            expected: basis.dim(),
            found: state.dim(),
        });
    }
    let rho = state.density();
    Ok(split_from_density(&rho, basis, cos2))
}

fn split_from_density(rho: &DMatrix<C64>, basis: &Basis, cos2: &AngularOperator) -> AlignmentSplit {
    let states = basis.states();
    let n = basis.dim();
    let mut permanent = C64::new(0.0, 0.0);
    let mut coherent = C64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            let c = cos2.matrix[(b, a)];
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            let term = rho[(a, b)] * c;
            if states[a].j == states[b].j {
                permanent += term;
            } else {
                coherent += term;
            }
        }
    }
    AlignmentSplit {
        permanent: permanent.re,
        coherent: coherent.re,
        total: permanent.re + coherent.re,
    }
}

/// Alignment split of an ensemble without forming the density matrix.
pub fn ensemble_alignment_split(ens: &Ensemble, basis: &Basis, cos2: &AngularOperator) -> AlignmentSplit {
    let states = basis.states();
    let n = basis.dim();
    let mut permanent = 0.0;
    let mut coherent = 0.0;
    for (w, v) in ens.weights.iter().zip(&ens.members) {
        for a in 0..n {
            if v[a] == C64::new(0.0, 0.0) {
                continue;
            }
            for b in 0..n {
                let c = cos2.matrix[(a, b)];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let term = (v[a].conj() * c * v[b]).re * w;
                if states[a].j == states[b].j {
                    permanent += term;
                } else {
                    coherent += term;
                }
            }
        }
    }
    AlignmentSplit {
        permanent,
        coherent,
        total: permanent + coherent,
    }
}

/// |⟨ψ_f|ψ⟩|² for kets, Tr(ρ_f ρ)/Tr(ρ_f²) for density matrices.
pub fn fidelity(state: &QuantumState, target: &QuantumState) -> Result<f64> {
    if state.dim() != target.dim() {
        return Err(Error::Dimension {
            expected: target.dim(),
            found: state.dim(),
        });
    }
    match (state, target) {
        (QuantumState::Pure(psi), QuantumState::Pure(t)) => Ok(inner(t, psi).norm_sqr()),
        (QuantumState::Density(rho), QuantumState::Density(rf)) => {
            let num = (rf * rho).trace().re;
            let den = (rf * rf).trace().re;
            if den <= 0.0 {
                return Err(Error::Undefined("target density matrix is zero".into()));
            }
            Ok(num / den)
        }
        _ => Err(Error::Representation(
            "fidelity needs a ket/ket or density/density pair".into(),
        )),
    }
}

/// What the running cost measures deviations against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// The field of the previous iteration.
    #[default]
    PreviousIterate,
    /// The initial guess, held fixed.
    Fixed,
    /// Zero field (plain pulse-energy penalty).
    Zero,
}

/// Running-cost parameters: λ (a.u.), exponent 2n ∈ {2, 4} and the
/// reference policy. The shape S(t) = sin²(πt/t_f) is implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub lambda: f64,
    pub exponent: u32,
    pub reference: ReferencePolicy,
}

impl CostSpec {
    pub fn new(lambda: f64, exponent: u32, reference: ReferencePolicy) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::validation("lambda", "must be positive and finite"));
        }
        if exponent != 2 && exponent != 4 {
            return Err(Error::validation("exponent", "must be 2 or 4"));
        }
        Ok(CostSpec {
            lambda,
            exponent,
            reference,
        })
    }

    /// λ (Δ)^{2n} / S for one sample.
    pub fn density(&self, delta: f64, shape: f64) -> f64 {
        self.lambda * delta.powi(self.exponent as i32) / shape
    }
}

/// Σ_n dt λ (E_n − E_ref,n)^{2n} / S(t_n) over steps and channels, with
/// samples at step midpoints where S never vanishes.
pub fn running_cost(
    field: &FieldTrace,
    reference: &FieldTrace,
    spec: &CostSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    if field.n_channels() != reference.n_channels() || field.n_steps() != reference.n_steps() {
        return Err(Error::Dimension {
            expected: reference.n_steps(),
            found: field.n_steps(),
        });
    }
    if field.n_steps() != grid.n_steps() {
        return Err(Error::Dimension {
            expected: grid.n_steps(),
            found: field.n_steps(),
        });
    }
    let dt = grid.dt();
    let mut total = 0.0;
    for c in 0..field.n_channels() {
        for (n, (e, r)) in field.channel(c).iter().zip(reference.channel(c)).enumerate() {
            if !e.is_finite() {
                return Err(Error::validation("field", format!("non-finite sample at step {}", n)));
            }
            total += dt * spec.density(e - r, grid.shape(n));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{analytic_operator, cos_theta_matrix, AngularFunction, BasisKind};
    use approx::assert_relative_eq;

    fn superposition(b: &Basis) -> Vec<C64> {
        let s = 1.0 / 2f64.sqrt();
        let mut v = vec![C64::new(0.0, 0.0); b.dim()];
        v[b.index(0, 0).unwrap()] = C64::new(s, 0.0);
        v[b.index(1, 0).unwrap()] = C64::new(s, 0.0);
        v
    }

    #[test]
    fn expectation_examples() {
        let b = Basis::full(5);
        let c = cos_theta_matrix(&b);
        let c2 = analytic_operator(&b, AngularFunction::Cos2Theta).unwrap();
        let g = QuantumState::Pure(b.ket(0, 0).unwrap());
        assert_eq!(expectation(&g, &c).unwrap(), 0.0);
        let k44 = QuantumState::Pure(b.ket(4, 4).unwrap());
        assert_relative_eq!(expectation(&k44, &c2).unwrap(), 1.0 / 11.0, epsilon = 1e-14);
        let sup = QuantumState::Pure(superposition(&b));
        assert_relative_eq!(expectation(&sup, &c).unwrap(), 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        let rho = QuantumState::Density(sup.density());
        assert_relative_eq!(expectation(&rho, &c).unwrap(), 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        let small = QuantumState::Pure(vec![C64::new(1.0, 0.0)]);
        assert!(expectation(&small, &c).is_err());
    }

    #[test]
    fn jz_measure() {
        let b = Basis::full(5);
        let v = jz_orientation_measure(&QuantumState::Pure(b.ket(4, 4).unwrap()), &b).unwrap();
        assert_relative_eq!(v, 4.0 / 20f64.sqrt(), epsilon = 1e-14);
        let w = jz_orientation_measure(&QuantumState::Pure(b.ket(4, -4).unwrap()), &b).unwrap();
        assert_relative_eq!(w, -v, epsilon = 1e-14);
        assert!(matches!(
            jz_orientation_measure(&QuantumState::Pure(b.ket(0, 0).unwrap()), &b),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn split_examples() {
        let b = Basis::full(4);
        let c2 = analytic_operator(&b, AngularFunction::Cos2Theta).unwrap();
        let g = alignment_split(&QuantumState::Pure(b.ket(0, 0).unwrap()), &b, &c2).unwrap();
        assert_relative_eq!(g.permanent, 1.0 / 3.0, epsilon = 1e-14);
        assert_eq!(g.coherent, 0.0);
        let s = alignment_split(&QuantumState::Pure(superposition(&b)), &b, &c2).unwrap();
        assert_relative_eq!(s.permanent, 7.0 / 15.0, epsilon = 1e-14);
        assert_relative_eq!(s.coherent, 0.0, epsilon = 1e-15);
        let ens = Ensemble::pure(superposition(&b));
        let e = ensemble_alignment_split(&ens, &b, &c2);
        assert_relative_eq!(e.permanent, s.permanent, epsilon = 1e-14);
    }

    #[test]
    fn fidelity_examples() {
        let b = Basis::new(3, BasisKind::FixedM(0)).unwrap();
        let a = QuantumState::Pure(b.ket(1, 0).unwrap());
        let o = QuantumState::Pure(b.ket(2, 0).unwrap());
        assert_eq!(fidelity(&a, &a).unwrap(), 1.0);
        assert_eq!(fidelity(&a, &o).unwrap(), 0.0);
        let mut r = DMatrix::<C64>::zeros(4, 4);
        r[(0, 0)] = C64::new(0.3, 0.0);
        r[(2, 2)] = C64::new(0.5, 0.0);
        let rho = QuantumState::Density(r);
        assert_relative_eq!(fidelity(&rho, &rho).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(fidelity(&a, &rho), Err(Error::Representation(_))));
    }

    #[test]
    fn running_cost_homogeneity() {
        let grid = TimeGrid::new(100.0, 50).unwrap();
        let reference = FieldTrace::from_fn(&grid, 1, |_, t| 1e-3 * t.sin());
        let d1 = FieldTrace::from_fn(&grid, 1, |_, t| 1e-3 * t.sin() + 2e-3 * (t / 30.0).cos());
        let d2 = FieldTrace::from_fn(&grid, 1, |_, t| 1e-3 * t.sin() + 4e-3 * (t / 30.0).cos());
        for (exp, factor) in [(2, 4.0), (4, 16.0)] {
            let spec = CostSpec::new(0.7, exp, ReferencePolicy::PreviousIterate).unwrap();
            assert_eq!(running_cost(&reference, &reference, &spec, &grid).unwrap(), 0.0);
            let a = running_cost(&d1, &reference, &spec, &grid).unwrap();
            let b = running_cost(&d2, &reference, &spec, &grid).unwrap();
            assert!(a > 0.0);
            assert_relative_eq!(b / a, factor, max_relative = 1e-12);
        }
        assert!(CostSpec::new(0.0, 2, ReferencePolicy::Zero).is_err());
        assert!(CostSpec::new(1.0, 3, ReferencePolicy::Zero).is_err());
    }
}
