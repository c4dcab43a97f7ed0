//! Initial and target states for the orientation, delocalization and
//! thermal-alignment tasks.

use crate::angular::{analytic_operator, AngularFunction, AngularOperator, Basis, BasisIndex};
use crate::dynamics::QuantumState;
use crate::model::MoleculeParams;
use crate::units::UNITS;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Control task selector as written in run configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Maximize ⟨cosθ⟩ within j ≤ j_f, starting from |0,0⟩.
    Orientation { j_f: u32 },
    /// Reach the ket |j,m⟩ from |0,0⟩.
    Ket { j: u32, m: i32 },
    /// Maximize permanent alignment from a Boltzmann state.
    ThermalAlignment { temperature_k: f64, j_f: u32 },
}

/// A task resolved against a basis.
#[derive(Debug, Clone)]
pub struct ResolvedTask {
    pub initial: QuantumState,
    pub target: QuantumState,
    pub thermal_report: Option<ThermalTargetReport>,
}

pub fn resolve(spec: &TargetSpec, basis: &Basis, params: &MoleculeParams) -> Result<ResolvedTask> {
    let ground = || basis.ket(0, 0);
    match *spec {
        TargetSpec::Orientation { j_f } => Ok(ResolvedTask {
            initial: QuantumState::Pure(ground()?),
            target: QuantumState::Pure(orientation_target(j_f, basis)?.state),
            thermal_report: None,
        }),
        TargetSpec::Ket { j, m } => Ok(ResolvedTask {
            initial: QuantumState::Pure(ground()?),
            target: QuantumState::Pure(basis.ket(j, m)?),
            thermal_report: None,
        }),
        TargetSpec::ThermalAlignment { temperature_k, j_f } => {
            let rho0 = boltzmann_state(temperature_k, basis, params)?;
            let (rho_f, report) = thermal_alignment_target(temperature_k, j_f, basis, params)?;
            Ok(ResolvedTask {
                initial: QuantumState::Density(rho0),
                target: QuantumState::Density(rho_f),
                thermal_report: Some(report),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationTarget {
    pub state: Vec<C64>,
    /// Largest eigenvalue of cosθ in the subspace, i.e. the attained ⟨cosθ⟩.
    pub max_cos: f64,
}

fn check_jf(j_f: u32, basis: &Basis) -> Result<()> {
    if j_f > basis.j_max() {
        return Err(Error::validation(
            "j_f",
            format!("{} exceeds j_max = {}", j_f, basis.j_max()),
        ));
    }
    Ok(())
}

/// Top eigenvector of cosθ restricted to {|j,0⟩ : j ≤ j_f}, with
/// non-negative coefficients.
pub fn orientation_target(j_f: u32, basis: &Basis) -> Result<OrientationTarget> {
    check_jf(j_f, basis)?;
    let n = j_f as usize + 1;
    let sub = DMatrix::<f64>::from_fn(n, n, |r, c| {
        if r == c + 1 {
            let j = c as f64;
            ((j + 1.0).powi(2) / ((2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt()
        } else if c == r + 1 {
            let j = r as f64;
            ((j + 1.0).powi(2) / ((2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt()
        } else {
            0.0
        }
    });
    let eig = sub.symmetric_eigen();
    let (top, max_cos) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty subspace");
    let mut coeffs: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    if let Some(first) = coeffs.iter().find(|c| c.abs() > 1e-14) {
        if *first < 0.0 {
            coeffs.iter_mut().for_each(|c| *c = -*c);
        }
    }
    let mut state = vec![C64::new(0.0, 0.0); basis.dim()];
    for (j, c) in coeffs.into_iter().enumerate() {
        let idx = basis.index(j as u32, 0).ok_or_else(|| {
            Error::validation("basis", "orientation target needs the m = 0 states")
        })?;
        state[idx] = C64::new(c, 0.0);
    }
    Ok(OrientationTarget { state, max_cos })
}

/// Boltzmann weights exp(−B j(j+1)/k_B T) of every basis state, unnormalized.
fn boltzmann_weights(temperature_k: f64, basis: &Basis, params: &MoleculeParams) -> Result<Vec<f64>> {
    if !(temperature_k >= 0.0) || !temperature_k.is_finite() {
        return Err(Error::validation("temperature_k", "must be finite and non-negative"));
    }
    if temperature_k == 0.0 {
        basis.index(0, 0).ok_or_else(|| {
            Error::validation("basis", "the zero-temperature state |0,0⟩ is not in the basis")
        })?;
        return Ok(basis
            .states()
            .iter()
            .map(|s| if s.j == 0 { 1.0 } else { 0.0 })
            .collect());
    }
    let kt = UNITS.kelvin_to_hartree(temperature_k);
    Ok(basis
        .states()
        .iter()
        .map(|s| (-params.b_rot * (s.j * (s.j + 1)) as f64 / kt).exp())
        .collect())
}

/// Σ exp(−B j(j+1)/k_B T) over the basis.
pub fn partition_function(temperature_k: f64, basis: &Basis, params: &MoleculeParams) -> Result<f64> {
    Ok(boltzmann_weights(temperature_k, basis, params)?.iter().sum())
}

/// Diagonal thermal density matrix; T = 0 gives |0,0⟩⟨0,0|.
pub fn boltzmann_state(
    temperature_k: f64,
    basis: &Basis,
    params: &MoleculeParams,
) -> Result<DMatrix<C64>> {
    let w = boltzmann_weights(temperature_k, basis, params)?;
    let z: f64 = w.iter().sum();
    let diag = DVector::from_iterator(w.len(), w.iter().map(|x| C64::new(x / z, 0.0)));
    Ok(DMatrix::from_diagonal(&diag))
}

/// cos²θ with only the j = j' elements kept inside j ≤ j_f.
pub fn diagonal_projection_cos2(basis: &Basis, j_f: u32) -> Result<AngularOperator> {
    check_jf(j_f, basis)?;
    let full = analytic_operator(basis, AngularFunction::Cos2Theta)?;
    let n = basis.dim();
    let states = basis.states();
    let mat = DMatrix::from_fn(n, n, |r, c| {
        if states[r].j == states[c].j && states[r].j <= j_f {
            full.matrix[(r, c)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(AngularOperator::new("cos2_theta_p", mat))
}

/// One j-parity block of the thermal target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityBlock {
    pub parity: String,
    /// Eigenstates of cos²θ_p in ascending eigenvalue order.
    pub states: Vec<BasisIndex>,
    pub eigenvalues: Vec<f64>,
    /// Populations assigned to `states`, ascending.
    pub populations: Vec<f64>,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalTargetReport {
    pub temperature_k: f64,
    pub j_f: u32,
    pub partition_function: f64,
    /// Eigenvalues of cos²θ_p on j ≤ j_f, ascending.
    pub eigenvalues: Vec<f64>,
    /// Populations of ρ₀ on j ≤ j_f, ascending.
    pub populations: Vec<f64>,
    /// Σ χ_k ω_k with the per-parity pairing.
    pub achieved_max: f64,
    pub blocks: Vec<ParityBlock>,
    /// Population of ρ₀ inside j ≤ j_f (equals Tr ρ_f).
    pub trace_in_subspace: f64,
    /// Sorted pairing across all of j ≤ j_f with no parity constraint.
    pub unconstrained_max: f64,
    /// Sorted pairing within blocks of equal (j parity, m parity); reported only.
    pub m_parity_refined_max: f64,
}

fn sorted_pairing(chi: &[f64], omega: &[f64]) -> f64 {
    let mut c = chi.to_vec();
    let mut w = omega.to_vec();
    c.sort_by(f64::total_cmp);
    w.sort_by(f64::total_cmp);
    c.iter().zip(&w).map(|(a, b)| a * b).sum()
}

/// Maximal-permanent-alignment target: within j ≤ j_f and separately for
/// even and odd j, the ascending populations of ρ₀ are assigned to the
/// ascending eigenvalues of cos²θ_p.
pub fn thermal_alignment_target(
    temperature_k: f64,
    j_f: u32,
    basis: &Basis,
    params: &MoleculeParams,
) -> Result<(DMatrix<C64>, ThermalTargetReport)> {
    check_jf(j_f, basis)?;
    let rho0 = boltzmann_state(temperature_k, basis, params)?;
    let cos2p = diagonal_projection_cos2(basis, j_f)?;
    let states = basis.states();
    let n = basis.dim();
    let mut rho_f = DMatrix::<C64>::zeros(n, n);
    let mut blocks = Vec::new();
    let mut all_chi = Vec::new();
    let mut all_omega = Vec::new();
    for parity in [0u32, 1] {
        let mut idx: Vec<usize> = (0..n)
            .filter(|&i| states[i].j <= j_f && states[i].j % 2 == parity)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let chi = |i: usize| cos2p.matrix[(i, i)].re;
        idx.sort_by(|&a, &b| {
            chi(a)
                .total_cmp(&chi(b))
                .then(states[a].m.cmp(&states[b].m))
                .then(states[a].j.cmp(&states[b].j))
        });
        let mut omega: Vec<f64> = idx.iter().map(|&i| rho0[(i, i)].re).collect();
        omega.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let eigenvalues: Vec<f64> = idx.iter().map(|&i| chi(i)).collect();
        for (&i, &w) in idx.iter().zip(&omega) {
            rho_f[(i, i)] = C64::new(w, 0.0);
        }
        let contribution = eigenvalues.iter().zip(&omega).map(|(c, w)| c * w).sum();
        all_chi.extend_from_slice(&eigenvalues);
        all_omega.extend_from_slice(&omega);
        blocks.push(ParityBlock {
            parity: if parity == 0 { "even" } else { "odd" }.to_string(),
            states: idx.iter().map(|&i| states[i]).collect(),
            eigenvalues,
            populations: omega,
            contribution,
        });
    }
    let achieved_max = blocks.iter().map(|b| b.contribution).sum();
    let unconstrained_max = sorted_pairing(&all_chi, &all_omega);
    let mut m_parity_refined_max = 0.0;
    for jp in 0..2 {
        for mp in 0..2 {
            let sel: Vec<usize> = (0..n)
                .filter(|&i| {
                    states[i].j <= j_f
                        && states[i].j % 2 == jp
                        && states[i].m.rem_euclid(2) as u32 == mp
                })
                .collect();
            let c: Vec<f64> = sel.iter().map(|&i| cos2p.matrix[(i, i)].re).collect();
            let w: Vec<f64> = sel.iter().map(|&i| rho0[(i, i)].re).collect();
            m_parity_refined_max += sorted_pairing(&c, &w);
        }
    }
    let mut eigenvalues = all_chi;
    eigenvalues.sort_by(f64::total_cmp);
    let mut populations = all_omega;
    populations.sort_by(f64::total_cmp);
    let trace_in_subspace = populations.iter().sum();
    let report = ThermalTargetReport {
        temperature_k,
        j_f,
        partition_function: partition_function(temperature_k, basis, params)?,
        eigenvalues,
        populations,
        achieved_max,
        blocks,
        trace_in_subspace,
        unconstrained_max,
        m_parity_refined_max,
    };
    Ok((rho_f, report))
}
