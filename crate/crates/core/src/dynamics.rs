//! Split-operator propagation of kets, density matrices and adjoint states.
//!
//! One step is K · A · D(e) · S · K with K = exp(−i H₀ dt/2) (diagonal in the
//! rotor basis), S the synthesis onto the angular grid, A its quadrature
//! adjoint and D(e) = exp(−i V(e) dt) evaluated pointwise on the grid. The
//! control is piecewise constant: one value per step, taken at the midpoint.

use crate::angular::AngularOperator;
use crate::model::HamiltonianModel;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Fields above this magnitude (a.u.) are rejected by the propagator.
pub const DEFAULT_FIELD_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::validation("t_final", "must be positive and finite"));
        }
        if n_steps < 2 {
            return Err(Error::validation("n_steps", "must be at least 2"));
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Time of edge `n` (0 ≤ n ≤ n_steps).
    pub fn edge(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Midpoint of step `n`.
    pub fn midpoint(&self, n: usize) -> f64 {
        (n as f64 + 0.5) * self.dt()
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_steps).map(move |n| self.midpoint(n))
    }

    /// Update shape sin²(π t / t_f) at the midpoint of step `n`.
    pub fn shape(&self, n: usize) -> f64 {
        (PI * self.midpoint(n) / self.t_final).sin().powi(2)
    }
}

/// Control amplitudes, one value per step and channel (a.u. of field).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrace {
    channels: Vec<Vec<f64>>,
}

impl FieldTrace {
    pub fn zeros(n_channels: usize, n_steps: usize) -> Self {
        FieldTrace {
            channels: vec![vec![0.0; n_steps]; n_channels],
        }
    }

    pub fn from_channels(channels: Vec<Vec<f64>>) -> Result<Self> {
        let n = channels.first().map_or(0, |c| c.len());
        if channels.is_empty() || channels.iter().any(|c| c.len() != n) {
            return Err(Error::validation("field", "channels must be non-empty and equally long"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("field", "non-finite sample"));
        }
        Ok(FieldTrace { channels })
    }

    /// Sample `f(channel, t)` at the step midpoints.
    pub fn from_fn(grid: &TimeGrid, n_channels: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        FieldTrace {
            channels: (0..n_channels)
                .map(|c| grid.midpoints().map(|t| f(c, t)).collect())
                .collect(),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_steps(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.channels[c]
    }

    /// Values of every channel at step `n`.
    pub fn at(&self, n: usize, out: &mut [f64]) {
        for (o, ch) in out.iter_mut().zip(&self.channels) {
            *o = ch[n];
        }
    }

    pub fn set(&mut self, n: usize, values: &[f64]) {
        for (ch, v) in self.channels.iter_mut().zip(values) {
            ch[n] = *v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Sum of |e_{n+1} − e_n| over all channels.
    pub fn total_variation(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>())
            .sum()
    }

    pub fn check_compatible(&self, model: &HamiltonianModel, grid: &TimeGrid) -> Result<()> {
        if self.n_channels() != model.channels() {
            return Err(Error::Dimension {
                expected: model.channels(),
                found: self.n_channels(),
            });
        }
        if self.n_steps() != grid.n_steps() {
            return Err(Error::Dimension {
                expected: grid.n_steps(),
                found: self.n_steps(),
            });
        }
        Ok(())
    }
}

/// A normalized ket or a unit-trace density matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(Vec<C64>),
    Density(DMatrix<C64>),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(v) => v.len(),
            QuantumState::Density(r) => r.nrows(),
        }
    }

    pub fn density(&self) -> DMatrix<C64> {
        match self {
            QuantumState::Pure(v) => {
                let n = v.len();
                DMatrix::from_fn(n, n, |i, k| v[i] * v[k].conj())
            }
            QuantumState::Density(r) => r.clone(),
        }
    }

    /// Check the state invariants to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        match self {
            QuantumState::Pure(v) => {
                let norm = norm(v);
                if !norm.is_finite() || (norm - 1.0).abs() > tol {
                    return Err(Error::validation("state", format!("norm {} is not 1", norm)));
                }
            }
            QuantumState::Density(r) => {
                if r.nrows() != r.ncols() {
                    return Err(Error::validation("state", "density matrix must be square"));
                }
                let herm = (r - r.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
                if herm > tol {
                    return Err(Error::validation("state", "density matrix is not Hermitian"));
                }
                let tr = r.trace();
                if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
                    return Err(Error::validation("state", format!("trace {} is not 1", tr)));
                }
                let min_eig = r.clone().symmetric_eigen().eigenvalues.min();
                if min_eig < -tol {
                    return Err(Error::validation(
                        "state",
                        format!("negative eigenvalue {}", min_eig),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Weighted set of kets standing for ρ = Σ w_i |ψ_i⟩⟨ψ_i|.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub weights: Vec<f64>,
    pub members: Vec<Vec<C64>>,
}

impl Ensemble {
    pub fn pure(psi: Vec<C64>) -> Self {
        Ensemble {
            weights: vec![1.0],
            members: vec![psi],
        }
    }

    /// Eigen-ensemble of a state. Diagonal density matrices map onto basis
    /// kets exactly; members with weight ≤ `cutoff` are dropped.
    pub fn from_state(state: &QuantumState, cutoff: f64) -> Self {
        match state {
            QuantumState::Pure(v) => Ensemble::pure(v.clone()),
            QuantumState::Density(r) => {
                let n = r.nrows();
                let diagonal = (0..n).all(|i| (0..n).all(|k| i == k || r[(i, k)] == C64::new(0.0, 0.0)));
                let mut weights = Vec::new();
                let mut members = Vec::new();
                if diagonal {
                    for i in 0..n {
                        let w = r[(i, i)].re;
                        if w > cutoff && w > 0.0 {
                            let mut v = vec![C64::new(0.0, 0.0); n];
                            v[i] = C64::new(1.0, 0.0);
                            weights.push(w);
                            members.push(v);
                        }
                    }
                } else {
                    let eig = r.clone().symmetric_eigen();
                    for (i, &w) in eig.eigenvalues.iter().enumerate() {
                        if w > cutoff && w > 0.0 {
                            weights.push(w);
                            members.push(eig.eigenvectors.column(i).iter().copied().collect());
                        }
                    }
                }
                Ensemble { weights, members }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members.first().map_or(0, |m| m.len())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn density(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut r = DMatrix::zeros(n, n);
        for (w, v) in self.weights.iter().zip(&self.members) {
            for i in 0..n {
                for k in 0..n {
                    r[(i, k)] += v[i] * v[k].conj() * *w;
                }
            }
        }
        r
    }

    /// Σ w ⟨ψ|A|ψ⟩.
    pub fn expectation(&self, op: &AngularOperator) -> f64 {
        self.weights
            .iter()
            .zip(&self.members)
            .map(|(w, v)| w * inner(v, &op.apply(v)).re)
            .sum()
    }

    /// Σ w |⟨k|ψ⟩|² for every basis index k.
    pub fn populations(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        for (w, v) in self.weights.iter().zip(&self.members) {
            for (pk, z) in p.iter_mut().zip(v) {
                *pk += w * z.norm_sqr();
            }
        }
        p
    }
}

/// Reusable buffers for stepping one model with a fixed dt.
pub struct Propagator<'m> {
    model: &'m HamiltonianModel,
    dt: f64,
    half_kinetic: Vec<C64>,
    potential: Vec<f64>,
    phase: Vec<C64>,
    grid_buf: Vec<C64>,
    field_cap: f64,
    /// Every coupling is at least linear in the field, so a zero field
    /// leaves only the kinetic phase.
    field_free: bool,
}

impl<'m> Propagator<'m> {
    pub fn new(model: &'m HamiltonianModel, dt: f64) -> Self {
        let half_kinetic = model
            .rotor_energies()
            .into_iter()
            .map(|e| C64::from_polar(1.0, -e * dt / 2.0))
            .collect();
        let n = model.grid().len();
        Propagator {
            model,
            dt,
            half_kinetic,
            potential: vec![0.0; n],
            phase: vec![C64::new(1.0, 0.0); n],
            grid_buf: vec![C64::new(0.0, 0.0); n],
            field_cap: DEFAULT_FIELD_CAP,
            field_free: false,
        }
    }

    pub fn with_field_cap(mut self, cap: f64) -> Self {
        self.field_cap = cap;
        self
    }

    pub fn model(&self) -> &HamiltonianModel {
        self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn half_kinetic(&self) -> &[C64] {
        &self.half_kinetic
    }

    /// Grid phase exp(−i V(e) dt) for the given field values.
    pub fn interaction_phase(&mut self, fields: &[f64], out: &mut [C64]) {
        self.model.interaction_on_grid(fields, &mut self.potential);
        for (o, v) in out.iter_mut().zip(&self.potential) {
            *o = C64::from_polar(1.0, -v * self.dt);
        }
    }

    pub(crate) fn load_fields(&mut self, fields: &[f64]) {
        self.field_free = fields.iter().all(|&e| e == 0.0);
        if self.field_free {
            return;
        }
        self.model.interaction_on_grid(fields, &mut self.potential);
        for (o, v) in self.phase.iter_mut().zip(&self.potential) {
            *o = C64::from_polar(1.0, -v * self.dt);
        }
    }

    /// One forward step in place.
    pub fn step(&mut self, psi: &mut [C64], fields: &[f64]) {
        self.load_fields(fields);
        self.step_loaded(psi, false);
    }

    /// One step of the adjoint map U† in place (backward in time).
    pub fn step_back(&mut self, chi: &mut [C64], fields: &[f64]) {
        self.load_fields(fields);
        self.step_loaded(chi, true);
    }

    pub(crate) fn step_loaded(&mut self, v: &mut [C64], adjoint: bool) {
        let grid = self.model.grid();
        let conj = |z: C64| if adjoint { z.conj() } else { z };
        if self.field_free {
            for (z, k) in v.iter_mut().zip(&self.half_kinetic) {
                *z *= conj(*k * *k);
            }
            return;
        }
        for (z, k) in v.iter_mut().zip(&self.half_kinetic) {
            *z *= conj(*k);
        }
        grid.synthesize(v, &mut self.grid_buf);
        for (g, d) in self.grid_buf.iter_mut().zip(&self.phase) {
            *g *= conj(*d);
        }
        grid.analyze_in_place(&mut self.grid_buf, v);
        for (z, k) in v.iter_mut().zip(&self.half_kinetic) {
            *z *= conj(*k);
        }
    }

    /// Apply K (or K† when `adjoint`) then synthesize onto the grid.
    pub fn kick_to_grid(&self, v: &[C64], adjoint: bool, work: &mut [C64], out: &mut [C64]) {
        for ((w, z), k) in work.iter_mut().zip(v).zip(&self.half_kinetic) {
            *w = if adjoint { z * k.conj() } else { z * k };
        }
        self.model.grid().synthesize(work, out);
    }

    /// Finish a forward step from grid values already multiplied by D:
    /// analyze and apply the second half kinetic factor.
    pub fn finish_from_grid(&self, grid_vals: &mut [C64], out: &mut [C64]) {
        self.model.grid().analyze_in_place(grid_vals, out);
        for (z, k) in out.iter_mut().zip(&self.half_kinetic) {
            *z *= k;
        }
    }

    pub(crate) fn check_fields(&self, step: usize, fields: &[f64]) -> Result<()> {
        if fields.iter().any(|e| !e.is_finite() || e.abs() > self.field_cap) {
            return Err(Error::Propagation {
                step,
                reason: format!("field {:?} exceeds the cap {}", fields, self.field_cap),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_finite(step: usize, v: &[C64]) -> Result<()> {
    if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Propagation {
            step,
            reason: "non-finite amplitude".into(),
        });
    }
    Ok(())
}

/// Single step applied to a copy of `psi`.
pub fn step(
    psi: &[C64],
    model: &HamiltonianModel,
    fields: &[f64],
    dt: f64,
) -> Result<Vec<C64>> {
    if psi.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: psi.len(),
        });
    }
    let mut prop = Propagator::new(model, dt);
    prop.check_fields(0, fields)?;
    let mut out = psi.to_vec();
    prop.step(&mut out, fields);
    check_finite(0, &out)?;
    Ok(out)
}

/// Reference step with the interaction exponentiated by dense
/// eigendecomposition of the truncated matrix V(e).
pub fn dense_step(
    psi: &[C64],
    model: &HamiltonianModel,
    fields: &[f64],
    dt: f64,
) -> Result<Vec<C64>> {
    let v = model.interaction(fields)?;
    let eig = v.symmetric_eigen();
    let phases = eig.eigenvalues.map(|l| C64::from_polar(1.0, -l * dt));
    let u = &eig.eigenvectors * DMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
    let half: Vec<C64> = model
        .rotor_energies()
        .into_iter()
        .map(|e| C64::from_polar(1.0, -e * dt / 2.0))
        .collect();
    let a: Vec<C64> = psi.iter().zip(&half).map(|(z, k)| z * k).collect();
    let n = a.len();
    let b: Vec<C64> = (0..n)
        .map(|i| (0..n).map(|k| u[(i, k)] * a[k]).sum())
        .collect();
    Ok(b.iter().zip(&half).map(|(z, k)| z * k).collect())
}

/// Which edges an observer sees: 0, stride, 2·stride, … and always the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sampling {
    pub stride: usize,
}

impl Sampling {
    pub fn every(stride: usize) -> Self {
        Sampling {
            stride: stride.max(1),
        }
    }

    pub fn hits(&self, n: usize, n_steps: usize) -> bool {
        n % self.stride == 0 || n == n_steps
    }
}

/// Expectation values recorded at sampled edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `values[s][i]` is observable `i` at sample `s`.
    pub values: Vec<Vec<f64>>,
}

/// Observer that records ⟨A⟩ for a list of operators.
pub struct ExpectationRecorder<'a> {
    pub operators: &'a [AngularOperator],
    pub series: TimeSeries,
}

impl<'a> ExpectationRecorder<'a> {
    pub fn new(operators: &'a [AngularOperator]) -> Self {
        ExpectationRecorder {
            operators,
            series: TimeSeries {
                labels: operators.iter().map(|o| o.label.clone()).collect(),
                ..Default::default()
            },
        }
    }

    pub fn record(&mut self, t: f64, ens: &Ensemble) {
        self.series.times.push(t);
        self.series
            .values
            .push(self.operators.iter().map(|op| ens.expectation(op)).collect());
    }
}

/// Propagate every member of an ensemble, calling `observe(n, t, ensemble)`
/// at sampled edges.
pub fn propagate_ensemble(
    ensemble: &mut Ensemble,
    model: &HamiltonianModel,
    field: &FieldTrace,
    grid: &TimeGrid,
    sampling: Sampling,
    observe: &mut dyn FnMut(usize, f64, &Ensemble),
) -> Result<()> {
    field.check_compatible(model, grid)?;
    if ensemble.dim() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: ensemble.dim(),
        });
    }
    let mut prop = Propagator::new(model, grid.dt());
    let mut e = vec![0.0; field.n_channels()];
    let n_steps = grid.n_steps();
    observe(0, 0.0, ensemble);
    for n in 0..n_steps {
        field.at(n, &mut e);
        prop.check_fields(n, &e)?;
        prop.load_fields(&e);
        for v in ensemble.members.iter_mut() {
            prop.step_loaded(v, false);
            check_finite(n, v)?;
        }
        if sampling.hits(n + 1, n_steps) {
            observe(n + 1, grid.edge(n + 1), ensemble);
        }
    }
    Ok(())
}

/// Propagate a ket; returns the final ket.
pub fn propagate(
    psi0: &[C64],
    model: &HamiltonianModel,
    field: &FieldTrace,
    grid: &TimeGrid,
    sampling: Sampling,
    observe: &mut dyn FnMut(usize, f64, &Ensemble),
) -> Result<Vec<C64>> {
    let mut ens = Ensemble::pure(psi0.to_vec());
    propagate_ensemble(&mut ens, model, field, grid, sampling, observe)?;
    Ok(ens.members.pop().expect("one member"))
}

/// Propagate a density matrix as ρ(t) = U ρ₀ U†, realized on its
/// eigen-ensemble; returns the final density matrix.
pub fn propagate_density(
    rho0: &DMatrix<C64>,
    model: &HamiltonianModel,
    field: &FieldTrace,
    grid: &TimeGrid,
    sampling: Sampling,
    observe: &mut dyn FnMut(usize, f64, &Ensemble),
) -> Result<DMatrix<C64>> {
    let mut ens = Ensemble::from_state(&QuantumState::Density(rho0.clone()), 0.0);
    propagate_ensemble(&mut ens, model, field, grid, sampling, observe)?;
    Ok(ens.density())
}

/// Adjoint states at every edge, flattened as `[edge * dim + i]`.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    dim: usize,
    data: Vec<C64>,
}

impl AdjointTrajectory {
    pub fn at(&self, edge: usize) -> &[C64] {
        &self.data[edge * self.dim..(edge + 1) * self.dim]
    }

    pub fn n_edges(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }
}

/// Propagate χ(t_f) backward with U†, storing χ at every edge.
pub fn propagate_adjoint_backward(
    chi_final: &[C64],
    model: &HamiltonianModel,
    field: &FieldTrace,
    grid: &TimeGrid,
) -> Result<AdjointTrajectory> {
    field.check_compatible(model, grid)?;
    let dim = model.dim();
    if chi_final.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: chi_final.len(),
        });
    }
    let n_steps = grid.n_steps();
    let mut data = vec![C64::new(0.0, 0.0); (n_steps + 1) * dim];
    data[n_steps * dim..].copy_from_slice(chi_final);
    let mut prop = Propagator::new(model, grid.dt());
    let mut e = vec![0.0; field.n_channels()];
    let mut chi = chi_final.to_vec();
    for n in (0..n_steps).rev() {
        field.at(n, &mut e);
        prop.check_fields(n, &e)?;
        prop.step_back(&mut chi, &e);
        check_finite(n, &chi)?;
        data[n * dim..(n + 1) * dim].copy_from_slice(&chi);
    }
    Ok(AdjointTrajectory { dim, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{Basis, BasisKind};
    use crate::model::{hamiltonian_xy, hamiltonian_z_full, MoleculeParams};
    use approx::assert_relative_eq;

    fn z_model(j_max: u32) -> HamiltonianModel {
        let b = Basis::new(j_max, BasisKind::FixedM(0)).unwrap();
        hamiltonian_z_full(&MoleculeParams::carbon_monoxide(), &b).unwrap()
    }

    #[test]
    fn zero_field_step_is_the_kinetic_phase() {
        let m = z_model(6);
        let psi: Vec<C64> = (0..m.dim()).map(|i| C64::from_polar(1.0 / 7f64.sqrt(), i as f64)).collect();
        let a = step(&psi, &m, &[0.0], 40.0).unwrap();
        let b = dense_step(&psi, &m, &[0.0], 40.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    fn noop() -> impl FnMut(usize, f64, &Ensemble) {
        |_, _, _| {}
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(-1.0, 10).is_err());
        let g = TimeGrid::new(10.0, 4).unwrap();
        assert_eq!(g.dt(), 2.5);
        assert_eq!(g.midpoint(0), 1.25);
        assert_eq!(g.edge(4), 10.0);
    }

    #[test]
    fn field_free_step_is_phase() {
        let model = z_model(6);
        let dt = 17.0;
        let psi = model.basis().ket(3, 0).unwrap();
        let out = step(&psi, &model, &[0.0], dt).unwrap();
        let b = model.params().b_rot;
        let expect = C64::from_polar(1.0, -b * 12.0 * dt);
        assert!((out[3] - expect).norm() < 1e-13);
        assert!(out.iter().enumerate().all(|(i, z)| i == 3 || z.norm() < 1e-14));
    }

    #[test]
    fn grid_step_matches_dense_step() {
        let model = z_model(15);
        let mut psi = vec![C64::new(0.0, 0.0); 16];
        for (j, z) in psi.iter_mut().enumerate().take(6) {
            *z = C64::new(1.0 / (1.0 + j as f64), 0.3 * j as f64);
        }
        let nrm = norm(&psi);
        psi.iter_mut().for_each(|z| *z /= nrm);
        let a = step(&psi, &model, &[5.3e-3], 21.8).unwrap();
        let b = dense_step(&psi, &model, &[5.3e-3], 21.8).unwrap();
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{}", err);
    }

    #[test]
    fn adjoint_roundtrip_zero_field() {
        let model = z_model(8);
        let grid = TimeGrid::new(1000.0, 50).unwrap();
        let field = FieldTrace::zeros(1, 50);
        let chi_t = model.basis().ket(2, 0).unwrap();
        let traj = propagate_adjoint_backward(&chi_t, &model, &field, &grid).unwrap();
        let back = propagate(traj.at(0), &model, &field, &grid, Sampling::every(1000), &mut noop())
            .unwrap();
        let err = back.iter().zip(&chi_t).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn overlap_is_conserved() {
        let model = z_model(15);
        let grid = TimeGrid::new(20000.0, 400).unwrap();
        let field = FieldTrace::from_fn(&grid, 1, |_, t| 8e-3 * (t / 3000.0).sin());
        let psi0 = model.basis().ket(0, 0).unwrap();
        let target = model.basis().ket(1, 0).unwrap();
        let traj = propagate_adjoint_backward(&target, &model, &field, &grid).unwrap();
        let mut overlaps = Vec::new();
        let mut psi = psi0.clone();
        let mut prop = Propagator::new(&model, grid.dt());
        for n in 0..grid.n_steps() {
            overlaps.push(inner(traj.at(n), &psi));
            prop.step(&mut psi, &[field.channel(0)[n]]);
        }
        overlaps.push(inner(traj.at(grid.n_steps()), &psi));
        for o in &overlaps {
            assert!((o - overlaps[0]).norm() < 1e-8);
        }
        assert!(overlaps[0].norm() > 1e-3);
    }

    #[test]
    fn field_cap_enforced() {
        let model = z_model(4);
        assert!(matches!(
            step(&model.basis().ket(0, 0).unwrap(), &model, &[2.0], 1.0),
            Err(Error::Propagation { .. })
        ));
    }

    #[test]
    fn m_blocks_stay_decoupled() {
        let p = MoleculeParams::carbon_monoxide();
        let b = Basis::full(15);
        let model = hamiltonian_z_full(&p, &b).unwrap();
        let grid = TimeGrid::new(5000.0, 200).unwrap();
        let field = FieldTrace::from_fn(&grid, 1, |_, t| 0.01 * (t / 800.0).cos());
        let psi0 = b.ket(2, 1).unwrap();
        let out = propagate(&psi0, &model, &field, &grid, Sampling::every(1000), &mut noop()).unwrap();
        for (i, s) in b.states().iter().enumerate() {
            if s.m != 1 {
                assert!(out[i].norm_sqr() < 1e-14);
            }
        }
        assert_relative_eq!(norm(&out), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn elliptic_model_grid_vs_dense() {
        let p = MoleculeParams::carbon_monoxide();
        let b = Basis::full(8);
        let model = hamiltonian_xy(&p, &b, std::f64::consts::FRAC_PI_4).unwrap();
        let mut psi = vec![C64::new(0.0, 0.0); b.dim()];
        psi[b.index(0, 0).unwrap()] = C64::new(0.6, 0.0);
        psi[b.index(1, -1).unwrap()] = C64::new(0.0, 0.8);
        let a = step(&psi, &model, &[6e-3, -4e-3], 21.8).unwrap();
        let d = dense_step(&psi, &model, &[6e-3, -4e-3], 21.8).unwrap();
        let err = a.iter().zip(&d).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{}", err);
    }

    #[test]
    fn norm_drift_over_long_run() {
        let model = z_model(15);
        let grid = TimeGrid::new(4.0e5, 20000).unwrap();
        let field = FieldTrace::from_fn(&grid, 1, |_, t| {
            5.338e-3 * (-((t - 7.0e4) / 2528.0).powi(2) / 2.0).exp()
        });
        let mut worst = 0.0f64;
        let psi0 = model.basis().ket(0, 0).unwrap();
        propagate(&psi0, &model, &field, &grid, Sampling::every(100), &mut |_, _, e: &Ensemble| {
            worst = worst.max((norm(&e.members[0]) - 1.0).abs());
        })
        .unwrap();
        assert!(worst < 1e-10, "{}", worst);
    }

    #[test]
    fn ensemble_of_diagonal_density() {
        let n = 3;
        let mut r = DMatrix::<C64>::zeros(n, n);
        r[(0, 0)] = C64::new(0.7, 0.0);
        r[(2, 2)] = C64::new(0.3, 0.0);
        let ens = Ensemble::from_state(&QuantumState::Density(r.clone()), 0.0);
        assert_eq!(ens.len(), 2);
        assert!((ens.density() - r).iter().all(|z| z.norm() < 1e-15));
    }
}
