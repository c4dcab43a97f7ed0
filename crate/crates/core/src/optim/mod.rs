//! Monotonically convergent field optimization.
//!
//! Both methods share one sweep: the costates are propagated backward
//! under the current field, then the states are propagated forward while
//! the field is updated step by step with immediate feedback. The update
//! rule is the only difference between Krotov (quadratic penalty,
//! explicit update) and the quartic-penalty method (cubic root per step).
//!
//! Inside step n the overlap ⟨χ_{n+1}|U_n(e)|ψ_n⟩ equals Σ_g P_g D_g(e),
//! where P collects the half-kicked costate and state on the angular grid
//! and D = exp(−iV(e)dt). The exact change of the final-time objective
//! caused by a new field at one step is therefore 2Re Σ_g P_g (D' − D);
//! summed over the sweep it bounds the objective change from below.

pub mod cubic;
pub mod krotov;
pub mod quartic;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_finite, inner, Ensemble, FieldTrace, Propagator, QuantumState, TimeGrid};
use crate::model::{Coupling, HamiltonianModel};
use crate::observables::{running_cost, CostSpec, ReferencePolicy};
use crate::{Error, Result, C64};

pub use cubic::{solve_cubic_update, CubicUpdateProblem};
pub use krotov::{monotonicity_bound_check, BoundReport};
pub use quartic::{root_sensitivity_scan, RootScanReport};

/// Tolerance for the per-iteration monotonicity check.
pub const MONOTONICITY_TOL: f64 = 1e-10;
/// Default stagnation threshold on |ΔC|.
pub const DEFAULT_STAGNATION_EPS: f64 = 1e-7;
/// Consecutive small |ΔC| needed to declare stagnation.
const STAGNATION_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Krotov,
    Quartic,
}

impl Method {
    /// Exponent 2n of the running cost.
    pub fn exponent(self) -> u32 {
        match self {
            Method::Krotov => 2,
            Method::Quartic => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Krotov => "krotov",
            Method::Quartic => "quartic",
        }
    }
}

/// Final-time objective F = Σ_i w_i ⟨ψ_i|O|ψ_i⟩ with O positive
/// semidefinite: |ψ_f⟩⟨ψ_f| for kets, ρ_f / Tr ρ_f² for densities.
#[derive(Debug, Clone)]
pub enum Objective {
    Ket(Vec<C64>),
    Density { target: DMatrix<C64>, purity: f64 },
}

impl Objective {
    pub fn new(target: &QuantumState) -> Result<Self> {
        match target {
            QuantumState::Pure(v) => Ok(Objective::Ket(v.clone())),
            QuantumState::Density(r) => {
                let purity = (r * r).trace().re;
                if purity <= 0.0 {
                    return Err(Error::Undefined("target density matrix is zero".into()));
                }
                Ok(Objective::Density {
                    target: r.clone(),
                    purity,
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Ket(v) => v.len(),
            Objective::Density { target, .. } => target.nrows(),
        }
    }

    /// O|ψ⟩, the terminal costate of one member.
    pub fn costate(&self, psi: &[C64]) -> Vec<C64> {
        match self {
            Objective::Ket(t) => {
                let c = inner(t, psi);
                t.iter().map(|z| z * c).collect()
            }
            Objective::Density { target, purity } => {
                let v = target * DVector::from_column_slice(psi);
                v.iter().map(|z| z / *purity).collect()
            }
        }
    }

    pub fn value(&self, ens: &Ensemble) -> f64 {
        ens.weights
            .iter()
            .zip(&ens.members)
            .map(|(w, psi)| w * inner(psi, &self.costate(psi)).re)
            .sum()
    }
}

/// Everything fixed during a run.
pub struct Problem<'a> {
    pub model: &'a HamiltonianModel,
    pub grid: TimeGrid,
    pub initial: Ensemble,
    pub objective: Objective,
}

impl<'a> Problem<'a> {
    pub fn new(
        model: &'a HamiltonianModel,
        grid: TimeGrid,
        initial: Ensemble,
        objective: Objective,
    ) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::validation("initial", "empty ensemble"));
        }
        for d in [initial.dim(), objective.dim()] {
            if d != model.dim() {
                return Err(Error::Dimension {
                    expected: model.dim(),
                    found: d,
                });
            }
        }
        Ok(Problem {
            model,
            grid,
            initial,
            objective,
        })
    }

    /// Final states and objective value for a field.
    pub fn evaluate(&self, field: &FieldTrace) -> Result<(Ensemble, f64)> {
        let mut ens = self.initial.clone();
        crate::dynamics::propagate_ensemble(
            &mut ens,
            self.model,
            field,
            &self.grid,
            crate::dynamics::Sampling::every(usize::MAX),
            &mut |_, _, _| {},
        )?;
        let f = self.objective.value(&ens);
        Ok((ens, f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub method: Method,
    pub cost: CostSpec,
    pub iterations: usize,
    pub stagnation_eps: f64,
}

impl Settings {
    pub fn new(method: Method, lambda: f64, reference: ReferencePolicy, iterations: usize) -> Result<Self> {
        Ok(Settings {
            method,
            cost: CostSpec::new(lambda, method.exponent(), reference)?,
            iterations,
            stagnation_eps: DEFAULT_STAGNATION_EPS,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Final-time objective (fidelity).
    pub fidelity: f64,
    pub running_cost: f64,
    /// fidelity − running_cost.
    pub total_cost: f64,
    /// Change of the total cost against the previous iterate, both
    /// measured with this sweep's reference field.
    pub delta_cost: f64,
    pub max_field: f64,
    pub total_variation: f64,
    /// Quartic steps where the closest root was rejected.
    pub fallback_events: usize,
    /// Quartic steps where every root was rejected and the field was held.
    pub held_steps: usize,
    /// Steps whose exact gain minus penalty was negative.
    pub negative_steps: usize,
    pub monotone: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    Stagnation,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub guess: FieldTrace,
    pub field: FieldTrace,
    pub final_states: Ensemble,
    pub stop: StopReason,
    pub n_steps: usize,
}

impl RunResult {
    pub fn final_fidelity(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.fidelity)
    }

    pub fn is_monotone(&self) -> bool {
        self.records.iter().all(|r| r.monotone)
    }

    pub fn fallback_fraction(&self) -> f64 {
        let events: usize = self.records.iter().map(|r| r.fallback_events).sum();
        let sweeps = self.records.len().saturating_sub(1).max(1);
        events as f64 / (sweeps * self.n_steps) as f64
    }
}

/// Data available to an update rule at one time step.
pub struct StepContext<'s, 'm> {
    pub step: usize,
    pub dt: f64,
    pub shape: f64,
    pub cost: CostSpec,
    pub old: &'s [f64],
    pub reference: &'s [f64],
    couplings: &'m [Coupling],
    overlap: &'s [C64],
    d_old: &'s [C64],
    prop: &'s mut Propagator<'m>,
}

impl StepContext<'_, '_> {
    pub fn d_old(&self) -> &[C64] {
        self.d_old
    }

    pub fn couplings(&self) -> &[Coupling] {
        self.couplings
    }

    /// Im Σ_g P_g D_g f_t(g) for every coupling t.
    pub fn moments(&self, d: &[C64]) -> Vec<f64> {
        self.couplings
            .iter()
            .map(|c| {
                self.overlap
                    .iter()
                    .zip(d)
                    .zip(&c.grid_values)
                    .map(|((p, d), f)| (p * d).im * f)
                    .sum()
            })
            .collect()
    }

    /// Bracket Im⟨χ|∂H/∂E_c|ψ⟩ at fixed fields.
    pub fn bracket(&self, moments: &[f64], channel: usize, fields: &[f64]) -> f64 {
        self.couplings
            .iter()
            .zip(moments)
            .map(|(c, m)| c.monomial.partial(channel, fields) * m)
            .sum()
    }

    /// The same bracket as a polynomial in E_c with the other channels
    /// held at `fields`: coefficients of E_c⁰, E_c¹, E_c².
    pub fn bracket_polynomial(&self, moments: &[f64], channel: usize, fields: &[f64]) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (c, m) in self.couplings.iter().zip(moments) {
            let p = c.monomial.0[channel] as usize;
            if p == 0 {
                continue;
            }
            if p > 3 {
                return Err(Error::Numerical("coupling of degree above 3 in one channel".into()));
            }
            let others: f64 = c
                .monomial
                .0
                .iter()
                .zip(fields)
                .enumerate()
                .filter(|(o, _)| *o != channel)
                .map(|(_, (&q, &e))| e.powi(q as i32))
                .product();
            out[p - 1] += p as f64 * others * m;
        }
        Ok(out)
    }

    /// exp(−iV(fields)dt) on the grid.
    pub fn phase(&mut self, fields: &[f64], out: &mut [C64]) {
        self.prop.interaction_phase(fields, out);
    }

    /// 2Re Σ_g P_g (after − before).
    pub fn gain(&self, after: &[C64], before: &[C64]) -> f64 {
        2.0 * self
            .overlap
            .iter()
            .zip(after)
            .zip(before)
            .map(|((p, a), b)| (p * (a - b)).re)
            .sum::<f64>()
    }

    /// Running-cost contribution dt·λ·Σ_c (e_c − ref_c)^{2n}/S of this step.
    pub fn penalty(&self, fields: &[f64]) -> f64 {
        fields
            .iter()
            .zip(self.reference)
            .map(|(e, r)| self.dt * self.cost.density(e - r, self.shape))
            .sum()
    }
}

/// Result of one time-local update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutcome {
    /// Exact objective gain minus penalty change for this step.
    pub contribution: f64,
    pub fallback: bool,
    pub held: bool,
}

/// A time-local field update. Implementations write the new fields and the
/// matching phase exp(−iV dt) into `d_new`.
pub trait UpdateRule {
    fn update(&mut self, ctx: &mut StepContext<'_, '_>, fields: &mut [f64], d_new: &mut [C64]) -> Result<StepOutcome>;
}

/// Buffers shared by the backward and forward passes.
struct Sweeper<'p, 'm> {
    problem: &'p Problem<'m>,
    prop: Propagator<'m>,
    quad: Vec<f64>,
    costates: Vec<C64>,
    grid_states: Vec<C64>,
    grid_costate: Vec<C64>,
    work: Vec<C64>,
    overlap: Vec<C64>,
    d_old: Vec<C64>,
    d_new: Vec<C64>,
}

#[derive(Debug, Default, Clone, Copy)]
struct SweepStats {
    fallback_events: usize,
    held_steps: usize,
    negative_steps: usize,
}

impl<'p, 'm> Sweeper<'p, 'm> {
    fn new(problem: &'p Problem<'m>) -> Self {
        let model = problem.model;
        let g = model.grid().len();
        let dim = model.dim();
        let members = problem.initial.len();
        let n = problem.grid.n_steps();
        let zero = C64::new(0.0, 0.0);
        Sweeper {
            problem,
            prop: Propagator::new(model, problem.grid.dt()),
            quad: model.grid().point_weights(),
            costates: vec![zero; members * (n + 1) * dim],
            grid_states: vec![zero; members * g],
            grid_costate: vec![zero; g],
            work: vec![zero; dim],
            overlap: vec![zero; g],
            d_old: vec![zero; g],
            d_new: vec![zero; g],
        }
    }

    fn costate_slot(&self, member: usize, edge: usize) -> std::ops::Range<usize> {
        let dim = self.problem.model.dim();
        let start = (member * (self.problem.grid.n_steps() + 1) + edge) * dim;
        start..start + dim
    }

    /// χ_i(t_f) = O ψ_i(t_f), then χ_i(t_n) = U_n† χ_i(t_{n+1}) for all n.
    fn backward(&mut self, finals: &Ensemble, field: &FieldTrace) -> Result<()> {
        let n_steps = self.problem.grid.n_steps();
        for (i, psi) in finals.members.iter().enumerate() {
            let chi = self.problem.objective.costate(psi);
            let slot = self.costate_slot(i, n_steps);
            self.costates[slot].copy_from_slice(&chi);
        }
        let mut e = vec![0.0; field.n_channels()];
        let mut chi = vec![C64::new(0.0, 0.0); self.problem.model.dim()];
        for n in (0..n_steps).rev() {
            field.at(n, &mut e);
            self.prop.check_fields(n, &e)?;
            self.prop.load_fields(&e);
            for i in 0..finals.len() {
                chi.copy_from_slice(&self.costates[self.costate_slot(i, n + 1)]);
                self.prop.step_loaded(&mut chi, true);
                check_finite(n, &chi)?;
                let slot = self.costate_slot(i, n);
                self.costates[slot].copy_from_slice(&chi);
            }
        }
        Ok(())
    }

    /// Forward pass with immediate feedback. Fills `new` and returns the
    /// final states.
    fn forward(
        &mut self,
        rule: &mut dyn UpdateRule,
        cost: CostSpec,
        old: &FieldTrace,
        reference: &FieldTrace,
        new: &mut FieldTrace,
    ) -> Result<(Ensemble, SweepStats)> {
        let problem = self.problem;
        let model = problem.model;
        let grid = &problem.grid;
        let g = model.grid().len();
        let mut ens = problem.initial.clone();
        let nch = old.n_channels();
        let (mut e_old, mut e_ref, mut fields) = (vec![0.0; nch], vec![0.0; nch], vec![0.0; nch]);
        let mut stats = SweepStats::default();
        for n in 0..grid.n_steps() {
            self.overlap.iter_mut().for_each(|p| *p = C64::new(0.0, 0.0));
            for (i, psi) in ens.members.iter().enumerate() {
                let slot = self.costate_slot(i, n + 1);
                let gs = &mut self.grid_states[i * g..(i + 1) * g];
                self.prop.kick_to_grid(psi, false, &mut self.work, gs);
                self.prop
                    .kick_to_grid(&self.costates[slot], true, &mut self.work, &mut self.grid_costate);
                let w = ens.weights[i];
                for (((p, q), c), s) in self.overlap.iter_mut().zip(&self.quad).zip(&self.grid_costate).zip(gs.iter()) {
                    *p += c.conj() * s * (w * q);
                }
            }
            old.at(n, &mut e_old);
            reference.at(n, &mut e_ref);
            self.prop.check_fields(n, &e_old)?;
            self.prop.interaction_phase(&e_old, &mut self.d_old);
            fields.copy_from_slice(&e_old);
            let outcome = {
                let mut ctx = StepContext {
                    step: n,
                    dt: grid.dt(),
                    shape: grid.shape(n),
                    cost,
                    old: &e_old,
                    reference: &e_ref,
                    couplings: model.couplings(),
                    overlap: &self.overlap,
                    d_old: &self.d_old,
                    prop: &mut self.prop,
                };
                rule.update(&mut ctx, &mut fields, &mut self.d_new)?
            };
            self.prop.check_fields(n, &fields)?;
            stats.fallback_events += outcome.fallback as usize;
            stats.held_steps += outcome.held as usize;
            stats.negative_steps += (outcome.contribution < 0.0) as usize;
            new.set(n, &fields);
            for (i, psi) in ens.members.iter_mut().enumerate() {
                let gs = &mut self.grid_states[i * g..(i + 1) * g];
                for (s, d) in gs.iter_mut().zip(&self.d_new) {
                    *s *= d;
                }
                self.prop.finish_from_grid(gs, psi);
                check_finite(n, psi)?;
            }
        }
        Ok((ens, stats))
    }
}

/// Update rule that leaves the field unchanged and records the exact
/// discrete gradient ∂F/∂e_n = 2dt·Im Σ_g P V' D.
struct GradientProbe {
    gradient: FieldTrace,
}

impl UpdateRule for GradientProbe {
    fn update(&mut self, ctx: &mut StepContext<'_, '_>, fields: &mut [f64], d_new: &mut [C64]) -> Result<StepOutcome> {
        let moments = ctx.moments(ctx.d_old());
        let g: Vec<f64> = (0..fields.len())
            .map(|c| 2.0 * ctx.dt * ctx.bracket(&moments, c, ctx.old))
            .collect();
        self.gradient.set(ctx.step, &g);
        d_new.copy_from_slice(ctx.d_old());
        Ok(StepOutcome::default())
    }
}

/// Objective value and its gradient with respect to every field sample.
pub fn objective_gradient(problem: &Problem<'_>, field: &FieldTrace) -> Result<(f64, FieldTrace)> {
    field.check_compatible(problem.model, &problem.grid)?;
    let (finals, value) = problem.evaluate(field)?;
    let mut sweeper = Sweeper::new(problem);
    sweeper.backward(&finals, field)?;
    let mut probe = GradientProbe {
        gradient: FieldTrace::zeros(field.n_channels(), field.n_steps()),
    };
    let mut unchanged = field.clone();
    let dummy = CostSpec::new(1.0, 2, ReferencePolicy::PreviousIterate)?;
    sweeper.forward(&mut probe, dummy, field, field, &mut unchanged)?;
    Ok((value, probe.gradient))
}

fn reference_field(policy: ReferencePolicy, guess: &FieldTrace, previous: &FieldTrace) -> FieldTrace {
    match policy {
        ReferencePolicy::PreviousIterate => previous.clone(),
        ReferencePolicy::Fixed => guess.clone(),
        ReferencePolicy::Zero => FieldTrace::zeros(guess.n_channels(), guess.n_steps()),
    }
}

/// Run the optimizer from `guess`. `on_iteration` sees every record as it
/// is produced (iteration 0 is the guess evaluation).
pub fn optimize(
    problem: &Problem<'_>,
    guess: &FieldTrace,
    settings: &Settings,
    on_iteration: &mut dyn FnMut(&IterationRecord),
) -> Result<RunResult> {
    guess.check_compatible(problem.model, &problem.grid)?;
    if settings.cost.exponent != settings.method.exponent() {
        return Err(Error::validation(
            "exponent",
            format!("{} needs exponent {}", settings.method.name(), settings.method.exponent()),
        ));
    }
    let cost = settings.cost;
    let grid = &problem.grid;
    let start = Instant::now();
    let (mut finals, mut fidelity) = problem.evaluate(guess)?;
    let ref0 = reference_field(cost.reference, guess, guess);
    let run0 = running_cost(guess, &ref0, &cost, grid)?;
    let first = IterationRecord {
        iteration: 0,
        fidelity,
        running_cost: run0,
        total_cost: fidelity - run0,
        delta_cost: 0.0,
        max_field: guess.max_abs(),
        total_variation: guess.total_variation(),
        fallback_events: 0,
        held_steps: 0,
        negative_steps: 0,
        monotone: true,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    on_iteration(&first);
    let mut records = vec![first];
    let mut field = guess.clone();
    let mut rule: Box<dyn UpdateRule> = match settings.method {
        Method::Krotov => Box::new(krotov::KrotovUpdate),
        Method::Quartic => Box::new(quartic::QuarticUpdate::default()),
    };
    let mut sweeper = Sweeper::new(problem);
    let mut small = 0;
    let mut stop = StopReason::Budget;
    for k in 1..=settings.iterations {
        let t0 = Instant::now();
        let wrap = |e: Error| Error::Iteration {
            iteration: k,
            source: Box::new(e),
        };
        let reference = reference_field(cost.reference, guess, &field);
        sweeper.backward(&finals, &field).map_err(wrap)?;
        let mut next = field.clone();
        let (ens, stats) = sweeper
            .forward(rule.as_mut(), cost, &field, &reference, &mut next)
            .map_err(wrap)?;
        let new_fidelity = problem.objective.value(&ens);
        if !new_fidelity.is_finite() {
            return Err(wrap(Error::Numerical("non-finite objective".into())));
        }
        let run_new = running_cost(&next, &reference, &cost, grid).map_err(wrap)?;
        let run_old = running_cost(&field, &reference, &cost, grid).map_err(wrap)?;
        let delta = (new_fidelity - run_new) - (fidelity - run_old);
        let record = IterationRecord {
            iteration: k,
            fidelity: new_fidelity,
            running_cost: run_new,
            total_cost: new_fidelity - run_new,
            delta_cost: delta,
            max_field: next.max_abs(),
            total_variation: next.total_variation(),
            fallback_events: stats.fallback_events,
            held_steps: stats.held_steps,
            negative_steps: stats.negative_steps,
            monotone: delta >= -MONOTONICITY_TOL,
            wall_time_s: t0.elapsed().as_secs_f64(),
        };
        on_iteration(&record);
        records.push(record);
        field = next;
        finals = ens;
        fidelity = new_fidelity;
        small = if delta.abs() < settings.stagnation_eps { small + 1 } else { 0 };
        if small >= STAGNATION_RUN {
            stop = StopReason::Stagnation;
            break;
        }
    }
    Ok(RunResult {
        method: settings.method,
        records,
        guess: guess.clone(),
        field,
        final_states: finals,
        stop,
        n_steps: grid.n_steps(),
    })
}
