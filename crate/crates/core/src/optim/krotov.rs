//! Krotov update with a quadratic running cost.

use serde::Serialize;

use super::{StepContext, StepOutcome, UpdateRule};
use crate::angular::AngularOperator;
use crate::dynamics::{FieldTrace, TimeGrid};
use crate::model::HamiltonianModel;
use crate::observables::CostSpec;
use crate::{Result, C64};

/// E_{k+1} = E_ref + (S/λ)·Im⟨χ_k|∂H/∂E|_{E_k}|ψ_{k+1}⟩ per channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct KrotovUpdate;

impl UpdateRule for KrotovUpdate {
    fn update(&mut self, ctx: &mut StepContext<'_, '_>, fields: &mut [f64], d_new: &mut [C64]) -> Result<StepOutcome> {
        let moments = ctx.moments(ctx.d_old());
        let scale = ctx.shape / ctx.cost.lambda;
        for (c, e) in fields.iter_mut().enumerate() {
            *e = ctx.reference[c] + scale * ctx.bracket(&moments, c, ctx.old);
        }
        if fields.iter().any(|e| !e.is_finite()) {
            return Err(crate::Error::Numerical(format!(
                "non-finite field update at step {}",
                ctx.step
            )));
        }
        ctx.phase(fields, d_new);
        let contribution = ctx.gain(d_new, ctx.d_old()) - (ctx.penalty(fields) - ctx.penalty(ctx.old));
        Ok(StepOutcome {
            contribution,
            ..StepOutcome::default()
        })
    }
}

/// Whether λ/S(t) exceeds the spectral radius of ∂²H/∂E² along a field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub max_spectral_radius: f64,
    /// Smallest λ/S(t) over interior samples.
    pub min_penalty_curvature: f64,
    pub violating_steps: usize,
    pub n_steps: usize,
    pub satisfied: bool,
}

/// Check λ/S(t) > max_c ρ(∂²H/∂E_c²) at every step. Reported, never
/// enforced.
pub fn monotonicity_bound_check(
    model: &HamiltonianModel,
    cost: &CostSpec,
    field: &FieldTrace,
    grid: &TimeGrid,
) -> Result<BoundReport> {
    field.check_compatible(model, grid)?;
    let nch = field.n_channels();
    let field_dependent = model.couplings().iter().any(|c| c.monomial.degree() > 2);
    let radius_at = |e: &[f64]| -> Result<f64> {
        let mut r = 0.0f64;
        for c in 0..nch {
            let op = AngularOperator::new("d2H", model.second_derivative(c, e)?);
            r = r.max(op.spectral_radius());
        }
        Ok(r)
    };
    let constant = if field_dependent {
        None
    } else {
        Some(radius_at(&vec![0.0; nch])?)
    };
    let mut e = vec![0.0; nch];
    let mut max_radius = 0.0f64;
    let mut min_curv = f64::INFINITY;
    let mut violating = 0;
    for n in 0..grid.n_steps() {
        field.at(n, &mut e);
        let r = match constant {
            Some(r) => r,
            None => radius_at(&e)?,
        };
        let curv = cost.lambda / grid.shape(n);
        max_radius = max_radius.max(r);
        min_curv = min_curv.min(curv);
        if curv <= r {
            violating += 1;
        }
    }
    Ok(BoundReport {
        max_spectral_radius: max_radius,
        min_penalty_curvature: min_curv,
        violating_steps: violating,
        n_steps: grid.n_steps(),
        satisfied: violating == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{Basis, BasisKind};
    use crate::model::{hamiltonian_z_averaged, hamiltonian_z_full, MoleculeParams};
    use crate::observables::ReferencePolicy;

    fn grid() -> TimeGrid {
        TimeGrid::new(1000.0, 50).unwrap()
    }

    #[test]
    fn averaged_model_radius_is_near_half_parallel_polarizability() {
        let p = MoleculeParams::carbon_monoxide();
        let b = Basis::new(15, BasisKind::FixedM(0)).unwrap();
        let m = hamiltonian_z_averaged(&p, &b).unwrap();
        let cost = CostSpec::new(5e-2, 2, ReferencePolicy::PreviousIterate).unwrap();
        let f = FieldTrace::zeros(1, 50);
        let r = monotonicity_bound_check(&m, &cost, &f, &grid()).unwrap();
        assert!((r.max_spectral_radius - p.alpha_par / 2.0).abs() < 0.05 * p.alpha_par);
        // λ = 5e-2 is far below the curvature the bound asks for, except in
        // the first and last step where S(t_mid) < 1e-3.
        assert!(!r.satisfied);
        assert_eq!(r.violating_steps, 48);
    }

    #[test]
    fn large_lambda_satisfies_bound() {
        let p = MoleculeParams::carbon_monoxide();
        let b = Basis::new(6, BasisKind::FixedM(0)).unwrap();
        let m = hamiltonian_z_full(&p, &b).unwrap();
        let cost = CostSpec::new(1e3, 2, ReferencePolicy::PreviousIterate).unwrap();
        let f = FieldTrace::from_fn(&grid(), 1, |_, t| 1e-3 * (t / 1000.0));
        let r = monotonicity_bound_check(&m, &cost, &f, &grid()).unwrap();
        assert!(r.satisfied);
        assert!(r.min_penalty_curvature >= 1e3);
    }
}
