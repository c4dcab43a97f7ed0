//! Cubic-root update for the quartic running cost, and the root-sensitivity scan.

use serde::Serialize;

use super::cubic::CubicUpdateProblem;
use super::{StepContext, StepOutcome, UpdateRule};
use crate::angular::AngularOperator;
use crate::model::HamiltonianModel;
use crate::{Error, Result, C64};

/// Per channel (Gauss–Seidel, in channel order) solve
/// 4(λ/S)(E − E_ref)³ = 2·Im⟨χ_k|∂H/∂E|_{E}|ψ_{k+1}⟩ for E.
///
/// Roots are tried from the closest to E_ref outward; a root is accepted
/// when the exact objective gain of the step outweighs its penalty. If no
/// root qualifies the channel keeps its current value.
#[derive(Debug, Clone, Default)]
pub struct QuarticUpdate {
    d_cur: Vec<C64>,
    d_trial: Vec<C64>,
    trial: Vec<f64>,
}

impl UpdateRule for QuarticUpdate {
    fn update(&mut self, ctx: &mut StepContext<'_, '_>, fields: &mut [f64], d_new: &mut [C64]) -> Result<StepOutcome> {
        self.d_cur.clear();
        self.d_cur.extend_from_slice(ctx.d_old());
        self.d_trial.resize(self.d_cur.len(), C64::new(0.0, 0.0));
        let leading = 4.0 * ctx.cost.lambda / ctx.shape;
        let mut outcome = StepOutcome::default();
        for c in 0..fields.len() {
            let moments = ctx.moments(&self.d_cur);
            let problem = CubicUpdateProblem {
                leading,
                reference: ctx.reference[c],
                bracket: ctx.bracket_polynomial(&moments, c, fields)?,
            };
            let roots = problem.real_roots().map_err(|e| Error::Propagation {
                step: ctx.step,
                reason: e.to_string(),
            })?;
            let base = ctx.penalty(fields);
            let mut accepted = false;
            for (rank, &root) in roots.iter().enumerate() {
                self.trial.clear();
                self.trial.extend_from_slice(fields);
                self.trial[c] = root;
                ctx.phase(&self.trial, &mut self.d_trial);
                let contribution = ctx.gain(&self.d_trial, &self.d_cur) - (ctx.penalty(&self.trial) - base);
                if contribution >= 0.0 {
                    fields[c] = root;
                    std::mem::swap(&mut self.d_cur, &mut self.d_trial);
                    outcome.contribution += contribution;
                    outcome.fallback |= rank > 0;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                outcome.fallback = true;
                outcome.held = true;
            }
        }
        d_new.copy_from_slice(&self.d_cur);
        Ok(outcome)
    }
}

/// Largest eigenvalue magnitudes of the dipole, polarizability and
/// hyperpolarizability couplings of a one-channel model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarCouplings {
    pub dipole: f64,
    pub polarizability: f64,
    pub hyperpolarizability: f64,
}

impl ScalarCouplings {
    pub fn from_model(model: &HamiltonianModel) -> Result<Self> {
        if model.channels() != 1 {
            return Err(Error::Config("the root scan needs a one-channel model".into()));
        }
        let mut by_degree = [0.0f64; 3];
        for c in model.couplings() {
            let d = c.monomial.degree() as usize;
            if (1..=3).contains(&d) {
                let op = AngularOperator::new("coupling", c.operator.matrix.clone());
                by_degree[d - 1] = by_degree[d - 1].max(op.spectral_radius());
            }
        }
        Ok(ScalarCouplings {
            dipole: by_degree[0],
            polarizability: by_degree[1],
            hyperpolarizability: by_degree[2],
        })
    }
}

/// Selected roots of the scalar update cubic over a (λ, x) grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootScanReport {
    pub couplings: ScalarCouplings,
    pub reference: f64,
    pub lambdas: Vec<f64>,
    pub xs: Vec<f64>,
    /// roots[l][i] for lambdas[l], xs[i].
    pub roots: Vec<Vec<f64>>,
}

impl RootScanReport {
    /// max_i |Δroot/Δx| over neighbouring scan points for one λ.
    pub fn max_slope(&self, lambda_index: usize) -> f64 {
        let r = &self.roots[lambda_index];
        self.xs
            .windows(2)
            .zip(r.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }

    /// (λ, x, root) rows in scan order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.lambdas.iter().zip(&self.roots).flat_map(move |(&l, rs)| {
            self.xs.iter().zip(rs).map(move |(&x, &r)| (l, x, r))
        })
    }
}

/// Solve 4λ(E − E_ref)³ − 6|β|xE² − 4|α|xE − 2|μ|x = 0 (S = 1) for each λ
/// over an ascending x grid, following the root branch that passes through
/// E_ref at x = 0: starting from the sample nearest x = 0, each neighbour
/// takes the real root closest to the previous one.
pub fn root_sensitivity_scan(
    couplings: ScalarCouplings,
    lambdas: &[f64],
    xs: &[f64],
    reference: f64,
) -> Result<RootScanReport> {
    if xs.is_empty() || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("root scan needs a non-empty ascending x grid".into()));
    }
    let start = (0..xs.len())
        .min_by(|&a, &b| xs[a].abs().total_cmp(&xs[b].abs()))
        .expect("non-empty grid");
    let mut roots = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let candidates = |x: f64| {
            CubicUpdateProblem {
                leading: 4.0 * lambda,
                reference,
                bracket: [
                    couplings.dipole * x,
                    2.0 * couplings.polarizability * x,
                    3.0 * couplings.hyperpolarizability * x,
                ],
            }
            .real_roots()
        };
        let mut row = vec![0.0; xs.len()];
        row[start] = candidates(xs[start])?[0];
        let nearest = |x: f64, prev: f64| -> Result<f64> {
            Ok(candidates(x)?
                .into_iter()
                .min_by(|a, b| (a - prev).abs().total_cmp(&(b - prev).abs()))
                .expect("at least one real root"))
        };
        for i in start + 1..xs.len() {
            row[i] = nearest(xs[i], row[i - 1])?;
        }
        for i in (0..start).rev() {
            row[i] = nearest(xs[i], row[i + 1])?;
        }
        roots.push(row);
    }
    Ok(RootScanReport {
        couplings,
        reference,
        lambdas: lambdas.to_vec(),
        xs: xs.to_vec(),
        roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{Basis, BasisKind};
    use crate::model::{hamiltonian_z_full, MoleculeParams};

    fn couplings() -> ScalarCouplings {
        let b = Basis::new(15, BasisKind::FixedM(0)).unwrap();
        let m = hamiltonian_z_full(&MoleculeParams::carbon_monoxide(), &b).unwrap();
        ScalarCouplings::from_model(&m).unwrap()
    }

    fn xs() -> Vec<f64> {
        (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect()
    }

    #[test]
    fn zero_overlap_gives_reference() {
        let r = root_sensitivity_scan(couplings(), &[1e2, 1e7], &[0.0], 0.0).unwrap();
        assert!(r.roots.iter().all(|row| row[0] == 0.0));
    }

    #[test]
    fn slope_falls_with_lambda() {
        let r = root_sensitivity_scan(couplings(), &[1e2, 1e4, 1e7], &xs(), 0.0).unwrap();
        let s: Vec<f64> = (0..3).map(|l| r.max_slope(l)).collect();
        assert!(s[0] > s[1] && s[1] > s[2], "{s:?}");
        assert!(r.roots.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn dipole_only_root_is_odd_in_overlap() {
        let c = ScalarCouplings {
            polarizability: 0.0,
            hyperpolarizability: 0.0,
            ..couplings()
        };
        let r = root_sensitivity_scan(c, &[1e3], &xs(), 0.0).unwrap();
        let row = &r.roots[0];
        for i in 0..row.len() {
            assert!((row[i] + row[row.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn branch_does_not_depend_on_the_grid() {
        // Refining the grid tenfold must follow the same branch, including
        // where a second branch comes closer to E_ref.
        let fine_xs: Vec<f64> = (0..=2000).map(|i| -1.0 + i as f64 * 1e-3).collect();
        let fine = root_sensitivity_scan(couplings(), &[1e4], &fine_xs, 0.0).unwrap();
        let coarse = root_sensitivity_scan(couplings(), &[1e4], &xs(), 0.0).unwrap();
        for (i, c) in coarse.roots[0].iter().enumerate() {
            assert!((fine.roots[0][10 * i] - c).abs() < 1e-9, "x = {}", coarse.xs[i]);
        }
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        assert!(root_sensitivity_scan(couplings(), &[1e2], &[0.1, -0.1], 0.0).is_err());
    }

    #[test]
    fn couplings_are_positive() {
        let c = couplings();
        assert!(c.dipole > 0.0 && c.polarizability > 0.0 && c.hyperpolarizability > 0.0);
    }
}
