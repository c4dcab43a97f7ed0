//! The adjoint gradient against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotctl::angular::{Basis, BasisKind};
use rotctl::dynamics::{Ensemble, FieldTrace, TimeGrid};
use rotctl::model::{hamiltonian_xy, hamiltonian_z_averaged, hamiltonian_z_full, HamiltonianModel, MoleculeParams};
use rotctl::optim::{objective_gradient, Objective, Problem};
use rotctl::targets::{resolve, TargetSpec};

const PERTURBATION_NORM: f64 = 1e-6;
const MAX_RELATIVE_ERROR: f64 = 1e-3;

/// Worst relative error of ⟨∇F, δ⟩ against [F(e+δ) − F(e−δ)]/2 over random δ.
fn worst_error(model: &HamiltonianModel, spec: TargetSpec, n_steps: usize, amp: f64, seed: u64) -> f64 {
    let p = MoleculeParams::carbon_monoxide();
    let task = resolve(&spec, model.basis(), &p).unwrap();
    let grid = TimeGrid::new(p.rotational_period(), n_steps).unwrap();
    let problem = Problem::new(
        model,
        grid.clone(),
        Ensemble::from_state(&task.initial, 0.0),
        Objective::new(&task.target).unwrap(),
    )
    .unwrap();
    let tf = grid.t_final();
    let field = FieldTrace::from_fn(&grid, model.channels(), |c, t| {
        amp * ((t / tf * 7.0 + c as f64).sin() + 0.5 * (-(t - 0.3 * tf).powi(2) / (0.01 * tf * tf)).exp())
    });
    let (_, grad) = objective_gradient(&problem, &field).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let samples: Vec<Vec<f64>> = (0..model.channels())
            .map(|_| (0..n_steps).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut delta = FieldTrace::from_channels(samples).unwrap();
        let len: f64 = (0..delta.n_channels())
            .flat_map(|c| delta.channel(c).to_vec())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        for c in 0..delta.n_channels() {
            delta.channel_mut(c).iter_mut().for_each(|x| *x *= PERTURBATION_NORM / len);
        }
        let shifted = |sign: f64| {
            let mut f = field.clone();
            for c in 0..f.n_channels() {
                for (x, d) in f.channel_mut(c).iter_mut().zip(delta.channel(c)) {
                    *x += sign * d;
                }
            }
            problem.evaluate(&f).unwrap().1
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / 2.0;
        let predicted: f64 = (0..grad.n_channels())
            .flat_map(|c| grad.channel(c).iter().zip(delta.channel(c)).map(|(g, d)| g * d).collect::<Vec<_>>())
            .sum();
        worst = worst.max((predicted - fd).abs() / fd.abs());
    }
    worst
}

#[test]
fn carrier_resolved_orientation() {
    let m = hamiltonian_z_full(&MoleculeParams::carbon_monoxide(), &Basis::new(10, BasisKind::FixedM(0)).unwrap()).unwrap();
    let e = worst_error(&m, TargetSpec::Orientation { j_f: 4 }, 512, 5e-3, 1);
    assert!(e < MAX_RELATIVE_ERROR, "{e}");
}

#[test]
fn cycle_averaged_ket_target() {
    let m = hamiltonian_z_averaged(&MoleculeParams::carbon_monoxide(), &Basis::new(10, BasisKind::FixedM(0)).unwrap()).unwrap();
    let e = worst_error(&m, TargetSpec::Ket { j: 2, m: 0 }, 512, 2e-2, 2);
    assert!(e < MAX_RELATIVE_ERROR, "{e}");
}

#[test]
fn elliptic_density_target() {
    let m = hamiltonian_xy(&MoleculeParams::carbon_monoxide(), &Basis::new(6, BasisKind::Full).unwrap(), 0.6).unwrap();
    let spec = TargetSpec::ThermalAlignment { temperature_k: 5.0, j_f: 3 };
    let e = worst_error(&m, spec, 256, 2e-2, 3);
    assert!(e < MAX_RELATIVE_ERROR, "{e}");
}
