//! Real roots of the time-local quartic-penalty update equation.
//!
//! At each time step the update solves
//! `lead·(E − E_ref)³ − 2·(b₀ + b₁E + b₂E²) = 0` with `lead = 4λ/S > 0`.
//! Working in the increment Δ = E − E_ref keeps the cubic well scaled.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicUpdateProblem {
    /// 4λ/S(t), strictly positive.
    pub leading: f64,
    /// Field value the penalty is measured from.
    pub reference: f64,
    /// Coupling bracket Im⟨χ|∂H/∂E|ψ⟩ as a polynomial b₀ + b₁E + b₂E².
    pub bracket: [f64; 3],
}

impl CubicUpdateProblem {
    /// Coefficients of the polynomial in E, constant term first.
    pub fn coefficients(&self) -> [f64; 4] {
        let (l, r) = (self.leading, self.reference);
        let [b0, b1, b2] = self.bracket;
        [
            -l * r * r * r - 2.0 * b0,
            3.0 * l * r * r - 2.0 * b1,
            -3.0 * l * r - 2.0 * b2,
            l,
        ]
    }

    pub fn eval(&self, e: f64) -> f64 {
        let d = e - self.reference;
        let [b0, b1, b2] = self.bracket;
        self.leading * d * d * d - 2.0 * (b0 + e * (b1 + e * b2))
    }

    /// Backward error |p(E)| / Σ|c_k||E|^k: the relative coefficient
    /// perturbation that makes E an exact root.
    pub fn relative_residual(&self, e: f64) -> f64 {
        let c = self.coefficients();
        let p = c.iter().rev().fold(0.0, |acc, &x| acc * e + x);
        let scale = c.iter().rev().fold(0.0, |acc, &x: &f64| acc * e.abs() + x.abs());
        if scale == 0.0 {
            p.abs()
        } else {
            p.abs() / scale
        }
    }

    /// Monic coefficients (a, b, c) of Δ³ + aΔ² + bΔ + c.
    fn monic_increment(&self) -> [f64; 3] {
        let r = self.reference;
        let [b0, b1, b2] = self.bracket;
        let s = -2.0 / self.leading;
        [
            s * b2,
            s * (b1 + 2.0 * b2 * r),
            s * (b0 + r * (b1 + r * b2)),
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.leading.is_finite() && self.leading > 0.0) {
            return Err(Error::Numerical(format!(
                "cubic update needs a positive finite leading coefficient, got {}",
                self.leading
            )));
        }
        if !self.reference.is_finite() || self.bracket.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical("non-finite cubic coefficient".into()));
        }
        Ok(())
    }

    /// All distinct real roots, ordered by distance from the reference
    /// (ties toward smaller |E|).
    pub fn real_roots(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let [a, b, c] = self.monic_increment();
        let mut deltas = monic_cubic_roots(a, b, c);
        for d in deltas.iter_mut() {
            *d = polish(a, b, c, *d);
        }
        let mut roots: Vec<f64> = deltas.into_iter().map(|d| self.reference + d).collect();
        if roots.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numerical("cubic root evaluation produced a non-finite value".into()));
        }
        let r = self.reference;
        roots.sort_by(|x, y| {
            let (dx, dy) = ((x - r).abs(), (y - r).abs());
            dx.total_cmp(&dy).then(x.abs().total_cmp(&y.abs()))
        });
        roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * x.abs().max(y.abs()).max(1e-300));
        if roots.is_empty() {
            return Err(Error::Numerical("cubic has no real root".into()));
        }
        Ok(roots)
    }
}

/// Root closest to the reference field.
pub fn solve_cubic_update(problem: &CubicUpdateProblem) -> Result<f64> {
    Ok(problem.real_roots()?[0])
}

/// Real roots of x³ + ax² + bx + c by discriminant classification.
fn monic_cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    if p == 0.0 && q == 0.0 {
        return vec![-shift];
    }
    if disc > 0.0 {
        // One real root; pick the cube root without cancellation.
        let u = (-half_q - half_q.signum() * disc.sqrt()).cbrt();
        let t = if u == 0.0 { 0.0 } else { u - third_p / u };
        vec![t - shift]
    } else {
        let rho = (-third_p).sqrt();
        let cos_arg = (-half_q / (rho * rho * rho)).clamp(-1.0, 1.0);
        let phi = cos_arg.acos() / 3.0;
        (0..3)
            .map(|k| 2.0 * rho * (phi - 2.0 * PI * k as f64 / 3.0).cos() - shift)
            .collect()
    }
}

fn polish(a: f64, b: f64, c: f64, mut x: f64) -> f64 {
    let f = |x: f64| ((x + a) * x + b) * x + c;
    let mut fx = f(x);
    for _ in 0..6 {
        let dfx = (3.0 * x + 2.0 * a) * x + b;
        if dfx == 0.0 || fx == 0.0 {
            break;
        }
        let next = x - fx / dfx;
        let fn_ = f(next);
        if fn_.abs() >= fx.abs() {
            break;
        }
        x = next;
        fx = fn_;
    }
    x
}
