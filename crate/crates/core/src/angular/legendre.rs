//! Gauss–Legendre quadrature and fully normalized associated Legendre functions.

use std::f64::consts::PI;

/// Nodes (ascending) and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values of the 4π-normalized associated Legendre functions λ_j^m(x) for
/// j = |m|..=j_max, including the Condon–Shortley phase, so that
/// Y_jm(θ, φ) = λ_j^m(cos θ) e^{imφ}.
pub fn normalized_legendre(m: i32, j_max: u32, x: f64) -> Vec<f64> {
    let am = m.unsigned_abs();
    if am > j_max {
        return Vec::new();
    }
    let sin_theta = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for k in 1..=am {
        let kf = k as f64;
        pmm *= -((2.0 * kf + 1.0) / (2.0 * kf)).sqrt() * sin_theta;
    }
    let mf = am as f64;
    let mut out = Vec::with_capacity((j_max - am + 1) as usize);
    out.push(pmm);
    if am < j_max {
        out.push(x * (2.0 * mf + 3.0).sqrt() * pmm);
    }
    for j in (am + 2)..=j_max {
        let jf = j as f64;
        let a = ((4.0 * jf * jf - 1.0) / (jf * jf - mf * mf)).sqrt();
        let b = (((jf - 1.0).powi(2) - mf * mf) / (4.0 * (jf - 1.0).powi(2) - 1.0)).sqrt();
        let n = out.len();
        let next = a * (x * out[n - 1] - b * out[n - 2]);
        out.push(next);
    }
    if m < 0 && am % 2 == 1 {
        out.iter_mut().for_each(|v| *v = -*v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn three_point_rule() {
        let (x, w) = gauss_legendre(3);
        assert_relative_eq!(x[0], -(0.6f64).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(x[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(w[0], 5.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn integrates_polynomials_exactly() {
        let n = 12;
        let (x, w) = gauss_legendre(n);
        for p in 0..(2 * n) {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert_relative_eq!(q, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn low_order_closed_forms() {
        let x = 0.3f64;
        let s = (1.0 - x * x).sqrt();
        let y00 = normalized_legendre(0, 2, x);
        assert_relative_eq!(y00[0], 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(y00[1], (3.0 / (4.0 * PI)).sqrt() * x, epsilon = 1e-15);
        assert_relative_eq!(
            y00[2],
            (5.0 / (16.0 * PI)).sqrt() * (3.0 * x * x - 1.0),
            epsilon = 1e-15
        );
        let y11 = normalized_legendre(1, 1, x);
        assert_relative_eq!(y11[0], -(3.0 / (8.0 * PI)).sqrt() * s, epsilon = 1e-15);
        let y1m1 = normalized_legendre(-1, 1, x);
        assert_relative_eq!(y1m1[0], (3.0 / (8.0 * PI)).sqrt() * s, epsilon = 1e-15);
    }
}
