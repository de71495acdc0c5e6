//! Numerical quadrature: adaptive Gauss–Kronrod (7/15) and Gauss–Legendre
//! panel rules.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to the requested
/// absolute or relative tolerance (whichever is looser).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: usize = 4_000;
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] (Newton iteration on the
/// three-term recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on `[a, b]`: `panels` equal panels of
/// `order` points each. Returns (nodes, weights).
pub fn gauss_legendre_panels(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * width * (xi + 1.0));
            weights.push(0.5 * width * wi);
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kronrod_integrates_smooth_functions() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-14).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-13);
        let v = integrate(|x| (-x * x).exp(), -8.0, 8.0, 1e-14, 1e-14).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn kronrod_handles_integrable_endpoint_singularity() {
        let v = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-10, 1e-10).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in [1usize, 2, 5, 20] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert_relative_eq!(approx, exact, epsilon = 1e-13);
            let even = (2 * n - 2) as i32;
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(even)).sum();
            assert_relative_eq!(approx, 2.0 / (even as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn panels_cover_interval() {
        let (x, w) = gauss_legendre_panels(0.0, 3.0, 7, 6);
        assert_eq!(x.len(), 42);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert_relative_eq!(v, 3f64.exp() - 1.0, epsilon = 1e-12);
    }
}
