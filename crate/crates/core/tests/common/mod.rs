#![allow(dead_code)]

use num_complex::Complex64 as C64;
use roughbermudan::kernel::*;
use roughbermudan::HestonParams;
use std::f64::consts::PI;

/// Classical Heston `E[exp(w X_T)]` in the continuous ("little trap") form.
pub fn heston_transform(p: &HestonParams, w: C64, t: f64) -> C64 {
    let eta2 = p.eta * p.eta;
    let b = p.lambda - p.rho * p.eta * w;
    let d = (b * b - eta2 * (w * w - w)).sqrt();
    let g = (b - d) / (b + d);
    let e = (-d * t).exp();
    let big_d = (b - d) / eta2 * (1.0 - e) / (1.0 - g * e);
    let big_c = p.lambda * p.nu_bar / eta2 * ((b - d) * t - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
    (w * (p.x0 + p.r * t) + big_c + big_d * p.v0).exp()
}

/// Gil-Pelaez put with composite Simpson on `(0, 200]`.
pub fn heston_put(p: &HestonParams, strike: f64, t: f64) -> f64 {
    let i = C64::new(0.0, 1.0);
    let forward = p.spot() * (p.r * t).exp();
    let lk = strike.ln();
    let integrand = |u: f64, shift: bool| {
        let z = if shift { u - i } else { C64::new(u, 0.0) };
        let mut f = heston_transform(p, i * z, t);
        if shift {
            f /= forward;
        }
        ((-i * u * lk).exp() * f / (i * u)).re
    };
    let (a, b, n) = (1e-9, 200.0, 200_000);
    let h = (b - a) / n as f64;
    let probability = |shift: bool| {
        let mut s = integrand(a, shift) + integrand(b, shift);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * integrand(a + k as f64 * h, shift);
        }
        0.5 + s * h / 3.0 / PI
    };
    let call = p.spot() * probability(true) - strike * (-p.r * t).exp() * probability(false);
    call - p.spot() + strike * (-p.r * t).exp()
}

/// Optimized `n`-factor kernel for `α`, or the classical one-factor kernel
/// when `α = 1`.
pub fn lifted(alpha: f64, n: usize) -> MultiExpKernel {
    if alpha == 1.0 {
        return MultiExpKernel::classical_heston();
    }
    let frac = FractionalKernel::new(alpha).unwrap();
    let fit = optimize_ratio(&frac, n, 0.5).unwrap();
    build_multiexp(&frac, &GeometricPartition::new(n, fit.ratio).unwrap()).unwrap()
}
