//! Riccati–Volterra equations and the conditional Fourier–Laplace transform.
//!
//! For `Re(w) ∈ [0, 1]` the transform of `(X_T, v_T)` is
//! `exp(w(X_t + r(T−t)) + ∫ Ψ(T−t, ξ) v_t(ξ) dξ)`, where everything needed
//! from `Ψ` is carried by the scalar function
//! `ψ(t) = ∫ h(ξ)K(t+ξ)dξ + (K ∗ R(w, ψ))(t)`.
//!
//! Two solvers are provided. For a sum-of-exponentials kernel, `ψ` splits into
//! factor components `ψᵢ' = −xᵢψᵢ + R(w, ψ)`, integrated with an exponential
//! Euler step that treats the linear decay exactly. For the fractional kernel
//! a fractional Adams predictor–corrector scheme is used.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernel::{exp_integral, FractionalKernel, KernelChoice, MultiExpKernel};
use crate::model::HestonParams;
use crate::special::gamma;

pub type C64 = Complex<f64>;

/// |ψ| above which the solution is treated as exploding.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

/// `R(w, φ) = ½(w² − w) + (ρηw − λ + η²φ/2) φ`.
#[inline]
pub fn riccati_r(params: &HestonParams, w: C64, phi: C64) -> C64 {
    0.5 * (w * w - w) + (params.rho * params.eta * w - params.lambda + 0.5 * params.eta * params.eta * phi) * phi
}

/// Piecewise-constant complex function with compact support:
/// value `values[j]` on `[breaks[j], breaks[j+1])`, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    values: Vec<C64>,
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if values.is_empty() && breaks.is_empty() {
            return Ok(Self::zero());
        }
        if breaks.len() != values.len() + 1 {
            return Err(invalid("h", "need exactly one more breakpoint than values"));
        }
        if breaks[0] < 0.0 || breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("h", "breakpoints must be nonnegative and strictly increasing"));
        }
        if breaks.iter().any(|b| !b.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("h", "breakpoints and values must be finite"));
        }
        Ok(Self { breaks, values })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == C64::new(0.0, 0.0))
    }

    pub fn support_end(&self) -> f64 {
        self.breaks.last().copied().unwrap_or(0.0)
    }

    pub fn has_nonpositive_real_part(&self) -> bool {
        self.values.iter().all(|v| v.re <= 0.0)
    }

    fn segments(&self) -> impl Iterator<Item = (f64, f64, C64)> + '_ {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(b, v)| (b[0], b[1], *v))
    }

    pub fn eval(&self, xi: f64) -> C64 {
        self.segments()
            .find(|(a, b, _)| xi >= *a && xi < *b)
            .map(|s| s.2)
            .unwrap_or_default()
    }

    /// `∫ h(ξ) e^(−xξ) dξ`.
    pub fn laplace(&self, x: f64) -> C64 {
        self.segments()
            .map(|(a, b, v)| v * ((-x * a).exp() * exp_integral(x, b - a)))
            .sum()
    }

    /// `∫ h(ξ) f(ξ + shift) dξ` given an antiderivative `big_f` of `f`.
    fn integrate_shifted<F: Fn(f64) -> f64>(&self, big_f: F, shift: f64) -> C64 {
        self.segments()
            .map(|(a, b, v)| v * (big_f(b + shift) - big_f(a + shift)))
            .sum()
    }
}

/// Transform argument: `w` with `Re(w) ∈ [0, 1]`, a test function `h` on the
/// forward curve, and the horizon `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformQuery {
    pub w: C64,
    pub h: PiecewiseConstant,
    pub horizon: f64,
}

impl TransformQuery {
    pub fn new(w: C64, h: PiecewiseConstant, horizon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w.re) || !w.im.is_finite() {
            return Err(invalid("w", format!("Re(w) must lie in [0, 1], got {w}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("horizon", format!("must be positive, got {horizon}")));
        }
        Ok(Self { w, h, horizon })
    }

    /// Pure log-price query (`h ≡ 0`).
    pub fn log_price(w: C64, horizon: f64) -> Result<Self> {
        Self::new(w, PiecewiseConstant::zero(), horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelTag {
    Fractional,
    MultiExp,
}

/// ψ on the uniform grid `tₖ = k·dt`, `k = 0..=steps`, with optional
/// per-factor components `ψᵢ(tₖ)` (lifted solver only).
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSolution {
    dt: f64,
    psi: Vec<C64>,
    factors: Option<Vec<C64>>,
    n_factors: usize,
    kernel_tag: KernelTag,
}

impl PsiSolution {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn psi(&self) -> &[C64] {
        &self.psi
    }

    pub fn kernel_tag(&self) -> KernelTag {
        self.kernel_tag
    }

    /// `ψᵢ(tₖ)` for every factor, if the solver kept them.
    pub fn factors_at(&self, k: usize) -> Option<&[C64]> {
        self.factors
            .as_ref()
            .map(|f| &f[k * self.n_factors..(k + 1) * self.n_factors])
    }

    /// Grid index of `t`, which must be a grid node up to round-off.
    pub fn node_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize > self.steps() || (k * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return Err(Error::Domain(format!(
                "t = {t} is not a node of the psi grid (dt = {})",
                self.dt
            )));
        }
        Ok(k as usize)
    }

    /// Sup-norm distance to another solution on a shared grid.
    pub fn sup_distance(&self, other: &PsiSolution) -> Result<f64> {
        if self.psi.len() != other.psi.len() || (self.dt - other.dt).abs() > 1e-14 * self.dt {
            return Err(invalid("psi", "solutions live on different grids"));
        }
        Ok(self
            .psi
            .iter()
            .zip(&other.psi)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

fn grid(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if dt > horizon * (1.0 + 1e-12) {
        return Err(invalid("dt", format!("step {dt} exceeds the horizon {horizon}")));
    }
    let steps = ((horizon / dt).round() as usize).max(1);
    Ok((steps, horizon / steps as f64))
}

fn check_blow_up(value: C64, time: f64) -> Result<()> {
    if !value.is_finite() || value.norm() > BLOW_UP_THRESHOLD {
        return Err(Error::BlowUp { time });
    }
    Ok(())
}

/// Solves the Riccati–Volterra equation for a sum-of-exponentials kernel.
///
/// With `Hᵢ = ∫ h(ξ)e^(−xᵢξ)dξ`, `ψ(t) = Σ cᵢ(Hᵢe^(−xᵢt) + ψᵢ(t))` and
/// `ψᵢ(t+Δ) = e^(−xᵢΔ)ψᵢ(t) + (1 − e^(−xᵢΔ))/xᵢ · R(w, ψ(t))`, `ψᵢ(0) = 0`.
pub fn solve_psi_lifted(
    params: &HestonParams,
    approx: &MultiExpKernel,
    query: &TransformQuery,
    dt: f64,
) -> Result<PsiSolution> {
    lifted_psi(params, approx, query.w, &query.h, query.horizon, dt, true)
}

pub(crate) fn lifted_psi(
    params: &HestonParams,
    approx: &MultiExpKernel,
    w: C64,
    h: &PiecewiseConstant,
    horizon: f64,
    dt: f64,
    keep_factors: bool,
) -> Result<PsiSolution> {
    let (steps, dt) = grid(horizon, dt)?;
    let n = approx.len();
    let weights = approx.weights();
    let nodes = approx.nodes();
    let decay: Vec<f64> = nodes.iter().map(|x| (-x * dt).exp()).collect();
    let gain: Vec<f64> = nodes.iter().map(|&x| exp_integral(x, dt)).collect();
    let with_h = !h.is_zero();
    let weighted_h: Vec<C64> = if with_h {
        approx.pairs().map(|(c, x)| c * h.laplace(x)).collect()
    } else {
        Vec::new()
    };
    let initial_curve = |t: f64| -> C64 {
        weighted_h
            .iter()
            .zip(nodes)
            .map(|(ch, x)| ch * (-x * t).exp())
            .sum()
    };

    let mut psi = Vec::with_capacity(steps + 1);
    let mut factors = keep_factors.then(|| Vec::with_capacity((steps + 1) * n));
    let mut current = vec![C64::new(0.0, 0.0); n];
    let psi0 = if with_h { initial_curve(0.0) } else { C64::new(0.0, 0.0) };
    check_blow_up(psi0, 0.0)?;
    psi.push(psi0);
    if let Some(f) = factors.as_mut() {
        f.extend_from_slice(&current);
    }

    for k in 0..steps {
        let rate = riccati_r(params, w, psi[k]);
        let mut next = C64::new(0.0, 0.0);
        for i in 0..n {
            current[i] = decay[i] * current[i] + gain[i] * rate;
            next += weights[i] * current[i];
        }
        let t = (k + 1) as f64 * dt;
        if with_h {
            next += initial_curve(t);
        }
        check_blow_up(next, t)?;
        psi.push(next);
        if let Some(f) = factors.as_mut() {
            f.extend_from_slice(&current);
        }
    }
    Ok(PsiSolution {
        dt,
        psi,
        factors,
        n_factors: n,
        kernel_tag: KernelTag::MultiExp,
    })
}

/// Solves `ψ = K ∗ R(w, ψ)` for the fractional kernel with the fractional
/// Adams predictor–corrector method. Only `h ≡ 0` is supported.
pub fn solve_psi_fractional(
    params: &HestonParams,
    kernel: &FractionalKernel,
    query: &TransformQuery,
    dt: f64,
) -> Result<PsiSolution> {
    if !query.h.is_zero() {
        return Err(Error::Domain(
            "the fractional Adams solver supports only h = 0".into(),
        ));
    }
    fractional_psi(params, kernel, query.w, query.horizon, dt)
}

pub(crate) fn fractional_psi(
    params: &HestonParams,
    kernel: &FractionalKernel,
    w: C64,
    horizon: f64,
    dt: f64,
) -> Result<PsiSolution> {
    let (steps, dt) = grid(horizon, dt)?;
    let alpha = kernel.alpha();
    let pred_scale = dt.powf(alpha) / gamma(alpha + 1.0);
    let corr_scale = dt.powf(alpha) / gamma(alpha + 2.0);
    // Predictor weights b_m = (m+1)^α − m^α and corrector weights
    // a_m = (m+2)^(α+1) + m^(α+1) − 2(m+1)^(α+1), indexed by lag m = k − j.
    let pow_a: Vec<f64> = (0..=steps + 1).map(|m| (m as f64).powf(alpha)).collect();
    let pow_a1: Vec<f64> = (0..=steps + 2).map(|m| (m as f64).powf(alpha + 1.0)).collect();
    let b: Vec<f64> = (0..=steps).map(|m| pow_a[m + 1] - pow_a[m]).collect();
    let a: Vec<f64> = (0..=steps)
        .map(|m| pow_a1[m + 2] + pow_a1[m] - 2.0 * pow_a1[m + 1])
        .collect();

    let mut psi = Vec::with_capacity(steps + 1);
    let mut rates: Vec<C64> = Vec::with_capacity(steps + 1);
    psi.push(C64::new(0.0, 0.0));
    rates.push(riccati_r(params, w, psi[0]));
    for k in 0..steps {
        let mut predictor = C64::new(0.0, 0.0);
        let mut corrector = C64::new(0.0, 0.0);
        for (j, f) in rates.iter().enumerate() {
            let lag = k - j;
            predictor += b[lag] * f;
            if j > 0 {
                corrector += a[lag] * f;
            }
        }
        let kf = k as f64;
        let first = pow_a1[k] - (kf - alpha) * pow_a[k + 1];
        corrector += first * rates[0];
        let psi_pred = pred_scale * predictor;
        let next = corr_scale * (corrector + riccati_r(params, w, psi_pred));
        check_blow_up(next, (k + 1) as f64 * dt)?;
        psi.push(next);
        rates.push(riccati_r(params, w, next));
    }
    Ok(PsiSolution {
        dt,
        psi,
        factors: None,
        n_factors: 0,
        kernel_tag: KernelTag::Fractional,
    })
}

/// Solves ψ with whichever solver matches the kernel.
pub fn solve_psi(
    params: &HestonParams,
    kernel: &KernelChoice,
    query: &TransformQuery,
    dt: f64,
) -> Result<PsiSolution> {
    match kernel {
        KernelChoice::Fractional(k) => solve_psi_fractional(params, k, query, dt),
        KernelChoice::MultiExp(k) => solve_psi_lifted(params, k, query, dt),
    }
}

/// Trapezoid approximation of `∫₀ᵀ R(w, ψ(ξ)) v0(T − ξ) dξ` on ψ's grid.
pub(crate) fn riccati_exponent(params: &HestonParams, kernel: &KernelChoice, w: C64, psi: &PsiSolution) -> C64 {
    let steps = psi.steps();
    let horizon = psi.horizon();
    let dt = psi.dt();
    let mut acc = C64::new(0.0, 0.0);
    for (k, value) in psi.psi().iter().enumerate() {
        let rate = riccati_r(params, w, *value);
        let forward = crate::kernel::v0_curve(params, kernel, horizon - k as f64 * dt);
        let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
        acc += weight * rate * forward;
    }
    acc * dt
}

fn check_horizon(query: &TransformQuery, psi: &PsiSolution) -> Result<()> {
    if (psi.horizon() - query.horizon).abs() > 1e-9 * query.horizon {
        return Err(invalid(
            "psi",
            format!(
                "solved to horizon {} but the query horizon is {}",
                psi.horizon(),
                query.horizon
            ),
        ));
    }
    Ok(())
}

/// Unconditional transform `E[exp(w X_T + ∫ h(ξ) v_T(ξ) dξ)]`:
/// `exp(w(X₀ + rT) + ∫ h(ξ)v₀(ξ+T)dξ + ∫₀ᵀ R(w, ψ(ξ)) v₀(T−ξ) dξ)`.
pub fn laplace_transform_t0(
    params: &HestonParams,
    kernel: &KernelChoice,
    query: &TransformQuery,
    psi: &PsiSolution,
) -> Result<C64> {
    check_horizon(query, psi)?;
    let w = query.w;
    let horizon = query.horizon;
    let mut exponent = w * (params.x0 + params.r * horizon);
    if !query.h.is_zero() {
        let antiderivative =
            |t: f64| params.v0 * t + params.lambda * params.nu_bar * kernel.double_integral(t);
        exponent += query.h.integrate_shifted(antiderivative, horizon);
    }
    exponent += riccati_exponent(params, kernel, w, psi);
    Ok(exponent.exp())
}

/// Conditional transform at time `t` for the lifted model, prepared once
/// per `(t, ψ)` and evaluated per simulated state `(X_t, Y_t)`.
#[derive(Debug, Clone)]
pub struct ConditionalTransform {
    w: C64,
    drift: f64,
    base: C64,
    factor_coeffs: Vec<C64>,
}

impl ConditionalTransform {
    pub fn new(
        params: &HestonParams,
        approx: &MultiExpKernel,
        query: &TransformQuery,
        t: f64,
        psi: &PsiSolution,
    ) -> Result<Self> {
        if !query.h.is_zero() {
            return Err(Error::Domain("conditional transform supports only h = 0".into()));
        }
        if !(t >= 0.0) || t > query.horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "conditioning time {t} outside [0, {}]",
                query.horizon
            )));
        }
        if psi.kernel_tag() != KernelTag::MultiExp || psi.n_factors != approx.len() {
            return Err(invalid("psi", "needs a lifted solution for the same kernel"));
        }
        let tau = (query.horizon - t).max(0.0);
        let k = psi.node_of(tau)?;
        let kernel = KernelChoice::MultiExp(approx.clone());
        let dt = psi.dt();
        let mut base = C64::new(0.0, 0.0);
        for j in 0..=k {
            let rate = riccati_r(params, query.w, psi.psi()[k - j]);
            let forward = crate::kernel::v0_curve(params, &kernel, t + j as f64 * dt);
            let weight = if j == 0 || j == k { 0.5 } else { 1.0 };
            base += weight * rate * forward;
        }
        base *= if k == 0 { 0.0 } else { dt };
        // ψᵢ(τ) = ∫₀^τ e^(−xᵢξ) R(w, ψ(τ−ξ)) dξ, integrated exactly in the
        // exponential part by the solver.
        let factor_coeffs = psi
            .factors_at(k)
            .ok_or_else(|| invalid("psi", "factor components were not kept"))?
            .iter()
            .zip(approx.weights())
            .map(|(f, c)| c * f)
            .collect();
        Ok(Self {
            w: query.w,
            drift: params.r * tau,
            base,
            factor_coeffs,
        })
    }

    pub fn eval(&self, log_price: f64, factors: &[f64]) -> C64 {
        let mut exponent = self.w * (log_price + self.drift) + self.base;
        for (c, y) in self.factor_coeffs.iter().zip(factors) {
            exponent += c * y;
        }
        exponent.exp()
    }
}

/// `E[exp(w X_T) | F_t]` in the lifted model given the state `(X_t, Yᵢ_t)`.
pub fn conditional_transform(
    params: &HestonParams,
    approx: &MultiExpKernel,
    query: &TransformQuery,
    t: f64,
    log_price: f64,
    factors: &[f64],
    psi: &PsiSolution,
) -> Result<C64> {
    if factors.len() != approx.len() {
        return Err(invalid("factors", format!("expected {} factor values", approx.len())));
    }
    Ok(ConditionalTransform::new(params, approx, query, t, psi)?.eval(log_price, factors))
}

/// Adjusted forward variance `v_t(ξ) = v₀ⁿ(t+ξ) + Σ cᵢ e^(−xᵢξ) Yᵢ`.
pub fn adjusted_forward_curve(
    params: &HestonParams,
    approx: &MultiExpKernel,
    t: f64,
    factors: &[f64],
    xi_grid: &[f64],
) -> Result<Vec<f64>> {
    if factors.len() != approx.len() {
        return Err(invalid("factors", format!("expected {} factor values", approx.len())));
    }
    if xi_grid.iter().any(|xi| !(*xi >= 0.0)) {
        return Err(Error::Domain("forward curve maturities must be nonnegative".into()));
    }
    let kernel = KernelChoice::MultiExp(approx.clone());
    Ok(xi_grid
        .iter()
        .map(|&xi| {
            let noise: f64 = approx
                .pairs()
                .zip(factors)
                .map(|((c, x), y)| c * (-x * xi).exp() * y)
                .sum();
            crate::kernel::v0_curve(params, &kernel, t + xi) + noise
        })
        .collect())
}
