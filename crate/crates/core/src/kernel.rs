//! Sum-of-exponentials approximation of the fractional kernel.
//!
//! The fractional kernel `K(t) = t^(α−1)/Γ(α)` is completely monotone with
//! Bernstein density `x^(−α)/(Γ(1−α)Γ(α))`. Lumping that density on the cells
//! of a partition into point masses (mass and center of mass per cell) gives
//! `Kⁿ(t) = Σ cᵢ exp(−xᵢ t)`. For the geometric partition `ηᵢ = r^(i − n/2)`
//! the weights and nodes have a closed form, and the ratio `r` is chosen to
//! minimize `‖K − Kⁿ‖²` on `L²(0, T)`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::HestonParams;
use crate::optimize::brent_bounded;
use crate::quad;
use crate::special::{gamma, regularized_lower_gamma};

/// Lower end of the ratio search bracket.
pub const RATIO_MIN: f64 = 1.0 + 1e-6;
/// Upper end of the ratio search bracket.
pub const RATIO_MAX: f64 = 500.0;
/// Absolute tolerance on the optimized ratio.
pub const RATIO_XTOL: f64 = 1e-6;

/// `(1 − e^(−x t)) / x`, continuous at `x = 0`.
pub(crate) fn exp_integral(x: f64, t: f64) -> f64 {
    if x == 0.0 {
        t
    } else {
        -(-x * t).exp_m1() / x
    }
}

/// `∫₀ᵗ (1 − e^(−x s))/x ds`, continuous at `x = 0`.
fn exp_double_integral(x: f64, t: f64) -> f64 {
    let z = x * t;
    if z < 1e-4 {
        t * t * 0.5 * (1.0 - z / 3.0 + z * z / 12.0)
    } else {
        (t - exp_integral(x, t)) / x
    }
}

/// The fractional (power-law) kernel `K(t) = t^(α−1)/Γ(α)`, `α ∈ (1/2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionalKernel {
    alpha: f64,
}

impl FractionalKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(invalid("alpha", format!("must lie in (0.5, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "fractional kernel evaluated at t = {t}; requires t > 0"
            )));
        }
        Ok(t.powf(self.alpha - 1.0) / gamma(self.alpha))
    }

    /// `∫₀ᵗ K(s) ds = t^α / Γ(1 + α)`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(self.alpha) / gamma(1.0 + self.alpha)
    }

    /// `∫₀ᵗ ∫₀ˢ K = t^(α+1) / Γ(2 + α)`.
    pub fn double_integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(self.alpha + 1.0) / gamma(2.0 + self.alpha)
    }
}

/// Evaluates `K(t) = t^(α−1)/Γ(α)` for `t > 0`.
pub fn fractional_kernel_eval(kernel: &FractionalKernel, t: f64) -> Result<f64> {
    kernel.eval(t)
}

/// Density `dμ/dx` of a nonnegative measure on `[0, ∞)`.
pub trait MeasureDensity {
    fn density(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> MeasureDensity for F {
    fn density(&self, x: f64) -> f64 {
        self(x)
    }
}

impl MeasureDensity for FractionalKernel {
    fn density(&self, x: f64) -> f64 {
        if self.alpha == 1.0 || x <= 0.0 {
            // α = 1 is a point mass at the origin.
            return 0.0;
        }
        x.powf(-self.alpha) / (gamma(1.0 - self.alpha) * gamma(self.alpha))
    }
}

/// Geometric partition `ηᵢ = ratio^(i − n/2)`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricPartition {
    n: usize,
    ratio: f64,
}

impl GeometricPartition {
    pub fn new(n: usize, ratio: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "factor count must be at least 1"));
        }
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(invalid("ratio", format!("must be finite and > 1, got {ratio}")));
        }
        Ok(Self { n, ratio })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn nodes(&self) -> Vec<f64> {
        let half = self.n as f64 / 2.0;
        (0..=self.n)
            .map(|i| self.ratio.powf(i as f64 - half))
            .collect()
    }
}

/// `Kⁿ(t) = Σᵢ cᵢ exp(−xᵢ t)`.
///
/// Weights and nodes are positive with strictly increasing nodes, except for
/// the one-factor classical Heston kernel (`c = 1`, `x = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiExpKernel {
    weights: Vec<f64>,
    nodes: Vec<f64>,
    ratio: Option<f64>,
    classical_heston: bool,
}

impl MultiExpKernel {
    pub fn new(weights: Vec<f64>, nodes: Vec<f64>) -> Result<Self> {
        Self::with_ratio(weights, nodes, None)
    }

    fn with_ratio(weights: Vec<f64>, nodes: Vec<f64>, ratio: Option<f64>) -> Result<Self> {
        if weights.len() != nodes.len() {
            return Err(invalid(
                "weights",
                format!("{} weights for {} nodes", weights.len(), nodes.len()),
            ));
        }
        if weights.is_empty() {
            return Err(invalid("weights", "at least one exponential is required"));
        }
        if let Some(c) = weights.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(invalid("weights", format!("must be positive and finite, got {c}")));
        }
        if let Some(x) = nodes.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(invalid("nodes", format!("must be positive and finite, got {x}")));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("nodes", "must be strictly increasing"));
        }
        Ok(Self {
            weights,
            nodes,
            ratio,
            classical_heston: false,
        })
    }

    /// The constant kernel `K ≡ 1` written as one exponential with `x = 0`,
    /// which turns the lifted model into the classical Heston model.
    pub fn classical_heston() -> Self {
        Self {
            weights: vec![1.0],
            nodes: vec![0.0],
            ratio: None,
            classical_heston: true,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Partition ratio the kernel was built from, if geometric.
    pub fn ratio(&self) -> Option<f64> {
        self.ratio
    }

    pub fn is_classical_heston(&self) -> bool {
        self.classical_heston
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights.iter().copied().zip(self.nodes.iter().copied())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.pairs().map(|(c, x)| c * (-x * t).exp()).sum()
    }

    /// `∫₀ᵗ Kⁿ(s) ds = Σ cᵢ (1 − e^(−xᵢ t))/xᵢ`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.pairs().map(|(c, x)| c * exp_integral(x, t)).sum()
    }

    pub fn double_integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.pairs().map(|(c, x)| c * exp_double_integral(x, t)).sum()
    }
}

/// Closed-form mass/center-of-mass weights for the fractional density on a
/// geometric partition:
///
/// `cᵢ = (r^(1−α) − 1)/(Γ(α)Γ(2−α)) · r^((1−α)(i−1−n/2))`,
/// `xᵢ = (1−α)/(2−α) · (r^(2−α) − 1)/(r^(1−α) − 1) · r^(i−1−n/2)`.
///
/// `α = 1` is rejected; use [`MultiExpKernel::classical_heston`].
pub fn build_multiexp(kernel: &FractionalKernel, partition: &GeometricPartition) -> Result<MultiExpKernel> {
    let alpha = kernel.alpha();
    if alpha == 1.0 {
        return Err(Error::Domain(
            "alpha = 1 has no geometric multi-exponential approximation; use the classical Heston kernel"
                .into(),
        ));
    }
    let n = partition.n();
    let log_r = partition.ratio().ln();
    let pow_a = ((1.0 - alpha) * log_r).exp_m1();
    let pow_b = ((2.0 - alpha) * log_r).exp_m1();
    let c_scale = pow_a / (gamma(alpha) * gamma(2.0 - alpha));
    let x_scale = (1.0 - alpha) / (2.0 - alpha) * pow_b / pow_a;
    let half = n as f64 / 2.0;
    let (weights, nodes) = (1..=n)
        .map(|i| {
            let e = i as f64 - 1.0 - half;
            (
                c_scale * ((1.0 - alpha) * e * log_r).exp(),
                x_scale * (e * log_r).exp(),
            )
        })
        .unzip();
    MultiExpKernel::with_ratio(weights, nodes, Some(partition.ratio()))
}

/// Mass and center of mass of `measure` on each cell `[η_{i−1}, ηᵢ)`, by
/// adaptive quadrature. Cells carrying no mass are dropped.
pub fn build_multiexp_general<M: MeasureDensity + ?Sized>(measure: &M, cells: &[f64]) -> Result<MultiExpKernel> {
    if cells.len() < 2 {
        return Err(invalid("cells", "need at least two cell boundaries"));
    }
    if cells[0] < 0.0 || cells.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("cells", "boundaries must be nonnegative and strictly increasing"));
    }
    let mut weights = Vec::with_capacity(cells.len() - 1);
    let mut nodes = Vec::with_capacity(cells.len() - 1);
    for (i, w) in cells.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        let fail = |_| Error::NonIntegrable { cell: i + 1, lo, hi };
        let mass = quad::integrate(|x| measure.density(x), lo, hi, 1e-15, 1e-13).map_err(fail)?;
        if mass == 0.0 {
            continue;
        }
        let moment = quad::integrate(|x| x * measure.density(x), lo, hi, 1e-15, 1e-13).map_err(fail)?;
        if !(mass > 0.0) || !moment.is_finite() {
            return Err(Error::NonIntegrable { cell: i + 1, lo, hi });
        }
        weights.push(mass);
        nodes.push(moment / mass);
    }
    MultiExpKernel::new(weights, nodes)
}

/// Squared `L²(0, T)` distance between the fractional kernel and an
/// approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Error {
    pub norm2: f64,
    /// The closed form came out below −1e−12 and was clamped to 0.
    pub clamped: bool,
}

/// `‖K − Kⁿ‖²` on `(0, T)`:
/// `Σᵢⱼ cᵢcⱼ (1 − e^(−(xᵢ+xⱼ)T))/(xᵢ+xⱼ) − 2 Σᵢ cᵢ xᵢ^(−α) P(α, T xᵢ) + T^(2α−1)/((2α−1)Γ(α)²)`.
pub fn l2_error_squared(kernel: &FractionalKernel, approx: &[(f64, f64)], horizon: f64) -> Result<L2Error> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let alpha = kernel.alpha();
    let mut cross = 0.0;
    for &(ci, xi) in approx {
        for &(cj, xj) in approx {
            cross += ci * cj * exp_integral(xi + xj, horizon);
        }
    }
    let mut mixed = 0.0;
    for &(c, x) in approx {
        let term = if x == 0.0 {
            horizon.powf(alpha) / gamma(1.0 + alpha)
        } else {
            x.powf(-alpha) * regularized_lower_gamma(alpha, horizon * x)?
        };
        mixed += c * term;
    }
    let own = horizon.powf(2.0 * alpha - 1.0) / ((2.0 * alpha - 1.0) * gamma(alpha).powi(2));
    let raw = cross - 2.0 * mixed + own;
    if raw < -1e-12 {
        log::warn!("negative squared L2 error {raw:e} clamped to zero");
    }
    Ok(L2Error {
        norm2: raw.max(0.0),
        clamped: raw < -1e-12,
    })
}

/// Convenience wrapper over [`l2_error_squared`] for a built kernel.
pub fn kernel_l2_error(kernel: &FractionalKernel, approx: &MultiExpKernel, horizon: f64) -> Result<L2Error> {
    let pairs: Vec<_> = approx.pairs().collect();
    l2_error_squared(kernel, &pairs, horizon)
}

/// Optimized geometric ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioFit {
    pub n: usize,
    pub ratio: f64,
    pub norm2: f64,
    /// The minimizer sits at the edge of the search bracket.
    pub at_boundary: bool,
}

/// Minimizes `‖K − K^r‖²` over the geometric ratio `r ∈ [1 + 1e−6, 500]`.
///
/// A coarse log-spaced scan locates the basin, then Brent's method refines it
/// to an absolute tolerance of 1e−6 on `r`.
pub fn optimize_ratio(kernel: &FractionalKernel, n: usize, horizon: f64) -> Result<RatioFit> {
    if n == 0 {
        return Err(invalid("n", "factor count must be at least 1"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    if kernel.alpha() == 1.0 {
        return Err(Error::Domain(
            "alpha = 1 is represented exactly by the classical Heston kernel".into(),
        ));
    }
    let objective = |r: f64| -> f64 {
        GeometricPartition::new(n, r)
            .and_then(|p| build_multiexp(kernel, &p))
            .and_then(|k| kernel_l2_error(kernel, &k, horizon))
            .map(|e| e.norm2)
            .unwrap_or(f64::INFINITY)
    };

    const SCAN: usize = 48;
    let (log_lo, log_hi) = (RATIO_MIN.ln(), RATIO_MAX.ln());
    let grid: Vec<f64> = (0..SCAN)
        .map(|k| (log_lo + (log_hi - log_lo) * k as f64 / (SCAN - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&r| objective(r)).collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty scan");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(SCAN - 1)];
    let refined = brent_bounded(objective, lo, hi, RATIO_XTOL);

    let (ratio, norm2) = if refined.value <= values[best] {
        (refined.x, refined.value)
    } else {
        (grid[best], values[best])
    };
    if !norm2.is_finite() {
        return Err(Error::Numeric(format!("ratio optimization failed for n = {n}")));
    }
    let at_boundary = ratio - RATIO_MIN < 10.0 * RATIO_XTOL || RATIO_MAX - ratio < 10.0 * RATIO_XTOL;
    if at_boundary {
        log::warn!("optimal ratio {ratio} for n = {n} sits on the search bracket edge");
    }
    Ok(RatioFit {
        n,
        ratio,
        norm2,
        at_boundary,
    })
}

/// Kernel used by an engine: the exact fractional kernel or a
/// sum-of-exponentials approximation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum KernelChoice {
    Fractional(FractionalKernel),
    MultiExp(MultiExpKernel),
}

impl KernelChoice {
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Self::Fractional(k) => k.integral(t),
            Self::MultiExp(k) => k.integral(t),
        }
    }

    pub fn double_integral(&self, t: f64) -> f64 {
        match self {
            Self::Fractional(k) => k.double_integral(t),
            Self::MultiExp(k) => k.double_integral(t),
        }
    }
}

impl From<FractionalKernel> for KernelChoice {
    fn from(k: FractionalKernel) -> Self {
        Self::Fractional(k)
    }
}

impl From<MultiExpKernel> for KernelChoice {
    fn from(k: MultiExpKernel) -> Self {
        Self::MultiExp(k)
    }
}

/// Initial forward curve `v0(t) = V0 + λ ν̄ ∫₀ᵗ K`.
pub fn v0_curve(params: &HestonParams, kernel: &KernelChoice, t: f64) -> f64 {
    params.v0 + params.lambda * params.nu_bar * kernel.integral(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fractional_kernel_domain() {
        let k = FractionalKernel::new(1.0).unwrap();
        assert_eq!(k.eval(0.7).unwrap(), 1.0);
        assert!(k.eval(0.0).is_err());
        assert!(k.eval(-1.0).is_err());
        assert!(FractionalKernel::new(0.5).is_err());
        assert!(FractionalKernel::new(1.01).is_err());
    }

    #[test]
    fn partition_nodes_for_small_case() {
        let p = GeometricPartition::new(2, 4.0).unwrap();
        let nodes = p.nodes();
        assert_relative_eq!(nodes[0], 0.25);
        assert_relative_eq!(nodes[1], 1.0);
        assert_relative_eq!(nodes[2], 4.0);
        assert!(GeometricPartition::new(3, 1.0).is_err());
        assert!(GeometricPartition::new(0, 2.0).is_err());
    }

    #[test]
    fn alpha_one_is_rejected_for_geometric_construction() {
        let k = FractionalKernel::new(1.0).unwrap();
        let p = GeometricPartition::new(4, 3.0).unwrap();
        assert!(build_multiexp(&k, &p).is_err());
        assert!(optimize_ratio(&k, 4, 0.5).is_err());
    }

    #[test]
    fn multiexp_validation() {
        assert!(MultiExpKernel::new(vec![1.0], vec![0.0]).is_err());
        assert!(MultiExpKernel::new(vec![1.0, 1.0], vec![2.0, 1.0]).is_err());
        assert!(MultiExpKernel::new(vec![-1.0], vec![1.0]).is_err());
        assert!(MultiExpKernel::new(vec![1.0], vec![1.0, 2.0]).is_err());
        let classical = MultiExpKernel::classical_heston();
        assert!(classical.is_classical_heston());
        assert_eq!(classical.integral(0.3), 0.3);
    }

    #[test]
    fn empty_approximation_of_constant_kernel() {
        let k = FractionalKernel::new(1.0).unwrap();
        let e = l2_error_squared(&k, &[], 1.0).unwrap();
        assert_relative_eq!(e.norm2, 1.0, epsilon = 1e-14);
        // K ≡ 1 is matched exactly by the classical kernel.
        let e = kernel_l2_error(&k, &MultiExpKernel::classical_heston(), 1.0).unwrap();
        assert!(e.norm2 < 1e-14);
    }

    #[test]
    fn v0_curve_limits() {
        let p = HestonParams::reference();
        let k1: KernelChoice = FractionalKernel::new(1.0).unwrap().into();
        assert_eq!(v0_curve(&p, &k1, 0.0), p.v0);
        assert_relative_eq!(v0_curve(&p, &k1, 0.4), p.v0 + p.lambda * p.nu_bar * 0.4, epsilon = 1e-15);
        let approx: KernelChoice = build_multiexp(
            &FractionalKernel::new(0.6).unwrap(),
            &GeometricPartition::new(10, 18.0).unwrap(),
        )
        .unwrap()
        .into();
        assert_eq!(v0_curve(&p, &approx, 0.0), p.v0);
    }

    #[test]
    fn double_integral_series_branch_is_continuous() {
        let t = 0.5;
        let x = 2e-4 / t;
        let series = exp_double_integral(x * 0.999, t);
        let direct = exp_double_integral(x * 1.001, t);
        assert_relative_eq!(series, direct, max_relative = 1e-6);
    }
}
