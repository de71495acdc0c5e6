use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Constants of the Volterra Heston model shared by every engine.
///
/// The variance is driven by `v0(t) = V0 + λ ν̄ ∫₀ᵗ K`, with mean reversion
/// `λ`, vol-of-vol `η` and spot/variance correlation `ρ`. `x0` is the initial
/// log price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub v0: f64,
    pub nu_bar: f64,
    pub lambda: f64,
    pub eta: f64,
    pub rho: f64,
    pub r: f64,
    pub x0: f64,
}

impl HestonParams {
    pub fn new(v0: f64, nu_bar: f64, lambda: f64, eta: f64, rho: f64, r: f64, x0: f64) -> Result<Self> {
        let p = Self {
            v0,
            nu_bar,
            lambda,
            eta,
            rho,
            r,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    /// V₀ = ν̄ = 0.02, λ = η = 0.3, ρ = −0.7, r = 0.06, S₀ = 100.
    pub fn reference() -> Self {
        Self {
            v0: 0.02,
            nu_bar: 0.02,
            lambda: 0.3,
            eta: 0.3,
            rho: -0.7,
            r: 0.06,
            x0: 100f64.ln(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("v0", self.v0),
            ("nu_bar", self.nu_bar),
            ("lambda", self.lambda),
            ("eta", self.eta),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(invalid("rho", format!("must lie in [-1, 1], got {}", self.rho)));
        }
        if !self.r.is_finite() {
            return Err(invalid("r", "must be finite"));
        }
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        Ok(())
    }

    pub fn spot(&self) -> f64 {
        self.x0.exp()
    }

    pub fn with_spot(mut self, spot: f64) -> Self {
        self.x0 = spot.ln();
        self
    }

    /// True when `v0 ≡ 0`, so the variance stays identically zero.
    pub fn is_zero_variance(&self) -> bool {
        self.v0 == 0.0 && self.lambda * self.nu_bar == 0.0
    }
}
