//! Truncated explicit–implicit Euler simulation of the lifted model.
//!
//! Log-price and variance are stored at a thinned set of steps (every
//! `record_stride` steps plus maturity) so that 10⁵-path batches fit in
//! memory; factor snapshots are kept only at explicitly requested steps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fourier::EuropeanSpec;
use crate::kernel::{v0_curve, KernelChoice, MultiExpKernel};
use crate::model::HestonParams;
use crate::riccati::C64;
use crate::rng::PathRng;
use crate::stats::{mean_stderr, McEstimate};

/// Paths simulated per parallel task.
const PATH_BLOCK: usize = 256;

/// Uniform simulation grid `s_k = k T / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimGrid {
    maturity: f64,
    n_steps: usize,
}

impl SimGrid {
    pub fn new(maturity: f64, n_steps: usize) -> Result<Self> {
        if !(maturity > 0.0) || !maturity.is_finite() {
            return Err(invalid("maturity", format!("must be positive, got {maturity}")));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        Ok(Self { maturity, n_steps })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.n_steps as f64
    }

    /// Time of step `k`; the last node is exactly the maturity.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.maturity
        } else {
            k as f64 * self.dt()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Store (X, V) every `record_stride` steps; maturity is always stored.
    pub record_stride: usize,
    /// Steps at which the factor vector is stored.
    pub factor_steps: Vec<usize>,
    /// Overrides `X₀` while keeping the random stream (common random numbers).
    pub spot: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            record_stride: 1,
            factor_steps: Vec::new(),
            spot: None,
        }
    }
}

/// Simulated paths. Rows are paths; columns are the recorded steps.
#[derive(Debug, Clone)]
pub struct PathBatch {
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
    params: HestonParams,
    kernel: MultiExpKernel,
    recorded: Vec<usize>,
    logprice: Vec<f64>,
    variance: Vec<f64>,
    factor_steps: Vec<usize>,
    factors: Vec<f64>,
    forward: Vec<f64>,
}

impl PathBatch {
    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &HestonParams {
        &self.params
    }

    pub fn kernel(&self) -> &MultiExpKernel {
        &self.kernel
    }

    pub fn recorded_steps(&self) -> &[usize] {
        &self.recorded
    }

    pub fn factor_steps(&self) -> &[usize] {
        &self.factor_steps
    }

    /// `v₀ⁿ(s_k)` for every step of the grid.
    pub fn forward_variance(&self) -> &[f64] {
        &self.forward
    }

    pub fn is_recorded(&self, step: usize) -> bool {
        self.recorded.binary_search(&step).is_ok()
    }

    fn column(&self, step: usize) -> Result<usize> {
        self.recorded
            .binary_search(&step)
            .map_err(|_| invalid("step", format!("step {step} was not recorded")))
    }

    pub fn logprice(&self, path: usize, step: usize) -> Result<f64> {
        let j = self.column(step)?;
        Ok(self.logprice[path * self.recorded.len() + j])
    }

    pub fn variance(&self, path: usize, step: usize) -> Result<f64> {
        let j = self.column(step)?;
        Ok(self.variance[path * self.recorded.len() + j])
    }

    /// Recorded log-prices of one path, aligned with [`Self::recorded_steps`].
    pub fn path_logprice(&self, path: usize) -> &[f64] {
        let m = self.recorded.len();
        &self.logprice[path * m..(path + 1) * m]
    }

    pub fn path_variance(&self, path: usize) -> &[f64] {
        let m = self.recorded.len();
        &self.variance[path * m..(path + 1) * m]
    }

    pub fn logprice_at(&self, step: usize) -> Result<Vec<f64>> {
        let j = self.column(step)?;
        let m = self.recorded.len();
        Ok((0..self.n_paths).map(|p| self.logprice[p * m + j]).collect())
    }

    pub fn variance_at(&self, step: usize) -> Result<Vec<f64>> {
        let j = self.column(step)?;
        let m = self.recorded.len();
        Ok((0..self.n_paths).map(|p| self.variance[p * m + j]).collect())
    }

    pub fn terminal_logprice(&self) -> Vec<f64> {
        let m = self.recorded.len();
        (0..self.n_paths).map(|p| self.logprice[p * m + m - 1]).collect()
    }

    /// Factor vector of `path` at `step`, when that step was requested.
    pub fn factors(&self, path: usize, step: usize) -> Option<&[f64]> {
        let j = self.factor_steps.binary_search(&step).ok()?;
        let n = self.kernel.len();
        let start = (path * self.factor_steps.len() + j) * n;
        Some(&self.factors[start..start + n])
    }
}

pub fn simulate(
    params: &HestonParams,
    approx: &MultiExpKernel,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    simulate_with(params, approx, grid, n_paths, seed, &SimOptions::default())
}

pub fn simulate_with(
    params: &HestonParams,
    approx: &MultiExpKernel,
    grid: SimGrid,
    n_paths: usize,
    seed: u64,
    options: &SimOptions,
) -> Result<PathBatch> {
    params.validate()?;
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    if options.record_stride == 0 {
        return Err(invalid("record_stride", "must be at least 1"));
    }
    let n_steps = grid.n_steps();
    let mut factor_steps = options.factor_steps.clone();
    factor_steps.sort_unstable();
    factor_steps.dedup();
    if factor_steps.last().is_some_and(|&s| s > n_steps) {
        return Err(invalid("factor_steps", format!("steps must not exceed {n_steps}")));
    }

    let mut params = *params;
    if let Some(spot) = options.spot {
        if !(spot > 0.0) || !spot.is_finite() {
            return Err(invalid("spot", format!("must be positive, got {spot}")));
        }
        params = params.with_spot(spot);
    }

    let mut recorded: Vec<usize> = (0..=n_steps).step_by(options.record_stride).collect();
    if recorded.last() != Some(&n_steps) {
        recorded.push(n_steps);
    }

    let choice = KernelChoice::MultiExp(approx.clone());
    let forward: Vec<f64> = (0..=n_steps).map(|k| v0_curve(&params, &choice, grid.time(k))).collect();

    let m = recorded.len();
    let nf = approx.len();
    let fs = factor_steps.len();
    let mut logprice = vec![0.0; n_paths * m];
    let mut variance = vec![0.0; n_paths * m];
    let mut factors = vec![0.0; n_paths * fs * nf];

    let stepper = Stepper::new(&params, approx, &grid, &forward);
    let n_blocks = n_paths.div_ceil(PATH_BLOCK);
    let factor_blocks: Vec<&mut [f64]> = if fs * nf > 0 {
        factors.chunks_mut(PATH_BLOCK * fs * nf).collect()
    } else {
        (0..n_blocks).map(|_| &mut [][..]).collect()
    };
    logprice
        .par_chunks_mut(PATH_BLOCK * m)
        .zip(variance.par_chunks_mut(PATH_BLOCK * m))
        .zip(factor_blocks.into_par_iter())
        .enumerate()
        .try_for_each(|(block, ((lp, var), fac))| {
            let first = block * PATH_BLOCK;
            let count = lp.len() / m;
            let mut y = vec![0.0; nf];
            for local in 0..count {
                let path = first + local;
                let out = PathOut {
                    logprice: &mut lp[local * m..(local + 1) * m],
                    variance: &mut var[local * m..(local + 1) * m],
                    factors: &mut fac[local * fs * nf..(local + 1) * fs * nf],
                };
                stepper.run(seed, path, &recorded, &factor_steps, &mut y, out)?;
            }
            Ok::<(), Error>(())
        })?;

    Ok(PathBatch {
        grid,
        n_paths,
        seed,
        params,
        kernel: approx.clone(),
        recorded,
        logprice,
        variance,
        factor_steps,
        factors,
        forward,
    })
}

struct PathOut<'a> {
    logprice: &'a mut [f64],
    variance: &'a mut [f64],
    factors: &'a mut [f64],
}

struct Stepper<'a> {
    params: HestonParams,
    weights: &'a [f64],
    inv: Vec<f64>,
    forward: &'a [f64],
    dt: f64,
    sqrt_dt: f64,
    rho_bar: f64,
    n_steps: usize,
}

impl<'a> Stepper<'a> {
    fn new(params: &HestonParams, approx: &'a MultiExpKernel, grid: &SimGrid, forward: &'a [f64]) -> Self {
        let dt = grid.dt();
        Self {
            params: *params,
            weights: approx.weights(),
            inv: approx.nodes().iter().map(|x| 1.0 / (1.0 + x * dt)).collect(),
            forward,
            dt,
            sqrt_dt: dt.sqrt(),
            rho_bar: (1.0 - params.rho * params.rho).sqrt(),
            n_steps: grid.n_steps(),
        }
    }

    fn run(
        &self,
        seed: u64,
        path: usize,
        recorded: &[usize],
        factor_steps: &[usize],
        y: &mut [f64],
        out: PathOut<'_>,
    ) -> Result<()> {
        let p = &self.params;
        let nf = y.len();
        y.fill(0.0);
        let mut rng = PathRng::new(seed, path as u64);
        let mut x = p.x0;
        let (mut rec, mut frec) = (0, 0);
        for k in 0..=self.n_steps {
            let v = self.forward[k] + self.weights.iter().zip(y.iter()).map(|(c, y)| c * y).sum::<f64>();
            if recorded.get(rec) == Some(&k) {
                out.logprice[rec] = x;
                out.variance[rec] = v;
                rec += 1;
            }
            if factor_steps.get(frec) == Some(&k) {
                out.factors[frec * nf..(frec + 1) * nf].copy_from_slice(y);
                frec += 1;
            }
            if k == self.n_steps {
                break;
            }
            let g1 = rng.normal();
            let g2 = rng.normal();
            let sv = v.max(0.0).sqrt() * self.sqrt_dt;
            x += (p.r - 0.5 * v) * self.dt + sv * (p.rho * g1 + self.rho_bar * g2);
            let shock = -p.lambda * v * self.dt + p.eta * sv * g1;
            for (yi, inv) in y.iter_mut().zip(&self.inv) {
                *yi = (*yi + shock) * inv;
            }
            if !x.is_finite() || !shock.is_finite() {
                return Err(Error::NonFiniteState { path, step: k + 1 });
            }
        }
        Ok(())
    }
}

/// Discounted payoff mean of a European option on the batch.
pub fn european_mc_price(batch: &PathBatch, spec: &EuropeanSpec, r: f64) -> Result<McEstimate> {
    let t = batch.grid().maturity();
    if (spec.maturity - t).abs() > 1e-12 * t {
        return Err(invalid(
            "maturity",
            format!("option maturity {} differs from batch horizon {t}", spec.maturity),
        ));
    }
    let discount = (-r * t).exp();
    let values: Vec<f64> = batch
        .terminal_logprice()
        .iter()
        .map(|x| spec.kind.payoff(spec.strike, x.exp()) * discount)
        .collect();
    Ok(mean_stderr(&values))
}

/// Sample characteristic function of `X_T` with componentwise errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfEstimate {
    pub value: C64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

pub fn empirical_cf(batch: &PathBatch, u: f64) -> CfEstimate {
    let xs = batch.terminal_logprice();
    let re: Vec<f64> = xs.iter().map(|x| (u * x).cos()).collect();
    let im: Vec<f64> = xs.iter().map(|x| (u * x).sin()).collect();
    let (re, im) = (mean_stderr(&re), mean_stderr(&im));
    CfEstimate {
        value: C64::new(re.price, im.price),
        stderr_re: re.stderr,
        stderr_im: im.stderr,
    }
}
