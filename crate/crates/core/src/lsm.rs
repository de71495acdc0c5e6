//! Longstaff–Schwartz pricing of Bermudan options on simulated batches.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::simulate::{PathBatch, SimGrid};
use crate::stats::{mean_stderr, McEstimate};

/// Rows per block of the tall-skinny QR.
const QR_BLOCK: usize = 4096;
/// Singular-value ratio below which the regression is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;
const RIDGE: f64 = 1e-10;
/// ITM count, in multiples of the basis size, below which all paths are used.
const ITM_FALLBACK_FACTOR: usize = 4;

/// Exercise dates, each on a node of the simulation grid; the last is `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExerciseGrid {
    steps: Vec<usize>,
    times: Vec<f64>,
}

impl ExerciseGrid {
    /// `count + 1` equidistant dates `0, T/count, …, T`.
    pub fn equidistant(grid: &SimGrid, count: usize) -> Result<Self> {
        let n = grid.n_steps();
        if count == 0 || n % count != 0 {
            return Err(invalid(
                "exercise_dates",
                format!("{count} dates do not divide {n} simulation steps"),
            ));
        }
        Self::from_steps(grid, (0..=count).map(|j| j * (n / count)).collect())
    }

    /// European exercise at maturity only.
    pub fn terminal(grid: &SimGrid) -> Self {
        Self {
            steps: vec![grid.n_steps()],
            times: vec![grid.maturity()],
        }
    }

    pub fn from_steps(grid: &SimGrid, steps: Vec<usize>) -> Result<Self> {
        if steps.last() != Some(&grid.n_steps()) {
            return Err(invalid("exercise_dates", "the last date must be the maturity"));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("exercise_dates", "dates must be strictly increasing"));
        }
        let times = steps.iter().map(|&k| grid.time(k)).collect();
        Ok(Self { steps, times })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Largest spacing between consecutive dates, counting from time 0.
    pub fn mesh(&self) -> f64 {
        let mut prev = 0.0;
        let mut mesh: f64 = 0.0;
        for &t in &self.times {
            mesh = mesh.max(t - prev);
            prev = t;
        }
        mesh
    }
}

/// Tensor Laguerre basis in `(S/K, V⁺/var_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisSpec {
    pub laguerre_orders: Vec<usize>,
    pub includes_constant: bool,
    pub strike: f64,
    pub var_scale: f64,
}

impl BasisSpec {
    /// Orders `{0, 1, 2}` plus the constant: 16 functions.
    pub fn new(strike: f64, var_scale: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(invalid("strike", format!("must be positive, got {strike}")));
        }
        if !(var_scale > 0.0) || !var_scale.is_finite() {
            return Err(invalid("var_scale", format!("must be positive, got {var_scale}")));
        }
        Ok(Self {
            laguerre_orders: vec![0, 1, 2],
            includes_constant: true,
            strike,
            var_scale,
        })
    }

    fn factors_per_arg(&self) -> usize {
        self.laguerre_orders.len() + usize::from(self.includes_constant)
    }

    pub fn len(&self) -> usize {
        self.factors_per_arg().pow(2)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn univariate(&self, z: f64, out: &mut [f64]) {
        let mut j = 0;
        if self.includes_constant {
            out[0] = 1.0;
            j = 1;
        }
        let e = (-z).exp();
        for &order in &self.laguerre_orders {
            out[j] = e * crate::special::laguerre(order, z);
            j += 1;
        }
    }

    /// Writes the basis at `(s, v)` into `out`, indexed `a · m + b` with
    /// `a` over the spot factor and `b` over the variance factor.
    pub fn eval_into(&self, s: f64, v: f64, out: &mut [f64]) {
        let m = self.factors_per_arg();
        let mut fs = [0.0; 8];
        let mut fv = [0.0; 8];
        self.univariate(s / self.strike, &mut fs[..m]);
        self.univariate(v.max(0.0) / self.var_scale, &mut fv[..m]);
        for a in 0..m {
            for b in 0..m {
                out[a * m + b] = fs[a] * fv[b];
            }
        }
    }
}

pub fn basis_eval(spec: &BasisSpec, s: f64, v: f64) -> Vec<f64> {
    let mut out = vec![0.0; spec.len()];
    spec.eval_into(s, v, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionSet {
    #[default]
    InTheMoney,
    AllPaths,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LsmOptions {
    pub regression: RegressionSet,
    /// Re-prices at a different initial spot on the same noise (the log-price
    /// dynamics are additive in `X₀`).
    pub spot: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DateStatus {
    Regressed,
    /// Too few in-the-money paths; regressed on all paths instead.
    AllPathsFallback,
    /// Rank-deficient design; ridge-regularized solution used.
    Ridge,
    /// Fewer in-the-money paths than basis functions; nobody exercises.
    Skipped,
    /// Date at time zero, decided against the mean continuation value.
    Initial,
    Maturity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DateDiagnostics {
    pub time: f64,
    pub itm_paths: usize,
    pub exercise_fraction: f64,
    pub condition_number: Option<f64>,
    pub status: DateStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingResult {
    pub price: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub exercise_fraction_per_date: Vec<f64>,
    /// Condition numbers of the dates where a regression was solved.
    pub regression_condition_numbers: Vec<f64>,
    pub dates: Vec<DateDiagnostics>,
}

impl PricingResult {
    pub fn flagged(&self) -> bool {
        self.dates.iter().any(|d| {
            matches!(
                d.status,
                DateStatus::AllPathsFallback | DateStatus::Ridge | DateStatus::Skipped
            )
        })
    }
}

/// Frozen exercise rule: regression coefficients per date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExercisePolicy {
    grid: ExerciseGrid,
    basis: BasisSpec,
    coefficients: Vec<Option<Vec<f64>>>,
    exercise_at_start: bool,
}

impl ExercisePolicy {
    pub fn grid(&self) -> &ExerciseGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Option<Vec<f64>>] {
        &self.coefficients
    }
}

pub fn bermudan_price<F>(
    batch: &PathBatch,
    grid: &ExerciseGrid,
    payoff: F,
    basis: &BasisSpec,
    r: f64,
) -> Result<PricingResult>
where
    F: Fn(f64) -> f64 + Sync,
{
    bermudan_price_with(batch, grid, payoff, basis, r, &LsmOptions::default()).map(|(res, _)| res)
}

/// In-sample LSM price and the induced policy.
pub fn bermudan_price_with<F>(
    batch: &PathBatch,
    grid: &ExerciseGrid,
    payoff: F,
    basis: &BasisSpec,
    r: f64,
    options: &LsmOptions,
) -> Result<(PricingResult, ExercisePolicy)>
where
    F: Fn(f64) -> f64 + Sync,
{
    let shift = spot_shift(batch, options.spot)?;
    check_dates(batch, grid)?;
    let m = batch.n_paths();
    let l = basis.len();
    let last = grid.len() - 1;
    let times = grid.times();

    let mut cash: Vec<f64> = state_at(batch, grid.steps()[last], shift)?
        .iter()
        .map(|&(s, _)| payoff(s))
        .collect();
    let mut when = vec![last; m];
    let mut coefficients = vec![None; grid.len()];
    let mut dates = vec![DateDiagnostics {
        time: times[last],
        itm_paths: cash.iter().filter(|&&c| c > 0.0).count(),
        exercise_fraction: cash.iter().filter(|&&c| c > 0.0).count() as f64 / m as f64,
        condition_number: None,
        status: DateStatus::Maturity,
    }];
    let mut exercise_at_start = false;

    for j in (0..last).rev() {
        let step = grid.steps()[j];
        let discounts: Vec<f64> = times.iter().map(|&t| (-r * (t - times[j])).exp()).collect();
        let continuation: Vec<f64> = cash.iter().zip(&when).map(|(c, &w)| c * discounts[w]).collect();

        if step == 0 {
            let s0 = options.spot.unwrap_or_else(|| batch.params().spot());
            let immediate = payoff(s0);
            let hold = continuation.iter().sum::<f64>() / m as f64;
            exercise_at_start = immediate > 0.0 && immediate >= hold;
            if exercise_at_start {
                cash.fill(immediate);
                when.fill(j);
            }
            dates.push(DateDiagnostics {
                time: times[j],
                itm_paths: if immediate > 0.0 { m } else { 0 },
                exercise_fraction: if exercise_at_start { 1.0 } else { 0.0 },
                condition_number: None,
                status: DateStatus::Initial,
            });
            continue;
        }

        let states = state_at(batch, step, shift)?;
        let immediate: Vec<f64> = states.iter().map(|&(s, _)| payoff(s)).collect();
        let itm: Vec<usize> = (0..m).filter(|&p| immediate[p] > 0.0).collect();

        if itm.len() < l {
            dates.push(DateDiagnostics {
                time: times[j],
                itm_paths: itm.len(),
                exercise_fraction: 0.0,
                condition_number: None,
                status: DateStatus::Skipped,
            });
            continue;
        }

        let fallback = itm.len() < ITM_FALLBACK_FACTOR * l;
        let all: Vec<usize>;
        let rows: &[usize] = if fallback || options.regression == RegressionSet::AllPaths {
            all = (0..m).collect();
            &all
        } else {
            &itm
        };
        let fit = least_squares(rows, l, |p, out| {
            let (s, v) = states[p];
            basis.eval_into(s, v, out);
            continuation[p]
        })?;

        let mut exercised = 0;
        let mut row = vec![0.0; l];
        for &p in &itm {
            let (s, v) = states[p];
            basis.eval_into(s, v, &mut row);
            let fitted: f64 = row.iter().zip(&fit.beta).map(|(a, b)| a * b).sum();
            if immediate[p] >= fitted {
                cash[p] = immediate[p];
                when[p] = j;
                exercised += 1;
            }
        }
        let status = if fit.ridge {
            DateStatus::Ridge
        } else if fallback {
            DateStatus::AllPathsFallback
        } else {
            DateStatus::Regressed
        };
        dates.push(DateDiagnostics {
            time: times[j],
            itm_paths: itm.len(),
            exercise_fraction: exercised as f64 / m as f64,
            condition_number: Some(fit.condition),
            status,
        });
        coefficients[j] = Some(fit.beta);
    }
    dates.reverse();

    let values: Vec<f64> = cash
        .iter()
        .zip(&when)
        .map(|(c, &w)| c * (-r * times[w]).exp())
        .collect();
    let est = mean_stderr(&values);
    let result = PricingResult {
        price: est.price,
        stderr: est.stderr,
        n_paths: m,
        exercise_fraction_per_date: dates.iter().map(|d| d.exercise_fraction).collect(),
        regression_condition_numbers: dates.iter().filter_map(|d| d.condition_number).collect(),
        dates,
    };
    let policy = ExercisePolicy {
        grid: grid.clone(),
        basis: basis.clone(),
        coefficients,
        exercise_at_start,
    };
    Ok((result, policy))
}

/// Values a frozen policy on an independent batch (a low-biased estimate).
pub fn evaluate_policy<F>(
    batch: &PathBatch,
    policy: &ExercisePolicy,
    payoff: F,
    r: f64,
    spot: Option<f64>,
) -> Result<McEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let shift = spot_shift(batch, spot)?;
    let grid = &policy.grid;
    check_dates(batch, grid)?;
    let m = batch.n_paths();
    if policy.exercise_at_start {
        let value = payoff(spot.unwrap_or_else(|| batch.params().spot()));
        return Ok(mean_stderr(&vec![value; m]));
    }
    let l = policy.basis.len();
    let columns: Vec<usize> = grid
        .steps()
        .iter()
        .map(|&k| batch.recorded_steps().binary_search(&k).expect("checked above"))
        .collect();
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|p| {
            let xs = batch.path_logprice(p);
            let vs = batch.path_variance(p);
            let mut row = vec![0.0; l];
            for (j, &col) in columns.iter().enumerate() {
                let s = (xs[col] + shift).exp();
                let h = payoff(s);
                if h <= 0.0 {
                    continue;
                }
                let exercise = match &policy.coefficients[j] {
                    Some(beta) => {
                        policy.basis.eval_into(s, vs[col], &mut row);
                        h >= row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
                    }
                    None => j + 1 == columns.len(),
                };
                if exercise {
                    return h * (-r * grid.times()[j]).exp();
                }
            }
            0.0
        })
        .collect();
    Ok(mean_stderr(&values))
}

/// Prices on several equidistant exercise grids from one batch.
pub fn bermudan_in_n<F>(
    batch: &PathBatch,
    counts: &[usize],
    payoff: F,
    basis: &BasisSpec,
    r: f64,
    options: &LsmOptions,
) -> Result<Vec<(usize, PricingResult)>>
where
    F: Fn(f64) -> f64 + Sync,
{
    counts
        .iter()
        .map(|&n| {
            let grid = ExerciseGrid::equidistant(batch.grid(), n)?;
            let (res, _) = bermudan_price_with(batch, &grid, &payoff, basis, r, options)?;
            Ok((n, res))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPrice {
    pub spot: f64,
    /// Matching threshold `max(3·stderr, tol)` at the returned spot.
    pub eps_match: f64,
    pub evaluations: usize,
}

/// Largest spot in `bounds` where the put price is within `ε_match` of the
/// payoff `(K − S)⁺`, found by bisection.
pub fn critical_price<P>(mut pricing: P, strike: f64, bounds: (f64, f64), tol: f64) -> Result<CriticalPrice>
where
    P: FnMut(f64) -> Result<PricingResult>,
{
    let (mut lo, mut hi) = bounds;
    if !(lo > 0.0 && lo < hi) || !hi.is_finite() {
        return Err(invalid("bounds", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let mut evaluations = 0;
    let mut matches = |s: f64| -> Result<(bool, f64)> {
        evaluations += 1;
        let res = pricing(s)?;
        let eps = (3.0 * res.stderr).max(tol);
        Ok((res.price - (strike - s).max(0.0) <= eps, eps))
    };
    let (ok_hi, eps_hi) = matches(hi)?;
    if ok_hi {
        return Ok(CriticalPrice {
            spot: hi,
            eps_match: eps_hi,
            evaluations: 1,
        });
    }
    let (ok_lo, mut eps_lo) = matches(lo)?;
    if !ok_lo {
        return Err(Error::NoCriticalPrice { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let (ok, eps) = matches(mid)?;
        if ok {
            lo = mid;
            eps_lo = eps;
        } else {
            hi = mid;
        }
    }
    drop(matches);
    Ok(CriticalPrice {
        spot: lo,
        eps_match: eps_lo,
        evaluations,
    })
}

fn spot_shift(batch: &PathBatch, spot: Option<f64>) -> Result<f64> {
    match spot {
        None => Ok(0.0),
        Some(s) if s > 0.0 && s.is_finite() => Ok(s.ln() - batch.params().x0),
        Some(s) => Err(invalid("spot", format!("must be positive, got {s}"))),
    }
}

fn check_dates(batch: &PathBatch, grid: &ExerciseGrid) -> Result<()> {
    if grid.steps().last() != Some(&batch.grid().n_steps()) {
        return Err(invalid("exercise_dates", "grid does not end at the batch maturity"));
    }
    match grid.steps().iter().find(|&&k| !batch.is_recorded(k)) {
        Some(k) => Err(invalid("exercise_dates", format!("step {k} is not stored in the batch"))),
        None => Ok(()),
    }
}

fn state_at(batch: &PathBatch, step: usize, shift: f64) -> Result<Vec<(f64, f64)>> {
    let xs = batch.logprice_at(step)?;
    let vs = batch.variance_at(step)?;
    Ok(xs.into_iter().zip(vs).map(|(x, v)| ((x + shift).exp(), v)).collect())
}

struct Fit {
    beta: Vec<f64>,
    condition: f64,
    ridge: bool,
}

/// Least squares through a blocked QR of `[B | y]` and an SVD of the final
/// triangular factor. Blocks are reduced in a fixed order.
fn least_squares<G>(rows: &[usize], l: usize, fill: G) -> Result<Fit>
where
    G: Fn(usize, &mut [f64]) -> f64 + Sync,
{
    let factors: Vec<DMatrix<f64>> = rows
        .par_chunks(QR_BLOCK)
        .map(|chunk| {
            let mut a = DMatrix::zeros(chunk.len(), l + 1);
            let mut row = vec![0.0; l];
            for (i, &p) in chunk.iter().enumerate() {
                let y = fill(p, &mut row);
                for (k, v) in row.iter().enumerate() {
                    a[(i, k)] = *v;
                }
                a[(i, l)] = y;
            }
            a.qr().r()
        })
        .collect();
    let r_aug = if factors.len() == 1 {
        factors.into_iter().next().expect("one block")
    } else {
        let height: usize = factors.iter().map(|f| f.nrows()).sum();
        let mut stacked = DMatrix::zeros(height, l + 1);
        let mut at = 0;
        for f in &factors {
            stacked.view_mut((at, 0), (f.nrows(), l + 1)).copy_from(f);
            at += f.nrows();
        }
        stacked.qr().r()
    };
    let k = r_aug.nrows().min(l);
    let mut r = DMatrix::zeros(l, l);
    r.view_mut((0, 0), (k, l)).copy_from(&r_aug.view((0, 0), (k, l)));
    let mut rhs = DVector::zeros(l);
    rhs.rows_mut(0, k).copy_from(&r_aug.view((0, l), (k, 1)));

    let svd = r.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numeric("SVD of the regression factor failed".into())),
    };
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let smin = sigma.min();
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(Error::Numeric("regression design is degenerate".into()));
    }
    let ridge = smin <= RANK_TOL * smax;
    let eps = RIDGE * smax * smax;
    let uty = u.transpose() * rhs;
    let scaled = DVector::from_iterator(
        l,
        sigma.iter().zip(uty.iter()).map(|(&s, &c)| {
            if ridge {
                s / (s * s + eps) * c
            } else {
                c / s
            }
        }),
    );
    let beta = vt.transpose() * scaled;
    Ok(Fit {
        beta: beta.iter().copied().collect(),
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        ridge,
    })
}
