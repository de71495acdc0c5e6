use roughbermudan::fourier::EuropeanSpec;
use roughbermudan::kernel::*;
use roughbermudan::lsm::*;
use roughbermudan::simulate::*;
use roughbermudan::stats::combined_stderr;
use roughbermudan::{Error, HestonParams};

const STRIKE: f64 = 100.0;

fn put(s: f64) -> f64 {
    (STRIKE - s).max(0.0)
}

fn lifted(n: usize) -> MultiExpKernel {
    let frac = FractionalKernel::new(0.6).unwrap();
    let fit = optimize_ratio(&frac, n, 0.5).unwrap();
    build_multiexp(&frac, &GeometricPartition::new(n, fit.ratio).unwrap()).unwrap()
}

fn batch(params: &HestonParams, n_paths: usize, seed: u64) -> PathBatch {
    let g = SimGrid::new(0.5, 100).unwrap();
    simulate(params, &lifted(10), g, n_paths, seed).unwrap()
}

fn basis() -> BasisSpec {
    BasisSpec::new(STRIKE, 0.02).unwrap()
}

fn zero_variance() -> HestonParams {
    HestonParams::new(0.0, 0.0, 0.3, 0.3, -0.7, 0.06, 95f64.ln()).unwrap()
}

#[test]
fn zero_variance_exercises_immediately() {
    let p = zero_variance();
    let b = batch(&p, 2000, 1);
    let grid = ExerciseGrid::equidistant(b.grid(), 5).unwrap();
    let res = bermudan_price(&b, &grid, put, &basis(), p.r).unwrap();
    assert_eq!(res.price, STRIKE - p.spot());
    assert_eq!(res.stderr, 0.0);
    assert_eq!(res.exercise_fraction_per_date[0], 1.0);
}

#[test]
fn terminal_grid_reproduces_european() {
    let p = HestonParams::reference();
    let b = batch(&p, 5000, 2);
    let grid = ExerciseGrid::terminal(b.grid());
    let res = bermudan_price(&b, &grid, put, &basis(), p.r).unwrap();
    let euro = european_mc_price(&b, &EuropeanSpec::put(STRIKE, 0.5).unwrap(), p.r).unwrap();
    assert_eq!(res.price, euro.price);
    assert_eq!(res.stderr, euro.stderr);
}

#[test]
fn price_dominates_european_and_payoff() {
    let p = HestonParams::reference();
    let b = batch(&p, 20_000, 3);
    let grid = ExerciseGrid::equidistant(b.grid(), 20).unwrap();
    let euro = european_mc_price(&b, &EuropeanSpec::put(STRIKE, 0.5).unwrap(), p.r).unwrap();
    for spot in [90.0, 95.0, 100.0, 105.0] {
        let opts = LsmOptions {
            spot: Some(spot),
            ..LsmOptions::default()
        };
        let (res, _) = bermudan_price_with(&b, &grid, put, &basis(), p.r, &opts).unwrap();
        assert!(res.price >= put(spot) - 3.0 * res.stderr);
        if spot == 100.0 {
            assert!(res.price >= euro.price - 3.0 * res.stderr);
        }
        assert_eq!(res.regression_condition_numbers.len(), 19);
        assert!(res.regression_condition_numbers.iter().all(|c| c.is_finite()));
    }
}

#[test]
fn more_exercise_dates_never_hurt() {
    let p = HestonParams::reference();
    let b = batch(&p, 20_000, 4);
    let opts = LsmOptions {
        spot: Some(96.0),
        ..LsmOptions::default()
    };
    let prices = bermudan_in_n(&b, &[1, 2, 5, 10, 50, 100], put, &basis(), p.r, &opts).unwrap();
    for w in prices.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        assert!(b.price >= a.price - 3.0 * combined_stderr(a.stderr, b.stderr), "{} -> {}", w[0].0, w[1].0);
    }
}

#[test]
fn scaling_spot_and_strike_scales_price() {
    let p = HestonParams::reference();
    let b = batch(&p, 10_000, 5);
    let grid = ExerciseGrid::equidistant(b.grid(), 10).unwrap();
    let base = bermudan_price(&b, &grid, put, &basis(), p.r).unwrap();
    let c = 2.0;
    let opts = LsmOptions {
        spot: Some(c * p.spot()),
        ..LsmOptions::default()
    };
    let scaled_basis = BasisSpec::new(c * STRIKE, 0.02).unwrap();
    let (scaled, _) =
        bermudan_price_with(&b, &grid, |s| (c * STRIKE - s).max(0.0), &scaled_basis, p.r, &opts).unwrap();
    assert_eq!(base.exercise_fraction_per_date, scaled.exercise_fraction_per_date);
    assert!((scaled.price - c * base.price).abs() < 1e-9 * scaled.price);
}

#[test]
fn constant_payoff_is_taken_at_once() {
    let p = HestonParams::reference();
    let b = batch(&p, 2000, 6);
    let grid = ExerciseGrid::equidistant(b.grid(), 4).unwrap();
    let res = bermudan_price(&b, &grid, |_| 3.5, &basis(), p.r).unwrap();
    assert_eq!(res.price, 3.5);
    assert_eq!(res.stderr, 0.0);
}

#[test]
fn reproducible_bit_for_bit() {
    let p = HestonParams::reference();
    let grid_of = |b: &PathBatch| ExerciseGrid::equidistant(b.grid(), 10).unwrap();
    let b1 = batch(&p, 8000, 7);
    let b2 = batch(&p, 8000, 7);
    let r1 = bermudan_price(&b1, &grid_of(&b1), put, &basis(), p.r).unwrap();
    let r2 = bermudan_price(&b2, &grid_of(&b2), put, &basis(), p.r).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn out_of_sample_value_is_close_to_in_sample() {
    let p = HestonParams::reference();
    let train = batch(&p, 20_000, 8);
    let test = batch(&p, 20_000, 9);
    let grid = ExerciseGrid::equidistant(train.grid(), 10).unwrap();
    let opts = LsmOptions {
        spot: Some(97.0),
        ..LsmOptions::default()
    };
    let (inside, policy) = bermudan_price_with(&train, &grid, put, &basis(), p.r, &opts).unwrap();
    let outside = evaluate_policy(&test, &policy, put, p.r, Some(97.0)).unwrap();
    assert!((inside.price - outside.price).abs() < 4.0 * combined_stderr(inside.stderr, outside.stderr));
    let same = evaluate_policy(&train, &policy, put, p.r, Some(97.0)).unwrap();
    assert!((same.price - inside.price).abs() < 1e-12);
}

#[test]
fn all_path_regression_mode() {
    let p = HestonParams::reference();
    let b = batch(&p, 10_000, 10);
    let grid = ExerciseGrid::equidistant(b.grid(), 10).unwrap();
    let opts = LsmOptions {
        regression: RegressionSet::AllPaths,
        spot: Some(97.0),
    };
    let (all, _) = bermudan_price_with(&b, &grid, put, &basis(), p.r, &opts).unwrap();
    let itm_opts = LsmOptions {
        regression: RegressionSet::InTheMoney,
        ..opts
    };
    let (itm, _) = bermudan_price_with(&b, &grid, put, &basis(), p.r, &itm_opts).unwrap();
    assert_ne!(all.price, itm.price);
    for res in [&all, &itm] {
        assert!(res.price >= put(97.0) - 3.0 * res.stderr);
    }
    // the in-the-money fit targets the exercise region and should not lose value
    assert!(itm.price >= all.price - 3.0 * combined_stderr(itm.stderr, all.stderr));
}

#[test]
fn sparse_money_dates_are_skipped() {
    let p = HestonParams::reference();
    let b = batch(&p, 3000, 11);
    let grid = ExerciseGrid::equidistant(b.grid(), 5).unwrap();
    // deep out of the money: few or no paths ever pay
    let opts = LsmOptions {
        spot: Some(160.0),
        ..LsmOptions::default()
    };
    let (res, _) = bermudan_price_with(&b, &grid, put, &basis(), p.r, &opts).unwrap();
    assert!(res.flagged());
    assert!(res.dates.iter().any(|d| d.status == DateStatus::Skipped));
}

#[test]
fn critical_price_of_degenerate_model_is_the_upper_bound() {
    let p = zero_variance();
    let b = batch(&p, 500, 12);
    let grid = ExerciseGrid::equidistant(b.grid(), 5).unwrap();
    let pricing = |s: f64| {
        let opts = LsmOptions {
            spot: Some(s),
            ..LsmOptions::default()
        };
        bermudan_price_with(&b, &grid, put, &basis(), p.r, &opts).map(|r| r.0)
    };
    let cp = critical_price(pricing, STRIKE, (80.0, 97.0), 1e-3).unwrap();
    assert_eq!(cp.spot, 97.0);
}

#[test]
fn critical_price_bisection() {
    let p = HestonParams::reference();
    let b = batch(&p, 10_000, 13);
    let grid = ExerciseGrid::equidistant(b.grid(), 20).unwrap();
    let pricing = |s: f64| {
        let opts = LsmOptions {
            spot: Some(s),
            ..LsmOptions::default()
        };
        bermudan_price_with(&b, &grid, put, &basis(), p.r, &opts).map(|r| r.0)
    };
    let cp = critical_price(pricing, STRIKE, (80.0, 99.0), 1e-3).unwrap();
    assert!(cp.spot > 85.0 && cp.spot < 99.0, "{cp:?}");
    let at = pricing(cp.spot).unwrap();
    assert!(at.price - put(cp.spot) <= cp.eps_match);
    let err = critical_price(pricing, STRIKE, (99.0, 99.5), 1e-3).unwrap_err();
    assert!(matches!(err, Error::NoCriticalPrice { .. }));
}

#[test]
fn exercise_dates_must_be_stored() {
    let p = HestonParams::reference();
    let g = SimGrid::new(0.5, 100).unwrap();
    let opts = SimOptions {
        record_stride: 20,
        ..SimOptions::default()
    };
    let b = simulate_with(&p, &lifted(4), g, 100, 1, &opts).unwrap();
    let fine = ExerciseGrid::equidistant(&g, 10).unwrap();
    assert!(bermudan_price(&b, &fine, put, &basis(), p.r).is_err());
    let coarse = ExerciseGrid::equidistant(&g, 5).unwrap();
    assert!(bermudan_price(&b, &coarse, put, &basis(), p.r).is_ok());
}
