use roughbermudan::fourier::*;
use roughbermudan::kernel::*;
use roughbermudan::simulate::*;
use roughbermudan::stats::{combined_stderr, mean_stderr};
use roughbermudan::HestonParams;

fn lifted(n: usize) -> MultiExpKernel {
    let frac = FractionalKernel::new(0.6).unwrap();
    let fit = optimize_ratio(&frac, n, 0.5).unwrap();
    build_multiexp(&frac, &GeometricPartition::new(n, fit.ratio).unwrap()).unwrap()
}

fn zero_variance() -> HestonParams {
    HestonParams::new(0.0, 0.0, 0.3, 0.3, -0.7, 0.06, 100f64.ln()).unwrap()
}

#[test]
fn zero_variance_paths_are_deterministic() {
    let p = zero_variance();
    let g = SimGrid::new(0.5, 50).unwrap();
    let b = simulate(&p, &lifted(4), g, 300, 1).unwrap();
    for path in 0..300 {
        assert!(b.path_variance(path).iter().all(|&v| v == 0.0));
        let mut x = p.x0;
        for (k, &stored) in b.path_logprice(path).iter().enumerate() {
            assert_eq!(stored, x, "path {path} step {k}");
            x += p.r * g.dt();
        }
    }
    let spec = EuropeanSpec::put(110.0, 0.5).unwrap();
    let est = european_mc_price(&b, &spec, p.r).unwrap();
    let x_t = b.terminal_logprice()[0];
    assert_eq!(est.price, (110.0 - x_t.exp()) * (-0.03f64).exp());
    assert_eq!(est.stderr, 0.0);
    // X̂_T accumulates N_time rounded drift increments
    assert!((est.price - (110.0 * (-0.03f64).exp() - 100.0)).abs() < 1e-11);
    let cf = empirical_cf(&b, 1.3);
    assert_eq!(cf.value, num_complex::Complex64::new(0.0, 1.3 * x_t).exp());
    assert!((x_t - (p.x0 + p.r * 0.5)).abs() < 1e-13);
}

#[test]
fn variance_equals_forward_curve_without_noise() {
    let p = HestonParams {
        eta: 0.0,
        lambda: 0.0,
        ..HestonParams::reference()
    };
    let k = lifted(10);
    let g = SimGrid::new(0.5, 100).unwrap();
    let b = simulate(&p, &k, g, 50, 3).unwrap();
    let kc = KernelChoice::MultiExp(k);
    for path in 0..50 {
        for (j, &step) in b.recorded_steps().iter().enumerate() {
            assert_eq!(b.path_variance(path)[j], v0_curve(&p, &kc, g.time(step)));
        }
    }
}

#[test]
fn stored_variance_matches_factors() {
    let p = HestonParams::reference();
    let k = lifted(20);
    let g = SimGrid::new(0.5, 100).unwrap();
    let opts = SimOptions {
        record_stride: 10,
        factor_steps: vec![0, 30, 50, 100],
        spot: None,
    };
    let b = simulate_with(&p, &k, g, 200, 8, &opts).unwrap();
    for path in 0..200 {
        assert!(b.factors(path, 0).unwrap().iter().all(|&y| y == 0.0));
        for step in [30, 50, 100] {
            let y = b.factors(path, step).unwrap();
            let expected = b.forward_variance()[step] + k.weights().iter().zip(y).map(|(c, y)| c * y).sum::<f64>();
            assert_eq!(b.variance(path, step).unwrap(), expected);
        }
    }
}

#[test]
fn identical_across_thread_counts() {
    let p = HestonParams::reference();
    let k = lifted(10);
    let g = SimGrid::new(0.5, 60).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate(&p, &k, g, 3000, 77).unwrap())
    };
    let reference = run(1);
    for threads in [2, 4, 7] {
        let other = run(threads);
        for path in 0..3000 {
            assert_eq!(reference.path_logprice(path), other.path_logprice(path));
            assert_eq!(reference.path_variance(path), other.path_variance(path));
        }
    }
}

#[test]
fn pathwise_put_call_parity() {
    let p = HestonParams::reference();
    let g = SimGrid::new(0.5, 100).unwrap();
    let b = simulate(&p, &lifted(4), g, 20_000, 4).unwrap();
    let call = european_mc_price(&b, &EuropeanSpec::call(100.0, 0.5).unwrap(), p.r).unwrap();
    let put = european_mc_price(&b, &EuropeanSpec::put(100.0, 0.5).unwrap(), p.r).unwrap();
    let discount = (-p.r * 0.5).exp();
    let spot: Vec<f64> = b.terminal_logprice().iter().map(|x| discount * x.exp()).collect();
    let forward = mean_stderr(&spot).price;
    assert!((call.price - put.price - (forward - 100.0 * discount)).abs() < 1e-10);
    assert!(european_mc_price(&b, &EuropeanSpec::put(100.0, 0.4).unwrap(), p.r).is_err());
}

#[test]
fn characteristic_function_at_zero() {
    let p = HestonParams::reference();
    let g = SimGrid::new(0.5, 20).unwrap();
    let b = simulate(&p, &lifted(4), g, 500, 2).unwrap();
    let cf = empirical_cf(&b, 0.0);
    assert_eq!(cf.value, num_complex::Complex64::new(1.0, 0.0));
    assert_eq!((cf.stderr_re, cf.stderr_im), (0.0, 0.0));
}

#[test]
fn discounted_spot_is_a_martingale() {
    let p = HestonParams::reference();
    let g = SimGrid::new(0.5, 500).unwrap();
    let opts = SimOptions {
        record_stride: 500,
        ..SimOptions::default()
    };
    let b = simulate_with(&p, &lifted(20), g, 100_000, 12, &opts).unwrap();
    let discount = (-p.r * 0.5).exp();
    let values: Vec<f64> = b.terminal_logprice().iter().map(|x| discount * x.exp()).collect();
    let est = mean_stderr(&values);
    assert!((est.price - p.spot()).abs() <= 3.0 * est.stderr, "{est:?}");
}

#[test]
fn step_refinement_is_within_noise() {
    let p = HestonParams::reference();
    let k = lifted(20);
    let spec = EuropeanSpec::put(100.0, 0.5).unwrap();
    let price = |steps: usize| {
        let g = SimGrid::new(0.5, steps).unwrap();
        let opts = SimOptions {
            record_stride: steps,
            ..SimOptions::default()
        };
        european_mc_price(&simulate_with(&p, &k, g, 100_000, 21, &opts).unwrap(), &spec, p.r).unwrap()
    };
    let (a, b) = (price(250), price(500));
    assert!((a.price - b.price).abs() < 3.0 * combined_stderr(a.stderr, b.stderr));
}

#[test]
fn monte_carlo_matches_fourier_for_few_factors() {
    let p = HestonParams::reference();
    let k = lifted(4);
    let g = SimGrid::new(0.5, 2000).unwrap();
    let opts = SimOptions {
        record_stride: 2000,
        ..SimOptions::default()
    };
    let b = simulate_with(&p, &k, g, 100_000, 5, &opts).unwrap();
    let spec = EuropeanSpec::put(100.0, 0.5).unwrap();
    let mc = european_mc_price(&b, &spec, p.r).unwrap();
    let fourier = european_price(&p, &KernelChoice::MultiExp(k), &spec, FourierQuad::default(), 2.5e-4).unwrap();
    assert!((mc.price - fourier.price).abs() <= 3.0 * mc.stderr, "{mc:?} vs {}", fourier.price);
}

#[test]
fn rejects_invalid_requests() {
    let p = HestonParams::reference();
    let g = SimGrid::new(0.5, 10).unwrap();
    assert!(simulate(&p, &lifted(4), g, 0, 1).is_err());
    let opts = SimOptions {
        factor_steps: vec![11],
        ..SimOptions::default()
    };
    assert!(simulate_with(&p, &lifted(4), g, 5, 1, &opts).is_err());
}
