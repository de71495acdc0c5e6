//! Shared fixtures for the benchmarks.

use roughbermudan::kernel::{build_multiexp, optimize_ratio};
use roughbermudan::{FractionalKernel, GeometricPartition, MultiExpKernel};

/// Optimized `n`-factor kernel for `α = 0.6`, `T = 0.5`.
pub fn reference_kernel(n: usize) -> MultiExpKernel {
    let frac = FractionalKernel::new(0.6).expect("valid alpha");
    let fit = optimize_ratio(&frac, n, 0.5).expect("optimizer converges");
    build_multiexp(&frac, &GeometricPartition::new(n, fit.ratio).expect("valid ratio")).expect("integrable cells")
}
