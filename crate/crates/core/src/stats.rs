use serde::Serialize;

/// Sample mean with the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub price: f64,
    pub stderr: f64,
}

/// Mean and standard error, summed sequentially so results do not depend on
/// thread scheduling. The mean is accumulated as deviations from the first
/// sample, which makes constant samples exact.
pub fn mean_stderr(values: &[f64]) -> McEstimate {
    let n = values.len();
    if n == 0 {
        return McEstimate {
            price: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let pivot = values[0];
    let mean = pivot + values.iter().map(|v| v - pivot).sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    McEstimate { price: mean, stderr }
}

/// `√(a² + b²)` for two independent standard errors.
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_error() {
        let e = mean_stderr(&[2.5; 10]);
        assert_eq!(e.price, 2.5);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn known_sample() {
        let e = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.price, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
