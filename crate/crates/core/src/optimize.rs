//! Derivative-free bounded scalar minimization.

/// Outcome of a bounded 1-D minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Brent's method on `[lo, hi]`: golden-section steps with parabolic
/// interpolation when it is trusted. Terminates when the bracket around the
/// best point is below `2 * xtol` (plus a relative term at machine precision).
///
/// The returned value is the smallest objective value seen.
pub fn brent_bounded<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> Minimum {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    const MAX_ITER: usize = 500;
    let sqrt_eps = f64::EPSILON.sqrt();

    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut v, mut w) = (x, x);
    let mut fx = f(x);
    let (mut fv, mut fw) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let mut evaluations = 1;

    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum {
        x,
        value: fx,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let m = brent_bounded(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-9);
        assert!((m.x - 1.3).abs() < 1e-8);
        assert!((m.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn respects_bounds_for_monotone_objective() {
        let m = brent_bounded(|x| x, 2.0, 3.0, 1e-8);
        assert!(m.x >= 2.0 && m.x < 2.0 + 1e-6);
    }

    #[test]
    fn nonsmooth_objective() {
        let m = brent_bounded(|x: f64| (x - 0.25).abs(), 0.0, 1.0, 1e-10);
        assert!((m.x - 0.25).abs() < 1e-8);
    }
}
