//! Small numeric helpers shared by the modules.

/// Neumaier-compensated sum.
pub fn neumaier<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `sum(exp(xs))` computed with a max shift and compensated accumulation.
pub fn sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    max.exp() * neumaier(xs.iter().map(|x| (x - max).exp()))
}

/// Mean and sample standard deviation (`n - 1` denominator; zero for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = neumaier(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = neumaier(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Round half away from zero to `digits` decimals.
pub fn round_half_up(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    // nudge values that sit a rounding error below a half
    let y = x * scale;
    let r = (y.abs() + 0.5 + 1e-9).floor();
    r.copysign(y) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier(xs), 2.0);
    }

    #[test]
    fn sum_exp_handles_large_negatives() {
        let xs = [-1000.0, -1000.0];
        let s = sum_exp(&xs);
        assert!(s == 0.0 || s.is_finite());
        assert!((sum_exp(&[0.0, 0.0]) - 2.0).abs() < 1e-15);
        assert_eq!(sum_exp(&[]), 0.0);
    }

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(1.5625, 3), 1.563);
        assert_eq!(round_half_up(1.5624, 3), 1.562);
        assert_eq!(round_half_up(-0.0005, 3), -0.001);
        assert_eq!(round_half_up(2.0, 3), 2.0);
    }
}
