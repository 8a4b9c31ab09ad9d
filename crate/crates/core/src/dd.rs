//! Minimal double-double arithmetic.
//!
//! Only what the score-distribution recursion needs: sums, products, and a
//! softplus accurate to roughly 1e-30 relative. A value is `hi + lo` with
//! `|lo| <= ulp(hi) / 2`.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    pub fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }

    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd { hi: self.hi * s, lo: self.lo * s }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, b: f64) -> Dd {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

/// `exp(-a)` for finite `a >= 0`.
pub(crate) fn exp_neg(a: f64) -> Dd {
    debug_assert!(a >= 0.0 && a.is_finite());
    if a > 745.0 {
        return Dd::ZERO;
    }
    // a = k ln2 + r, |r| <= ln2 / 2
    let k = (a / LN2.hi).round();
    let r = Dd::from_f64(a) - LN2.mul_f64(k);
    // exp(-r) = exp(-r / 2^8)^(2^8)
    const SQUARINGS: i32 = 8;
    let x = (-r).ldexp(-SQUARINGS);
    let mut term = Dd::ONE;
    let mut sum = Dd::ONE;
    for i in 1..=14 {
        term = (term * x).div(Dd::from_f64(i as f64));
        sum = sum + term;
    }
    for _ in 0..SQUARINGS {
        sum = sum * sum;
    }
    sum.ldexp(-(k as i32))
}

/// `ln(1 + t)` for `0 <= t <= 1`, via `2 atanh(t / (2 + t))`.
pub(crate) fn ln_1p(t: Dd) -> Dd {
    debug_assert!(t.hi >= 0.0 && t.hi <= 1.0);
    if t.hi == 0.0 {
        return Dd::ZERO;
    }
    let s = t.div(t + 2.0);
    let s2 = s * s;
    let mut power = s;
    let mut sum = s;
    for m in 1..=40 {
        power = power * s2;
        let term = power.div(Dd::from_f64((2 * m + 1) as f64));
        sum = sum + term;
        if term.hi.abs() < 1e-34 * sum.hi.abs() {
            break;
        }
    }
    sum.mul_f64(2.0)
}

/// `ln(1 + e^a)` for finite `a >= 0`.
pub(crate) fn softplus(a: f64) -> Dd {
    Dd::from_f64(a) + ln_1p(exp_neg(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: Dd, tol: f64) -> bool {
        let d = a - b;
        d.to_f64().abs() <= tol * b.hi.abs().max(1e-300)
    }

    #[test]
    fn exp_of_ln2_is_half() {
        // LN2.hi = ln 2 - LN2.lo, so exp(-LN2.hi) = 0.5 * exp(LN2.lo)
        let expected = Dd::from_f64(0.5) + 0.5 * LN2.lo;
        assert!(close(exp_neg(LN2.hi), expected, 1e-30));
    }

    #[test]
    fn exp_is_multiplicative() {
        for &(a, b) in &[(0.125, 0.25), (0.75, 1.5), (3.0, 0.5), (10.0, 7.25)] {
            // dyadic inputs so that a + b is exact
            let lhs = exp_neg(a) * exp_neg(b);
            let rhs = exp_neg(a + b);
            assert!(close(lhs, rhs, 1e-29), "{a} {b}");
        }
    }

    #[test]
    fn ln_1p_one_is_ln2() {
        assert!(close(ln_1p(Dd::ONE), LN2, 1e-31));
    }

    #[test]
    fn ln_1p_inverts_exp() {
        // ln(1 + (e^{-a}... )) checked through ln(1 + t) with t = e^x - 1 for x = ln 1.5
        let t = Dd::from_f64(0.5);
        let y = ln_1p(t);
        // exp(-y) * 1.5 == 1
        let prod = exp_neg(y.hi) * Dd::from_f64(1.5);
        let corr = Dd::ONE - Dd::from_f64(y.lo);
        assert!(close(prod * corr, Dd::ONE, 1e-30));
    }

    #[test]
    fn softplus_agrees_with_f64() {
        for a in [0.0f64, 0.05, 0.25, 0.75, 1.5, 3.5, 20.0, 40.0] {
            let f = a + (-a).exp().ln_1p();
            let d = softplus(a).to_f64();
            assert!((d - f).abs() <= 4.0 * f64::EPSILON * f, "{a}: {d} vs {f}");
        }
        assert!(close(softplus(0.0), LN2, 1e-31));
    }
}
