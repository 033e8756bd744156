//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`s,
//! good to roughly 32 significant digits.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        assert!(self.hi < 709.0, "exp overflow");
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from_f64(k)).ldexp(-10);
        // Taylor series of exp(r) - 1 with |r| < 4e-4
        let mut term = r;
        let mut sum = r;
        for n in 2..=14 {
            term = term * r / Dd::from_f64(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + s)^2 - 1 = s (2 + s), applied ten times
        for _ in 0..10 {
            sum = sum * (sum + Dd::from_f64(2.0));
        }
        (sum + Dd::ONE).ldexp(k as i32)
    }

    pub fn ln(self) -> Self {
        assert!(self.hi > 0.0, "ln of non-positive value");
        let mut y = Dd::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn tanh(self) -> Self {
        if self.hi.abs() > 40.0 {
            return Dd::from_f64(self.hi.signum());
        }
        let e = (self + self).exp();
        (e - Dd::ONE) / (e + Dd::ONE)
    }

    pub fn sigmoid(self) -> Self {
        Dd::ONE / (Dd::ONE + (-self).exp())
    }

    pub fn max(self, other: Dd) -> Dd {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Dd) -> Dd {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::renorm(s, e + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        Dd::renorm(q1, q2) + Dd::from_f64(q3)
    }
}

impl std::iter::Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Dd, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn constants_and_identities() {
        // ln 2 and e to full double-double precision
        let two = Dd::from_f64(2.0);
        let l = two.ln();
        assert!((l - LN2).hi.abs() < 1e-31);
        let e = Dd::ONE.exp();
        // e = 2.718281828459045 + 1.4456468917292502e-16
        let expected = Dd {
            hi: std::f64::consts::E,
            lo: 1.445_646_891_729_250_2e-16,
        };
        assert!((e - expected).hi.abs() < 1e-30);
        let third = Dd::ONE / Dd::from_f64(3.0);
        assert!((third * Dd::from_f64(3.0) - Dd::ONE).hi.abs() < 1e-31);
    }

    #[test]
    fn exp_ln_round_trip_beyond_f64() {
        for x in [-30.0, -2.5, -1e-3, 1e-9, 0.7, 5.0, 20.0] {
            let d = Dd::from_f64(x);
            let back = d.exp().ln();
            assert!((back - d).hi.abs() < 1e-29 * x.abs().max(1.0), "{x}");
        }
    }

    proptest! {
        #[test]
        fn agrees_with_f64_functions(x in -20.0f64..20.0) {
            let d = Dd::from_f64(x);
            prop_assert!(close(d.exp(), x.exp(), 1e-15));
            prop_assert!(close(d.tanh(), x.tanh(), 1e-15));
            prop_assert!(close(d.sigmoid(), 1.0 / (1.0 + (-x).exp()), 1e-15));
            if x > 0.0 {
                prop_assert!(close(d.ln(), x.ln(), 1e-15));
            }
        }

        #[test]
        fn tanh_is_odd_and_bounded(x in -50.0f64..50.0) {
            let d = Dd::from_f64(x);
            prop_assert!(d.tanh().to_f64().abs() <= 1.0);
            prop_assert!((d.tanh() + (-d).tanh()).hi.abs() < 1e-30);
        }
    }
}
