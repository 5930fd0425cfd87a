//! Double-double arithmetic for the finite-difference oracles.
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`, giving
//! roughly 106 bits of significand. Only what the loss evaluators need is
//! provided.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

/// Argument halvings before the Taylor series in [`Dd::exp`].
const EXP_SQUARINGS: i32 = 10;

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

    fn norm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    fn scale_pow2(self, e: i32) -> Dd {
        let s = 2f64.powi(e);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn square(self) -> Dd {
        self * self
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd {
                hi: f64::INFINITY,
                lo: 0.0,
            };
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from(k)).scale_pow2(-EXP_SQUARINGS);
        // |r| < 3.4e-4 here, so 12 terms are far below the working precision.
        let mut sum = Dd::ONE;
        let mut term = Dd::ONE;
        for n in 1..=12 {
            term = term * r / Dd::from(f64::from(n));
            sum = sum + term;
        }
        for _ in 0..EXP_SQUARINGS {
            sum = sum.square();
        }
        // Two steps so 2^k never overflows on its own.
        let k = k as i32;
        sum.scale_pow2(k / 2).scale_pow2(k - k / 2)
    }

    pub fn tanh(self) -> Dd {
        let e = (Dd::from(-2.0) * self.abs()).exp();
        let t = (Dd::ONE - e) / (Dd::ONE + e);
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }

    pub fn sigmoid(self) -> Dd {
        if self.hi >= 0.0 {
            Dd::ONE / (Dd::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Dd::ONE + e)
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
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

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
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
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, hi: f64, lo: f64, tol: f64) {
        let err = ((a.hi - hi) + (a.lo - lo)).abs();
        assert!(err <= tol, "{a:?} vs ({hi:e}, {lo:e}): {err:e}");
    }

    // Reference pairs were produced with 50-digit arithmetic.
    #[test]
    fn exp_matches_reference() {
        let cases = [
            (1.0, std::f64::consts::E, 1.4456468917292502e-16),
            (-0.6, 0.5488116360940264, 5.544922837237713e-17),
            (5.0, 148.4131591025766, 3.4863514900464198e-15),
            (-30.0, 9.357622968840175e-14, -2.1170146272646406e-30),
            (1e-7, 1.000000100000005, 5.663213610791383e-17),
            (0.3, 1.3498588075760032, -9.447314673432387e-17),
            (700.0, 1.0142320547350045e304, 1.6666571920734673e287),
        ];
        for (x, hi, lo) in cases {
            close(Dd::from(x).exp(), hi, lo, 1e-27 * hi);
        }
    }

    // Absolute accuracy is what the difference quotient needs.
    #[test]
    fn tanh_matches_reference() {
        let cases = [
            (0.3, 0.2913126124515909, -6.4602656586469586e-18),
            (1e-7, 9.999999999999966e-08, -2.4610883121208847e-24),
            (-2.5, -0.9866142981514303, 2.4529238788172874e-17),
            (20.0, 1.0, -8.496708510583178e-18),
        ];
        for (x, hi, lo) in cases {
            close(Dd::from(x).tanh(), hi, lo, 1e-29);
        }
    }

    #[test]
    fn arithmetic_is_exact_beyond_f64() {
        let third = Dd::ONE / Dd::from(3.0);
        let back = third * Dd::from(3.0);
        assert!((back - Dd::ONE).to_f64().abs() < 1e-31);
        let tiny = Dd::from(1.0) + Dd::from(1e-20);
        assert_eq!((tiny - Dd::ONE).to_f64(), 1e-20);
        assert!(Dd::from(0.5).sigmoid().to_f64() > 0.62);
        assert!(
            (Dd::from(-3.0).sigmoid() + Dd::from(3.0).sigmoid() - Dd::ONE)
                .to_f64()
                .abs()
                < 1e-31
        );
    }
}
