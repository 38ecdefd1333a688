//! Double-double arithmetic: an unevaluated sum `hi + lo` of two doubles
//! with `|lo| <= ulp(hi) / 2`, giving about 106 bits of significand.

use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1
const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    #[allow(clippy::excessive_precision)]
    lo: 2.319_046_813_846_299_558e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn new(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }

    pub fn sub(self, b: Dd) -> Dd {
        self.add(b.neg())
    }

    pub fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let (p1, p2) = two_prod(q1, b);
        let (s, e) = two_sum(self.hi, -p1);
        let e = e - p2 + self.lo;
        let q2 = (s + e) / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    /// Exact scaling by a power of two.
    pub fn ldexp(self, e: i32) -> Dd {
        let f = 2f64.powi(e);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn cmp(self, b: Dd) -> Ordering {
        match self.hi.partial_cmp(&b.hi) {
            Some(Ordering::Equal) | None => self.lo.partial_cmp(&b.lo).unwrap_or(Ordering::Equal),
            Some(o) => o,
        }
    }

    /// `exp(x)`; arguments below about -745 flush to zero.
    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        assert!(self.hi < 709.0, "double-double exp overflow");
        let k = (self.hi / LN2.hi).round();
        let r = self.sub(LN2.mul_f64(k)).ldexp(-9);
        // expm1(r) by Taylor series; |r| < 7e-4 so ten terms reach 2^-106.
        let mut term = r;
        let mut sum = r;
        for i in 2..=12 {
            term = term.mul(r).div_f64(i as f64);
            sum = sum.add(term);
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..9 {
            sum = sum.mul_f64(2.0).add(sum.mul(sum));
        }
        let e = sum.add(Dd::ONE);
        // k may push the scale past the f64 exponent range in one step.
        let k = k as i32;
        if k < -1000 {
            e.ldexp(-1000).ldexp(k + 1000)
        } else {
            e.ldexp(k)
        }
    }

    /// `ln(x)` for `x > 0`, one Newton step from the double-precision log.
    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0, "double-double ln of non-positive value");
        let x = Dd::from_f64(self.hi.ln());
        x.add(self.mul(x.neg().exp())).sub(Dd::ONE)
    }

    /// `ln(1 - v)` for `0 <= v < 1`.
    pub fn ln_1m(self) -> Dd {
        let w = Dd::ONE.sub(self);
        if self.hi < 1e-3 {
            // Refine through log1p so small arguments keep full relative accuracy.
            let x = Dd::from_f64((-self.hi - self.lo).ln_1p());
            return x.add(w.mul(x.neg().exp())).sub(Dd::ONE);
        }
        w.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_ln_roundtrip() {
        for &x in &[0.5, 1.0, 2.0, 6.0, 22.0, 1e-3, 123.456] {
            let d = Dd::from_f64(x);
            let back = d.ln().exp();
            let err = back.sub(d).to_f64().abs() / x;
            assert!(err < 1e-30, "x={x} err={err}");
        }
    }

    #[test]
    fn ln2_and_e() {
        let l = Dd::from_f64(2.0).ln();
        assert!(l.sub(LN2).to_f64().abs() < 1e-31);
        let e = Dd::ONE.exp();
        // e = 2.718281828459045 + 1.445646891729250158e-16
        assert!((e.hi - std::f64::consts::E).abs() == 0.0);
        assert!((e.lo - 1.445_646_891_729_250_2e-16).abs() < 1e-30);
    }

    #[test]
    fn ln_1m_small() {
        let v = Dd::from_f64(1e-20);
        let g = v.ln_1m();
        // ln(1 - 1e-20) = -1e-20 - 5e-41
        assert!((g.to_f64() + 1e-20).abs() < 1e-35);
    }
}
