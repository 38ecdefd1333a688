//! Binary fixed-point arithmetic on `BigInt` mantissas.
//!
//! A value is `raw * 2^-frac`. Transcendental functions run at
//! `frac + GUARD_BITS` and round back, so each returns a result within one
//! unit of the last place of the requested precision.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub(crate) const GUARD_BITS: u32 = 32;
const LN2_F64: f64 = std::f64::consts::LN_2;

/// `x * 2^e` without intermediate overflow for moderate `e`.
pub(crate) fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Nearest-ish `f64` to `raw * 2^-frac` (within one ulp).
pub(crate) fn raw_to_f64(raw: &BigInt, frac: u32) -> f64 {
    let bits = raw.bits();
    if bits <= 64 {
        return ldexp(raw.to_f64().unwrap_or(0.0), -(frac as i64));
    }
    let shift = bits - 64;
    let top = raw >> shift;
    ldexp(top.to_f64().unwrap_or(0.0), shift as i64 - frac as i64)
}

/// Exact decomposition `x = mantissa * 2^exponent` of a finite double.
pub(crate) fn decompose_f64(x: f64) -> (i64, i64) {
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 0 { 1 } else { -1 };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (m, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1i64 << 52), exp - 1075)
    };
    (sign * m, e)
}

/// `round(x * 2^frac)`; exact whenever `x` has no bits below `2^-frac`.
pub(crate) fn f64_to_raw(x: f64, frac: u32) -> BigInt {
    let (m, e) = decompose_f64(x);
    shift_round(&BigInt::from(m), e + frac as i64)
}

/// `round(v * 2^s)` for a signed shift `s`.
pub(crate) fn shift_round(v: &BigInt, s: i64) -> BigInt {
    if s >= 0 {
        v << (s as u64)
    } else {
        let s = (-s) as u64;
        let half = BigInt::one() << (s - 1);
        (v + half) >> s
    }
}

/// `round(q * 2^frac)`.
pub(crate) fn rational_to_raw(q: &BigRational, frac: u32) -> BigInt {
    let num = q.numer() << (frac as u64 + 1);
    let d = q.denom();
    let t = num / d;
    // t = floor-toward-zero of 2q*2^frac; halve with rounding.
    let adj = if t.sign() == Sign::Minus { t - 1 } else { t + 1 };
    adj / 2
}

/// Exact decimal expansion of `m * 2^-k`.
pub(crate) fn dyadic_to_decimal(m: &BigInt, k: u32) -> String {
    if k == 0 {
        return m.to_string();
    }
    let neg = m.is_negative();
    let scaled = m.abs() * num_traits::pow(BigInt::from(5u32), k as usize);
    let digits = scaled.to_string();
    let k = k as usize;
    let (int_part, frac_part) = if digits.len() > k {
        (digits[..digits.len() - k].to_string(), digits[digits.len() - k..].to_string())
    } else {
        ("0".to_string(), format!("{}{}", "0".repeat(k - digits.len()), digits))
    };
    let frac_part = frac_part.trim_end_matches('0');
    let mut s = String::new();
    if neg && !(int_part == "0" && frac_part.is_empty()) {
        s.push('-');
    }
    s.push_str(&int_part);
    if !frac_part.is_empty() {
        s.push('.');
        s.push_str(frac_part);
    }
    s
}

fn ln2_cache() -> &'static Mutex<HashMap<u32, Arc<BigInt>>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<BigInt>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `ln 2` at `prec` fractional bits, from `2 atanh(1/3)`.
pub(crate) fn ln2_raw(prec: u32) -> Arc<BigInt> {
    if let Some(v) = ln2_cache().lock().unwrap().get(&prec) {
        return v.clone();
    }
    let p = prec + 16;
    let mut term: BigInt = (BigInt::one() << (p as u64 + 1)) / 3;
    let mut sum = term.clone();
    let mut k = 1u32;
    loop {
        term /= 9;
        if term.is_zero() {
            break;
        }
        sum += &term / (2 * k + 1);
        k += 1;
    }
    let v = Arc::new(shift_round(&sum, -16));
    ln2_cache().lock().unwrap().insert(prec, v.clone());
    v
}

/// Fixed-point context at `frac` fractional bits.
#[derive(Clone, Debug)]
pub struct FixedCtx {
    frac: u32,
    work: u32,
    ln2_work: Arc<BigInt>,
}

impl FixedCtx {
    pub fn new(frac: u32) -> Self {
        let work = frac + GUARD_BITS;
        FixedCtx {
            frac,
            work,
            ln2_work: ln2_raw(work),
        }
    }

    pub fn frac(&self) -> u32 {
        self.frac
    }

    fn widen(&self, x: &BigInt) -> BigInt {
        x << GUARD_BITS as u64
    }

    fn narrow(&self, x: &BigInt) -> BigInt {
        shift_round(x, -(GUARD_BITS as i64))
    }

    pub fn exp(&self, x: &BigInt) -> BigInt {
        self.narrow(&self.exp_work(&self.widen(x)))
    }

    /// Natural log of a positive value.
    pub fn ln(&self, x: &BigInt) -> BigInt {
        assert!(x.is_positive(), "ln of non-positive fixed-point value");
        self.narrow(&self.ln_work(&self.widen(x)))
    }

    /// `ln(1 - v)` for `0 <= v < 1`.
    pub fn ln_1m(&self, v: &BigInt) -> BigInt {
        let w = (BigInt::one() << self.work as u64) - self.widen(v);
        assert!(w.is_positive(), "ln_1m argument must be below one");
        self.narrow(&self.ln_work(&w))
    }

    /// Natural log of a positive rational.
    pub fn ln_rational(&self, q: &BigRational) -> BigInt {
        assert!(q.is_positive());
        let a = self.ln_integer_work(q.numer());
        let b = self.ln_integer_work(q.denom());
        self.narrow(&(a - b))
    }

    /// `ln((s -/+ sqrt(disc)) / 2)`; the smaller root goes through the
    /// product of the roots so it keeps full relative accuracy.
    pub fn ln_quadratic_root(&self, sum: &BigRational, disc: &BigRational, larger: bool) -> BigInt {
        let w = self.work;
        let s = rational_to_raw(sum, w);
        let d = rational_to_raw(disc, 2 * w).sqrt();
        let big = (&s + &d) >> 1u32;
        let y = if larger {
            big
        } else {
            let four = BigRational::from_integer(BigInt::from(4));
            let product = (sum * sum - disc) / four;
            rational_to_raw(&product, 2 * w) / &big
        };
        self.narrow(&self.ln_work(&y))
    }

    fn ln_integer_work(&self, n: &BigInt) -> BigInt {
        let w = self.work as u64;
        let bits = n.bits();
        // n = m * 2^(bits-1), m in [1,2) at `work` bits.
        let e = bits as i64 - 1;
        let m = if bits > w + 1 {
            n >> (bits - 1 - w)
        } else {
            n << (w + 1 - bits)
        };
        self.ln_mantissa(&m) + &*self.ln2_work * e
    }

    fn ln_work(&self, y: &BigInt) -> BigInt {
        let w = self.work as i64;
        let e = y.bits() as i64 - 1 - w;
        let m = shift_round(y, -e);
        self.ln_mantissa(&m) + &*self.ln2_work * e
    }

    /// `ln m` for `m` in roughly `[1, 2]` at work precision, by Newton's
    /// method on `exp(z) = m` from a double-precision start.
    fn ln_mantissa(&self, m: &BigInt) -> BigInt {
        let w = self.work;
        let one = BigInt::one() << w as u64;
        let mf = raw_to_f64(m, w);
        let mut z = f64_to_raw(mf.ln(), w);
        let mut good = 48u32;
        while good < w + 8 {
            let e = self.exp_work(&-&z);
            z = z + ((m * e) >> w as u64) - &one;
            good *= 2;
        }
        z
    }

    /// `exp(x)` at work precision, for `x <= 64`.
    fn exp_work(&self, x: &BigInt) -> BigInt {
        let w = self.work;
        let xf = raw_to_f64(x, w);
        assert!(xf <= 64.0, "fixed-point exp argument out of range: {xf}");
        if xf < -((w as f64) + 4.0) * LN2_F64 {
            return BigInt::zero();
        }
        let k = (xf / LN2_F64).round() as i64;
        let r = x - &*self.ln2_work * k;
        // r * 2^-s reinterpreted at precision w + s.
        let s: u32 = 12;
        let p = (w + s) as u64;
        let mut term = r.clone();
        let mut sum = r.clone();
        let mut i = 2u32;
        loop {
            term = (&term * &r) >> p;
            term /= i;
            if term.is_zero() {
                break;
            }
            sum += &term;
            i += 1;
        }
        // expm1 doubling: (1+m)^2 - 1 = 2m + m^2.
        for _ in 0..s {
            let sq = (&sum * &sum) >> p;
            sum = (sum << 1u32) + sq;
        }
        let e = (BigInt::one() << p) + sum;
        let e = shift_round(&e, -(s as i64));
        if k >= 0 {
            e << k as u64
        } else {
            shift_round(&e, k)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln2_digits() {
        let v = ln2_raw(200);
        let f = raw_to_f64(&v, 200);
        assert_eq!(f, LN2_F64);
        // ln 2 = 0.693147180559945309417232121458176568075500134360255254120680...
        let s = dyadic_to_decimal(&v, 200);
        assert!(s.starts_with("0.6931471805599453094172321214581765680755001343602552541206"), "{s}");
    }
}
