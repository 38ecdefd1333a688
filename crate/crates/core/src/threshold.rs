//! Thresholds on the log of the sup-norm.
//!
//! Radii of interest are far beyond what a decimal can spell out, so a
//! threshold is kept symbolically and evaluated at whatever precision a
//! comparison needs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::fixed::{rational_to_raw, FixedCtx};
use crate::variety::{format_rational, parse_rational};

/// Largest precision tried when certifying a comparison.
pub const MAX_COMPARE_BITS: u32 = 1 << 14;

/// Largest `t` accepted in `exp:t`.
pub const MAX_EXP_ARGUMENT: i64 = 60;

/// A log-scale threshold `t`; the ball it bounds is `max x_i <= e^t`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LogBound {
    /// `t` given directly.
    Value(BigRational),
    /// `t = ln R` for an exact radius `R > 0`.
    LnOf(BigRational),
    /// `t = e^s`.
    ExpOf(BigRational),
    /// `t = ln sqrt(2 sinh(L/2))`, the coordinate bound for geodesic length `L`.
    GeodesicLength(BigRational),
}

impl LogBound {
    pub fn ln_of_integer(r: i64) -> LogBound {
        LogBound::LnOf(BigRational::from_integer(r.into()))
    }

    /// The threshold whose value is exactly the double `t`.
    pub fn from_f64(t: f64) -> Result<LogBound> {
        BigRational::from_float(t)
            .map(LogBound::Value)
            .ok_or_else(|| Error::InvalidArgument(format!("threshold must be finite, got {t}")))
    }

    /// Parses `"6.5"`, `"ln:100"`, `"exp:7"` or `"len:12.5"`.
    pub fn parse(s: &str) -> Result<LogBound> {
        let s = s.trim();
        let b = if let Some(r) = s.strip_prefix("ln:") {
            LogBound::LnOf(parse_rational(r)?)
        } else if let Some(r) = s.strip_prefix("exp:") {
            LogBound::ExpOf(parse_rational(r)?)
        } else if let Some(r) = s.strip_prefix("len:") {
            LogBound::GeodesicLength(parse_rational(r)?)
        } else {
            LogBound::Value(parse_rational(s)?)
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        match self {
            LogBound::LnOf(r) if !r.is_positive() => Err(Error::InvalidArgument(format!(
                "radius must be positive, got {}",
                format_rational(r)
            ))),
            LogBound::ExpOf(t) if *t > BigRational::from_integer(MAX_EXP_ARGUMENT.into()) => {
                Err(Error::InvalidArgument(format!(
                    "exp:{} exceeds the supported range (at most exp:{MAX_EXP_ARGUMENT})",
                    format_rational(t)
                )))
            }
            LogBound::GeodesicLength(l) if !l.is_positive() => {
                Err(Error::NonPositiveLength(l.to_f64().unwrap_or(f64::NAN)))
            }
            _ => Ok(()),
        }
    }

    /// The exact radius `R` when the threshold is `ln R`.
    pub fn exact_radius(&self) -> Option<&BigRational> {
        match self {
            LogBound::LnOf(r) => Some(r),
            _ => None,
        }
    }

    /// Nearest-ish double to the threshold.
    pub fn to_f64(&self) -> f64 {
        match self {
            LogBound::Value(q) => q.to_f64().unwrap_or(f64::NAN),
            LogBound::LnOf(r) => ln_rational_f64(r),
            LogBound::ExpOf(t) => t.to_f64().unwrap_or(f64::NAN).exp(),
            LogBound::GeodesicLength(l) => {
                let l = l.to_f64().unwrap_or(f64::NAN);
                l / 4.0 + 0.5 * (-(-l).exp_m1()).ln()
            }
        }
    }

    /// `round(t * 2^frac)` up to two units in the last place.
    pub(crate) fn eval_raw(&self, frac: u32) -> BigInt {
        let ctx = FixedCtx::new(frac);
        match self {
            LogBound::Value(q) => rational_to_raw(q, frac),
            LogBound::LnOf(r) => ctx.ln_rational(r),
            LogBound::ExpOf(t) => {
                // exp amplifies the rounding of t by e^t, so work wider.
                let extra = 96;
                let wide = FixedCtx::new(frac + extra);
                let v = wide.exp(&rational_to_raw(t, frac + extra));
                crate::numerics::fixed::shift_round(&v, -(extra as i64))
            }
            LogBound::GeodesicLength(l) => {
                let extra = 32 + l.to_f64().map_or(0, |x| if x < 1.0 { (-x.log2()).ceil() as u32 } else { 0 });
                let p = frac + extra;
                let wide = FixedCtx::new(p);
                let lr = rational_to_raw(l, p);
                let v = wide.exp(&-&lr);
                let g = wide.ln_1m(&v);
                let t = (lr >> 2u32) + (g >> 1u32);
                crate::numerics::fixed::shift_round(&t, -(extra as i64))
            }
        }
    }

    /// Compares `ln x` with the threshold, certified.
    pub fn cmp_ln(&self, x: &BigRational) -> Result<Ordering> {
        if let LogBound::LnOf(r) = self {
            return Ok(x.cmp(r));
        }
        if x.is_one() {
            if let LogBound::Value(q) = self {
                return Ok(BigRational::zero().cmp(q));
            }
        }
        let mut bits = 64;
        while bits <= MAX_COMPARE_BITS {
            let l = FixedCtx::new(bits).ln_rational(x);
            let d = l - self.eval_raw(bits);
            if d > BigInt::from(4) {
                return Ok(Ordering::Greater);
            }
            if d < BigInt::from(-4) {
                return Ok(Ordering::Less);
            }
            bits *= 2;
        }
        Err(Error::Undecidable {
            bits: MAX_COMPARE_BITS,
        })
    }

    /// Orders two thresholds, certified.
    pub fn cmp_bound(&self, other: &LogBound) -> Result<Ordering> {
        if let (Some(a), Some(b)) = (self.exact_radius(), other.exact_radius()) {
            return Ok(a.cmp(b));
        }
        if let (LogBound::Value(a), LogBound::Value(b)) = (self, other) {
            return Ok(a.cmp(b));
        }
        if self == other {
            return Ok(Ordering::Equal);
        }
        let mut bits = 64;
        while bits <= MAX_COMPARE_BITS {
            let d = self.eval_raw(bits) - other.eval_raw(bits);
            if d > BigInt::from(4) {
                return Ok(Ordering::Greater);
            }
            if d < BigInt::from(-4) {
                return Ok(Ordering::Less);
            }
            bits *= 2;
        }
        Err(Error::Undecidable {
            bits: MAX_COMPARE_BITS,
        })
    }
}

/// `ln r` as a double, also for rationals outside the double range.
pub(crate) fn ln_rational_f64(r: &BigRational) -> f64 {
    match r.to_f64() {
        Some(x) if x.is_finite() && x > 0.0 => x.ln(),
        _ => {
            // Out of double range: scale by the bit lengths first.
            let nb = r.numer().bits() as i64;
            let db = r.denom().bits() as i64;
            let n = crate::numerics::fixed::raw_to_f64(r.numer(), (nb - 1).max(0) as u32);
            let d = crate::numerics::fixed::raw_to_f64(r.denom(), (db - 1).max(0) as u32);
            n.ln() - d.ln() + (nb - db) as f64 * std::f64::consts::LN_2
        }
    }
}

impl fmt::Display for LogBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogBound::Value(q) => write!(f, "{}", format_rational(q)),
            LogBound::LnOf(r) => write!(f, "ln:{}", format_rational(r)),
            LogBound::ExpOf(t) => write!(f, "exp:{}", format_rational(t)),
            LogBound::GeodesicLength(l) => write!(f, "len:{}", format_rational(l)),
        }
    }
}

impl FromStr for LogBound {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LogBound::parse(s)
    }
}

impl Serialize for LogBound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LogBound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LogBound::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fixed::raw_to_f64;

    fn q(x: i64) -> BigRational {
        BigRational::from_integer(x.into())
    }

    #[test]
    fn parse_notations() {
        assert_eq!(LogBound::parse("ln:100").unwrap(), LogBound::LnOf(q(100)));
        assert_eq!(LogBound::parse("exp:3").unwrap(), LogBound::ExpOf(q(3)));
        assert_eq!(
            LogBound::parse("4.5").unwrap(),
            LogBound::Value(BigRational::new(9.into(), 2.into()))
        );
        assert!(LogBound::parse("ln:0").is_err());
        assert!(LogBound::parse("ln:-3").is_err());
        assert!(LogBound::parse("exp:61").is_err());
        assert!(LogBound::parse("bogus").is_err());
        for s in ["ln:100", "exp:3/2", "7/3", "len:12"] {
            assert_eq!(LogBound::parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn values() {
        assert!((LogBound::ln_of_integer(100).to_f64() - 100f64.ln()).abs() < 1e-15);
        assert!((LogBound::parse("exp:2").unwrap().to_f64() - 2f64.exp()).abs() < 1e-14);
        for b in ["ln:22", "exp:2", "len:12", "len:1/1000", "3.25"] {
            let b = LogBound::parse(b).unwrap();
            let hi = raw_to_f64(&b.eval_raw(200), 200);
            assert!((hi - b.to_f64()).abs() < 1e-13 * hi.abs().max(1.0), "{b}");
        }
    }

    #[test]
    fn certified_comparisons() {
        let t = LogBound::ln_of_integer(22);
        assert_eq!(t.cmp_ln(&q(22)).unwrap(), Ordering::Equal);
        assert_eq!(t.cmp_ln(&q(23)).unwrap(), Ordering::Greater);
        let v = LogBound::from_f64(22f64.ln()).unwrap();
        // The double nearest ln 22 lies above it by about 2e-16.
        assert_eq!(v.cmp_ln(&q(22)).unwrap(), Ordering::Less);
        assert_eq!(LogBound::Value(q(0)).cmp_ln(&q(1)).unwrap(), Ordering::Equal);
        assert_eq!(
            LogBound::parse("exp:1").unwrap().cmp_bound(&LogBound::ln_of_integer(15)).unwrap(),
            Ordering::Greater
        );
    }
}
