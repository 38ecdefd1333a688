//! Precision tiers for log-space arithmetic.
//!
//! Every tier obeys the same error model: an elementary operation returns a
//! value within `K * eps * max(1, |result|)` of the exact result on its
//! (already rounded) inputs, with `K` = [`K_ARITH`] for additions and
//! [`K_TRANS`] for `exp`/`ln`. Fixed point is absolute-accurate and floating
//! point relative-accurate; both satisfy this bound.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::dd::Dd;
use super::fixed::{
    decompose_f64, dyadic_to_decimal, f64_to_raw, raw_to_f64, rational_to_raw, shift_round,
    FixedCtx,
};
use super::kernel::Pt;
use super::LogRepr;

pub(crate) const K_ARITH: f64 = 4.0;
pub(crate) const K_TRANS: f64 = 64.0;

pub(crate) trait Arith: Clone + Send + Sync + 'static {
    type V: Clone + Send + Sync + fmt::Debug + PartialEq + 'static;

    fn bits(&self) -> u32;
    fn eps(&self) -> f64;
    fn zero(&self) -> Self::V;
    fn from_raw(&self, raw: &BigInt, frac: u32) -> Self::V;
    fn from_rational(&self, q: &BigRational) -> Self::V;
    fn to_f64(&self, v: &Self::V) -> f64;
    fn to_rational(&self, v: &Self::V) -> BigRational;
    fn add(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn exp(&self, a: &Self::V) -> Self::V;
    fn ln(&self, a: &Self::V) -> Self::V;
    fn ln_1m(&self, a: &Self::V) -> Self::V;
    fn cmp(&self, a: &Self::V, b: &Self::V) -> Ordering;

    fn wrap(&self, pt: Pt<Self::V>) -> LogRepr;
    fn unwrap(r: &LogRepr) -> Option<&Pt<Self::V>>;

    fn double(&self, a: &Self::V) -> Self::V {
        self.add(a, a)
    }

    fn to_decimal(&self, v: &Self::V) -> String {
        rational_to_decimal(&self.to_rational(v))
    }
}

/// Exact decimal string of a dyadic rational.
pub(crate) fn rational_to_decimal(q: &BigRational) -> String {
    let d = q.denom();
    let k = d.bits() - 1;
    debug_assert!(*d == BigInt::one() << k, "not a dyadic rational");
    dyadic_to_decimal(q.numer(), k as u32)
}

fn f64_to_rational(x: f64) -> BigRational {
    let (m, e) = decompose_f64(x);
    if e >= 0 {
        BigRational::from_integer(BigInt::from(m) << e as u64)
    } else {
        BigRational::new(BigInt::from(m), BigInt::one() << (-e) as u64)
    }
}

/// IEEE double precision.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct F64Arith;

impl Arith for F64Arith {
    type V = f64;

    fn bits(&self) -> u32 {
        53
    }
    fn eps(&self) -> f64 {
        f64::EPSILON / 2.0
    }
    fn zero(&self) -> f64 {
        0.0
    }
    fn from_raw(&self, raw: &BigInt, frac: u32) -> f64 {
        raw_to_f64(raw, frac)
    }
    fn from_rational(&self, q: &BigRational) -> f64 {
        raw_to_f64(&rational_to_raw(q, 1100), 1100)
    }
    fn to_f64(&self, v: &f64) -> f64 {
        *v
    }
    fn to_rational(&self, v: &f64) -> BigRational {
        f64_to_rational(*v)
    }
    #[inline]
    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    #[inline]
    fn sub(&self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    #[inline]
    fn exp(&self, a: &f64) -> f64 {
        a.exp()
    }
    #[inline]
    fn ln(&self, a: &f64) -> f64 {
        a.ln()
    }
    #[inline]
    fn ln_1m(&self, a: &f64) -> f64 {
        (-a).ln_1p()
    }
    fn cmp(&self, a: &f64, b: &f64) -> Ordering {
        a.partial_cmp(b).unwrap_or(Ordering::Equal)
    }
    fn wrap(&self, pt: Pt<f64>) -> LogRepr {
        LogRepr::Double(pt)
    }
    fn unwrap(r: &LogRepr) -> Option<&Pt<f64>> {
        match r {
            LogRepr::Double(p) => Some(p),
            _ => None,
        }
    }
}

/// Double-double, about 106 significant bits.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct DdArith;

impl Arith for DdArith {
    type V = Dd;

    fn bits(&self) -> u32 {
        106
    }
    fn eps(&self) -> f64 {
        // Two bits below the nominal significand for the renormalisation slack.
        2f64.powi(-104)
    }
    fn zero(&self) -> Dd {
        Dd::ZERO
    }
    fn from_raw(&self, raw: &BigInt, frac: u32) -> Dd {
        let hi = raw_to_f64(raw, frac);
        let rem = raw - f64_to_raw(hi, frac);
        Dd::new(hi, raw_to_f64(&rem, frac))
    }
    fn from_rational(&self, q: &BigRational) -> Dd {
        self.from_raw(&rational_to_raw(q, 1200), 1200)
    }
    fn to_f64(&self, v: &Dd) -> f64 {
        v.to_f64()
    }
    fn to_rational(&self, v: &Dd) -> BigRational {
        f64_to_rational(v.hi) + f64_to_rational(v.lo)
    }
    #[inline]
    fn add(&self, a: &Dd, b: &Dd) -> Dd {
        a.add(*b)
    }
    #[inline]
    fn sub(&self, a: &Dd, b: &Dd) -> Dd {
        a.sub(*b)
    }
    fn exp(&self, a: &Dd) -> Dd {
        a.exp()
    }
    fn ln(&self, a: &Dd) -> Dd {
        a.ln()
    }
    fn ln_1m(&self, a: &Dd) -> Dd {
        a.ln_1m()
    }
    fn cmp(&self, a: &Dd, b: &Dd) -> Ordering {
        a.cmp(*b)
    }
    fn wrap(&self, pt: Pt<Dd>) -> LogRepr {
        LogRepr::DoubleDouble(pt)
    }
    fn unwrap(r: &LogRepr) -> Option<&Pt<Dd>> {
        match r {
            LogRepr::DoubleDouble(p) => Some(p),
            _ => None,
        }
    }
}

/// Arbitrary precision binary fixed point.
#[derive(Clone, Debug)]
pub(crate) struct FixedArith {
    ctx: FixedCtx,
}

impl FixedArith {
    pub(crate) fn new(frac: u32) -> Self {
        FixedArith {
            ctx: FixedCtx::new(frac),
        }
    }
}

impl Arith for FixedArith {
    type V = BigInt;

    fn bits(&self) -> u32 {
        self.ctx.frac()
    }
    fn eps(&self) -> f64 {
        2f64.powi(-(self.ctx.frac() as i32))
    }
    fn zero(&self) -> BigInt {
        BigInt::zero()
    }
    fn from_raw(&self, raw: &BigInt, frac: u32) -> BigInt {
        shift_round(raw, self.ctx.frac() as i64 - frac as i64)
    }
    fn from_rational(&self, q: &BigRational) -> BigInt {
        rational_to_raw(q, self.ctx.frac())
    }
    fn to_f64(&self, v: &BigInt) -> f64 {
        raw_to_f64(v, self.ctx.frac())
    }
    fn to_rational(&self, v: &BigInt) -> BigRational {
        BigRational::new(v.clone(), BigInt::one() << self.ctx.frac() as u64)
    }
    fn add(&self, a: &BigInt, b: &BigInt) -> BigInt {
        a + b
    }
    fn sub(&self, a: &BigInt, b: &BigInt) -> BigInt {
        a - b
    }
    fn exp(&self, a: &BigInt) -> BigInt {
        self.ctx.exp(a)
    }
    fn ln(&self, a: &BigInt) -> BigInt {
        self.ctx.ln(a)
    }
    fn ln_1m(&self, a: &BigInt) -> BigInt {
        self.ctx.ln_1m(a)
    }
    fn cmp(&self, a: &BigInt, b: &BigInt) -> Ordering {
        a.cmp(b)
    }
    fn wrap(&self, pt: Pt<BigInt>) -> LogRepr {
        LogRepr::Fixed {
            frac: self.ctx.frac(),
            pt,
        }
    }
    fn unwrap(r: &LogRepr) -> Option<&Pt<BigInt>> {
        match r {
            LogRepr::Fixed { pt, .. } => Some(pt),
            _ => None,
        }
    }
}

/// Runtime tier selection for a requested number of working bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Tier {
    Double,
    DoubleDouble,
    Fixed(u32),
}

impl Tier {
    pub(crate) fn for_bits(bits: u32) -> Tier {
        match bits {
            0..=53 => Tier::Double,
            54..=106 => Tier::DoubleDouble,
            b => Tier::Fixed(b),
        }
    }

    pub(crate) fn bits(self) -> u32 {
        match self {
            Tier::Double => 53,
            Tier::DoubleDouble => 106,
            Tier::Fixed(b) => b,
        }
    }

    /// The tier used when a computation at `self` has to be redone.
    pub(crate) fn escalated(self) -> Tier {
        Tier::for_bits(self.bits() * 2)
    }
}
