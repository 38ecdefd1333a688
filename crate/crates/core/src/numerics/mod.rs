//! Orbit points in log coordinates with certified error bounds.
//!
//! Coordinates of deep orbit points have millions of digits, so the
//! enumeration works with their natural logs instead. Each [`LogPoint`]
//! carries an absolute bound on the error of every stored log, and
//! comparisons against thresholds only answer when that bound allows it.

pub(crate) mod dd;
pub(crate) mod fixed;
pub(crate) mod kernel;
pub(crate) mod tier;

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::variety::{parse_rational, ExactPoint, MoveIndex, QuadraticRoot, VarietyParams};

use dd::Dd;
use fixed::FixedCtx;
use kernel::{KernelFail, Logs, MoveCtx, Pt};
use tier::{Arith, Tier, K_ARITH};

/// Working precision and error budget for log-space arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrecisionConfig {
    working_bits: u32,
    max_err: f64,
}

impl PrecisionConfig {
    pub const DEFAULT_BITS: u32 = 128;
    pub const DEFAULT_MAX_ERR: f64 = 1e-6;
    /// Largest accepted working precision.
    pub const MAX_BITS: u32 = 1 << 16;

    pub fn new(working_bits: u32, max_err: f64) -> Result<Self> {
        if !(53..=Self::MAX_BITS).contains(&working_bits) {
            return Err(Error::InvalidArgument(format!(
                "working precision must be between 53 and {} bits, got {working_bits}",
                Self::MAX_BITS
            )));
        }
        if !(max_err > 0.0 && max_err.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "error budget must be positive, got {max_err}"
            )));
        }
        Ok(PrecisionConfig {
            working_bits,
            max_err,
        })
    }

    pub fn with_bits(working_bits: u32) -> Result<Self> {
        Self::new(working_bits, Self::DEFAULT_MAX_ERR)
    }

    pub fn working_bits(&self) -> u32 {
        self.working_bits
    }

    pub fn max_err(&self) -> f64 {
        self.max_err
    }

    pub(crate) fn tier(&self) -> Tier {
        Tier::for_bits(self.working_bits)
    }
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig {
            working_bits: Self::DEFAULT_BITS,
            max_err: Self::DEFAULT_MAX_ERR,
        }
    }
}

/// Outcome of comparing a point's largest log against a threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    /// Certainly at or below the threshold.
    Below,
    /// Certainly above the threshold.
    Above,
    /// The error bound straddles the threshold.
    Indeterminate,
}

/// A positive real coordinate known exactly: a rational, or a quadratic
/// irrationality arising from completing a partial tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RealCoordinate {
    Rational(BigRational),
    Root(QuadraticRoot),
}

impl RealCoordinate {
    pub fn as_rational(&self) -> Option<BigRational> {
        match self {
            RealCoordinate::Rational(q) => Some(q.clone()),
            RealCoordinate::Root(r) => r.as_rational(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            RealCoordinate::Rational(q) => q.to_f64().unwrap_or(f64::NAN),
            RealCoordinate::Root(r) => r.to_f64(),
        }
    }

    /// `ln` of the coordinate, rounded to `frac` fractional bits.
    pub(crate) fn ln_raw(&self, ctx: &FixedCtx) -> BigInt {
        if let Some(q) = self.as_rational() {
            return ctx.ln_rational(&q);
        }
        match self {
            RealCoordinate::Root(r) => ctx.ln_quadratic_root(
                r.sum(),
                r.discriminant(),
                r.choice() == crate::variety::RootChoice::Larger,
            ),
            RealCoordinate::Rational(_) => unreachable!(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LogRepr {
    Double(Pt<f64>),
    DoubleDouble(Pt<Dd>),
    Fixed { frac: u32, pt: Pt<BigInt> },
}

/// Runs `$body` with `$a` bound to the tier arithmetic and `$pt` to the
/// typed point of a [`LogRepr`].
macro_rules! on_repr {
    ($repr:expr, |$a:ident, $pt:ident| $body:expr) => {
        match $repr {
            $crate::numerics::LogRepr::Double($pt) => {
                let $a = $crate::numerics::tier::F64Arith;
                $body
            }
            $crate::numerics::LogRepr::DoubleDouble($pt) => {
                let $a = $crate::numerics::tier::DdArith;
                $body
            }
            $crate::numerics::LogRepr::Fixed { frac, pt: $pt } => {
                let $a = $crate::numerics::tier::FixedArith::new(*frac);
                $body
            }
        }
    };
}
pub(crate) use on_repr;

/// Runs `$body` with `$a` bound to the arithmetic of a [`Tier`].
macro_rules! on_tier {
    ($tier:expr, |$a:ident| $body:expr) => {
        match $tier {
            $crate::numerics::tier::Tier::Double => {
                let $a = $crate::numerics::tier::F64Arith;
                $body
            }
            $crate::numerics::tier::Tier::DoubleDouble => {
                let $a = $crate::numerics::tier::DdArith;
                $body
            }
            $crate::numerics::tier::Tier::Fixed(bits) => {
                let $a = $crate::numerics::tier::FixedArith::new(bits);
                $body
            }
        }
    };
}
pub(crate) use on_tier;

/// Move context for a tier: `ln a` at the tier's precision.
pub(crate) fn move_ctx<A: Arith>(arith: A, params: &VarietyParams, max_err: f64) -> MoveCtx<A> {
    let a = params.a();
    let (ln_a, ln_a_err) = if a.is_one() {
        (arith.zero(), 0.0)
    } else {
        let extra = arith.bits() + 64;
        let raw = FixedCtx::new(extra).ln_rational(a);
        let v = arith.from_raw(&raw, extra);
        let err = K_ARITH * arith.eps() * arith.to_f64(&v).abs().max(1.0);
        (v, err)
    };
    MoveCtx {
        arith,
        ln_a,
        ln_a_err,
        max_err,
    }
}

/// Logs of exactly known coordinates, rounded into the tier.
pub(crate) fn pt_from_coords<A: Arith>(ctx: &MoveCtx<A>, coords: &[RealCoordinate]) -> Pt<A::V> {
    let a = &ctx.arith;
    let extra = a.bits() + 64;
    let fc = FixedCtx::new(extra);
    let logs: Logs<A::V> = coords
        .iter()
        .map(|c| a.from_raw(&c.ln_raw(&fc), extra))
        .collect();
    ctx.point(logs, K_ARITH * a.eps())
}

/// Certified comparison of the largest log against `t`, where `t` itself
/// is known to within `t_err`.
pub(crate) fn compare_pt<A: Arith>(a: &A, p: &Pt<A::V>, t: &A::V, t_err: f64) -> Verdict {
    let mut m = &p.logs[0];
    for l in &p.logs[1..] {
        if a.cmp(l, m) == Ordering::Greater {
            m = l;
        }
    }
    let diff = a.sub(t, m);
    let df = a.to_f64(&diff);
    let slack = p.bound + t_err;
    if slack == 0.0 {
        // Exact data: decide by the sign of the exact difference.
        return if a.cmp(m, t) == Ordering::Greater {
            Verdict::Above
        } else {
            Verdict::Below
        };
    }
    let slack = slack + K_ARITH * a.eps() * df.abs().max(1.0);
    if df >= slack {
        Verdict::Below
    } else if df < -slack {
        Verdict::Above
    } else {
        Verdict::Indeterminate
    }
}

/// Natural logs of an orbit point with a certified absolute error bound.
#[derive(Clone, Debug, PartialEq)]
pub struct LogPoint(pub(crate) LogRepr);

impl LogPoint {
    /// Logs of an exact point, correctly rounded at `cfg.working_bits()`.
    pub fn from_exact(p: &ExactPoint, cfg: &PrecisionConfig) -> LogPoint {
        let coords: Vec<RealCoordinate> = p
            .coords()
            .iter()
            .cloned()
            .map(RealCoordinate::Rational)
            .collect();
        Self::from_coordinates(&coords, cfg)
    }

    pub fn from_coordinates(coords: &[RealCoordinate], cfg: &PrecisionConfig) -> LogPoint {
        let params = VarietyParams::default();
        on_tier!(cfg.tier(), |a| {
            let ctx = move_ctx(a, &params, cfg.max_err());
            LogPoint(ctx.arith.wrap(pt_from_coords(&ctx, coords)))
        })
    }

    /// Precision of the stored logs in bits.
    pub fn bits(&self) -> u32 {
        match &self.0 {
            LogRepr::Double(_) => 53,
            LogRepr::DoubleDouble(_) => 106,
            LogRepr::Fixed { frac, .. } => *frac,
        }
    }

    pub(crate) fn tier(&self) -> Tier {
        match &self.0 {
            LogRepr::Double(_) => Tier::Double,
            LogRepr::DoubleDouble(_) => Tier::DoubleDouble,
            LogRepr::Fixed { frac, .. } => Tier::Fixed(*frac),
        }
    }

    pub fn dim(&self) -> usize {
        on_repr!(&self.0, |_a, p| p.logs.len())
    }

    /// Absolute error bound on each stored log.
    pub fn err_bound(&self) -> f64 {
        on_repr!(&self.0, |_a, p| p.bound)
    }

    /// Relative error scale: log `i` is within `rel_err * max(1, |log_i|)`.
    pub fn rel_err(&self) -> f64 {
        on_repr!(&self.0, |_a, p| p.rho)
    }

    pub fn logs_f64(&self) -> Vec<f64> {
        on_repr!(&self.0, |a, p| p.logs.iter().map(|l| a.to_f64(l)).collect())
    }

    pub fn log_f64(&self, i: usize) -> f64 {
        on_repr!(&self.0, |a, p| a.to_f64(&p.logs[i]))
    }

    pub fn max_log_f64(&self) -> f64 {
        self.logs_f64().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact decimal expansion of a stored log.
    pub fn log_decimal(&self, i: usize) -> String {
        on_repr!(&self.0, |a, p| a.to_decimal(&p.logs[i]))
    }

    /// Exact value of a stored log.
    pub fn log_rational(&self, i: usize) -> BigRational {
        on_repr!(&self.0, |a, p| a.to_rational(&p.logs[i]))
    }

    /// Position of the largest stored log, lowest index on ties.
    pub fn max_position(&self) -> usize {
        let logs = self.logs_f64();
        let mut best = 0;
        for i in 1..logs.len() {
            if logs[i] > logs[best] {
                best = i;
            }
        }
        best
    }
}

impl fmt::Display for LogPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let logs = self.logs_f64();
        write!(f, "(")?;
        for (i, l) in logs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ") ± {:e}", self.err_bound())
    }
}

/// Logs of an exact point at the configured precision.
pub fn to_log_point(p: &ExactPoint, cfg: &PrecisionConfig) -> LogPoint {
    LogPoint::from_exact(p, cfg)
}

fn check_dim(params: &VarietyParams, lp: &LogPoint) -> Result<()> {
    if lp.dim() != params.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n(),
            actual: lp.dim(),
        });
    }
    Ok(())
}

fn kernel_error(f: KernelFail, j: MoveIndex, budget: f64) -> Error {
    match f {
        KernelFail::NotOutgoing => Error::NotOutgoing { index: j.get() },
        KernelFail::Budget(bound) => Error::ErrorBudgetExceeded { bound, budget },
    }
}

/// Move `j` through the subtraction form, for moves that grow the point.
pub fn log_move_outgoing(
    params: &VarietyParams,
    lp: &LogPoint,
    j: MoveIndex,
    cfg: &PrecisionConfig,
) -> Result<LogPoint> {
    check_dim(params, lp)?;
    on_repr!(&lp.0, |a, p| {
        let ctx = move_ctx(a, params, cfg.max_err());
        ctx.outgoing(p, j.position())
            .map(|q| LogPoint(ctx.arith.wrap(q)))
            .map_err(|e| kernel_error(e, j, cfg.max_err()))
    })
}

/// Move `j` through the Vieta quotient, for moves at the unique maximum.
pub fn log_move_descent(
    params: &VarietyParams,
    lp: &LogPoint,
    j: MoveIndex,
    cfg: &PrecisionConfig,
) -> Result<LogPoint> {
    check_dim(params, lp)?;
    on_repr!(&lp.0, |a, p| {
        let ctx = move_ctx(a, params, cfg.max_err());
        ctx.descent_checked(p, j.position())
            .map(|q| LogPoint(ctx.arith.wrap(q)))
            .map_err(|(_, b)| kernel_error(KernelFail::Budget(b), j, cfg.max_err()))
    })
}

/// Move `j` with whichever kernel is stable for its direction.
pub fn log_move(
    params: &VarietyParams,
    lp: &LogPoint,
    j: MoveIndex,
    cfg: &PrecisionConfig,
) -> Result<LogPoint> {
    check_dim(params, lp)?;
    on_repr!(&lp.0, |a, p| {
        let ctx = move_ctx(a, params, cfg.max_err());
        ctx.apply(p, j.position())
            .map(|q| LogPoint(ctx.arith.wrap(q)))
            .map_err(|e| kernel_error(e, j, cfg.max_err()))
    })
}

/// Compares the largest log of `lp` with `threshold`.
///
/// `Below` means the true maximum is at most `threshold`, `Above` that it
/// is strictly larger; anything the error bound cannot separate is
/// `Indeterminate`.
pub fn certified_compare(lp: &LogPoint, threshold: f64) -> Verdict {
    on_repr!(&lp.0, |a, p| {
        let t = a.from_rational(&f64_rational(threshold));
        // Fixed point may round away low bits of a tiny threshold.
        let t_err = if matches!(lp.0, LogRepr::Fixed { .. }) { a.eps() } else { 0.0 };
        compare_pt(&a, p, &t, t_err)
    })
}

fn f64_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite threshold")
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct LogPointJson {
    logs: Vec<String>,
    err_bound: String,
    bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel_err: Option<String>,
}

impl Serialize for LogPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let logs = (0..self.dim()).map(|i| self.log_decimal(i)).collect();
        LogPointJson {
            logs,
            err_bound: format!("{:e}", self.err_bound()),
            bits: self.bits(),
            rel_err: Some(format!("{:e}", self.rel_err())),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LogPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = LogPointJson::deserialize(d)?;
        LogPoint::from_json_parts(&j).map_err(serde::de::Error::custom)
    }
}

impl LogPoint {
    fn from_json_parts(j: &LogPointJson) -> Result<LogPoint> {
        if j.bits < 53 || j.bits > PrecisionConfig::MAX_BITS {
            return Err(Error::Parse(format!("unsupported precision {} bits", j.bits)));
        }
        if j.logs.is_empty() {
            return Err(Error::Parse("log point has no coordinates".into()));
        }
        let parse_f = |s: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("invalid error bound {s:?}")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parse(format!("invalid error bound {s:?}")));
            }
            Ok(v)
        };
        let bound = parse_f(&j.err_bound)?;
        let rel = j.rel_err.as_deref().map(parse_f).transpose()?;
        let logs = j
            .logs
            .iter()
            .map(|s| parse_rational(s))
            .collect::<Result<Vec<_>>>()?;
        let params = VarietyParams::default();
        Ok(on_tier!(Tier::for_bits(j.bits), |a| {
            let ctx = move_ctx(a, &params, f64::INFINITY);
            let vals: Logs<_> = logs.iter().map(|q| ctx.arith.from_rational(q)).collect();
            let mut p = ctx.point(vals, 0.0);
            let mag = ctx.max_mag(&p);
            p.rho = rel.unwrap_or(bound / mag);
            p.bound = bound.max(p.rho * mag);
            LogPoint(ctx.arith.wrap(p))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[i64]) -> ExactPoint {
        ExactPoint::from_integers(&VarietyParams::default(), c).unwrap()
    }

    fn configs() -> Vec<PrecisionConfig> {
        [53, 106, 128, 300]
            .iter()
            .map(|&b| PrecisionConfig::with_bits(b).unwrap())
            .collect()
    }

    fn m(j: usize) -> MoveIndex {
        MoveIndex::new(j, 4).unwrap()
    }

    #[test]
    fn log_point_of_exact() {
        for cfg in configs() {
            let lp = to_log_point(&pt(&[6, 22, 2, 2]), &cfg);
            assert!((lp.log_f64(0) - 6f64.ln()).abs() < 1e-15);
            assert!((lp.log_f64(1) - 3.091_042_453_358_316).abs() < 1e-15);
            assert!((lp.log_f64(2) - std::f64::consts::LN_2).abs() < 1e-15);
            assert!(lp.err_bound() <= 2f64.powi(-(cfg.working_bits() as i32) + 6));
        }
    }

    #[test]
    fn outgoing_examples() {
        let params = VarietyParams::default();
        for cfg in configs() {
            let lp = to_log_point(&pt(&[2, 2, 2, 2]), &cfg);
            let lp = log_move_outgoing(&params, &lp, m(1), &cfg).unwrap();
            assert!((lp.log_f64(0) - 6f64.ln()).abs() < 1e-14);
            let lp = log_move_outgoing(&params, &lp, m(2), &cfg).unwrap();
            assert!((lp.log_f64(1) - 22f64.ln()).abs() < 1e-14);
            let lp = log_move_outgoing(&params, &lp, m(3), &cfg).unwrap();
            assert!((lp.log_f64(2) - 262f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn descent_examples() {
        let params = VarietyParams::default();
        for cfg in configs() {
            let cases: [(&[i64], usize, f64); 3] = [
                (&[6, 22, 2, 2], 2, 2.0),
                (&[6, 2, 2, 2], 1, 2.0),
                (&[82, 22, 2, 2], 1, 6.0),
            ];
            for (c, j, want) in cases {
                let lp = to_log_point(&pt(c), &cfg);
                let lp = log_move_descent(&params, &lp, m(j), &cfg).unwrap();
                assert!((lp.log_f64(j - 1) - want.ln()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn product_term_must_dominate() {
        // Off the variety: x_1 = 100 exceeds the product 8 of the others.
        let params = VarietyParams::default();
        let cfg = PrecisionConfig::default();
        let json = r#"{"logs":["4.605","0.6931","0.6931","0.6931"],"errBound":"1e-30","bits":128}"#;
        let lp: LogPoint = serde_json::from_str(json).unwrap();
        let e = log_move_outgoing(&params, &lp, m(1), &cfg).unwrap_err();
        assert_eq!(e.class(), "NotOutgoing");
    }

    #[test]
    fn compare_examples() {
        for cfg in configs() {
            let lp = to_log_point(&pt(&[6, 22, 2, 2]), &cfg);
            assert_eq!(certified_compare(&lp, 30f64.ln()), Verdict::Below);
            assert_eq!(certified_compare(&lp, 10f64.ln()), Verdict::Above);
        }
        let lp = to_log_point(&pt(&[6, 22, 2, 2]), &PrecisionConfig::with_bits(53).unwrap());
        let near = lp.log_f64(1) + lp.err_bound() / 2.0;
        assert_eq!(certified_compare(&lp, near), Verdict::Indeterminate);
        let json = r#"{"logs":["1","3","2","2"],"errBound":"0.25","bits":200}"#;
        let lp: LogPoint = serde_json::from_str(json).unwrap();
        assert_eq!(certified_compare(&lp, 3.2), Verdict::Indeterminate);
        assert_eq!(certified_compare(&lp, 3.3), Verdict::Below);
        assert_eq!(certified_compare(&lp, 2.8), Verdict::Indeterminate);
        assert_eq!(certified_compare(&lp, 2.74), Verdict::Above);
    }

    #[test]
    fn budget_is_enforced() {
        let params = VarietyParams::default();
        let cfg = PrecisionConfig::new(53, 1e-30).unwrap();
        let lp = to_log_point(&pt(&[2, 2, 2, 2]), &cfg);
        let e = log_move_outgoing(&params, &lp, m(1), &cfg).unwrap_err();
        assert_eq!(e.class(), "ErrorBudgetExceeded");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let params = VarietyParams::default();
        for cfg in configs() {
            let mut lp = to_log_point(&pt(&[2, 2, 2, 2]), &cfg);
            for j in [1, 2, 3, 4, 1] {
                lp = log_move(&params, &lp, m(j), &cfg).unwrap();
            }
            let s = serde_json::to_string(&lp).unwrap();
            let back: LogPoint = serde_json::from_str(&s).unwrap();
            assert_eq!(back, lp, "{s}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(PrecisionConfig::new(52, 1e-6).is_err());
        assert!(PrecisionConfig::new(128, 0.0).is_err());
        assert_eq!(PrecisionConfig::default().working_bits(), 128);
    }
}
