//! Exact points on the varieties `x_1^2 + ... + x_n^2 = a x_1 x_2 ... x_n`,
//! the Markoff moves that act on them, and reduced words in the free
//! product of `n` copies of `C_2` generated by those moves.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported coordinate count; move indices are stored in a byte
/// inside the traversal engine.
pub const MAX_DIMENSION: usize = 255;

/// Parameters `(n, a)` of the variety `V_{n,a}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarietyParams {
    n: usize,
    a: BigRational,
}

impl VarietyParams {
    pub fn new(n: usize, a: BigRational) -> Result<Self> {
        if !(3..=MAX_DIMENSION).contains(&n) {
            return Err(Error::InvalidParams(format!(
                "n must be in 3..={MAX_DIMENSION}, got {n}"
            )));
        }
        if !a.is_positive() {
            return Err(Error::InvalidParams(format!("a must be positive, got {a}")));
        }
        Ok(VarietyParams { n, a })
    }

    pub fn with_integer_a(n: usize, a: i64) -> Result<Self> {
        Self::new(n, BigRational::from_integer(a.into()))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &BigRational {
        &self.a
    }

    pub fn a_is_one(&self) -> bool {
        self.a.is_one()
    }
}

impl Default for VarietyParams {
    /// The surface case `n = 4, a = 1`.
    fn default() -> Self {
        VarietyParams {
            n: 4,
            a: BigRational::one(),
        }
    }
}

impl Serialize for VarietyParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            n: usize,
            a: String,
        }
        Repr {
            n: self.n,
            a: format_rational(&self.a),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for VarietyParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            n: usize,
            a: String,
        }
        let r = Repr::deserialize(d)?;
        let a = parse_rational(&r.a).map_err(serde::de::Error::custom)?;
        VarietyParams::new(r.n, a).map_err(serde::de::Error::custom)
    }
}

/// A move generator `m_j`, stored 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MoveIndex(usize);

impl MoveIndex {
    pub fn new(j: usize, n: usize) -> Result<Self> {
        if j == 0 || j > n {
            return Err(Error::LetterOutOfRange { letter: j, n });
        }
        Ok(MoveIndex(j))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based coordinate position.
    pub fn position(self) -> usize {
        self.0 - 1
    }

    pub(crate) fn from_position(pos: usize) -> Self {
        MoveIndex(pos + 1)
    }
}

impl fmt::Display for MoveIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A word in the move generators with no two equal adjacent letters.
///
/// Letters are stored in application order: the first letter acts first.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ReducedWord(Vec<MoveIndex>);

impl ReducedWord {
    pub fn empty() -> Self {
        ReducedWord(Vec::new())
    }

    /// Builds a word that must already be reduced.
    pub fn from_letters(letters: &[usize], n: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(letters.len());
        for &l in letters {
            let m = MoveIndex::new(l, n)?;
            if out.last() == Some(&m) {
                return Err(Error::InvalidArgument(format!(
                    "word {letters:?} is not reduced"
                )));
            }
            out.push(m);
        }
        Ok(ReducedWord(out))
    }

    pub(crate) fn from_positions(positions: &[u8]) -> Self {
        ReducedWord(
            positions
                .iter()
                .map(|&p| MoveIndex::from_position(p as usize))
                .collect(),
        )
    }

    pub fn letters(&self) -> &[MoveIndex] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.0.iter().map(|m| m.get()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<MoveIndex> {
        self.0.last().copied()
    }

    /// The inverse group element (every generator is an involution).
    pub fn reversed(&self) -> Self {
        let mut v = self.0.clone();
        v.reverse();
        ReducedWord(v)
    }

    /// True when `self` is a prefix of `other` (or equal to it).
    pub fn is_prefix_of(&self, other: &ReducedWord) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Appends a letter, cancelling it against the last one if equal.
    pub fn push_reduced(&mut self, m: MoveIndex) {
        if self.0.last() == Some(&m) {
            self.0.pop();
        } else {
            self.0.push(m);
        }
    }
}

impl<'de> Deserialize<'de> for ReducedWord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        ReducedWord::from_letters(&v, MAX_DIMENSION).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "]")
    }
}

/// Cancels adjacent equal letters until the word is reduced.
pub fn normalize_word(letters: &[usize], n: usize) -> Result<ReducedWord> {
    let mut w = ReducedWord::empty();
    for &l in letters {
        w.push_reduced(MoveIndex::new(l, n)?);
    }
    Ok(w)
}

/// A point of `V_{n,a}` with positive rational coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactPoint {
    coords: Vec<BigRational>,
}

impl ExactPoint {
    /// Validates positivity and exact membership.
    pub fn new(params: &VarietyParams, coords: Vec<BigRational>) -> Result<Self> {
        for c in &coords {
            if !c.is_positive() {
                return Err(Error::NonPositiveCoordinate(format_rational(c)));
            }
        }
        let d = defect(params, &coords)?;
        if !d.is_zero() {
            return Err(Error::NotOnVariety {
                defect: format_rational(&d),
            });
        }
        Ok(ExactPoint { coords })
    }

    pub fn from_integers(params: &VarietyParams, coords: &[i64]) -> Result<Self> {
        Self::new(
            params,
            coords
                .iter()
                .map(|&c| BigRational::from_integer(c.into()))
                .collect(),
        )
    }

    /// Parses a comma-separated list of integers, decimals or fractions.
    pub fn parse(params: &VarietyParams, s: &str) -> Result<Self> {
        let coords = parse_coordinate_list(s)?;
        if coords.len() != params.n() {
            return Err(Error::DimensionMismatch {
                expected: params.n(),
                actual: coords.len(),
            });
        }
        Self::new(params, coords)
    }

    pub(crate) fn new_unchecked(coords: Vec<BigRational>) -> Self {
        ExactPoint { coords }
    }

    /// The point `(2, 2, 2, 2)` on the default variety.
    pub fn markoff_root() -> Self {
        ExactPoint {
            coords: vec![BigRational::from_integer(2.into()); 4],
        }
    }

    pub fn coords(&self) -> &[BigRational] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_integral(&self) -> bool {
        self.coords.iter().all(|c| c.is_integer())
    }

    /// Zero-based position of the lowest-index maximal coordinate.
    pub fn max_position(&self) -> usize {
        let mut best = 0;
        for i in 1..self.coords.len() {
            if self.coords[i] > self.coords[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> &BigRational {
        &self.coords[self.max_position()]
    }

    /// True when the maximum is attained at exactly one coordinate.
    pub fn has_unique_max(&self) -> bool {
        let m = self.max();
        self.coords.iter().filter(|c| *c == m).count() == 1
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| c.to_f64().unwrap_or(f64::INFINITY))
            .collect()
    }
}

impl fmt::Display for ExactPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", format_rational(c))?;
        }
        write!(f, ")")
    }
}

impl Serialize for ExactPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<String> = self.coords.iter().map(format_rational).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExactPoint {
    /// Membership is not checked here; callers validate against their params.
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        let coords = v
            .iter()
            .map(|s| parse_rational(s))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(ExactPoint { coords })
    }
}

/// `sum x_i^2 - a * prod x_i`, computed exactly.
pub fn defect(params: &VarietyParams, coords: &[BigRational]) -> Result<BigRational> {
    if coords.len() != params.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n(),
            actual: coords.len(),
        });
    }
    let mut squares = BigRational::zero();
    let mut product = params.a().clone();
    for c in coords {
        squares += c * c;
        product *= c;
    }
    Ok(squares - product)
}

fn check_on_variety(params: &VarietyParams, p: &ExactPoint) -> Result<()> {
    let d = defect(params, p.coords())?;
    if d.is_zero() {
        Ok(())
    } else {
        Err(Error::NotOnVariety {
            defect: format_rational(&d),
        })
    }
}

/// `a * prod_{i != pos} x_i - x_pos`, without membership checks.
pub(crate) fn moved_coordinate(
    params: &VarietyParams,
    coords: &[BigRational],
    pos: usize,
) -> BigRational {
    let mut prod = params.a().clone();
    for (i, c) in coords.iter().enumerate() {
        if i != pos {
            prod *= c;
        }
    }
    prod - &coords[pos]
}

pub(crate) fn apply_move_unchecked(
    params: &VarietyParams,
    p: &ExactPoint,
    pos: usize,
) -> Result<ExactPoint> {
    let new = moved_coordinate(params, &p.coords, pos);
    if !new.is_positive() {
        return Err(Error::NonPositiveResult { index: pos + 1 });
    }
    let mut coords = p.coords.clone();
    coords[pos] = new;
    Ok(ExactPoint { coords })
}

/// Replaces coordinate `j` by the other root of its defining quadratic.
pub fn apply_move(params: &VarietyParams, p: &ExactPoint, j: MoveIndex) -> Result<ExactPoint> {
    if j.get() > params.n() {
        return Err(Error::LetterOutOfRange {
            letter: j.get(),
            n: params.n(),
        });
    }
    check_on_variety(params, p)?;
    apply_move_unchecked(params, p, j.position())
}

/// Applies the letters of `w` left to right.
pub fn apply_word(params: &VarietyParams, p: &ExactPoint, w: &ReducedWord) -> Result<ExactPoint> {
    check_on_variety(params, p)?;
    let mut cur = p.clone();
    for m in w.letters() {
        if m.get() > params.n() {
            return Err(Error::LetterOutOfRange {
                letter: m.get(),
                n: params.n(),
            });
        }
        cur = apply_move_unchecked(params, &cur, m.position())?;
    }
    Ok(cur)
}

/// Both roots of `T^2 - (a prod y) T + sum y^2`, the completion of a
/// partial coordinate tuple `y` to a point of the variety.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadraticRoots {
    sum: BigRational,
    product: BigRational,
}

/// Which root of a completion quadratic to take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootChoice {
    Smaller,
    Larger,
}

impl QuadraticRoots {
    /// Sum of the roots, `a * prod y`.
    pub fn sum(&self) -> &BigRational {
        &self.sum
    }

    /// Product of the roots, `sum y^2`.
    pub fn product(&self) -> &BigRational {
        &self.product
    }

    pub fn discriminant(&self) -> BigRational {
        &self.sum * &self.sum - BigRational::from_integer(4.into()) * &self.product
    }

    pub fn root(&self, choice: RootChoice) -> QuadraticRoot {
        QuadraticRoot {
            sum: self.sum.clone(),
            disc: self.discriminant(),
            choice,
        }
    }

    pub fn smaller(&self) -> QuadraticRoot {
        self.root(RootChoice::Smaller)
    }

    pub fn larger(&self) -> QuadraticRoot {
        self.root(RootChoice::Larger)
    }
}

/// One root `(s -/+ sqrt(disc)) / 2` of a completion quadratic, kept symbolic.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadraticRoot {
    sum: BigRational,
    disc: BigRational,
    choice: RootChoice,
}

impl QuadraticRoot {
    pub fn choice(&self) -> RootChoice {
        self.choice
    }

    pub fn sum(&self) -> &BigRational {
        &self.sum
    }

    pub fn discriminant(&self) -> &BigRational {
        &self.disc
    }

    /// The root as a rational, when the discriminant is a rational square.
    pub fn as_rational(&self) -> Option<BigRational> {
        let r = rational_sqrt(&self.disc)?;
        let two = BigRational::from_integer(2.into());
        Some(match self.choice {
            RootChoice::Smaller => (&self.sum - r) / two,
            RootChoice::Larger => (&self.sum + r) / two,
        })
    }

    pub fn to_f64(&self) -> f64 {
        if let Some(q) = self.as_rational() {
            return q.to_f64().unwrap_or(f64::NAN);
        }
        let s = self.sum.to_f64().unwrap_or(f64::NAN);
        let d = self.disc.to_f64().unwrap_or(f64::NAN).sqrt();
        // Smaller root via the product to avoid cancellation.
        let larger = 0.5 * (s + d);
        match self.choice {
            RootChoice::Larger => larger,
            RootChoice::Smaller => {
                let product = (&self.sum * &self.sum - &self.disc) / BigRational::from_integer(4.into());
                product.to_f64().unwrap_or(f64::NAN) / larger
            }
        }
    }
}

/// Roots for the coordinate that completes `partial` (length `n - 1`).
pub fn solve_missing_coordinate(
    params: &VarietyParams,
    partial: &[BigRational],
) -> Result<QuadraticRoots> {
    if partial.len() + 1 != params.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n() - 1,
            actual: partial.len(),
        });
    }
    let mut sum = params.a().clone();
    let mut product = BigRational::zero();
    for y in partial {
        if !y.is_positive() {
            return Err(Error::NonPositiveCoordinate(format_rational(y)));
        }
        sum *= y;
        product += y * y;
    }
    let roots = QuadraticRoots { sum, product };
    let disc = roots.discriminant();
    if disc.is_negative() {
        return Err(Error::NoRealSolution {
            discriminant: format_rational(&disc),
        });
    }
    Ok(roots)
}

/// Exact square root of a nonnegative rational, if it is a rational square.
pub fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = int_sqrt_exact(q.numer())?;
    let d = int_sqrt_exact(q.denom())?;
    Some(BigRational::new(n, d))
}

fn int_sqrt_exact(x: &BigInt) -> Option<BigInt> {
    if x.sign() == Sign::Minus {
        return None;
    }
    let r = x.sqrt();
    if &r * &r == *x {
        Some(r)
    } else {
        None
    }
}

/// Parses `"22"`, `"-3"`, `"1.25"`, `"1e3"` or `"7/3"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = BigInt::from_str(num.trim()).map_err(|e| Error::Parse(format!("{s}: {e}")))?;
        let d = BigInt::from_str(den.trim()).map_err(|e| Error::Parse(format!("{s}: {e}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("{s}: zero denominator")));
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = s[i + 1..]
                .parse()
                .map_err(|e| Error::Parse(format!("{s}: {e}")))?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Parse(format!("{s}: no digits")));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("{s}: not a number")));
    }
    let all = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(BigInt::from_str(&all).map_err(|e| Error::Parse(e.to_string()))?);
    let scale = exponent - frac_part.len() as i64;
    if scale.unsigned_abs() > 100_000 {
        return Err(Error::Parse(format!("{s}: exponent too large")));
    }
    let ten = BigInt::from(10u32);
    let p = num_traits::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= BigRational::from_integer(p);
    } else {
        value /= BigRational::from_integer(p);
    }
    if neg {
        value = -value;
    }
    Ok(value)
}

/// Parses a comma-separated coordinate list.
pub fn parse_coordinate_list(s: &str) -> Result<Vec<BigRational>> {
    let s = s.trim().trim_start_matches('(').trim_end_matches(')');
    s.split(',').map(parse_rational).collect()
}

/// Integers print as decimal integers, other rationals as `p/q`.
pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(x: i64) -> BigRational {
        BigRational::from_integer(x.into())
    }

    fn pt(c: &[i64]) -> ExactPoint {
        ExactPoint::from_integers(&VarietyParams::default(), c).unwrap()
    }

    fn mv(j: usize) -> MoveIndex {
        MoveIndex::new(j, 4).unwrap()
    }

    #[test]
    fn defect_examples() {
        let p = VarietyParams::default();
        assert_eq!(defect(&p, &[q(2), q(2), q(2), q(2)]).unwrap(), q(0));
        assert_eq!(defect(&p, &[q(6), q(22), q(2), q(2)]).unwrap(), q(0));
        assert_eq!(defect(&p, &[q(1), q(1), q(1), q(1)]).unwrap(), q(3));
        assert!(matches!(
            defect(&p, &[q(1), q(1), q(1)]),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn move_examples() {
        let p = VarietyParams::default();
        assert_eq!(apply_move(&p, &pt(&[2, 2, 2, 2]), mv(1)).unwrap(), pt(&[6, 2, 2, 2]));
        assert_eq!(apply_move(&p, &pt(&[6, 2, 2, 2]), mv(2)).unwrap(), pt(&[6, 22, 2, 2]));
        assert_eq!(apply_move(&p, &pt(&[6, 2, 2, 2]), mv(1)).unwrap(), pt(&[2, 2, 2, 2]));
    }

    #[test]
    fn move_rejects_off_variety_points() {
        let p = VarietyParams::default();
        let bad = ExactPoint::new_unchecked(vec![q(1), q(1), q(1), q(1)]);
        assert!(matches!(apply_move(&p, &bad, mv(1)), Err(Error::NotOnVariety { .. })));
        assert!(matches!(
            ExactPoint::from_integers(&p, &[1, 1, 1, 1]),
            Err(Error::NotOnVariety { .. })
        ));
    }

    #[test]
    fn solve_examples() {
        let p = VarietyParams::default();
        let r = solve_missing_coordinate(&p, &[q(2), q(2), q(2)]).unwrap();
        assert_eq!(r.smaller().as_rational(), Some(q(2)));
        assert_eq!(r.larger().as_rational(), Some(q(6)));

        let r = solve_missing_coordinate(&p, &[q(3), q(3), q(3)]).unwrap();
        assert_eq!(r.discriminant(), q(621));
        assert!(r.smaller().as_rational().is_none());
        assert!((r.smaller().to_f64() - 1.040_064_205_622_888_6).abs() < 1e-12);
        assert!((r.larger().to_f64() - 25.959_935_794_377_11).abs() < 1e-12);
        assert_eq!(r.sum(), &q(27));
        assert_eq!(r.product(), &q(27));

        assert!(matches!(
            solve_missing_coordinate(&p, &[q(1), q(1), q(1)]),
            Err(Error::NoRealSolution { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        assert!(normalize_word(&[1, 1], 4).unwrap().is_empty());
        assert_eq!(normalize_word(&[1, 2, 2, 1, 3], 4).unwrap().to_vec(), vec![3]);
        assert_eq!(normalize_word(&[1, 2, 1], 4).unwrap().to_vec(), vec![1, 2, 1]);
        assert!(matches!(
            normalize_word(&[1, 5], 4),
            Err(Error::LetterOutOfRange { letter: 5, n: 4 })
        ));
    }

    #[test]
    fn word_examples() {
        let p = VarietyParams::default();
        let root = pt(&[2, 2, 2, 2]);
        let w = |l: &[usize]| ReducedWord::from_letters(l, 4).unwrap();
        assert_eq!(apply_word(&p, &root, &w(&[1])).unwrap(), pt(&[6, 2, 2, 2]));
        assert_eq!(apply_word(&p, &root, &w(&[1, 2])).unwrap(), pt(&[6, 22, 2, 2]));
        assert_eq!(apply_word(&p, &root, &w(&[])).unwrap(), root);
    }

    #[test]
    fn rational_points_on_other_varieties() {
        // 3 * (1,1,1) scaled: (3,3,3) on n=3, a=1; (1,1,1) on n=3, a=3.
        let p31 = VarietyParams::with_integer_a(3, 1).unwrap();
        assert!(ExactPoint::from_integers(&p31, &[3, 3, 3]).is_ok());
        let p33 = VarietyParams::with_integer_a(3, 3).unwrap();
        let root = ExactPoint::from_integers(&p33, &[1, 1, 1]).unwrap();
        let up = apply_move(&p33, &root, MoveIndex::new(3, 3).unwrap()).unwrap();
        assert_eq!(up, ExactPoint::from_integers(&p33, &[1, 1, 2]).unwrap());
        // a = 1/4 carries the doubled Markoff points.
        let half = VarietyParams::new(4, BigRational::new(1.into(), 4.into())).unwrap();
        let r = solve_missing_coordinate(&half, &[q(4), q(4), q(4)]).unwrap();
        let x = r.larger().as_rational().unwrap();
        let p = ExactPoint::new(&half, vec![q(4), q(4), q(4), x]).unwrap();
        let back = apply_move(&half, &p, mv(4)).unwrap();
        assert_eq!(apply_move(&half, &back, mv(4)).unwrap(), p);
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rational("22").unwrap(), q(22));
        assert_eq!(parse_rational("1.25").unwrap(), BigRational::new(5.into(), 4.into()));
        assert_eq!(parse_rational("7/3").unwrap(), BigRational::new(7.into(), 3.into()));
        assert_eq!(parse_rational("1e3").unwrap(), q(1000));
        assert_eq!(parse_rational("2.5e-1").unwrap(), BigRational::new(1.into(), 4.into()));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
        assert_eq!(format_rational(&BigRational::new(3.into(), 6.into())), "1/2");
        let p = ExactPoint::parse(&VarietyParams::default(), "82,22,2,2").unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"["82","22","2","2"]"#);
        let back: ExactPoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(matches!(
            ExactPoint::parse(&VarietyParams::default(), "2,2,2"),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn word_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..=4, 0..14)
    }

    proptest! {
        #[test]
        fn involution_and_preservation(letters in word_strategy(), j in 1usize..=4) {
            let p = VarietyParams::default();
            let w = normalize_word(&letters, 4).unwrap();
            let x = apply_word(&p, &ExactPoint::markoff_root(), &w).unwrap();
            let y = apply_move(&p, &x, mv(j)).unwrap();
            prop_assert!(defect(&p, y.coords()).unwrap().is_zero());
            prop_assert!(y.is_integral());
            prop_assert!(y.coords().iter().all(|c| *c >= q(2)));
            prop_assert_eq!(apply_move(&p, &y, mv(j)).unwrap(), x);
        }

        #[test]
        fn word_inverse(letters in word_strategy()) {
            let p = VarietyParams::default();
            let w = normalize_word(&letters, 4).unwrap();
            let root = ExactPoint::markoff_root();
            let x = apply_word(&p, &root, &w).unwrap();
            prop_assert_eq!(apply_word(&p, &x, &w.reversed()).unwrap(), root);
        }

        #[test]
        fn normalize_is_idempotent(letters in prop::collection::vec(1usize..=4, 0..20)) {
            let w = normalize_word(&letters, 4).unwrap();
            prop_assert_eq!(normalize_word(&w.to_vec(), 4).unwrap(), w.clone());
            prop_assert!(w.letters().windows(2).all(|p| p[0] != p[1]));
        }

        #[test]
        fn vieta(ys in prop::collection::vec((1i64..40, 1i64..9), 3)) {
            let p = VarietyParams::default();
            let partial: Vec<BigRational> =
                ys.iter().map(|&(a, b)| BigRational::new(a.into(), b.into())).collect();
            if let Ok(r) = solve_missing_coordinate(&p, &partial) {
                let disc = r.discriminant();
                let (s, l) = (r.smaller(), r.larger());
                // (s_sum^2 - disc) / 4 is the product of the two roots.
                let prod = (s.sum() * s.sum() - &disc) / q(4);
                prop_assert_eq!(&prod, r.product());
                prop_assert_eq!(s.sum() + BigRational::zero(), l.sum().clone());
                if let (Some(a), Some(b)) = (s.as_rational(), l.as_rational()) {
                    prop_assert_eq!(&a * &b, r.product().clone());
                    prop_assert_eq!(&a + &b, r.sum().clone());
                }
                let (fs, fl) = (s.to_f64(), l.to_f64());
                let want = r.product().to_f64().unwrap();
                prop_assert!(((fs * fl) - want).abs() <= 1e-9 * want);
            }
        }
    }
}
