//! Infinite descent, the properties A/B/C, orbit constants and the search
//! for fundamental solutions.

use std::collections::BTreeSet;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{enumerate_ball, BallQuery, NodePoint, OrbitSpec};
use crate::error::{Error, Result};
use crate::threshold::LogBound;
use crate::variety::{defect, format_rational, moved_coordinate, ExactPoint, MoveIndex, ReducedWord, VarietyParams};

/// Step limit of [`reduce_to_root`].
pub const DEFAULT_DESCENT_STEPS: usize = 100_000;

/// The value a single move produces, recorded as evidence for B or C.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MoveWitness {
    #[serde(rename = "move")]
    pub mv: MoveIndex,
    /// New value of the moved coordinate.
    pub value: String,
    /// Sup-norm after the move.
    pub new_max: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PropertyReport {
    pub holds_a: bool,
    pub holds_b: bool,
    pub holds_c: bool,
    /// Lowest index of a maximal coordinate.
    pub max_index: MoveIndex,
    /// First the move at `max_index` (B), then every other move (C).
    pub witnesses: Vec<MoveWitness>,
}

fn check_on_variety(params: &VarietyParams, p: &ExactPoint) -> Result<()> {
    if p.dim() != params.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n(),
            actual: p.dim(),
        });
    }
    if p.coords().iter().any(|c| !c.is_positive()) {
        return Err(Error::NonPositiveCoordinate(p.to_string()));
    }
    let d = defect(params, p.coords())?;
    if !d.is_zero() {
        return Err(Error::NotOnVariety {
            defect: format_rational(&d),
        });
    }
    Ok(())
}

fn moved(params: &VarietyParams, x: &[BigRational], pos: usize) -> (BigRational, BigRational) {
    let v = moved_coordinate(params, x, pos);
    let mut m = v.clone();
    for (i, c) in x.iter().enumerate() {
        if i != pos && *c > m {
            m = c.clone();
        }
    }
    (v, m)
}

/// Checks properties A (unique maximum), B (the move at the maximum lowers
/// the sup-norm) and C (every other move makes its coordinate the strict
/// maximum).
pub fn verify_properties(params: &VarietyParams, p: &ExactPoint) -> Result<PropertyReport> {
    check_on_variety(params, p)?;
    let x = p.coords();
    let top = p.max_position();
    let holds_a = p.has_unique_max();
    let mut witnesses = Vec::with_capacity(x.len());

    let (v, m) = moved(params, x, top);
    let holds_b = m < x[top];
    witnesses.push(MoveWitness {
        mv: MoveIndex::from_position(top),
        value: format_rational(&v),
        new_max: format_rational(&m),
    });

    let mut holds_c = true;
    for j in 0..x.len() {
        if holds_a && j == top {
            continue;
        }
        let (v, m) = moved(params, x, j);
        let strict = x.iter().enumerate().all(|(i, c)| i == j || v > *c);
        holds_c &= strict;
        witnesses.push(MoveWitness {
            mv: MoveIndex::from_position(j),
            value: format_rational(&v),
            new_max: format_rational(&m),
        });
    }
    Ok(PropertyReport {
        holds_a,
        holds_b,
        holds_c,
        max_index: MoveIndex::from_position(top),
        witnesses,
    })
}

/// A descent from a point to the root of its orbit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescentCertificate {
    pub root: ExactPoint,
    /// Moves in the order they were applied while descending.
    pub word: ReducedWord,
    /// Sup-norm before each move and after the last one.
    #[serde(with = "rational_strings")]
    pub steps: Vec<BigRational>,
}

mod rational_strings {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::variety::{format_rational, parse_rational};

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(format_rational).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| parse_rational(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl DescentCertificate {
    /// Points visited by the descent, starting with the input point.
    pub fn path(&self, params: &VarietyParams) -> Vec<ExactPoint> {
        let mut pts = vec![self.root.clone()];
        let mut x = self.root.coords().to_vec();
        for m in self.word.reversed().letters() {
            let pos = m.position();
            x[pos] = moved_coordinate(params, &x, pos);
            pts.push(ExactPoint::new_unchecked(x.clone()));
        }
        pts.reverse();
        pts
    }
}

/// Applies the move at the lowest-index maximum while it lowers the
/// sup-norm.
pub fn reduce_to_root(params: &VarietyParams, p: &ExactPoint) -> Result<DescentCertificate> {
    reduce_to_root_with_limit(params, p, DEFAULT_DESCENT_STEPS)
}

pub fn reduce_to_root_with_limit(
    params: &VarietyParams,
    p: &ExactPoint,
    max_steps: usize,
) -> Result<DescentCertificate> {
    check_on_variety(params, p)?;
    let mut x = p.coords().to_vec();
    let mut word = Vec::new();
    let mut steps = vec![p.max().clone()];
    loop {
        let cur = ExactPoint::new_unchecked(x);
        let top = cur.max_position();
        let (v, m) = moved(params, cur.coords(), top);
        x = cur.coords().to_vec();
        if m >= x[top] || !v.is_positive() {
            break;
        }
        if word.len() == max_steps {
            return Err(Error::NonTermination { steps: max_steps });
        }
        x[top] = v;
        word.push(top as u8);
        steps.push(m);
    }
    Ok(DescentCertificate {
        root: ExactPoint::new_unchecked(x),
        word: ReducedWord::from_positions(&word),
        steps,
    })
}

/// Empirical orbit constants over a finite ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrbitConstants {
    /// Smallest pairwise product seen, minus 2.
    pub epsilon: f64,
    /// Smallest coordinate seen.
    pub eta: f64,
    /// Log-scale radius of the regularized compact set.
    pub k_radius: f64,
    /// Log radius of the ball the minima were taken over.
    pub sample_bound: LogBound,
    /// Always true: the values are minima over a finite sample.
    pub empirical: bool,
}

/// Minimum pairwise product (minus 2) and minimum coordinate over the ball
/// `max x_i <= e^sample_log_r`.
pub fn estimate_epsilon(spec: &OrbitSpec, sample_log_r: &LogBound) -> Result<OrbitConstants> {
    let mins: Mutex<Option<(f64, f64)>> = Mutex::new(None);
    let exact_min: Mutex<Option<BigRational>> = Mutex::new(None);
    let visit = |_: &ReducedWord, p: &NodePoint| -> std::result::Result<(), String> {
        let (pair, low) = match p {
            NodePoint::Exact(e) => {
                let mut c: Vec<&BigRational> = e.coords().iter().collect();
                c.sort();
                let prod = c[0] * c[1];
                let low = c[0].to_f64().unwrap_or(0.0);
                let mut em = exact_min.lock().map_err(|e| e.to_string())?;
                if em.as_ref().is_none_or(|m| prod < *m) {
                    *em = Some(prod.clone());
                }
                (prod.to_f64().unwrap_or(f64::INFINITY), low)
            }
            NodePoint::Log(_) => {
                let mut l = p.logs_f64();
                l.sort_by(f64::total_cmp);
                ((l[0] + l[1]).exp(), l[0].exp())
            }
        };
        let mut m = mins.lock().map_err(|e| e.to_string())?;
        *m = Some(match *m {
            None => (pair, low),
            Some((a, b)) => (a.min(pair), b.min(low)),
        });
        Ok(())
    };
    let q = BallQuery::new(sample_log_r.clone());
    enumerate_ball(spec, &q, &visit)?;
    let (pair, eta) = mins.into_inner().expect("lock").ok_or(Error::EmptyBall)?;
    let epsilon = match exact_min.into_inner().expect("lock") {
        Some(m) => (m - BigRational::from_integer(2.into())).to_f64().unwrap_or(f64::NAN),
        None => pair - 2.0,
    };
    let mut c = OrbitConstants {
        epsilon,
        eta,
        k_radius: 10f64.ln(),
        sample_bound: sample_log_r.clone(),
        empirical: true,
    };
    c.k_radius = regularized_k_radius(&c);
    Ok(c)
}

/// The three lower bounds whose maximum is the regularized radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KRadiusTerms {
    /// `ln 10`.
    pub k0: f64,
    /// `ln(10 / (eta sqrt(epsilon)) + 1)`; infinite unless both are positive.
    pub k1: f64,
    /// Smallest `ln x` beyond which the regularization inequalities hold.
    pub regularization: f64,
}

pub fn regularized_k_terms(c: &OrbitConstants) -> KRadiusTerms {
    let k1 = if c.epsilon > 0.0 && c.eta > 0.0 {
        (10.0 / (c.eta * c.epsilon.sqrt()) + 1.0).ln()
    } else {
        f64::INFINITY
    };
    KRadiusTerms {
        k0: 10f64.ln(),
        k1,
        regularization: regularization_log_radius(),
    }
}

/// Log-scale radius of the regularized compact set.
pub fn regularized_k_radius(c: &OrbitConstants) -> f64 {
    let t = regularized_k_terms(c);
    t.k0.max(t.k1).max(t.regularization)
}

/// `(3 ln(1 - 2 x^{-1/3}) - 3 ln 2) / ln x >= -1/2` in terms of `t = ln x`.
fn regularization_holds(t: f64) -> bool {
    let u = 1.0 - 2.0 * (-t / 3.0).exp();
    u > 0.0 && 3.0 * u.ln() - 3.0 * 2f64.ln() >= -0.5 * t
}

/// The smallest `t >= ln 10` from which on the regularization inequality
/// holds. The left side increases in `t`, so bisection finds the crossing.
/// The companion bound `x_3 >= x_4^{1/3} / 2` needs no radius when `a <= 8`
/// because `x_4 < a x_1 x_2 x_3 <= a x_3^3`.
fn regularization_log_radius() -> f64 {
    let (mut lo, mut hi) = (10f64.ln(), 64.0);
    if regularization_holds(lo) {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if regularization_holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Integer points of the variety in the box `[1, box_bound]^n`, reduced by
/// descent; returns the distinct endpoints in lexicographic order.
pub fn find_fundamental_solutions(params: &VarietyParams, box_bound: u64) -> Result<Vec<ExactPoint>> {
    if box_bound < 1 {
        return Err(Error::InvalidArgument("box bound must be at least 1".into()));
    }
    let n = params.n();
    let a = params.a();
    let (p, q) = (a.numer().clone(), a.denom().clone());
    let found: Vec<Vec<BigInt>> = (1..=box_bound)
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let mut tuple = vec![1u64; n - 1];
            tuple[0] = first;
            loop {
                solve_last(&tuple, &p, &q, box_bound, &mut out);
                // Odometer over the remaining free coordinates.
                let mut i = n - 2;
                loop {
                    if i == 0 {
                        return out;
                    }
                    if tuple[i] < box_bound {
                        tuple[i] += 1;
                        break;
                    }
                    tuple[i] = 1;
                    i -= 1;
                }
            }
        })
        .flatten()
        .collect();

    let mut roots = BTreeSet::new();
    for pt in found {
        let x: Vec<BigRational> = pt.into_iter().map(BigRational::from_integer).collect();
        let cert = reduce_to_root(params, &ExactPoint::new_unchecked(x))?;
        roots.insert(cert.root.coords().to_vec());
    }
    Ok(roots.into_iter().map(ExactPoint::new_unchecked).collect())
}

/// Integer roots in `[1, bound]` of `T^2 - (p/q) P T + S = 0`, where `P` and
/// `S` are the product and sum of squares of `free`.
fn solve_last(free: &[u64], p: &BigInt, q: &BigInt, bound: u64, out: &mut Vec<Vec<BigInt>>) {
    let mut prod = BigInt::one();
    let mut sq = BigInt::zero();
    for &x in free {
        prod *= x;
        sq += x * x;
    }
    // Multiplying by q: q T^2 - p P T + q S = 0, so T = (pP ± sqrt(D)) / 2q.
    let b = p * &prod;
    let d = &b * &b - BigInt::from(4) * q * q * &sq;
    if d.is_negative() {
        return;
    }
    let s = d.sqrt();
    if &s * &s != d {
        return;
    }
    let two_q = BigInt::from(2) * q;
    let mut push = |num: BigInt| {
        if num.is_positive() && (&num % &two_q).is_zero() {
            let t = num / &two_q;
            if t <= BigInt::from(bound) {
                let mut pt: Vec<BigInt> = free.iter().map(|&x| BigInt::from(x)).collect();
                pt.push(t);
                out.push(pt);
            }
        }
    };
    push(&b + &s);
    if !s.is_zero() {
        push(&b - &s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[i64]) -> ExactPoint {
        ExactPoint::from_integers(&VarietyParams::default(), c).unwrap()
    }

    fn q(x: i64) -> BigRational {
        BigRational::from_integer(x.into())
    }

    #[test]
    fn property_examples() {
        let p = VarietyParams::default();
        let r = verify_properties(&p, &pt(&[6, 22, 2, 2])).unwrap();
        assert!(r.holds_a && r.holds_b && r.holds_c);
        assert_eq!(r.max_index.get(), 2);
        assert_eq!(r.witnesses[0].new_max, "6");
        assert_eq!(r.witnesses[1].value, "82");

        let r = verify_properties(&p, &pt(&[2, 2, 2, 2])).unwrap();
        assert!(!r.holds_a);
        assert_eq!(r.max_index.get(), 1);

        let r = verify_properties(&p, &pt(&[6, 2, 2, 2])).unwrap();
        assert!(r.holds_a && r.holds_b && r.holds_c);
        assert_eq!(r.witnesses[0].new_max, "2");
        assert_eq!(r.witnesses[1].value, "22");

        let off = ExactPoint::new_unchecked(vec![q(1), q(2), q(3), q(4)]);
        assert!(matches!(verify_properties(&p, &off), Err(Error::NotOnVariety { .. })));
    }

    #[test]
    fn descent_examples() {
        let p = VarietyParams::default();
        let c = reduce_to_root(&p, &pt(&[2, 2, 2, 2])).unwrap();
        assert_eq!(c.root, pt(&[2, 2, 2, 2]));
        assert!(c.word.is_empty());

        let c = reduce_to_root(&p, &pt(&[6, 22, 2, 2])).unwrap();
        assert_eq!(c.root, pt(&[2, 2, 2, 2]));
        assert_eq!(c.word.to_vec(), vec![2, 1]);
        assert_eq!(c.steps, vec![q(22), q(6), q(2)]);

        let c = reduce_to_root(&p, &pt(&[82, 22, 2, 2])).unwrap();
        assert_eq!(c.word.to_vec(), vec![1, 2, 1]);
        assert_eq!(c.steps, vec![q(82), q(22), q(6), q(2)]);
        assert_eq!(c.path(&p)[0], pt(&[82, 22, 2, 2]));
        assert_eq!(c.path(&p).last().unwrap(), &pt(&[2, 2, 2, 2]));

        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(
            json,
            r#"{"root":["2","2","2","2"],"word":[1,2,1],"steps":["82","22","6","2"]}"#
        );
        assert_eq!(serde_json::from_str::<DescentCertificate>(&json).unwrap(), c);
    }

    #[test]
    fn step_limit() {
        let p = VarietyParams::default();
        let e = reduce_to_root_with_limit(&p, &pt(&[82, 22, 2, 2]), 2).unwrap_err();
        assert_eq!(e, Error::NonTermination { steps: 2 });
    }

    #[test]
    fn epsilon_of_integer_orbit() {
        for r in [2, 10, 1000] {
            let c = estimate_epsilon(&OrbitSpec::markoff(), &LogBound::ln_of_integer(r)).unwrap();
            assert_eq!(c.epsilon, 2.0);
            assert_eq!(c.eta, 2.0);
            assert!(c.empirical);
        }
        let e = estimate_epsilon(&OrbitSpec::markoff(), &LogBound::from_f64(0.5).unwrap()).unwrap_err();
        assert_eq!(e, Error::EmptyBall);
    }

    #[test]
    fn k_radius_terms() {
        let c = OrbitConstants {
            epsilon: 2.0,
            eta: 2.0,
            k_radius: 0.0,
            sample_bound: LogBound::ln_of_integer(10),
            empirical: true,
        };
        let t = regularized_k_terms(&c);
        assert!((t.k1 - (10.0 / (2.0 * 2f64.sqrt()) + 1.0).ln()).abs() < 1e-15);
        assert!((t.k1 - 1.5119).abs() < 1e-4);
        assert!(regularized_k_radius(&c) >= 10f64.ln());
        // Just past the crossing the inequality holds, just before it fails.
        assert!(regularization_holds(t.regularization));
        assert!(!regularization_holds(t.regularization - 1e-9));

        let mut prev = regularized_k_radius(&c);
        for e in [1e-2, 1e-4, 1e-8, 1e-16] {
            let k = regularized_k_radius(&OrbitConstants { epsilon: e, ..c.clone() });
            assert!(k >= prev);
            prev = k;
        }
        assert!(prev > 15.0);
        assert!(regularized_k_radius(&OrbitConstants { epsilon: 0.0, ..c }).is_infinite());
    }

    #[test]
    fn fundamental_examples() {
        let p = VarietyParams::default();
        assert_eq!(find_fundamental_solutions(&p, 30).unwrap(), vec![pt(&[2, 2, 2, 2])]);
        let p3 = VarietyParams::with_integer_a(3, 3).unwrap();
        let f = find_fundamental_solutions(&p3, 10).unwrap();
        assert_eq!(f, vec![ExactPoint::from_integers(&p3, &[1, 1, 1]).unwrap()]);
        let p31 = VarietyParams::with_integer_a(3, 1).unwrap();
        let f = find_fundamental_solutions(&p31, 10).unwrap();
        assert_eq!(f, vec![ExactPoint::from_integers(&p31, &[3, 3, 3]).unwrap()]);
        // No integer points at all.
        let p5 = VarietyParams::with_integer_a(3, 5).unwrap();
        assert!(find_fundamental_solutions(&p5, 10).unwrap().is_empty());
    }
}
