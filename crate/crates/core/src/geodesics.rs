//! Geodesic lengths and orbit coordinates.
//!
//! A one-sided curve of length `l` has coordinate `sqrt(2 sinh(l/2))`, so
//! counting curves of length at most `L` is counting orbit points in the
//! ball of log radius `L/4 + ln(1 - e^{-L}) / 2`, up to a bounded number of
//! exceptional curves.

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::engine::{count_ball, relative_defect_f64, BallQuery, BasePoint, CountResult, OrbitSpec};
use crate::error::{Error, Result};
use crate::numerics::RealCoordinate;
use crate::threshold::LogBound;
use crate::variety::{solve_missing_coordinate, ExactPoint, RootChoice, VarietyParams};

/// Default relative defect accepted for coordinates computed from lengths.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Coordinates this close (relatively) to an integer are taken as that integer.
const SNAP_TOLERANCE: f64 = 1e-12;

/// `sqrt(2 sinh(l/2))`.
pub fn length_to_coordinate(l: f64) -> Result<f64> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::NonPositiveLength(l));
    }
    if l > 1400.0 {
        return Ok(log_threshold(l).exp());
    }
    Ok((2.0 * (0.5 * l).sinh()).sqrt())
}

/// `2 asinh(x^2 / 2)`.
pub fn coordinate_to_length(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::NonPositiveCoordinate(x.to_string()));
    }
    let y = 0.5 * x * x;
    if y.is_finite() {
        Ok(2.0 * y.asinh())
    } else {
        // asinh(y) = ln(2y) + O(y^-2), and 2y = x^2.
        Ok(4.0 * x.ln())
    }
}

/// `ln sqrt(2 sinh(L/2)) = L/4 + ln(1 - e^{-L}) / 2`, stable for all `L > 0`.
pub fn log_threshold(l: f64) -> f64 {
    0.25 * l + 0.5 * (-(-l).exp_m1()).ln()
}

/// A bound on geodesic length together with the exact ball threshold it
/// stands for.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthBound {
    length: f64,
    threshold: LogBound,
}

impl LengthBound {
    /// The bound `L`, read as the exact binary value of the double.
    pub fn from_length(l: f64) -> Result<LengthBound> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::NonPositiveLength(l));
        }
        let q = BigRational::from_float(l).expect("finite");
        Ok(LengthBound {
            length: l,
            threshold: LogBound::GeodesicLength(q),
        })
    }

    /// The length of a curve with coordinate `x`. The threshold is `ln x`
    /// exactly, so a curve with this coordinate is counted even though the
    /// double length is rounded.
    pub fn of_coordinate(x: &BigRational) -> Result<LengthBound> {
        let xf = x.to_f64().unwrap_or(f64::NAN);
        let length = coordinate_to_length(xf)?;
        Ok(LengthBound {
            length,
            threshold: LogBound::LnOf(x.clone()),
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn threshold(&self) -> &LogBound {
        &self.threshold
    }
}

/// A point of `V(R+)` standing for a hyperbolic structure.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicStructure {
    params: VarietyParams,
    base_point: BasePoint,
    tolerance: f64,
}

fn snap(x: f64) -> BigRational {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOLERANCE * x.abs().max(1.0) {
        BigRational::from_float(r).expect("finite")
    } else {
        BigRational::from_float(x).expect("finite")
    }
}

fn to_base(params: &VarietyParams, coords: Vec<RealCoordinate>) -> BasePoint {
    match coords.iter().map(RealCoordinate::as_rational).collect::<Option<Vec<_>>>() {
        Some(q) => match ExactPoint::new(params, q) {
            Ok(p) => BasePoint::Exact(p),
            Err(_) => BasePoint::Real(coords),
        },
        None => BasePoint::Real(coords),
    }
}

impl HyperbolicStructure {
    pub fn from_point(params: VarietyParams, base_point: BasePoint) -> Result<Self> {
        // Reuse OrbitSpec's validation for dimension and membership.
        OrbitSpec::new(params.clone(), base_point.clone())?;
        Ok(HyperbolicStructure {
            params,
            base_point,
            tolerance: 0.0,
        })
    }

    pub fn params(&self) -> &VarietyParams {
        &self.params
    }

    pub fn base_point(&self) -> &BasePoint {
        &self.base_point
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// The orbit spec rooted at this structure's point.
    pub fn orbit_spec(&self) -> Result<OrbitSpec> {
        OrbitSpec::new(self.params.clone(), self.base_point.clone())
    }
}

/// Structure from the lengths of all `n` curves of a simplex.
///
/// The coordinates must satisfy the defining equation to within `tolerance`
/// (relative). The stored point lies exactly on the variety: the first
/// `n - 1` coordinates are kept and the last is replaced by the nearer root
/// of its completion quadratic.
pub fn structure_from_lengths(
    params: &VarietyParams,
    lengths: &[f64],
    tolerance: f64,
) -> Result<HyperbolicStructure> {
    if lengths.len() != params.n() {
        return Err(Error::DimensionMismatch {
            expected: params.n(),
            actual: lengths.len(),
        });
    }
    let x: Vec<f64> = lengths.iter().map(|&l| length_to_coordinate(l)).collect::<Result<_>>()?;
    let rel = relative_defect_f64(params, &x);
    if !(rel <= tolerance) {
        return Err(Error::NotOnVariety {
            defect: format!("{rel:e} (relative)"),
        });
    }
    let n = params.n();
    let partial: Vec<BigRational> = x[..n - 1].iter().map(|&v| snap(v)).collect();
    let roots = solve_missing_coordinate(params, &partial)?;
    let target = x[n - 1];
    let root = [RootChoice::Smaller, RootChoice::Larger]
        .into_iter()
        .map(|c| roots.root(c))
        .min_by(|a, b| (a.to_f64() - target).abs().total_cmp(&(b.to_f64() - target).abs()))
        .expect("two roots");
    let mut coords: Vec<RealCoordinate> = partial.into_iter().map(RealCoordinate::Rational).collect();
    coords.push(match root.as_rational() {
        Some(q) => RealCoordinate::Rational(q),
        None => RealCoordinate::Root(root),
    });
    Ok(HyperbolicStructure {
        base_point: to_base(params, coords),
        params: params.clone(),
        tolerance,
    })
}

/// Structure from `n - 1` lengths, completed by the chosen root.
pub fn structure_from_partial(
    params: &VarietyParams,
    lengths: &[f64],
    choice: RootChoice,
) -> Result<HyperbolicStructure> {
    let partial: Vec<BigRational> = lengths
        .iter()
        .map(|&l| length_to_coordinate(l).map(snap))
        .collect::<Result<_>>()?;
    let root = solve_missing_coordinate(params, &partial)?.root(choice);
    let mut coords: Vec<RealCoordinate> = partial.into_iter().map(RealCoordinate::Rational).collect();
    coords.push(match root.as_rational() {
        Some(q) => RealCoordinate::Rational(q),
        None => RealCoordinate::Root(root),
    });
    Ok(HyperbolicStructure {
        base_point: to_base(params, coords),
        params: params.clone(),
        tolerance: 0.0,
    })
}

/// Orbit count standing in for the number of one-sided curves of length at
/// most `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeodesicCount {
    pub raw_count: u64,
    pub length: f64,
    /// The ball threshold, as a double.
    pub log_threshold: f64,
    /// The exact ball threshold.
    pub threshold: LogBound,
    /// Always true: the curve count differs from `raw_count` by a bounded
    /// amount that is not computed.
    pub caveat: bool,
    pub result: CountResult,
}

/// Counts orbit points in the ball matching length bound `l`; `q` supplies
/// the engine settings and its threshold is replaced.
pub fn count_one_sided_geodesics(
    j: &HyperbolicStructure,
    l: &LengthBound,
    q: &BallQuery,
) -> Result<GeodesicCount> {
    let spec = j.orbit_spec()?;
    let mut q = q.clone();
    q.log_r = l.threshold.clone();
    let result = count_ball(&spec, &q)?;
    Ok(GeodesicCount {
        raw_count: result.total,
        length: l.length,
        log_threshold: l.threshold.to_f64(),
        threshold: l.threshold.clone(),
        caveat: true,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(x: i64) -> BigRational {
        BigRational::from_integer(x.into())
    }

    #[test]
    fn conversions() {
        let l2 = 2.0 * 2f64.asinh();
        assert!((l2 - 2.887_270_9).abs() < 1e-7);
        assert!((length_to_coordinate(l2).unwrap() - 2.0).abs() < 1e-15);
        assert!((coordinate_to_length(2.0).unwrap() - 2.0 * (2.0 + 5f64.sqrt()).ln()).abs() < 1e-15);
        assert!(length_to_coordinate(0.0).is_err());
        assert!(length_to_coordinate(-1.0).is_err());
        assert!(coordinate_to_length(0.0).is_err());
        let x5 = length_to_coordinate(coordinate_to_length(5.0).unwrap()).unwrap();
        assert!((x5 - 5.0).abs() < 1e-12);
        // ln of the coordinate at L = 100 is 25 up to 2e-44.
        assert_eq!(log_threshold(100.0), 25.0);
        assert!((length_to_coordinate(100.0).unwrap().ln() - 25.0).abs() < 1e-14);
    }

    #[test]
    fn length_of_22() {
        // 2 asinh(242) = 2 ln(242 + sqrt(242^2 + 1)).
        let l = coordinate_to_length(22.0).unwrap();
        let direct = 2.0 * (242.0 + (242f64 * 242.0 + 1.0).sqrt()).ln();
        assert!((l - direct).abs() < 1e-13);
        assert!((l - 12.364_178_351_046_787).abs() < 1e-12);
    }

    #[test]
    fn structures() {
        let p = VarietyParams::default();
        let l2 = 2.0 * 2f64.asinh();
        let s = structure_from_lengths(&p, &[l2; 4], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(s.base_point(), &BasePoint::Exact(ExactPoint::markoff_root()));

        let big = (27.0 + 621f64.sqrt()) / 2.0;
        let l3 = coordinate_to_length(3.0).unwrap();
        let s = structure_from_lengths(&p, &[l3, l3, l3, coordinate_to_length(big).unwrap()], DEFAULT_TOLERANCE).unwrap();
        match s.base_point() {
            BasePoint::Real(c) => {
                assert_eq!(c[0], RealCoordinate::Rational(q(3)));
                assert!((c[3].to_f64() - 25.959_935_794_377_11).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }

        let l1 = coordinate_to_length(1.0).unwrap();
        assert!(matches!(
            structure_from_lengths(&p, &[l1; 4], DEFAULT_TOLERANCE),
            Err(Error::NotOnVariety { .. })
        ));

        let s = structure_from_partial(&p, &[l2; 3], RootChoice::Smaller).unwrap();
        assert_eq!(s.base_point(), &BasePoint::Exact(ExactPoint::markoff_root()));
        let s = structure_from_partial(&p, &[l2; 3], RootChoice::Larger).unwrap();
        assert_eq!(s.base_point(), &BasePoint::Exact(ExactPoint::from_integers(&p, &[2, 2, 2, 6]).unwrap()));
        assert!(matches!(
            structure_from_partial(&p, &[l1; 3], RootChoice::Smaller),
            Err(Error::NoRealSolution { .. })
        ));
    }

    #[test]
    fn counts() {
        let p = VarietyParams::default();
        let j = HyperbolicStructure::from_point(p, BasePoint::Exact(ExactPoint::markoff_root())).unwrap();
        let qy = BallQuery::radius(1);
        let b = LengthBound::of_coordinate(&q(22)).unwrap();
        assert_eq!(b.length(), coordinate_to_length(22.0).unwrap());
        let g = count_one_sided_geodesics(&j, &b, &qy).unwrap();
        assert_eq!(g.raw_count, 17);
        assert!(g.caveat);
        let g = count_one_sided_geodesics(&j, &LengthBound::from_length(1.0).unwrap(), &qy).unwrap();
        assert_eq!(g.raw_count, 0);
        let direct = count_ball(&j.orbit_spec().unwrap(), &BallQuery::new(LogBound::GeodesicLength(q(13)))).unwrap();
        let g = count_one_sided_geodesics(&j, &LengthBound::from_length(13.0).unwrap(), &qy).unwrap();
        assert_eq!(g.result, direct);
    }
}
