use std::cmp::Ordering;

use markoff_core::analysis::{CountSeries, Sample};
use markoff_core::descent::{reduce_to_root, DescentCertificate};
use markoff_core::engine::{count_ball, count_ball_multi, BallQuery, Checkpoint, OrbitSpec, Traversal};
use markoff_core::geodesics::{coordinate_to_length, length_to_coordinate, log_threshold};
use markoff_core::numerics::{certified_compare, log_move, to_log_point, LogPoint, PrecisionConfig, Verdict};
use markoff_core::threshold::LogBound;
use markoff_core::variety::{apply_word, ExactPoint, MoveIndex, ReducedWord, VarietyParams};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn reduced(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=4, 0..=max_len).prop_map(|mut v| {
        v.dedup();
        v
    })
}

fn ln_rational(q: &BigRational) -> f64 {
    let ln_int = |x: &BigInt| {
        let bits = x.bits();
        if bits <= 64 {
            x.to_f64().unwrap().ln()
        } else {
            let shift = bits - 64;
            (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
        }
    };
    ln_int(q.numer()) - ln_int(q.denom())
}

fn point(letters: &[usize]) -> ExactPoint {
    let p = VarietyParams::default();
    let w = ReducedWord::from_letters(letters, 4).unwrap();
    apply_word(&p, &ExactPoint::markoff_root(), &w).unwrap()
}

/// Walks `letters` through the log kernels, checking each step against
/// the exact point.
fn track(letters: &[usize], bits: u32) -> Result<(ExactPoint, LogPoint), TestCaseError> {
    let params = VarietyParams::default();
    let cfg = PrecisionConfig::with_bits(bits).unwrap();
    let mut lp = to_log_point(&ExactPoint::markoff_root(), &cfg);
    for i in 0..letters.len() {
        let m = MoveIndex::new(letters[i], 4).unwrap();
        lp = log_move(&params, &lp, m, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let x = point(&letters[..=i]);
        for (k, c) in x.coords().iter().enumerate() {
            let want = ln_rational(c);
            let got = lp.log_f64(k);
            let slack = lp.err_bound() + 4.0 * f64::EPSILON * want.abs().max(1.0);
            prop_assert!(
                (got - want).abs() <= slack,
                "{bits} bits, word {:?}, coordinate {k}: {got} vs {want} (bound {})",
                &letters[..=i],
                lp.err_bound()
            );
        }
    }
    Ok((point(letters), lp))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduce_inverts_apply(letters in reduced(30)) {
        let params = VarietyParams::default();
        let x = point(&letters);
        let cert = reduce_to_root(&params, &x).unwrap();
        let mut rev = letters.clone();
        rev.reverse();
        prop_assert_eq!(cert.word.to_vec(), rev);
        prop_assert_eq!(&cert.root, &ExactPoint::markoff_root());
        prop_assert_eq!(cert.steps.len(), letters.len() + 1);
        prop_assert!(cert.steps.windows(2).all(|s| s[1] < s[0]));
        let path = cert.path(&params);
        prop_assert_eq!(path.first().unwrap(), &x);
        prop_assert_eq!(path.last().unwrap(), &cert.root);
    }

    #[test]
    fn log_kernels_track_exact_points(letters in reduced(25), tier in 0usize..3) {
        track(&letters, [53, 106, 200][tier])?;
    }

    #[test]
    fn certified_compare_is_sound(letters in reduced(20), offset in -1e-6f64..1e-6, tier in 0usize..3) {
        let (x, lp) = track(&letters, [53, 106, 200][tier])?;
        let t = ln_rational(x.max()) + offset;
        let exact = LogBound::from_f64(t).unwrap().cmp_ln(x.max()).unwrap();
        match certified_compare(&lp, t) {
            Verdict::Below => prop_assert_ne!(exact, Ordering::Greater),
            Verdict::Above => prop_assert_eq!(exact, Ordering::Greater),
            Verdict::Indeterminate => {}
        }
    }

    #[test]
    fn serde_round_trips(letters in reduced(20), bits in 53u32..300) {
        let params = VarietyParams::default();
        let x = point(&letters);
        let s = serde_json::to_string(&x).unwrap();
        prop_assert_eq!(serde_json::from_str::<ExactPoint>(&s).unwrap(), x.clone());

        let cfg = PrecisionConfig::with_bits(bits).unwrap();
        let mut lp = to_log_point(&ExactPoint::markoff_root(), &cfg);
        for &l in &letters {
            lp = log_move(&params, &lp, MoveIndex::new(l, 4).unwrap(), &cfg).unwrap();
        }
        let s = serde_json::to_string(&lp).unwrap();
        prop_assert_eq!(serde_json::from_str::<LogPoint>(&s).unwrap(), lp);

        let cert = reduce_to_root(&params, &x).unwrap();
        let s = serde_json::to_string(&cert).unwrap();
        prop_assert_eq!(serde_json::from_str::<DescentCertificate>(&s).unwrap(), cert);
    }

    #[test]
    fn log_bounds_print_and_parse(num in 1i64..1_000_000, den in 1i64..1000, kind in 0usize..4) {
        let q = BigRational::new(num.into(), den.into());
        let b = match kind {
            0 => LogBound::Value(q),
            1 => LogBound::LnOf(q),
            2 => LogBound::ExpOf(BigRational::new((num % 50).into(), 1.into())),
            _ => LogBound::GeodesicLength(q),
        };
        prop_assert_eq!(LogBound::parse(&b.to_string()).unwrap(), b.clone());
        let s = serde_json::to_string(&b).unwrap();
        prop_assert_eq!(serde_json::from_str::<LogBound>(&s).unwrap(), b);
    }

    #[test]
    fn conversions_are_monotone(a in 1e-6f64..1e3, b in 1e-6f64..1e3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(coordinate_to_length(lo).unwrap() <= coordinate_to_length(hi).unwrap());
        prop_assert!(length_to_coordinate(lo).unwrap() <= length_to_coordinate(hi).unwrap());
        prop_assert!(log_threshold(lo) <= log_threshold(hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn multi_threshold_matches_single_runs(mut radii in prop::collection::vec(1i64..200_000, 1..6)) {
        radii.sort();
        radii.dedup();
        let spec = OrbitSpec::markoff();
        let ts: Vec<LogBound> = radii.iter().map(|&r| LogBound::ln_of_integer(r)).collect();
        let multi = count_ball_multi(&spec, &BallQuery::radius(2), &ts).unwrap();
        for (r, m) in radii.iter().zip(&multi) {
            let single = count_ball(&spec, &BallQuery::radius(*r)).unwrap();
            prop_assert_eq!(&single, m);
            prop_assert_eq!(single.by_depth.iter().sum::<u64>(), single.total);
        }
        prop_assert!(multi.windows(2).all(|w| w[0].total <= w[1].total));
    }

    #[test]
    fn checkpoint_split_matches_full_run(steps in 1u64..2000, threads in 1usize..5, t in 20.0f64..40.0) {
        let spec = OrbitSpec::markoff();
        let q = BallQuery::new(LogBound::from_f64(t).unwrap())
            .with_backend(markoff_core::engine::Backend::Log)
            .with_precision(PrecisionConfig::with_bits(53).unwrap());
        let full = count_ball(&spec, &q).unwrap();
        let mut tr = Traversal::new(&spec, &q).unwrap();
        tr.step(steps).unwrap();
        let c = Checkpoint::from_json(&tr.checkpoint().to_json()).unwrap();
        let mut resumed = Traversal::resume(&spec, &q.clone().with_threads(threads), &c).unwrap();
        resumed.run_to_end().unwrap();
        prop_assert_eq!(resumed.results().swap_remove(0), full);
    }
}

#[test]
fn series_csv_round_trip() {
    let samples: Vec<Sample> = (1..=12)
        .map(|i| {
            let l = 3.0 * i as f64;
            Sample { l, n: (l.powf(2.44)).floor().max(1.0) }
        })
        .collect();
    let s = CountSeries::new(samples, None).unwrap();
    assert_eq!(CountSeries::from_csv(&s.to_csv()).unwrap(), s);
}
