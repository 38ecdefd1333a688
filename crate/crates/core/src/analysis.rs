//! Count series and power-law fits `N(L) ~ c L^beta`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{count_ball, count_ball_multi, BallQuery, OrbitSpec};
use crate::error::{Error, Result};
use crate::threshold::LogBound;

/// Default sliding window of [`fit_power_law`].
pub const DEFAULT_WINDOW: usize = 5;

/// Default node budget of [`default_schedule`].
pub const DEFAULT_NODE_BUDGET: u64 = 20_000_000;

/// Default number of thresholds in [`default_schedule`].
pub const DEFAULT_SAMPLES: usize = 40;

/// Header of the CSV form of a [`CountSeries`].
pub const CSV_HEADER: &str = "L,logL,N,logN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Log radius of the ball.
    #[serde(rename = "L")]
    pub l: f64,
    /// Count (non-integral values are accepted for synthetic data).
    #[serde(rename = "N")]
    pub n: f64,
}

/// Ball counts at increasing log radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CountSeries {
    pub samples: Vec<Sample>,
    /// Digest of the orbit spec the counts came from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_digest: Option<String>,
}

impl CountSeries {
    /// Checks `L` strictly increasing, `N` nondecreasing and `N >= 1`.
    pub fn new(samples: Vec<Sample>, spec_digest: Option<String>) -> Result<Self> {
        for s in &samples {
            if !s.l.is_finite() || s.l <= 0.0 {
                return Err(Error::InvalidSeries(format!("L = {} is not a positive number", s.l)));
            }
            if !(s.n >= 1.0) || !s.n.is_finite() {
                return Err(Error::InvalidSeries(format!(
                    "N = {} at L = {} (counts must be at least 1)",
                    s.n, s.l
                )));
            }
        }
        for w in samples.windows(2) {
            if w[1].l <= w[0].l {
                return Err(Error::InvalidSeries(format!(
                    "L not strictly increasing at {} -> {}",
                    w[0].l, w[1].l
                )));
            }
            if w[1].n < w[0].n {
                return Err(Error::InvalidSeries(format!(
                    "N decreases from {} to {} at L = {}",
                    w[0].n, w[1].n, w[1].l
                )));
            }
        }
        Ok(CountSeries { samples, spec_digest })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV with header `L,logL,N,logN`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for p in &self.samples {
            let _ = writeln!(s, "{},{},{},{}", p.l, p.l.ln(), p.n, p.n.ln());
        }
        s
    }

    /// Reads the CSV form; the log columns are ignored but must parse.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some(h) if h.replace(' ', "") == CSV_HEADER => {}
            Some(h) => return Err(Error::Parse(format!("expected header {CSV_HEADER:?}, got {h:?}"))),
            None => return Err(Error::Parse("empty series".into())),
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::Parse(format!("row {}: expected 4 columns", i + 2)));
            }
            let bad = |c: &str| Error::Parse(format!("row {}: bad number {c:?}", i + 2));
            let l: f64 = cols[0].parse().map_err(|_| bad(cols[0]))?;
            let _: f64 = cols[1].parse().map_err(|_| bad(cols[1]))?;
            let n: f64 = cols[2].parse().map_err(|_| bad(cols[2]))?;
            let _: f64 = cols[3].parse().map_err(|_| bad(cols[3]))?;
            samples.push(Sample { l, n });
        }
        CountSeries::new(samples, None)
    }
}

/// Counts at every threshold in one traversal.
pub fn collect_series(spec: &OrbitSpec, thresholds: &[LogBound], q: &BallQuery) -> Result<CountSeries> {
    let counts = count_ball_multi(spec, q, thresholds)?;
    let samples = thresholds
        .iter()
        .zip(&counts)
        .map(|(t, c)| Sample { l: t.to_f64(), n: c.total as f64 })
        .collect();
    CountSeries::new(samples, Some(spec.digest()))
}

/// `count` values log-spaced from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<LogBound>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < lo < hi and at least 2 points (got {lo}, {hi}, {count})"
        )));
    }
    let r = (hi / lo).ln();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let l = if i + 1 == count { hi } else { lo * (r * i as f64 / (count - 1) as f64).exp() };
        out.push(LogBound::from_f64(l)?);
    }
    Ok(out)
}

/// Log-spaced thresholds from twice the base's max log up to the largest
/// `L` whose count is predicted to stay within `node_budget`.
///
/// The upper end is found by doubling `L` and extrapolating the local
/// power law of the last two probes once the next doubling would exceed
/// the budget.
pub fn default_schedule(spec: &OrbitSpec, q: &BallQuery, node_budget: u64, count: usize) -> Result<Vec<LogBound>> {
    let lo = 2.0 * spec.base().max_log_f64();
    if !(lo > 0.0) {
        return Err(Error::InvalidArgument("base max must exceed 1".into()));
    }
    let probe = |l: f64| -> Result<f64> {
        let mut qq = q.clone();
        qq.log_r = LogBound::from_f64(l)?;
        Ok(count_ball(spec, &qq)?.total.max(1) as f64)
    };
    let budget = node_budget as f64;
    let mut l = lo;
    let mut n = probe(l)?;
    let mut hi = l;
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..64 {
        let beta = match prev {
            Some((lp, np)) if n > np => (n / np).ln() / (l / lp).ln(),
            _ => 3.0,
        };
        let predicted = n * 2f64.powf(beta);
        if predicted > budget {
            hi = (l * (budget / n).powf(1.0 / beta)).max(l);
            break;
        }
        prev = Some((l, n));
        l *= 2.0;
        n = probe(l)?;
        hi = l;
    }
    if hi <= lo {
        hi = 2.0 * lo;
    }
    log_spaced(lo, hi, count)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExponentEstimate {
    pub beta: f64,
    pub log_c: f64,
    pub r_squared: f64,
    /// Slopes of least-squares fits over sliding windows of the fitted samples.
    pub window_slopes: Vec<f64>,
    pub window_size: usize,
    pub fit_range: (f64, f64),
    pub samples_used: usize,
}

impl ExponentEstimate {
    /// Spread (max - min) of the window slopes over the first and last half.
    pub fn slope_spreads(&self) -> (f64, f64) {
        let w = &self.window_slopes;
        let half = w.len() / 2;
        (spread(&w[..half]), spread(&w[w.len() - half..]))
    }
}

fn spread(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Ordinary least squares of `y` on `x`: slope, intercept, R^2.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    (slope, icept, r2)
}

/// Fits `ln N = ln c + beta ln L` over the samples with `L` in `fit_range`
/// (inclusive; all samples when `None`).
pub fn fit_power_law(
    series: &CountSeries,
    fit_range: Option<(f64, f64)>,
    window: usize,
) -> Result<ExponentEstimate> {
    let pts: Vec<&Sample> = series
        .samples
        .iter()
        .filter(|s| fit_range.is_none_or(|(a, b)| s.l >= a && s.l <= b))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: pts.len(),
        });
    }
    let x: Vec<f64> = pts.iter().map(|s| s.l.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|s| s.n.ln()).collect();
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::DegenerateRange);
    }
    let (beta, log_c, r_squared) = ols(&x, &y);
    let window = window.max(2);
    let window_slopes = if pts.len() >= window {
        (0..=pts.len() - window)
            .map(|i| ols(&x[i..i + window], &y[i..i + window]).0)
            .collect()
    } else {
        Vec::new()
    };
    Ok(ExponentEstimate {
        beta,
        log_c,
        r_squared,
        window_slopes,
        window_size: window,
        fit_range: (pts[0].l, pts[pts.len() - 1].l),
        samples_used: pts.len(),
    })
}

/// The upper half of the series' range on a log scale: `[sqrt(Lmin Lmax), Lmax]`.
pub fn upper_half(series: &CountSeries) -> Option<(f64, f64)> {
    let lo = series.samples.first()?.l;
    let hi = series.samples.last()?.l;
    Some(((lo * hi).sqrt(), hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BracketVerdict {
    Inside,
    Below,
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketCheck {
    pub verdict: BracketVerdict,
    /// Distance to the nearer endpoint.
    pub margin: f64,
}

/// Places `beta` relative to the interval `[lo, hi]`.
pub fn bracket_check(beta: f64, lo: f64, hi: f64) -> Result<BracketCheck> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("bracket needs lo < hi, got {lo}, {hi}")));
    }
    let (verdict, margin) = if beta < lo {
        (BracketVerdict::Below, lo - beta)
    } else if beta > hi {
        (BracketVerdict::Above, beta - hi)
    } else {
        (BracketVerdict::Inside, (beta - lo).min(hi - beta))
    };
    Ok(BracketCheck { verdict, margin })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(c: f64, beta: f64, count: usize) -> CountSeries {
        let samples = (0..count)
            .map(|i| {
                let l = 10f64 * 1.3f64.powi(i as i32);
                Sample { l, n: c * l.powf(beta) }
            })
            .collect();
        CountSeries::new(samples, None).unwrap()
    }

    #[test]
    fn exact_power_law() {
        let x: Vec<f64> = (0..20).map(|i| (2.0 + i as f64 * 0.3).ln()).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.45 * v).collect();
        let (b, c, r2) = ols(&x, &y);
        assert!((b - 2.45).abs() < 1e-9 && c.abs() < 1e-9 && (r2 - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| 3.7f64.ln() + 2.43 * v).collect();
        let (b, c, _) = ols(&x, &y);
        assert!((b - 2.43).abs() < 1e-9 && (c - 3.7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn fit_series() {
        let s = synthetic(1.0, 2.45, 20);
        let e = fit_power_law(&s, None, DEFAULT_WINDOW).unwrap();
        assert!((e.beta - 2.45).abs() < 1e-9);
        assert!(e.log_c.abs() < 1e-9);
        let e = fit_power_law(&synthetic(3.7, 2.43, 20), None, DEFAULT_WINDOW).unwrap();
        assert!((e.beta - 2.43).abs() < 1e-9);
        assert!((e.log_c - 3.7f64.ln()).abs() < 1e-9);
        for w in &e.window_slopes {
            assert!((w - 2.43).abs() < 1e-9);
        }
        assert_eq!(e.window_slopes.len(), 20 - 5 + 1);
        assert!(e.r_squared > 0.999_999);

        let short = CountSeries::new(s.samples[..2].to_vec(), None).unwrap();
        assert_eq!(
            fit_power_law(&short, None, 5).unwrap_err(),
            Error::InsufficientSamples { needed: 3, got: 2 }
        );
    }

    #[test]
    fn series_invariants() {
        let ok = CountSeries::new(vec![Sample { l: 1.0, n: 1.0 }, Sample { l: 2.0, n: 1.0 }], None);
        assert!(ok.is_ok());
        for bad in [
            vec![Sample { l: 1.0, n: 0.0 }],
            vec![Sample { l: 2.0, n: 1.0 }, Sample { l: 2.0, n: 3.0 }],
            vec![Sample { l: 1.0, n: 5.0 }, Sample { l: 2.0, n: 3.0 }],
        ] {
            assert!(matches!(CountSeries::new(bad, None), Err(Error::InvalidSeries(_))));
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = synthetic(2.0, 2.44, 8);
        let csv = s.to_csv();
        assert!(csv.starts_with("L,logL,N,logN\n"));
        assert_eq!(CountSeries::from_csv(&csv).unwrap(), s);
        assert!(CountSeries::from_csv("x,y\n1,2").is_err());
    }

    #[test]
    fn bracket_examples() {
        let b = bracket_check(2.45, 2.430, 2.477).unwrap();
        assert_eq!(b.verdict, BracketVerdict::Inside);
        assert!((b.margin - 0.020).abs() < 1e-12);
        let b = bracket_check(2.40, 2.430, 2.477).unwrap();
        assert_eq!(b.verdict, BracketVerdict::Below);
        assert!((b.margin - 0.030).abs() < 1e-12);
        let b = bracket_check(2.50, 2.430, 2.477).unwrap();
        assert_eq!(b.verdict, BracketVerdict::Above);
        assert!((b.margin - 0.023).abs() < 1e-12);
        assert!(bracket_check(2.5, 3.0, 2.0).is_err());
    }

    #[test]
    fn small_series() {
        let spec = OrbitSpec::markoff();
        let ts: Vec<LogBound> = [10, 30, 100].iter().map(|&r| LogBound::ln_of_integer(r)).collect();
        let s = collect_series(&spec, &ts, &BallQuery::radius(1)).unwrap();
        assert_eq!(s.samples.iter().map(|p| p.n).collect::<Vec<_>>(), vec![5.0, 17.0, 29.0]);
        let with_zero = [LogBound::from_f64(0.5).unwrap(), LogBound::ln_of_integer(10)];
        assert!(matches!(
            collect_series(&spec, &with_zero, &BallQuery::radius(1)),
            Err(Error::InvalidSeries(_))
        ));
    }

    #[test]
    fn schedule_respects_budget() {
        let spec = OrbitSpec::markoff();
        let q = BallQuery::radius(1).with_backend(crate::engine::Backend::Log);
        let ts = default_schedule(&spec, &q, 100_000, 12).unwrap();
        assert_eq!(ts.len(), 12);
        assert!((ts[0].to_f64() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let mut qq = q.clone();
        qq.log_r = ts.last().unwrap().clone();
        let n = count_ball(&spec, &qq).unwrap().total;
        assert!(n > 30_000 && n < 150_000, "{n}");
    }
}
