//! Pruned traversal of the orbit tree.
//!
//! Nodes of the tree are reduced words `g`, the base point being the empty
//! word, and each node carries the point `g.o`. A ball query counts the
//! nodes whose largest coordinate is at most `e^t`. Outside the compact set
//! `K` every move other than the one undoing the last step strictly raises
//! the maximum, so the subtree below a node that is outside both `K` and
//! the ball can be skipped.

mod checkpoint;
mod run;

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{LogPoint, PrecisionConfig, RealCoordinate};
use crate::threshold::LogBound;
use crate::variety::{defect, ExactPoint, MoveIndex, ReducedWord, VarietyParams};

pub use checkpoint::{checkpoint_resume, checkpoint_save, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use run::Traversal;

/// Default guard on word length.
pub const DEFAULT_DEPTH_CAP: usize = 10_000;

/// Largest threshold (log scale) for which `auto` picks exact arithmetic.
pub const AUTO_EXACT_MAX_LOG: f64 = 64.0;

/// The point `o` a traversal starts from.
#[derive(Clone, Debug, PartialEq)]
pub enum BasePoint {
    /// Rational coordinates.
    Exact(ExactPoint),
    /// Coordinates known exactly, some of them quadratic irrationals.
    Real(Vec<RealCoordinate>),
    /// Logs only; no precision beyond the stored one is available.
    Approx(LogPoint),
}

impl BasePoint {
    pub fn dim(&self) -> usize {
        match self {
            BasePoint::Exact(p) => p.dim(),
            BasePoint::Real(c) => c.len(),
            BasePoint::Approx(l) => l.dim(),
        }
    }

    pub fn as_exact(&self) -> Option<&ExactPoint> {
        match self {
            BasePoint::Exact(p) => Some(p),
            _ => None,
        }
    }

    pub(crate) fn real_coords(&self) -> Option<Vec<RealCoordinate>> {
        match self {
            BasePoint::Exact(p) => Some(
                p.coords()
                    .iter()
                    .cloned()
                    .map(RealCoordinate::Rational)
                    .collect(),
            ),
            BasePoint::Real(c) => Some(c.clone()),
            BasePoint::Approx(_) => None,
        }
    }

    /// Coordinates as doubles (may overflow to infinity for huge points).
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            BasePoint::Exact(p) => p.to_f64(),
            BasePoint::Real(c) => c.iter().map(RealCoordinate::to_f64).collect(),
            BasePoint::Approx(l) => l.logs_f64().into_iter().map(f64::exp).collect(),
        }
    }

    /// Log of the largest coordinate, as a double.
    pub fn max_log_f64(&self) -> f64 {
        match self {
            BasePoint::Approx(l) => l.max_log_f64(),
            BasePoint::Exact(p) => crate::threshold::ln_rational_f64(p.max()),
            BasePoint::Real(c) => c
                .iter()
                .map(|x| x.to_f64().ln())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn digest_json(&self) -> serde_json::Value {
        match self {
            BasePoint::Exact(p) => serde_json::json!({ "exact": p }),
            BasePoint::Real(c) => {
                let v: Vec<serde_json::Value> = c
                    .iter()
                    .map(|x| match x {
                        RealCoordinate::Rational(q) => {
                            serde_json::json!(crate::variety::format_rational(q))
                        }
                        RealCoordinate::Root(r) => serde_json::json!({
                            "sum": crate::variety::format_rational(r.sum()),
                            "disc": crate::variety::format_rational(r.discriminant()),
                            "choice": r.choice(),
                        }),
                    })
                    .collect();
                serde_json::json!({ "real": v })
            }
            BasePoint::Approx(l) => serde_json::json!({ "log": l }),
        }
    }
}

impl fmt::Display for BasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasePoint::Exact(p) => write!(f, "{p}"),
            _ => {
                let v = self.to_f64();
                write!(f, "(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// One enumeration problem: variety, base point, compact set and the moves
/// excluded at the root.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSpec {
    params: VarietyParams,
    base: BasePoint,
    k_radius: LogBound,
    forbidden_first_moves: Vec<MoveIndex>,
}

/// Relative defect accepted for bases given by irrational coordinates.
const REAL_BASE_TOLERANCE: f64 = 1e-9;

impl OrbitSpec {
    pub fn new(params: VarietyParams, base: BasePoint) -> Result<Self> {
        if base.dim() != params.n() {
            return Err(Error::DimensionMismatch {
                expected: params.n(),
                actual: base.dim(),
            });
        }
        match &base {
            BasePoint::Exact(p) => {
                let d = defect(&params, p.coords())?;
                if !num_traits::Zero::is_zero(&d) {
                    return Err(Error::NotOnVariety {
                        defect: crate::variety::format_rational(&d),
                    });
                }
            }
            BasePoint::Real(c) => {
                if let Some(q) = c.iter().map(|x| x.as_rational()).collect::<Option<Vec<_>>>() {
                    let d = defect(&params, &q)?;
                    if !num_traits::Zero::is_zero(&d) {
                        return Err(Error::NotOnVariety {
                            defect: crate::variety::format_rational(&d),
                        });
                    }
                } else {
                    let rel = relative_defect_f64(&params, &base.to_f64());
                    if !(rel <= REAL_BASE_TOLERANCE) {
                        return Err(Error::NotOnVariety {
                            defect: format!("{rel:e} (relative)"),
                        });
                    }
                }
            }
            BasePoint::Approx(l) => {
                let logs = l.logs_f64();
                if logs.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument("base logs must be finite".into()));
                }
            }
        }
        Ok(OrbitSpec {
            params,
            base,
            k_radius: LogBound::ln_of_integer(10),
            forbidden_first_moves: Vec::new(),
        })
    }

    /// Base `(2,2,2,2)` on the default variety.
    pub fn markoff() -> Self {
        OrbitSpec::new(
            VarietyParams::default(),
            BasePoint::Exact(ExactPoint::markoff_root()),
        )
        .expect("(2,2,2,2) lies on the default variety")
    }

    pub fn from_exact(params: VarietyParams, base: ExactPoint) -> Result<Self> {
        OrbitSpec::new(params, BasePoint::Exact(base))
    }

    /// Sets the radius of `K`; it may not be below `ln 10`.
    pub fn with_k_radius(mut self, k: LogBound) -> Result<Self> {
        if k.cmp_bound(&LogBound::ln_of_integer(10))? == std::cmp::Ordering::Less {
            return Err(Error::InvalidArgument(format!(
                "K radius {k} is below ln 10"
            )));
        }
        self.k_radius = k;
        Ok(self)
    }

    pub fn with_forbidden_first_moves(mut self, moves: Vec<MoveIndex>) -> Result<Self> {
        for m in &moves {
            if m.get() > self.params.n() {
                return Err(Error::LetterOutOfRange {
                    letter: m.get(),
                    n: self.params.n(),
                });
            }
        }
        let mut moves = moves;
        moves.sort();
        moves.dedup();
        self.forbidden_first_moves = moves;
        Ok(self)
    }

    pub fn params(&self) -> &VarietyParams {
        &self.params
    }

    pub fn base(&self) -> &BasePoint {
        &self.base
    }

    pub fn k_radius(&self) -> &LogBound {
        &self.k_radius
    }

    pub fn forbidden_first_moves(&self) -> &[MoveIndex] {
        &self.forbidden_first_moves
    }

    /// The sub-orbit hanging off one root found by [`suborbit_roots`].
    pub fn for_suborbit(&self, root: &SubOrbitRoot) -> Result<OrbitSpec> {
        let base = match &root.point {
            NodePoint::Exact(p) => BasePoint::Exact(p.clone()),
            NodePoint::Log(l) => BasePoint::Approx(l.clone()),
        };
        let s = OrbitSpec {
            params: self.params.clone(),
            base,
            k_radius: self.k_radius.clone(),
            forbidden_first_moves: Vec::new(),
        };
        s.with_forbidden_first_moves(vec![root.return_move])
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let v = serde_json::json!({
            "params": self.params,
            "base": self.base.digest_json(),
            "kRadius": self.k_radius,
            "forbiddenFirstMoves": self.forbidden_first_moves,
        });
        sha256_hex(&v)
    }
}

pub(crate) fn sha256_hex(v: &serde_json::Value) -> String {
    let s = serde_json::to_string(v).expect("json value serializes");
    hex::encode(Sha256::digest(s.as_bytes()))
}

pub(crate) fn relative_defect_f64(params: &VarietyParams, x: &[f64]) -> f64 {
    let a = params.a().to_f64().unwrap_or(f64::NAN);
    let sq: f64 = x.iter().map(|v| v * v).sum();
    let prod: f64 = a * x.iter().product::<f64>();
    (sq - prod).abs() / sq.max(prod)
}

/// Arithmetic used for the traversal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Exact rational coordinates throughout.
    Exact,
    /// Log coordinates with certified error bounds.
    Log,
    /// Exact for rational bases and modest radii, log otherwise.
    Auto,
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Backend::Exact),
            "log" => Ok(Backend::Log),
            "auto" => Ok(Backend::Auto),
            other => Err(Error::InvalidArgument(format!(
                "unknown backend {other:?} (expected exact, log or auto)"
            ))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Log => "log",
            Backend::Auto => "auto",
        })
    }
}

/// A ball `max x_i <= e^t` plus the knobs of a single run.
#[derive(Clone, Debug, PartialEq)]
pub struct BallQuery {
    pub log_r: LogBound,
    pub count_only: bool,
    pub depth_cap: Option<usize>,
    pub precision: PrecisionConfig,
    pub backend: Backend,
    /// Worker threads; results do not depend on it.
    pub threads: usize,
}

impl BallQuery {
    pub fn new(log_r: LogBound) -> Self {
        BallQuery {
            log_r,
            count_only: true,
            depth_cap: Some(DEFAULT_DEPTH_CAP),
            precision: PrecisionConfig::default(),
            backend: Backend::Auto,
            threads: 1,
        }
    }

    /// The ball of radius `R` (an exact rational).
    pub fn radius(r: i64) -> Self {
        BallQuery::new(LogBound::ln_of_integer(r))
    }

    pub fn with_depth_cap(mut self, cap: Option<usize>) -> Self {
        self.depth_cap = cap;
        self
    }

    pub fn with_precision(mut self, p: PrecisionConfig) -> Self {
        self.precision = p;
        self
    }

    pub fn with_backend(mut self, b: Backend) -> Self {
        self.backend = b;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn with_count_only(mut self, count_only: bool) -> Self {
        self.count_only = count_only;
        self
    }

    pub(crate) fn effective_depth_cap(&self) -> usize {
        self.depth_cap.unwrap_or(usize::MAX)
    }
}

/// Node counts of one ball.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CountResult {
    pub total: u64,
    pub by_depth: Vec<u64>,
    /// Nodes whose comparison or move needed more precision than the run
    /// started with.
    pub indeterminate_resolved: u64,
    pub truncated_by_depth_cap: bool,
}

/// A node's point as handed to visitors.
#[derive(Clone, Debug, PartialEq)]
pub enum NodePoint {
    Exact(ExactPoint),
    Log(LogPoint),
}

impl NodePoint {
    /// Natural logs of the coordinates, as doubles.
    pub fn logs_f64(&self) -> Vec<f64> {
        match self {
            NodePoint::Exact(p) => p
                .coords()
                .iter()
                .map(crate::threshold::ln_rational_f64)
                .collect(),
            NodePoint::Log(l) => l.logs_f64(),
        }
    }

    pub fn max_log_f64(&self) -> f64 {
        self.logs_f64().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn as_exact(&self) -> Option<&ExactPoint> {
        match self {
            NodePoint::Exact(p) => Some(p),
            NodePoint::Log(_) => None,
        }
    }
}

impl fmt::Display for NodePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodePoint::Exact(p) => write!(f, "{p}"),
            NodePoint::Log(l) => write!(f, "exp{l}"),
        }
    }
}

/// Callback invoked once per node inside the ball.
pub type Visitor<'a> =
    dyn Fn(&ReducedWord, &NodePoint) -> std::result::Result<(), String> + Sync + 'a;

/// A point one move outside `K` whose parent lies inside `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubOrbitRoot {
    pub word: ReducedWord,
    pub point: NodePoint,
    /// The move taking the root back into `K`.
    pub return_move: MoveIndex,
}

/// Counts the tree nodes inside the ball of `q`.
pub fn count_ball(spec: &OrbitSpec, q: &BallQuery) -> Result<CountResult> {
    let mut t = Traversal::new(spec, q)?;
    t.run_to_end()?;
    Ok(t.results().swap_remove(0))
}

/// Counts for several increasing thresholds in one traversal.
pub fn count_ball_multi(
    spec: &OrbitSpec,
    q: &BallQuery,
    thresholds: &[LogBound],
) -> Result<Vec<CountResult>> {
    let mut t = Traversal::new_multi(spec, q, thresholds)?;
    t.run_to_end()?;
    Ok(t.results())
}

/// Calls `visitor` on every node inside the ball. With more than one thread
/// the visitor runs concurrently.
pub fn enumerate_ball(spec: &OrbitSpec, q: &BallQuery, visitor: &Visitor<'_>) -> Result<CountResult> {
    let mut t = Traversal::new(spec, q)?;
    t.run_with_visitor(Some(visitor))?;
    Ok(t.results().swap_remove(0))
}

/// [`enumerate_ball`] with a visitor that is never called concurrently.
pub fn enumerate_ball_serial<F>(spec: &OrbitSpec, q: &BallQuery, visitor: F) -> Result<CountResult>
where
    F: FnMut(&ReducedWord, &NodePoint) -> std::result::Result<(), String> + Send,
{
    let cell = std::sync::Mutex::new(visitor);
    let wrapped = |w: &ReducedWord, p: &NodePoint| -> std::result::Result<(), String> {
        let mut f = cell.lock().map_err(|_| "visitor panicked".to_string())?;
        (*f)(w, p)
    };
    enumerate_ball(spec, q, &wrapped)
}

/// All orbit points just outside the ball of radius `k_radius` whose
/// parent lies inside it, each with the move leading back inside.
pub fn suborbit_roots(
    spec: &OrbitSpec,
    k_radius: &LogBound,
    q: &BallQuery,
) -> Result<Vec<SubOrbitRoot>> {
    run::find_roots(spec, k_radius, q)
}

/// Whether `x <= e^t`, decided exactly (the boundary counts as inside).
pub fn inside_ball(x: &BigRational, t: &LogBound) -> Result<bool> {
    Ok(t.cmp_ln(x)? != std::cmp::Ordering::Greater)
}
