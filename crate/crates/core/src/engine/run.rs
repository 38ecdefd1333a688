//! Depth-first traversal with pausing, tier escalation and a parallel
//! reduction over frontier items.

use std::any::Any;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_rational::BigRational;
use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    sha256_hex, Backend, BallQuery, BasePoint, CountResult, NodePoint, OrbitSpec, SubOrbitRoot,
    Visitor, AUTO_EXACT_MAX_LOG,
};
use crate::error::{Error, Result};
use crate::numerics::kernel::{MoveCtx, Pt};
use crate::numerics::tier::{Arith, Tier, K_ARITH};
use crate::numerics::{compare_pt, move_ctx, on_repr, on_tier, pt_from_coords, LogPoint, Verdict};
use crate::numerics::PrecisionConfig;
use crate::threshold::{ln_rational_f64, LogBound};
use crate::variety::{moved_coordinate, ExactPoint, MoveIndex, ReducedWord, VarietyParams};

/// Marks the frame of an item root, whose word is already on the path.
const NONE: u8 = u8::MAX;

/// Escalation stops once a retry would need more bits than this.
pub(crate) const MAX_ESCALATION_BITS: u32 = 4096;

/// Frontier size per worker thread before the parallel phase starts.
const ITEMS_PER_THREAD: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum ItemPoint {
    Exact(Vec<BigRational>),
    Log(LogPoint),
}

/// An unexplored subtree: its root word and the point at that word.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Item {
    pub word: Vec<u8>,
    pub point: ItemPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub(crate) enum Mode {
    Count,
    Roots,
}

/// A query with everything resolved against its spec.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plan {
    pub thresholds: Vec<LogBound>,
    /// Radius of the set inside which nothing is pruned.
    pub k: LogBound,
    pub depth_cap: usize,
    pub depth_cap_raw: Option<usize>,
    pub precision: PrecisionConfig,
    pub backend: Backend,
    pub tier: Tier,
    pub mode: Mode,
    pub count_only: bool,
}

impl Plan {
    pub(crate) fn digest(&self) -> String {
        let v = serde_json::json!({
            "thresholds": self.thresholds,
            "k": self.k,
            "depthCap": self.depth_cap_raw,
            "precision": self.precision,
            "backend": self.backend,
            "mode": self.mode,
            "countOnly": self.count_only,
        });
        sha256_hex(&v)
    }
}

/// Counts gathered by one worker; merged by elementwise addition.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Tally {
    /// `hist[b][d]`: nodes at depth `d` lying above exactly `b` thresholds.
    pub hist: Vec<Vec<u64>>,
    pub escalations: u64,
    pub truncated: bool,
    pub visited: u64,
    pub roots: Vec<(Vec<u8>, ItemPoint)>,
}

impl Tally {
    pub(crate) fn new(buckets: usize) -> Self {
        Tally {
            hist: vec![Vec::new(); buckets],
            ..Tally::default()
        }
    }

    fn add(&mut self, bucket: usize, depth: usize) {
        let h = &mut self.hist[bucket];
        if h.len() <= depth {
            h.resize(depth + 1, 0);
        }
        h[depth] += 1;
    }

    pub(crate) fn merge(&mut self, other: Tally) {
        for (h, o) in self.hist.iter_mut().zip(other.hist) {
            if h.len() < o.len() {
                h.resize(o.len(), 0);
            }
            for (a, b) in h.iter_mut().zip(o) {
                *a += b;
            }
        }
        self.escalations += other.escalations;
        self.truncated |= other.truncated;
        self.visited += other.visited;
        self.roots.extend(other.roots);
    }

    /// Cumulative counts, one result per threshold.
    pub(crate) fn results(&self) -> Vec<CountResult> {
        let mut acc: Vec<u64> = Vec::new();
        let mut out = Vec::with_capacity(self.hist.len());
        for h in &self.hist {
            if acc.len() < h.len() {
                acc.resize(h.len(), 0);
            }
            for (a, b) in acc.iter_mut().zip(h) {
                *a += b;
            }
            let mut by_depth = acc.clone();
            while by_depth.last() == Some(&0) {
                by_depth.pop();
            }
            out.push(CountResult {
                total: by_depth.iter().sum(),
                by_depth,
                indeterminate_resolved: self.escalations,
                truncated_by_depth_cap: self.truncated,
            });
        }
        out
    }
}

struct Budget(Option<u64>);

impl Budget {
    fn exhausted(&self) -> bool {
        self.0 == Some(0)
    }

    fn spend(&mut self) {
        if let Some(b) = &mut self.0 {
            *b -= 1;
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Class {
    /// Number of thresholds strictly below the node's max.
    bucket: usize,
    inside_k: bool,
}

/// Per-tier constants: move context and thresholds rounded into the tier.
struct TierCtx<A: Arith> {
    tier: Tier,
    mv: MoveCtx<A>,
    t: Vec<(A::V, f64)>,
    k: (A::V, f64),
    /// `None` when the base is only known at another tier.
    base: Option<Pt<A::V>>,
}

pub(crate) type TierCache = Mutex<HashMap<Tier, Arc<dyn Any + Send + Sync>>>;

/// Shared, read-only state of one traversal.
struct Run<'a> {
    params: &'a VarietyParams,
    n: usize,
    base: &'a BasePoint,
    exact_base: Option<&'a [BigRational]>,
    forbidden: Vec<bool>,
    plan: &'a Plan,
    t_f64: Vec<f64>,
    visitor: Option<&'a Visitor<'a>>,
    cache: &'a TierCache,
}

fn walk_exact(params: &VarietyParams, base: &[BigRational], word: &[u8]) -> Vec<BigRational> {
    let mut c = base.to_vec();
    for &l in word {
        let v = moved_coordinate(params, &c, l as usize);
        c[l as usize] = v;
    }
    c
}

fn max_of(x: &[BigRational]) -> &BigRational {
    x.iter().max().expect("points have coordinates")
}

impl<'a> Run<'a> {
    fn new(
        spec: &'a OrbitSpec,
        plan: &'a Plan,
        visitor: Option<&'a Visitor<'a>>,
        cache: &'a TierCache,
    ) -> Self {
        let n = spec.params().n();
        let mut forbidden = vec![false; n];
        for m in spec.forbidden_first_moves() {
            forbidden[m.position()] = true;
        }
        Run {
            params: spec.params(),
            n,
            base: spec.base(),
            exact_base: spec.base().as_exact().map(|p| p.coords()),
            forbidden,
            plan,
            t_f64: plan.thresholds.iter().map(LogBound::to_f64).collect(),
            visitor,
            cache,
        }
    }

    fn build_tier<A: Arith>(&self, tier: Tier, arith: A) -> TierCtx<A> {
        let mv = move_ctx(arith, self.params, self.plan.precision.max_err());
        let a = &mv.arith;
        let extra = a.bits() + 32;
        let conv = |b: &LogBound| {
            let v = a.from_raw(&b.eval_raw(extra), extra);
            let e = K_ARITH * a.eps() * a.to_f64(&v).abs().max(1.0);
            (v, e)
        };
        let t = self.plan.thresholds.iter().map(conv).collect();
        let k = conv(&self.plan.k);
        let base = match self.base {
            BasePoint::Approx(lp) if lp.tier() == tier => A::unwrap(&lp.0).cloned(),
            BasePoint::Approx(_) => None,
            b => Some(pt_from_coords(&mv, &b.real_coords().expect("base has coordinates"))),
        };
        TierCtx { tier, mv, t, k, base }
    }

    fn tier_ctx<A: Arith>(&self, tier: Tier, arith: A) -> Arc<TierCtx<A>> {
        let mut cache = self.cache.lock().expect("tier cache poisoned");
        if let Some(c) = cache.get(&tier) {
            if let Ok(c) = c.clone().downcast::<TierCtx<A>>() {
                return c;
            }
        }
        let c = Arc::new(self.build_tier(tier, arith));
        cache.insert(tier, c.clone());
        c
    }

    /// The root item of the whole tree.
    fn base_item(&self) -> Item {
        let point = match (self.plan.backend, self.base) {
            (Backend::Exact, b) => ItemPoint::Exact(b.as_exact().expect("checked").coords().to_vec()),
            (_, BasePoint::Approx(lp)) => ItemPoint::Log(lp.clone()),
            _ => {
                let tier = self.plan.tier;
                on_tier!(tier, |a| {
                    let ctx = self.tier_ctx(tier, a);
                    let pt = ctx.base.clone().expect("coordinate base");
                    ItemPoint::Log(LogPoint(ctx.mv.arith.wrap(pt)))
                })
            }
        };
        Item {
            word: Vec::new(),
            point,
        }
    }

    fn classify_log<A: Arith>(&self, ctx: &TierCtx<A>, p: &Pt<A::V>) -> Option<Class> {
        let a = &ctx.mv.arith;
        let len = ctx.t.len();
        let mf = p
            .logs
            .iter()
            .map(|l| a.to_f64(l))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut b = self.t_f64.partition_point(|&t| t < mf);
        loop {
            if b > 0 {
                let (t, e) = &ctx.t[b - 1];
                match compare_pt(a, p, t, *e) {
                    Verdict::Above => {}
                    Verdict::Below => {
                        b -= 1;
                        continue;
                    }
                    Verdict::Indeterminate => return None,
                }
            }
            if b < len {
                let (t, e) = &ctx.t[b];
                match compare_pt(a, p, t, *e) {
                    Verdict::Below => {}
                    Verdict::Above => {
                        b += 1;
                        continue;
                    }
                    Verdict::Indeterminate => return None,
                }
            }
            break;
        }
        let inside_k = match compare_pt(a, p, &ctx.k.0, ctx.k.1) {
            Verdict::Below => true,
            Verdict::Above => false,
            Verdict::Indeterminate => match self.plan.mode {
                // Not pruning is always sound when counting.
                Mode::Count if b < len => true,
                _ => return None,
            },
        };
        Some(Class { bucket: b, inside_k })
    }

    fn classify_exact(&self, x: &[BigRational]) -> Result<Class> {
        let mx = max_of(x);
        let len = self.plan.thresholds.len();
        let mf = ln_rational_f64(mx);
        let mut b = self.t_f64.partition_point(|&t| t < mf);
        loop {
            if b > 0 && self.plan.thresholds[b - 1].cmp_ln(mx)? != Ordering::Greater {
                b -= 1;
                continue;
            }
            if b < len && self.plan.thresholds[b].cmp_ln(mx)? == Ordering::Greater {
                b += 1;
                continue;
            }
            break;
        }
        let inside_k = self.plan.k.cmp_ln(mx)? != Ordering::Greater;
        Ok(Class {
            bucket: b,
            inside_k,
        })
    }

    /// Records a classified node; returns whether its children are wanted.
    fn visit(
        &self,
        cls: Class,
        depth: usize,
        path: &[u8],
        point: impl FnOnce() -> ItemPoint,
        tally: &mut Tally,
    ) -> Result<bool> {
        tally.visited += 1;
        match self.plan.mode {
            Mode::Count => {
                let len = self.plan.thresholds.len();
                if cls.bucket < len {
                    tally.add(cls.bucket, depth);
                    if cls.bucket == 0 {
                        if let Some(v) = self.visitor {
                            let np = match point() {
                                ItemPoint::Exact(c) => NodePoint::Exact(ExactPoint::new_unchecked(c)),
                                ItemPoint::Log(l) => NodePoint::Log(l),
                            };
                            v(&ReducedWord::from_positions(path), &np).map_err(|message| {
                                Error::VisitorAborted {
                                    visited: tally.visited,
                                    message,
                                }
                            })?;
                        }
                    }
                } else if !cls.inside_k {
                    return Ok(false);
                }
                if depth >= self.plan.depth_cap {
                    tally.truncated = true;
                    return Ok(false);
                }
                Ok(true)
            }
            Mode::Roots => {
                if !cls.inside_k {
                    tally.roots.push((path.to_vec(), point()));
                    return Ok(false);
                }
                if depth >= self.plan.depth_cap {
                    return Err(Error::DepthCapHit {
                        cap: self.plan.depth_cap,
                    });
                }
                Ok(true)
            }
        }
    }

    fn skip_child(&self, c: usize, depth: usize, last: Option<u8>) -> bool {
        last == Some(c as u8) || (depth == 0 && self.forbidden[c])
    }

    fn run_item(&self, item: Item, tally: &mut Tally, budget: &mut Budget, out: &mut Vec<Item>) -> Result<()> {
        match item.point {
            ItemPoint::Exact(c) => self.run_exact(&item.word, c, tally, budget, out),
            ItemPoint::Log(lp) => {
                let tier = lp.tier();
                on_repr!(&lp.0, |a, pt| {
                    let ctx = self.tier_ctx(tier, a);
                    self.run_log(&ctx, &item.word, pt.clone(), tally, budget, out)
                })
            }
        }
    }

    fn run_exact(
        &self,
        word: &[u8],
        root: Vec<BigRational>,
        tally: &mut Tally,
        budget: &mut Budget,
        out: &mut Vec<Item>,
    ) -> Result<()> {
        let mut path = word.to_vec();
        let mut stack: Vec<(usize, u8, Vec<BigRational>)> = vec![(word.len(), NONE, root)];
        while let Some((depth, letter, x)) = stack.pop() {
            if budget.exhausted() {
                stack.push((depth, letter, x));
                for (d, l, x) in stack.drain(..) {
                    out.push(Item {
                        word: frame_word(&path, word, d, l),
                        point: ItemPoint::Exact(x),
                    });
                }
                return Ok(());
            }
            budget.spend();
            if letter != NONE {
                path.truncate(depth - 1);
                path.push(letter);
            }
            let cls = self.classify_exact(&x)?;
            if !self.visit(cls, depth, &path, || ItemPoint::Exact(x.clone()), tally)? {
                continue;
            }
            let last = path.last().copied();
            for c in (0..self.n).rev() {
                if self.skip_child(c, depth, last) {
                    continue;
                }
                let v = moved_coordinate(self.params, &x, c);
                if !v.is_positive() {
                    return Err(Error::NonPositiveResult { index: c + 1 });
                }
                let mut y = x.clone();
                y[c] = v;
                stack.push((depth + 1, c as u8, y));
            }
        }
        Ok(())
    }

    fn run_log<A: Arith>(
        &self,
        ctx: &TierCtx<A>,
        word: &[u8],
        root: Pt<A::V>,
        tally: &mut Tally,
        budget: &mut Budget,
        out: &mut Vec<Item>,
    ) -> Result<()> {
        let a = &ctx.mv.arith;
        let mut path = word.to_vec();
        let mut stack: Vec<(usize, u8, Pt<A::V>)> = vec![(word.len(), NONE, root)];
        while let Some((depth, letter, pt)) = stack.pop() {
            if budget.exhausted() {
                stack.push((depth, letter, pt));
                for (d, l, p) in stack.drain(..) {
                    out.push(Item {
                        word: frame_word(&path, word, d, l),
                        point: ItemPoint::Log(LogPoint(a.wrap(p))),
                    });
                }
                return Ok(());
            }
            budget.spend();
            if letter != NONE {
                path.truncate(depth - 1);
                path.push(letter);
            }
            let cls = match self.classify_log(ctx, &pt) {
                Some(c) => c,
                None => {
                    tally.escalations += 1;
                    match self.exact_base {
                        Some(b) => self.classify_exact(&walk_exact(self.params, b, &path))?,
                        None => {
                            self.escalate(&path, ctx.tier, tally)?;
                            continue;
                        }
                    }
                }
            };
            let make_point = || match (self.plan.mode, self.exact_base) {
                (Mode::Roots, Some(b)) => ItemPoint::Exact(walk_exact(self.params, b, &path)),
                _ => ItemPoint::Log(LogPoint(a.wrap(pt.clone()))),
            };
            if !self.visit(cls, depth, &path, make_point, tally)? {
                continue;
            }
            let last = path.last().copied();
            for c in (0..self.n).rev() {
                if self.skip_child(c, depth, last) {
                    continue;
                }
                match ctx.mv.apply(&pt, c) {
                    Ok(ch) => stack.push((depth + 1, c as u8, ch)),
                    Err(_) => {
                        tally.escalations += 1;
                        let mut w = path.clone();
                        w.push(c as u8);
                        self.escalate(&w, ctx.tier, tally)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Redoes the subtree at `word` from the base at successively wider tiers.
    fn escalate(&self, word: &[u8], from: Tier, tally: &mut Tally) -> Result<()> {
        let budget = self.plan.precision.max_err();
        let mut tier = from.escalated();
        loop {
            if tier.bits() > MAX_ESCALATION_BITS {
                return Err(Error::ErrorBudgetExceeded {
                    bound: f64::INFINITY,
                    budget,
                });
            }
            let done = on_tier!(tier, |a| {
                let ctx = self.tier_ctx(tier, a);
                match walk_log(&ctx, word)? {
                    Some(pt) => match self.classify_log(&ctx, &pt) {
                        Some(_) => {
                            // The subtree root reclassifies inside run_log.
                            let mut sub = Tally::new(tally.hist.len());
                            self.run_log(&ctx, word, pt, &mut sub, &mut Budget(None), &mut Vec::new())?;
                            tally.merge(sub);
                            true
                        }
                        None => false,
                    },
                    None => false,
                }
            });
            if done {
                return Ok(());
            }
            tier = tier.escalated();
        }
    }
}

/// Log point at `word`, or `None` if a move on the way fails at this tier.
fn walk_log<A: Arith>(ctx: &TierCtx<A>, word: &[u8]) -> Result<Option<Pt<A::V>>> {
    let mut p = match &ctx.base {
        Some(b) => b.clone(),
        None => {
            return Err(Error::ErrorBudgetExceeded {
                bound: f64::INFINITY,
                budget: ctx.mv.max_err,
            })
        }
    };
    for &l in word {
        match ctx.mv.apply(&p, l as usize) {
            Ok(q) => p = q,
            Err(_) => return Ok(None),
        }
    }
    Ok(Some(p))
}

/// Word of a pending stack frame, given the path of the last visited node.
fn frame_word(path: &[u8], item_word: &[u8], depth: usize, letter: u8) -> Vec<u8> {
    if letter == NONE {
        item_word.to_vec()
    } else {
        let mut w = path[..depth - 1].to_vec();
        w.push(letter);
        w
    }
}

/// A resumable traversal for one spec and query.
///
/// The unexplored part of the tree is a list of subtrees (the frontier);
/// [`Traversal::step`] explores a bounded number of nodes and can be
/// interleaved with checkpoints.
pub struct Traversal {
    pub(crate) spec: OrbitSpec,
    pub(crate) plan: Plan,
    pub(crate) threads: usize,
    pub(crate) frontier: Vec<Item>,
    pub(crate) tally: Tally,
    cache: TierCache,
}

impl std::fmt::Debug for Traversal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Traversal")
            .field("frontier", &self.frontier.len())
            .field("visited", &self.tally.visited)
            .finish()
    }
}

fn resolve_backend(spec: &OrbitSpec, q: &BallQuery, max_log: f64) -> Result<Backend> {
    let exact = spec.base().as_exact().is_some();
    match q.backend {
        Backend::Exact if !exact => Err(Error::InvalidArgument(
            "the exact backend needs a rational base point".into(),
        )),
        Backend::Auto if exact && max_log <= AUTO_EXACT_MAX_LOG => Ok(Backend::Exact),
        Backend::Auto => Ok(Backend::Log),
        b => Ok(b),
    }
}

fn plan_tier(spec: &OrbitSpec, precision: &PrecisionConfig) -> Tier {
    match spec.base() {
        BasePoint::Approx(lp) => lp.tier(),
        _ => precision.tier(),
    }
}

/// `K` enlarged to contain the base; pruning outside it stays sound.
fn effective_k(spec: &OrbitSpec) -> Result<LogBound> {
    let k = spec.k_radius();
    match spec.base() {
        BasePoint::Exact(p) => {
            if k.cmp_ln(p.max())? == Ordering::Greater {
                Ok(LogBound::LnOf(p.max().clone()))
            } else {
                Ok(k.clone())
            }
        }
        b => {
            let slack = match b {
                BasePoint::Approx(lp) => lp.err_bound(),
                _ => 0.0,
            };
            let m = b.max_log_f64() + 2.0 * slack;
            let m = m + 1e-9 * m.abs().max(1.0);
            if m < k.to_f64() - 1e-9 {
                Ok(k.clone())
            } else {
                LogBound::from_f64(m)
            }
        }
    }
}

impl Traversal {
    pub fn new(spec: &OrbitSpec, q: &BallQuery) -> Result<Self> {
        Traversal::new_multi(spec, q, std::slice::from_ref(&q.log_r))
    }

    /// One traversal counting the balls of several thresholds, which must
    /// be strictly increasing.
    pub fn new_multi(spec: &OrbitSpec, q: &BallQuery, thresholds: &[LogBound]) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidArgument("no thresholds given".into()));
        }
        for t in thresholds {
            if !t.to_f64().is_finite() {
                return Err(Error::InvalidArgument(format!("threshold {t} is not finite")));
            }
        }
        for w in thresholds.windows(2) {
            if w[0].cmp_bound(&w[1])? != Ordering::Less {
                return Err(Error::InvalidArgument(
                    "thresholds must be strictly increasing".into(),
                ));
            }
        }
        let max_log = thresholds.last().expect("nonempty").to_f64();
        let plan = Plan {
            thresholds: thresholds.to_vec(),
            k: effective_k(spec)?,
            depth_cap: q.effective_depth_cap(),
            depth_cap_raw: q.depth_cap,
            precision: q.precision,
            backend: resolve_backend(spec, q, max_log)?,
            tier: plan_tier(spec, &q.precision),
            mode: Mode::Count,
            count_only: q.count_only,
        };
        Ok(Traversal::start(spec, plan, q.threads))
    }

    fn start(spec: &OrbitSpec, plan: Plan, threads: usize) -> Self {
        let mut t = Traversal {
            spec: spec.clone(),
            tally: Tally::new(plan.thresholds.len()),
            plan,
            threads: threads.max(1),
            frontier: Vec::new(),
            cache: Mutex::new(HashMap::new()),
        };
        let item = Run::new(&t.spec, &t.plan, None, &t.cache).base_item();
        t.frontier.push(item);
        t
    }

    pub(crate) fn from_parts(spec: &OrbitSpec, plan: Plan, threads: usize, frontier: Vec<Item>, tally: Tally) -> Self {
        Traversal {
            spec: spec.clone(),
            plan,
            threads: threads.max(1),
            frontier,
            tally,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.frontier.is_empty()
    }

    pub fn frontier_len(&self) -> usize {
        self.frontier.len()
    }

    /// Root words of the unexplored subtrees.
    pub fn frontier_words(&self) -> Vec<ReducedWord> {
        self.frontier
            .iter()
            .map(|i| ReducedWord::from_positions(&i.word))
            .collect()
    }

    /// Nodes classified so far.
    pub fn visited(&self) -> u64 {
        self.tally.visited
    }

    /// Explores at most about `node_budget` nodes on the calling thread.
    pub fn step(&mut self, node_budget: u64) -> Result<()> {
        let run = Run::new(&self.spec, &self.plan, None, &self.cache);
        let mut budget = Budget(Some(node_budget));
        while !budget.exhausted() {
            let Some(item) = self.frontier.pop() else { break };
            let mut out = Vec::new();
            run.run_item(item, &mut self.tally, &mut budget, &mut out)?;
            self.frontier.extend(out);
        }
        Ok(())
    }

    /// Replaces every frontier subtree by the subtrees of its children.
    pub fn expand(&mut self, levels: usize) -> Result<()> {
        let run = Run::new(&self.spec, &self.plan, None, &self.cache);
        expand_with(&run, &mut self.frontier, &mut self.tally, levels, usize::MAX)
    }

    /// Processes every frontier item with a per-item node budget, in
    /// parallel across the configured threads. `None` runs to completion.
    pub fn run_segment(&mut self, per_item_budget: Option<u64>) -> Result<()> {
        self.segment(per_item_budget, None)
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        self.segment(None, None)
    }

    pub(crate) fn run_with_visitor(&mut self, visitor: Option<&Visitor<'_>>) -> Result<()> {
        self.segment(None, visitor)
    }

    fn segment(&mut self, per_item: Option<u64>, visitor: Option<&Visitor<'_>>) -> Result<()> {
        let run = Run::new(&self.spec, &self.plan, visitor, &self.cache);
        let threads = self.threads;
        if threads > 1 {
            expand_with(&run, &mut self.frontier, &mut self.tally, 64, threads * ITEMS_PER_THREAD)?;
        }
        let items = std::mem::take(&mut self.frontier);
        let buckets = self.tally.hist.len();
        let work = |item: Item| -> Result<(Tally, Vec<Item>)> {
            let mut t = Tally::new(buckets);
            let mut out = Vec::new();
            run.run_item(item, &mut t, &mut Budget(per_item), &mut out)?;
            Ok((t, out))
        };
        let parts: Vec<Result<(Tally, Vec<Item>)>> = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| items.into_par_iter().map(work).collect())
        } else {
            items.into_iter().map(work).collect()
        };
        let mut first_err = None;
        for p in parts {
            match p {
                Ok((t, out)) => {
                    self.tally.merge(t);
                    self.frontier.extend(out);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Counts accumulated so far, one per threshold.
    pub fn results(&self) -> Vec<CountResult> {
        self.tally.results()
    }
}

fn expand_with(run: &Run<'_>, frontier: &mut Vec<Item>, tally: &mut Tally, levels: usize, target: usize) -> Result<()> {
    for _ in 0..levels {
        if frontier.is_empty() || frontier.len() >= target {
            break;
        }
        let mut next = Vec::new();
        for item in std::mem::take(frontier) {
            run.run_item(item, tally, &mut Budget(Some(1)), &mut next)?;
        }
        *frontier = next;
    }
    Ok(())
}

pub(crate) fn find_roots(spec: &OrbitSpec, k_radius: &LogBound, q: &BallQuery) -> Result<Vec<SubOrbitRoot>> {
    let plan = Plan {
        thresholds: Vec::new(),
        k: k_radius.clone(),
        depth_cap: q.effective_depth_cap(),
        depth_cap_raw: q.depth_cap,
        precision: q.precision,
        backend: resolve_backend(spec, q, k_radius.to_f64())?,
        tier: plan_tier(spec, &q.precision),
        mode: Mode::Roots,
        count_only: false,
    };
    let base_inside = match spec.base() {
        BasePoint::Exact(p) => k_radius.cmp_ln(p.max())? != Ordering::Greater,
        _ => {
            let cache = Mutex::new(HashMap::new());
            let run = Run::new(spec, &plan, None, &cache);
            let tier = plan.tier;
            on_tier!(tier, |a| {
                let ctx = run.tier_ctx(tier, a);
                match &ctx.base {
                    Some(b) => compare_pt(&ctx.mv.arith, b, &ctx.k.0, ctx.k.1) == Verdict::Below,
                    None => false,
                }
            })
        }
    };
    if !base_inside {
        return Err(Error::InvalidArgument(format!(
            "base point is not certified inside K (radius {k_radius})"
        )));
    }
    let mut t = Traversal::start(spec, plan, q.threads);
    t.run_to_end()?;
    let mut roots = std::mem::take(&mut t.tally.roots);
    roots.sort_by(|a, b| a.0.cmp(&b.0));
    let params = spec.params();
    Ok(roots
        .into_iter()
        .map(|(word, p)| {
            let point = match p {
                ItemPoint::Exact(c) => NodePoint::Exact(ExactPoint::new_unchecked(c)),
                ItemPoint::Log(l) => match spec.base().as_exact() {
                    Some(b) => NodePoint::Exact(ExactPoint::new_unchecked(walk_exact(params, b.coords(), &word))),
                    None => NodePoint::Log(l),
                },
            };
            let last = *word.last().expect("roots lie below the base");
            SubOrbitRoot {
                word: ReducedWord::from_positions(&word),
                point,
                return_move: MoveIndex::from_position(last as usize),
            }
        })
        .collect())
}
