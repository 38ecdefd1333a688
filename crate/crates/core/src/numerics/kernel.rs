//! Log-space move kernels, generic over the precision tier.
//!
//! A point carries a single relative error scale `rho`: every stored log
//! `l_i` is within `rho * max(1, |l_i|)` of the true log. The absolute bound
//! reported to callers is `rho * max_i max(1, |l_i|)`, never allowed to
//! shrink along a chain of moves.

use std::cmp::Ordering;

use smallvec::SmallVec;

use super::tier::{Arith, K_ARITH, K_TRANS};

pub(crate) type Logs<V> = SmallVec<[V; 4]>;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Pt<V> {
    pub logs: Logs<V>,
    pub rho: f64,
    pub bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum KernelFail {
    NotOutgoing,
    Budget(f64),
}

/// Per-tier constants shared by all moves of one traversal.
#[derive(Clone, Debug)]
pub(crate) struct MoveCtx<A: Arith> {
    pub arith: A,
    pub ln_a: A::V,
    pub ln_a_err: f64,
    pub max_err: f64,
}

#[inline]
fn mag(x: f64) -> f64 {
    x.abs().max(1.0)
}

impl<A: Arith> MoveCtx<A> {
    /// Builds a point, deriving its absolute bound from `rho`.
    pub fn point(&self, logs: Logs<A::V>, rho: f64) -> Pt<A::V> {
        let mut p = Pt { logs, rho, bound: 0.0 };
        p.bound = rho * self.max_mag(&p);
        p
    }

    pub fn max_mag(&self, p: &Pt<A::V>) -> f64 {
        p.logs
            .iter()
            .map(|l| mag(self.arith.to_f64(l)))
            .fold(1.0, f64::max)
    }

    /// Whether the stored log at `pos` is strictly larger than every other.
    pub fn is_strict_max(&self, p: &Pt<A::V>, pos: usize) -> bool {
        let a = &self.arith;
        p.logs
            .iter()
            .enumerate()
            .all(|(i, l)| i == pos || a.cmp(&p.logs[pos], l) == Ordering::Greater)
    }

    fn finish(&self, p: &Pt<A::V>, pos: usize, new: A::V, err: f64) -> Result<Pt<A::V>, KernelFail> {
        let nf = self.arith.to_f64(&new);
        let rho = p.rho.max(err / mag(nf));
        let mut logs = p.logs.clone();
        logs[pos] = new;
        let mut out = self.point(logs, rho);
        out.bound = out.bound.max(p.bound);
        if out.bound > self.max_err {
            return Err(KernelFail::Budget(out.bound));
        }
        Ok(out)
    }

    /// Subtraction form `S + ln(1 - exp(l_j - S))`, `S = ln a + sum_{i != j} l_i`.
    pub fn outgoing(&self, p: &Pt<A::V>, pos: usize) -> Result<Pt<A::V>, KernelFail> {
        let a = &self.arith;
        let eps = a.eps();
        let mut s = self.ln_a.clone();
        let mut s_err = self.ln_a_err;
        let mut abs_sum = a.to_f64(&self.ln_a).abs();
        for (i, l) in p.logs.iter().enumerate() {
            if i == pos {
                continue;
            }
            s = a.add(&s, l);
            let lf = a.to_f64(l);
            s_err += p.rho * mag(lf);
            abs_sum += lf.abs();
        }
        s_err += p.logs.len() as f64 * K_ARITH * eps * abs_sum.max(1.0);

        let lj = &p.logs[pos];
        let d = a.sub(lj, &s);
        let df = a.to_f64(&d);
        let d_err = s_err + p.rho * mag(a.to_f64(lj)) + K_ARITH * eps * mag(df);
        if df - d_err >= 0.0 {
            return Err(KernelFail::NotOutgoing);
        }
        let v = a.exp(&d);
        let vf = a.to_f64(&v);
        let v_err = (vf + K_TRANS * eps) * d_err.exp_m1() + K_TRANS * eps * (1.0 + vf);
        let room = 1.0 - vf - v_err;
        if room <= 0.0 {
            return Err(KernelFail::NotOutgoing);
        }
        let g = a.ln_1m(&v);
        let gf = a.to_f64(&g);
        let g_err = (v_err + K_TRANS * eps) / room + K_TRANS * eps * mag(gf);
        let new = a.add(&s, &g);
        let err = s_err + g_err + K_ARITH * eps * mag(a.to_f64(&new));
        self.finish(p, pos, new, err)
    }

    /// Vieta quotient form `ln(sum_{i != j} exp(2 l_i)) - l_j`. On a budget
    /// failure the point is still returned alongside its bound.
    pub fn descent_checked(&self, p: &Pt<A::V>, pos: usize) -> Result<Pt<A::V>, (Pt<A::V>, f64)> {
        let a = &self.arith;
        let eps = a.eps();
        let n = p.logs.len();
        let mut top = if pos == 0 { 1 } else { 0 };
        for i in 0..n {
            if i != pos && a.cmp(&p.logs[i], &p.logs[top]) == Ordering::Greater {
                top = i;
            }
        }
        let t = a.double(&p.logs[top]);
        let mut sum = a.zero();
        let mut sum_err = 0.0;
        let mut others_mag: f64 = 1.0;
        for i in 0..n {
            if i == pos {
                continue;
            }
            let lf = a.to_f64(&p.logs[i]);
            others_mag = others_mag.max(mag(lf));
            let diff = a.sub(&a.double(&p.logs[i]), &t);
            let e = a.exp(&diff);
            let ef = a.to_f64(&e);
            sum_err += ef * K_ARITH * eps * mag(a.to_f64(&diff)) * 1.01 + K_TRANS * eps;
            sum = a.add(&sum, &e);
        }
        let sf = a.to_f64(&sum);
        sum_err += n as f64 * K_ARITH * eps * sf;
        // sum >= 1 since the top term is exp(0).
        let ls = a.ln(&sum);
        let ls_err = sum_err / (sf - sum_err).max(0.5) + K_TRANS * eps * mag(a.to_f64(&ls));
        let lse = a.add(&t, &ls);
        let new = a.sub(&lse, &p.logs[pos]);
        let nf = a.to_f64(&new);
        let err = 2.0 * p.rho * others_mag
            + p.rho * mag(a.to_f64(&p.logs[pos]))
            + ls_err
            + 2.0 * K_ARITH * eps * (mag(a.to_f64(&lse)) + mag(nf));
        let rho = p.rho.max(err / mag(nf));
        let mut logs = p.logs.clone();
        logs[pos] = new;
        let mut out = self.point(logs, rho);
        out.bound = out.bound.max(p.bound);
        if out.bound > self.max_err {
            let b = out.bound;
            return Err((out, b));
        }
        Ok(out)
    }

    /// Applies the move at `pos` with the kernel suited to its direction.
    pub fn apply(&self, p: &Pt<A::V>, pos: usize) -> Result<Pt<A::V>, KernelFail> {
        if self.is_strict_max(p, pos) {
            self.descent_checked(p, pos).map_err(|(_, b)| KernelFail::Budget(b))
        } else {
            self.outgoing(p, pos)
        }
    }
}
