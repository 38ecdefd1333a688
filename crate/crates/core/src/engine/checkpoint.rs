//! JSON checkpoints: accumulated counts plus the unexplored frontier.

use std::path::Path;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::run::{Item, ItemPoint, Tally, Traversal};
use super::{BallQuery, CountResult, OrbitSpec};
use crate::error::{Error, Result};
use crate::numerics::LogPoint;
use crate::threshold::LogBound;
use crate::variety::ExactPoint;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TallyJson {
    hist: Vec<Vec<u64>>,
    escalations: u64,
    truncated: bool,
    visited: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrontierEntry {
    /// 1-based move indices in application order.
    word: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact: Option<ExactPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log: Option<LogPoint>,
}

/// A paused traversal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Checkpoint {
    format_version: u32,
    spec_digest: String,
    query_digest: String,
    tally: TallyJson,
    frontier: Vec<FrontierEntry>,
}

impl Checkpoint {
    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn frontier_len(&self) -> usize {
        self.frontier.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Checkpoint> {
        serde_json::from_str(s).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }

    /// Writes through a temporary file so an interrupted save keeps the old one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Checkpoint::from_json(&s)
    }
}

impl Traversal {
    /// Snapshot of the current state.
    pub fn checkpoint(&self) -> Checkpoint {
        let frontier = self
            .frontier
            .iter()
            .map(|it| {
                let word = it.word.iter().map(|&p| p as usize + 1).collect();
                match &it.point {
                    ItemPoint::Exact(c) => FrontierEntry {
                        word,
                        exact: Some(ExactPoint::new_unchecked(c.clone())),
                        log: None,
                    },
                    ItemPoint::Log(l) => FrontierEntry {
                        word,
                        exact: None,
                        log: Some(l.clone()),
                    },
                }
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec_digest: self.spec.digest(),
            query_digest: self.plan.digest(),
            tally: TallyJson {
                hist: self.tally.hist.clone(),
                escalations: self.tally.escalations,
                truncated: self.tally.truncated,
                visited: self.tally.visited,
            },
            frontier,
        }
    }

    /// Rebuilds a traversal for `q` from a checkpoint taken with the same
    /// spec and query (thread counts may differ).
    pub fn resume(spec: &OrbitSpec, q: &BallQuery, c: &Checkpoint) -> Result<Traversal> {
        Traversal::resume_multi(spec, q, std::slice::from_ref(&q.log_r), c)
    }

    pub fn resume_multi(
        spec: &OrbitSpec,
        q: &BallQuery,
        thresholds: &[LogBound],
        c: &Checkpoint,
    ) -> Result<Traversal> {
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::CorruptCheckpoint(format!(
                "format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                c.format_version
            )));
        }
        if c.spec_digest != spec.digest() {
            return Err(Error::DigestMismatch { which: "spec" });
        }
        let fresh = Traversal::new_multi(spec, q, thresholds)?;
        if c.query_digest != fresh.plan.digest() {
            return Err(Error::DigestMismatch { which: "query" });
        }
        let n = spec.params().n();
        if c.tally.hist.len() != fresh.plan.thresholds.len() {
            return Err(Error::CorruptCheckpoint("histogram does not match the thresholds".into()));
        }
        let mut frontier = Vec::with_capacity(c.frontier.len());
        for e in &c.frontier {
            frontier.push(entry_to_item(e, n)?);
        }
        let mut words: Vec<&[u8]> = frontier.iter().map(|i: &Item| i.word.as_slice()).collect();
        words.sort();
        for w in words.windows(2) {
            if w[1].starts_with(w[0]) {
                return Err(Error::CorruptCheckpoint(
                    "frontier words are not pairwise prefix-free".into(),
                ));
            }
        }
        let tally = Tally {
            hist: c.tally.hist.clone(),
            escalations: c.tally.escalations,
            truncated: c.tally.truncated,
            visited: c.tally.visited,
            roots: Vec::new(),
        };
        Ok(Traversal::from_parts(spec, fresh.plan, q.threads, frontier, tally))
    }
}

fn entry_to_item(e: &FrontierEntry, n: usize) -> Result<Item> {
    let mut word = Vec::with_capacity(e.word.len());
    for &l in &e.word {
        if l == 0 || l > n {
            return Err(Error::CorruptCheckpoint(format!("letter {l} outside 1..={n}")));
        }
        let p = (l - 1) as u8;
        if word.last() == Some(&p) {
            return Err(Error::CorruptCheckpoint("frontier word is not reduced".into()));
        }
        word.push(p);
    }
    let point = match (&e.exact, &e.log) {
        (Some(x), None) if x.dim() == n => ItemPoint::Exact(x.coords().to_vec()),
        (None, Some(l)) if l.dim() == n => ItemPoint::Log(l.clone()),
        (Some(_), None) | (None, Some(_)) => {
            return Err(Error::CorruptCheckpoint("frontier point has the wrong dimension".into()))
        }
        _ => {
            return Err(Error::CorruptCheckpoint(
                "frontier entry needs exactly one of exact/log".into(),
            ))
        }
    };
    if let ItemPoint::Exact(c) = &point {
        if c.iter().any(|x: &BigRational| num_traits::Signed::is_negative(x) || num_traits::Zero::is_zero(x)) {
            return Err(Error::CorruptCheckpoint("non-positive frontier coordinate".into()));
        }
    }
    Ok(Item { word, point })
}

/// Writes the state of `t` to `path` and returns it.
pub fn checkpoint_save(t: &Traversal, path: &Path) -> Result<Checkpoint> {
    let c = t.checkpoint();
    c.save(path)?;
    Ok(c)
}

/// Loads a checkpoint and runs it to completion.
pub fn checkpoint_resume(spec: &OrbitSpec, q: &BallQuery, path: &Path) -> Result<CountResult> {
    let c = Checkpoint::load(path)?;
    let mut t = Traversal::resume(spec, q, &c)?;
    t.run_to_end()?;
    Ok(t.results().swap_remove(0))
}
