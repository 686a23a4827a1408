//! Reduction trees: round-structured merge schedules over p ranks.
//!
//! A tree is an ordered list of rounds, each holding independent merges
//! `dst <- src`. Every rank except the root contributes exactly once as a
//! source and is dead afterwards, so any valid tree over p ranks carries
//! exactly p-1 messages; the choice of tree only changes the round structure.
//! Trees are explicit schedules rather than parent pointers, which makes the
//! within-round independence checkable and execution deterministic.
//!
//! The text format (one schedule per file) is:
//!
//! ```text
//! p=4 root=0
//! round: 0<-1 2<-3
//! round: 0<-2
//! ```
//!
//! with `#` starting a comment.

use crate::dense::Rng;
use crate::error::{Error, Result};
use crate::triangular::UpperTriangular;
use std::fmt;

/// One merge: `dst` absorbs `src`'s value; `src` is dead afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Merge {
    pub dst: usize,
    pub src: usize,
}

/// A reduction schedule over ranks `0..p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionTree {
    p: usize,
    rounds: Vec<Vec<Merge>>,
    root: usize,
}

impl ReductionTree {
    /// Build a tree from parts, checking every structural invariant.
    pub fn new(p: usize, rounds: Vec<Vec<Merge>>, root: usize) -> Result<Self> {
        let tree = Self { p, rounds, root };
        tree.validate()?;
        Ok(tree)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn rounds(&self) -> &[Vec<Merge>] {
        &self.rounds
    }

    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn num_merges(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }

    /// Check all invariants, naming the offending rank and round on failure:
    /// ranks in range, root never a source, every other rank a source exactly
    /// once, no participation after death, no rank twice in one round, and no
    /// empty round.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::TreeInvalid("p must be >= 1".into()));
        }
        if self.root >= self.p {
            return Err(Error::TreeInvalid(format!(
                "root {} out of range for p = {}",
                self.root, self.p
            )));
        }
        let mut contributed = vec![false; self.p];
        let mut dead_in_round = vec![usize::MAX; self.p];
        for (t, round) in self.rounds.iter().enumerate() {
            if round.is_empty() {
                return Err(Error::TreeInvalid(format!("round {t} is empty")));
            }
            let mut seen = vec![false; self.p];
            for m in round {
                for rank in [m.dst, m.src] {
                    if rank >= self.p {
                        return Err(Error::TreeInvalid(format!(
                            "rank {rank} out of range in round {t}"
                        )));
                    }
                    if seen[rank] {
                        return Err(Error::TreeInvalid(format!(
                            "rank {rank} participates twice in round {t}"
                        )));
                    }
                    seen[rank] = true;
                    if dead_in_round[rank] < t {
                        return Err(Error::TreeInvalid(format!(
                            "rank {rank} contributed in round {} but appears again in round {t}",
                            dead_in_round[rank]
                        )));
                    }
                }
                if m.src == self.root {
                    return Err(Error::TreeInvalid(format!(
                        "root {} appears as source in round {t}",
                        self.root
                    )));
                }
                if contributed[m.src] {
                    return Err(Error::TreeInvalid(format!(
                        "rank {} contributes twice (again in round {t})",
                        m.src
                    )));
                }
                contributed[m.src] = true;
                dead_in_round[m.src] = t;
            }
        }
        for rank in 0..self.p {
            if rank != self.root && !contributed[rank] {
                return Err(Error::TreeInvalid(format!("rank {rank} never contributes")));
            }
        }
        Ok(())
    }

    /// Render in the text format parsed by [`parse_tree`].
    pub fn to_text(&self) -> String {
        let mut out = format!("p={} root={}\n", self.p, self.root);
        for round in &self.rounds {
            out.push_str("round:");
            for m in round {
                out.push_str(&format!(" {}<-{}", m.dst, m.src));
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ReductionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Pairwise-halving tree: round t merges rank `r + 2^t` into `r` for every
/// surviving rank `r` divisible by `2^(t+1)`; ceil(log2 p) rounds, root 0.
pub fn binary_tree(p: usize) -> Result<ReductionTree> {
    if p == 0 {
        return Err(Error::dim("binary_tree", "p must be >= 1"));
    }
    let mut rounds = Vec::new();
    let mut step = 1usize;
    while step < p {
        let mut round = Vec::new();
        let mut r = 0usize;
        while r + step < p {
            round.push(Merge {
                dst: r,
                src: r + step,
            });
            r += 2 * step;
        }
        rounds.push(round);
        step *= 2;
    }
    ReductionTree::new(p, rounds, 0)
}

/// Sequential tree: rank 0 absorbs ranks 1, 2, ... one per round.
pub fn flat_tree(p: usize) -> Result<ReductionTree> {
    if p == 0 {
        return Err(Error::dim("flat_tree", "p must be >= 1"));
    }
    let rounds = (1..p).map(|src| vec![Merge { dst: 0, src }]).collect();
    ReductionTree::new(p, rounds, 0)
}

/// Deterministic random valid tree: each round pairs up a random subset of
/// the surviving ranks with random orientation; the final survivor becomes
/// the root.
pub fn random_tree(p: usize, seed: u64) -> Result<ReductionTree> {
    if p == 0 {
        return Err(Error::dim("random_tree", "p must be >= 1"));
    }
    let mut rng = Rng::new(seed.wrapping_mul(0x9e37_79b9).wrapping_add(p as u64));
    let mut alive: Vec<usize> = (0..p).collect();
    let mut rounds = Vec::new();
    while alive.len() > 1 {
        // Fisher-Yates shuffle, then merge a random nonempty prefix of pairs.
        for i in (1..alive.len()).rev() {
            let j = rng.below(i + 1);
            alive.swap(i, j);
        }
        let max_pairs = alive.len() / 2;
        let pairs = 1 + rng.below(max_pairs);
        let mut round = Vec::with_capacity(pairs);
        let mut dead = Vec::new();
        for k in 0..pairs {
            let a = alive[2 * k];
            let b = alive[2 * k + 1];
            let (dst, src) = if rng.below(2) == 0 { (a, b) } else { (b, a) };
            round.push(Merge { dst, src });
            dead.push(src);
        }
        alive.retain(|r| !dead.contains(r));
        round.sort_by_key(|m| m.dst);
        rounds.push(round);
    }
    ReductionTree::new(p, rounds, alive[0])
}

/// Parse the tree text format; `#` comments and blank lines are ignored.
pub fn parse_tree(text: &str) -> Result<ReductionTree> {
    let mut p: Option<usize> = None;
    let mut root: Option<usize> = None;
    let mut rounds: Vec<Vec<Merge>> = Vec::new();
    let mut header_seen = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            for token in line.split_whitespace() {
                if let Some(v) = token.strip_prefix("p=") {
                    p = Some(parse_usize(v, line_no, "p")?);
                } else if let Some(v) = token.strip_prefix("root=") {
                    root = Some(parse_usize(v, line_no, "root")?);
                } else {
                    return Err(Error::TreeParse {
                        line: line_no,
                        msg: format!("expected `p=<int> root=<int>`, found `{token}`"),
                    });
                }
            }
            if p.is_none() || root.is_none() {
                return Err(Error::TreeParse {
                    line: line_no,
                    msg: "header must set both p= and root=".into(),
                });
            }
            header_seen = true;
            continue;
        }
        let body = line
            .strip_prefix("round:")
            .ok_or_else(|| Error::TreeParse {
                line: line_no,
                msg: format!("expected `round:`, found `{line}`"),
            })?;
        let mut round = Vec::new();
        for token in body.split_whitespace() {
            let (dst, src) = token.split_once("<-").ok_or_else(|| Error::TreeParse {
                line: line_no,
                msg: format!("expected `<dst><-<src>`, found `{token}`"),
            })?;
            round.push(Merge {
                dst: parse_usize(dst, line_no, "dst")?,
                src: parse_usize(src, line_no, "src")?,
            });
        }
        if round.is_empty() {
            return Err(Error::TreeParse {
                line: line_no,
                msg: "round has no merges".into(),
            });
        }
        rounds.push(round);
    }

    match (p, root) {
        (Some(p), Some(root)) => ReductionTree::new(p, rounds, root),
        _ => Err(Error::TreeParse {
            line: 1,
            msg: "missing header line `p=<int> root=<int>`".into(),
        }),
    }
}

fn parse_usize(s: &str, line: usize, what: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::TreeParse {
        line,
        msg: format!("cannot parse {what} from `{s}`"),
    })
}

/// Message, word, and round counts for running a tree with n-by-n triangular
/// payloads (packed wire encoding, n(n+1)/2 words each).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommStats {
    pub rounds: usize,
    pub messages: usize,
    /// Total f64 values transferred.
    pub words: usize,
    /// Maximum number of merges any single rank participates in.
    pub critical_path: usize,
}

/// Communication accounting for `tree`; `allreduce` doubles messages and
/// rounds for the broadcast leg down the reversed tree.
pub fn comm_stats(tree: &ReductionTree, n: usize, allreduce: bool) -> CommStats {
    let factor = if allreduce { 2 } else { 1 };
    let messages = (tree.p() - 1) * factor;
    let mut participation = vec![0usize; tree.p()];
    for round in tree.rounds() {
        for m in round {
            participation[m.dst] += 1;
            participation[m.src] += 1;
        }
    }
    CommStats {
        rounds: tree.num_rounds() * factor,
        messages,
        words: messages * UpperTriangular::packed_len(n),
        critical_path: participation.into_iter().max().unwrap_or(0),
    }
}
