//! Markov quilts on a chain `X_1 .. X_T`, the exact max-influence
//! computation, the exact mechanism and the composition accountant.

mod exact;
mod influence;
mod ledger;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use exact::{exact_plan, mqm_exact};
pub use influence::{
    brute_force_max_influence, brute_force_subset_influence, exact_influence_all_inits,
    exact_max_influence, InfluenceTables, BRUTE_FORCE_MAX_SEQUENCES,
};
pub use ledger::{CompositionLedger, LedgerEntry, LedgerHeader};

/// Max-influence in nats; `+inf` marks an unusable quilt.
pub type InfluenceValue = f64;

/// Position of the quilt nodes relative to the protected node `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum QuiltShape {
    /// `{X_{i-a}, X_{i+b}}`
    Pair { a: usize, b: usize },
    /// `{X_{i-a}}`
    Left { a: usize },
    /// `{X_{i+b}}`
    Right { b: usize },
    Trivial,
}

impl QuiltShape {
    /// `(a, b)` with a missing side as 0, used for tie-breaking.
    fn key(self) -> (usize, usize) {
        match self {
            QuiltShape::Pair { a, b } => (a, b),
            QuiltShape::Left { a } => (a, 0),
            QuiltShape::Right { b } => (0, b),
            QuiltShape::Trivial => (usize::MAX, usize::MAX),
        }
    }

    pub fn left(self) -> usize {
        match self {
            QuiltShape::Pair { a, .. } | QuiltShape::Left { a } => a,
            _ => 0,
        }
    }

    pub fn right(self) -> usize {
        match self {
            QuiltShape::Pair { b, .. } | QuiltShape::Right { b } => b,
            _ => 0,
        }
    }
}

/// A quilt around the protected node `node` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkovQuilt {
    pub node: usize,
    #[serde(flatten)]
    pub shape: QuiltShape,
}

impl MarkovQuilt {
    pub fn new(node: usize, shape: QuiltShape, len: usize) -> crate::Result<Self> {
        let q = Self { node, shape };
        if node == 0 || node > len || !q.in_range(len) {
            return Err(crate::Error::InvalidParameter(format!(
                "quilt {q} does not fit a chain of length {len}"
            )));
        }
        Ok(q)
    }

    pub fn trivial(node: usize) -> Self {
        Self {
            node,
            shape: QuiltShape::Trivial,
        }
    }

    fn in_range(&self, len: usize) -> bool {
        let (a, b) = (self.shape.left(), self.shape.right());
        let ok_a = a < self.node;
        let ok_b = self.node + b <= len;
        match self.shape {
            QuiltShape::Pair { a, b } => a >= 1 && b >= 1 && ok_a && ok_b,
            QuiltShape::Left { a } => a >= 1 && ok_a,
            QuiltShape::Right { b } => b >= 1 && ok_b,
            QuiltShape::Trivial => true,
        }
    }

    /// `|X_N|`, the number of nodes left on the protected side.
    pub fn n_size(&self, len: usize) -> usize {
        let i = self.node;
        match self.shape {
            QuiltShape::Pair { a, b } => a + b - 1,
            QuiltShape::Left { a } => len - i + a,
            QuiltShape::Right { b } => i + b - 1,
            QuiltShape::Trivial => len,
        }
    }

    /// 1-based node labels of `X_Q`.
    pub fn quilt_nodes(&self) -> Vec<usize> {
        let i = self.node;
        match self.shape {
            QuiltShape::Pair { a, b } => vec![i - a, i + b],
            QuiltShape::Left { a } => vec![i - a],
            QuiltShape::Right { b } => vec![i + b],
            QuiltShape::Trivial => vec![],
        }
    }

    /// Tie-break order: smaller `|X_N|`, then lexicographic `(a, b)`.
    pub fn preference(&self, other: &Self, len: usize) -> Ordering {
        self.n_size(len)
            .cmp(&other.n_size(len))
            .then(self.shape.key().cmp(&other.shape.key()))
    }
}

impl std::fmt::Display for MarkovQuilt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let nodes = self.quilt_nodes();
        if nodes.is_empty() {
            return write!(f, "X_{}: {{}}", self.node);
        }
        let names: Vec<String> = nodes.iter().map(|n| format!("X_{n}")).collect();
        write!(f, "X_{}: {{{}}}", self.node, names.join(", "))
    }
}

/// Whether `shape` belongs to the quilt set of node `i` under extent `ell`:
/// pairs need `a + b < ell`, one-sided quilts need `|X_N| <= ell`, and the
/// trivial quilt is always present.
pub fn admits(i: usize, len: usize, ell: usize, shape: QuiltShape) -> bool {
    let q = MarkovQuilt { node: i, shape };
    if i == 0 || i > len || !q.in_range(len) {
        return false;
    }
    match shape {
        QuiltShape::Pair { a, b } => a + b < ell,
        QuiltShape::Left { .. } | QuiltShape::Right { .. } => q.n_size(len) <= ell,
        QuiltShape::Trivial => true,
    }
}

/// Lazily yields the quilt set of node `i` in preference order, so a search
/// can stop as soon as `|X_N| / epsilon` exceeds its best score.
#[derive(Debug, Clone)]
pub struct QuiltIter {
    i: usize,
    len: usize,
    ell: usize,
    n: usize,
    buf: Vec<MarkovQuilt>,
    done: bool,
}

impl QuiltIter {
    pub fn new(i: usize, len: usize, ell: usize) -> Self {
        Self {
            i,
            len,
            ell,
            n: 0,
            buf: Vec::new(),
            done: i == 0 || i > len,
        }
    }

    fn fill(&mut self, n: usize) {
        let (i, len) = (self.i, self.len);
        let mut push = |shape| {
            if admits(i, len, self.ell, shape) {
                self.buf.push(MarkovQuilt { node: i, shape });
            }
        };
        // Pairs with a + b - 1 = n.
        for a in 1..=n {
            push(QuiltShape::Pair { a, b: n + 1 - a });
        }
        if n + i > len {
            push(QuiltShape::Left { a: n + i - len });
        }
        if n + 1 > i {
            push(QuiltShape::Right { b: n + 1 - i });
        }
        // Reverse preference order; `next` pops from the back.
        self.buf
            .sort_by(|x, y| y.shape.key().cmp(&x.shape.key()));
    }
}

impl Iterator for QuiltIter {
    type Item = MarkovQuilt;

    fn next(&mut self) -> Option<MarkovQuilt> {
        loop {
            if let Some(q) = self.buf.pop() {
                return Some(q);
            }
            if self.done {
                return None;
            }
            self.n += 1;
            if self.n >= self.len {
                self.done = true;
                return Some(MarkovQuilt::trivial(self.i));
            }
            self.fill(self.n);
        }
    }
}

/// The quilt set searched for node `i`, in preference order.
pub fn minimal_quilt_set(i: usize, len: usize, ell: usize) -> Vec<MarkovQuilt> {
    QuiltIter::new(i, len, ell).collect()
}

/// `|X_N| / (epsilon - e)` when `e < epsilon`, else `+inf`.
pub fn score(n_size: usize, influence: InfluenceValue, epsilon: f64) -> f64 {
    if influence < epsilon {
        n_size as f64 / (epsilon - influence)
    } else {
        f64::INFINITY
    }
}

/// Best quilt for one node under some influence function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuiltChoice {
    pub quilt: MarkovQuilt,
    pub influence: f64,
    pub score: f64,
}

/// Minimizes the score over the quilt set of node `i`. Stops early once the
/// best score drops to `good_enough` or below (the caller only needs to
/// know the node cannot beat that value). The trivial quilt guarantees a
/// finite result.
pub fn search_node<F>(i: usize, len: usize, ell: usize, epsilon: f64, good_enough: f64, mut influence: F) -> QuiltChoice
where
    F: FnMut(&MarkovQuilt) -> f64,
{
    let mut best = QuiltChoice {
        quilt: MarkovQuilt::trivial(i),
        influence: 0.0,
        score: f64::INFINITY,
    };
    for q in QuiltIter::new(i, len, ell) {
        let n = q.n_size(len);
        if n as f64 / epsilon >= best.score {
            break;
        }
        let e = influence(&q);
        let s = score(n, e, epsilon);
        if s < best.score {
            best = QuiltChoice {
                quilt: q,
                influence: e,
                score: s,
            };
            if best.score <= good_enough {
                break;
            }
        }
    }
    best
}
