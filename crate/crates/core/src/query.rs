//! Lipschitz queries over state sequences.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type EvalFn = Arc<dyn Fn(&[usize]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum QueryKind {
    /// Per-state share of the sequence.
    RelFreqHistogram { k: usize },
    /// Per-state count.
    CountHistogram { k: usize },
    /// Share of positions in `state` (0-based).
    StateFrequency { state: usize },
    /// Number of positions in `state` (0-based).
    StateCount { state: usize },
    Custom(EvalFn),
}

/// A query `F` with its L1 Lipschitz constant under a single-record change.
#[derive(Clone)]
pub struct LipschitzQuery {
    name: String,
    lipschitz: f64,
    dim: usize,
    len: usize,
    kind: QueryKind,
}

impl fmt::Debug for LipschitzQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzQuery")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("dim", &self.dim)
            .field("len", &self.len)
            .finish()
    }
}

impl LipschitzQuery {
    pub fn custom<F>(name: impl Into<String>, lipschitz: f64, dim: usize, len: usize, f: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> Vec<f64> + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant must be finite and non-negative, got {lipschitz}"
            )));
        }
        Ok(Self {
            name: name.into(),
            lipschitz,
            dim,
            len,
            kind: QueryKind::Custom(Arc::new(f)),
        })
    }

    pub fn rel_freq_histogram(len: usize, k: usize) -> Self {
        Self {
            name: "rel_freq_histogram".into(),
            lipschitz: 2.0 / len as f64,
            dim: k,
            len,
            kind: QueryKind::RelFreqHistogram { k },
        }
    }

    pub fn count_histogram(len: usize, k: usize) -> Self {
        Self {
            name: "count_histogram".into(),
            lipschitz: 2.0,
            dim: k,
            len,
            kind: QueryKind::CountHistogram { k },
        }
    }

    pub fn state_frequency(len: usize, state: usize) -> Self {
        Self {
            name: format!("state_frequency({})", state + 1),
            lipschitz: 1.0 / len as f64,
            dim: 1,
            len,
            kind: QueryKind::StateFrequency { state },
        }
    }

    pub fn state_count(len: usize, state: usize) -> Self {
        Self {
            name: format!("state_count({})", state + 1),
            lipschitz: 1.0,
            dim: 1,
            len,
            kind: QueryKind::StateCount { state },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sequence length the query was built for.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn kind(&self) -> &QueryKind {
        &self.kind
    }

    pub fn eval(&self, states: &[usize]) -> Vec<f64> {
        match &self.kind {
            QueryKind::RelFreqHistogram { k } => {
                let mut h = histogram(states, *k);
                let n = states.len().max(1) as f64;
                h.iter_mut().for_each(|v| *v /= n);
                h
            }
            QueryKind::CountHistogram { k } => histogram(states, *k),
            QueryKind::StateFrequency { state } => {
                let n = states.len().max(1) as f64;
                vec![states.iter().filter(|&&s| s == *state).count() as f64 / n]
            }
            QueryKind::StateCount { state } => {
                vec![states.iter().filter(|&&s| s == *state).count() as f64]
            }
            QueryKind::Custom(f) => f(states),
        }
    }

    /// L1 change of the query when a contiguous block of `block` records
    /// changes arbitrarily. `None` for custom queries.
    pub fn group_sensitivity(&self, block: usize) -> Option<f64> {
        let m = block.min(self.len) as f64;
        let t = self.len as f64;
        match self.kind {
            QueryKind::RelFreqHistogram { .. } => Some(2.0 * m / t),
            QueryKind::CountHistogram { .. } => Some(2.0 * m),
            QueryKind::StateFrequency { .. } => Some(m / t),
            QueryKind::StateCount { .. } => Some(m),
            QueryKind::Custom(_) => None,
        }
    }
}

fn histogram(states: &[usize], k: usize) -> Vec<f64> {
    let mut h = vec![0.0; k];
    for &s in states {
        if s < k {
            h[s] += 1.0;
        }
    }
    h
}

/// Looks up a builtin query by name. Accepted names: `rel_freq_histogram`,
/// `count_histogram`, `state_frequency(s)` and `state_count(s)` where `s` is
/// a 1-based state label.
pub fn builtin_query(name: &str, len: usize, k: usize) -> Result<LipschitzQuery> {
    let name = name.trim();
    match name {
        "rel_freq_histogram" => return Ok(LipschitzQuery::rel_freq_histogram(len, k)),
        "count_histogram" => return Ok(LipschitzQuery::count_histogram(len, k)),
        _ => {}
    }
    let parse_state = |prefix: &str| -> Option<Result<usize>> {
        let rest = name.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
        Some(match rest.trim().parse::<usize>() {
            Ok(s) if s >= 1 && s <= k => Ok(s - 1),
            _ => Err(Error::UnknownQuery(format!("{name} (state must be in 1..={k})"))),
        })
    };
    if let Some(s) = parse_state("state_frequency") {
        return Ok(LipschitzQuery::state_frequency(len, s?));
    }
    if let Some(s) = parse_state("state_count") {
        return Ok(LipschitzQuery::state_count(len, s?));
    }
    Err(Error::UnknownQuery(name.to_string()))
}
