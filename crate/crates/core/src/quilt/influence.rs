//! Max-influence of a quilt on a chain, exactly (via matrix powers) and by
//! brute-force enumeration of every sequence.

use std::sync::OnceLock;

use super::{InfluenceValue, MarkovQuilt, QuiltShape};
use crate::chain::{MarkovChainModel, TransitionMatrix};
use crate::error::{Error, Result};

/// Enumeration guard for the brute-force oracle (`k^T` sequences).
pub const BRUTE_FORCE_MAX_SEQUENCES: usize = 1_000_000;

/// `q` counts as stationary when `|qP - q|` is below this in every entry.
const STATIONARY_TOL: f64 = 1e-9;

/// Per-`theta` lookup tables. Influence of any quilt is then an `O(k^2)`
/// maximization over value pairs:
///
/// `max_{x != x'} [a>0](prior_i(x,x') + left_a(x,x')) + [b>0] right_b(x,x')`
///
/// where `prior_i(x,x') = log P(X_i=x')/P(X_i=x)`,
/// `left_a(x,x') = max_y log P^a(y,x)/P^a(y,x')` over every state `y`, and
/// `right_b(x,x') = max_z log P^b(x,z)/P^b(x',z)`. A value pair whose
/// secret has probability zero is skipped (stored as NaN in `prior`).
#[derive(Debug)]
pub struct InfluenceTables {
    k: usize,
    len: usize,
    left: Vec<f64>,
    right: Vec<f64>,
    prior: Vec<f64>,
    /// Stationary start: pair influence depends only on `(a, b)`.
    pair_cache: Option<Vec<OnceLock<f64>>>,
}

fn log_entries(m: &TransitionMatrix) -> Vec<f64> {
    m.as_flat().iter().map(|&v| v.ln()).collect()
}

/// `max_j log(num_j / den_j)` over `j` with positive numerator; a zero
/// denominator gives `+inf`, no admissible `j` gives `-inf`.
#[inline]
fn max_log_ratio(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (ln_num, ln_den) in pairs {
        if ln_num == f64::NEG_INFINITY {
            continue;
        }
        if ln_den == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        best = best.max(ln_num - ln_den);
    }
    best
}

impl InfluenceTables {
    fn power_tables(p: &TransitionMatrix, len: usize) -> (Vec<TransitionMatrix>, Vec<f64>, Vec<f64>) {
        let k = p.k();
        let kk = k * k;
        let powers = p.powers(len.saturating_sub(1));
        let mut left = vec![0.0; len * kk];
        let mut right = vec![0.0; len * kk];
        for (t, m) in powers.iter().enumerate().skip(1) {
            let lg = log_entries(m);
            for x in 0..k {
                for x2 in 0..k {
                    if x == x2 {
                        continue;
                    }
                    left[t * kk + x * k + x2] =
                        max_log_ratio((0..k).map(|y| (lg[y * k + x], lg[y * k + x2])));
                    right[t * kk + x * k + x2] =
                        max_log_ratio((0..k).map(|z| (lg[x * k + z], lg[x2 * k + z])));
                }
            }
        }
        (powers, left, right)
    }

    /// Tables for one fully specified chain.
    pub fn for_model(model: &MarkovChainModel) -> Self {
        let (k, len) = (model.k(), model.len());
        let kk = k * k;
        let p = model.matrix();
        let (_, left, right) = Self::power_tables(p, len);
        let q = model.initial();
        let qp = p.left_mul(q);
        let stationary = q.iter().zip(&qp).all(|(a, b)| (a - b).abs() <= STATIONARY_TOL);
        let marginals = if stationary {
            vec![q.to_vec(); len]
        } else {
            model.marginals()
        };
        let mut prior = vec![f64::NAN; len * kk];
        for (t, m) in marginals.iter().enumerate() {
            for x in 0..k {
                for x2 in 0..k {
                    if x != x2 && m[x] > 0.0 && m[x2] > 0.0 {
                        prior[t * kk + x * k + x2] = m[x2].ln() - m[x].ln();
                    }
                }
            }
        }
        let pair_cache = stationary.then(|| (0..len * len).map(|_| OnceLock::new()).collect());
        Self {
            k,
            len,
            left,
            right,
            prior,
            pair_cache,
        }
    }

    /// Tables for `P` paired with every initial distribution. The prior
    /// term becomes its supremum over the simplex, attained at a basis
    /// vector: `max_y log P^{i-1}(y,x') / P^{i-1}(y,x)`. A value is
    /// skipped only when no initial distribution can reach it.
    pub fn all_inits(p: &TransitionMatrix, len: usize) -> Self {
        let k = p.k();
        let kk = k * k;
        let (powers, left, right) = Self::power_tables(p, len);
        let mut prior = vec![f64::NAN; len * kk];
        for (t, m) in powers.iter().enumerate().take(len) {
            let lg = log_entries(m);
            let reachable: Vec<bool> = (0..k).map(|x| (0..k).any(|y| m.get(y, x) > 0.0)).collect();
            for x in 0..k {
                for x2 in 0..k {
                    if x != x2 && reachable[x] && reachable[x2] {
                        prior[t * kk + x * k + x2] =
                            max_log_ratio((0..k).map(|y| (lg[y * k + x2], lg[y * k + x])));
                    }
                }
            }
        }
        Self {
            k,
            len,
            left,
            right,
            prior,
            pair_cache: None,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn direct(&self, quilt: &MarkovQuilt) -> f64 {
        let (a, b) = (quilt.shape.left(), quilt.shape.right());
        let k = self.k;
        let kk = k * k;
        let prior = &self.prior[(quilt.node - 1) * kk..quilt.node * kk];
        let left = &self.left[a * kk..(a + 1) * kk];
        let right = &self.right[b * kk..(b + 1) * kk];
        let mut e: f64 = 0.0;
        for idx in 0..kk {
            let p = prior[idx];
            if p.is_nan() {
                continue;
            }
            let mut v = 0.0;
            if a > 0 {
                v += p + left[idx];
            }
            if b > 0 {
                v += right[idx];
            }
            if v.is_nan() {
                return f64::INFINITY;
            }
            e = e.max(v);
        }
        e
    }

    /// Max-influence of `quilt`, which must fit the chain.
    pub fn influence(&self, quilt: &MarkovQuilt) -> InfluenceValue {
        debug_assert!(quilt.node >= 1 && quilt.node <= self.len);
        match quilt.shape {
            QuiltShape::Trivial => 0.0,
            QuiltShape::Pair { a, b } => match &self.pair_cache {
                Some(cache) => *cache[a * self.len + b].get_or_init(|| self.direct(quilt)),
                None => self.direct(quilt),
            },
            _ => self.direct(quilt),
        }
    }

    pub fn has_pair_cache(&self) -> bool {
        self.pair_cache.is_some()
    }
}

fn check_fits(quilt: &MarkovQuilt, len: usize) -> Result<()> {
    MarkovQuilt::new(quilt.node, quilt.shape, len).map(|_| ())
}

/// Max-influence of `quilt` under one chain, exactly.
pub fn exact_max_influence(model: &MarkovChainModel, quilt: &MarkovQuilt) -> Result<InfluenceValue> {
    check_fits(quilt, model.len())?;
    Ok(InfluenceTables::for_model(model).influence(quilt))
}

/// Max-influence of `quilt` over `P` with every initial distribution.
pub fn exact_influence_all_inits(p: &TransitionMatrix, len: usize, quilt: &MarkovQuilt) -> Result<InfluenceValue> {
    check_fits(quilt, len)?;
    Ok(InfluenceTables::all_inits(p, len).influence(quilt))
}

/// Max-influence straight from the definition: the joint law of the quilt
/// nodes is tabulated by enumerating all `k^T` sequences.
pub fn brute_force_max_influence(model: &MarkovChainModel, quilt: &MarkovQuilt) -> Result<InfluenceValue> {
    check_fits(quilt, model.len())?;
    brute_force_subset_influence(model, quilt.node, &quilt.quilt_nodes())
}

/// Like [`brute_force_max_influence`] for an arbitrary set of 1-based
/// conditioning nodes (not containing `node`).
pub fn brute_force_subset_influence(model: &MarkovChainModel, node: usize, subset: &[usize]) -> Result<InfluenceValue> {
    let (k, len) = (model.k(), model.len());
    let sequences = (0..len).try_fold(1usize, |acc, _| {
        acc.checked_mul(k).filter(|&v| v <= BRUTE_FORCE_MAX_SEQUENCES)
    });
    let Some(_) = sequences else {
        return Err(Error::TooLarge(format!(
            "{k}^{len} sequences exceeds {BRUTE_FORCE_MAX_SEQUENCES}"
        )));
    };
    if node == 0 || node > len || subset.iter().any(|&s| s == 0 || s > len || s == node) {
        return Err(Error::InvalidParameter("conditioning nodes out of range".into()));
    }
    let codes = k.pow(subset.len() as u32);
    let mut joint = vec![0.0; k * codes];
    let q = model.initial();
    let p = model.matrix();
    let mut seq = vec![0usize; len];
    // Depth-first walk over sequences carrying the running probability.
    fn walk(
        t: usize,
        prob: f64,
        seq: &mut [usize],
        ctx: &(usize, &[f64], &TransitionMatrix, usize, &[usize], usize),
        joint: &mut [f64],
    ) {
        let (k, q, p, node, subset, codes) = *ctx;
        if prob == 0.0 {
            return;
        }
        if t == seq.len() {
            let code = subset.iter().fold(0, |acc, &s| acc * k + seq[s - 1]);
            joint[seq[node - 1] * codes + code] += prob;
            return;
        }
        for x in 0..k {
            let step = if t == 0 { q[x] } else { p.get(seq[t - 1], x) };
            seq[t] = x;
            walk(t + 1, prob * step, seq, ctx, joint);
        }
    }
    let ctx = (k, q, p, node, subset, codes);
    walk(0, 1.0, &mut seq, &ctx, &mut joint);

    let marg: Vec<f64> = (0..k).map(|x| joint[x * codes..(x + 1) * codes].iter().sum()).collect();
    let mut e: f64 = 0.0;
    for x in 0..k {
        for x2 in 0..k {
            if x == x2 || marg[x] <= 0.0 || marg[x2] <= 0.0 {
                continue;
            }
            for v in 0..codes {
                let num = joint[x * codes + v] / marg[x];
                if num <= 0.0 {
                    continue;
                }
                let den = joint[x2 * codes + v] / marg[x2];
                if den <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                e = e.max((num / den).ln());
            }
        }
    }
    Ok(e)
}
