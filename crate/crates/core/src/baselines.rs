//! Group-DP and entry-DP Laplace baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::LaplaceSource;
use crate::plan::{MechanismId, NoisePlan, PrivateRelease};
use crate::query::LipschitzQuery;

/// Half-open, 0-based index ranges that are treated as independent chains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSegmentation {
    segments: Vec<(usize, usize)>,
}

impl ChainSegmentation {
    /// Segments must be non-empty, ordered and tile `0..len`.
    pub fn new(segments: Vec<(usize, usize)>, len: usize) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Empty("segmentation".into()));
        }
        let mut next = 0;
        for &(s, e) in &segments {
            if s != next || e <= s {
                return Err(Error::InvalidParameter(format!(
                    "segment [{s}, {e}) does not continue at {next}"
                )));
            }
            next = e;
        }
        if next != len {
            return Err(Error::InvalidParameter(format!(
                "segments cover {next} of {len} positions"
            )));
        }
        Ok(Self { segments })
    }

    pub fn single(len: usize) -> Self {
        Self {
            segments: vec![(0, len)],
        }
    }

    pub fn singletons(len: usize) -> Self {
        Self {
            segments: (0..len).map(|i| (i, i + 1)).collect(),
        }
    }

    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut start = 0;
        let segs = lengths
            .iter()
            .map(|&l| {
                let s = (start, start + l);
                start += l;
                s
            })
            .collect();
        Self::new(segs, start)
    }

    pub fn segments(&self) -> &[(usize, usize)] {
        &self.segments
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().map(|(s, e)| e - s)
    }

    /// Length of the longest segment, `M`.
    pub fn longest(&self) -> usize {
        self.lengths().max().unwrap_or(0)
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.1)
    }
}

/// Group-DP noise plan: the whole longest segment may change, so the
/// sensitivity is the query's change over a block of `M` records.
/// `custom_sensitivity` is required for custom queries.
pub fn group_dp_plan(
    query: &LipschitzQuery,
    seg: &ChainSegmentation,
    epsilon: f64,
    custom_sensitivity: Option<f64>,
) -> Result<NoisePlan> {
    crate::check_epsilon(epsilon)?;
    if seg.total_len() != query.len() {
        return Err(Error::InvalidParameter(format!(
            "segmentation covers {} records, query expects {}",
            seg.total_len(),
            query.len()
        )));
    }
    let m = seg.longest();
    let mut plan = match (query.group_sensitivity(m), custom_sensitivity) {
        (_, Some(s)) => {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("bad group sensitivity {s}")));
            }
            NoisePlan::new(MechanismId::GroupDp, epsilon, s, 1.0 / epsilon)
        }
        // Builtins scale linearly in the block size: L_group = M * L.
        (Some(_), None) => NoisePlan::new(MechanismId::GroupDp, epsilon, query.lipschitz(), m as f64 / epsilon),
        (None, None) => return Err(Error::GroupSensitivityRequired(query.name().to_string())),
    };
    plan.chain_length = Some(seg.total_len());
    plan.notes.push(format!("longest segment M={m}"));
    Ok(plan)
}

/// Laplace scale per coordinate for group DP.
pub fn group_dp_scale(query: &LipschitzQuery, seg: &ChainSegmentation, epsilon: f64) -> Result<f64> {
    group_dp_plan(query, seg, epsilon, None).map(|p| p.laplace_scale)
}

pub fn entry_dp_plan(query: &LipschitzQuery, epsilon: f64) -> Result<NoisePlan> {
    crate::check_epsilon(epsilon)?;
    let mut plan = NoisePlan::new(MechanismId::EntryDp, epsilon, query.lipschitz(), 1.0 / epsilon);
    plan.chain_length = Some(query.len());
    Ok(plan)
}

/// `L / epsilon`: protects single entries, ignores correlation.
pub fn entry_dp_scale(query: &LipschitzQuery, epsilon: f64) -> Result<f64> {
    entry_dp_plan(query, epsilon).map(|p| p.laplace_scale)
}

pub fn group_dp(
    query: &LipschitzQuery,
    seg: &ChainSegmentation,
    data: &[usize],
    epsilon: f64,
    src: &mut LaplaceSource,
) -> Result<PrivateRelease> {
    let plan = group_dp_plan(query, seg, epsilon, None)?;
    Ok(crate::plan::release(plan, query, data, src))
}

pub fn entry_dp(query: &LipschitzQuery, data: &[usize], epsilon: f64, src: &mut LaplaceSource) -> Result<PrivateRelease> {
    let plan = entry_dp_plan(query, epsilon)?;
    Ok(crate::plan::release(plan, query, data, src))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_chain_state_frequency() {
        let f = LipschitzQuery::state_frequency(100, 0);
        let s = group_dp_scale(&f, &ChainSegmentation::single(100), 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s = group_dp_scale(&f, &ChainSegmentation::single(100), 0.2).unwrap();
        assert!((s - 5.0).abs() < 1e-12);
    }

    #[test]
    fn singletons_reduce_to_entry_dp() {
        for f in [
            LipschitzQuery::state_frequency(50, 1),
            LipschitzQuery::rel_freq_histogram(50, 3),
            LipschitzQuery::count_histogram(50, 3),
        ] {
            let g = group_dp_scale(&f, &ChainSegmentation::singletons(50), 2.0).unwrap();
            let e = entry_dp_scale(&f, 2.0).unwrap();
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn two_segments_rel_freq() {
        let f = LipschitzQuery::rel_freq_histogram(100, 3);
        let seg = ChainSegmentation::from_lengths(&[60, 40]).unwrap();
        for eps in [0.5, 1.0, 3.0] {
            let s = group_dp_scale(&f, &seg, eps).unwrap();
            assert!((s - 1.2 / eps).abs() < 1e-12);
        }
    }

    #[test]
    fn group_sensitivity_by_brute_force() {
        // Worst change of the query when one whole segment is rewritten,
        // enumerated on a tiny instance.
        let (len, k) = (6, 2);
        let seg = ChainSegmentation::from_lengths(&[4, 2]).unwrap();
        for f in [
            LipschitzQuery::rel_freq_histogram(len, k),
            LipschitzQuery::count_histogram(len, k),
            LipschitzQuery::state_frequency(len, 0),
        ] {
            let mut worst: f64 = 0.0;
            for x in 0..1usize << len {
                let xs: Vec<usize> = (0..len).map(|j| (x >> j) & 1).collect();
                for &(s, e) in seg.segments() {
                    for y in 0..1usize << (e - s) {
                        let mut ys = xs.clone();
                        for j in s..e {
                            ys[j] = (y >> (j - s)) & 1;
                        }
                        let d: f64 = f.eval(&xs).iter().zip(f.eval(&ys)).map(|(a, b)| (a - b).abs()).sum();
                        worst = worst.max(d);
                    }
                }
            }
            let scale = group_dp_scale(&f, &seg, 1.0).unwrap();
            assert!((scale - worst).abs() < 1e-12, "{}: {scale} vs {worst}", f.name());
        }
    }

    #[test]
    fn entry_scales() {
        assert_eq!(entry_dp_scale(&LipschitzQuery::count_histogram(10, 3), 1.0).unwrap(), 2.0);
        assert_eq!(entry_dp_scale(&LipschitzQuery::count_histogram(10, 3), 5.0).unwrap(), 0.4);
        let s = entry_dp_scale(&LipschitzQuery::state_frequency(100, 0), 1.0).unwrap();
        assert!((s - 0.01).abs() < 1e-15);
    }

    #[test]
    fn group_never_below_entry() {
        let f = LipschitzQuery::count_histogram(30, 2);
        for lengths in [vec![30], vec![10, 20], vec![1; 30], vec![29, 1]] {
            let seg = ChainSegmentation::from_lengths(&lengths).unwrap();
            let g = group_dp_scale(&f, &seg, 1.0).unwrap();
            let e = entry_dp_scale(&f, 1.0).unwrap();
            assert!(g >= e);
            assert_eq!(g == e, seg.longest() == 1);
        }
    }

    #[test]
    fn custom_queries_need_sensitivity() {
        let f = LipschitzQuery::custom("max", 1.0, 1, 5, |x| vec![*x.iter().max().unwrap() as f64]).unwrap();
        let seg = ChainSegmentation::single(5);
        assert!(matches!(
            group_dp_scale(&f, &seg, 1.0),
            Err(Error::GroupSensitivityRequired(_))
        ));
        let p = group_dp_plan(&f, &seg, 2.0, Some(3.0)).unwrap();
        assert_eq!(p.laplace_scale, 1.5);
    }

    #[test]
    fn segmentation_validation() {
        assert!(ChainSegmentation::new(vec![], 0).is_err());
        assert!(ChainSegmentation::new(vec![(0, 2), (3, 4)], 4).is_err());
        assert!(ChainSegmentation::new(vec![(0, 2), (2, 2)], 2).is_err());
        assert!(ChainSegmentation::new(vec![(0, 2), (2, 4)], 5).is_err());
        assert!(ChainSegmentation::new(vec![(0, 2), (2, 4)], 4).is_ok());
    }
}
