//! Influence upper bounds from mixing parameters and the searches built on
//! them.

use rayon::prelude::*;

use super::mixing::{mixing_summary, GapMode, MixingSummary};
use crate::chain::DistributionClass;
use crate::error::Result;
use crate::noise::LaplaceSource;
use crate::plan::{MechanismId, NodeRecord, NoisePlan, PrivateRelease};
use crate::query::LipschitzQuery;
use crate::quilt::{search_node, InfluenceValue, MarkovQuilt, QuiltShape};

/// Smallest extent for which the bound applies: `2 log(1/pi_min) / g`.
pub fn extent_threshold(summary: &MixingSummary) -> f64 {
    2.0 * (1.0 / summary.pi_min).ln() / summary.g
}

/// `log((pi + d) / (pi - d))` with `d = exp(-g t / 2)`.
fn side_term(summary: &MixingSummary, t: usize) -> f64 {
    let d = (-summary.g * t as f64 / 2.0).exp();
    let pi = summary.pi_min;
    if d >= pi {
        return f64::INFINITY;
    }
    ((pi + d) / (pi - d)).ln()
}

/// Upper bound on the max-influence of a quilt with these extents. Quilts
/// whose extents fall below [`extent_threshold`] get `+inf`.
pub fn shape_bound(summary: &MixingSummary, shape: QuiltShape) -> InfluenceValue {
    let thr = extent_threshold(summary);
    let gate = |t: usize| t as f64 >= thr;
    match shape {
        QuiltShape::Trivial => 0.0,
        QuiltShape::Pair { a, b } if gate(a) && gate(b) => side_term(summary, b) + 2.0 * side_term(summary, a),
        QuiltShape::Left { a } if gate(a) => 2.0 * side_term(summary, a),
        QuiltShape::Right { b } if gate(b) => side_term(summary, b),
        _ => f64::INFINITY,
    }
}

pub fn influence_bound(summary: &MixingSummary, quilt: &MarkovQuilt) -> InfluenceValue {
    shape_bound(summary, quilt.shape)
}

/// `a* = 2 ceil(log(((e^{eps/6} + 1) / (e^{eps/6} - 1)) / pi_min) / g)`.
pub fn a_star(summary: &MixingSummary, epsilon: f64) -> usize {
    let e = (epsilon / 6.0).exp();
    let inner = ((e + 1.0) / (e - 1.0) / summary.pi_min).ln() / summary.g;
    2 * inner.ceil().max(0.0) as usize
}

fn plan_shell(mech: MechanismId, summary: MixingSummary, query: &LipschitzQuery, epsilon: f64, len: usize) -> NoisePlan {
    let mut plan = NoisePlan::new(mech, epsilon, query.lipschitz(), 0.0);
    plan.chain_length = Some(len);
    plan.a_star = Some(a_star(&summary, epsilon));
    let mut summary = summary;
    summary.a_star = plan.a_star;
    plan.mixing = Some(summary);
    plan
}

fn finish(mut plan: NoisePlan, per_node: Vec<NodeRecord>) -> NoisePlan {
    plan.sigma_max = per_node.iter().map(|r| r.score).fold(0.0, f64::max);
    plan.laplace_scale = plan.lipschitz * plan.sigma_max;
    plan.per_node = per_node;
    plan
}

fn search_all(summary: &MixingSummary, len: usize, ell: usize, epsilon: f64) -> Vec<NodeRecord> {
    (1..=len)
        .into_par_iter()
        .map(|i| {
            let c = search_node(i, len, ell, epsilon, f64::NEG_INFINITY, |q| shape_bound(summary, q.shape));
            NodeRecord {
                node: i,
                quilt: c.quilt,
                influence: c.influence,
                score: c.score,
                theta: None,
            }
        })
        .collect()
}

/// Noise calibration from the mixing bound, searched over every node.
pub fn approx_plan(
    class: &DistributionClass,
    query: &LipschitzQuery,
    epsilon: f64,
    ell: usize,
    mode: GapMode,
) -> Result<NoisePlan> {
    crate::check_epsilon(epsilon)?;
    if ell == 0 {
        return Err(crate::Error::InvalidParameter("ell must be at least 1".into()));
    }
    let summary = mixing_summary(class, mode)?;
    let len = class.chain_length();
    let per_node = search_all(&summary, len, ell, epsilon);
    let mut plan = plan_shell(MechanismId::MqmApprox, summary, query, epsilon, len);
    plan.ell = Some(ell);
    Ok(finish(plan, per_node))
}

/// Searches only the middle node when `T >= 8 a*`, over pair quilts in
/// the `ell = 4 a*` set; shorter chains fall back to the full search with
/// that `ell`.
pub fn fast_plan(class: &DistributionClass, query: &LipschitzQuery, epsilon: f64, mode: GapMode) -> Result<NoisePlan> {
    crate::check_epsilon(epsilon)?;
    let summary = mixing_summary(class, mode)?;
    let len = class.chain_length();
    let astar = a_star(&summary, epsilon);
    let ell = (4 * astar).max(1);
    let mut plan = plan_shell(MechanismId::MqmApproxFast, summary.clone(), query, epsilon, len);
    plan.ell = Some(ell);
    if len >= 8 * astar && astar > 0 {
        let mid = len.div_ceil(2);
        let c = search_node(mid, len, ell, epsilon, f64::NEG_INFINITY, |q| match q.shape {
            QuiltShape::Pair { .. } | QuiltShape::Trivial => shape_bound(&summary, q.shape),
            _ => f64::INFINITY,
        });
        let rec = NodeRecord {
            node: mid,
            quilt: c.quilt,
            influence: c.influence,
            score: c.score,
            theta: None,
        };
        Ok(finish(plan, vec![rec]))
    } else {
        plan.notes.push(format!(
            "T={len} is below 8a*={}: searched every node with ell={ell}",
            8 * astar
        ));
        Ok(finish(plan, search_all(&summary, len, ell, epsilon)))
    }
}

/// `F(data) + L * sigma_max * Lap(1)` with the bound-based calibration
/// (default gap mode).
pub fn mqm_approx(
    class: &DistributionClass,
    query: &LipschitzQuery,
    data: &[usize],
    epsilon: f64,
    ell: usize,
    src: &mut LaplaceSource,
) -> Result<PrivateRelease> {
    crate::check_data(data, class.chain_length(), class.state_count())?;
    let plan = approx_plan(class, query, epsilon, ell, GapMode::default())?;
    Ok(crate::plan::release(plan, query, data, src))
}

pub fn mqm_approx_fast(
    class: &DistributionClass,
    query: &LipschitzQuery,
    data: &[usize],
    epsilon: f64,
    src: &mut LaplaceSource,
) -> Result<PrivateRelease> {
    crate::check_data(data, class.chain_length(), class.state_count())?;
    let plan = fast_plan(class, query, epsilon, GapMode::default())?;
    Ok(crate::plan::release(plan, query, data, src))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary() -> MixingSummary {
        MixingSummary::new(0.2, 0.75).unwrap()
    }

    #[test]
    fn worked_bound() {
        let s = summary();
        let v = shape_bound(&s, QuiltShape::Pair { a: 12, b: 12 });
        // Hand evaluation: d = e^{-4.5} = 0.011109, 3 log(0.211109 / 0.188891).
        let d = (-4.5f64).exp();
        let hand = 3.0 * ((0.2 + d) / (0.2 - d)).ln();
        assert!((v - hand).abs() < 1e-12);
        assert!((v - 0.3337).abs() < 1e-4);
        assert_eq!(shape_bound(&s, QuiltShape::Trivial), 0.0);
        // Threshold 2 ln 5 / 0.75 = 4.29: extents up to 4 are gated.
        assert_eq!(shape_bound(&s, QuiltShape::Pair { a: 4, b: 12 }), f64::INFINITY);
        assert_eq!(shape_bound(&s, QuiltShape::Right { b: 4 }), f64::INFINITY);
        assert!(shape_bound(&s, QuiltShape::Right { b: 5 }).is_finite());
    }

    #[test]
    fn bound_decreases_with_extent() {
        let s = summary();
        for a in 5..40 {
            let here = shape_bound(&s, QuiltShape::Pair { a, b: 9 });
            let next = shape_bound(&s, QuiltShape::Pair { a: a + 1, b: 9 });
            assert!(next < here);
            let here = shape_bound(&s, QuiltShape::Pair { a: 9, b: a });
            let next = shape_bound(&s, QuiltShape::Pair { a: 9, b: a + 1 });
            assert!(next < here);
        }
    }

    #[test]
    fn a_star_values() {
        assert_eq!(a_star(&summary(), 1.0), 12);
        let mut last = usize::MAX;
        for eps in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let a = a_star(&summary(), eps);
            assert!(a <= last);
            last = a;
        }
        let faster = MixingSummary::new(0.2, 1.5).unwrap();
        assert!(a_star(&faster, 1.0) <= a_star(&summary(), 1.0));
    }

    fn mix_class(len: usize) -> DistributionClass {
        DistributionClass::mixing_params(0.2, 0.75, 2, len, false).unwrap()
    }

    #[test]
    fn length_one() {
        let f = LipschitzQuery::state_frequency(1, 0);
        let p = approx_plan(&mix_class(1), &f, 2.0, 1, GapMode::PpStar).unwrap();
        assert_eq!(p.sigma_max, 0.5);
    }

    #[test]
    fn fast_matches_full_and_ignores_length() {
        let f = LipschitzQuery::state_frequency(200, 0);
        let full = approx_plan(&mix_class(200), &f, 1.0, 48, GapMode::PpStar).unwrap();
        let fast = fast_plan(&mix_class(200), &f, 1.0, GapMode::PpStar).unwrap();
        assert_eq!(fast.a_star, Some(12));
        assert_eq!(fast.sigma_max, full.sigma_max);
        assert!(fast.sigma_max <= (4.0 * 12.0 - 2.0) / 1.0);
        assert!(fast.sigma_max < 200.0);
        for len in [99, 198, 396] {
            let f = LipschitzQuery::state_frequency(len, 0);
            let p = approx_plan(&mix_class(len), &f, 1.0, len, GapMode::PpStar).unwrap();
            assert_eq!(p.sigma_max, full.sigma_max, "T={len}");
        }
        let short = fast_plan(&mix_class(50), &LipschitzQuery::state_frequency(50, 0), 1.0, GapMode::PpStar).unwrap();
        assert_eq!(short.notes.len(), 1);
        assert_eq!(short.per_node.len(), 50);
    }
}
