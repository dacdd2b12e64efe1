//! Exact quilt search over an explicit class.

use rayon::prelude::*;

use super::{search_node, InfluenceTables, QuiltChoice};
use crate::chain::{ClassKind, DistributionClass};
use crate::error::{Error, Result};
use crate::noise::LaplaceSource;
use crate::plan::{MechanismId, NodeRecord, NoisePlan, PrivateRelease};
use crate::query::LipschitzQuery;

fn member_tables(class: &DistributionClass) -> Result<Vec<InfluenceTables>> {
    let len = class.chain_length();
    match class.kind() {
        ClassKind::FiniteSet(models) => Ok(models.par_iter().map(InfluenceTables::for_model).collect()),
        ClassKind::MatrixSetAllInits { .. } | ClassKind::BinaryInterval { .. } => Ok(class
            .transition_matrices()?
            .par_iter()
            .map(|p| InfluenceTables::all_inits(p, len))
            .collect()),
        ClassKind::MixingParams { .. } => Err(Error::UnsupportedClass {
            mechanism: "mqm_exact",
            class: "mixing_params",
        }),
    }
}

/// Computes the exact noise calibration without drawing any noise.
///
/// For each node, `sigma_i = max_theta min_quilt score`. Members are
/// scanned in order; once a member is known not to exceed the running
/// maximum for a node, its quilt search stops early. Ties keep the
/// earliest member and the preferred quilt, so the plan does not depend on
/// the thread count.
pub fn exact_plan(class: &DistributionClass, query: &LipschitzQuery, epsilon: f64, ell: usize) -> Result<NoisePlan> {
    crate::check_epsilon(epsilon)?;
    if ell == 0 {
        return Err(Error::InvalidParameter("ell must be at least 1".into()));
    }
    let len = class.chain_length();
    let tables = member_tables(class)?;
    let per_node: Vec<NodeRecord> = (1..=len)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(QuiltChoice, usize)> = None;
            for (t, tab) in tables.iter().enumerate() {
                let bar = best.map_or(f64::NEG_INFINITY, |b| b.0.score);
                let c = search_node(i, len, ell, epsilon, bar, |q| tab.influence(q));
                if c.score > bar {
                    best = Some((c, t));
                }
            }
            let (c, t) = best.expect("class has at least one member");
            NodeRecord {
                node: i,
                quilt: c.quilt,
                influence: c.influence,
                score: c.score,
                theta: Some(t),
            }
        })
        .collect();
    let sigma_max = per_node.iter().map(|r| r.score).fold(0.0, f64::max);
    let mut plan = NoisePlan::new(MechanismId::MqmExact, epsilon, query.lipschitz(), sigma_max);
    plan.chain_length = Some(len);
    plan.ell = Some(ell);
    plan.per_node = per_node;
    if matches!(class.kind(), ClassKind::BinaryInterval { .. }) {
        plan.notes.push(format!(
            "binary interval expanded to {} grid matrices, all initial distributions",
            tables.len()
        ));
    }
    Ok(plan)
}

/// `F(data) + L * sigma_max * Lap(1)` per coordinate, calibrated exactly.
pub fn mqm_exact(
    class: &DistributionClass,
    query: &LipschitzQuery,
    data: &[usize],
    epsilon: f64,
    ell: usize,
    src: &mut LaplaceSource,
) -> Result<PrivateRelease> {
    crate::check_data(data, class.chain_length(), class.state_count())?;
    let plan = exact_plan(class, query, epsilon, ell)?;
    Ok(crate::plan::release(plan, query, data, src))
}
