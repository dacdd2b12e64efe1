use serde::{Deserialize, Serialize};

use crate::approx::MixingSummary;
use crate::noise::LaplaceSource;
use crate::query::LipschitzQuery;
use crate::quilt::MarkovQuilt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismId {
    Wasserstein,
    MqmExact,
    MqmApprox,
    MqmApproxFast,
    GroupDp,
    EntryDp,
}

impl MechanismId {
    pub fn as_str(self) -> &'static str {
        match self {
            MechanismId::Wasserstein => "wasserstein",
            MechanismId::MqmExact => "mqm_exact",
            MechanismId::MqmApprox => "mqm_approx",
            MechanismId::MqmApproxFast => "mqm_approx_fast",
            MechanismId::GroupDp => "group_dp",
            MechanismId::EntryDp => "entry_dp",
        }
    }
}

impl std::str::FromStr for MechanismId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "wasserstein" => MechanismId::Wasserstein,
            "mqm_exact" => MechanismId::MqmExact,
            "mqm_approx" => MechanismId::MqmApprox,
            "mqm_approx_fast" => MechanismId::MqmApproxFast,
            "group_dp" => MechanismId::GroupDp,
            "entry_dp" => MechanismId::EntryDp,
            other => return Err(format!("unknown mechanism `{other}`")),
        })
    }
}

/// Winning quilt for one protected node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    /// 1-based node label.
    pub node: usize,
    pub quilt: MarkovQuilt,
    pub influence: f64,
    pub score: f64,
    /// Index of the maximizing member of the class (exact mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<usize>,
}

/// Everything needed to audit a noise calibration without drawing noise.
///
/// For the quilt mechanisms `laplace_scale = lipschitz * sigma_max`. For the
/// Wasserstein mechanism `sigma_max` holds `W / epsilon` and `lipschitz` is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub mechanism: MechanismId,
    pub epsilon: f64,
    pub lipschitz: f64,
    pub sigma_max: f64,
    pub laplace_scale: f64,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub chain_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_node: Vec<NodeRecord>,
    /// Wasserstein parameter `W`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wasserstein: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_star: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl NoisePlan {
    pub(crate) fn new(mechanism: MechanismId, epsilon: f64, lipschitz: f64, sigma_max: f64) -> Self {
        Self {
            mechanism,
            epsilon,
            lipschitz,
            sigma_max,
            laplace_scale: lipschitz * sigma_max,
            chain_length: None,
            ell: None,
            per_node: Vec::new(),
            wasserstein: None,
            a_star: None,
            mixing: None,
            notes: Vec::new(),
        }
    }

    /// Node with the largest score (first on ties).
    pub fn argmax_node(&self) -> Option<&NodeRecord> {
        self.per_node
            .iter()
            .fold(None, |best: Option<&NodeRecord>, r| match best {
                Some(b) if b.score >= r.score => Some(b),
                _ => Some(r),
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("noise plan serializes")
    }
}

/// A released answer together with the calibration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateRelease {
    pub answer: Vec<f64>,
    pub plan: NoisePlan,
}

/// Adds `laplace_scale * Lap(1)` to each coordinate of `F(data)`.
pub fn release(plan: NoisePlan, query: &LipschitzQuery, data: &[usize], src: &mut LaplaceSource) -> PrivateRelease {
    let mut answer = query.eval(data);
    for v in &mut answer {
        *v += src.draw(plan.laplace_scale);
    }
    PrivateRelease { answer, plan }
}
