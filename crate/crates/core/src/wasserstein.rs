//! The Wasserstein Mechanism over small, explicitly tabulated joint models.

use serde::{Deserialize, Serialize};

use crate::discrete::{w_infinity, DiscreteDistribution, MASS_TOL};
use crate::error::{Error, Result};
use crate::noise::LaplaceSource;
use crate::plan::{MechanismId, NoisePlan, PrivateRelease};
use crate::query::LipschitzQuery;

/// Largest outcome table we are willing to enumerate.
pub const MAX_OUTCOMES: usize = 10_000_000;

/// Joint distribution of `n` records over `{0, .., domain-1}`, stored as a
/// flat table with record 0 as the most significant digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    n: usize,
    domain: usize,
    probs: Vec<f64>,
}

fn outcome_count(n: usize, domain: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..n {
        total = total
            .checked_mul(domain)
            .filter(|&t| t <= MAX_OUTCOMES)
            .ok_or_else(|| {
                Error::TooLarge(format!("{domain}^{n} outcomes exceeds {MAX_OUTCOMES}"))
            })?;
    }
    Ok(total)
}

impl JointModel {
    pub fn new(n: usize, domain: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || domain < 2 {
            return Err(Error::InvalidModel("need n >= 1 records and domain >= 2".into()));
        }
        let total = outcome_count(n, domain)?;
        if probs.len() != total {
            return Err(Error::InvalidModel(format!(
                "table has {} entries, expected {total}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidModel("table entries must lie in [0,1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidModel(format!("table sums to {sum}")));
        }
        Ok(Self { n, domain, probs })
    }

    /// Product of independent per-record marginals.
    pub fn independent(marginals: &[Vec<f64>]) -> Result<Self> {
        let domain = marginals.first().map_or(0, |m| m.len());
        if marginals.iter().any(|m| m.len() != domain) {
            return Err(Error::InvalidModel("marginals must share a domain".into()));
        }
        let groups: Vec<(Vec<usize>, Vec<f64>)> = marginals
            .iter()
            .enumerate()
            .map(|(i, m)| (vec![i], m.clone()))
            .collect();
        Self::from_independent_groups(marginals.len(), domain, &groups)
    }

    /// Product over independent groups; each group carries its own joint
    /// table over its members (in the listed order).
    pub fn from_independent_groups(
        n: usize,
        domain: usize,
        groups: &[(Vec<usize>, Vec<f64>)],
    ) -> Result<Self> {
        GroupStructure::new(groups.iter().map(|g| g.0.clone()).collect(), n)?;
        let total = outcome_count(n, domain)?;
        let mut probs = vec![1.0; total];
        let mut digits = vec![0usize; n];
        for (idx, p) in probs.iter_mut().enumerate() {
            decode_into(idx, domain, &mut digits);
            for (members, table) in groups {
                let local = members.iter().fold(0, |acc, &m| acc * domain + digits[m]);
                *p *= table[local];
            }
        }
        Self::new(n, domain, probs)
    }

    /// Binary records whose joint depends only on the number of ones:
    /// `P(x) = count_dist[|x|] / C(n, |x|)`.
    pub fn exchangeable_binary(count_dist: &[f64]) -> Result<Self> {
        let n = count_dist.len().saturating_sub(1);
        let total = outcome_count(n, 2)?;
        let probs = (0..total)
            .map(|idx| {
                let ones = (idx as u64).count_ones() as usize;
                count_dist[ones] / binomial(n, ones)
            })
            .collect();
        Self::new(n, 2, probs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(idx, &p)| {
            let mut d = vec![0; self.n];
            decode_into(idx, self.domain, &mut d);
            (d, p)
        })
    }

    /// `P(X_record = value)`.
    pub fn secret_prob(&self, record: usize, value: usize) -> f64 {
        self.outcomes()
            .filter(|(x, _)| x[record] == value)
            .map(|(_, p)| p)
            .sum()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn decode_into(mut idx: usize, domain: usize, out: &mut [usize]) {
    for d in out.iter_mut().rev() {
        *d = idx % domain;
        idx /= domain;
    }
}

/// Partition of record indices (0-based) into groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
}

impl GroupStructure {
    pub fn new(groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidParameter("empty group".into()));
            }
            for &i in g {
                if i >= n || seen[i] {
                    return Err(Error::InvalidParameter(format!(
                        "record {i} is out of range or in two groups"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "record {missing} is not in any group"
            )));
        }
        Ok(Self { groups })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn whole(n: usize) -> Self {
        Self {
            groups: vec![(0..n).collect()],
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

fn scalar(query: &LipschitzQuery) -> Result<()> {
    if query.dim() != 1 {
        return Err(Error::InvalidParameter(format!(
            "the Wasserstein mechanism needs a scalar query, `{}` has dimension {}",
            query.name(),
            query.dim()
        )));
    }
    Ok(())
}

/// Exact distribution of `F(X)` given `X_record = value`.
pub fn conditional_output_dist(
    model: &JointModel,
    query: &LipschitzQuery,
    record: usize,
    value: usize,
) -> Result<DiscreteDistribution> {
    scalar(query)?;
    if record >= model.n || value >= model.domain {
        return Err(Error::InvalidParameter(format!(
            "secret ({record}, {value}) out of range"
        )));
    }
    let mut atoms = Vec::new();
    let mut mass = 0.0;
    for (x, p) in model.outcomes() {
        if x[record] == value && p > 0.0 {
            atoms.push((query.eval(&x)[0], p));
            mass += p;
        }
    }
    if mass <= 0.0 {
        return Err(Error::ZeroProbabilitySecret { record, value });
    }
    atoms.iter_mut().for_each(|a| a.1 /= mass);
    DiscreteDistribution::new(atoms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub model: usize,
    pub record: usize,
    pub values: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinScale {
    pub w: f64,
    /// Secret pairs dropped because one side has zero probability.
    pub skipped: Vec<SkippedPair>,
}

/// `W = sup` over models, records and value pairs of the infinity-Wasserstein
/// distance between the two conditional output distributions.
pub fn wasserstein_scale(models: &[JointModel], query: &LipschitzQuery) -> Result<WassersteinScale> {
    scalar(query)?;
    let mut w: Option<f64> = None;
    let mut skipped = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        for record in 0..model.n {
            let conds: Vec<Option<DiscreteDistribution>> = (0..model.domain)
                .map(|v| conditional_output_dist(model, query, record, v).ok())
                .collect();
            for a in 0..model.domain {
                for b in a + 1..model.domain {
                    match (&conds[a], &conds[b]) {
                        (Some(mu), Some(nu)) => {
                            let d = w_infinity(mu, nu);
                            w = Some(w.map_or(d, |cur| cur.max(d)));
                        }
                        _ => skipped.push(SkippedPair {
                            model: mi,
                            record,
                            values: (a, b),
                        }),
                    }
                }
            }
        }
    }
    Ok(WassersteinScale {
        w: w.ok_or(Error::NoAdmissiblePair)?,
        skipped,
    })
}

/// Releases `F(data) + Lap(W / epsilon)`.
pub fn wasserstein_mechanism(
    models: &[JointModel],
    query: &LipschitzQuery,
    data: &[usize],
    epsilon: f64,
    src: &mut LaplaceSource,
) -> Result<PrivateRelease> {
    let plan = wasserstein_plan(models, query, epsilon)?;
    let mut answer = query.eval(data);
    for v in &mut answer {
        *v += src.draw(plan.laplace_scale);
    }
    Ok(PrivateRelease { answer, plan })
}

pub fn wasserstein_plan(models: &[JointModel], query: &LipschitzQuery, epsilon: f64) -> Result<NoisePlan> {
    crate::check_epsilon(epsilon)?;
    let scale = wasserstein_scale(models, query)?;
    let mut plan = NoisePlan::new(MechanismId::Wasserstein, epsilon, 1.0, scale.w / epsilon);
    plan.wasserstein = Some(scale.w);
    plan.notes = scale
        .skipped
        .iter()
        .map(|s| {
            format!(
                "skipped secret pair (record {}, values {} vs {}) in model {}: zero probability",
                s.record + 1,
                s.values.0 + 1,
                s.values.1 + 1,
                s.model
            )
        })
        .collect();
    Ok(plan)
}

/// Largest L1 change of `F` when every record of one group changes
/// arbitrarily, maximized over all databases in the domain.
pub fn group_sensitivity(
    n: usize,
    domain: usize,
    query: &LipschitzQuery,
    groups: &GroupStructure,
) -> Result<f64> {
    let total = outcome_count(n, domain)?;
    let values: Vec<Vec<f64>> = (0..total)
        .map(|idx| {
            let mut d = vec![0; n];
            decode_into(idx, domain, &mut d);
            query.eval(&d)
        })
        .collect();
    let mut best: f64 = 0.0;
    let mut digits = vec![0usize; n];
    for g in groups.groups() {
        let reassignments = outcome_count(g.len(), domain)?;
        let mut local = vec![0usize; g.len()];
        for idx in 0..total {
            decode_into(idx, domain, &mut digits);
            for r in 0..reassignments {
                decode_into(r, domain, &mut local);
                let mut other = digits.clone();
                for (&m, &v) in g.iter().zip(&local) {
                    other[m] = v;
                }
                let j = other.iter().fold(0, |acc, &v| acc * domain + v);
                let d: f64 = values[idx]
                    .iter()
                    .zip(&values[j])
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                best = best.max(d);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn flu() -> JointModel {
        JointModel::exchangeable_binary(&[0.1, 0.15, 0.5, 0.15, 0.1]).unwrap()
    }

    fn infected(n: usize) -> LipschitzQuery {
        LipschitzQuery::state_count(n, 1)
    }

    #[test]
    fn flu_conditionals() {
        let m = flu();
        let mu = conditional_output_dist(&m, &infected(4), 0, 0).unwrap();
        let expect = [0.2, 0.225, 0.5, 0.075];
        for (j, e) in expect.iter().enumerate() {
            assert!((mu.prob_of(j as f64) - e).abs() < 1e-12);
        }
        assert_eq!(mu.prob_of(4.0), 0.0);
        let nu = conditional_output_dist(&m, &infected(4), 3, 1).unwrap();
        for (j, e) in [0.0, 0.075, 0.5, 0.225, 0.2].iter().enumerate() {
            assert!((nu.prob_of(j as f64) - e).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_bits() {
        let m = JointModel::independent(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let q = infected(2);
        let c0 = conditional_output_dist(&m, &q, 0, 0).unwrap();
        assert_eq!(c0.atoms(), &[(0.0, 0.5), (1.0, 0.5)]);
        let c1 = conditional_output_dist(&m, &q, 0, 1).unwrap();
        assert_eq!(c1.atoms(), &[(1.0, 0.5), (2.0, 0.5)]);
    }

    #[test]
    fn zero_probability_secret() {
        let m = JointModel::independent(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let err = conditional_output_dist(&m, &infected(2), 0, 1).unwrap_err();
        assert!(matches!(err, Error::ZeroProbabilitySecret { record: 0, value: 1 }));
        // Record 0's pair is skipped, record 1 still defines W.
        let s = wasserstein_scale(&[m], &infected(2)).unwrap();
        assert_eq!(s.w, 1.0);
        assert_eq!(s.skipped.len(), 1);
    }

    #[test]
    fn no_admissible_pair() {
        let m = JointModel::new(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            wasserstein_scale(&[m], &infected(1)),
            Err(Error::NoAdmissiblePair)
        ));
    }

    #[test]
    fn flu_scale_and_mechanism() {
        let m = flu();
        assert_eq!(wasserstein_scale(&[m.clone()], &infected(4)).unwrap().w, 2.0);
        let plan = wasserstein_plan(&[m.clone()], &infected(4), 5.0).unwrap();
        assert!((plan.laplace_scale - 0.4).abs() < 1e-15);

        let data = [1, 0, 1, 0];
        let a = wasserstein_mechanism(&[m.clone()], &infected(4), &data, 1.0, &mut LaplaceSource::new(3)).unwrap();
        let b = wasserstein_mechanism(&[m.clone()], &infected(4), &data, 1.0, &mut LaplaceSource::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.plan.laplace_scale, 2.0);
        let expected = 2.0 + LaplaceSource::new(3).draw(2.0);
        assert_eq!(a.answer[0], expected);
        assert!(wasserstein_mechanism(&[m], &infected(4), &data, 0.0, &mut LaplaceSource::new(3)).is_err());
    }

    #[test]
    fn constant_query_releases_exact_answer() {
        let q = LipschitzQuery::custom("const", 0.0, 1, 4, |_| vec![3.5]).unwrap();
        let m = flu();
        assert_eq!(wasserstein_scale(&[m.clone()], &q).unwrap().w, 0.0);
        let r = wasserstein_mechanism(&[m], &q, &[0, 0, 0, 0], 1.0, &mut LaplaceSource::new(1)).unwrap();
        assert_eq!(r.answer, vec![3.5]);
    }

    #[test]
    fn vector_queries_refused() {
        let q = LipschitzQuery::count_histogram(4, 2);
        assert!(wasserstein_scale(&[flu()], &q).is_err());
    }

    #[test]
    fn group_sensitivities() {
        let q = infected(4);
        assert_eq!(group_sensitivity(4, 2, &q, &GroupStructure::whole(4)).unwrap(), 4.0);
        assert_eq!(group_sensitivity(4, 2, &q, &GroupStructure::singletons(4)).unwrap(), 1.0);
        let pairs = GroupStructure::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        assert_eq!(group_sensitivity(4, 2, &q, &pairs).unwrap(), 2.0);
    }

    #[test]
    fn group_structure_validation() {
        assert!(GroupStructure::new(vec![vec![0], vec![0, 1]], 2).is_err());
        assert!(GroupStructure::new(vec![vec![0]], 2).is_err());
        assert!(GroupStructure::new(vec![vec![0, 2]], 2).is_err());
        assert!(GroupStructure::new(vec![vec![1], vec![0]], 2).is_ok());
    }

    #[test]
    fn enumeration_guard() {
        assert!(matches!(JointModel::new(24, 2, vec![]), Err(Error::TooLarge(_))));
    }

    #[test]
    fn conditionals_remarginalize() {
        let m = flu();
        let q = infected(4);
        for record in 0..4 {
            let mut mix = vec![0.0; 5];
            for v in 0..2 {
                let prior = m.secret_prob(record, v);
                let c = conditional_output_dist(&m, &q, record, v).unwrap();
                for (x, p) in c.support() {
                    mix[x as usize] += prior * p;
                }
            }
            for (j, e) in [0.1, 0.15, 0.5, 0.15, 0.1].iter().enumerate() {
                assert!((mix[j] - e).abs() < 1e-10);
            }
        }
    }
}
