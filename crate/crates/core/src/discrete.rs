//! Finite distributions over real atoms: max-divergence, conditioning,
//! the robustness bound for mis-specified adversaries, and the
//! infinity-Wasserstein distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values closer than this are the same atom.
pub const ATOM_MERGE_TOL: f64 = 1e-12;
/// Tolerance on total probability mass.
pub const MASS_TOL: f64 = 1e-10;
/// Coupling segments shorter than this are float residue, not mass.
const SEGMENT_TOL: f64 = 1e-12;

/// Canonical form: strictly increasing values, duplicates merged, masses
/// summing to one. Zero-mass atoms are kept so that index-based
/// conditioning stays meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("distribution has no atoms".into()));
        }
        for &(v, p) in &atoms {
            if !v.is_finite() || !(0.0..=1.0 + MASS_TOL).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "atom ({v}, {p}) is not a finite value with probability in [0,1]"
                )));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if (v - last.0).abs() <= ATOM_MERGE_TOL => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms: merged })
    }

    pub fn from_parts(values: &[f64], probs: &[f64]) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::InvalidParameter(
                "values and probabilities differ in length".into(),
            ));
        }
        Self::new(values.iter().copied().zip(probs.iter().copied()).collect())
    }

    /// Distribution on `0, 1, ..., probs.len() - 1`.
    pub fn on_integers(probs: &[f64]) -> Result<Self> {
        Self::new(probs.iter().enumerate().map(|(i, &p)| (i as f64, p)).collect())
    }

    pub fn point(value: f64) -> Self {
        Self {
            atoms: vec![(value, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn probs(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.1).collect()
    }

    /// Atoms with positive mass.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().filter(|a| a.1 > 0.0)
    }

    /// Mass at `value` (within the merge tolerance).
    pub fn prob_of(&self, value: f64) -> f64 {
        let idx = self
            .atoms
            .partition_point(|a| a.0 < value - ATOM_MERGE_TOL);
        match self.atoms.get(idx) {
            Some(&(v, p)) if (v - value).abs() <= ATOM_MERGE_TOL => p,
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    /// Same support up to the merge tolerance, masses equal within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let a: Vec<_> = self.support().collect();
        let b: Vec<_> = other.support().collect();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                (x.0 - y.0).abs() <= ATOM_MERGE_TOL && (x.1 - y.1).abs() <= tol
            })
    }

    /// `sum_i weights[i] * components[i]`.
    pub fn mixture(components: &[DiscreteDistribution], weights: &[f64]) -> Result<Self> {
        if components.len() != weights.len() || components.is_empty() {
            return Err(Error::InvalidParameter(
                "mixture needs one weight per component".into(),
            ));
        }
        let atoms = components
            .iter()
            .zip(weights)
            .flat_map(|(c, &w)| c.atoms.iter().map(move |&(v, p)| (v, w * p)))
            .collect();
        Self::new(atoms)
    }
}

impl Serialize for DiscreteDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.atoms
            .iter()
            .map(|&(v, p)| [v, p])
            .collect::<Vec<_>>()
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        DiscreteDistribution::new(pairs.into_iter().map(|[v, p]| (v, p)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// `sup_{x in supp(p)} log p(x)/q(x)`; `+inf` when `p` has mass outside the
/// support of `q`.
pub fn max_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (v, pv) in p.support() {
        let qv = q.prob_of(v);
        if qv <= 0.0 {
            return f64::INFINITY;
        }
        best = best.max((pv / qv).ln());
    }
    // Non-negative for distributions; clamp float noise when p == q.
    best.max(0.0)
}

pub fn symmetric_max_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    max_divergence(p, q).max(max_divergence(q, p))
}

/// Zeroes every atom not listed in `keep` (atom indices, 0-based) and
/// rescales the rest.
pub fn condition_renormalize(p: &DiscreteDistribution, keep: &[usize]) -> Result<DiscreteDistribution> {
    let mut kept = vec![false; p.atoms.len()];
    for &i in keep {
        if i >= kept.len() {
            return Err(Error::InvalidParameter(format!(
                "atom index {i} out of range for {} atoms",
                kept.len()
            )));
        }
        kept[i] = true;
    }
    let mass: f64 = p
        .atoms
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| k)
        .map(|(a, _)| a.1)
        .sum();
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(DiscreteDistribution {
        atoms: p
            .atoms
            .iter()
            .zip(&kept)
            .map(|(&(v, pr), &k)| (v, if k { pr / mass } else { 0.0 }))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Robustness {
    /// Distance of the adversary's belief from the class.
    pub delta: f64,
    /// `epsilon + 2 * delta`.
    pub epsilon_inflated: f64,
}

/// Privacy loss against an adversary whose secret-conditionals are
/// `belief[s]`, when the mechanism is private for each candidate in
/// `candidates` (each a list of conditionals indexed like `belief`).
///
/// `delta = inf_theta max_s max(D(belief_s || theta_s), D(theta_s || belief_s))`.
pub fn robustness_delta(
    belief: &[DiscreteDistribution],
    candidates: &[Vec<DiscreteDistribution>],
    epsilon: f64,
) -> Result<Robustness> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate distributions".into()));
    }
    if candidates.iter().any(|c| c.len() != belief.len()) {
        return Err(Error::InvalidParameter(
            "candidate conditionals must be indexed like the belief".into(),
        ));
    }
    let delta = candidates
        .iter()
        .map(|cand| {
            belief
                .iter()
                .zip(cand)
                .map(|(b, c)| symmetric_max_divergence(b, c))
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(Robustness {
        delta,
        epsilon_inflated: epsilon + 2.0 * delta,
    })
}

/// Infinity-Wasserstein distance on the line, via the monotone (quantile)
/// coupling: the largest displacement between aligned CDF segments.
pub fn w_infinity(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> f64 {
    let a: Vec<(f64, f64)> = mu.support().collect();
    let b: Vec<(f64, f64)> = nu.support().collect();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut w: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = ra.min(rb);
        if t > SEGMENT_TOL {
            w = w.max((a[i].0 - b[j].0).abs());
        }
        ra -= t;
        rb -= t;
        if ra <= SEGMENT_TOL {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= SEGMENT_TOL {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    w
}

/// Largest combined support the matching oracle accepts.
pub const ORACLE_MAX_ATOMS: usize = 12;

/// Independent check of [`w_infinity`]: the smallest pairwise distance `w`
/// for which a transport plan using only pairs within `w` exists, with
/// feasibility decided by Hall's condition over all subsets of `mu`'s
/// support.
pub fn w_infinity_oracle(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<f64> {
    let a: Vec<(f64, f64)> = mu.support().collect();
    let b: Vec<(f64, f64)> = nu.support().collect();
    let mut combined: Vec<f64> = a.iter().chain(&b).map(|x| x.0).collect();
    combined.sort_by(f64::total_cmp);
    combined.dedup_by(|x, y| (*x - *y).abs() <= ATOM_MERGE_TOL);
    if combined.len() > ORACLE_MAX_ATOMS {
        return Err(Error::TooLarge(format!(
            "combined support {} exceeds {ORACLE_MAX_ATOMS} atoms",
            combined.len()
        )));
    }
    let mut candidates: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| (x.0 - y.0).abs()))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for &w in &candidates {
        if hall_feasible(&a, &b, w) {
            return Ok(w);
        }
    }
    unreachable!("the largest pairwise distance is always feasible")
}

fn hall_feasible(a: &[(f64, f64)], b: &[(f64, f64)], w: f64) -> bool {
    let adj: Vec<u32> = a
        .iter()
        .map(|x| {
            b.iter()
                .enumerate()
                .filter(|(_, y)| (x.0 - y.0).abs() <= w)
                .fold(0u32, |m, (j, _)| m | (1 << j))
        })
        .collect();
    for subset in 1u32..(1 << a.len()) {
        let mut supply = 0.0;
        let mut nbrs = 0u32;
        for (i, &mask) in adj.iter().enumerate() {
            if subset & (1 << i) != 0 {
                supply += a[i].1;
                nbrs |= mask;
            }
        }
        let demand: f64 = b
            .iter()
            .enumerate()
            .filter(|(j, _)| nbrs & (1 << j) != 0)
            .map(|(_, y)| y.1)
            .sum();
        if supply > demand + SEGMENT_TOL {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(probs: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::from_parts(&[1.0, 2.0, 3.0][..probs.len()], probs).unwrap()
    }

    #[test]
    fn max_divergence_worked_values() {
        let p = d(&[1.0 / 3.0, 0.5, 1.0 / 6.0]);
        let q = d(&[0.5, 0.25, 0.25]);
        assert!((max_divergence(&p, &q) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(max_divergence(&p, &p), 0.0);

        let theta = d(&[0.9, 0.05, 0.05]);
        let tilde = d(&[0.01, 0.95, 0.04]);
        assert!((max_divergence(&theta, &tilde) - 90f64.ln()).abs() < 1e-9);
        assert!((symmetric_max_divergence(&theta, &tilde) - 90f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn max_divergence_infinite_off_support() {
        let p = d(&[0.5, 0.5, 0.0]);
        let q = d(&[1.0, 0.0, 0.0]);
        assert_eq!(max_divergence(&p, &q), f64::INFINITY);
        assert!(max_divergence(&q, &p).is_finite());
    }

    #[test]
    fn conditioning() {
        let theta = d(&[0.9, 0.05, 0.05]);
        let c = condition_renormalize(&theta, &[0, 1]).unwrap();
        assert!((c.probs()[0] - 0.9474).abs() < 1e-4);
        assert!((c.probs()[1] - 0.0526).abs() < 1e-4);
        assert_eq!(c.probs()[2], 0.0);
        let tilde = d(&[0.01, 0.95, 0.04]);
        let ct = condition_renormalize(&tilde, &[0, 1]).unwrap();
        assert!((ct.probs()[0] - 0.0104).abs() < 1e-4);
        assert!((ct.probs()[1] - 0.9896).abs() < 1e-4);
        assert_eq!(condition_renormalize(&theta, &[0, 1, 2]).unwrap(), theta);
        let z = d(&[1.0, 0.0, 0.0]);
        assert!(matches!(condition_renormalize(&z, &[1, 2]), Err(Error::ZeroMass)));
    }

    #[test]
    fn conditioning_then_divergence_exceeds_unconditioned() {
        let theta = d(&[0.9, 0.05, 0.05]);
        let tilde = d(&[0.01, 0.95, 0.04]);
        let c = condition_renormalize(&theta, &[0, 1]).unwrap();
        let ct = condition_renormalize(&tilde, &[0, 1]).unwrap();
        // Exact conditioning: 0.9/0.95 over 0.01/0.96.
        let exact = (0.9f64 / 0.95 / (0.01 / 0.96)).ln();
        assert!((symmetric_max_divergence(&c, &ct) - exact).abs() < 1e-12);
        assert!(exact > 90f64.ln());
    }

    #[test]
    fn robustness() {
        let theta = vec![d(&[0.9474, 0.0526])];
        let tilde = vec![d(&[0.0104, 0.9896])];
        let r = robustness_delta(&tilde, &[theta.clone()], 1.0).unwrap();
        assert!((r.delta - 91.0962f64.ln()).abs() < 1e-3);
        assert!((r.epsilon_inflated - (1.0 + 2.0 * r.delta)).abs() < 1e-12);

        let same = robustness_delta(&theta, &[theta.clone()], 0.5).unwrap();
        assert_eq!(same.delta, 0.0);
        assert_eq!(same.epsilon_inflated, 0.5);

        let two = robustness_delta(&tilde, &[theta.clone(), tilde.clone()], 1.0).unwrap();
        assert_eq!(two.delta, 0.0);

        let disjoint = vec![DiscreteDistribution::point(7.0)];
        let r = robustness_delta(&disjoint, &[theta.clone()], 1.0).unwrap();
        assert_eq!(r.delta, f64::INFINITY);

        assert!(robustness_delta(&tilde, &[vec![]], 1.0).is_err());
    }

    #[test]
    fn flu_tables() {
        let mu = DiscreteDistribution::on_integers(&[0.2, 0.225, 0.5, 0.075, 0.0]).unwrap();
        let nu = DiscreteDistribution::on_integers(&[0.0, 0.075, 0.5, 0.225, 0.2]).unwrap();
        assert_eq!(w_infinity(&mu, &nu), 2.0);
        assert_eq!(w_infinity_oracle(&mu, &nu).unwrap(), 2.0);
        let s = 1.0 / 6.0;
        let mu = DiscreteDistribution::on_integers(&[0.5, s, s, s, 0.0]).unwrap();
        let nu = DiscreteDistribution::on_integers(&[0.0, 0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(w_infinity(&mu, &nu), 2.0);
        assert_eq!(w_infinity_oracle(&mu, &nu).unwrap(), 2.0);
        assert_eq!(w_infinity(&mu, &mu), 0.0);
        assert_eq!(w_infinity_oracle(&mu, &mu).unwrap(), 0.0);
    }

    #[test]
    fn oracle_rejects_large_supports() {
        let probs = vec![1.0 / 13.0; 13];
        let mu = DiscreteDistribution::on_integers(&probs).unwrap();
        assert!(matches!(w_infinity_oracle(&mu, &mu), Err(Error::TooLarge(_))));
    }

    #[test]
    fn canonical_form_merges() {
        let x = DiscreteDistribution::new(vec![(2.0, 0.25), (1.0, 0.5), (2.0 + 1e-13, 0.25)]).unwrap();
        assert_eq!(x.atoms().len(), 2);
        assert_eq!(x.prob_of(2.0), 0.5);
        assert!(DiscreteDistribution::new(vec![(0.0, 0.5)]).is_err());
    }

    #[test]
    fn json_pairs() {
        let x = DiscreteDistribution::on_integers(&[0.25, 0.75]).unwrap();
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, "[[0.0,0.25],[1.0,0.75]]");
        let back: DiscreteDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }

    fn arb_dist(max_atoms: usize) -> impl Strategy<Value = DiscreteDistribution> {
        prop::collection::vec((-4i32..=4, 1u32..100), 1..=max_atoms).prop_map(|pairs| {
            let total: u32 = pairs.iter().map(|p| p.1).sum();
            DiscreteDistribution::new(
                pairs
                    .into_iter()
                    .map(|(v, w)| (v as f64, w as f64 / total as f64))
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn w_infinity_metric_axioms(a in arb_dist(6), b in arb_dist(6), c in arb_dist(6)) {
            let ab = w_infinity(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, w_infinity(&b, &a));
            prop_assert_eq!(w_infinity(&a, &a), 0.0);
            if ab == 0.0 {
                prop_assert!(a.approx_eq(&b, 1e-9));
            }
            prop_assert!(w_infinity(&a, &c) <= ab + w_infinity(&b, &c) + 1e-12);
        }

        #[test]
        fn mixture_contracts(
            mus in prop::collection::vec(arb_dist(4), 1..4),
            nus in prop::collection::vec(arb_dist(4), 1..4),
            raw in prop::collection::vec(1u32..50, 3),
        ) {
            let n = mus.len().min(nus.len());
            let total: u32 = raw[..n].iter().sum();
            let w: Vec<f64> = raw[..n].iter().map(|&x| x as f64 / total as f64).collect();
            let mu = DiscreteDistribution::mixture(&mus[..n], &w).unwrap();
            let nu = DiscreteDistribution::mixture(&nus[..n], &w).unwrap();
            let bound = (0..n).map(|i| w_infinity(&mus[i], &nus[i])).fold(0.0, f64::max);
            prop_assert!(w_infinity(&mu, &nu) <= bound + 1e-12);
        }

        #[test]
        fn max_divergence_nonnegative(a in arb_dist(5), b in arb_dist(5)) {
            let dv = max_divergence(&a, &b);
            prop_assert!(dv >= 0.0);
            prop_assert_eq!(max_divergence(&a, &a), 0.0);
        }
    }
}
