//! Stationary distributions, time reversal and spectral gaps.

use serde::{Deserialize, Serialize};

use crate::chain::{interval_grid, ClassKind, DistributionClass, TransitionMatrix};
use crate::error::{Error, Result};

/// Detailed-balance tolerance for calling a chain reversible.
pub const REVERSIBLE_TOL: f64 = 1e-10;
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Which spectral gap feeds the influence bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// `1 - |lambda_2(P P*)|`, valid for every mixing chain.
    #[default]
    PpStar,
    /// `2 (1 - |lambda_2(P)|)`, reversible chains only.
    Reversible,
}

impl std::str::FromStr for GapMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pp_star" => Ok(GapMode::PpStar),
            "reversible" => Ok(GapMode::Reversible),
            other => Err(format!("unknown gap mode `{other}` (pp_star or reversible)")),
        }
    }
}

/// Whether some power of `P` is strictly positive. Works on the zero
/// pattern, so tiny entries cannot underflow into false negatives.
pub fn is_primitive(p: &TransitionMatrix) -> bool {
    let k = p.k();
    let mut pat: Vec<bool> = p.as_flat().iter().map(|&v| v > 0.0).collect();
    let mut power = 1;
    loop {
        if pat.iter().all(|&b| b) {
            return true;
        }
        if power >= k * k {
            return false;
        }
        let mut next = vec![false; k * k];
        for i in 0..k {
            for l in 0..k {
                if !pat[i * k + l] {
                    continue;
                }
                for j in 0..k {
                    next[i * k + j] |= pat[l * k + j];
                }
            }
        }
        pat = next;
        power *= 2;
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::ChainDoesNotMix("singular balance equations".into()));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r * n + j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Ok(x)
}

/// The unique `pi` with `pi P = pi`, for irreducible aperiodic `P`.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<Vec<f64>> {
    if !is_primitive(p) {
        return Err(Error::ChainDoesNotMix(
            "no power of P up to k^2 is strictly positive (reducible or periodic)".into(),
        ));
    }
    let k = p.k();
    // Rows 0..k-1: balance equations for states 0..k-2; last row: sum = 1.
    let mut a = vec![0.0; k * k];
    for j in 0..k - 1 {
        for x in 0..k {
            a[j * k + x] = p.get(x, j) - if x == j { 1.0 } else { 0.0 };
        }
    }
    for x in 0..k {
        a[(k - 1) * k + x] = 1.0;
    }
    let mut rhs = vec![0.0; k];
    rhs[k - 1] = 1.0;
    solve(a, rhs, k)
}

/// `P*(x, y) = P(y, x) pi(y) / pi(x)`.
pub fn time_reversal(p: &TransitionMatrix, pi: &[f64]) -> Result<TransitionMatrix> {
    let k = p.k();
    if pi.len() != k || pi.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::ChainDoesNotMix("stationary distribution has a zero entry".into()));
    }
    let mut data = vec![0.0; k * k];
    for x in 0..k {
        for y in 0..k {
            data[x * k + y] = p.get(y, x) * pi[y] / pi[x];
        }
    }
    Ok(TransitionMatrix::from_flat_unchecked(k, data))
}

pub fn is_reversible(p: &TransitionMatrix, pi: &[f64]) -> bool {
    let k = p.k();
    (0..k).all(|x| (0..k).all(|y| (pi[x] * p.get(x, y) - pi[y] * p.get(y, x)).abs() <= REVERSIBLE_TOL))
}

/// Eigenvalues of a symmetric matrix (row-major, `n x n`) by cyclic Jacobi
/// rotations, sorted by decreasing absolute value.
pub fn symmetric_eigenvalues(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > JACOBI_TOL {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence(sweeps));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
    Ok(ev)
}

/// `D M D^{-1}` with `D = diag(sqrt(pi))`, symmetrized against rounding.
fn symmetrize(m: &TransitionMatrix, pi: &[f64]) -> Vec<f64> {
    let k = m.k();
    let root: Vec<f64> = pi.iter().map(|v| v.sqrt()).collect();
    let mut s = vec![0.0; k * k];
    for x in 0..k {
        for y in 0..k {
            s[x * k + y] = root[x] * m.get(x, y) / root[y];
        }
    }
    for x in 0..k {
        for y in x + 1..k {
            let avg = 0.5 * (s[x * k + y] + s[y * k + x]);
            s[x * k + y] = avg;
            s[y * k + x] = avg;
        }
    }
    s
}

fn second_modulus(m: &TransitionMatrix, pi: &[f64]) -> Result<f64> {
    let ev = symmetric_eigenvalues(symmetrize(m, pi), m.k())?;
    Ok(ev.get(1).map_or(0.0, |v| v.abs()))
}

/// Spectral gap of `P` under the chosen mode.
pub fn eigengap(p: &TransitionMatrix, mode: GapMode) -> Result<f64> {
    let pi = stationary_distribution(p)?;
    let g = match mode {
        GapMode::PpStar => {
            let star = time_reversal(p, &pi)?;
            1.0 - second_modulus(&p.mul(&star), &pi)?
        }
        GapMode::Reversible => {
            if !is_reversible(p, &pi) {
                return Err(Error::InvalidParameter(
                    "reversible gap requested for a chain without detailed balance".into(),
                ));
            }
            2.0 * (1.0 - second_modulus(p, &pi)?)
        }
    };
    if !(g > 0.0) {
        return Err(Error::ChainDoesNotMix(format!("spectral gap {g} is not positive")));
    }
    Ok(g)
}

/// Mixing parameters of a class: smallest stationary probability and
/// smallest gap over its members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSummary {
    /// Stationary distribution of each explicit member (empty for
    /// parametric classes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pi: Vec<Vec<f64>>,
    pub pi_min: f64,
    pub g: f64,
    pub reversible: bool,
    pub mode: GapMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_star: Option<usize>,
}

impl MixingSummary {
    pub fn new(pi_min: f64, g: f64) -> Result<Self> {
        if !(pi_min > 0.0 && pi_min <= 1.0) || !(g > 0.0 && g <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < pi_min <= 1 and 0 < g <= 2, got pi_min={pi_min}, g={g}"
            )));
        }
        Ok(Self {
            pi: Vec::new(),
            pi_min,
            g,
            reversible: false,
            mode: GapMode::PpStar,
            a_star: None,
        })
    }
}

fn summarize_matrices(mats: &[TransitionMatrix], mode: GapMode) -> Result<MixingSummary> {
    use rayon::prelude::*;
    let pis: Vec<Vec<f64>> = mats.par_iter().map(stationary_distribution).collect::<Result<_>>()?;
    let reversible = mats.iter().zip(&pis).all(|(p, pi)| is_reversible(p, pi));
    // One non-reversible member forces the general gap for the whole class.
    let used = if reversible { mode } else { GapMode::PpStar };
    let gaps: Vec<f64> = mats.par_iter().map(|p| eigengap(p, used)).collect::<Result<_>>()?;
    let pi_min = pis.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let g = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MixingSummary {
        pi: pis,
        pi_min,
        g,
        reversible,
        mode: used,
        a_star: None,
    })
}

/// Closed forms for the binary chain `[[p0, 1-p0], [1-p1, p1]]`:
/// `pi_0 = (1-p1)/(2-p0-p1)` and second eigenvalue `p0 + p1 - 1`.
pub fn binary_mixing(p0: f64, p1: f64, mode: GapMode) -> (f64, f64) {
    let denom = 2.0 - p0 - p1;
    let pi_min = ((1.0 - p1) / denom).min((1.0 - p0) / denom);
    let lambda = p0 + p1 - 1.0;
    let g = match mode {
        GapMode::PpStar => 1.0 - lambda * lambda,
        GapMode::Reversible => 2.0 * (1.0 - lambda.abs()),
    };
    (pi_min, g)
}

/// Mixing parameters minimized over the class.
pub fn mixing_summary(class: &DistributionClass, mode: GapMode) -> Result<MixingSummary> {
    match class.kind() {
        ClassKind::FiniteSet(models) => {
            let mats: Vec<TransitionMatrix> = models.iter().map(|m| m.matrix().clone()).collect();
            summarize_matrices(&mats, mode)
        }
        ClassKind::MatrixSetAllInits { matrices, .. } => summarize_matrices(matrices, mode),
        ClassKind::BinaryInterval {
            alpha,
            beta,
            grid_step,
            ..
        } => {
            // The extremes sit at the corners; the grid is scanned as well.
            let mut pts = interval_grid(*alpha, *beta, *grid_step);
            pts.extend([*alpha, *beta]);
            let (mut pi_min, mut g) = (f64::INFINITY, f64::INFINITY);
            for &p0 in &pts {
                for &p1 in &pts {
                    let (pm, gg) = binary_mixing(p0, p1, mode);
                    pi_min = pi_min.min(pm);
                    g = g.min(gg);
                }
            }
            Ok(MixingSummary {
                pi: Vec::new(),
                pi_min,
                g,
                reversible: true,
                mode,
                a_star: None,
            })
        }
        ClassKind::MixingParams {
            pi_min,
            g,
            reversible,
            ..
        } => Ok(MixingSummary {
            pi: Vec::new(),
            pi_min: *pi_min,
            g: *g,
            reversible: *reversible,
            mode: if *reversible { mode } else { GapMode::PpStar },
            a_star: None,
        }),
    }
}
