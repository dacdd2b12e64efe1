//! Loading time series from CSV, binning them into states, splitting at
//! gaps, and estimating a transition matrix.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::stationary_distribution;
use crate::baselines::ChainSegmentation;
use crate::chain::{MarkovChainModel, TransitionMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_GAP_SECONDS: f64 = 600.0;
pub const DEFAULT_BIN_WIDTH: f64 = 200.0;
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// Timestamped raw values, timestamps non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub timestamps: Vec<f64>,
    pub values: Vec<String>,
}

impl RawSeries {
    pub fn new(timestamps: Vec<f64>, values: Vec<String>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::InvalidParameter("timestamps and values differ in length".into()));
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::Data {
                    row: i + 2,
                    message: format!("timestamp {} precedes {}", w[1], w[0]),
                });
            }
        }
        Ok(Self { timestamps, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads `timestamp_col` (seconds) and `value_col` from a CSV file with a
/// header row. Row numbers in errors count data rows from 1.
pub fn load_csv(path: &Path, timestamp_col: &str, value_col: &str) -> Result<RawSeries> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("no column `{name}` in header")))
    };
    let (ti, vi) = (col(timestamp_col)?, col(value_col)?);
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let cell = |i: usize, name: &str| -> Result<String> {
            match rec.get(i).map(str::trim) {
                Some(s) if !s.is_empty() => Ok(s.to_string()),
                _ => Err(Error::Data {
                    row,
                    message: format!("missing value in column `{name}`"),
                }),
            }
        };
        let ts = cell(ti, timestamp_col)?;
        let ts: f64 = ts.parse().map_err(|_| Error::Data {
            row,
            message: format!("column `{timestamp_col}`: `{ts}` is not a number of seconds"),
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts < prev {
                return Err(Error::Data {
                    row,
                    message: format!("timestamp {ts} precedes {prev}"),
                });
            }
        }
        timestamps.push(ts);
        values.push(cell(vi, value_col)?);
    }
    Ok(RawSeries { timestamps, values })
}

/// How raw values map to states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BinSpec {
    /// State `floor((v - origin) / width) + 1`, clamped to `1..=k`.
    Numeric { width: f64, origin: f64, k: usize },
    /// The `j`-th label is state `j + 1`.
    Labels { labels: Vec<String> },
}

impl BinSpec {
    pub fn state_count(&self) -> usize {
        match self {
            BinSpec::Numeric { k, .. } => *k,
            BinSpec::Labels { labels } => labels.len(),
        }
    }
}

/// States are 0-based here; labels are 1-based only at the edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedSeries {
    pub states: Vec<usize>,
    pub segmentation: ChainSegmentation,
    pub bin_spec: BinSpec,
    /// Numeric values that fell outside the bins and were clamped.
    pub clamped: usize,
}

impl DiscretizedSeries {
    pub fn k(&self) -> usize {
        self.bin_spec.state_count()
    }

    pub fn segment_states(&self) -> impl Iterator<Item = &[usize]> {
        self.segmentation.segments().iter().map(|&(s, e)| &self.states[s..e])
    }
}

/// Bins values and starts a new segment wherever consecutive timestamps
/// are more than `gap_threshold` seconds apart.
pub fn discretize(series: &RawSeries, spec: &BinSpec, gap_threshold: f64) -> Result<DiscretizedSeries> {
    if series.is_empty() {
        return Err(Error::Empty("series has no rows".into()));
    }
    let mut clamped = 0;
    let states: Vec<usize> = match spec {
        BinSpec::Numeric { width, origin, k } => {
            if !(*width > 0.0) || *k == 0 {
                return Err(Error::InvalidParameter("bin width and state count must be positive".into()));
            }
            series
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x: f64 = v.parse().map_err(|_| Error::Data {
                        row: i + 1,
                        message: format!("`{v}` is not numeric"),
                    })?;
                    let bin = ((x - origin) / width).floor();
                    let s = if bin < 0.0 {
                        clamped += 1;
                        0
                    } else if bin >= *k as f64 {
                        clamped += 1;
                        k - 1
                    } else {
                        bin as usize
                    };
                    Ok(s)
                })
                .collect::<Result<_>>()?
        }
        BinSpec::Labels { labels } => {
            let map: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            series
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    map.get(v.as_str()).copied().ok_or_else(|| Error::Data {
                        row: i + 1,
                        message: format!("label `{v}` is not in the label map"),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let mut bounds = Vec::new();
    let mut start = 0;
    for (i, w) in series.timestamps.windows(2).enumerate() {
        if w[1] - w[0] > gap_threshold {
            bounds.push((start, i + 1));
            start = i + 1;
        }
    }
    bounds.push((start, states.len()));
    Ok(DiscretizedSeries {
        segmentation: ChainSegmentation::new(bounds, states.len())?,
        states,
        bin_spec: spec.clone(),
        clamped,
    })
}

/// Empirical chain fitted to a discretized series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    #[serde(rename = "P")]
    pub matrix: TransitionMatrix,
    /// Share of each state among all observations.
    pub empirical: Vec<f64>,
    /// Stationary distribution of the estimate, when it mixes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
}

/// `P(x,y) = (n(x->y) + s) / (n(x->.) + k s)`, counting transitions inside
/// segments only.
pub fn estimate_transition(series: &DiscretizedSeries, smoothing: f64) -> Result<TransitionEstimate> {
    if series.states.is_empty() {
        return Err(Error::Empty("series has no states".into()));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothing must be >= 0, got {smoothing}")));
    }
    let k = series.k();
    let mut counts = vec![vec![0u64; k]; k];
    for seg in series.segment_states() {
        for w in seg.windows(2) {
            counts[w[0]][w[1]] += 1;
        }
    }
    let rows = counts
        .iter()
        .enumerate()
        .map(|(x, row)| {
            let total = row.iter().sum::<u64>() as f64 + k as f64 * smoothing;
            if total == 0.0 {
                return Err(Error::InvalidModel(format!(
                    "state {} has no observed transitions; use positive smoothing",
                    x + 1
                )));
            }
            Ok(row.iter().map(|&c| (c as f64 + smoothing) / total).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let matrix = TransitionMatrix::renormalized(rows)?;
    let mut empirical = vec![0.0; k];
    for &s in &series.states {
        empirical[s] += 1.0;
    }
    let n = series.states.len() as f64;
    empirical.iter_mut().for_each(|v| *v /= n);
    let stationary = stationary_distribution(&matrix).ok();
    Ok(TransitionEstimate {
        matrix,
        empirical,
        stationary,
        counts,
    })
}

/// Draws one sequence from the model.
pub fn synthesize<R: Rng + ?Sized>(model: &MarkovChainModel, rng: &mut R) -> Vec<usize> {
    let draw = |probs: &[f64], rng: &mut R| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left `acc` just below 1: take the last state with mass.
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    };
    let mut out = Vec::with_capacity(model.len());
    let mut cur = draw(model.initial(), rng);
    out.push(cur);
    for _ in 1..model.len() {
        cur = draw(model.matrix().row(cur), rng);
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn series(ts: &[f64], vals: &[&str]) -> RawSeries {
        RawSeries::new(ts.to_vec(), vals.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn load_well_formed() {
        let f = csv_file("ts,power\n0,50\n60,250\n120,10100\n");
        let s = load_csv(f.path(), "ts", "power").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values, vec!["50", "250", "10100"]);
    }

    #[test]
    fn load_rejects_disorder_and_holes() {
        let f = csv_file("ts,power\n60,1\n0,2\n120,3\n");
        match load_csv(f.path(), "ts", "power") {
            Err(Error::Data { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        let f = csv_file("ts,power\n0,1\n60,\n");
        match load_csv(f.path(), "ts", "power") {
            Err(Error::Data { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("power"));
            }
            other => panic!("{other:?}"),
        }
        let f = csv_file("ts,power\n0,1\n");
        assert!(load_csv(f.path(), "time", "power").is_err());
    }

    #[test]
    fn numeric_bins_with_clamp() {
        let s = series(&[0.0, 60.0, 120.0], &["50", "250", "10100"]);
        let spec = BinSpec::Numeric {
            width: 200.0,
            origin: 0.0,
            k: 51,
        };
        let d = discretize(&s, &spec, DEFAULT_GAP_SECONDS).unwrap();
        let labels: Vec<usize> = d.states.iter().map(|s| s + 1).collect();
        assert_eq!(labels, vec![1, 2, 51]);
        assert_eq!(d.clamped, 0);
        let s = series(&[0.0, 1.0], &["-5", "99999"]);
        let d = discretize(&s, &spec, DEFAULT_GAP_SECONDS).unwrap();
        assert_eq!(d.states, vec![0, 50]);
        assert_eq!(d.clamped, 2);
    }

    #[test]
    fn gap_splitting() {
        let s = series(&[0.0, 60.0, 780.0, 840.0], &["1", "1", "1", "1"]);
        let spec = BinSpec::Numeric {
            width: 1.0,
            origin: 1.0,
            k: 2,
        };
        let d = discretize(&s, &spec, 600.0).unwrap();
        assert_eq!(d.segmentation.segments(), &[(0, 2), (2, 4)]);
        // Exactly at the threshold is not a gap.
        let s = series(&[0.0, 600.0], &["1", "1"]);
        assert_eq!(discretize(&s, &spec, 600.0).unwrap().segmentation.segments().len(), 1);
    }

    #[test]
    fn label_map() {
        let spec = BinSpec::Labels {
            labels: vec!["active".into(), "sedentary".into()],
        };
        let s = series(&[0.0, 1.0, 2.0], &["active", "sedentary", "active"]);
        assert_eq!(discretize(&s, &spec, 600.0).unwrap().states, vec![0, 1, 0]);
        let s = series(&[0.0], &["sleeping"]);
        assert!(matches!(discretize(&s, &spec, 600.0), Err(Error::Data { row: 1, .. })));
    }

    fn discrete(states: &[usize], lengths: &[usize], k: usize) -> DiscretizedSeries {
        DiscretizedSeries {
            states: states.to_vec(),
            segmentation: ChainSegmentation::from_lengths(lengths).unwrap(),
            bin_spec: BinSpec::Labels {
                labels: (1..=k).map(|i| i.to_string()).collect(),
            },
            clamped: 0,
        }
    }

    #[test]
    fn estimation_counts() {
        let d = discrete(&[0, 0, 0, 1], &[4], 2);
        assert!(matches!(estimate_transition(&d, 0.0), Err(Error::InvalidModel(_))));
        let e = estimate_transition(&d, 1.0).unwrap();
        let r = e.matrix.rows();
        assert!((r[0][0] - 0.6).abs() < 1e-15 && (r[0][1] - 0.4).abs() < 1e-15);
        assert!((r[1][0] - 0.5).abs() < 1e-15 && (r[1][1] - 0.5).abs() < 1e-15);
        assert_eq!(e.empirical, vec![0.75, 0.25]);

        // Segments 1,2 | 2,1: the (2,2) pair straddles the boundary.
        let d = discrete(&[0, 1, 1, 0], &[2, 2], 2);
        let e = estimate_transition(&d, 0.0).unwrap();
        assert_eq!(e.counts, vec![vec![0, 1], vec![1, 0]]);
        let empty = RawSeries::new(vec![], vec![]).unwrap();
        let spec = BinSpec::Labels { labels: vec!["a".into()] };
        assert!(matches!(discretize(&empty, &spec, 600.0), Err(Error::Empty(_))));
    }

    #[test]
    fn smoothed_rows_are_positive() {
        let d = discrete(&[0, 2, 2, 1, 0, 0], &[6], 3);
        let e = estimate_transition(&d, 0.5).unwrap();
        assert!(e.matrix.is_strictly_positive());
        assert!(e.matrix.max_row_defect() < 1e-12);
        assert!(e.stationary.is_some());
    }

    #[test]
    fn synthesize_round_trip() {
        let p = TransitionMatrix::new(vec![vec![0.7, 0.2, 0.1], vec![0.3, 0.3, 0.4], vec![0.1, 0.1, 0.8]]).unwrap();
        let m = MarkovChainModel::new(vec![0.2, 0.3, 0.5], p, 500).unwrap();
        let states = synthesize(&m, &mut ChaCha20Rng::seed_from_u64(4));
        let raw = RawSeries::new(
            (0..states.len()).map(|t| t as f64).collect(),
            states.iter().map(|s| (s + 1).to_string()).collect(),
        )
        .unwrap();
        let spec = BinSpec::Numeric {
            width: 1.0,
            origin: 1.0,
            k: 3,
        };
        assert_eq!(discretize(&raw, &spec, 600.0).unwrap().states, states);
    }

    #[test]
    fn estimate_is_consistent() {
        let p = TransitionMatrix::new(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        let m = MarkovChainModel::new(vec![0.8, 0.2], p.clone(), 100_000).unwrap();
        let states = synthesize(&m, &mut ChaCha20Rng::seed_from_u64(12));
        let d = discrete(&states, &[states.len()], 2);
        let e = estimate_transition(&d, 0.0).unwrap();
        let err = e
            .matrix
            .as_flat()
            .iter()
            .zip(p.as_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 0.02, "max entry error {err}");
    }
}
