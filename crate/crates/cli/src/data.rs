//! Loading databases and class configs from disk.
//!
//! States are 1-based in every file and 0-based once loaded.

use std::path::{Path, PathBuf};

use clap::Args;
use pufferfish::baselines::ChainSegmentation;
use pufferfish::ingest::{self, BinSpec, DiscretizedSeries};
use pufferfish::wasserstein::JointModel;
use pufferfish::DistributionClass;
use serde::Deserialize;

use crate::CliError;

/// How CSV rows become states.
#[derive(Args, Debug, Clone)]
pub struct BinArgs {
    #[arg(long, default_value = "timestamp")]
    pub timestamp_col: String,
    #[arg(long, default_value = "value")]
    pub value_col: String,
    /// Categorical labels in state order (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Numeric bin width.
    #[arg(long, default_value_t = ingest::DEFAULT_BIN_WIDTH)]
    pub width: f64,
    #[arg(long, default_value_t = 0.0)]
    pub origin: f64,
    /// Number of numeric bins; values past the last bin are clamped.
    #[arg(long)]
    pub states: Option<usize>,
    /// Timestamp gap (seconds) that starts a new chain.
    #[arg(long, default_value_t = ingest::DEFAULT_GAP_SECONDS)]
    pub gap: f64,
}

impl BinArgs {
    pub fn bin_spec(&self) -> Result<BinSpec, CliError> {
        match (&self.labels, self.states) {
            (Some(labels), _) => Ok(BinSpec::Labels {
                labels: labels.iter().map(|l| l.trim().to_string()).collect(),
            }),
            (None, Some(k)) => Ok(BinSpec::Numeric {
                width: self.width,
                origin: self.origin,
                k,
            }),
            (None, None) => Err(CliError::Usage(
                "CSV input needs --labels or --states to define the bins".into(),
            )),
        }
    }

    pub fn load(&self, path: &Path) -> Result<DiscretizedSeries, CliError> {
        let raw = ingest::load_csv(path, &self.timestamp_col, &self.value_col)?;
        Ok(ingest::discretize(&raw, &self.bin_spec()?, self.gap)?)
    }
}

/// A database ready for release: 0-based states plus chain boundaries.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub states: Vec<usize>,
    pub segmentation: ChainSegmentation,
    /// State count implied by the input format, when it fixes one.
    pub k: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonStates {
    Flat(Vec<usize>),
    Segments(Vec<Vec<usize>>),
}

fn to_zero_based(labels: Vec<usize>, offset: usize) -> Result<Vec<usize>, CliError> {
    labels
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.checked_sub(1).ok_or_else(|| {
                CliError::Usage(format!("record {}: states are 1-based, got 0", offset + i + 1))
            })
        })
        .collect()
}

/// `.json` files hold `[s1, s2, ...]` or a list of such chains; anything
/// else is read as CSV through `bins`.
pub fn load_dataset(path: &Path, bins: &BinArgs) -> Result<Dataset, CliError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        let series = bins.load(path)?;
        return Ok(Dataset {
            k: Some(series.k()),
            states: series.states,
            segmentation: series.segmentation,
        });
    }
    let parsed: JsonStates = serde_json::from_str(&read(path)?)?;
    let chains = match parsed {
        JsonStates::Flat(v) => vec![v],
        JsonStates::Segments(v) => v,
    };
    let lengths: Vec<usize> = chains.iter().map(Vec::len).collect();
    if lengths.iter().all(|&l| l == 0) {
        return Err(pufferfish::Error::Empty(format!("{} has no records", path.display())).into());
    }
    let segmentation = ChainSegmentation::from_lengths(&lengths)?;
    let states = to_zero_based(chains.into_iter().flatten().collect(), 0)?;
    Ok(Dataset {
        states,
        segmentation,
        k: None,
    })
}

/// Parsed `--config`: a class spec for the chain mechanisms, joint models
/// for the Wasserstein mechanism.
#[derive(Debug, Clone)]
pub enum Config {
    Class(DistributionClass),
    Joint(Vec<JointModel>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JointDoc {
    One(JointModel),
    Many(Vec<JointModel>),
}

pub fn load_class(path: &Path) -> Result<DistributionClass, CliError> {
    Ok(DistributionClass::from_json(&read(path)?)?)
}

pub fn load_joint(path: &Path) -> Result<Vec<JointModel>, CliError> {
    let models = match serde_json::from_str(&read(path)?)? {
        JointDoc::One(m) => vec![m],
        JointDoc::Many(v) => v,
    };
    if models.is_empty() {
        return Err(pufferfish::Error::Empty("no joint models in config".into()).into());
    }
    // Re-run the constructor checks that deserialization skips.
    models
        .into_iter()
        .map(|m| JointModel::new(m.n(), m.domain(), m.probs().to_vec()).map_err(CliError::from))
        .collect()
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::File(PathBuf::from(path), e))
}
