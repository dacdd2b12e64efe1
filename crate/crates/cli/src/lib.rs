//! Command-line surface: scale audits, seeded releases, the synthetic
//! benchmark, transition estimation and the composition ledger.
//!
//! Scale computation never draws noise; only `privatize` and `bench`
//! consume randomness, and both require `--seed`.

pub mod bench;
pub mod data;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pufferfish::approx::{approx_plan, fast_plan, GapMode};
use pufferfish::baselines::{entry_dp_plan, group_dp_plan, ChainSegmentation};
use pufferfish::chain::{ClassSpec, InitialAndMatrix};
use pufferfish::quilt::{exact_plan, CompositionLedger};
use pufferfish::wasserstein::wasserstein_plan;
use pufferfish::{builtin_query, DistributionClass, LaplaceSource, LipschitzQuery, MechanismId, NoisePlan};
use serde::Serialize;

use data::{BinArgs, Config};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pufferfish::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}: {1}")]
    File(PathBuf, std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Parser, Debug)]
#[command(name = "pufferfish", version, about = "Pufferfish privacy mechanisms for correlated data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute a noise plan without drawing any noise.
    Scale(ScaleArgs),
    /// Release a noisy query answer for a database.
    Privatize(PrivatizeArgs),
    /// Synthetic binary-chain benchmark; writes mean L1 errors as CSV.
    Bench(bench::BenchArgs),
    /// Fit a chain to a CSV series and print it as a class spec.
    Estimate(EstimateArgs),
    /// Create or extend a composition ledger.
    Compose(ComposeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct MechanismArgs {
    #[arg(long)]
    pub mechanism: MechanismId,
    #[arg(long)]
    pub epsilon: f64,
    /// Quilt set limit; defaults to the chain length.
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long, default_value = "rel_freq_histogram")]
    pub query: String,
    /// Eigengap used by the approximate mechanisms.
    #[arg(long, default_value = "pp_star")]
    pub mode: GapMode,
}

#[derive(Args, Debug)]
pub struct ScaleArgs {
    /// Class spec JSON (joint model JSON for the Wasserstein mechanism).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub mech: MechanismArgs,
    /// Audit a database made of independent chains of these lengths.
    #[arg(long, value_delimiter = ',')]
    pub segments: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PrivatizeArgs {
    /// Optional for group_dp and entry_dp.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON list of 1-based states (or a list of chains), or a CSV series.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub mech: MechanismArgs,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long, default_value_t = pufferfish::ingest::DEFAULT_SMOOTHING)]
    pub smoothing: f64,
    /// Chain length written to the spec; defaults to the longest segment.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ComposeArgs {
    #[arg(long)]
    pub ledger: PathBuf,
    /// Start a new ledger (needs --chain-length and --ell).
    #[arg(long)]
    pub init: bool,
    #[arg(long)]
    pub chain_length: Option<usize>,
    #[arg(long)]
    pub ell: Option<usize>,
    /// Noise plan JSON (as written by `scale`) to record.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub query: Option<String>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Scale(a) => cmd_scale(a),
        Command::Privatize(a) => cmd_privatize(a),
        Command::Bench(a) => bench::cmd_bench(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Compose(a) => cmd_compose(a),
    }
}

pub(crate) fn check_epsilon(eps: f64) -> Result<(), CliError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CliError::Usage(format!("--epsilon must be positive and finite, got {eps}")));
    }
    Ok(())
}

/// Writes `text` to `out`, or stdout when absent.
pub(crate) fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| CliError::File(p.to_path_buf(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn load_config(path: &Path, mech: MechanismId) -> Result<Config, CliError> {
    Ok(match mech {
        MechanismId::Wasserstein => Config::Joint(data::load_joint(path)?),
        _ => Config::Class(data::load_class(path)?),
    })
}

/// Plan for one chain of `len` records.
pub fn chain_plan(
    class: &DistributionClass,
    m: &MechanismArgs,
    query: &LipschitzQuery,
    len: usize,
) -> Result<NoisePlan, CliError> {
    let class = if class.chain_length() == len { class.clone() } else { class.with_length(len)? };
    let ell = m.ell.unwrap_or(len);
    Ok(match m.mechanism {
        MechanismId::MqmExact => exact_plan(&class, query, m.epsilon, ell)?,
        MechanismId::MqmApprox => approx_plan(&class, query, m.epsilon, ell, m.mode)?,
        MechanismId::MqmApproxFast => fast_plan(&class, query, m.epsilon, m.mode)?,
        other => return Err(CliError::Usage(format!("{} is not a quilt mechanism", other.as_str()))),
    })
}

/// Noise plan for a database of independent chains. The quilt mechanisms
/// take the largest `sigma_max` over the distinct segment lengths; the query
/// itself is evaluated over the whole database.
pub fn plan_for(
    config: Option<&Config>,
    m: &MechanismArgs,
    seg: &ChainSegmentation,
    k: usize,
) -> Result<(NoisePlan, LipschitzQuery), CliError> {
    check_epsilon(m.epsilon)?;
    let total = seg.total_len();
    let query = builtin_query(&m.query, total, k)?;
    let plan = match (m.mechanism, config) {
        (MechanismId::GroupDp, _) => group_dp_plan(&query, seg, m.epsilon, None)?,
        (MechanismId::EntryDp, _) => entry_dp_plan(&query, m.epsilon)?,
        (MechanismId::Wasserstein, Some(Config::Joint(models))) => {
            if models.iter().any(|jm| jm.n() != total) {
                return Err(CliError::Usage(format!(
                    "joint models must cover all {total} records of the database"
                )));
            }
            wasserstein_plan(models, &query, m.epsilon)?
        }
        (_, Some(Config::Class(class))) => {
            let lengths: BTreeSet<usize> = seg.lengths().collect();
            let mut best: Option<NoisePlan> = None;
            for &len in &lengths {
                let p = chain_plan(class, m, &builtin_query(&m.query, len, k)?, len)?;
                if best.as_ref().is_none_or(|b| p.sigma_max > b.sigma_max) {
                    best = Some(p);
                }
            }
            let mut plan = best.expect("segmentation is never empty");
            if lengths.len() > 1 || seg.segments().len() > 1 {
                let from = plan.chain_length.unwrap_or(total);
                plan.notes.push(format!(
                    "{} chains with lengths {:?}: sigma_max taken from length {from}",
                    seg.segments().len(),
                    lengths
                ));
                plan.chain_length = Some(total);
                plan.lipschitz = query.lipschitz();
                plan.laplace_scale = plan.lipschitz * plan.sigma_max;
            }
            plan
        }
        (mech, _) => {
            return Err(CliError::Usage(format!("--config is required for {}", mech.as_str())));
        }
    };
    Ok((plan, query))
}

fn config_shape(config: Option<&Config>) -> Option<(usize, usize)> {
    match config? {
        Config::Class(c) => Some((c.chain_length(), c.state_count())),
        Config::Joint(m) => Some((m[0].n(), m[0].domain())),
    }
}

pub fn cmd_scale(a: &ScaleArgs) -> Result<(), CliError> {
    check_epsilon(a.mech.epsilon)?;
    let config = load_config(&a.config, a.mech.mechanism)?;
    let (len, k) = config_shape(Some(&config)).expect("config present");
    let seg = match &a.segments {
        Some(lengths) => ChainSegmentation::from_lengths(lengths)?,
        None => ChainSegmentation::single(len),
    };
    let (plan, _) = plan_for(Some(&config), &a.mech, &seg, k)?;
    emit(a.out.as_deref(), &plan.to_json())
}

pub fn cmd_privatize(a: &PrivatizeArgs) -> Result<(), CliError> {
    check_epsilon(a.mech.epsilon)?;
    let config = a.config.as_deref().map(|p| load_config(p, a.mech.mechanism)).transpose()?;
    let ds = data::load_dataset(&a.data, &a.bins)?;
    let observed = ds.states.iter().max().map_or(1, |&s| s + 1);
    let k = match (config_shape(config.as_ref()), ds.k) {
        (Some((_, k)), Some(dk)) if k != dk => {
            return Err(CliError::Usage(format!("config has {k} states but the data bins define {dk}")));
        }
        (Some((_, k)), _) | (None, Some(k)) => k,
        (None, None) => observed.max(2),
    };
    pufferfish::check_data(&ds.states, ds.states.len(), k)?;
    let (plan, query) = plan_for(config.as_ref(), &a.mech, &ds.segmentation, k)?;
    let mut src = LaplaceSource::new(a.seed);
    let release = pufferfish::plan::release(plan, &query, &ds.states, &mut src);
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&release)?)
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let series = a.bins.load(&a.data)?;
    let est = pufferfish::ingest::estimate_transition(&series, a.smoothing)?;
    let q = est.stationary.clone().unwrap_or_else(|| est.empirical.clone());
    let len = a.length.unwrap_or_else(|| series.segmentation.longest());
    let spec = ClassSpec::FiniteSet {
        len,
        chains: vec![InitialAndMatrix {
            q,
            p: est.matrix.rows(),
        }],
    };
    // Round-trip through the class constructor so the output is loadable.
    let class = DistributionClass::try_from(spec)?;
    eprintln!(
        "{} records, {} states, {} chains, {} clamped values",
        series.states.len(),
        series.k(),
        series.segmentation.segments().len(),
        series.clamped
    );
    emit(a.out.as_deref(), &class.to_json())
}

#[derive(Serialize)]
struct LedgerStatus {
    entries: usize,
    total_epsilon: f64,
}

pub fn cmd_compose(a: &ComposeArgs) -> Result<(), CliError> {
    let ledger = if a.init {
        let (Some(t), Some(ell)) = (a.chain_length, a.ell) else {
            return Err(CliError::Usage("--init needs --chain-length and --ell".into()));
        };
        CompositionLedger::create(&a.ledger, t, ell)?
    } else {
        let plan_path = a
            .plan
            .as_deref()
            .ok_or_else(|| CliError::Usage("pass --plan to record a release, or --init".into()))?;
        let plan: NoisePlan = serde_json::from_str(&data::read(plan_path)?)?;
        let query = a.query.as_deref().ok_or_else(|| CliError::Usage("--query is required".into()))?;
        CompositionLedger::append(&a.ledger, query, &plan)?
    };
    let status = LedgerStatus {
        entries: ledger.entries().len(),
        total_epsilon: ledger.total(),
    };
    emit(None, &serde_json::to_string(&status)?)
}
