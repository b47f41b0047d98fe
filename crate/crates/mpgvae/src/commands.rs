//! Subcommand implementations, callable in-process.

use std::path::{Path, PathBuf};

use mpgvae_core::checks::{run_suite, SuiteEntry};
use mpgvae_core::metrics::{conditional_accuracy, discrete_stats, ConditionalReport};
use mpgvae_core::tape::Fault;
use mpgvae_core::{AtomHistogram, MolGraph, Scalar};

use crate::checkpoint::{self, Checkpoint};
use crate::config_file::{parse_config, RunConfig};
use crate::dataset::{load_dataset, load_training_set, read_text, IngestReport};
use crate::error::{CliError, Result};
use crate::eval::{evaluate, parse_samples, write_outputs, Evaluation};
use crate::sample::{draw, write_samples, Mode};
use crate::train::{pool, train, EpochLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub const ENV: &'static str = "MPGVAE_PRECISION";

    /// Reads `MPGVAE_PRECISION`; 32-bit when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var(Self::ENV) {
            Err(_) => Ok(Precision::F32),
            Ok(v) => match v.trim() {
                "f32" | "" => Ok(Precision::F32),
                "f64" => Ok(Precision::F64),
                other => Err(CliError::Config(format!("{}={other:?}; expected f32 or f64", Self::ENV))),
            },
        }
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Debug)]
pub struct TrainSummary {
    pub ingest: IngestReport,
    pub molecules: usize,
    pub epochs: Vec<EpochLog>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn cmd_train(
    config: &Path,
    data: &Path,
    out: &Path,
    threads: usize,
    precision: Precision,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainSummary> {
    let run = read_config(config)?;
    let (graphs, ingest) = load_training_set(data, run.max_molecules)?;
    let pool = pool(threads)?;
    let (epochs, checkpoints) = match precision {
        Precision::F32 => {
            let o = train::<f32>(&run, &graphs, Some(out), &pool, on_epoch)?;
            (o.epochs, o.checkpoints)
        }
        Precision::F64 => {
            let o = train::<f64>(&run, &graphs, Some(out), &pool, on_epoch)?;
            (o.epochs, o.checkpoints)
        }
    };
    Ok(TrainSummary {
        ingest,
        molecules: graphs.len(),
        epochs,
        checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub samples: usize,
    pub valid: usize,
    pub smiles_path: PathBuf,
    pub sidecar_path: PathBuf,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sample(
    ckpt: &Path,
    n: usize,
    seed: u64,
    mode: Mode,
    label: Option<AtomHistogram>,
    out: &Path,
    threads: usize,
    precision: Precision,
) -> Result<SampleSummary> {
    let ck = checkpoint::load(ckpt)?;
    let pool = pool(threads)?;
    let samples = match precision {
        Precision::F32 => draw(&ck.model::<f32>()?, n, seed, mode, label, &pool)?,
        Precision::F64 => draw(&ck.model::<f64>()?, n, seed, mode, label, &pool)?,
    };
    let sidecar_path = write_samples(out, &samples)?;
    Ok(SampleSummary {
        samples: samples.len(),
        valid: samples.iter().filter(|s| s.graph.is_valid()).count(),
        smiles_path: out.to_path_buf(),
        sidecar_path,
    })
}

/// Distinct atom histograms of the last tenth of the training file, at
/// most `max` of them, in file order.
pub fn held_out_labels(training: &[MolGraph], max: usize) -> Vec<AtomHistogram> {
    let start = training.len() - training.len().div_ceil(10);
    let mut labels: Vec<AtomHistogram> = Vec::new();
    for g in &training[start..] {
        let h = g.atom_histogram();
        if !labels.contains(&h) && labels.len() < max {
            labels.push(h);
        }
    }
    labels
}

pub const CONDITIONAL_LABELS: usize = 10;

fn conditional<F: Scalar>(
    ck: &Checkpoint,
    labels: &[AtomHistogram],
    n_per_label: usize,
    seed: u64,
) -> Result<ConditionalReport> {
    Ok(conditional_accuracy(&ck.model::<F>()?, labels, n_per_label, seed)?)
}

pub struct EvalArgs<'a> {
    pub samples: &'a Path,
    pub data: &'a Path,
    pub out: &'a Path,
    /// Adds conditional accuracy for a conditional checkpoint.
    pub ckpt: Option<&'a Path>,
    pub n_per_label: usize,
    pub seed: u64,
}

pub fn cmd_eval(args: &EvalArgs<'_>, precision: Precision) -> Result<Evaluation> {
    let (samples, failures) = parse_samples(&read_text(args.samples)?)?;
    let (training, _) = load_dataset(args.data, None)?;
    let mut e = evaluate(&samples, failures, &training)?;
    if let Some(path) = args.ckpt {
        let ck = checkpoint::load(path)?;
        if !ck.config.conditional {
            return Err(CliError::Checkpoint(format!("{} is not a conditional checkpoint", path.display())));
        }
        if training.is_empty() {
            return Err(CliError::Data("conditional evaluation needs training molecules".into()));
        }
        let labels = held_out_labels(&training, CONDITIONAL_LABELS);
        e.conditional = Some(match precision {
            Precision::F32 => conditional::<f32>(&ck, &labels, args.n_per_label, args.seed)?,
            Precision::F64 => conditional::<f64>(&ck, &labels, args.n_per_label, args.seed)?,
        });
    }
    write_outputs(args.out, &e)?;
    Ok(e)
}

/// Fails with the names of every tensor whose check failed.
pub fn cmd_gradcheck(seed: u64, fault: Option<Fault>) -> Result<Vec<SuiteEntry>> {
    let entries = run_suite(seed, fault)?;
    let failed: Vec<String> = entries
        .iter()
        .flat_map(|e| e.report.failures().map(move |p| format!("{}:{}", e.name, p.name)))
        .collect();
    if failed.is_empty() {
        Ok(entries)
    } else {
        Err(CliError::Check(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn inspect_data(path: &Path) -> Result<String> {
    let (graphs, report) = load_dataset(path, None)?;
    let mut s = format!("{}\n{report}", path.display());
    if let Some(stats) = discrete_stats(&graphs) {
        s.push_str("per-molecule means\n");
        for (c, m) in stats.rows() {
            s.push_str(&format!("  {c:<8} {m:.4}\n"));
        }
    }
    Ok(s)
}

pub fn inspect_checkpoint(path: &Path) -> Result<String> {
    let ck = checkpoint::load(path)?;
    let mut s = format!(
        "{}\nepoch {}  floats {}-bit  tensors {}  values {}\n",
        path.display(),
        ck.epoch,
        ck.float_bytes * 8,
        ck.params.len(),
        ck.params.numel()
    );
    s.push_str(&crate::config_file::model_config_text(&ck.config));
    Ok(s)
}
