//! The training loop.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mpgvae_core::optim::Adam;
use mpgvae_core::params::{accumulate, gradients_finite, Gradients};
use mpgvae_core::vae::{standard_normal, ElboReport};
use mpgvae_core::{Model, MolGraph, Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::checkpoint;
use crate::config_file::RunConfig;
use crate::error::{CliError, Result};
use crate::svg;

/// Deterministic seed for stream `(a, b)` of a run.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Means over the epoch's graphs.
    pub report: ElboReport,
    pub steps: usize,
    pub wall_seconds: Option<f64>,
}

pub const LOG_HEADER: [&str; 9] = [
    "epoch",
    "recon",
    "kl",
    "beta",
    "total",
    "node_ce",
    "edge_ce",
    "clamped_logs",
    "wall_seconds",
];

impl EpochLog {
    pub fn record(&self) -> [String; 9] {
        let r = &self.report;
        [
            self.epoch.to_string(),
            r.recon.to_string(),
            r.kl.to_string(),
            r.beta.to_string(),
            r.total.to_string(),
            r.node_ce.to_string(),
            r.edge_ce.to_string(),
            r.clamped_logs.to_string(),
            self.wall_seconds.map(|s| format!("{s:.3}")).unwrap_or_default(),
        ]
    }
}

pub struct TrainOutcome<F> {
    pub model: Model<F>,
    pub epochs: Vec<EpochLog>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("ckpt_epoch_{epoch:03}.mpgv")
}

struct Outputs {
    dir: PathBuf,
    log: csv::Writer<File>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let path = dir.join("train_log.csv");
        let file = File::create(&path).map_err(CliError::io(&path))?;
        let mut log = csv::Writer::from_writer(file);
        log.write_record(LOG_HEADER).map_err(|e| csv_error(&path, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), log })
    }

    fn epoch(&mut self, e: &EpochLog) -> Result<()> {
        let path = self.dir.join("train_log.csv");
        self.log.write_record(e.record()).map_err(|err| csv_error(&path, err))?;
        self.log.flush().map_err(CliError::io(&path))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Loss curves of a finished (or aborted) run.
pub fn loss_curve_svg(epochs: &[EpochLog]) -> String {
    let series = |f: fn(&ElboReport) -> f64| epochs.iter().map(|e| (e.epoch as f64, f(&e.report))).collect();
    svg::line_chart(
        "Training loss per graph",
        "epoch",
        "nats / term",
        &[
            ("total", series(|r| r.total)),
            ("reconstruction", series(|r| r.recon)),
            ("KL", series(|r| r.kl)),
        ],
    )
}

fn write_curve(dir: &Path, epochs: &[EpochLog]) -> Result<()> {
    let path = dir.join("loss_curve.svg");
    std::fs::write(&path, loss_curve_svg(epochs)).map_err(CliError::io(&path))
}

/// One optimizer step on `graphs`. Chunks run in parallel on `pool`;
/// their gradients are summed in chunk order.
pub fn step<F: Scalar>(
    model: &mut Model<F>,
    opt: &mut Adam<F>,
    graphs: &[MolGraph],
    eps: &[f64],
    beta: f64,
    chunk_size: usize,
    pool: &ThreadPool,
) -> Result<ElboReport, String> {
    let d = model.config.latent_dim;
    let norm = graphs.len();
    let chunks: Vec<(&[MolGraph], &[f64])> = graphs.chunks(chunk_size).zip(eps.chunks(chunk_size * d)).collect();
    let results: Vec<_> = pool.install(|| {
        chunks
            .par_iter()
            .map(|(g, e)| {
                let eps = Tensor::<F>::from_f64(&[g.len(), d], e).map_err(|x| x.to_string())?;
                model.chunk_gradients(g, &eps, beta, norm).map_err(|x| x.to_string())
            })
            .collect()
    });
    let mut grads = Gradients::new();
    let mut report = ElboReport::default();
    for r in results {
        let (g, rep) = r?;
        accumulate(&mut grads, &g);
        report.merge(&rep);
    }
    if !report.total.is_finite() {
        return Err(format!("loss is {}", report.total));
    }
    if !gradients_finite(&grads) {
        return Err("non-finite gradient".into());
    }
    opt.update(&mut model.params, &grads).map_err(|e| e.to_string())?;
    if !model.params.all_finite() {
        return Err("non-finite parameters after the update".into());
    }
    Ok(report)
}

/// Trains a fresh model. With `out`, writes `train_log.csv`, a checkpoint
/// per epoch, `latest.mpgv` and `loss_curve.svg` there.
pub fn train<F: Scalar>(
    run: &RunConfig,
    data: &[MolGraph],
    out: Option<&Path>,
    pool: &ThreadPool,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<F>> {
    if data.is_empty() {
        return Err(CliError::Data("training set is empty".into()));
    }
    let tc = &run.train;
    tc.validate()?;
    let mut model = Model::<F>::new(run.model.clone(), tc.seed)?;
    let mut opt = Adam::new(tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
    let mut outputs = out.map(Outputs::create).transpose()?;
    let d = run.model.latent_dim;
    let start = Instant::now();
    let mut epochs = Vec::with_capacity(tc.epochs);
    let mut checkpoints = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..tc.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, epoch as u64, u64::MAX)));
        let beta = tc.beta(epoch);
        let mut sum = ElboReport::default();
        let mut steps = 0;
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            let graphs: Vec<MolGraph> = idx.iter().map(|&i| data[i]).collect();
            let eps = standard_normal(graphs.len() * d, derive_seed(tc.seed, epoch as u64, b as u64));
            let rep = match step(&mut model, &mut opt, &graphs, &eps, beta, tc.chunk_size, pool) {
                Ok(r) => r,
                Err(what) => {
                    if let Some(o) = &outputs {
                        write_curve(&o.dir, &epochs)?;
                    }
                    return Err(CliError::Diverged {
                        epoch: epoch + 1,
                        what,
                        last_good: checkpoints.last().cloned(),
                    });
                }
            };
            let w = graphs.len() as f64;
            sum.recon += rep.recon * w;
            sum.kl += rep.kl * w;
            sum.total += rep.total * w;
            sum.node_ce += rep.node_ce * w;
            sum.edge_ce += rep.edge_ce * w;
            sum.graphs += rep.graphs;
            sum.clamped_logs += rep.clamped_logs;
            steps += 1;
        }
        let n = sum.graphs as f64;
        let report = ElboReport {
            recon: sum.recon / n,
            kl: sum.kl / n,
            total: sum.total / n,
            node_ce: sum.node_ce / n,
            edge_ce: sum.edge_ce / n,
            beta,
            ..sum
        };
        let log = EpochLog {
            epoch: epoch + 1,
            report,
            steps,
            wall_seconds: run.log_wall_time.then(|| start.elapsed().as_secs_f64()),
        };
        if let Some(o) = outputs.as_mut() {
            let path = o.dir.join(checkpoint_name(epoch + 1));
            checkpoint::save(&path, &model, epoch + 1)?;
            checkpoint::save(&o.dir.join("latest.mpgv"), &model, epoch + 1)?;
            o.epoch(&log)?;
            checkpoints.push(path);
        }
        on_epoch(&log);
        epochs.push(log);
    }
    if let Some(o) = &outputs {
        write_curve(&o.dir, &epochs)?;
    }
    Ok(TrainOutcome {
        model,
        epochs,
        checkpoints,
    })
}

/// A pool of `threads` workers (0 picks the machine's parallelism).
pub fn pool(threads: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}
