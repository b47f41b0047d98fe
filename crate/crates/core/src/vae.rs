//! The evidence lower bound and the model that ties encoder and decoder
//! together.
//!
//! Per graph, with `45 = 9 + 36` node and pair terms:
//!
//! ```text
//! recon = −(Σ_v log p_v[x_v] + Σ_{u<v} log p_uv[e_uv]) / 45
//! kl    = −½ Σ_i (1 + 2 log σ_i − μ_i² − σ_i²) / 45
//! loss  = recon + β·kl
//! ```
//!
//! Both terms share the per-slot scale, so `loss` is the negative ELBO
//! divided by 45. Batch values are means over graphs.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use num_traits::Float;

use crate::batch::{GraphBatch, UPPER_PER_GRAPH};
use crate::config::ModelConfig;
use crate::decoder::{realize, Decoder, GraphDistribution, RealizeMode};
use crate::encoder::{Encoder, PosteriorParams};
use crate::error::{Error, Result};
use crate::molgraph::{AtomCategory, AtomHistogram, BondCategory, MolGraph, N_SLOTS};
use crate::params::{Gradients, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Probabilities below this are clamped before taking logs.
pub const LOG_FLOOR: f64 = 1e-10;
/// Terms per graph in the reconstruction loss.
pub const TERMS_PER_GRAPH: usize = N_SLOTS + UPPER_PER_GRAPH;

pub fn kl_standard_normal(p: &PosteriorParams) -> f64 {
    -0.5 * p
        .mu
        .iter()
        .zip(&p.log_sigma)
        .map(|(m, l)| 1.0 + 2.0 * l - m * m - Float::exp(2.0 * l))
        .sum::<f64>()
}

/// Standard normal draws from a seeded generator.
pub fn standard_normal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `z = μ + σ ⊙ ε` with `ε` drawn from `seed`.
pub fn reparameterize(p: &PosteriorParams, seed: u64) -> Vec<f64> {
    let eps = standard_normal(p.mu.len(), seed);
    p.mu.iter()
        .zip(&p.log_sigma)
        .zip(eps)
        .map(|((m, l), e)| m + Float::exp(*l) * e)
        .collect()
}

/// Normalized reconstruction loss of one graph and the number of clamped
/// log terms.
pub fn reconstruction_loss(dist: &GraphDistribution, target: &MolGraph) -> (f64, usize) {
    let mut bonds = [[BondCategory::None; N_SLOTS]; N_SLOTS];
    for (u, row) in bonds.iter_mut().enumerate() {
        for (v, b) in row.iter_mut().enumerate() {
            *b = target.bond(u, v);
        }
    }
    categorical_nll(dist, target.atoms(), &bonds)
}

/// The same loss for arbitrary categorical targets, including bonds on
/// empty slots that no [`MolGraph`] can hold. Only the upper triangle of
/// `bonds` is read.
pub fn categorical_nll(
    dist: &GraphDistribution,
    atoms: &[AtomCategory; N_SLOTS],
    bonds: &[[BondCategory; N_SLOTS]; N_SLOTS],
) -> (f64, usize) {
    let mut clamped = 0;
    let mut log = |p: f64| {
        if p < LOG_FLOOR {
            clamped += 1;
            Float::ln(LOG_FLOOR)
        } else {
            Float::ln(p)
        }
    };
    let mut s = 0.0;
    for u in 0..N_SLOTS {
        s += log(dist.node_probs[u][atoms[u].index()]);
    }
    for u in 0..N_SLOTS {
        for v in u + 1..N_SLOTS {
            s += log(dist.edge_probs[u][v][bonds[u][v].index()]);
        }
    }
    (-s / TERMS_PER_GRAPH as f64, clamped)
}

/// Loss terms on a tape; each is already divided by the normalizing graph
/// count.
#[derive(Debug, Clone, Copy)]
pub struct ElboVars {
    pub total: Var,
    pub recon: Var,
    pub kl: Var,
    pub node_ce: Var,
    pub edge_ce: Var,
}

/// Batch-mean loss values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElboReport {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
    pub node_ce: f64,
    pub edge_ce: f64,
    pub beta: f64,
    pub graphs: usize,
    pub clamped_logs: usize,
}

impl ElboReport {
    /// Combines the reports of chunks that share one normalizer.
    pub fn merge(&mut self, other: &ElboReport) {
        self.recon += other.recon;
        self.kl += other.kl;
        self.total += other.total;
        self.node_ce += other.node_ce;
        self.edge_ce += other.edge_ce;
        self.beta = other.beta;
        self.graphs += other.graphs;
        self.clamped_logs += other.clamped_logs;
    }
}

/// The networks of a configuration, independent of parameter values and
/// precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

/// Architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub arch: Architecture,
    pub params: ParamStore<F>,
}

impl<F> core::ops::Deref for Model<F> {
    type Target = Architecture;

    fn deref(&self) -> &Architecture {
        &self.arch
    }
}

impl Architecture {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Architecture {
            encoder: Encoder::new(&config),
            decoder: Decoder::new(&config),
            config,
        })
    }

    pub fn batch<F: Scalar>(&self, graphs: &[MolGraph]) -> GraphBatch<F> {
        if self.config.conditional {
            let labels: Vec<AtomHistogram> = graphs.iter().map(MolGraph::atom_histogram).collect();
            GraphBatch::new(graphs, Some(&labels))
        } else {
            GraphBatch::new(graphs, None)
        }
    }

    /// Builds the loss on `tape` for `batch` with fixed noise `eps`
    /// (`[B, latent]`), dividing by `norm` graphs.
    pub fn elbo_on_tape<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        batch: &GraphBatch<F>,
        eps: &Tensor<F>,
        beta: f64,
        norm: usize,
    ) -> Result<ElboVars> {
        let scale = 1.0 / norm as f64;
        let post = self.encoder.encode(tape, batch)?;
        let sigma = tape.exp(post.log_sigma);
        let e = tape.constant(eps.clone());
        let noise = tape.mul(sigma, e)?;
        let z = tape.add(post.mu, noise)?;
        let labels = batch.labels.clone().map(|l| tape.constant(l));
        let out = self.decoder.decode(tape, z, labels)?;

        let atoms = tape.constant(batch.atoms.clone());
        let lp = tape.log_clamped(out.node_probs, LOG_FLOOR);
        let picked = tape.mul(lp, atoms)?;
        let node_sum = tape.sum(picked);
        let node_ce = tape.scale(node_sum, -scale / TERMS_PER_GRAPH as f64);

        let upper = tape.gather_rows(out.pair_probs, &batch.topology.upper)?;
        let bonds = tape.constant(batch.upper_bonds.clone());
        let lp = tape.log_clamped(upper, LOG_FLOOR);
        let picked = tape.mul(lp, bonds)?;
        let edge_sum = tape.sum(picked);
        let edge_ce = tape.scale(edge_sum, -scale / TERMS_PER_GRAPH as f64);
        let recon = tape.add(node_ce, edge_ce)?;

        let two_ls = tape.scale(post.log_sigma, 2.0);
        let var = tape.exp(two_ls);
        let mu2 = tape.mul(post.mu, post.mu)?;
        let inner = tape.sub(two_ls, mu2)?;
        let inner = tape.sub(inner, var)?;
        let inner = tape.sum(inner);
        let ones = tape.constant(Tensor::scalar(F::of(tape.value(post.mu).len() as f64)));
        let inner = tape.add(inner, ones)?;
        let kl = tape.scale(inner, -0.5 * scale / TERMS_PER_GRAPH as f64);

        let weighted = tape.scale(kl, beta);
        let total = tape.add(recon, weighted)?;
        Ok(ElboVars { total, recon, kl, node_ce, edge_ce })
    }
}

impl<F: Scalar> Model<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let arch = Architecture::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        arch.encoder.init(&mut params, &mut rng);
        arch.decoder.init(&mut params, &mut rng);
        Ok(Model { arch, params })
    }

    /// Wraps loaded parameters, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self> {
        let reference = Model::<F>::new(config, 0)?;
        if reference.params.len() != params.len() {
            return Err(Error::Config(alloc::format!(
                "expected {} parameter tensors, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (name, t) in reference.params.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Shape {
                    op: "load parameter",
                    lhs: t.shape().to_vec(),
                    rhs: got.shape().to_vec(),
                });
            }
        }
        Ok(Model { arch: reference.arch, params })
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    /// Loss values and parameter gradients for `graphs`, normalized by
    /// `norm` graphs so that chunk results sum to batch means.
    pub fn chunk_gradients(
        &self,
        graphs: &[MolGraph],
        eps: &Tensor<F>,
        beta: f64,
        norm: usize,
    ) -> Result<(Gradients<F>, ElboReport)> {
        let batch = self.batch::<F>(graphs);
        let mut tape = Tape::new(&self.params);
        let v = self.arch.elbo_on_tape(&mut tape, &batch, eps, beta, norm)?;
        let grads = tape.backward(v.total)?;
        let item = |x: Var| tape.value(x).item().as_f64();
        let report = ElboReport {
            recon: item(v.recon),
            kl: item(v.kl),
            total: item(v.total),
            node_ce: item(v.node_ce),
            edge_ce: item(v.edge_ce),
            beta,
            graphs: graphs.len(),
            clamped_logs: tape.clamped_logs(),
        };
        Ok((grads, report))
    }

    pub fn posteriors(&self, graphs: &[MolGraph]) -> Result<Vec<PosteriorParams>> {
        let batch = self.batch::<F>(graphs);
        let mut tape = Tape::new(&self.params);
        let p = self.encoder.encode(&mut tape, &batch)?;
        Ok(PosteriorParams::from_tape(&tape, &p))
    }

    /// Decodes latents (and labels for a conditional model) to
    /// distributions.
    pub fn decode(&self, z: &[Vec<f64>], labels: Option<&[AtomHistogram]>) -> Result<Vec<GraphDistribution>> {
        if z.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.config.latent_dim;
        if z.iter().any(|v| v.len() != d) {
            return Err(Error::Shape {
                op: "decode latent",
                lhs: alloc::vec![z[0].len()],
                rhs: alloc::vec![d],
            });
        }
        let flat: Vec<f64> = z.iter().flatten().copied().collect();
        let mut tape = Tape::new(&self.params);
        let zv = tape.constant(Tensor::from_f64(&[z.len(), d], &flat)?);
        let lv = match labels {
            Some(ls) if self.config.conditional => {
                if ls.len() != z.len() {
                    return Err(Error::Contract("one label per latent"));
                }
                let data: Vec<f64> = ls.iter().flat_map(crate::batch::label_features).collect();
                Some(tape.constant(Tensor::from_f64(&[z.len(), 4], &data)?))
            }
            Some(_) => return Err(Error::Contract("labels given to an unconditional model")),
            None if self.config.conditional => return Err(Error::Contract("conditional model needs labels")),
            None => None,
        };
        let out = self.decoder.decode(&mut tape, zv, lv)?;
        Ok(GraphDistribution::from_tape(&tape, &out))
    }

    /// Argmax decoding of each graph's posterior mean.
    pub fn reconstruct(&self, graphs: &[MolGraph]) -> Result<Vec<MolGraph>> {
        let post = self.posteriors(graphs)?;
        let z: Vec<Vec<f64>> = post.into_iter().map(|p| p.mu).collect();
        let labels: Vec<AtomHistogram> = graphs.iter().map(MolGraph::atom_histogram).collect();
        let labels = self.config.conditional.then_some(labels.as_slice());
        Ok(self
            .decode(&z, labels)?
            .iter()
            .map(|d| realize(d, RealizeMode::Argmax).graph)
            .collect())
    }
}

/// Prior latents for `n` samples, drawn sequentially from one seeded
/// generator so that the result does not depend on later batching.
pub fn prior_latents(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let flat = standard_normal(n * dim, seed);
    flat.chunks(dim.max(1)).map(<[f64]>::to_vec).take(n).collect()
}
