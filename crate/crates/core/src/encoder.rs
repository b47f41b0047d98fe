//! Posterior network: embeddings, message passing over observed bonds,
//! set2set readout and the two Gaussian heads.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use num_traits::Float;

use crate::batch::{per_node_labels, GraphBatch, MaskPolicy};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::molgraph::{AtomCategory, BondCategory, N_SLOTS};
use crate::mpnn::{GraphState, MpnnStack, PairMask};
use crate::nn::{Linear, LstmCell};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Posterior parameters `[B, latent]` on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Posterior {
    pub mu: Var,
    pub log_sigma: Var,
}

/// Attention readout iterated by a query LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct Set2Set {
    pub name: String,
    /// Width of the per-node content vectors.
    pub width: usize,
    pub steps: usize,
}

impl Set2Set {
    pub fn lstm(&self) -> LstmCell {
        LstmCell::new(format!("{}.lstm", self.name), 2 * self.width, self.width)
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        self.lstm().init(store, rng);
    }

    /// `content: [B·9, width]`, `node_mask` marks real atoms; every graph
    /// needs at least one. Returns `[B, 2·width]`.
    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        content: Var,
        node_mask: &[bool],
    ) -> Result<Var> {
        let b = node_mask.len() / N_SLOTS;
        if node_mask.chunks(N_SLOTS).any(|g| !g.iter().any(|&m| m)) {
            return Err(Error::Contract("set2set needs at least one node per graph"));
        }
        let d = self.width;
        let lstm = self.lstm();
        let c3 = tape.reshape(content, &[b, N_SLOTS, d])?;
        let mut q_star = tape.constant(Tensor::zeros(&[b, 2 * d]));
        let mut h = tape.constant(Tensor::zeros(&[b, d]));
        let mut c = tape.constant(Tensor::zeros(&[b, d]));
        for _ in 0..self.steps {
            (h, c) = lstm.forward(tape, q_star, h, c)?;
            let q = tape.reshape(h, &[b, d, 1])?;
            let logits = tape.batch_matmul(c3, q)?;
            let logits = tape.reshape(logits, &[b, N_SLOTS])?;
            let a = tape.softmax_rows(logits, Some(node_mask))?;
            let a = tape.reshape(a, &[b, 1, N_SLOTS])?;
            let r = tape.batch_matmul(a, c3)?;
            let r = tape.reshape(r, &[b, d])?;
            q_star = tape.concat(&[h, r])?;
        }
        Ok(q_star)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub atom_embed: Linear,
    pub bond_embed: Linear,
    pub stack: MpnnStack,
    pub content: Linear,
    pub set2set: Set2Set,
    pub mu: Linear,
    pub log_sigma: Linear,
    pub label_width: usize,
}

impl Encoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let w0 = cfg.encoder_widths[0];
        let lw = cfg.label_width();
        let atom_in = AtomCategory::COUNT + lw;
        let stack = MpnnStack::new("enc.mpnn", w0, w0, &cfg.encoder_widths);
        let half = cfg.graph_width / 2;
        Encoder {
            atom_embed: Linear::new("enc.atom_embed", atom_in, w0, true),
            bond_embed: Linear::new("enc.bond_embed", BondCategory::COUNT, w0, true),
            content: Linear::new("enc.content", stack.out_width() + atom_in, half, true),
            stack,
            set2set: Set2Set {
                name: "enc.set2set".into(),
                width: half,
                steps: cfg.set2set_steps,
            },
            mu: Linear::new("enc.mu", cfg.graph_width + lw, cfg.latent_dim, true),
            log_sigma: Linear::new("enc.log_sigma", cfg.graph_width + lw, cfg.latent_dim, true),
            label_width: lw,
        }
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        self.atom_embed.init(store, rng);
        self.bond_embed.init(store, rng);
        self.stack.init(store, rng);
        self.content.init(store, rng);
        self.set2set.init(store, rng);
        self.mu.init(store, rng);
        self.log_sigma.init(store, rng);
    }

    fn labels<F: Scalar>(&self, batch: &GraphBatch<F>) -> Result<Option<Tensor<F>>> {
        match (self.label_width, &batch.labels) {
            (0, _) => Ok(None),
            (_, Some(l)) => Ok(Some(l.clone())),
            (_, None) => Err(Error::Contract("conditional encoder needs labels")),
        }
    }

    /// Graph vectors `[B, graph_width (+ label)]`.
    pub fn graph_vector<F: Scalar>(&self, tape: &mut Tape<'_, F>, batch: &GraphBatch<F>) -> Result<Var> {
        let labels = self.labels(batch)?;
        let mut x = tape.constant(batch.atoms.clone());
        if let Some(l) = &labels {
            let per_node = tape.constant(per_node_labels(l));
            x = tape.concat(&[x, per_node])?;
        }
        let h = self.atom_embed.forward(tape, x)?;
        let bonds = tape.constant(batch.pair_bonds.clone());
        let e = self.bond_embed.forward(tape, bonds)?;
        let mask = PairMask::from_policy(MaskPolicy::ObservedEdges, &batch.bond_mask);
        let out = self.stack.propagate(tape, GraphState { h, e }, &batch.topology, &mask)?;
        let hx = tape.concat(&[out.h, x])?;
        let content = self.content.forward(tape, hx)?;
        let g = self.set2set.forward(tape, content, &batch.node_mask)?;
        match labels {
            Some(l) => {
                let l = tape.constant(l);
                tape.concat(&[g, l])
            }
            None => Ok(g),
        }
    }

    pub fn encode<F: Scalar>(&self, tape: &mut Tape<'_, F>, batch: &GraphBatch<F>) -> Result<Posterior> {
        let g = self.graph_vector(tape, batch)?;
        Ok(Posterior {
            mu: self.mu.forward(tape, g)?,
            log_sigma: self.log_sigma.forward(tape, g)?,
        })
    }
}

/// Posterior parameters of one graph as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl PosteriorParams {
    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| Float::exp(*l)).collect()
    }

    /// Splits `[B, latent]` tape values into per-graph parameters.
    pub fn from_tape<F: Scalar>(tape: &Tape<'_, F>, p: &Posterior) -> Vec<Self> {
        let mu = tape.value(p.mu);
        let ls = tape.value(p.log_sigma);
        let d = mu.last_dim();
        mu.data()
            .chunks(d)
            .zip(ls.data().chunks(d))
            .map(|(m, l)| PosteriorParams {
                mu: m.iter().map(|x| x.as_f64()).collect(),
                log_sigma: l.iter().map(|x| x.as_f64()).collect(),
            })
            .collect()
    }
}
