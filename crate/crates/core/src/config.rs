//! Model and training hyperparameters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Message passing widths of the encoder; the first is also the width
    /// of the atom and bond embeddings.
    pub encoder_widths: Vec<usize>,
    /// Message passing widths of the decoder; the first is also the hidden
    /// width of the read-in recurrence.
    pub decoder_widths: Vec<usize>,
    /// Width of the set2set output (query ‖ readout), so the attention
    /// content width is half of it. Also the width of the decoder's latent
    /// projection.
    pub graph_width: usize,
    pub latent_dim: usize,
    pub set2set_steps: usize,
    /// Condition encoder and decoder on the atom histogram.
    pub conditional: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_widths: vec![32, 64, 64, 128],
            decoder_widths: vec![64, 64, 32, 32],
            graph_width: 256,
            latent_dim: 18,
            set2set_steps: 3,
            conditional: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("encoder_widths", &self.encoder_widths), ("decoder_widths", &self.decoder_widths)] {
            if w.is_empty() || w.contains(&0) {
                return Err(Error::Config(format!("{name} must be a non-empty list of positive widths")));
            }
        }
        if self.graph_width == 0 || !self.graph_width.is_multiple_of(2) {
            return Err(Error::Config(format!("graph_width must be positive and even, got {}", self.graph_width)));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if self.set2set_steps == 0 {
            return Err(Error::Config("set2set_steps must be positive".into()));
        }
        Ok(())
    }

    /// Width of the conditioning label, 0 when unconditional.
    pub fn label_width(&self) -> usize {
        if self.conditional {
            crate::molgraph::AtomCategory::ELEMENTS.len()
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// KL weight rises linearly from 0 (first epoch) and reaches 1 at this
    /// epoch; 0 disables the ramp.
    pub kl_warmup_epochs: usize,
    pub seed: u64,
    /// Graphs per tape. Gradients are summed chunk by chunk in a fixed
    /// order, so results do not depend on how chunks are scheduled.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 30,
            kl_warmup_epochs: 5,
            seed: 0,
            chunk_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.chunk_size == 0 {
            return Err(Error::Config("batch_size and chunk_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }

    /// KL weight for a 0-based epoch.
    pub fn beta(&self, epoch: usize) -> f64 {
        if self.kl_warmup_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / self.kl_warmup_epochs as f64).min(1.0)
        }
    }
}
