//! Sample quality metrics.
//!
//! Uniqueness and novelty compare canonical forms of the heavy-atom graph.
//! Two novelty ratios are kept: `novel` divides the valid samples whose form
//! is absent from the training set by all valid samples; `novel_unique`
//! divides the distinct such forms by the distinct valid forms. `num` counts
//! valid samples that are the first occurrence of their form and novel,
//! which is the numerator of `novel_unique`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::canon::{canonical_form, CanonicalForm};
use crate::decoder::{realize, RealizeMode};
use crate::error::{Error, Result};
use crate::molgraph::{AtomHistogram, MolGraph};
use crate::scalar::Scalar;
use crate::vae::{prior_latents, Model};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VunReport {
    pub samples: usize,
    pub valid_count: usize,
    pub unique_count: usize,
    pub novel_count: usize,
    pub num: usize,
    pub valid: f64,
    pub unique: f64,
    pub novel: f64,
    pub novel_unique: f64,
    /// No sample was valid; `unique` and `novel` are reported as 0.
    pub no_valid: bool,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn vun(samples: &[MolGraph], training: &BTreeSet<CanonicalForm>) -> Result<VunReport> {
    if samples.is_empty() {
        return Err(Error::Contract("vun needs at least one sample"));
    }
    let mut seen = BTreeSet::new();
    let (mut valid, mut novel, mut num) = (0, 0, 0);
    for g in samples.iter().filter(|g| g.is_valid()) {
        valid += 1;
        let form = canonical_form(g);
        let is_novel = !training.contains(&form);
        novel += usize::from(is_novel);
        if seen.insert(form) && is_novel {
            num += 1;
        }
    }
    let unique = seen.len();
    Ok(VunReport {
        samples: samples.len(),
        valid_count: valid,
        unique_count: unique,
        novel_count: novel,
        num,
        valid: ratio(valid, samples.len()),
        unique: ratio(unique, valid),
        novel: ratio(novel, valid),
        novel_unique: ratio(num, unique),
        no_valid: valid == 0,
    })
}

/// Connected samples among the valid ones.
pub fn connected_fraction(samples: &[MolGraph]) -> f64 {
    let valid: Vec<&MolGraph> = samples.iter().filter(|g| g.is_valid()).collect();
    let connected = valid.iter().filter(|g| g.is_connected().unwrap_or(false)).count();
    ratio(connected, valid.len())
}

/// Per-molecule means of discrete counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscreteStats {
    pub molecules: usize,
    /// C, N, O, F
    pub atoms: [f64; 4],
    /// single, double, triple
    pub bonds: [f64; 3],
    pub rings: f64,
}

impl DiscreteStats {
    /// `(category, mean)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::with_capacity(8);
        for (name, v) in ["C", "N", "O", "F"].into_iter().zip(self.atoms) {
            out.push((name, v));
        }
        for (name, v) in ["single", "double", "triple"].into_iter().zip(self.bonds) {
            out.push((name, v));
        }
        out.push(("rings", self.rings));
        out
    }
}

/// `None` for an empty sample list.
pub fn discrete_stats<'a>(samples: impl IntoIterator<Item = &'a MolGraph>) -> Option<DiscreteStats> {
    let mut s = DiscreteStats::default();
    let (mut atoms, mut bonds, mut rings) = ([0u64; 4], [0u64; 3], 0u64);
    for g in samples {
        s.molecules += 1;
        for (a, c) in atoms.iter_mut().zip(g.atom_histogram()) {
            *a += c as u64;
        }
        for (b, c) in bonds.iter_mut().zip(g.bond_histogram()) {
            *b += c as u64;
        }
        rings += g.ring_count() as u64;
    }
    if s.molecules == 0 {
        return None;
    }
    let n = s.molecules as f64;
    s.atoms = atoms.map(|c| c as f64 / n);
    s.bonds = bonds.map(|c| c as f64 / n);
    s.rings = rings as f64 / n;
    Some(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalReport {
    pub samples: usize,
    pub valid_count: usize,
    pub matching_count: usize,
    pub validity: f64,
    pub accuracy: f64,
}

/// Decodes `n_per_label` prior latents per label (argmax) and counts valid
/// samples whose histogram equals their label.
pub fn conditional_accuracy<F: Scalar>(
    model: &Model<F>,
    labels: &[AtomHistogram],
    n_per_label: usize,
    seed: u64,
) -> Result<ConditionalReport> {
    if !model.config.conditional {
        return Err(Error::Contract("conditional accuracy needs a conditional model"));
    }
    let d = model.config.latent_dim;
    let (mut total, mut valid, mut matching) = (0, 0, 0);
    for (i, label) in labels.iter().enumerate() {
        let z = prior_latents(n_per_label, d, seed.wrapping_add(i as u64));
        let ls = alloc::vec![*label; n_per_label];
        for dist in model.decode(&z, Some(&ls))? {
            let g = realize(&dist, RealizeMode::Argmax).graph;
            total += 1;
            if g.is_valid() {
                valid += 1;
                matching += usize::from(g.atom_histogram() == *label);
            }
        }
    }
    Ok(ConditionalReport {
        samples: total,
        valid_count: valid,
        matching_count: matching,
        validity: ratio(valid, total),
        accuracy: ratio(matching, total),
    })
}
