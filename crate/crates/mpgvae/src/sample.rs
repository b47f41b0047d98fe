//! Prior sampling and the sample file formats.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use mpgvae_core::decoder::{realize, RealizeMode};
use mpgvae_core::smiles::write_smiles_unchecked;
use mpgvae_core::vae::prior_latents;
use mpgvae_core::{canonical_form, AtomHistogram, Model, MolGraph, Scalar};
use rayon::prelude::*;
use rayon::ThreadPool;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::train::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Argmax,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub graph: MolGraph,
    /// Edges dropped because an endpoint was decoded as empty.
    pub repaired_edges: usize,
}

/// Latents decoded per tape.
const BLOCK: usize = 256;

/// Draws `n` prior latents from `seed` and decodes them. The result does
/// not depend on the pool size.
pub fn draw<F: Scalar>(
    model: &Model<F>,
    n: usize,
    seed: u64,
    mode: Mode,
    label: Option<AtomHistogram>,
    pool: &ThreadPool,
) -> Result<Vec<Sample>> {
    if model.config.conditional != label.is_some() {
        return Err(CliError::Config(if label.is_some() {
            "--label given for an unconditional checkpoint".into()
        } else {
            "conditional checkpoint needs --label C,N,O,F".into()
        }));
    }
    let z = prior_latents(n, model.config.latent_dim, seed);
    let blocks: Vec<(usize, &[Vec<f64>])> = z.chunks(BLOCK).enumerate().collect();
    let decoded: Vec<Result<Vec<Sample>>> = pool.install(|| {
        blocks
            .par_iter()
            .map(|&(b, zs)| {
                let labels = label.map(|l| vec![l; zs.len()]);
                let dists = model.decode(zs, labels.as_deref())?;
                Ok(dists
                    .iter()
                    .enumerate()
                    .map(|(j, d)| {
                        let i = (b * BLOCK + j) as u64;
                        let m = match mode {
                            Mode::Argmax => RealizeMode::Argmax,
                            Mode::Sample => RealizeMode::Sample {
                                seed: derive_seed(seed, i, 1),
                            },
                        };
                        let r = realize(d, m);
                        Sample {
                            graph: r.graph,
                            repaired_edges: r.repaired_edges,
                        }
                    })
                    .collect())
            })
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for block in decoded {
        out.extend(block?);
    }
    Ok(out)
}

/// First 16 hex digits of the SHA-256 of the canonical form.
pub fn form_hash(g: &MolGraph) -> String {
    let digest = Sha256::digest(canonical_form(g).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// The sidecar sits next to the SMILES file with a `.csv` extension.
pub fn sidecar_path(smiles: &Path) -> PathBuf {
    smiles.with_extension("csv")
}

/// One SMILES line per sample (the empty graph is an empty line) and a CSV
/// sidecar `index,smiles,valid,connected,atoms,repaired_edges,form_hash`.
pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut text = Vec::new();
    let side = sidecar_path(path);
    let mut csv = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io {
        path: side.clone(),
        source: e.into(),
    };
    csv.write_record(["index", "smiles", "valid", "connected", "atoms", "repaired_edges", "form_hash"])
        .map_err(csv_err)?;
    for (i, s) in samples.iter().enumerate() {
        let smiles = write_smiles_unchecked(&s.graph);
        writeln!(text, "{smiles}").unwrap();
        let connected = s.graph.is_connected().unwrap_or(false);
        csv.write_record([
            i.to_string(),
            smiles,
            u8::from(s.graph.is_valid()).to_string(),
            u8::from(connected).to_string(),
            s.graph.atom_count().to_string(),
            s.repaired_edges.to_string(),
            form_hash(&s.graph),
        ])
        .map_err(csv_err)?;
    }
    let csv = csv.into_inner().map_err(|e| CliError::Io {
        path: side.clone(),
        source: e.into_error(),
    })?;
    std::fs::write(path, text).map_err(CliError::io(path))?;
    std::fs::write(&side, csv).map_err(CliError::io(&side))?;
    Ok(side)
}

pub fn parse_label(s: &str) -> Result<AtomHistogram> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("--label expects four counts C,N,O,F, got {s:?}"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let mut h = [0u32; 4];
    for (x, p) in h.iter_mut().zip(parts) {
        *x = p.parse().map_err(|_| bad())?;
    }
    if h.iter().sum::<u32>() > mpgvae_core::N_SLOTS as u32 {
        return Err(CliError::Config(format!("--label {s:?} has more than 9 atoms")));
    }
    Ok(h)
}
