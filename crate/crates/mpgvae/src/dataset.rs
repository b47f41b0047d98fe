//! Line-delimited SMILES ingestion.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use mpgvae_core::smiles::{parse_smiles, SmilesError};
use mpgvae_core::MolGraph;
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Counts of what happened to each line of an input file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IngestReport {
    pub lines: usize,
    pub blank: usize,
    pub parsed: usize,
    /// Rejections by reason.
    pub rejected: BTreeMap<&'static str, usize>,
    /// First few rejections as `(1-based line, message)`.
    pub examples: Vec<(usize, String)>,
    /// Lines left unread because of the limit.
    pub truncated: bool,
}

impl IngestReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lines read     {}", self.lines)?;
        writeln!(f, "blank          {}", self.blank)?;
        writeln!(f, "parsed         {}", self.parsed)?;
        writeln!(f, "rejected       {}", self.rejected_total())?;
        for (reason, n) in &self.rejected {
            writeln!(f, "  {reason:<12} {n}")?;
        }
        for (line, msg) in &self.examples {
            writeln!(f, "  line {line}: {msg}")?;
        }
        if self.truncated {
            writeln!(f, "(stopped at the molecule limit)")?;
        }
        Ok(())
    }
}

const EXAMPLES_KEPT: usize = 5;

pub fn rejection_reason(e: &SmilesError) -> &'static str {
    match e {
        SmilesError::Unsupported { .. } => "unsupported",
        SmilesError::Capacity { .. } => "capacity",
        SmilesError::UnmatchedRing { .. } | SmilesError::UnmatchedParen { .. } | SmilesError::Structure { .. } => {
            "structure"
        }
        SmilesError::Kekulization => "kekulization",
        SmilesError::InvalidGraph => "valence",
    }
}

/// First whitespace-separated field; the rest of the line is annotation.
pub fn smiles_field(line: &str) -> &str {
    line.split_whitespace().next().unwrap_or("")
}

/// Parses one molecule per non-blank line, in file order, keeping at most
/// `limit` molecules. Molecules over the valence limit are rejected.
pub fn parse_dataset(text: &str, limit: Option<usize>) -> (Vec<MolGraph>, IngestReport) {
    let lines: Vec<&str> = text.lines().collect();
    let parsed: Vec<Option<Result<MolGraph, (&'static str, String)>>> = lines
        .par_iter()
        .map(|l| {
            let s = smiles_field(l);
            (!s.is_empty()).then(|| match parse_smiles(s) {
                Ok(g) if g.is_valid() => Ok(g),
                Ok(_) => Err(("valence", "an atom exceeds its maximum valence".to_string())),
                Err(e) => Err((rejection_reason(&e), e.to_string())),
            })
        })
        .collect();
    let mut report = IngestReport::default();
    let mut out = Vec::new();
    for (i, r) in parsed.into_iter().enumerate() {
        if limit.is_some_and(|n| out.len() >= n) {
            report.truncated = true;
            break;
        }
        report.lines += 1;
        match r {
            None => report.blank += 1,
            Some(Ok(g)) => {
                report.parsed += 1;
                out.push(g);
            }
            Some(Err((reason, msg))) => {
                *report.rejected.entry(reason).or_default() += 1;
                if report.examples.len() < EXAMPLES_KEPT {
                    report.examples.push((i + 1, msg));
                }
            }
        }
    }
    (out, report)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn load_dataset(path: &Path, limit: Option<usize>) -> Result<(Vec<MolGraph>, IngestReport)> {
    let text = read_text(path)?;
    Ok(parse_dataset(&text, limit))
}

/// Loads a training set and fails if nothing usable remains.
pub fn load_training_set(path: &Path, limit: Option<usize>) -> Result<(Vec<MolGraph>, IngestReport)> {
    let (graphs, report) = load_dataset(path, limit)?;
    if graphs.is_empty() {
        return Err(CliError::Data(format!("{}: no molecules parsed\n{report}", path.display())));
    }
    Ok((graphs, report))
}
