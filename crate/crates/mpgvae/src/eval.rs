//! Sample evaluation against a training set.

use std::collections::BTreeSet;
use std::path::Path;

use mpgvae_core::metrics::{connected_fraction, discrete_stats, vun, ConditionalReport, DiscreteStats, VunReport};
use mpgvae_core::smiles::parse_smiles;
use mpgvae_core::{canonical_form, CanonicalForm, MolGraph};

use crate::error::{CliError, Result};
use crate::svg;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub vun: VunReport,
    pub parse_failures: usize,
    pub connected: f64,
    pub connected_count: usize,
    /// Over valid samples; `None` when no sample is valid.
    pub sample_stats: Option<DiscreteStats>,
    pub training_stats: Option<DiscreteStats>,
    pub conditional: Option<ConditionalReport>,
}

/// Parses a sample file: every line is one sample, an empty line is the
/// empty graph. Lines that do not parse count as invalid samples.
pub fn parse_samples(text: &str) -> Result<(Vec<MolGraph>, usize)> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        return Err(CliError::EmptyInput("sample file has no lines".into()));
    }
    let mut failures = 0;
    let graphs: Vec<MolGraph> = lines
        .iter()
        .map(|l| {
            let s = l.trim();
            if s.is_empty() {
                return MolGraph::empty();
            }
            parse_smiles(s).unwrap_or_else(|_| {
                failures += 1;
                MolGraph::empty()
            })
        })
        .collect();
    if failures == lines.len() {
        return Err(CliError::EmptyInput(format!("none of the {failures} sample lines parse")));
    }
    Ok((graphs, failures))
}

pub fn training_forms(graphs: &[MolGraph]) -> BTreeSet<CanonicalForm> {
    graphs.iter().map(canonical_form).collect()
}

pub fn evaluate(samples: &[MolGraph], parse_failures: usize, training: &[MolGraph]) -> Result<Evaluation> {
    let report = vun(samples, &training_forms(training))?;
    let valid: Vec<&MolGraph> = samples.iter().filter(|g| g.is_valid()).collect();
    let connected_count = valid.iter().filter(|g| g.is_connected().unwrap_or(false)).count();
    Ok(Evaluation {
        vun: report,
        parse_failures,
        connected: connected_fraction(samples),
        connected_count,
        sample_stats: discrete_stats(valid),
        training_stats: discrete_stats(training),
        conditional: None,
    })
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

/// `metric,value,count_numerator,count_denominator` rows.
pub fn report_rows(e: &Evaluation) -> Vec<[String; 4]> {
    let v = &e.vun;
    let row = |name: &str, value: f64, num: usize, den: usize| [name.to_string(), fmt(value), num.to_string(), den.to_string()];
    let mut rows = vec![
        row("valid", v.valid, v.valid_count, v.samples),
        row("unique", v.unique, v.unique_count, v.valid_count),
        row("novel", v.novel, v.novel_count, v.valid_count),
        row("novel_unique", v.novel_unique, v.num, v.unique_count),
        [
            "num".to_string(),
            v.num.to_string(),
            v.num.to_string(),
            v.samples.to_string(),
        ],
        row("connected", e.connected, e.connected_count, v.valid_count),
        row(
            "parse_failures",
            e.parse_failures as f64 / v.samples as f64,
            e.parse_failures,
            v.samples,
        ),
    ];
    if let Some(c) = &e.conditional {
        rows.push(row("conditional_validity", c.validity, c.valid_count, c.samples));
        rows.push(row("conditional_accuracy", c.accuracy, c.matching_count, c.samples));
    }
    rows
}

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: &[[String; N]]) -> Result<()> {
    let err = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(CliError::io(path))
}

fn stats_rows(s: &Option<DiscreteStats>) -> Vec<[String; 2]> {
    s.map(|s| s.rows().into_iter().map(|(c, m)| [c.to_string(), fmt(m)]).collect())
        .unwrap_or_default()
}

pub fn stats_svg(e: &Evaluation) -> String {
    let mut bars = Vec::new();
    let atoms = ["C", "N", "O", "F"];
    let bonds = ["single", "double", "triple"];
    let mut push = |label: &'static str, s: &Option<DiscreteStats>| {
        if let Some(s) = s {
            let mut v: Vec<f64> = s.atoms.to_vec();
            v.extend(s.bonds);
            v.push(s.rings);
            bars.push((label, v));
        }
    };
    push("training", &e.training_stats);
    push("samples", &e.sample_stats);
    let split = |range: std::ops::Range<usize>| -> Vec<(&str, Vec<f64>)> {
        bars.iter().map(|(l, v)| (*l, v[range.clone()].to_vec())).collect()
    };
    let atoms_svg = svg::stacked_bars("Atoms per molecule", "mean count", &atoms, &split(0..4));
    let bonds_svg = svg::stacked_bars("Bonds and rings per molecule", "mean count", &[bonds[0], bonds[1], bonds[2], "rings"], &split(4..8));
    // two charts side by side in one document
    let inner = |s: &str, x: u32| {
        let body = s.trim_end().trim_end_matches("</svg>");
        let open_end = body.find('>').unwrap() + 1;
        format!("<g transform=\"translate({x} 0)\">{}</g>", &body[open_end..])
    };
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1280\" height=\"400\" viewBox=\"0 0 1280 400\" font-family=\"sans-serif\" font-size=\"12\">\n{}\n{}\n</svg>\n",
        inner(&atoms_svg, 0),
        inner(&bonds_svg, 640)
    )
}

/// Writes `report.csv`, `stats.csv`, `training_stats.csv` and `stats.svg`.
pub fn write_outputs(dir: &Path, e: &Evaluation) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    write_csv(&dir.join("report.csv"), ["metric", "value", "count_numerator", "count_denominator"], &report_rows(e))?;
    write_csv(&dir.join("stats.csv"), ["category", "mean"], &stats_rows(&e.sample_stats))?;
    write_csv(&dir.join("training_stats.csv"), ["category", "mean"], &stats_rows(&e.training_stats))?;
    let path = dir.join("stats.svg");
    std::fs::write(&path, stats_svg(e)).map_err(CliError::io(&path))
}
