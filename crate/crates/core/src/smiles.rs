//! The SMILES dialect used for ingestion and sample output.
//!
//! Supported: organic-subset atoms `C N O F`, aromatic `c n o`, bracket atoms
//! holding one of those elements with an optional hydrogen count (`[nH]`),
//! bonds `- = # :`, branches, ring closures `0-9` and `%nn`, and `.` between
//! components. Charges, isotopes, chirality and other elements are rejected
//! with the byte offset of the offending token.
//!
//! Aromatic input is kekulized: each aromatic atom with free valence is
//! paired with exactly one aromatic neighbor through a double bond (a
//! perfect matching on those atoms); pyrrole-type `[nH]`, substituted `n`
//! and furan-type `o` take none.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::molgraph::{AtomCategory, BondCategory, MolGraph, N_SLOTS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("unsupported token {token:?} at byte {offset}")]
    Unsupported { offset: usize, token: char },
    #[error("more than {max} heavy atoms (byte {offset})", max = N_SLOTS)]
    Capacity { offset: usize },
    #[error("ring closure {label} opened at byte {offset} is never closed")]
    UnmatchedRing { label: u8, offset: usize },
    #[error("unbalanced parenthesis at byte {offset}")]
    UnmatchedParen { offset: usize },
    #[error("{what} at byte {offset}")]
    Structure { offset: usize, what: &'static str },
    #[error("aromatic system has no Kekulé structure")]
    Kekulization,
    #[error("cannot write an invalid molecule")]
    InvalidGraph,
}

/// Bond as written, before kekulization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondSpec {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondSpec {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            b'-' => Some(BondSpec::Single),
            b'=' => Some(BondSpec::Double),
            b'#' => Some(BondSpec::Triple),
            b':' => Some(BondSpec::Aromatic),
            _ => None,
        }
    }

    fn order(self) -> u32 {
        match self {
            BondSpec::Single | BondSpec::Aromatic => 1,
            BondSpec::Double => 2,
            BondSpec::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedAtom {
    pub element: AtomCategory,
    pub aromatic: bool,
    /// Hydrogens written inside brackets.
    pub explicit_h: u8,
}

/// A parsed molecule with aromaticity still explicit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AromaticGraph {
    pub atoms: Vec<ParsedAtom>,
    pub bonds: Vec<(usize, usize, BondSpec)>,
}

impl AromaticGraph {
    pub fn has_aromatic(&self) -> bool {
        self.atoms.iter().any(|a| a.aromatic) || self.bonds.iter().any(|b| b.2 == BondSpec::Aromatic)
    }
}

struct RingOpen {
    atom: usize,
    bond: Option<BondSpec>,
    offset: usize,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    out: AromaticGraph,
    prev: Option<usize>,
    pending: Option<(BondSpec, usize)>,
    branches: Vec<(Option<usize>, usize)>,
    rings: Vec<(u8, RingOpen)>,
}

impl<'a> Parser<'a> {
    fn unsupported(&self, at: usize) -> SmilesError {
        let token = core::str::from_utf8(&self.src[at..])
            .ok()
            .and_then(|s| s.chars().next())
            .unwrap_or(char::REPLACEMENT_CHARACTER);
        SmilesError::Unsupported { offset: at, token }
    }

    fn add_bond(&mut self, u: usize, v: usize, spec: Option<BondSpec>, at: usize) -> Result<(), SmilesError> {
        if u == v {
            return Err(SmilesError::Structure { offset: at, what: "atom bonded to itself" });
        }
        if self.out.bonds.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u)) {
            return Err(SmilesError::Structure { offset: at, what: "duplicate bond" });
        }
        let spec = spec.unwrap_or(if self.out.atoms[u].aromatic && self.out.atoms[v].aromatic {
            BondSpec::Aromatic
        } else {
            BondSpec::Single
        });
        self.out.bonds.push((u, v, spec));
        Ok(())
    }

    fn add_atom(&mut self, atom: ParsedAtom, at: usize) -> Result<(), SmilesError> {
        if self.out.atoms.len() == N_SLOTS {
            return Err(SmilesError::Capacity { offset: at });
        }
        self.out.atoms.push(atom);
        let idx = self.out.atoms.len() - 1;
        if let Some(p) = self.prev {
            let spec = self.pending.take().map(|(s, _)| s);
            self.add_bond(p, idx, spec, at)?;
        } else if let Some((_, off)) = self.pending {
            return Err(SmilesError::Structure { offset: off, what: "bond without a preceding atom" });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn element(b: u8) -> Option<(AtomCategory, bool)> {
        Some(match b {
            b'C' => (AtomCategory::C, false),
            b'N' => (AtomCategory::N, false),
            b'O' => (AtomCategory::O, false),
            b'F' => (AtomCategory::F, false),
            b'c' => (AtomCategory::C, true),
            b'n' => (AtomCategory::N, true),
            b'o' => (AtomCategory::O, true),
            _ => return None,
        })
    }

    fn bracket(&mut self) -> Result<ParsedAtom, SmilesError> {
        // at '['
        let start = self.pos;
        self.pos += 1;
        let b = *self.src.get(self.pos).ok_or(SmilesError::Structure {
            offset: start,
            what: "unterminated bracket atom",
        })?;
        let (element, aromatic) = Self::element(b).ok_or_else(|| self.unsupported(self.pos))?;
        self.pos += 1;
        // `[C]`-style elements followed by a lowercase letter are two-letter symbols
        if let Some(&nb) = self.src.get(self.pos) {
            if nb.is_ascii_lowercase() {
                return Err(self.unsupported(self.pos - 1));
            }
        }
        let mut explicit_h = 0;
        if self.src.get(self.pos) == Some(&b'H') {
            self.pos += 1;
            explicit_h = 1;
            if let Some(&d) = self.src.get(self.pos) {
                if d.is_ascii_digit() {
                    explicit_h = d - b'0';
                    self.pos += 1;
                }
            }
        }
        match self.src.get(self.pos) {
            Some(b']') => {
                self.pos += 1;
                Ok(ParsedAtom { element, aromatic, explicit_h })
            }
            Some(_) => Err(self.unsupported(self.pos)),
            None => Err(SmilesError::Structure { offset: start, what: "unterminated bracket atom" }),
        }
    }

    fn ring_label(&mut self) -> Result<u8, SmilesError> {
        let at = self.pos;
        let b = self.src[at];
        if b == b'%' {
            let digits = self.src.get(at + 1..at + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
            match digits {
                Some(d) => {
                    self.pos += 3;
                    Ok((d[0] - b'0') * 10 + (d[1] - b'0'))
                }
                None => Err(self.unsupported(at)),
            }
        } else {
            self.pos += 1;
            Ok(b - b'0')
        }
    }

    fn ring(&mut self) -> Result<(), SmilesError> {
        let at = self.pos;
        let label = self.ring_label()?;
        let Some(atom) = self.prev else {
            return Err(SmilesError::Structure { offset: at, what: "ring closure without an atom" });
        };
        let bond = self.pending.take().map(|(s, _)| s);
        if let Some(i) = self.rings.iter().position(|(l, _)| *l == label) {
            let (_, open) = self.rings.remove(i);
            let spec = match (open.bond, bond) {
                (Some(a), Some(b)) if a != b => {
                    return Err(SmilesError::Structure { offset: at, what: "ring closure bond orders disagree" })
                }
                (a, b) => a.or(b),
            };
            self.add_bond(open.atom, atom, spec, at)
        } else {
            self.rings.push((label, RingOpen { atom, bond, offset: at }));
            Ok(())
        }
    }

    fn run(mut self) -> Result<AromaticGraph, SmilesError> {
        while self.pos < self.src.len() {
            let at = self.pos;
            let b = self.src[at];
            if let Some((element, aromatic)) = Self::element(b) {
                // two-letter symbols (Cl, Co, ...) are outside the dialect
                if b.is_ascii_uppercase() && self.src.get(at + 1).is_some_and(|c| matches!(c, b'l' | b'a' | b'u' | b'r' | b'd' | b'e' | b's')) {
                    return Err(self.unsupported(at + 1));
                }
                self.pos += 1;
                self.add_atom(ParsedAtom { element, aromatic, explicit_h: 0 }, at)?;
                continue;
            }
            match b {
                b'[' => {
                    let atom = self.bracket()?;
                    self.add_atom(atom, at)?;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending.is_some() {
                        return Err(SmilesError::Structure { offset: at, what: "two consecutive bond symbols" });
                    }
                    self.pending = Some((BondSpec::from_byte(b).unwrap(), at));
                    self.pos += 1;
                }
                b'(' => {
                    if self.prev.is_none() {
                        return Err(SmilesError::Structure { offset: at, what: "branch without an atom" });
                    }
                    self.branches.push((self.prev, at));
                    self.pos += 1;
                }
                b')' => {
                    let Some((p, _)) = self.branches.pop() else {
                        return Err(SmilesError::UnmatchedParen { offset: at });
                    };
                    if let Some((_, off)) = self.pending {
                        return Err(SmilesError::Structure { offset: off, what: "dangling bond" });
                    }
                    self.prev = p;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring()?,
                b'.' => {
                    if let Some((_, off)) = self.pending {
                        return Err(SmilesError::Structure { offset: off, what: "dangling bond" });
                    }
                    if !self.branches.is_empty() {
                        return Err(SmilesError::Structure { offset: at, what: "component break inside a branch" });
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                _ => return Err(self.unsupported(at)),
            }
        }
        if let Some((_, off)) = self.branches.first() {
            return Err(SmilesError::UnmatchedParen { offset: *off });
        }
        if let Some((label, open)) = self.rings.first() {
            return Err(SmilesError::UnmatchedRing { label: *label, offset: open.offset });
        }
        if let Some((_, off)) = self.pending {
            return Err(SmilesError::Structure { offset: off, what: "dangling bond" });
        }
        Ok(self.out)
    }
}

/// Parses without kekulizing.
pub fn parse_aromatic(s: &str) -> Result<AromaticGraph, SmilesError> {
    Parser {
        src: s.as_bytes(),
        pos: 0,
        out: AromaticGraph::default(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: Vec::new(),
    }
    .run()
}

/// Parses and kekulizes. Atoms are placed in slots in token order.
pub fn parse_smiles(s: &str) -> Result<MolGraph, SmilesError> {
    kekulize(&parse_aromatic(s.trim())?)
}

/// Aromatic atoms that must receive exactly one double bond.
pub fn needs_double(g: &AromaticGraph) -> Vec<bool> {
    g.atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if !a.aromatic {
                return false;
            }
            let used: u32 = g
                .bonds
                .iter()
                .filter(|b| b.0 == i || b.1 == i)
                .map(|b| b.2.order())
                .sum::<u32>()
                + a.explicit_h as u32;
            a.element.max_valence() as u32 > used
        })
        .collect()
}

fn find_matching(
    needs: &[bool],
    candidates: &[(usize, usize)],
    matched: &mut [Option<usize>],
) -> bool {
    let Some(u) = (0..needs.len()).find(|&i| needs[i] && matched[i].is_none()) else {
        return true;
    };
    let mut partners: Vec<usize> = candidates
        .iter()
        .filter_map(|&(a, b)| if a == u { Some(b) } else if b == u { Some(a) } else { None })
        .filter(|&v| needs[v] && matched[v].is_none())
        .collect();
    partners.sort_unstable();
    for v in partners {
        matched[u] = Some(v);
        matched[v] = Some(u);
        if find_matching(needs, candidates, matched) {
            return true;
        }
        matched[u] = None;
        matched[v] = None;
    }
    false
}

/// Assigns single/double orders to aromatic bonds. Input without aromatic
/// atoms or bonds is converted unchanged.
pub fn kekulize(g: &AromaticGraph) -> Result<MolGraph, SmilesError> {
    let needs = needs_double(g);
    let candidates: Vec<(usize, usize)> = g
        .bonds
        .iter()
        .filter(|b| b.2 == BondSpec::Aromatic && needs[b.0] && needs[b.1])
        .map(|b| (b.0, b.1))
        .collect();
    let mut matched = alloc::vec![None; g.atoms.len()];
    if !find_matching(&needs, &candidates, &mut matched) {
        return Err(SmilesError::Kekulization);
    }
    let mut out = MolGraph::empty();
    for a in &g.atoms {
        out.push_atom(a.element).map_err(|_| SmilesError::Capacity { offset: 0 })?;
    }
    for &(u, v, spec) in &g.bonds {
        let bond = match spec {
            BondSpec::Single => BondCategory::Single,
            BondSpec::Double => BondCategory::Double,
            BondSpec::Triple => BondCategory::Triple,
            BondSpec::Aromatic if matched[u] == Some(v) => BondCategory::Double,
            BondSpec::Aromatic => BondCategory::Single,
        };
        out.set_bond(u, v, bond).expect("parsed bonds join distinct atoms");
    }
    Ok(out)
}

fn bond_symbol(b: BondCategory) -> &'static str {
    match b {
        BondCategory::Double => "=",
        BondCategory::Triple => "#",
        _ => "",
    }
}

struct Writer<'g> {
    g: &'g MolGraph,
    seen: [bool; N_SLOTS],
    children: [Vec<usize>; N_SLOTS],
    /// ring bonds opened at an atom (partner is a descendant)
    opens: [Vec<usize>; N_SLOTS],
    /// ring bonds closed at an atom (partner is an ancestor)
    closes: [Vec<usize>; N_SLOTS],
}

impl Writer<'_> {
    fn plan(&mut self, u: usize, parent: Option<usize>) {
        self.seen[u] = true;
        for (v, _) in self.g.neighbors(u) {
            if Some(v) == parent {
                continue;
            }
            if self.seen[v] {
                // back edge to an ancestor, seen once from each side
                if !self.closes[v].contains(&u) {
                    self.opens[v].push(u);
                    self.closes[u].push(v);
                }
            } else {
                self.children[u].push(v);
                self.plan(v, Some(u));
            }
        }
    }

    fn emit(&self, u: usize, out: &mut String, labels: &mut Vec<Option<(usize, usize)>>) {
        out.push_str(self.g.atom(u).symbol());
        for &v in &self.closes[u] {
            let slot = labels.iter().position(|l| *l == Some((v, u))).unwrap();
            push_label(out, slot);
            labels[slot] = None;
        }
        for &v in &self.opens[u] {
            let slot = match labels.iter().position(Option::is_none) {
                Some(s) => s,
                None => {
                    labels.push(None);
                    labels.len() - 1
                }
            };
            labels[slot] = Some((u, v));
            out.push_str(bond_symbol(self.g.bond(u, v)));
            push_label(out, slot);
        }
        let n = self.children[u].len();
        for (i, &c) in self.children[u].iter().enumerate() {
            let branch = i + 1 < n;
            if branch {
                out.push('(');
            }
            out.push_str(bond_symbol(self.g.bond(u, c)));
            self.emit(c, out, labels);
            if branch {
                out.push(')');
            }
        }
    }
}

fn push_label(out: &mut String, slot: usize) {
    let label = slot + 1;
    if label < 10 {
        let _ = write!(out, "{label}");
    } else {
        let _ = write!(out, "%{label:02}");
    }
}

/// Writes any graph, valid or not, as Kekulé SMILES with `.` between
/// components. The empty graph is the empty string.
pub fn write_smiles_unchecked(g: &MolGraph) -> String {
    let mut w = Writer {
        g,
        seen: [false; N_SLOTS],
        children: Default::default(),
        opens: Default::default(),
        closes: Default::default(),
    };
    let mut roots = Vec::new();
    for u in 0..N_SLOTS {
        if g.exists(u) && !w.seen[u] {
            roots.push(u);
            w.plan(u, None);
        }
    }
    let mut out = String::new();
    let mut labels = Vec::new();
    for (i, &r) in roots.iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        w.emit(r, &mut out, &mut labels);
    }
    out
}

/// Writes a valid molecule; re-parsing yields an isomorphic graph.
pub fn write_smiles(g: &MolGraph) -> Result<String, SmilesError> {
    if !g.is_valid() {
        return Err(SmilesError::InvalidGraph);
    }
    Ok(write_smiles_unchecked(g))
}
